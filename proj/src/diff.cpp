#include "af/diff.hpp"

#include <algorithm>
#include <cmath>

namespace af {

ParamBlock::ParamBlock(std::string block_name, std::vector<int> dims)
    : name(std::move(block_name)), shape(std::move(dims)) {
    int n = 1;
    for (int d : shape) n *= d;
    value.assign(n, 0.0);
    grad.assign(n, 0.0);
    adam_m.assign(n, 0.0);
    adam_v.assign(n, 0.0);
}

void ParamBlock::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

void init_uniform(ParamBlock& block, int fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(1, fan_in)));
    for (double& v : block.value) v = rng.uniform(-bound, bound);
}

Tape::Ref Tape::push(std::vector<double> val, std::function<void(Tape&)> back) {
    nodes_.push_back(Node{std::move(val), {}, std::move(back)});
    Node& n = nodes_.back();
    n.grad.assign(n.val.size(), 0.0);
    return static_cast<Ref>(nodes_.size() - 1);
}

Tape::Ref Tape::constant(std::vector<double> values) { return push(std::move(values), {}); }

Tape::Ref Tape::param(ParamBlock& block) {
    ParamBlock* p = &block;
    Ref r = push(block.value, {});
    nodes_[r].back = [r, p](Tape& t) {
        const auto& g = t.nodes_[r].grad;
        for (std::size_t i = 0; i < g.size(); ++i) p->grad[i] += g[i];
    };
    return r;
}

Tape::Ref Tape::affine(Ref w, Ref b, Ref x, int rows, int cols) {
    const auto& wv = nodes_[w].val;
    const auto& bv = nodes_[b].val;
    const auto& xv = nodes_[x].val;
    if (static_cast<int>(wv.size()) != rows * cols || static_cast<int>(xv.size()) != cols ||
        static_cast<int>(bv.size()) != rows)
        throw DimensionError("affine shape mismatch");
    std::vector<double> out(rows);
    for (int i = 0; i < rows; ++i) {
        double acc = bv[i];
        const double* wr = wv.data() + static_cast<std::size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) acc += wr[j] * xv[j];
        out[i] = acc;
    }
    Ref r = push(std::move(out), {});
    nodes_[r].back = [r, w, b, x, rows, cols](Tape& t) {
        const auto& g = t.nodes_[r].grad;
        const auto& wv2 = t.nodes_[w].val;
        const auto& xv2 = t.nodes_[x].val;
        auto& wg = t.nodes_[w].grad;
        auto& bg = t.nodes_[b].grad;
        auto& xg = t.nodes_[x].grad;
        for (int i = 0; i < rows; ++i) {
            const double gi = g[i];
            bg[i] += gi;
            double* wgr = wg.data() + static_cast<std::size_t>(i) * cols;
            const double* wvr = wv2.data() + static_cast<std::size_t>(i) * cols;
            for (int j = 0; j < cols; ++j) {
                wgr[j] += gi * xv2[j];
                xg[j] += gi * wvr[j];
            }
        }
    };
    return r;
}

Tape::Ref Tape::matvec(Ref w, Ref x, int rows, int cols) {
    Ref zero_bias = constant(std::vector<double>(rows, 0.0));
    return affine(w, zero_bias, x, rows, cols);
}

Tape::Ref Tape::add(Ref a, Ref b) {
    const auto& av = nodes_[a].val;
    const auto& bv = nodes_[b].val;
    if (av.size() != bv.size()) throw DimensionError("add length mismatch");
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
    Ref r = push(std::move(out), {});
    nodes_[r].back = [r, a, b](Tape& t) {
        const auto& g = t.nodes_[r].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            t.nodes_[a].grad[i] += g[i];
            t.nodes_[b].grad[i] += g[i];
        }
    };
    return r;
}

Tape::Ref Tape::sub(Ref a, Ref b) {
    const auto& av = nodes_[a].val;
    const auto& bv = nodes_[b].val;
    if (av.size() != bv.size()) throw DimensionError("sub length mismatch");
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
    Ref r = push(std::move(out), {});
    nodes_[r].back = [r, a, b](Tape& t) {
        const auto& g = t.nodes_[r].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            t.nodes_[a].grad[i] += g[i];
            t.nodes_[b].grad[i] -= g[i];
        }
    };
    return r;
}

Tape::Ref Tape::mul(Ref a, Ref b) {
    const auto& av = nodes_[a].val;
    const auto& bv = nodes_[b].val;
    if (av.size() != bv.size()) throw DimensionError("mul length mismatch");
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    Ref r = push(std::move(out), {});
    nodes_[r].back = [r, a, b](Tape& t) {
        const auto& g = t.nodes_[r].grad;
        const auto& av2 = t.nodes_[a].val;
        const auto& bv2 = t.nodes_[b].val;
        for (std::size_t i = 0; i < g.size(); ++i) {
            t.nodes_[a].grad[i] += g[i] * bv2[i];
            t.nodes_[b].grad[i] += g[i] * av2[i];
        }
    };
    return r;
}

Tape::Ref Tape::mul_scalar(Ref a, Ref s) {
    if (nodes_[s].val.size() != 1) throw DimensionError("mul_scalar needs scalar second arg");
    const double sv = nodes_[s].val[0];
    std::vector<double> out(nodes_[a].val);
    for (double& v : out) v *= sv;
    Ref r = push(std::move(out), {});
    nodes_[r].back = [r, a, s](Tape& t) {
        const auto& g = t.nodes_[r].grad;
        const auto& av = t.nodes_[a].val;
        const double sv2 = t.nodes_[s].val[0];
        double sg = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            t.nodes_[a].grad[i] += g[i] * sv2;
            sg += g[i] * av[i];
        }
        t.nodes_[s].grad[0] += sg;
    };
    return r;
}

Tape::Ref Tape::scale(Ref a, double factor) {
    std::vector<double> out(nodes_[a].val);
    for (double& v : out) v *= factor;
    Ref r = push(std::move(out), {});
    nodes_[r].back = [r, a, factor](Tape& t) {
        const auto& g = t.nodes_[r].grad;
        for (std::size_t i = 0; i < g.size(); ++i) t.nodes_[a].grad[i] += g[i] * factor;
    };
    return r;
}

Tape::Ref Tape::add_const(Ref a, const std::vector<double>& c) {
    return add(a, constant(c));
}

Tape::Ref Tape::relu(Ref a) {
    std::vector<double> out(nodes_[a].val);
    for (double& v : out) v = std::max(0.0, v);
    Ref r = push(std::move(out), {});
    nodes_[r].back = [r, a](Tape& t) {
        const auto& g = t.nodes_[r].grad;
        const auto& av = t.nodes_[a].val;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (av[i] > 0.0) t.nodes_[a].grad[i] += g[i];
    };
    return r;
}

Tape::Ref Tape::tanh_op(Ref a) {
    std::vector<double> out(nodes_[a].val);
    for (double& v : out) v = std::tanh(v);
    Ref r = push(std::move(out), {});
    nodes_[r].back = [r, a](Tape& t) {
        const auto& g = t.nodes_[r].grad;
        const auto& yv = t.nodes_[r].val;
        for (std::size_t i = 0; i < g.size(); ++i)
            t.nodes_[a].grad[i] += g[i] * (1.0 - yv[i] * yv[i]);
    };
    return r;
}

Tape::Ref Tape::abs_op(Ref a) {
    std::vector<double> out(nodes_[a].val);
    for (double& v : out) v = std::fabs(v);
    Ref r = push(std::move(out), {});
    nodes_[r].back = [r, a](Tape& t) {
        const auto& g = t.nodes_[r].grad;
        const auto& av = t.nodes_[a].val;
        for (std::size_t i = 0; i < g.size(); ++i)
            t.nodes_[a].grad[i] += g[i] * (av[i] >= 0.0 ? 1.0 : -1.0);
    };
    return r;
}

Tape::Ref Tape::softplus(Ref a) {
    std::vector<double> out(nodes_[a].val);
    for (double& v : out) v = v > 30.0 ? v : std::log1p(std::exp(v));
    Ref r = push(std::move(out), {});
    nodes_[r].back = [r, a](Tape& t) {
        const auto& g = t.nodes_[r].grad;
        const auto& av = t.nodes_[a].val;
        for (std::size_t i = 0; i < g.size(); ++i)
            t.nodes_[a].grad[i] += g[i] / (1.0 + std::exp(-av[i]));
    };
    return r;
}

Tape::Ref Tape::square(Ref a) {
    std::vector<double> out(nodes_[a].val);
    for (double& v : out) v *= v;
    Ref r = push(std::move(out), {});
    nodes_[r].back = [r, a](Tape& t) {
        const auto& g = t.nodes_[r].grad;
        const auto& av = t.nodes_[a].val;
        for (std::size_t i = 0; i < g.size(); ++i) t.nodes_[a].grad[i] += 2.0 * g[i] * av[i];
    };
    return r;
}

Tape::Ref Tape::log_op(Ref a) {
    std::vector<double> out(nodes_[a].val);
    for (double& v : out) {
        if (!(v > 0.0)) throw NumericError("log of non-positive value");
        v = std::log(v);
    }
    Ref r = push(std::move(out), {});
    nodes_[r].back = [r, a](Tape& t) {
        const auto& g = t.nodes_[r].grad;
        const auto& av = t.nodes_[a].val;
        for (std::size_t i = 0; i < g.size(); ++i) t.nodes_[a].grad[i] += g[i] / av[i];
    };
    return r;
}

Tape::Ref Tape::dot(Ref a, Ref b) {
    const auto& av = nodes_[a].val;
    const auto& bv = nodes_[b].val;
    if (av.size() != bv.size()) throw DimensionError("dot length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
    Ref r = push({acc}, {});
    nodes_[r].back = [r, a, b](Tape& t) {
        const double g = t.nodes_[r].grad[0];
        const auto& av2 = t.nodes_[a].val;
        const auto& bv2 = t.nodes_[b].val;
        for (std::size_t i = 0; i < av2.size(); ++i) {
            t.nodes_[a].grad[i] += g * bv2[i];
            t.nodes_[b].grad[i] += g * av2[i];
        }
    };
    return r;
}

Tape::Ref Tape::sum(Ref a) {
    double acc = 0.0;
    for (double v : nodes_[a].val) acc += v;
    Ref r = push({acc}, {});
    nodes_[r].back = [r, a](Tape& t) {
        const double g = t.nodes_[r].grad[0];
        for (double& gv : t.nodes_[a].grad) gv += g;
    };
    return r;
}

Tape::Ref Tape::mean_op(Ref a) {
    const double n = static_cast<double>(nodes_[a].val.size());
    return scale(sum(a), 1.0 / n);
}

Tape::Ref Tape::pick(Ref a, int i) {
    if (i < 0 || i >= static_cast<int>(nodes_[a].val.size()))
        throw DimensionError("pick index out of range");
    Ref r = push({nodes_[a].val[i]}, {});
    nodes_[r].back = [r, a, i](Tape& t) { t.nodes_[a].grad[i] += t.nodes_[r].grad[0]; };
    return r;
}

Tape::Ref Tape::concat(const std::vector<Ref>& parts) {
    std::vector<double> out;
    for (Ref p : parts) out.insert(out.end(), nodes_[p].val.begin(), nodes_[p].val.end());
    Ref r = push(std::move(out), {});
    std::vector<Ref> parts_copy = parts;
    nodes_[r].back = [r, parts_copy](Tape& t) {
        const auto& g = t.nodes_[r].grad;
        std::size_t offset = 0;
        for (Ref p : parts_copy) {
            auto& pg = t.nodes_[p].grad;
            for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g[offset + i];
            offset += pg.size();
        }
    };
    return r;
}

Tape::Ref Tape::gather(Ref a, const std::vector<int>& idx) {
    std::vector<double> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = nodes_[a].val.at(idx[i]);
    Ref r = push(std::move(out), {});
    std::vector<int> idx_copy = idx;
    nodes_[r].back = [r, a, idx_copy](Tape& t) {
        const auto& g = t.nodes_[r].grad;
        for (std::size_t i = 0; i < idx_copy.size(); ++i) t.nodes_[a].grad[idx_copy[i]] += g[i];
    };
    return r;
}

Tape::Ref Tape::softmax(Ref scores) {
    const auto& sv = nodes_[scores].val;
    if (sv.empty()) throw DimensionError("softmax of empty vector");
    double mx = sv[0];
    for (double v : sv) {
        if (std::isnan(v)) throw NumericError("softmax of NaN input");
        mx = std::max(mx, v);
    }
    std::vector<double> out(sv.size());
    double z = 0.0;
    for (std::size_t i = 0; i < sv.size(); ++i) {
        out[i] = std::exp(sv[i] - mx);
        z += out[i];
    }
    for (double& v : out) v /= z;
    Ref r = push(std::move(out), {});
    nodes_[r].back = [r, scores](Tape& t) {
        const auto& g = t.nodes_[r].grad;
        const auto& y = t.nodes_[r].val;
        double gy = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) gy += g[i] * y[i];
        for (std::size_t i = 0; i < g.size(); ++i)
            t.nodes_[scores].grad[i] += y[i] * (g[i] - gy);
    };
    return r;
}

Tape::Ref Tape::log_softmax(Ref scores) {
    const auto& sv = nodes_[scores].val;
    if (sv.empty()) throw DimensionError("log_softmax of empty vector");
    double mx = sv[0];
    for (double v : sv) {
        if (std::isnan(v)) throw NumericError("log_softmax of NaN input");
        mx = std::max(mx, v);
    }
    double z = 0.0;
    for (double v : sv) z += std::exp(v - mx);
    const double log_z = std::log(z) + mx;
    std::vector<double> out(sv.size());
    for (std::size_t i = 0; i < sv.size(); ++i) out[i] = sv[i] - log_z;
    Ref r = push(std::move(out), {});
    nodes_[r].back = [r, scores](Tape& t) {
        const auto& g = t.nodes_[r].grad;
        const auto& lp = t.nodes_[r].val;
        double gsum = 0.0;
        for (double gi : g) gsum += gi;
        for (std::size_t i = 0; i < g.size(); ++i)
            t.nodes_[scores].grad[i] += g[i] - std::exp(lp[i]) * gsum;
    };
    return r;
}

void Tape::backward(Ref loss) {
    if (backward_done_) throw TapeStateError("backward called twice without reset");
    if (nodes_[loss].val.size() != 1) throw DimensionError("loss must be scalar");
    backward_done_ = true;
    nodes_[loss].grad[0] = 1.0;
    for (int i = loss; i >= 0; --i)
        if (nodes_[i].back) nodes_[i].back(*this);
}

void Tape::reset() {
    nodes_.clear();
    backward_done_ = false;
}

Mlp Mlp::make(const std::string& name, const std::vector<int>& dims, Rng& rng, Act hidden, Act out) {
    if (dims.size() < 2) throw DimensionError("mlp needs at least one layer");
    Mlp mlp;
    mlp.hidden_act = hidden;
    mlp.out_act = out;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        ParamBlock w(name + ".w" + std::to_string(l), {dims[l + 1], dims[l]});
        ParamBlock b(name + ".b" + std::to_string(l), {dims[l + 1]});
        init_uniform(w, dims[l], rng);
        init_uniform(b, dims[l], rng);
        mlp.weights.push_back(std::move(w));
        mlp.biases.push_back(std::move(b));
    }
    return mlp;
}

namespace {
Tape::Ref apply_act(Tape& tape, Tape::Ref x, Mlp::Act act) {
    switch (act) {
        case Mlp::Act::ReLU: return tape.relu(x);
        case Mlp::Act::Tanh: return tape.tanh_op(x);
        case Mlp::Act::None: return x;
    }
    return x;
}
}  // namespace

Tape::Ref Mlp::forward(Tape& tape, Tape::Ref x, bool trainable) {
    Tape::Ref h = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        Tape::Ref w = trainable ? tape.param(weights[l]) : tape.frozen(weights[l]);
        Tape::Ref b = trainable ? tape.param(biases[l]) : tape.frozen(biases[l]);
        h = tape.affine(w, b, h, weights[l].rows(), weights[l].cols());
        h = apply_act(tape, h, l + 1 < weights.size() ? hidden_act : out_act);
    }
    return h;
}

std::vector<double> Mlp::eval(const std::vector<double>& x) const {
    std::vector<double> h = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        const int rows = weights[l].rows(), cols = weights[l].cols();
        if (static_cast<int>(h.size()) != cols) throw DimensionError("mlp eval shape mismatch");
        std::vector<double> out(rows);
        for (int i = 0; i < rows; ++i) {
            double acc = biases[l].value[i];
            const double* wr = weights[l].value.data() + static_cast<std::size_t>(i) * cols;
            for (int j = 0; j < cols; ++j) acc += wr[j] * h[j];
            out[i] = acc;
        }
        const Act act = l + 1 < weights.size() ? hidden_act : out_act;
        if (act == Act::ReLU)
            for (double& v : out) v = std::max(0.0, v);
        else if (act == Act::Tanh)
            for (double& v : out) v = std::tanh(v);
        h = std::move(out);
    }
    return h;
}

std::vector<ParamBlock*> Mlp::blocks() {
    std::vector<ParamBlock*> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        out.push_back(&weights[l]);
        out.push_back(&biases[l]);
    }
    return out;
}

std::vector<const ParamBlock*> Mlp::blocks() const {
    std::vector<const ParamBlock*> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        out.push_back(&weights[l]);
        out.push_back(&biases[l]);
    }
    return out;
}

std::vector<std::vector<double>> scaled_dot_scores(const std::vector<std::vector<double>>& queries,
                                                   const std::vector<std::vector<double>>& keys) {
    if (queries.empty() || keys.empty()) throw DimensionError("scaled_dot_scores: empty input");
    const std::size_t d = queries[0].size();
    if (d == 0) throw DimensionError("scaled_dot_scores: zero inner dimension");
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<std::vector<double>> out(queries.size(), std::vector<double>(keys.size()));
    for (std::size_t i = 0; i < queries.size(); ++i) {
        if (queries[i].size() != d) throw DimensionError("scaled_dot_scores: ragged queries");
        for (std::size_t j = 0; j < keys.size(); ++j) {
            if (keys[j].size() != d) throw DimensionError("scaled_dot_scores: key width mismatch");
            double acc = 0.0;
            for (std::size_t c = 0; c < d; ++c) acc += queries[i][c] * keys[j][c];
            out[i][j] = acc * inv_sqrt_d;
        }
    }
    return out;
}

std::vector<std::vector<double>> softmax_rows(const std::vector<std::vector<double>>& scores) {
    std::vector<std::vector<double>> out;
    out.reserve(scores.size());
    for (const auto& row : scores) {
        if (row.empty()) throw DimensionError("softmax_rows: empty row");
        double mx = row[0];
        for (double v : row) {
            if (std::isnan(v)) throw NumericError("softmax_rows: NaN input");
            mx = std::max(mx, v);
        }
        std::vector<double> o(row.size());
        double z = 0.0;
        for (std::size_t i = 0; i < row.size(); ++i) {
            o[i] = std::exp(row[i] - mx);
            z += o[i];
        }
        for (double& v : o) v /= z;
        out.push_back(std::move(o));
    }
    return out;
}

void adam_step(const std::vector<ParamBlock*>& blocks, double learning_rate) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    for (ParamBlock* p : blocks) {
        p->adam_t += 1;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(p->adam_t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(p->adam_t));
        for (int i = 0; i < p->size(); ++i) {
            const double g = p->grad[i];
            p->adam_m[i] = beta1 * p->adam_m[i] + (1.0 - beta1) * g;
            p->adam_v[i] = beta2 * p->adam_v[i] + (1.0 - beta2) * g * g;
            const double mhat = p->adam_m[i] / bc1;
            const double vhat = p->adam_v[i] / bc2;
            p->value[i] -= learning_rate * mhat / (std::sqrt(vhat) + eps);
        }
        p->zero_grad();
    }
}

void clip_gradients(const std::vector<ParamBlock*>& blocks, double max_norm) {
    double sq = 0.0;
    for (const ParamBlock* p : blocks)
        for (double g : p->grad) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    const double scale = max_norm / norm;
    for (ParamBlock* p : blocks)
        for (double& g : p->grad) g *= scale;
}

void soft_update(const std::vector<const ParamBlock*>& online,
                 const std::vector<ParamBlock*>& target, double tau) {
    if (online.size() != target.size()) throw DimensionError("soft_update block count mismatch");
    for (std::size_t b = 0; b < online.size(); ++b) {
        if (online[b]->size() != target[b]->size()) throw DimensionError("soft_update shape mismatch");
        for (int i = 0; i < online[b]->size(); ++i)
            target[b]->value[i] = tau * online[b]->value[i] + (1.0 - tau) * target[b]->value[i];
    }
}

GradCheckReport grad_check(const std::function<double(bool with_grad)>& eval,
                           const std::vector<ParamBlock*>& blocks, double fd_step) {
    for (ParamBlock* p : blocks) p->zero_grad();
    const double base = eval(true);
    if (!std::isfinite(base)) throw NumericError("grad_check: non-finite loss");
    std::vector<std::vector<double>> analytic;
    analytic.reserve(blocks.size());
    for (ParamBlock* p : blocks) analytic.push_back(p->grad);

    GradCheckReport report;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        ParamBlock* p = blocks[b];
        for (int i = 0; i < p->size(); ++i) {
            const double saved = p->value[i];
            p->value[i] = saved + fd_step;
            const double up = eval(false);
            p->value[i] = saved - fd_step;
            const double down = eval(false);
            p->value[i] = saved;
            if (!std::isfinite(up) || !std::isfinite(down))
                throw NumericError("grad_check: non-finite perturbed loss");
            const double numeric = (up - down) / (2.0 * fd_step);
            const double a = analytic[b][i];
            const double rel = std::fabs(a - numeric) / (1e-6 + std::fabs(a) + std::fabs(numeric));
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = p->name;
                report.worst_index = i;
            }
        }
        p->zero_grad();
    }
    return report;
}

}  // namespace af
