#include "af/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace af {

AllocMode alloc_mode_from_string(const std::string& name) {
    if (name == "two_stage") return AllocMode::TwoStage;
    if (name == "seq_pre") return AllocMode::SequentialPre;
    if (name == "rand_pre") return AllocMode::RandomOrderPre;
    if (name == "no_tam") return AllocMode::NoTAM;
    if (name == "no_amix") return AllocMode::NoAMIX;
    throw std::invalid_argument("unknown allocation mode: " + name);
}

std::string to_string(AllocMode mode) {
    switch (mode) {
        case AllocMode::TwoStage: return "two_stage";
        case AllocMode::SequentialPre: return "seq_pre";
        case AllocMode::RandomOrderPre: return "rand_pre";
        case AllocMode::NoTAM: return "no_tam";
        case AllocMode::NoAMIX: return "no_amix";
    }
    return "?";
}

bool is_fixed_shape(AllocMode mode) {
    return mode == AllocMode::NoTAM || mode == AllocMode::NoAMIX;
}

std::vector<double> entity_features(const Entity& e) {
    std::vector<double> f = e.resources.values();
    f.push_back(e.x);
    f.push_back(e.y);
    f.push_back(e.demand);
    return f;
}

std::vector<double> task_features(const Task& t) {
    std::vector<double> f = t.residual.values();
    f.push_back(t.x);
    f.push_back(t.y);
    f.push_back(t.reward);
    return f;
}

FeatureSnapshot snapshot(const std::vector<Entity>& entities, const std::vector<Task>& tasks) {
    FeatureSnapshot s;
    s.entity_feats.reserve(entities.size());
    s.task_feats.reserve(tasks.size());
    for (const Entity& e : entities) s.entity_feats.push_back(entity_features(e));
    for (const Task& t : tasks) s.task_feats.push_back(task_features(t));
    return s;
}

AllocatorParams AllocatorParams::make(int k, int d, uint64_t seed, int slots) {
    AllocatorParams p;
    p.k = k;
    p.d = d;
    p.slots = slots;
    const int ed = entity_feature_dim(k), td = task_feature_dim(k);
    Rng rng(substream(seed, "allocator-init"));
    p.f_h = Mlp::make("f_h", {ed, d, d, d}, rng);
    p.f_g = Mlp::make("f_g", {td, d, d, d}, rng);
    p.f_o = Mlp::make("f_o", {ed, d, d, d}, rng);
    p.f_q = Mlp::make("f_q", {td, d, d, d}, rng);

    p.shn_query = Mlp::make("shn_query", {ed, d, d, d}, rng);
    p.shn_keys = ParamBlock("shn_keys", {slots, d});
    p.shn_values = ParamBlock("shn_values", {slots, d});
    init_uniform(p.shn_keys, d, rng);
    init_uniform(p.shn_values, d, rng);
    p.shn_weight_head = Mlp::make("shn_weight_head", {d, d, d}, rng);
    p.shn_bias_head = Mlp::make("shn_bias_head", {d, d, 1}, rng);
    // keep the mixer's ReLU units alive at init: with non-negative mixing
    // weights every hidden unit shares the sign of sum_i b_i
    p.shn_bias_head.biases.back().value[0] = 0.5;
    p.amix_w2 = ParamBlock("amix_w2", {1, d});
    p.amix_b2 = ParamBlock("amix_b2", {1});
    init_uniform(p.amix_w2, d, rng);
    init_uniform(p.amix_b2, d, rng);

    p.f_d = Mlp::make("f_d", {ed, d, d, d}, rng);
    p.f_a = Mlp::make("f_a", {ed, d, d, d}, rng);
    p.f_v = Mlp::make("f_v", {td + ed, d, d, 1}, rng);
    p.sel_w1 = ParamBlock("sel_w1", {d, td + d});
    p.sel_w2 = ParamBlock("sel_w2", {d, d});
    p.sel_v = ParamBlock("sel_v", {d});
    init_uniform(p.sel_w1, td + d, rng);
    init_uniform(p.sel_w2, d, rng);
    init_uniform(p.sel_v, d, rng);
    return p;
}

namespace {
void append(std::vector<ParamBlock*>& dst, std::vector<ParamBlock*> src) {
    dst.insert(dst.end(), src.begin(), src.end());
}
}  // namespace

std::vector<ParamBlock*> AllocatorParams::actor_blocks() {
    std::vector<ParamBlock*> out;
    append(out, f_h.blocks());
    append(out, f_g.blocks());
    return out;
}

std::vector<ParamBlock*> AllocatorParams::critic_blocks() {
    std::vector<ParamBlock*> out;
    append(out, f_o.blocks());
    append(out, f_q.blocks());
    append(out, shn_query.blocks());
    out.push_back(&shn_keys);
    out.push_back(&shn_values);
    append(out, shn_weight_head.blocks());
    append(out, shn_bias_head.blocks());
    out.push_back(&amix_w2);
    out.push_back(&amix_b2);
    return out;
}

std::vector<ParamBlock*> AllocatorParams::select_blocks() {
    std::vector<ParamBlock*> out;
    append(out, f_d.blocks());
    append(out, f_a.blocks());
    out.push_back(&sel_w1);
    out.push_back(&sel_w2);
    out.push_back(&sel_v);
    return out;
}

std::vector<ParamBlock*> AllocatorParams::value_head_blocks() { return f_v.blocks(); }

std::vector<ParamBlock*> AllocatorParams::all_blocks() {
    std::vector<ParamBlock*> out = actor_blocks();
    append(out, critic_blocks());
    append(out, select_blocks());
    append(out, value_head_blocks());
    return out;
}

Allocator::Allocator(int k, int d, uint64_t seed, AllocMode mode, int fixed_n, int fixed_m)
    : mode_(mode),
      params_(AllocatorParams::make(k, d, seed)),
      target_(params_),
      fixed_n_(fixed_n),
      fixed_m_(fixed_m) {
    if (is_fixed_shape(mode_)) {
        if (fixed_n <= 0 || fixed_m <= 0)
            throw FixedShapeError(to_string(mode_) + " needs fixed entity and task counts");
        Rng rng(substream(seed, "fixed-nets"));
        const int flat = fixed_n * entity_feature_dim(k) + fixed_m * task_feature_dim(k);
        if (mode_ == AllocMode::NoTAM) {
            fixed_actor_ = Mlp::make("fixed_actor", {flat, d, d, fixed_n * fixed_m}, rng);
            fixed_critic_ = Mlp::make("fixed_critic", {flat, d, d, fixed_n * fixed_m}, rng);
            fixed_critic_target_ = *fixed_critic_;
        } else {
            global_qtot_ = Mlp::make("global_qtot", {flat + fixed_n * fixed_m, d, d, 1}, rng);
            global_qtot_target_ = *global_qtot_;
        }
    }
}

void Allocator::require_shape(int n, int m) const {
    if (!is_fixed_shape(mode_)) return;
    if (n != fixed_n_ || m != fixed_m_)
        throw FixedShapeError(to_string(mode_) + " built for n=" + std::to_string(fixed_n_) +
                              ", m=" + std::to_string(fixed_m_) + " but got n=" + std::to_string(n) +
                              ", m=" + std::to_string(m));
}

std::vector<double> Allocator::flat_features(const FeatureSnapshot& s) const {
    std::vector<double> flat;
    for (const auto& f : s.entity_feats) flat.insert(flat.end(), f.begin(), f.end());
    for (const auto& f : s.task_feats) flat.insert(flat.end(), f.begin(), f.end());
    return flat;
}

std::vector<std::vector<double>> Allocator::pre_assign_policy(const std::vector<Entity>& entities,
                                                              const std::vector<Task>& tasks) const {
    return pre_assign_policy(snapshot(entities, tasks));
}

std::vector<std::vector<double>> Allocator::pre_assign_policy(const FeatureSnapshot& s) const {
    if (s.m() == 0) throw NoTasksError("pre-assign with no tasks");
    if (s.n() == 0) throw std::invalid_argument("pre-assign with no entities");
    require_shape(s.n(), s.m());
    if (mode_ == AllocMode::NoTAM) {
        const std::vector<double> logits = fixed_actor_->eval(flat_features(s));
        std::vector<std::vector<double>> rows(s.n(), std::vector<double>(s.m()));
        for (int i = 0; i < s.n(); ++i)
            for (int j = 0; j < s.m(); ++j) rows[i][j] = logits[i * s.m() + j];
        return softmax_rows(rows);
    }
    std::vector<std::vector<double>> h(s.n()), g(s.m());
    for (int i = 0; i < s.n(); ++i) h[i] = params_.f_h.eval(s.entity_feats[i]);
    for (int j = 0; j < s.m(); ++j) g[j] = params_.f_g.eval(s.task_feats[j]);
    return softmax_rows(scaled_dot_scores(h, g));
}

std::vector<std::vector<double>> Allocator::pre_assign_values(const std::vector<Entity>& entities,
                                                              const std::vector<Task>& tasks,
                                                              bool use_target) const {
    return pre_assign_values(snapshot(entities, tasks), use_target);
}

std::vector<std::vector<double>> Allocator::pre_assign_values(const FeatureSnapshot& s,
                                                              bool use_target) const {
    if (s.m() == 0) throw NoTasksError("pre-assign values with no tasks");
    require_shape(s.n(), s.m());
    if (mode_ == AllocMode::NoTAM) {
        const Mlp& net = use_target ? *fixed_critic_target_ : *fixed_critic_;
        const std::vector<double> flatv = net.eval(flat_features(s));
        std::vector<std::vector<double>> rows(s.n(), std::vector<double>(s.m()));
        for (int i = 0; i < s.n(); ++i)
            for (int j = 0; j < s.m(); ++j) rows[i][j] = flatv[i * s.m() + j];
        return rows;
    }
    const AllocatorParams& p = use_target ? target_ : params_;
    std::vector<std::vector<double>> o(s.n()), q(s.m());
    for (int i = 0; i < s.n(); ++i) o[i] = p.f_o.eval(s.entity_feats[i]);
    for (int j = 0; j < s.m(); ++j) q[j] = p.f_q.eval(s.task_feats[j]);
    return scaled_dot_scores(o, q);
}

MixWeights Allocator::shn_generate(const std::vector<Entity>& entities, bool use_target) const {
    FeatureSnapshot s;
    for (const Entity& e : entities) s.entity_feats.push_back(entity_features(e));
    return shn_generate(s, use_target);
}

MixWeights Allocator::shn_generate(const FeatureSnapshot& s, bool use_target) const {
    const AllocatorParams& p = use_target ? target_ : params_;
    const int n = s.n(), d = p.d, slots = p.slots;
    MixWeights mix;
    mix.n = n;
    mix.h = d;
    mix.w.resize(static_cast<std::size_t>(n) * d);
    mix.b.resize(n);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    for (int i = 0; i < n; ++i) {
        const std::vector<double> query = p.shn_query.eval(s.entity_feats[i]);
        std::vector<double> scores(slots);
        for (int sl = 0; sl < slots; ++sl) {
            double acc = 0.0;
            const double* key = p.shn_keys.value.data() + static_cast<std::size_t>(sl) * d;
            for (int c = 0; c < d; ++c) acc += query[c] * key[c];
            scores[sl] = acc * inv_sqrt_d;
        }
        const std::vector<double> attn = softmax_rows({scores})[0];
        std::vector<double> ctx(d, 0.0);
        for (int sl = 0; sl < slots; ++sl) {
            const double* val = p.shn_values.value.data() + static_cast<std::size_t>(sl) * d;
            for (int c = 0; c < d; ++c) ctx[c] += attn[sl] * val[c];
        }
        const std::vector<double> wrow = p.shn_weight_head.eval(ctx);
        for (int c = 0; c < d; ++c) mix.w[static_cast<std::size_t>(i) * d + c] = std::fabs(wrow[c]);
        mix.b[i] = p.shn_bias_head.eval(ctx)[0];
    }
    return mix;
}

double Allocator::amix_total(const std::vector<double>& per_entity_values, const MixWeights& mix,
                             bool use_target) const {
    const AllocatorParams& p = use_target ? target_ : params_;
    if (static_cast<int>(per_entity_values.size()) != mix.n)
        throw DimensionError("amix value count does not match mix rows");
    std::vector<double> hidden(mix.h, 0.0);
    for (int i = 0; i < mix.n; ++i) {
        const double qb = per_entity_values[i] + mix.b[i];
        const double* row = mix.w.data() + static_cast<std::size_t>(i) * mix.h;
        for (int j = 0; j < mix.h; ++j) hidden[j] += qb * row[j];
    }
    double out = p.amix_b2.value[0];
    for (int j = 0; j < mix.h; ++j) out += std::fabs(p.amix_w2.value[j]) * std::max(0.0, hidden[j]);
    return out;
}

double Allocator::q_total(const FeatureSnapshot& s, const std::vector<int>& choices,
                          bool use_target) const {
    require_shape(s.n(), s.m());
    if (static_cast<int>(choices.size()) != s.n()) throw DimensionError("choice count != entity count");
    if (mode_ == AllocMode::NoAMIX) {
        std::vector<double> input = flat_features(s);
        std::vector<double> onehot(static_cast<std::size_t>(s.n()) * s.m(), 0.0);
        for (int i = 0; i < s.n(); ++i) onehot[static_cast<std::size_t>(i) * s.m() + choices[i]] = 1.0;
        input.insert(input.end(), onehot.begin(), onehot.end());
        const Mlp& net = use_target ? *global_qtot_target_ : *global_qtot_;
        return net.eval(input)[0];
    }
    const auto values = pre_assign_values(s, use_target);
    std::vector<double> chosen(s.n());
    for (int i = 0; i < s.n(); ++i) chosen[i] = values[i][choices[i]];
    return amix_total(chosen, shn_generate(s, use_target), use_target);
}

std::vector<int> Allocator::greedy_choices(const std::vector<std::vector<double>>& policy) {
    std::vector<int> out(policy.size());
    for (std::size_t i = 0; i < policy.size(); ++i) {
        int best = 0;
        for (std::size_t j = 1; j < policy[i].size(); ++j)
            if (policy[i][j] > policy[i][best]) best = static_cast<int>(j);
        out[i] = best;
    }
    return out;
}

std::vector<int> Allocator::sample_choices(const std::vector<std::vector<double>>& policy, Rng& rng) {
    std::vector<int> out(policy.size());
    for (std::size_t i = 0; i < policy.size(); ++i) {
        const double u = rng.uniform();
        double cum = 0.0;
        int pick = static_cast<int>(policy[i].size()) - 1;
        for (std::size_t j = 0; j < policy[i].size(); ++j) {
            cum += policy[i][j];
            if (u < cum) {
                pick = static_cast<int>(j);
                break;
            }
        }
        out[i] = pick;
    }
    return out;
}

Allocator::SelectResult Allocator::select_for_task(const Task& task,
                                                   const std::vector<Entity>& candidates, Rng& rng,
                                                   bool greedy) const {
    const AllocatorParams& p = params_;
    const int d = p.d;

    std::vector<const Entity*> pool(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) pool[i] = &candidates[i];
    std::sort(pool.begin(), pool.end(),
              [](const Entity* a, const Entity* b) { return a->id < b->id; });

    SelectResult result;
    SelectTrace& trace = result.trace;
    trace.task_id = task.id;
    trace.reward = task.reward;
    trace.x = task.x;
    trace.y = task.y;
    trace.residual0 = task.residual;
    for (const Entity* e : pool) {
        trace.candidate_ids.push_back(e->id);
        trace.cand_feats.push_back(entity_features(*e));
        trace.cand_resources.push_back(e->resources);
    }

    const int nc = static_cast<int>(pool.size());
    std::vector<std::vector<double>> enc(nc), w2enc(nc);
    for (int j = 0; j < nc; ++j) {
        enc[j] = p.f_d.eval(trace.cand_feats[j]);
        w2enc[j].assign(d, 0.0);
        for (int r = 0; r < d; ++r) {
            double acc = 0.0;
            const double* row = p.sel_w2.value.data() + static_cast<std::size_t>(r) * d;
            for (int c = 0; c < d; ++c) acc += row[c] * enc[j][c];
            w2enc[j][r] = acc;
        }
    }

    ResourceVector residual = task.residual;
    std::vector<bool> taken(nc, false);
    std::vector<double> last_embed(d, 0.0);
    int remaining = nc;

    while (!residual.all_zero() && remaining > 0) {
        Task shown = task;
        shown.residual = residual;
        std::vector<double> e_t = task_features(shown);
        e_t.insert(e_t.end(), last_embed.begin(), last_embed.end());
        std::vector<double> w1e(d, 0.0);
        const int in_dim = p.sel_w1.cols();
        for (int r = 0; r < d; ++r) {
            double acc = 0.0;
            const double* row = p.sel_w1.value.data() + static_cast<std::size_t>(r) * in_dim;
            for (int c = 0; c < in_dim; ++c) acc += row[c] * e_t[c];
            w1e[r] = acc;
        }

        std::vector<int> avail;
        std::vector<double> scores;
        for (int j = 0; j < nc; ++j) {
            if (taken[j]) continue;
            double sc = 0.0;
            for (int r = 0; r < d; ++r) sc += p.sel_v.value[r] * std::tanh(w1e[r] + w2enc[j][r]);
            avail.push_back(j);
            scores.push_back(sc);
        }
        const std::vector<double> probs = softmax_rows({scores})[0];

        int pos = 0;
        if (greedy) {
            for (std::size_t j = 1; j < probs.size(); ++j)
                if (probs[j] > probs[pos]) pos = static_cast<int>(j);
        } else {
            const double u = rng.uniform();
            double cum = 0.0;
            pos = static_cast<int>(probs.size()) - 1;
            for (std::size_t j = 0; j < probs.size(); ++j) {
                cum += probs[j];
                if (u < cum) {
                    pos = static_cast<int>(j);
                    break;
                }
            }
        }
        const int j = avail[pos];
        taken[j] = true;
        --remaining;
        trace.picked.push_back(j);
        trace.log_probs.push_back(std::log(std::max(probs[pos], 1e-300)));
        result.picked_ids.push_back(pool[j]->id);
        residual.subtract_clamped(trace.cand_resources[j]);
        last_embed = p.f_a.eval(trace.cand_feats[j]);
    }

    // Value head sees the task plus a mean-pooled view of its candidates.
    std::vector<double> pooled(entity_feature_dim(p.k), 0.0);
    if (nc > 0)
        for (int j = 0; j < nc; ++j)
            for (std::size_t c = 0; c < pooled.size(); ++c) pooled[c] += trace.cand_feats[j][c] / nc;
    Task base = task;
    std::vector<double> vin = task_features(base);
    vin.insert(vin.end(), pooled.begin(), pooled.end());
    trace.value_estimate = p.f_v.eval(vin)[0];
    return result;
}

FeatureSnapshot Allocator::make_snapshot(const std::vector<Task>& tasks,
                                         const std::vector<Entity>& entities) const {
    if (!is_fixed_shape(mode_)) return snapshot(entities, tasks);
    if (static_cast<int>(entities.size()) != fixed_n_)
        throw FixedShapeError(to_string(mode_) + " expects the full population of " +
                              std::to_string(fixed_n_) + " entities, got " +
                              std::to_string(entities.size()));
    FeatureSnapshot s;
    for (const Entity& e : entities) s.entity_feats.push_back(entity_features(e));
    const int m_real = std::min<int>(fixed_m_, static_cast<int>(tasks.size()));
    for (int j = 0; j < m_real; ++j) s.task_feats.push_back(task_features(tasks[j]));
    for (int j = m_real; j < fixed_m_; ++j)
        s.task_feats.emplace_back(task_feature_dim(params_.k), 0.0);
    return s;
}

AllocateResult Allocator::allocate(const std::vector<Task>& tasks,
                                   const std::vector<Entity>& entities, Rng& rng, bool greedy,
                                   const std::vector<int>* forced_choices) const {
    AllocateResult result;
    if (tasks.empty()) return result;

    auto run_select = [&](const Task& task, const std::vector<Entity>& pool) -> std::vector<int> {
        SelectResult sel = select_for_task(task, pool, rng, greedy);
        std::vector<Entity> chosen;
        for (int id : sel.picked_ids)
            for (const Entity& e : pool)
                if (e.id == id) chosen.push_back(e);
        ResourceVector total = ResourceVector::zeros(task.requirement.size());
        for (const Entity& e : chosen) total.add(e.resources);
        ResourceVector needed = task.residual;
        needed.subtract_clamped(total);
        if (!needed.all_zero()) {
            // pool cannot finish the task; dispatching would only burn
            // entities other tasks may still need
            result.traces.push_back(std::move(sel.trace));
            return {};
        }
        if (task_profit(task, chosen) < 0.0) {
            result.allocation.abandoned.insert(task.id);
            result.traces.push_back(std::move(sel.trace));
            return {};
        }
        result.allocation.lists[task.id] = sel.picked_ids;
        result.traces.push_back(std::move(sel.trace));
        return sel.picked_ids;
    };

    if (mode_ == AllocMode::SequentialPre || mode_ == AllocMode::RandomOrderPre) {
        std::vector<int> order(tasks.size());
        std::iota(order.begin(), order.end(), 0);
        if (mode_ == AllocMode::RandomOrderPre) rng.shuffle(order);
        std::set<int> claimed;
        for (int idx : order) {
            const Task& task = tasks[idx];
            if (task.residual.all_zero()) continue;
            std::vector<Entity> pool;
            for (const Entity& e : entities)
                if (!claimed.count(e.id)) pool.push_back(e);
            const std::vector<int> picked = run_select(task, pool);
            claimed.insert(picked.begin(), picked.end());
        }
        return result;
    }

    const FeatureSnapshot s = make_snapshot(tasks, entities);
    const auto policy = pre_assign_policy(s);
    const auto values = pre_assign_values(s);
    PreAssignment& pre = result.pre;
    if (forced_choices) {
        if (forced_choices->size() != entities.size())
            throw DimensionError("forced choices length != entity count");
        pre.choices = *forced_choices;
    } else {
        pre.choices = greedy ? greedy_choices(policy) : sample_choices(policy, rng);
    }
    pre.log_probs.resize(entities.size());
    pre.per_entity_values.resize(entities.size());
    for (std::size_t i = 0; i < entities.size(); ++i) {
        pre.log_probs[i] = std::log(std::max(policy[i][pre.choices[i]], 1e-300));
        pre.per_entity_values[i] = values[i][pre.choices[i]];
    }

    const std::size_t m_real = std::min(tasks.size(), s.task_feats.size());
    std::vector<std::vector<Entity>> buckets(m_real);
    for (std::size_t i = 0; i < entities.size(); ++i) {
        if (entities[i].committed_to) continue;  // fixed modes see the full population
        const int c = pre.choices[i];
        if (c < static_cast<int>(m_real)) buckets[c].push_back(entities[i]);
    }
    for (std::size_t j = 0; j < m_real; ++j) {
        if (tasks[j].residual.all_zero()) continue;
        run_select(tasks[j], buckets[j]);
    }
    return result;
}

// ---------- tape path ----------

std::vector<Tape::Ref> Allocator::score_row_nodes(Tape& tape, const FeatureSnapshot& s,
                                                  bool trainable) {
    if (s.m() == 0) throw NoTasksError("pre-assign with no tasks");
    require_shape(s.n(), s.m());
    const int n = s.n(), m = s.m();
    std::vector<Tape::Ref> rows(n);
    if (mode_ == AllocMode::NoTAM) {
        Tape::Ref logits = fixed_actor_->forward(tape, tape.constant(flat_features(s)), trainable);
        for (int i = 0; i < n; ++i) {
            std::vector<int> idx(m);
            std::iota(idx.begin(), idx.end(), i * m);
            rows[i] = tape.gather(logits, idx);
        }
        return rows;
    }
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(params_.d));
    std::vector<Tape::Ref> g(m);
    for (int j = 0; j < m; ++j)
        g[j] = params_.f_g.forward(tape, tape.constant(s.task_feats[j]), trainable);
    for (int i = 0; i < n; ++i) {
        Tape::Ref h = params_.f_h.forward(tape, tape.constant(s.entity_feats[i]), trainable);
        std::vector<Tape::Ref> scores(m);
        for (int j = 0; j < m; ++j) scores[j] = tape.dot(h, g[j]);
        rows[i] = tape.scale(tape.concat(scores), inv_sqrt_d);
    }
    return rows;
}

Tape::Ref Allocator::policy_matrix_node(Tape& tape, const FeatureSnapshot& s, bool trainable) {
    auto rows = score_row_nodes(tape, s, trainable);
    for (Tape::Ref& r : rows) r = tape.softmax(r);
    return tape.concat(rows);
}

Tape::Ref Allocator::choice_logprob_node(Tape& tape, const FeatureSnapshot& s,
                                         const std::vector<int>& choices, bool trainable) {
    if (static_cast<int>(choices.size()) != s.n())
        throw DimensionError("choice count != entity count");
    const auto rows = score_row_nodes(tape, s, trainable);
    std::vector<Tape::Ref> picked(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        picked[i] = tape.pick(tape.log_softmax(rows[i]), choices[i]);
    return tape.sum(tape.concat(picked));
}

Tape::Ref Allocator::policy_neg_entropy_node(Tape& tape, const FeatureSnapshot& s, bool trainable) {
    const auto rows = score_row_nodes(tape, s, trainable);
    std::vector<Tape::Ref> terms(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        terms[i] = tape.dot(tape.softmax(rows[i]), tape.log_softmax(rows[i]));
    return tape.sum(tape.concat(terms));
}

Tape::Ref Allocator::value_matrix_node(Tape& tape, const FeatureSnapshot& s, bool trainable) {
    if (s.m() == 0) throw NoTasksError("pre-assign values with no tasks");
    require_shape(s.n(), s.m());
    const int n = s.n(), m = s.m();
    if (mode_ == AllocMode::NoTAM)
        return fixed_critic_->forward(tape, tape.constant(flat_features(s)), trainable);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(params_.d));
    std::vector<Tape::Ref> q(m);
    for (int j = 0; j < m; ++j)
        q[j] = params_.f_q.forward(tape, tape.constant(s.task_feats[j]), trainable);
    std::vector<Tape::Ref> rows;
    for (int i = 0; i < n; ++i) {
        Tape::Ref o = params_.f_o.forward(tape, tape.constant(s.entity_feats[i]), trainable);
        std::vector<Tape::Ref> scores(m);
        for (int j = 0; j < m; ++j) scores[j] = tape.dot(o, q[j]);
        rows.push_back(tape.scale(tape.concat(scores), inv_sqrt_d));
    }
    return tape.concat(rows);
}

namespace {

/// SHN + AMIX on tape: mixes an n-vector of per-entity values into a scalar.
Tape::Ref amix_node(Tape& tape, AllocatorParams& p, const FeatureSnapshot& s, Tape::Ref q_vec,
                    bool trainable) {
    const int n = s.n(), d = p.d, slots = p.slots;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    Tape::Ref keys = trainable ? tape.param(p.shn_keys) : tape.frozen(p.shn_keys);
    Tape::Ref values = trainable ? tape.param(p.shn_values) : tape.frozen(p.shn_values);

    std::vector<Tape::Ref> key_rows(slots), value_rows(slots);
    for (int sl = 0; sl < slots; ++sl) {
        std::vector<int> idx(d);
        std::iota(idx.begin(), idx.end(), sl * d);
        key_rows[sl] = tape.gather(keys, idx);
        value_rows[sl] = tape.gather(values, idx);
    }

    Tape::Ref hidden = tape.constant(std::vector<double>(d, 0.0));
    for (int i = 0; i < n; ++i) {
        Tape::Ref query = p.shn_query.forward(tape, tape.constant(s.entity_feats[i]), trainable);
        std::vector<Tape::Ref> scores(slots);
        for (int sl = 0; sl < slots; ++sl) scores[sl] = tape.dot(query, key_rows[sl]);
        Tape::Ref attn = tape.softmax(tape.scale(tape.concat(scores), inv_sqrt_d));
        Tape::Ref ctx = tape.constant(std::vector<double>(d, 0.0));
        for (int sl = 0; sl < slots; ++sl)
            ctx = tape.add(ctx, tape.mul_scalar(value_rows[sl], tape.pick(attn, sl)));
        Tape::Ref wrow = tape.abs_op(p.shn_weight_head.forward(tape, ctx, trainable));
        Tape::Ref bias = p.shn_bias_head.forward(tape, ctx, trainable);
        Tape::Ref qb = tape.add(tape.pick(q_vec, i), bias);
        hidden = tape.add(hidden, tape.mul_scalar(wrow, qb));
    }
    Tape::Ref w2 = tape.abs_op(trainable ? tape.param(p.amix_w2) : tape.frozen(p.amix_w2));
    Tape::Ref b2 = trainable ? tape.param(p.amix_b2) : tape.frozen(p.amix_b2);
    return tape.add(tape.dot(w2, tape.relu(hidden)), b2);
}

}  // namespace

Tape::Ref Allocator::qtot_node(Tape& tape, const FeatureSnapshot& s, const std::vector<int>& choices,
                               bool trainable, Tape::Ref* value_matrix_out) {
    require_shape(s.n(), s.m());
    const int n = s.n(), m = s.m();
    if (mode_ == AllocMode::NoAMIX) {
        std::vector<double> input = flat_features(s);
        std::vector<double> onehot(static_cast<std::size_t>(n) * m, 0.0);
        for (int i = 0; i < n; ++i) onehot[static_cast<std::size_t>(i) * m + choices[i]] = 1.0;
        input.insert(input.end(), onehot.begin(), onehot.end());
        return global_qtot_->forward(tape, tape.constant(input), trainable);
    }
    Tape::Ref vm = value_matrix_node(tape, s, trainable);
    if (value_matrix_out) *value_matrix_out = vm;
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i * m + choices[i];
    return amix_node(tape, params_, s, tape.gather(vm, idx), trainable);
}

Tape::Ref Allocator::qtot_under_policy_node(Tape& tape, const FeatureSnapshot& s,
                                            Tape::Ref policy_node) {
    require_shape(s.n(), s.m());
    const int n = s.n(), m = s.m();
    if (mode_ == AllocMode::NoAMIX) {
        Tape::Ref feats = tape.constant(flat_features(s));
        return global_qtot_->forward(tape, tape.concat({feats, policy_node}), false);
    }
    Tape::Ref vm = value_matrix_node(tape, s, false);
    std::vector<Tape::Ref> qbar(n);
    for (int i = 0; i < n; ++i) {
        std::vector<int> idx(m);
        std::iota(idx.begin(), idx.end(), i * m);
        qbar[i] = tape.dot(tape.gather(policy_node, idx), tape.gather(vm, idx));
    }
    return amix_node(tape, params_, s, tape.concat(qbar), false);
}

std::vector<Tape::Ref> Allocator::select_logprob_nodes(Tape& tape, const SelectTrace& trace,
                                                       bool trainable) {
    AllocatorParams& p = params_;
    const int d = p.d;
    const int nc = static_cast<int>(trace.cand_feats.size());
    Tape::Ref w1 = trainable ? tape.param(p.sel_w1) : tape.frozen(p.sel_w1);
    Tape::Ref w2 = trainable ? tape.param(p.sel_w2) : tape.frozen(p.sel_w2);
    Tape::Ref v = trainable ? tape.param(p.sel_v) : tape.frozen(p.sel_v);

    std::vector<Tape::Ref> w2enc(nc);
    for (int j = 0; j < nc; ++j) {
        Tape::Ref enc = p.f_d.forward(tape, tape.constant(trace.cand_feats[j]), trainable);
        w2enc[j] = tape.matvec(w2, enc, d, d);
    }

    ResourceVector residual = trace.residual0;
    std::vector<bool> taken(nc, false);
    Tape::Ref last_embed = tape.constant(std::vector<double>(d, 0.0));
    std::vector<Tape::Ref> log_probs;

    for (int pick : trace.picked) {
        Task shown;
        shown.reward = trace.reward;
        shown.x = trace.x;
        shown.y = trace.y;
        shown.residual = residual;
        std::vector<double> base = task_features(shown);
        Tape::Ref e_t = tape.concat({tape.constant(base), last_embed});
        Tape::Ref w1e = tape.matvec(w1, e_t, d, p.sel_w1.cols());

        std::vector<int> avail;
        std::vector<Tape::Ref> scores;
        int pos = -1;
        for (int j = 0; j < nc; ++j) {
            if (taken[j]) continue;
            if (j == pick) pos = static_cast<int>(avail.size());
            avail.push_back(j);
            scores.push_back(tape.dot(v, tape.tanh_op(tape.add(w1e, w2enc[j]))));
        }
        if (pos < 0) throw std::logic_error("select replay: pick not available");
        Tape::Ref log_row = tape.log_softmax(tape.concat(scores));
        log_probs.push_back(tape.pick(log_row, pos));

        taken[pick] = true;
        residual.subtract_clamped(trace.cand_resources[pick]);
        last_embed = p.f_a.forward(tape, tape.constant(trace.cand_feats[pick]), trainable);
    }
    return log_probs;
}

Tape::Ref Allocator::select_value_node(Tape& tape, const SelectTrace& trace, bool trainable) {
    AllocatorParams& p = params_;
    const int nc = static_cast<int>(trace.cand_feats.size());
    std::vector<double> pooled(entity_feature_dim(p.k), 0.0);
    if (nc > 0)
        for (int j = 0; j < nc; ++j)
            for (std::size_t c = 0; c < pooled.size(); ++c) pooled[c] += trace.cand_feats[j][c] / nc;
    Task shown;
    shown.reward = trace.reward;
    shown.x = trace.x;
    shown.y = trace.y;
    shown.residual = trace.residual0;
    std::vector<double> vin = task_features(shown);
    vin.insert(vin.end(), pooled.begin(), pooled.end());
    return p.f_v.forward(tape, tape.constant(vin), trainable);
}

std::vector<ParamBlock*> Allocator::actor_blocks() {
    if (mode_ == AllocMode::NoTAM) return fixed_actor_->blocks();
    return params_.actor_blocks();
}

std::vector<ParamBlock*> Allocator::critic_blocks() {
    if (mode_ == AllocMode::NoTAM) {
        auto out = fixed_critic_->blocks();
        append(out, params_.critic_blocks());
        return out;
    }
    if (mode_ == AllocMode::NoAMIX) {
        auto out = params_.f_o.blocks();
        append(out, params_.f_q.blocks());
        append(out, global_qtot_->blocks());
        return out;
    }
    return params_.critic_blocks();
}

std::vector<ParamBlock*> Allocator::select_blocks() { return params_.select_blocks(); }
std::vector<ParamBlock*> Allocator::value_head_blocks() { return params_.value_head_blocks(); }

std::vector<ParamBlock*> Allocator::checkpoint_blocks() {
    std::vector<ParamBlock*> out = params_.all_blocks();
    if (fixed_actor_) append(out, fixed_actor_->blocks());
    if (fixed_critic_) append(out, fixed_critic_->blocks());
    if (global_qtot_) append(out, global_qtot_->blocks());
    return out;
}

namespace {
std::vector<const ParamBlock*> as_const(std::vector<ParamBlock*> blocks) {
    return {blocks.begin(), blocks.end()};
}
}  // namespace

void Allocator::sync_targets_hard() {
    target_ = params_;
    if (fixed_critic_) fixed_critic_target_ = *fixed_critic_;
    if (global_qtot_) global_qtot_target_ = *global_qtot_;
}

void Allocator::soft_update_targets(double tau) {
    soft_update(as_const(params_.critic_blocks()), target_.critic_blocks(), tau);
    if (fixed_critic_) soft_update(as_const(fixed_critic_->blocks()), fixed_critic_target_->blocks(), tau);
    if (global_qtot_) soft_update(as_const(global_qtot_->blocks()), global_qtot_target_->blocks(), tau);
}

}  // namespace af
