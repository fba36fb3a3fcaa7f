// Minimal reverse-mode autodiff: named parameter blocks, a tape of
// vector-valued nodes, Adam, and a finite-difference gradient checker.
// One tape plus its parameter blocks form a single-threaded training
// context; frozen snapshots may be shared read-only.

#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "af/rng.hpp"

namespace af {

struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TapeStateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One learnable array: values, accumulated gradient, Adam state.
struct ParamBlock {
    std::string name;
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<double> adam_m, adam_v;
    long adam_t = 0;

    ParamBlock() = default;
    ParamBlock(std::string block_name, std::vector<int> dims);

    int size() const { return static_cast<int>(value.size()); }
    int rows() const { return shape.empty() ? 0 : shape[0]; }
    int cols() const { return shape.size() > 1 ? shape[1] : 1; }
    void zero_grad();
};

/// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
void init_uniform(ParamBlock& block, int fan_in, Rng& rng);

class Tape {
public:
    using Ref = int;

    Ref constant(std::vector<double> values);
    Ref scalar(double v) { return constant({v}); }

    /// Trainable leaf; backward accumulates into block.grad.
    Ref param(ParamBlock& block);
    /// Non-trainable leaf from a block's current values.
    Ref frozen(const ParamBlock& block) { return constant(block.value); }

    // y = W x + b with W row-major rows x cols, x of length cols.
    Ref affine(Ref w, Ref b, Ref x, int rows, int cols);
    Ref matvec(Ref w, Ref x, int rows, int cols);

    Ref add(Ref a, Ref b);
    Ref sub(Ref a, Ref b);
    Ref mul(Ref a, Ref b);           // elementwise
    Ref mul_scalar(Ref a, Ref s);    // a * s[0]
    Ref scale(Ref a, double factor);
    Ref add_const(Ref a, const std::vector<double>& c);
    Ref neg(Ref a) { return scale(a, -1.0); }

    Ref relu(Ref a);
    Ref tanh_op(Ref a);
    Ref abs_op(Ref a);
    Ref softplus(Ref a);
    Ref square(Ref a);
    Ref log_op(Ref a);

    Ref dot(Ref a, Ref b);   // scalar
    Ref sum(Ref a);          // scalar
    Ref mean_op(Ref a);      // scalar
    Ref pick(Ref a, int i);  // scalar a[i]
    Ref concat(const std::vector<Ref>& parts);
    Ref gather(Ref a, const std::vector<int>& idx);

    /// Numerically stabilized softmax of the whole vector.
    Ref softmax(Ref scores);
    /// log(softmax(scores)) computed stably from the scores.
    Ref log_softmax(Ref scores);

    std::size_t length(Ref r) const { return nodes_[r].val.size(); }
    const std::vector<double>& value(Ref r) const { return nodes_[r].val; }
    double value0(Ref r) const { return nodes_[r].val.at(0); }

    /// Reverse pass from a scalar loss node; accumulates ParamBlock grads.
    /// Throws TapeStateError if called twice without reset().
    void backward(Ref loss);

    void reset();
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        std::vector<double> val;
        std::vector<double> grad;
        std::function<void(Tape&)> back;  // empty for leaves
    };

    Ref push(std::vector<double> val, std::function<void(Tape&)> back);
    std::vector<double>& grad_of(Ref r) { return nodes_[r].grad; }

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

/// Stack of affine layers with an activation between layers and an
/// optional activation on the output layer.
struct Mlp {
    enum class Act { ReLU, Tanh, None };

    std::vector<ParamBlock> weights;
    std::vector<ParamBlock> biases;
    Act hidden_act = Act::ReLU;
    Act out_act = Act::None;

    static Mlp make(const std::string& name, const std::vector<int>& dims, Rng& rng,
                    Act hidden = Act::ReLU, Act out = Act::None);

    int in_dim() const { return weights.front().cols(); }
    int out_dim() const { return weights.back().rows(); }

    Tape::Ref forward(Tape& tape, Tape::Ref x, bool trainable);
    std::vector<double> eval(const std::vector<double>& x) const;  // tape-free forward

    std::vector<ParamBlock*> blocks();
    std::vector<const ParamBlock*> blocks() const;
};

/// scores[i][j] = (q_i . k_j) / sqrt(d) for row vectors of shared width d.
std::vector<std::vector<double>> scaled_dot_scores(const std::vector<std::vector<double>>& queries,
                                                   const std::vector<std::vector<double>>& keys);

/// Row-wise stabilized softmax; every output row sums to 1.
std::vector<std::vector<double>> softmax_rows(const std::vector<std::vector<double>>& scores);

/// Standard Adam (beta1=0.9, beta2=0.999, eps=1e-8); zeroes grads after.
void adam_step(const std::vector<ParamBlock*>& blocks, double learning_rate);

/// Scales gradients so their global L2 norm is at most max_norm.
void clip_gradients(const std::vector<ParamBlock*>& blocks, double max_norm);

/// target <- tau * online + (1 - tau) * target, elementwise.
void soft_update(const std::vector<const ParamBlock*>& online,
                 const std::vector<ParamBlock*>& target, double tau);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    int worst_index = -1;
};

/// Compares the analytic gradient against central finite differences.
/// eval(with_grad) must recompute the loss from the blocks' current values
/// and, when with_grad, accumulate gradients into them.
GradCheckReport grad_check(const std::function<double(bool with_grad)>& eval,
                           const std::vector<ParamBlock*>& blocks, double fd_step = 1e-5);

}  // namespace af
