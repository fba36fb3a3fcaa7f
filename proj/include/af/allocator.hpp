// The two-stage allocation method.
//
// Stage one (pre-assign): a two-head attention module (TAM) embeds entities
// and tasks; the actor head turns scaled dot-product scores into a per-entity
// distribution over tasks, the critic head produces per-entity per-task
// values. A slot-attention hypernetwork (SHN) emits one mixing-weight row per
// entity so the AMIX mixer can combine any number of per-entity values into
// one total value estimate.
//
// Stage two (select): a pointer-style sampler picks entities from each task's
// candidate pool, updating the task's residual requirement after every pick,
// until the residual is zero or the pool is exhausted.
//
// Ablation modes replace pieces of the pipeline; the fixed-shape ones
// (NoTAM, NoAMIX) are built for one (n, m) and refuse anything else.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "af/core.hpp"
#include "af/diff.hpp"
#include "af/rng.hpp"

namespace af {

struct NoTasksError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FixedShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class AllocMode { TwoStage, SequentialPre, RandomOrderPre, NoTAM, NoAMIX };

AllocMode alloc_mode_from_string(const std::string& name);
std::string to_string(AllocMode mode);
bool is_fixed_shape(AllocMode mode);

/// Feature layouts fed to the embedding networks.
std::vector<double> entity_features(const Entity& e);
std::vector<double> task_features(const Task& t);
inline int entity_feature_dim(int k) { return k + 3; }
inline int task_feature_dim(int k) { return k + 3; }

/// State snapshot used by replay: raw feature rows, not live objects.
struct FeatureSnapshot {
    std::vector<std::vector<double>> entity_feats;
    std::vector<std::vector<double>> task_feats;
    int n() const { return static_cast<int>(entity_feats.size()); }
    int m() const { return static_cast<int>(task_feats.size()); }
};
FeatureSnapshot snapshot(const std::vector<Entity>& entities, const std::vector<Task>& tasks);

/// SHN output: one weight row (width h) and one bias entry per entity.
struct MixWeights {
    int n = 0, h = 0;
    std::vector<double> w;  // row-major n x h, non-negative
    std::vector<double> b;  // length n
};

struct PreAssignment {
    std::vector<int> choices;               // c_i in [0, m)
    std::vector<double> log_probs;          // log pi(c_i | w_i)
    std::vector<double> per_entity_values;  // Q_i(w_i, c_i)
};

/// Everything needed to replay one task's selection episode for training.
struct SelectTrace {
    int task_id = 0;
    double reward = 0.0, x = 0.0, y = 0.0;
    ResourceVector residual0;
    std::vector<int> candidate_ids;                // ordered by entity id
    std::vector<std::vector<double>> cand_feats;
    std::vector<ResourceVector> cand_resources;
    std::vector<int> picked;                       // indices into candidates
    std::vector<double> log_probs;
    double value_estimate = 0.0;  // f_v prediction at rollout time
    double profit = 0.0;          // R_i * C_i, filled when the task resolves
    bool resolved = false;
};

struct AllocateResult {
    Allocation allocation;
    PreAssignment pre;
    std::vector<SelectTrace> traces;
};

struct AllocatorParams {
    int k = 2;      // resource dimensions
    int d = 64;     // embedding and hidden width
    int slots = 8;  // SHN attention slot count

    Mlp f_h, f_g;  // actor head: entity / task embeddings
    Mlp f_o, f_q;  // critic head: entity / task embeddings

    Mlp shn_query;                    // entity -> query
    ParamBlock shn_keys, shn_values;  // learned slot banks, slots x d
    Mlp shn_weight_head;              // context -> h mixing weights (abs-mapped)
    Mlp shn_bias_head;                // context -> 1 bias
    ParamBlock amix_w2, amix_b2;      // second mixer layer, h -> 1 (abs-mapped)

    Mlp f_d;            // select: candidate encoder
    Mlp f_a;            // select: picked-entity context embedding
    Mlp f_v;            // select: value head (task + pooled candidates) -> 1
    ParamBlock sel_w1;  // d x (task_dim + d)
    ParamBlock sel_w2;  // d x d
    ParamBlock sel_v;   // d

    static AllocatorParams make(int k, int d, uint64_t seed, int slots = 8);

    std::vector<ParamBlock*> actor_blocks();
    std::vector<ParamBlock*> critic_blocks();  // f_o, f_q, SHN, AMIX
    std::vector<ParamBlock*> select_blocks();  // f_d, f_a, W1, W2, v
    std::vector<ParamBlock*> value_head_blocks();
    std::vector<ParamBlock*> all_blocks();
};

class Allocator {
public:
    Allocator(int k, int d, uint64_t seed, AllocMode mode = AllocMode::TwoStage,
              int fixed_n = -1, int fixed_m = -1);

    AllocMode mode() const { return mode_; }
    int k() const { return params_.k; }
    int d() const { return params_.d; }

    // ---- forward path (tape-free) ----

    /// Row-stochastic n x m pre-assign distribution. Throws NoTasksError on
    /// an empty task list and FixedShapeError in fixed-shape modes when the
    /// instance shape differs from construction.
    std::vector<std::vector<double>> pre_assign_policy(const std::vector<Entity>& entities,
                                                       const std::vector<Task>& tasks) const;
    std::vector<std::vector<double>> pre_assign_policy(const FeatureSnapshot& s) const;

    /// n x m per-entity per-task value estimates.
    std::vector<std::vector<double>> pre_assign_values(const std::vector<Entity>& entities,
                                                       const std::vector<Task>& tasks,
                                                       bool use_target = false) const;
    std::vector<std::vector<double>> pre_assign_values(const FeatureSnapshot& s,
                                                       bool use_target = false) const;

    MixWeights shn_generate(const std::vector<Entity>& entities, bool use_target = false) const;
    MixWeights shn_generate(const FeatureSnapshot& s, bool use_target = false) const;

    double amix_total(const std::vector<double>& per_entity_values, const MixWeights& mix,
                      bool use_target = false) const;

    /// Total value of the joint pre-assignment `choices` for this state.
    double q_total(const FeatureSnapshot& s, const std::vector<int>& choices,
                   bool use_target = false) const;

    struct SelectResult {
        std::vector<int> picked_ids;
        SelectTrace trace;
    };
    /// Samples entities without replacement until the residual is zero or
    /// candidates run out. Candidates must be uncommitted.
    SelectResult select_for_task(const Task& task, const std::vector<Entity>& candidates,
                                 Rng& rng, bool greedy = false) const;

    /// Full two-stage allocation (or the mode's replacement for stage one).
    /// forced_choices, when given, replaces the sampled pre-assignment (used
    /// by epsilon-greedy exploration). Fixed-shape modes expect the full
    /// entity population (committed entities are skipped when bucketing) and
    /// truncate/pad the open-task list to the construction width.
    AllocateResult allocate(const std::vector<Task>& tasks, const std::vector<Entity>& entities,
                            Rng& rng, bool greedy = false,
                            const std::vector<int>* forced_choices = nullptr) const;

    /// Feature snapshot as the mode expects it (padded for fixed shapes).
    FeatureSnapshot make_snapshot(const std::vector<Task>& tasks,
                                  const std::vector<Entity>& entities) const;
    int fixed_m() const { return fixed_m_; }
    int fixed_n() const { return fixed_n_; }

    // ---- tape path (training) ----

    /// Row-major n*m policy matrix node, rows softmax-normalized.
    Tape::Ref policy_matrix_node(Tape& tape, const FeatureSnapshot& s, bool trainable);
    /// Sum of log pi(c_i | w_i), computed stably via log-softmax of the rows.
    Tape::Ref choice_logprob_node(Tape& tape, const FeatureSnapshot& s,
                                  const std::vector<int>& choices, bool trainable);
    /// Sum over entities of the exact negative entropy sum_j pi_ij log pi_ij.
    Tape::Ref policy_neg_entropy_node(Tape& tape, const FeatureSnapshot& s, bool trainable);
    /// Row-major n*m per-entity value matrix node.
    Tape::Ref value_matrix_node(Tape& tape, const FeatureSnapshot& s, bool trainable);
    /// Q_tot(w, c) with critic-side blocks trainable when requested.
    /// value_matrix_out, when non-null, receives the per-entity value matrix
    /// node (regularization hook); unused by the NoAMIX global critic.
    Tape::Ref qtot_node(Tape& tape, const FeatureSnapshot& s, const std::vector<int>& choices,
                        bool trainable, Tape::Ref* value_matrix_out = nullptr);
    /// Q_tot under the (differentiable) policy matrix: per-entity values are
    /// policy-weighted expectations; critic blocks are held constant.
    Tape::Ref qtot_under_policy_node(Tape& tape, const FeatureSnapshot& s, Tape::Ref policy_node);
    /// Teacher-forced replay of a selection episode; one log-prob node per pick.
    std::vector<Tape::Ref> select_logprob_nodes(Tape& tape, const SelectTrace& trace,
                                                bool trainable);
    /// f_v prediction node for a trace.
    Tape::Ref select_value_node(Tape& tape, const SelectTrace& trace, bool trainable);

    // ---- parameters ----
    AllocatorParams& params() { return params_; }
    const AllocatorParams& params() const { return params_; }
    std::vector<ParamBlock*> actor_blocks();
    std::vector<ParamBlock*> critic_blocks();
    std::vector<ParamBlock*> select_blocks();
    std::vector<ParamBlock*> value_head_blocks();
    std::vector<ParamBlock*> checkpoint_blocks();
    void sync_targets_hard();
    void soft_update_targets(double tau);

    static std::vector<int> greedy_choices(const std::vector<std::vector<double>>& policy);
    static std::vector<int> sample_choices(const std::vector<std::vector<double>>& policy, Rng& rng);

private:
    void require_shape(int n, int m) const;
    std::vector<double> flat_features(const FeatureSnapshot& s) const;
    std::vector<Tape::Ref> score_row_nodes(Tape& tape, const FeatureSnapshot& s, bool trainable);

    AllocMode mode_;
    AllocatorParams params_;
    AllocatorParams target_;  // critic-side target copies; actor side unused

    // Fixed-shape ablation networks.
    int fixed_n_ = -1, fixed_m_ = -1;
    std::optional<Mlp> fixed_actor_, fixed_critic_, fixed_critic_target_;
    std::optional<Mlp> global_qtot_, global_qtot_target_;
};

}  // namespace af
