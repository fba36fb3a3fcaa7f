// The four benchmark environments behind one protocol, plus the
// zero-shot / few-shot perturbation generators.
//
//  retain  one-shot allocation; each task needs a member of its best set,
//          the almighty entity belongs to every set and is the only member
//          of the last (high-reward) task's set.
//  ept     power grid; peaked towers become tasks, neighbouring towers
//          transmit surplus at a per-edge wire cost; tasks live one step.
//  rbf     grid foraging; apples spawn periodically, stale ones decay,
//          committed entities travel and stay locked until resolution.
//  mt      material transportation; truck cargo is cleared on completion.

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "af/core.hpp"
#include "af/rng.hpp"

namespace af {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EnvSpec {
    std::string env = "rbf";
    int n_entities = 100;
    int k = 2;
    double map_extent = 20.0;
    int episode_steps = 50;
    std::uint64_t entity_seed = 1;
    double speed = 5.0;
    bool worker_mode = false;

    // retain
    int retain_tasks = 5;
    double retain_cost = 0.1;
    double retain_reward = 1.0;
    double retain_last_reward = 5.0;

    // ept
    double ept_peak_prob = 0.1;
    double ept_surplus_max = 10.0;
    double ept_need_min = 5.0;
    double ept_need_max = 15.0;
    double ept_completion_reward = 20.0;
    int ept_extra_edges = 10;

    // rbf
    int rbf_spawn_period = 5;
    int rbf_spawn_min = 5;
    int rbf_spawn_max = 10;
    std::vector<double> rbf_spawn_weights;  // over {spawn_min..spawn_max}; empty = uniform
    double rbf_req_min = 1.0;
    double rbf_req_max = 6.0;
    int rbf_decay_grace = 10;
    int rbf_decay_period = 5;
    double rbf_decay_factor = 0.9;
    double rbf_cost_dist = 0.05;
    double rbf_cost_res = 0.1;
    double rbf_reward_scale = 1.0;
    double rbf_res_min = 1.0;
    double rbf_res_max = 3.0;

    // mt
    double mt_rate = 1.0;
    double mt_req_min = 2.0;
    double mt_req_max = 8.0;
    double mt_cargo_min = 1.0;
    double mt_cargo_max = 5.0;
    double mt_cost_dist = 0.02;
    double mt_reward_scale = 1.5;

    double req_scale = 1.0;  // task-perturbation scale on requirement draws

    static EnvSpec retain_default();
    static EnvSpec ept_default();
    static EnvSpec rbf_default();
    static EnvSpec rbf_small();
    static EnvSpec mt_default();
    static EnvSpec mt_small();

    void validate() const;
};

EnvSpec load_env_spec(const std::string& path);
void save_env_spec(const std::string& path, const EnvSpec& spec);

enum class PerturbMode { ZeroShot, FewShot };

/// Entity-population perturbation: fresh attributes; halves the rbf count,
/// shrinks mt to 80%, keeps the ept count.
EnvSpec perturb_entities(const EnvSpec& base, PerturbMode mode, std::uint64_t seed);

/// Task perturbation: resampled spawn probabilities and requirement scale;
/// the entity population is unchanged.
EnvSpec perturb_tasks(const EnvSpec& base, std::uint64_t seed);

struct StepOutcome {
    double manager_reward = 0.0;
    std::vector<double> worker_rewards;  // by entity index; empty outside worker mode
    double worker_reward_sum = 0.0;
    std::vector<int> completed_task_ids;
    std::vector<double> completed_profits;  // aligned with completed_task_ids
    double paid_demand_sum = 0.0;  // demands of entities on tasks completed this step
    double resources_consumed = 0.0;  // cargo cleared on completions (mt)
    bool done = false;
};

class Env {
public:
    virtual ~Env() = default;

    const EnvSpec& spec() const { return spec_; }
    int step_count() const { return step_; }
    const std::vector<Task>& open_tasks() const { return tasks_; }
    const std::vector<Entity>& all_entities() const { return entities_; }
    std::vector<Entity> available_entities() const;

    virtual void reset(std::uint64_t seed) = 0;
    /// Applies an allocation over the currently open tasks and available
    /// entities. Throws InvalidAllocation (state unchanged) on bad input.
    virtual StepOutcome step(const Allocation& allocation) = 0;
    virtual std::unique_ptr<Env> clone() const = 0;

    /// Per-task candidate filter (ept: wire must exist).
    virtual bool eligible(const Entity& entity, const Task& task) const;

    /// Worker bids for the next allocation, by entity id. Only meaningful
    /// in worker mode; ignores committed entities.
    virtual void set_bids(const std::vector<std::pair<int, double>>& bids);

protected:
    explicit Env(EnvSpec spec) : spec_(std::move(spec)), rng_(0) {}
    void base_reset(std::uint64_t seed);

    EnvSpec spec_;
    int step_ = 0;
    std::vector<Task> tasks_;
    std::vector<Entity> entities_;
    Rng rng_;
    int next_task_id_ = 0;
};

std::unique_ptr<Env> make_env(const EnvSpec& spec);

}  // namespace af
