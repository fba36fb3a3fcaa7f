// Training machinery: replay buffer, exploration schedules, discrete-SAC
// updates for the pre-assign stage, REINFORCE for the select stage, and
// per-worker DDPG bidding agents.

#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "af/allocator.hpp"
#include "af/env.hpp"

namespace af {

struct Transition {
    FeatureSnapshot state;
    std::vector<int> choices;
    double reward = 0.0;
    FeatureSnapshot next_state;
    bool done = false;
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 1000) : capacity_(capacity) {}

    void push(Transition t);
    std::size_t size() const { return ring_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& at(std::size_t i) const { return ring_[i]; }

    /// Uniform without replacement within the batch (batch > size returns all).
    std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const;

private:
    std::size_t capacity_;
    std::vector<Transition> ring_;
    std::size_t cursor_ = 0;
};

struct ExplorationSchedule {
    double start = 1.0;
    double floor = 0.05;
    double decay = 0.9999;
    long steps = 0;

    double value() const { return std::max(floor, start * std::pow(decay, static_cast<double>(steps))); }
    void advance() { ++steps; }
};

/// L = alpha * sum(log pi(c_i | w_i)) - Q_tot. The contract's scalar form;
/// the tape version inside sac_actor_update mirrors it.
double sac_actor_loss_value(const PreAssignment& pre, double q_total_under_policy, double alpha);

/// TD target: r + gamma * bootstrap_max, zero bootstrap on terminal.
double critic_td_target(double reward, bool terminal, double gamma, double bootstrap_max);

/// Mean squared TD error, 1/2 ||y - q||^2 averaged over the batch.
double sac_critic_loss_value(const std::vector<double>& q, const std::vector<double>& targets);

/// Max of Q_target(next, a) over the actor's greedy joint choice plus
/// `samples` sampled joint choices. Exact on tiny instances by enumeration
/// when (m)^n <= 729.
double bootstrap_max_q(const Allocator& alloc, const FeatureSnapshot& next, int samples, Rng& rng);

/// One actor step from a replay batch; returns the mean actor loss.
double sac_actor_update(Allocator& alloc, const std::vector<const Transition*>& batch, double alpha,
                        double lr);

/// One critic step from a replay batch; returns the mean critic loss.
double sac_critic_update(Allocator& alloc, const std::vector<const Transition*>& batch, double gamma,
                         double lr, int bootstrap_samples, Rng& rng);

struct SelectUpdateStats {
    double policy_loss = 0.0;
    double value_loss = 0.0;
};

/// REINFORCE on the replayed selection episodes with a running-mean profit
/// baseline; fits f_v to per-task profit by squared error.
SelectUpdateStats select_policy_update(Allocator& alloc, const std::vector<SelectTrace>& traces,
                                       double lr, double& baseline_mean, long& baseline_count);

// ------------------------------------------------------------- workers

/// Fixed-width worker observation: own resources and position, the nearest
/// open task's requirement and distance, and the open-task count.
std::vector<double> worker_observation(const Entity& worker, const std::vector<Task>& open_tasks);
inline int worker_obs_dim(int k) { return 2 * k + 4; }

struct WorkerTransition {
    std::vector<double> obs;
    double bid = 0.0;
    double reward = 0.0;
    std::vector<double> next_obs;
    bool done = false;
};

class WorkerPool {
public:
    WorkerPool(int count, int k, int hidden, std::uint64_t seed);

    int count() const { return static_cast<int>(agents_.size()); }
    /// Deterministic bid (no exploration), always >= 0.
    double bid(int worker, const std::vector<double>& obs) const;
    double explore_bid(int worker, const std::vector<double>& obs, double sigma, Rng& rng) const;
    void push(int worker, WorkerTransition t);
    std::size_t buffer_size(int worker) const { return agents_[worker].buffer.size(); }

    struct UpdateStats {
        double actor_loss = 0.0;
        double critic_loss = 0.0;
    };
    UpdateStats update(int worker, Rng& rng, double gamma, double tau, double lr, int batch);

private:
    struct Agent {
        Mlp actor, critic;
        Mlp actor_target, critic_target;
        std::vector<WorkerTransition> buffer;
        std::size_t cursor = 0;
    };
    double actor_bid(const Mlp& actor, const std::vector<double>& obs) const;

    std::vector<Agent> agents_;
    std::size_t buffer_capacity_ = 1000;
};

// ------------------------------------------------------------- driver

struct TrainConfig {
    int iterations = 1000;
    int batch_size = 32;
    double lr = 1e-4;
    double gamma = 0.98;
    double tau = 0.005;
    double alpha = 0.05;
    int bootstrap_samples = 15;
    int updates_per_iteration = 1;
    std::uint64_t seed = 0;
    ExplorationSchedule epsilon{1.0, 0.05, 0.9999};
    ExplorationSchedule sigma{0.5, 0.05, 0.9999};
    std::function<void(const Transition&)> on_transition;  // test/diagnostic hook
};

struct EpisodeRow {
    int episode = 0;
    double manager_return = 0.0;
    double worker_return_mean = 0.0;
    double actor_loss = 0.0;
    double critic_loss = 0.0;
    double select_loss = 0.0;
    double epsilon = 0.0;
    double sigma = 0.0;
    double wall_ms = 0.0;
};

struct TrainResult {
    std::vector<EpisodeRow> rows;
};

/// Full training loop; workers may be null (item-entity environments).
TrainResult train_manager(Env& env, Allocator& alloc, const TrainConfig& config,
                          WorkerPool* workers = nullptr);

/// Mean greedy-rollout return over the given number of episodes.
double evaluate_return(Env& env, const Allocator& alloc, int episodes, std::uint64_t seed,
                       WorkerPool* workers = nullptr);

/// Snapshot matching what the allocator expects: available entities and open
/// tasks for attention modes, the full padded view for fixed-shape ones.
std::vector<Entity> allocation_entities(const Env& env, const Allocator& alloc);

}  // namespace af
