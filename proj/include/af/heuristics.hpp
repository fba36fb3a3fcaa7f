// GA / PSO / SOS baselines over a real-valued assignment encoding, the
// every-10-step re-planning driver, and a brute-force oracle for small
// instances.
//
// Encoding: one gene per entity per horizon step, each in [0, N+2). An
// integer part k with 1 <= k <= N assigns the entity to the k-th open task;
// 0 or anything above N leaves it unassigned.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "af/core.hpp"
#include "af/env.hpp"
#include "af/parallel.hpp"
#include "af/rng.hpp"

namespace af {

struct EncodingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InstanceTooLarge : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Chromosome {
    std::vector<double> genes;  // horizon * n, each in [0, N+2)
};

/// Decodes one horizon slice against the currently open tasks and available
/// entities; out-of-pool targets fall back to unassigned.
Allocation decode(const Chromosome& chromosome, int step, const std::vector<Task>& open_tasks,
                  const std::vector<Entity>& entities, int task_space);

using FitnessFn = std::function<double(const std::vector<double>&)>;

struct EvolveResult {
    std::vector<double> best;
    double best_fitness = 0.0;
    std::vector<double> best_per_iteration;  // best-so-far after each iteration
};

struct MetaheuristicConfig {
    int population = 100;
    double crossover_rate = 0.5;  // ga
    double mutation_rate = 0.05;  // ga
    double inertia = 0.5;         // pso
    double c1 = 1.5, c2 = 1.5;    // pso
    ExecPolicy policy = ExecPolicy::Parallel;
};

EvolveResult ga_evolve(int length, double gene_max, const FitnessFn& fitness, int generations,
                       std::uint64_t seed, const MetaheuristicConfig& cfg = {});

EvolveResult pso_iterate(int length, double gene_max, const FitnessFn& fitness, int iterations,
                         std::uint64_t seed, const MetaheuristicConfig& cfg = {});

EvolveResult sos_iterate(int length, double gene_max, const FitnessFn& fitness, int iterations,
                         std::uint64_t seed, const MetaheuristicConfig& cfg = {});

EvolveResult run_metaheuristic(const std::string& algo, int length, double gene_max,
                               const FitnessFn& fitness, int iterations, std::uint64_t seed,
                               const MetaheuristicConfig& cfg = {});

/// One episode driven by a metaheuristic re-optimized every `replan_every`
/// steps against a frozen clone of the environment. Returns the episode
/// return.
double rolling_replan(Env& env, const std::string& algo, int opt_budget, std::uint64_t seed,
                      int horizon = 10, int replan_every = 10,
                      const MetaheuristicConfig& cfg = {}, int* replan_count = nullptr);

struct OracleResult {
    Allocation allocation;
    double best_return = 0.0;
};

/// Exhaustive single-step optimum; refuses instances with (N+2)^n > 1e7.
/// Ties break toward the lexicographically smallest assignment vector.
OracleResult brute_force_optimum(const std::vector<Task>& tasks,
                                 const std::vector<Entity>& entities);

}  // namespace af
