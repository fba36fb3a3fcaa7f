// Closed-form evaluation and Monte-Carlo verification of the sequential vs
// pre-assign selection probabilities on the retain-the-almighty structure.
//
// Sequential: tasks T_1..T_{N-1} each uniformly pick one remaining member of
// their best set; success means the almighty entity survives for T_N.
// Pre-assign: the almighty lands uniformly on one of N tasks.
//
// Trials are embarrassingly parallel; the OpenMP kernel derives each trial's
// RNG from (seed, trial index) so it matches the serial reference count for
// count.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "af/parallel.hpp"
#include "af/rng.hpp"

namespace af {

struct BoundDomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Best-set structure: per earlier task, entities exclusive to it plus an
/// overlap set that always contains the almighty (index 0).
struct BoundInstance {
    int n = 0;  // entity count
    int N = 0;  // task count
    std::vector<int> exclusive_sizes;            // n_{a_i}, one per task 1..N-1
    std::vector<std::vector<int>> overlap_sets;  // entity indices, each contains 0

    void validate() const;
    /// sum(n_{a_i}) <= n-1, overlaps = {almighty} only.
    static BoundInstance balanced(int n, int N);
    static BoundInstance random_valid(int n, int N, std::uint64_t seed);
};

/// ((n-1)/(n+N-2))^(N-1); requires n >= 2, N >= 2.
double sequential_bound(int n, int N);

/// 1/N; requires N >= 1.
double preassign_probability(int N);

enum class SelectionStrategy { Sequential, PreAssign };

struct MonteCarloReport {
    long trials = 0;
    long successes = 0;
    double empirical = 0.0;
    double standard_error = 0.0;
};

/// Requires trials >= 10^4.
MonteCarloReport monte_carlo_selection(const BoundInstance& instance, SelectionStrategy strategy,
                                       long trials, std::uint64_t seed,
                                       ExecPolicy policy = ExecPolicy::Parallel);

/// Serial reference implementation; identical counts to the parallel kernel.
MonteCarloReport monte_carlo_selection_serial(const BoundInstance& instance,
                                              SelectionStrategy strategy, long trials,
                                              std::uint64_t seed);

struct BoundsReport {
    int n = 0, N = 0;
    double closed_form_sequential = 0.0;
    double closed_form_preassign = 0.0;
    MonteCarloReport sequential;
    MonteCarloReport preassign;
    bool pass = false;
};

/// Full verification run used by the verify-bounds subcommand.
BoundsReport verify_bounds(int n, int N, long trials, std::uint64_t seed,
                           ExecPolicy policy = ExecPolicy::Parallel);

std::string to_json(const BoundsReport& report);

}  // namespace af
