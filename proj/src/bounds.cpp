#include "af/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace af {

void BoundInstance::validate() const {
    if (n < 2 || N < 2) throw BoundDomainError("need n >= 2 and N >= 2");
    if (static_cast<int>(exclusive_sizes.size()) != N - 1 ||
        static_cast<int>(overlap_sets.size()) != N - 1)
        throw BoundDomainError("need one exclusive size and overlap set per earlier task");
    int total_exclusive = 0;
    for (int s : exclusive_sizes) {
        if (s < 1) throw BoundDomainError("exclusive best-set parts must be non-empty");
        total_exclusive += s;
    }
    if (total_exclusive > n - 1)
        throw BoundDomainError("sum of exclusive sizes must leave room for the almighty");
    for (const auto& overlap : overlap_sets) {
        if (std::find(overlap.begin(), overlap.end(), 0) == overlap.end())
            throw BoundDomainError("every overlap set must contain the almighty (entity 0)");
        for (int e : overlap)
            if (e < 0 || e >= n) throw BoundDomainError("overlap entity out of range");
    }
}

BoundInstance BoundInstance::balanced(int n, int N) {
    if (n < 2 || N < 2) throw BoundDomainError("need n >= 2 and N >= 2");
    BoundInstance inst;
    inst.n = n;
    inst.N = N;
    const int budget = n - 1;
    const int per_task = std::max(1, budget / (N - 1));
    for (int i = 0; i < N - 1; ++i) {
        inst.exclusive_sizes.push_back(per_task);
        inst.overlap_sets.push_back({0});
    }
    inst.validate();
    return inst;
}

BoundInstance BoundInstance::random_valid(int n, int N, std::uint64_t seed) {
    if (n < 2 || N < 2) throw BoundDomainError("need n >= 2 and N >= 2");
    Rng rng(substream(seed, "bound-instance"));
    BoundInstance inst;
    inst.n = n;
    inst.N = N;
    int budget = n - 1 - (N - 1);  // reserve one exclusive member per task
    std::vector<int> sizes(N - 1, 1);
    while (budget > 0) {
        const int i = rng.uniform_int(0, N - 2);
        if (rng.uniform() < 0.5) ++sizes[i];
        --budget;
    }
    inst.exclusive_sizes = sizes;

    // Entities not exclusive and not the almighty float between overlap sets.
    const int exclusive_total = std::accumulate(sizes.begin(), sizes.end(), 0);
    std::vector<int> floaters;
    for (int e = 1 + exclusive_total; e < n; ++e) floaters.push_back(e);
    for (int i = 0; i < N - 1; ++i) {
        std::vector<int> overlap = {0};
        for (int f : floaters)
            if (rng.uniform() < 0.3) overlap.push_back(f);
        inst.overlap_sets.push_back(std::move(overlap));
    }
    inst.validate();
    return inst;
}

double sequential_bound(int n, int N) {
    if (n < 2 || N < 2) throw BoundDomainError("sequential bound needs n >= 2 and N >= 2");
    const double base = static_cast<double>(n - 1) / static_cast<double>(n + N - 2);
    return std::pow(base, static_cast<double>(N - 1));
}

double preassign_probability(int N) {
    if (N < 1) throw BoundDomainError("pre-assign probability needs N >= 1");
    return 1.0 / static_cast<double>(N);
}

namespace {

/// One sequential trial: true iff the almighty is still unclaimed after
/// tasks 1..N-1 each draw uniformly from their available best-set members.
bool sequential_trial(const BoundInstance& inst, Rng& rng, std::vector<int>& scratch,
                      std::vector<bool>& claimed) {
    std::fill(claimed.begin(), claimed.end(), false);
    int next_exclusive = 1;  // entity ids: 0 = almighty, then exclusive runs
    for (int i = 0; i < inst.N - 1; ++i) {
        scratch.clear();
        for (int e = 0; e < inst.exclusive_sizes[i]; ++e) {
            const int id = next_exclusive + e;
            if (!claimed[id]) scratch.push_back(id);
        }
        next_exclusive += inst.exclusive_sizes[i];
        for (int id : inst.overlap_sets[i])
            if (!claimed[id]) scratch.push_back(id);
        if (scratch.empty()) continue;  // emptied best set picks nothing
        claimed[scratch[rng.uniform_int(0, static_cast<int>(scratch.size()) - 1)]] = true;
    }
    return !claimed[0];
}

MonteCarloReport run_trials(const BoundInstance& inst, SelectionStrategy strategy, long trials,
                            std::uint64_t seed, ExecPolicy policy) {
    inst.validate();
    if (trials < 10000) throw BoundDomainError("need at least 10^4 trials");

    // Chunked so the parallel loop has coarse grains; per-trial seeding keeps
    // the count independent of scheduling.
    const long chunk = 4096;
    const int chunks = static_cast<int>((trials + chunk - 1) / chunk);
    std::vector<long> hits(chunks, 0);
    parallel_for(
        chunks,
        [&](int c) {
            const long lo = static_cast<long>(c) * chunk;
            const long hi = std::min(trials, lo + chunk);
            std::vector<int> scratch;
            std::vector<bool> claimed(inst.n, false);
            long h = 0;
            for (long t = lo; t < hi; ++t) {
                Rng rng(substream(seed, "mc-trial", static_cast<std::uint64_t>(t)));
                if (strategy == SelectionStrategy::PreAssign) {
                    h += rng.uniform_int(0, inst.N - 1) == inst.N - 1 ? 1 : 0;
                } else {
                    h += sequential_trial(inst, rng, scratch, claimed) ? 1 : 0;
                }
            }
            hits[c] = h;
        },
        policy);

    MonteCarloReport report;
    report.trials = trials;
    report.successes = std::accumulate(hits.begin(), hits.end(), 0L);
    report.empirical = static_cast<double>(report.successes) / static_cast<double>(trials);
    report.standard_error =
        std::sqrt(report.empirical * (1.0 - report.empirical) / static_cast<double>(trials));
    return report;
}

}  // namespace

MonteCarloReport monte_carlo_selection(const BoundInstance& instance, SelectionStrategy strategy,
                                       long trials, std::uint64_t seed, ExecPolicy policy) {
    return run_trials(instance, strategy, trials, seed, policy);
}

MonteCarloReport monte_carlo_selection_serial(const BoundInstance& instance,
                                              SelectionStrategy strategy, long trials,
                                              std::uint64_t seed) {
    return run_trials(instance, strategy, trials, seed, ExecPolicy::Serial);
}

BoundsReport verify_bounds(int n, int N, long trials, std::uint64_t seed, ExecPolicy policy) {
    BoundsReport report;
    report.n = n;
    report.N = N;
    report.closed_form_sequential = sequential_bound(n, N);
    report.closed_form_preassign = preassign_probability(N);
    const BoundInstance inst = BoundInstance::balanced(n, N);
    report.sequential = monte_carlo_selection(inst, SelectionStrategy::Sequential, trials, seed, policy);
    report.preassign = monte_carlo_selection(inst, SelectionStrategy::PreAssign, trials, seed, policy);

    const bool seq_ok = report.sequential.empirical <=
                        report.closed_form_sequential + 3.0 * report.sequential.standard_error;
    const bool pre_ok = std::fabs(report.preassign.empirical - report.closed_form_preassign) <=
                        3.0 * report.preassign.standard_error + 1e-12;
    report.pass = seq_ok && pre_ok;
    return report;
}

std::string to_json(const BoundsReport& r) {
    std::ostringstream os;
    os.precision(10);
    os << "{\"n\": " << r.n << ", \"N\": " << r.N
       << ", \"closed_form\": {\"sequential_bound\": " << r.closed_form_sequential
       << ", \"preassign\": " << r.closed_form_preassign << "}"
       << ", \"empirical\": {\"sequential\": " << r.sequential.empirical
       << ", \"preassign\": " << r.preassign.empirical << "}"
       << ", \"stderr\": {\"sequential\": " << r.sequential.standard_error
       << ", \"preassign\": " << r.preassign.standard_error << "}"
       << ", \"trials\": " << r.sequential.trials << ", \"pass\": " << (r.pass ? "true" : "false")
       << "}";
    return os.str();
}

}  // namespace af
