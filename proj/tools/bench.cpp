// Serial vs OpenMP throughput for the two embarrassingly-parallel kernels:
// Monte Carlo selection trials and heuristic population evaluation.

#include <chrono>
#include <cstdio>

#include "af/bounds.hpp"
#include "af/core.hpp"
#include "af/env.hpp"
#include "af/heuristics.hpp"
#include "af/parallel.hpp"

namespace {

double seconds(const std::function<void()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main() {
    std::printf("threads available: %d\n\n", af::max_threads());

    {
        const af::BoundInstance inst = af::BoundInstance::balanced(10, 5);
        const long trials = 2'000'000;
        long serial_hits = 0, parallel_hits = 0;
        const double ts = seconds([&] {
            serial_hits = af::monte_carlo_selection_serial(inst, af::SelectionStrategy::Sequential,
                                                           trials, 7)
                              .successes;
        });
        const double tp = seconds([&] {
            parallel_hits =
                af::monte_carlo_selection(inst, af::SelectionStrategy::Sequential, trials, 7)
                    .successes;
        });
        std::printf("monte-carlo selection, %ld trials\n", trials);
        std::printf("  serial   %.3fs  (%ld hits)\n", ts, serial_hits);
        std::printf("  openmp   %.3fs  (%ld hits)  speedup %.2fx  identical=%s\n\n", tp,
                    parallel_hits, ts / tp, serial_hits == parallel_hits ? "yes" : "NO");
    }

    {
        const af::EnvSpec spec = af::EnvSpec::rbf_small();
        const auto env = af::make_env(spec);
        env->reset(3);
        const int n = spec.n_entities;
        const int horizon = 10;
        const int task_space = std::max<int>(1, static_cast<int>(env->open_tasks().size()));
        const af::FitnessFn fitness = [&](const std::vector<double>& genes) {
            const auto sim = env->clone();
            af::Chromosome c{genes};
            double total = 0.0;
            for (int h = 0; h < horizon; ++h) {
                const af::Allocation a =
                    af::decode(c, h, sim->open_tasks(), sim->all_entities(), task_space);
                total += sim->step(a).manager_reward;
            }
            return total;
        };
        af::MetaheuristicConfig serial_cfg, parallel_cfg;
        serial_cfg.policy = af::ExecPolicy::Serial;
        parallel_cfg.policy = af::ExecPolicy::Parallel;
        const int iters = 20;
        af::EvolveResult rs, rp;
        const double ts = seconds([&] {
            rs = af::ga_evolve(horizon * n, task_space + 2.0, fitness, iters, 11, serial_cfg);
        });
        const double tp = seconds([&] {
            rp = af::ga_evolve(horizon * n, task_space + 2.0, fitness, iters, 11, parallel_cfg);
        });
        std::printf("ga population evaluation, %d generations on rbf_small\n", iters);
        std::printf("  serial   %.3fs  (best %.3f)\n", ts, rs.best_fitness);
        std::printf("  openmp   %.3fs  (best %.3f)  speedup %.2fx  identical=%s\n", tp,
                    rp.best_fitness, ts / tp, rs.best_fitness == rp.best_fitness ? "yes" : "NO");
    }
    return 0;
}
