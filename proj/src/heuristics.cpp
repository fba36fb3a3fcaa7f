#include "af/heuristics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace af {

Allocation decode(const Chromosome& chromosome, int step, const std::vector<Task>& open_tasks,
                  const std::vector<Entity>& entities, int task_space) {
    const int n = static_cast<int>(entities.size());
    const std::size_t offset = static_cast<std::size_t>(step) * n;
    if (offset + n > chromosome.genes.size()) throw EncodingError("chromosome slice out of range");
    Allocation a;
    for (int i = 0; i < n; ++i) {
        const double gene = chromosome.genes[offset + i];
        if (gene < 0.0 || gene >= static_cast<double>(task_space) + 2.0)
            throw EncodingError("gene out of range");
        const int part = static_cast<int>(std::floor(gene));
        if (part < 1 || part > task_space) continue;               // unassigned
        if (part > static_cast<int>(open_tasks.size())) continue;  // absent task
        const Task& t = open_tasks[part - 1];
        if (t.completed) continue;
        if (entities[i].committed_to) continue;
        a.lists[t.id].push_back(entities[i].id);
    }
    return a;
}

namespace {

std::vector<double> evaluate_all(const std::vector<std::vector<double>>& population,
                                 const FitnessFn& fitness, ExecPolicy policy) {
    std::vector<double> out(population.size());
    parallel_for(static_cast<int>(population.size()),
                 [&](int i) { out[i] = fitness(population[i]); }, policy);
    return out;
}

void clamp_genes(std::vector<double>& genes, double gene_max) {
    for (double& g : genes) g = std::min(std::nextafter(gene_max, 0.0), std::max(0.0, g));
}

struct BestTracker {
    std::vector<double> best;
    double best_fitness = -std::numeric_limits<double>::infinity();
    std::vector<double> history;

    void offer(const std::vector<double>& x, double f) {
        if (f > best_fitness) {
            best_fitness = f;
            best = x;
        }
    }
    void close_iteration() { history.push_back(best_fitness); }
};

}  // namespace

EvolveResult ga_evolve(int length, double gene_max, const FitnessFn& fitness, int generations,
                       std::uint64_t seed, const MetaheuristicConfig& cfg) {
    Rng rng(substream(seed, "ga"));
    std::vector<std::vector<double>> pop(cfg.population, std::vector<double>(length));
    for (auto& x : pop)
        for (double& g : x) g = rng.uniform(0.0, gene_max);

    std::vector<double> fit = evaluate_all(pop, fitness, cfg.policy);
    BestTracker tracker;
    for (int i = 0; i < cfg.population; ++i) tracker.offer(pop[i], fit[i]);

    for (int gen = 0; gen < generations; ++gen) {
        // fitness-proportional selection (shifted to non-negative weights)
        const double lo = *std::min_element(fit.begin(), fit.end());
        std::vector<double> cum(fit.size());
        double total = 0.0;
        for (std::size_t i = 0; i < fit.size(); ++i) {
            total += fit[i] - lo + 1e-9;
            cum[i] = total;
        }
        auto select = [&]() -> const std::vector<double>& {
            const double u = rng.uniform(0.0, total);
            const auto it = std::lower_bound(cum.begin(), cum.end(), u);
            return pop[std::min<std::size_t>(it - cum.begin(), pop.size() - 1)];
        };

        std::vector<std::vector<double>> next;
        next.reserve(cfg.population);
        next.push_back(tracker.best);  // elitism of 1
        while (static_cast<int>(next.size()) < cfg.population) {
            std::vector<double> a = select(), b = select();
            if (rng.uniform() < cfg.crossover_rate && length > 1) {
                const int point = rng.uniform_int(1, length - 1);
                for (int g = point; g < length; ++g) std::swap(a[g], b[g]);
            }
            for (auto* child : {&a, &b}) {
                for (double& g : *child)
                    if (rng.uniform() < cfg.mutation_rate) g = rng.uniform(0.0, gene_max);
                if (static_cast<int>(next.size()) < cfg.population) next.push_back(*child);
            }
        }
        pop = std::move(next);
        fit = evaluate_all(pop, fitness, cfg.policy);
        for (int i = 0; i < cfg.population; ++i) tracker.offer(pop[i], fit[i]);
        tracker.close_iteration();
    }
    return {tracker.best, tracker.best_fitness, tracker.history};
}

EvolveResult pso_iterate(int length, double gene_max, const FitnessFn& fitness, int iterations,
                         std::uint64_t seed, const MetaheuristicConfig& cfg) {
    Rng rng(substream(seed, "pso"));
    const int swarm = cfg.population;
    std::vector<std::vector<double>> x(swarm, std::vector<double>(length));
    std::vector<std::vector<double>> v(swarm, std::vector<double>(length, 0.0));
    for (auto& p : x)
        for (double& g : p) g = rng.uniform(0.0, gene_max);

    std::vector<double> fit = evaluate_all(x, fitness, cfg.policy);
    std::vector<std::vector<double>> pbest = x;
    std::vector<double> pbest_fit = fit;
    BestTracker tracker;
    for (int i = 0; i < swarm; ++i) tracker.offer(x[i], fit[i]);

    for (int iter = 0; iter < iterations; ++iter) {
        for (int i = 0; i < swarm; ++i) {
            for (int g = 0; g < length; ++g) {
                const double r1 = rng.uniform(), r2 = rng.uniform();
                v[i][g] = cfg.inertia * v[i][g] + cfg.c1 * r1 * (pbest[i][g] - x[i][g]) +
                          cfg.c2 * r2 * (tracker.best[g] - x[i][g]);
                x[i][g] += v[i][g];
            }
            clamp_genes(x[i], gene_max);
        }
        fit = evaluate_all(x, fitness, cfg.policy);
        for (int i = 0; i < swarm; ++i) {
            if (fit[i] > pbest_fit[i]) {
                pbest_fit[i] = fit[i];
                pbest[i] = x[i];
            }
            tracker.offer(x[i], fit[i]);
        }
        tracker.close_iteration();
    }
    return {tracker.best, tracker.best_fitness, tracker.history};
}

EvolveResult sos_iterate(int length, double gene_max, const FitnessFn& fitness, int iterations,
                         std::uint64_t seed, const MetaheuristicConfig& cfg) {
    Rng rng(substream(seed, "sos"));
    const int eco = cfg.population;
    std::vector<std::vector<double>> x(eco, std::vector<double>(length));
    for (auto& p : x)
        for (double& g : p) g = rng.uniform(0.0, gene_max);
    std::vector<double> fit = evaluate_all(x, fitness, cfg.policy);
    BestTracker tracker;
    for (int i = 0; i < eco; ++i) tracker.offer(x[i], fit[i]);

    auto accept_if_better = [&](int i, std::vector<double> cand) {
        const double f = fitness(cand);
        if (f > fit[i]) {
            fit[i] = f;
            x[i] = std::move(cand);
            tracker.offer(x[i], f);
        }
    };

    for (int iter = 0; iter < iterations; ++iter) {
        for (int i = 0; i < eco; ++i) {
            // mutualism
            int j = rng.uniform_int(0, eco - 2);
            if (j >= i) ++j;
            const int bf1 = rng.uniform_int(1, 2), bf2 = rng.uniform_int(1, 2);
            std::vector<double> xi = x[i], xj = x[j];
            for (int g = 0; g < length; ++g) {
                const double mutual = (x[i][g] + x[j][g]) / 2.0;
                const double c = rng.uniform(-1.0, 1.0);
                xi[g] = x[i][g] + c * (tracker.best[g] - mutual * bf1);
                xj[g] = x[j][g] + c * (tracker.best[g] - mutual * bf2);
            }
            clamp_genes(xi, gene_max);
            clamp_genes(xj, gene_max);
            accept_if_better(i, std::move(xi));
            accept_if_better(j, std::move(xj));

            // commensalism
            int p = rng.uniform_int(0, eco - 2);
            if (p >= i) ++p;
            std::vector<double> xc = x[i];
            for (int g = 0; g < length; ++g)
                xc[g] = x[i][g] + rng.uniform(-1.0, 1.0) * (tracker.best[g] - x[p][g]);
            clamp_genes(xc, gene_max);
            accept_if_better(i, std::move(xc));

            // parasitism
            int q = rng.uniform_int(0, eco - 2);
            if (q >= i) ++q;
            std::vector<double> parasite = x[i];
            for (int g = 0; g < length; ++g)
                if (rng.uniform() < 0.5) parasite[g] = rng.uniform(0.0, gene_max);
            const double pf = fitness(parasite);
            if (pf > fit[q]) {
                fit[q] = pf;
                x[q] = std::move(parasite);
                tracker.offer(x[q], pf);
            }
        }
        tracker.close_iteration();
    }
    return {tracker.best, tracker.best_fitness, tracker.history};
}

EvolveResult run_metaheuristic(const std::string& algo, int length, double gene_max,
                               const FitnessFn& fitness, int iterations, std::uint64_t seed,
                               const MetaheuristicConfig& cfg) {
    if (algo == "ga") return ga_evolve(length, gene_max, fitness, iterations, seed, cfg);
    if (algo == "pso") return pso_iterate(length, gene_max, fitness, iterations, seed, cfg);
    if (algo == "sos") return sos_iterate(length, gene_max, fitness, iterations, seed, cfg);
    throw std::invalid_argument("unknown metaheuristic: " + algo);
}

double rolling_replan(Env& env, const std::string& algo, int opt_budget, std::uint64_t seed,
                      int horizon, int replan_every, const MetaheuristicConfig& cfg,
                      int* replan_count) {
    double episode_return = 0.0;
    bool done = false;
    int step_in_plan = 0;
    int replan_index = 0;
    Chromosome plan;
    int plan_task_space = 1;
    const int n = static_cast<int>(env.all_entities().size());

    while (!done) {
        if (step_in_plan % replan_every == 0) {
            plan_task_space = std::max<int>(1, static_cast<int>(env.open_tasks().size()));
            const double gene_max = static_cast<double>(plan_task_space) + 2.0;
            const FitnessFn fitness = [&env, horizon, plan_task_space, n](const std::vector<double>& genes) {
                const std::unique_ptr<Env> sim = env.clone();
                Chromosome c{genes};
                double total = 0.0;
                for (int h = 0; h < horizon; ++h) {
                    const Allocation a =
                        decode(c, h, sim->open_tasks(), sim->all_entities(), plan_task_space);
                    const StepOutcome out = sim->step(a);
                    total += out.manager_reward;
                    if (out.done) break;
                }
                return total;
            };
            const EvolveResult r =
                run_metaheuristic(algo, horizon * n, gene_max, fitness, opt_budget,
                                  substream(seed, "replan", static_cast<std::uint64_t>(replan_index)),
                                  cfg);
            plan = Chromosome{r.best};
            step_in_plan = 0;
            ++replan_index;
            if (replan_count) *replan_count = replan_index;
        }
        const Allocation a =
            decode(plan, step_in_plan, env.open_tasks(), env.all_entities(), plan_task_space);
        const StepOutcome out = env.step(a);
        episode_return += out.manager_reward;
        done = out.done;
        ++step_in_plan;
    }
    return episode_return;
}

OracleResult brute_force_optimum(const std::vector<Task>& tasks,
                                 const std::vector<Entity>& entities) {
    const int n = static_cast<int>(entities.size());
    const int N = static_cast<int>(tasks.size());
    double combos = 1.0;
    for (int i = 0; i < n; ++i) {
        combos *= static_cast<double>(N + 2);
        if (combos > 1e7)
            throw InstanceTooLarge("brute force refused: (N+2)^n exceeds 1e7");
    }
    OracleResult best;
    best.best_return = 0.0;  // empty allocation scores zero
    if (N == 0 || n == 0) return best;

    std::vector<int> assign(n, 0);  // 0 = unassigned, 1..N = task index + 1
    while (true) {
        Allocation a;
        for (int i = 0; i < n; ++i)
            if (assign[i] > 0) a.lists[tasks[assign[i] - 1].id].push_back(entities[i].id);
        const double score = manager_step_reward(tasks, a, entities);
        if (score > best.best_return) {
            best.best_return = score;
            best.allocation = a;
        }
        int pos = n - 1;
        while (pos >= 0 && assign[pos] == N) assign[pos--] = 0;
        if (pos < 0) break;
        ++assign[pos];
    }
    return best;
}

}  // namespace af
