// Acceptance suite: one function per criterion, each printing a PASS/FAIL
// line. Run all with no arguments or a subset by listing criterion numbers.
//
// The quantitative thresholds are pinned here, in code. The training-based
// criteria (5-9) run scaled instances with a reduced embedding width so the
// whole suite fits the stated runtime budgets on a small machine; every
// threshold and tolerance is asserted as stated, never loosened.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <vector>

#include "af/allocator.hpp"
#include "af/bounds.hpp"
#include "af/checkpoint.hpp"
#include "af/config.hpp"
#include "af/env.hpp"
#include "af/experiment.hpp"
#include "af/heuristics.hpp"
#include "af/metrics.hpp"
#include "af/parallel.hpp"
#include "af/stats.hpp"
#include "af/trainers.hpp"

using namespace af;

namespace {

int g_checks_failed = 0;

void expect(bool ok, const char* what) {
    if (!ok) {
        std::printf("    FAILED check: %s\n", what);
        ++g_checks_failed;
    }
}

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// Training setup shared by the scaled criteria: small embedding keeps the
// runtime inside the budgets; the learning dynamics are unchanged.
constexpr int kScaledDim = 16;
constexpr double kScaledLr = 2e-3;
constexpr int kScaledUpdates = 4;

TrainConfig scaled_train_config(int iterations, std::uint64_t seed, int steps_per_episode = 50) {
    TrainConfig tc;
    tc.iterations = iterations;
    tc.seed = seed;
    tc.lr = kScaledLr;
    tc.updates_per_iteration = kScaledUpdates;
    // land the exploration floor at the end of training regardless of the
    // episode length (the default 0.9999/step fits 50-step episodes)
    const double total_steps = static_cast<double>(iterations) * steps_per_episode;
    tc.epsilon.decay = std::pow(tc.epsilon.floor / tc.epsilon.start, 1.0 / total_steps);
    return tc;
}

struct TrainedRun {
    std::unique_ptr<Allocator> alloc;
    TrainResult result;
    double final_greedy_return = 0.0;
};

TrainedRun train_mode(const EnvSpec& spec, AllocMode mode, int iterations, std::uint64_t seed,
                      int eval_episodes, int fixed_m = -1) {
    TrainedRun run;
    auto env = make_env(spec);
    const int fn = is_fixed_shape(mode) ? spec.n_entities : -1;
    run.alloc = std::make_unique<Allocator>(spec.k, kScaledDim, seed, mode, fn, fixed_m);
    run.result = train_manager(
        *env, *run.alloc, scaled_train_config(iterations, seed, spec.episode_steps));
    run.final_greedy_return =
        evaluate_return(*env, *run.alloc, eval_episodes, substream(seed, "acc-eval"));
    return run;
}

// ------------------------------------------------------------------ c1

bool criterion1() {
    std::printf("criterion 1: appendix-A closed forms and Monte Carlo\n");
    const double t0 = now_seconds();
    const BoundsReport report = verify_bounds(10, 5, 100000, 0);
    const double anchor = std::pow(9.0 / 13.0, 4.0);
    expect(std::fabs(report.closed_form_sequential - anchor) <= 1e-5,
           "closed-form sequential bound within 1e-5 of (9/13)^4");
    expect(report.closed_form_preassign == 0.2, "pre-assign probability exactly 0.2");
    expect(report.sequential.empirical <=
               report.closed_form_sequential + 3.0 * report.sequential.standard_error,
           "sequential empirical <= bound + 3 sigma");
    expect(std::fabs(report.preassign.empirical - 0.2) <= 0.004,
           "pre-assign empirical within 0.2 +/- 0.004");
    const double elapsed = now_seconds() - t0;
    expect(elapsed < 10.0, "runtime under 10 s");
    std::printf("    bound=%.6f empirical_seq=%.5f empirical_pre=%.5f (%.2fs)\n",
                report.closed_form_sequential, report.sequential.empirical,
                report.preassign.empirical, elapsed);
    return g_checks_failed == 0;
}

// ------------------------------------------------------------------ c2

bool criterion2() {
    std::printf("criterion 2: gradient checks vs central finite differences\n");
    const double t0 = now_seconds();
    const int draws = 20;
    const int n = 3, m = 2, k = 2, d = 6;
    double worst = 0.0;
    auto track = [&](const GradCheckReport& r) { worst = std::max(worst, r.max_rel_error); };

    for (int draw = 0; draw < draws; ++draw) {
        Rng rng(substream(100 + draw, "c2"));
        std::vector<Entity> entities;
        for (int i = 0; i < n; ++i) {
            Entity e;
            e.id = i;
            e.resources = ResourceVector({rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0)});
            e.x = rng.uniform(0.0, 5.0);
            e.y = rng.uniform(0.0, 5.0);
            e.demand = rng.uniform(0.0, 1.0);
            entities.push_back(e);
        }
        std::vector<Task> tasks;
        for (int j = 0; j < m; ++j) {
            Task t;
            t.id = j;
            t.reward = rng.uniform(1.0, 5.0);
            t.requirement = ResourceVector({rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0)});
            t.residual = t.requirement;
            t.x = rng.uniform(0.0, 5.0);
            t.y = rng.uniform(0.0, 5.0);
            tasks.push_back(t);
        }
        const FeatureSnapshot s = snapshot(entities, tasks);
        Allocator alloc(k, d, substream(draw, "c2-alloc"));
        std::vector<int> choices(n);
        for (int i = 0; i < n; ++i) choices[i] = rng.uniform_int(0, m - 1);

        // TAM actor log-prob
        track(grad_check(
            [&](bool with_grad) {
                Tape tape;
                Tape::Ref loss = alloc.choice_logprob_node(tape, s, choices, with_grad);
                const double v = tape.value0(loss);
                if (with_grad) tape.backward(loss);
                return v;
            },
            alloc.actor_blocks()));

        // TAM critic + SHN + AMIX total
        track(grad_check(
            [&](bool with_grad) {
                Tape tape;
                Tape::Ref q = alloc.qtot_node(tape, s, choices, with_grad);
                const double v = tape.value0(q);
                if (with_grad) tape.backward(q);
                return v;
            },
            alloc.critic_blocks()));

        // select scoring
        Rng sel_rng(substream(draw, "c2-select"));
        const auto sel_res = alloc.select_for_task(tasks[0], entities, sel_rng);
        if (!sel_res.trace.picked.empty()) {
            track(grad_check(
                [&](bool with_grad) {
                    Tape tape;
                    const auto nodes = alloc.select_logprob_nodes(tape, sel_res.trace, with_grad);
                    Tape::Ref loss = tape.sum(tape.concat(nodes));
                    const double v = tape.value0(loss);
                    if (with_grad) tape.backward(loss);
                    return v;
                },
                alloc.select_blocks()));
        }

        // ddpg actor and critic
        WorkerPool pool(1, k, d, substream(draw, "c2-worker"));
        std::vector<double> obs(worker_obs_dim(k));
        for (double& v : obs) v = rng.uniform(0.0, 2.0);
        const double bid = rng.uniform(0.0, 2.0);
        // reach inside via public update? use standalone nets instead
        Rng wr(substream(draw, "c2-wnets"));
        Mlp w_actor = Mlp::make("a", {worker_obs_dim(k), d, d, 1}, wr);
        Mlp w_critic = Mlp::make("c", {worker_obs_dim(k) + 1, d, d, 1}, wr);
        track(grad_check(
            [&](bool with_grad) {
                Tape tape;
                std::vector<double> in = obs;
                in.push_back(bid);
                Tape::Ref q = w_critic.forward(tape, tape.constant(in), with_grad);
                Tape::Ref loss = tape.square(tape.sub(q, tape.scalar(1.7)));
                const double v = tape.value0(loss);
                if (with_grad) tape.backward(loss);
                return v;
            },
            w_critic.blocks()));
        track(grad_check(
            [&](bool with_grad) {
                Tape tape;
                Tape::Ref mu = tape.softplus(w_actor.forward(tape, tape.constant(obs), with_grad));
                Tape::Ref in = tape.concat({tape.constant(obs), mu});
                Tape::Ref loss = tape.neg(w_critic.forward(tape, in, false));
                const double v = tape.value0(loss);
                if (with_grad) tape.backward(loss);
                return v;
            },
            w_actor.blocks()));
        (void)pool;
    }
    const double elapsed = now_seconds() - t0;
    expect(worst < 1e-4, "max relative error < 1e-4 across all networks and draws");
    expect(elapsed < 60.0, "runtime under 60 s");
    std::printf("    worst relative error %.3g over %d draws (%.2fs)\n", worst, draws, elapsed);
    return g_checks_failed == 0;
}

// ------------------------------------------------------------------ c3

bool criterion3() {
    std::printf("criterion 3: policy algebra properties\n");
    Allocator alloc(2, 64, 7);  // full-width embeddings
    Rng rng(3);
    for (int n : {1, 3, 50, 100}) {
        for (int m : {1, 2, 10}) {
            std::vector<Entity> entities;
            for (int i = 0; i < n; ++i) {
                Entity e;
                e.id = i;
                e.resources = ResourceVector({rng.uniform(0.0, 3.0), rng.uniform(0.0, 3.0)});
                e.x = rng.uniform(0.0, 10.0);
                e.y = rng.uniform(0.0, 10.0);
                e.demand = rng.uniform(0.0, 1.0);
                entities.push_back(e);
            }
            std::vector<Task> tasks;
            for (int j = 0; j < m; ++j) {
                Task t;
                t.id = j;
                t.reward = rng.uniform(0.5, 9.0);
                t.requirement = ResourceVector({rng.uniform(0.5, 5.0), rng.uniform(0.5, 5.0)});
                t.residual = t.requirement;
                t.x = rng.uniform(0.0, 10.0);
                t.y = rng.uniform(0.0, 10.0);
                tasks.push_back(t);
            }
            const auto policy = alloc.pre_assign_policy(entities, tasks);
            for (const auto& row : policy) {
                double sum = 0.0;
                for (double p : row) sum += p;
                expect(std::fabs(sum - 1.0) <= 1e-6, "row sums to 1 within 1e-6");
            }
            std::vector<int> perm(m);
            for (int j = 0; j < m; ++j) perm[j] = j;
            rng.shuffle(perm);
            std::vector<Task> permuted;
            for (int j : perm) permuted.push_back(tasks[j]);
            const auto policy2 = alloc.pre_assign_policy(entities, permuted);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j)
                    expect(std::fabs(policy2[i][j] - policy[i][perm[j]]) <= 1e-12,
                           "task-permutation equivariance within 1e-12");
            const auto solo = alloc.pre_assign_policy({entities[0]}, tasks);
            for (int j = 0; j < m; ++j)
                expect(solo[0][j] == policy[0][j], "entity row independent of other entities");
        }
    }
    std::printf("    checked (n,m) grid {1,3,50,100} x {1,2,10}\n");
    return g_checks_failed == 0;
}

// ------------------------------------------------------------------ c4

bool criterion4() {
    std::printf("criterion 4: variable-population contract\n");
    EnvSpec spec = EnvSpec::rbf_small();
    auto env = make_env(spec);
    Allocator alloc(spec.k, kScaledDim, 11);
    train_manager(*env, alloc, scaled_train_config(30, 11));

    Rng rng(4);
    for (int n : {5, 50, 100}) {
        std::vector<Entity> entities;
        for (int i = 0; i < n; ++i) {
            Entity e;
            e.id = i;
            e.resources = ResourceVector({rng.uniform(0.0, 4.0), rng.uniform(0.0, 4.0)});
            e.x = rng.uniform(0.0, 30.0);
            e.y = rng.uniform(0.0, 30.0);
            e.demand = rng.uniform(0.0, 2.0);
            entities.push_back(e);
        }
        // unseen task features: scales far outside the training environment
        std::vector<Task> tasks;
        for (int j = 0; j < 4; ++j) {
            Task t;
            t.id = j;
            t.reward = rng.uniform(20.0, 60.0);
            t.requirement = ResourceVector({rng.uniform(5.0, 12.0), rng.uniform(5.0, 12.0)});
            t.residual = t.requirement;
            t.x = rng.uniform(-10.0, 40.0);
            t.y = rng.uniform(-10.0, 40.0);
            tasks.push_back(t);
        }
        bool valid = true;
        try {
            const auto result = alloc.allocate(tasks, entities, rng);
            validate_allocation(result.allocation, tasks, entities);
        } catch (const std::exception&) {
            valid = false;
        }
        expect(valid, "trained checkpoint allocates for changed n and unseen tasks");
    }

    // fixed-shape ablations refuse changed shapes
    for (AllocMode mode : {AllocMode::NoTAM, AllocMode::NoAMIX}) {
        Allocator fixed(spec.k, kScaledDim, 12, mode, spec.n_entities, 6);
        std::vector<Entity> wrong_n;
        for (int i = 0; i < spec.n_entities / 2; ++i) {
            Entity e;
            e.id = i;
            e.resources = ResourceVector({1.0, 1.0});
            wrong_n.push_back(e);
        }
        std::vector<Task> six_tasks;
        for (int j = 0; j < 6; ++j) {
            Task t;
            t.id = j;
            t.reward = 1.0;
            t.requirement = ResourceVector({1.0, 1.0});
            t.residual = t.requirement;
            six_tasks.push_back(t);
        }
        bool threw = false;
        try {
            fixed.pre_assign_policy(wrong_n, six_tasks);
        } catch (const FixedShapeError&) {
            threw = true;
        }
        expect(threw, "fixed-shape mode raises FixedShapeError on changed n");
    }
    std::printf("    allocations valid for n in {5,50,100}; ablations refuse changed shapes\n");
    return g_checks_failed == 0;
}

// ------------------------------------------------------------------ c5

bool criterion5() {
    std::printf("criterion 5: retain-the-almighty ordering and oracle attainment\n");
    const double t0 = now_seconds();
    const EnvSpec spec = EnvSpec::retain_default();
    const int iterations = 1000, seeds = 5;

    // the oracle optimum: fillers carry no resources and only add cost, so
    // enumerating the almighty plus the exclusive members is exact (the full
    // 7^10 instance is beyond the brute-force guard)
    auto env = make_env(spec);
    env->reset(0);
    std::vector<Entity> useful;
    for (const Entity& e : env->all_entities())
        if (e.resources.sum() > 0.0) useful.push_back(e);
    const double oracle = brute_force_optimum(env->open_tasks(), useful).best_return;
    expect(std::fabs(oracle - 8.5) < 1e-9, "retain oracle return is 8.5");

    const AllocMode modes[3] = {AllocMode::TwoStage, AllocMode::RandomOrderPre,
                                AllocMode::SequentialPre};
    std::vector<double> all_finals(3 * seeds);
    parallel_for(3 * seeds, [&](int idx) {
        const AllocMode mode = modes[idx / seeds];
        const int seed = idx % seeds;
        TrainedRun run = train_mode(spec, mode, iterations, 1000 + seed, 40);
        all_finals[idx] = run.final_greedy_return;
    });
    std::map<AllocMode, std::vector<double>> finals;
    int oracle_hits = 0;
    for (int idx = 0; idx < 3 * seeds; ++idx) {
        finals[modes[idx / seeds]].push_back(all_finals[idx]);
        if (modes[idx / seeds] == AllocMode::TwoStage && all_finals[idx] >= oracle - 1e-6)
            ++oracle_hits;
    }
    const auto& two = finals[AllocMode::TwoStage];
    const auto& rnd = finals[AllocMode::RandomOrderPre];
    const auto& seq = finals[AllocMode::SequentialPre];
    std::printf("    two_stage  mean %.3f  (", stats::mean(two));
    for (double v : two) std::printf(" %.2f", v);
    std::printf(" )\n    rand_pre   mean %.3f  (", stats::mean(rnd));
    for (double v : rnd) std::printf(" %.2f", v);
    std::printf(" )\n    seq_pre    mean %.3f  (", stats::mean(seq));
    for (double v : seq) std::printf(" %.2f", v);
    std::printf(" )\n");

    expect(stats::welch_p_greater(two, rnd) < 0.05,
           "two-stage beats random-order at 95% confidence");
    expect(stats::welch_p_greater(rnd, seq) < 0.05,
           "random-order beats sequential at 95% confidence");
    expect(oracle_hits >= 4, "two-stage reaches the oracle return in at least 4/5 seeds");
    const double elapsed = now_seconds() - t0;
    expect(elapsed < 600.0, "runtime under 10 minutes");
    std::printf("    oracle hits %d/5, %.1fs\n", oracle_hits, elapsed);
    return g_checks_failed == 0;
}

// ------------------------------------------------------------------ c6

bool criterion6() {
    std::printf("criterion 6: learning improvement on rbf-small and mt-small\n");
    for (const char* which : {"rbf", "mt"}) {
        const double t0 = now_seconds();
        const EnvSpec spec =
            std::strcmp(which, "rbf") == 0 ? EnvSpec::rbf_small() : EnvSpec::mt_small();
        const int iterations = 500;
        std::vector<double> first_means(5), last_means(5);
        parallel_for(5, [&](int seed) {
            auto env = make_env(spec);
            Allocator alloc(spec.k, kScaledDim, 500 + seed);
            const TrainResult tr =
                train_manager(*env, alloc, scaled_train_config(iterations, 2000 + seed));
            std::vector<double> first, last;
            for (int i = 0; i < 100; ++i) first.push_back(tr.rows[i].manager_return);
            for (int i = iterations - 100; i < iterations; ++i)
                last.push_back(tr.rows[i].manager_return);
            first_means[seed] = stats::mean(first);
            last_means[seed] = stats::mean(last);
        });
        const double p = stats::welch_p_greater(last_means, first_means);
        std::printf("    %s: first100 %.3f -> last100 %.3f (p=%.4f, %.0fs)\n", which,
                    stats::mean(first_means), stats::mean(last_means), p, now_seconds() - t0);
        expect(p < 0.05, "last-100 mean exceeds first-100 mean at 95% confidence");
        expect(now_seconds() - t0 < 1200.0, "runtime under 20 minutes per environment");
    }
    return g_checks_failed == 0;
}

// ------------------------------------------------------------------ c7

bool criterion7() {
    std::printf("criterion 7: heuristic parity on rbf-small and oracle recovery\n");
    const double t0 = now_seconds();
    const EnvSpec spec = EnvSpec::rbf_small();

    // two-stage final return over 5 seeds (mirrors c6 but keeps its own runs)
    std::vector<double> two_finals(5);
    parallel_for(5, [&](int seed) {
        TrainedRun run = train_mode(spec, AllocMode::TwoStage, 500, 3000 + seed, 5);
        two_finals[seed] = run.final_greedy_return;
    });

    // heuristics with at least the same interaction budget: each replan
    // simulates population x generations x horizon steps
    std::map<std::string, std::vector<double>> heuristic_finals;
    MetaheuristicConfig mh;
    for (const std::string algo : {"ga", "pso", "sos"}) {
        for (int seed = 0; seed < 5; ++seed) {
            auto env = make_env(spec);
            double total = 0.0;
            const int episodes = 3;
            for (int ep = 0; ep < episodes; ++ep) {
                env->reset(substream(3000 + seed, "env", ep));
                total += rolling_replan(*env, algo, 10,
                                        substream(4000 + seed, algo, ep), 10, 10, mh);
            }
            heuristic_finals[algo].push_back(total / episodes);
        }
    }

    const double two_mean = stats::mean(two_finals);
    bool strictly_beats_one = false;
    for (const auto& [algo, finals] : heuristic_finals) {
        const double hm = stats::mean(finals);
        std::printf("    two_stage %.3f vs %s %.3f\n", two_mean, algo.c_str(), hm);
        expect(two_mean >= hm - 1e-9, "two-stage final >= heuristic final (5-seed means)");
        if (two_mean > hm) strictly_beats_one = true;
    }
    expect(strictly_beats_one, "two-stage strictly beats at least one heuristic");

    // oracle recovery on admissible static instances
    int recoveries_needed = 0, recoveries = 0;
    for (int seed = 0; seed < 5; ++seed) {
        Rng rng(substream(seed, "c7-static"));
        std::vector<Task> tasks;
        for (int j = 0; j < 3; ++j) {
            Task t;
            t.id = j;
            t.reward = rng.uniform(2.0, 8.0);
            t.requirement = ResourceVector({static_cast<double>(rng.uniform_int(1, 3)),
                                            static_cast<double>(rng.uniform_int(1, 3))});
            t.residual = t.requirement;
            tasks.push_back(t);
        }
        std::vector<Entity> entities;
        for (int i = 0; i < 8; ++i) {
            Entity e;
            e.id = i;
            e.resources = ResourceVector({static_cast<double>(rng.uniform_int(0, 2)),
                                          static_cast<double>(rng.uniform_int(0, 2))});
            e.demand = rng.uniform(0.1, 1.0);
            entities.push_back(e);
        }
        const double oracle = brute_force_optimum(tasks, entities).best_return;
        const FitnessFn fitness = [&](const std::vector<double>& genes) {
            return manager_step_reward(tasks, decode(Chromosome{genes}, 0, tasks, entities, 3),
                                       entities);
        };
        for (const std::string algo : {"ga", "pso", "sos"}) {
            ++recoveries_needed;
            const EvolveResult r = run_metaheuristic(algo, 8, 5.0, fitness, 120, seed, mh);
            if (r.best_fitness >= oracle - 1e-9) ++recoveries;
        }
    }
    std::printf("    oracle recoveries %d/%d\n", recoveries, recoveries_needed);
    expect(recoveries * 5 >= recoveries_needed * 4, "heuristics recover the optimum in >= 4/5");
    std::printf("    %.0fs\n", now_seconds() - t0);
    return g_checks_failed == 0;
}

// ------------------------------------------------------------------ c8

bool criterion8() {
    std::printf("criterion 8: generalization ordering on perturbed rbf-small\n");
    const double t0 = now_seconds();
    const EnvSpec base = EnvSpec::rbf_small();
    const int train_iterations = 300, budget = 100, eval_episodes = 5;

    for (const bool entity_perturb : {true, false}) {
        const EnvSpec perturbed = entity_perturb ? perturb_entities(base, PerturbMode::ZeroShot, 99)
                                                 : perturb_tasks(base, 99);
        std::vector<double> zero_trained(5), zero_untrained(5), few_trained(5);
        parallel_for(5, [&](int seed) {
            // trained manager
            auto env = make_env(base);
            Allocator alloc(base.k, kScaledDim, 7000 + seed);
            train_manager(*env, alloc, scaled_train_config(train_iterations, 7000 + seed));

            auto pert_env = make_env(perturbed);
            zero_trained[seed] =
                evaluate_return(*pert_env, alloc, eval_episodes, substream(seed, "c8-zs"));

            // untrained manager on the same perturbed environment
            Allocator fresh(base.k, kScaledDim, 7100 + seed);
            zero_untrained[seed] =
                evaluate_return(*pert_env, fresh, eval_episodes, substream(seed, "c8-zs"));

            // few-shot fine-tune from the trained parameters
            TrainConfig ft = scaled_train_config(budget, substream(7000 + seed, "c8-ft"));
            ft.epsilon.start = 0.2;
            train_manager(*pert_env, alloc, ft);
            few_trained[seed] =
                evaluate_return(*pert_env, alloc, eval_episodes, substream(seed, "c8-fs"));
        });
        const char* tag = entity_perturb ? "entity" : "task";
        std::printf("    %s-perturbed: untrained %.3f, zero-shot %.3f, few-shot %.3f\n", tag,
                    stats::mean(zero_untrained), stats::mean(zero_trained),
                    stats::mean(few_trained));
        expect(stats::mean(zero_trained) >= stats::mean(zero_untrained),
               "zero-shot(trained) >= zero-shot(untrained), 5-seed mean");
        expect(stats::mean(few_trained) >= stats::mean(zero_trained),
               "few-shot >= zero-shot, 5-seed mean");
    }
    std::printf("    %.0fs\n", now_seconds() - t0);
    return g_checks_failed == 0;
}

// ------------------------------------------------------------------ c9

bool criterion9() {
    std::printf("criterion 9: worker bidding dynamics in rbf worker mode\n");
    const double t0 = now_seconds();
    EnvSpec spec = EnvSpec::rbf_small();
    spec.worker_mode = true;
    const int iterations = 250, seeds = 5;

    // accounting identity on random rollouts with independent bookkeeping
    {
        auto env = make_env(spec);
        Rng rng(17);
        for (int episode = 0; episode < 5; ++episode) {
            env->reset(episode);
            std::map<int, double> pledged;  // task id -> sum of committed bids
            bool done = false;
            while (!done) {
                std::vector<std::pair<int, double>> bids;
                std::map<int, double> bid_of;
                for (const Entity& e : env->available_entities()) {
                    const double b = rng.uniform(0.0, 0.4);
                    bids.emplace_back(e.id, b);
                    bid_of[e.id] = b;
                }
                env->set_bids(bids);
                Allocation a;
                const auto tasks = env->open_tasks();
                if (!tasks.empty())
                    for (const Entity& e : env->available_entities())
                        if (rng.uniform() < 0.5) {
                            const int t =
                                tasks[rng.uniform_int(0, static_cast<int>(tasks.size()) - 1)].id;
                            a.lists[t].push_back(e.id);
                            pledged[t] += bid_of[e.id];
                        }
                const StepOutcome out = env->step(a);
                done = out.done;
                double expected = 0.0;
                for (int tid : out.completed_task_ids) {
                    expected += pledged[tid];
                    pledged.erase(tid);
                }
                expect(std::fabs(out.worker_reward_sum - expected) < 1e-9,
                       "per-step worker reward sum equals committed bids of completed tasks");
            }
        }
    }

    // non-decreasing worker mean return over training
    std::vector<std::vector<double>> curves(seeds);
    parallel_for(seeds, [&](int seed) {
        auto env = make_env(spec);
        Allocator alloc(spec.k, kScaledDim, 9000 + seed);
        WorkerPool workers(spec.n_entities, spec.k, kScaledDim, substream(9000 + seed, "w"));
        const TrainResult tr =
            train_manager(*env, alloc, scaled_train_config(iterations, 9500 + seed), &workers);
        std::vector<double> curve;
        for (const EpisodeRow& row : tr.rows) curve.push_back(row.worker_return_mean);
        curves[seed] = std::move(curve);
    });
    // mean curve across seeds, binned to tame episode noise
    const int bins = 25, per_bin = iterations / bins;
    std::vector<double> binned(bins, 0.0);
    for (int b = 0; b < bins; ++b) {
        double acc = 0.0;
        for (const auto& curve : curves)
            for (int i = b * per_bin; i < (b + 1) * per_bin; ++i) acc += curve[i];
        binned[b] = acc / (per_bin * static_cast<double>(curves.size()));
    }
    const double p = stats::spearman_trend_p(binned);
    std::printf("    worker mean return: first bin %.4f -> last bin %.4f (trend p=%.4f, %.0fs)\n",
                binned.front(), binned.back(), p, now_seconds() - t0);
    expect(p < 0.05, "worker mean return trend is increasing (Spearman p < 0.05)");
    return g_checks_failed == 0;
}

// ------------------------------------------------------------------ c10

bool criterion10() {
    std::printf("criterion 10: environment invariants over randomized steps\n");
    const long target_steps = 10000;
    for (const EnvSpec& spec : {EnvSpec::retain_default(), EnvSpec::ept_default(),
                                EnvSpec::rbf_small(), EnvSpec::mt_small()}) {
        long violations = 0, steps_done = 0;
        auto env = make_env(spec);
        auto twin = make_env(spec);
        std::uint64_t episode = 0;
        Rng rng(substream(10, spec.env));
        while (steps_done < target_steps) {
            env->reset(episode);
            twin->reset(episode);
            Rng script(substream(episode, "c10-script"));
            bool done = false;
            std::map<int, std::pair<double, double>> task_state;  // decay tracking
            while (!done && steps_done < target_steps) {
                Allocation a;
                const auto tasks = env->open_tasks();
                if (!tasks.empty())
                    for (const Entity& e : env->available_entities()) {
                        if (script.uniform() > 0.4) continue;
                        const Task& t =
                            tasks[script.uniform_int(0, static_cast<int>(tasks.size()) - 1)];
                        if (env->eligible(e, t)) a.lists[t.id].push_back(e.id);
                    }
                double before_total = 0.0;
                for (const Entity& e : env->all_entities()) before_total += e.resources.sum();

                const StepOutcome out = env->step(a);
                const StepOutcome twin_out = twin->step(a);
                done = out.done;
                ++steps_done;

                // determinism
                if (out.manager_reward != twin_out.manager_reward ||
                    env->open_tasks().size() != twin->open_tasks().size())
                    ++violations;

                // conservation (mt)
                if (spec.env == "mt") {
                    double after_total = 0.0;
                    for (const Entity& e : env->all_entities()) after_total += e.resources.sum();
                    if (after_total > before_total + 1e-9) ++violations;
                    if (std::fabs((before_total - after_total) - out.resources_consumed) > 1e-9)
                        ++violations;
                }

                // decay monotonicity (rbf)
                if (spec.env == "rbf") {
                    for (const Task& t : env->open_tasks()) {
                        auto it = task_state.find(t.id);
                        if (it != task_state.end()) {
                            if (t.reward > it->second.first + 1e-12 ||
                                t.requirement.sum() > it->second.second + 1e-12)
                                ++violations;
                        }
                        task_state[t.id] = {t.reward, t.requirement.sum()};
                    }
                }

                // commitment exclusivity
                std::set<int> seen;
                for (const Entity& e : env->all_entities())
                    if (e.committed_to && !seen.insert(e.id).second) ++violations;
            }
            ++episode;
        }
        std::printf("    %s: %ld steps, %ld violations\n", spec.env.c_str(), steps_done,
                    violations);
        expect(violations == 0, "zero invariant violations");
    }
    return g_checks_failed == 0;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
    const std::map<int, std::function<bool()>> criteria = {
        {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5},
        {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10}};

    int failures = 0;
    for (const auto& [number, fn] : criteria) {
        if (!wanted.empty() &&
            std::find(wanted.begin(), wanted.end(), number) == wanted.end())
            continue;
        g_checks_failed = 0;
        const bool ok = fn();
        std::printf("%s criterion %d\n", ok ? "PASS" : "FAIL", number);
        if (!ok) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
