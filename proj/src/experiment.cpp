#include "af/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "af/checkpoint.hpp"
#include "af/heuristics.hpp"
#include "af/metrics.hpp"
#include "af/parallel.hpp"
#include "json.hpp"

namespace af {

namespace {

using nlohmann::json;

std::uint64_t master_seed(const ExperimentConfig& config, int seed) {
    return static_cast<std::uint64_t>(seed) + config.master_seed_offset;
}

std::vector<ParamBlock*> checkpointable(Allocator& alloc) { return alloc.checkpoint_blocks(); }

double mean_of(const std::vector<double>& xs) {
    double acc = 0.0;
    for (double x : xs) acc += x;
    return xs.empty() ? 0.0 : acc / static_cast<double>(xs.size());
}

double std_of(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double acc = 0.0;
    for (double x : xs) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

void write_summary(const std::string& path, const ExperimentConfig& config,
                   const std::string& label, ExperimentResult& result) {
    std::vector<double> finals;
    json per_seed = json::array();
    for (const SeedOutcome& s : result.seeds) {
        json o{{"seed", s.seed}, {"ok", s.ok}, {"final_return", s.final_return}};
        if (!s.csv_path.empty()) o["csv"] = s.csv_path;
        if (!s.checkpoint_path.empty()) o["checkpoint"] = s.checkpoint_path;
        if (!s.error.empty()) o["error"] = s.error;
        per_seed.push_back(o);
        if (s.ok) finals.push_back(s.final_return);
    }
    result.mean_final_return = mean_of(finals);
    result.std_final_return = std_of(finals);
    json doc{{"run", label},
             {"algorithm", config.algorithm},
             {"env_spec", config.env_spec},
             {"iterations", config.iterations},
             {"mean_final_return", result.mean_final_return},
             {"std_final_return", result.std_final_return},
             {"seeds", per_seed}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write summary: " + path);
    out << doc.dump(2) << "\n";
    result.summary_path = path;
}

TrainResult run_heuristic_seed(const ExperimentConfig& config, const EnvSpec& spec, int seed) {
    TrainResult result;
    const std::unique_ptr<Env> env = make_env(spec);
    MetaheuristicConfig mh;
    for (int episode = 0; episode < config.iterations; ++episode) {
        env->reset(substream(master_seed(config, seed), "env", static_cast<std::uint64_t>(episode)));
        EpisodeRow row;
        row.episode = episode;
        row.manager_return = rolling_replan(
            *env, config.algorithm, config.heuristic_generations,
            substream(master_seed(config, seed), "replan-seed", static_cast<std::uint64_t>(episode)),
            10, 10, mh);
        result.rows.push_back(row);
    }
    return result;
}

}  // namespace

std::unique_ptr<Allocator> build_allocator(const ExperimentConfig& config, const EnvSpec& spec,
                                           std::uint64_t seed) {
    const AllocMode mode = alloc_mode_from_string(config.algorithm);
    int fixed_n = -1, fixed_m = -1;
    if (is_fixed_shape(mode)) {
        fixed_n = spec.n_entities;
        fixed_m = spec.env == "retain" ? spec.retain_tasks : config.fixed_m;
    }
    return std::make_unique<Allocator>(spec.k, config.embed_dim, seed, mode, fixed_n, fixed_m);
}

std::string checkpoint_path_for(const std::string& pattern, int seed) {
    std::string out = pattern;
    const auto pos = out.find("{seed}");
    if (pos != std::string::npos) out.replace(pos, 6, std::to_string(seed));
    return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
    config.validate();
    const EnvSpec base_spec = resolve_env_spec(config.env_spec);
    std::filesystem::create_directories(config.out_dir);

    ExperimentResult result;
    result.seeds.resize(config.seeds.size());

    parallel_for(static_cast<int>(config.seeds.size()), [&](int idx) {
        const int seed = config.seeds[idx];
        SeedOutcome& outcome = result.seeds[idx];
        outcome.seed = seed;
        try {
            EnvSpec spec = base_spec;
            spec.worker_mode = config.worker_mode;
            spec.validate();
            const std::string stem =
                config.out_dir + "/" + config.algorithm + "_seed" + std::to_string(seed);
            TrainResult tr;
            if (is_heuristic(config.algorithm)) {
                tr = run_heuristic_seed(config, spec, seed);
            } else {
                const std::unique_ptr<Env> env = make_env(spec);
                auto alloc = build_allocator(config, spec, master_seed(config, seed));
                std::unique_ptr<WorkerPool> workers;
                if (config.worker_mode)
                    workers = std::make_unique<WorkerPool>(
                        spec.n_entities, spec.k, config.embed_dim,
                        substream(master_seed(config, seed), "workers"));
                TrainConfig tc;
                tc.iterations = config.iterations;
                tc.seed = master_seed(config, seed);
                tc.lr = config.lr;
                tc.epsilon.decay = config.epsilon_decay;
                tc.updates_per_iteration = config.updates_per_iteration;
                tr = train_manager(*env, *alloc, tc, workers.get());
                outcome.checkpoint_path = stem + ".ckpt";
                const auto blocks = checkpointable(*alloc);
                save_checkpoint(outcome.checkpoint_path,
                                {blocks.begin(), blocks.end()});
                if (config.trace) {
                    const std::unique_ptr<Env> trace_env = make_env(spec);
                    trace_episode(*trace_env, *alloc, stem + ".trace.jsonl",
                                  master_seed(config, seed));
                }
            }
            outcome.csv_path = stem + ".csv";
            write_metrics_csv(outcome.csv_path, config.algorithm, seed, tr.rows);
            outcome.final_return = last_n_mean(tr.rows, 100);
            outcome.ok = true;
        } catch (const std::exception& e) {
            outcome.ok = false;
            outcome.error = e.what();
        }
    });

    write_summary(config.out_dir + "/summary.json", config, "train", result);
    bool any_failed = false;
    for (const auto& s : result.seeds) any_failed |= !s.ok;
    if (any_failed && result.seeds.size() == 1) throw std::runtime_error(result.seeds[0].error);
    return result;
}

GenMode gen_mode_from_string(const std::string& name) {
    if (name == "zero_shot_entity") return GenMode::ZeroShotEntity;
    if (name == "few_shot_entity") return GenMode::FewShotEntity;
    if (name == "zero_shot_task") return GenMode::ZeroShotTask;
    if (name == "few_shot_task") return GenMode::FewShotTask;
    throw ConfigError("unknown generalization mode: " + name);
}

std::string to_string(GenMode mode) {
    switch (mode) {
        case GenMode::ZeroShotEntity: return "zero_shot_entity";
        case GenMode::FewShotEntity: return "few_shot_entity";
        case GenMode::ZeroShotTask: return "zero_shot_task";
        case GenMode::FewShotTask: return "few_shot_task";
    }
    return "?";
}

ExperimentResult run_generalization(const ExperimentConfig& config,
                                    const std::string& checkpoint_pattern, GenMode mode) {
    config.validate();
    if (is_heuristic(config.algorithm))
        throw ConfigError("generalization applies to learned algorithms only");
    const EnvSpec base_spec = resolve_env_spec(config.env_spec);
    std::filesystem::create_directories(config.out_dir);

    const bool entity_perturb = mode == GenMode::ZeroShotEntity || mode == GenMode::FewShotEntity;
    const bool few_shot = mode == GenMode::FewShotEntity || mode == GenMode::FewShotTask;

    ExperimentResult result;
    result.seeds.resize(config.seeds.size());

    parallel_for(static_cast<int>(config.seeds.size()), [&](int idx) {
        const int seed = config.seeds[idx];
        SeedOutcome& outcome = result.seeds[idx];
        outcome.seed = seed;
        try {
            const std::uint64_t perturb_seed = substream(config.master_seed_offset + 977, "perturb");
            EnvSpec spec = entity_perturb
                               ? perturb_entities(base_spec, few_shot ? PerturbMode::FewShot
                                                                      : PerturbMode::ZeroShot,
                                                  perturb_seed)
                               : perturb_tasks(base_spec, perturb_seed);
            spec.worker_mode = config.worker_mode;
            auto alloc = build_allocator(config, base_spec, master_seed(config, seed));
            if (!checkpoint_pattern.empty()) {
                const auto blocks = checkpointable(*alloc);
                load_checkpoint(checkpoint_path_for(checkpoint_pattern, seed), blocks);
                alloc->sync_targets_hard();
            }
            const std::unique_ptr<Env> env = make_env(spec);
            const std::string stem = config.out_dir + "/" + config.algorithm + "_" +
                                     to_string(mode) + "_seed" + std::to_string(seed);
            if (few_shot && config.budget > 0) {
                TrainConfig tc;
                tc.iterations = config.budget;
                tc.seed = substream(master_seed(config, seed), "few-shot");
                tc.lr = config.lr;
                tc.epsilon.decay = config.epsilon_decay;
                tc.updates_per_iteration = config.updates_per_iteration;
                tc.epsilon.start = 0.2;  // resume from a mostly-greedy policy
                const TrainResult tr = train_manager(*env, *alloc, tc);
                write_metrics_csv(stem + ".csv", config.algorithm, seed, tr.rows);
                outcome.csv_path = stem + ".csv";
            }
            outcome.final_return = evaluate_return(
                *env, *alloc, config.eval_episodes,
                substream(master_seed(config, seed), "generalize-eval"));
            outcome.ok = true;
        } catch (const FixedShapeError& e) {
            outcome.ok = false;
            outcome.error = std::string("fixed-shape: ") + e.what();
        } catch (const std::exception& e) {
            outcome.ok = false;
            outcome.error = e.what();
        }
    });

    write_summary(config.out_dir + "/summary_" + to_string(mode) + ".json", config,
                  to_string(mode), result);
    for (const auto& s : result.seeds)
        if (!s.ok && s.error.rfind("fixed-shape:", 0) == 0) throw FixedShapeError(s.error);
    return result;
}

ExperimentResult run_evaluation(const ExperimentConfig& config,
                                const std::string& checkpoint_pattern) {
    config.validate();
    const EnvSpec base_spec = resolve_env_spec(config.env_spec);
    std::filesystem::create_directories(config.out_dir);
    ExperimentResult result;
    result.seeds.resize(config.seeds.size());

    parallel_for(static_cast<int>(config.seeds.size()), [&](int idx) {
        const int seed = config.seeds[idx];
        SeedOutcome& outcome = result.seeds[idx];
        outcome.seed = seed;
        try {
            EnvSpec spec = base_spec;
            spec.worker_mode = config.worker_mode;
            auto alloc = build_allocator(config, spec, master_seed(config, seed));
            if (!checkpoint_pattern.empty()) {
                const auto blocks = checkpointable(*alloc);
                load_checkpoint(checkpoint_path_for(checkpoint_pattern, seed), blocks);
                alloc->sync_targets_hard();
            }
            const std::unique_ptr<Env> env = make_env(spec);
            outcome.final_return =
                evaluate_return(*env, *alloc, config.eval_episodes,
                                substream(master_seed(config, seed), "evaluate"));
            outcome.ok = true;
        } catch (const std::exception& e) {
            outcome.ok = false;
            outcome.error = e.what();
        }
    });
    write_summary(config.out_dir + "/summary_evaluate.json", config, "evaluate", result);
    return result;
}

void trace_episode(Env& env, const Allocator& alloc, const std::string& path, std::uint64_t seed) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write trace: " + path);
    env.reset(substream(seed, "trace"));
    Rng rng(substream(seed, "trace-rng"));
    bool done = false;
    while (!done) {
        const std::vector<Task> tasks = env.open_tasks();
        const std::vector<Entity> ents = allocation_entities(env, alloc);
        AllocateResult ar;
        if (!tasks.empty() && !ents.empty()) ar = alloc.allocate(tasks, ents, rng, true);
        json jtasks = json::array();
        for (const Task& t : tasks)
            jtasks.push_back({{"id", t.id},
                              {"reward", t.reward},
                              {"residual", t.residual.values()},
                              {"x", t.x},
                              {"y", t.y}});
        json jents = json::array();
        for (const Entity& e : env.all_entities())
            jents.push_back({{"id", e.id},
                             {"resources", e.resources.values()},
                             {"x", e.x},
                             {"y", e.y},
                             {"demand", e.demand},
                             {"committed", e.committed_to.has_value()}});
        json jalloc = json::object();
        for (const auto& trace : ar.traces) {
            json picks = json::array();
            for (std::size_t s = 0; s < trace.picked.size(); ++s)
                picks.push_back({{"entity", trace.candidate_ids[trace.picked[s]]},
                                 {"log_prob", trace.log_probs[s]}});
            jalloc[std::to_string(trace.task_id)] = picks;
        }
        const StepOutcome outcome = env.step(ar.allocation);
        done = outcome.done;
        const json line{{"step", env.step_count() - 1},
                        {"tasks", jtasks},
                        {"entities", jents},
                        {"allocation", jalloc},
                        {"reward", outcome.manager_reward}};
        out << line.dump() << "\n";
    }
}

}  // namespace af
