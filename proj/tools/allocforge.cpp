// allocforge: batch experiment driver for the two-stage task-allocation
// engine. Subcommands: train, evaluate, generalize, baseline, verify-bounds,
// oracle. Exit codes: 0 success, 2 config error, 3 runtime failure,
// 4 fixed-shape generalization error.

#include <iostream>

#include "CLI11.hpp"
#include "af/allocator.hpp"
#include "af/bounds.hpp"
#include "af/config.hpp"
#include "af/experiment.hpp"
#include "af/heuristics.hpp"
#include "json.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitFixedShape = 4;

struct CommonOpts {
    std::string config_path;
    std::string env_spec;
    std::string out_dir;
    std::string algorithm;
    std::vector<int> seeds;
    int iterations = -1;
    int budget = -1;
    bool trace = false;
    bool worker_mode = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "experiment config file (allocforge-config v1)");
    cmd->add_option("--env", opts.env_spec, "env spec file or builtin:<name>");
    cmd->add_option("--algo", opts.algorithm, "algorithm override");
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--seed,--seeds", opts.seeds, "seed list")->delimiter(',');
    cmd->add_option("--iterations", opts.iterations, "training iterations");
    cmd->add_option("--budget", opts.budget, "few-shot fine-tune episodes");
    cmd->add_flag("--trace", opts.trace, "dump a greedy trajectory as JSON lines");
    cmd->add_flag("--worker-mode", opts.worker_mode, "rbf bidding-worker mode");
}

af::ExperimentConfig merge_config(const CommonOpts& opts) {
    af::ExperimentConfig config;
    if (!opts.config_path.empty()) config = af::load_experiment_config(opts.config_path);
    if (!opts.env_spec.empty()) config.env_spec = opts.env_spec;
    if (!opts.algorithm.empty()) config.algorithm = opts.algorithm;
    if (!opts.out_dir.empty()) config.out_dir = opts.out_dir;
    if (!opts.seeds.empty()) config.seeds = opts.seeds;
    if (opts.iterations >= 0) config.iterations = opts.iterations;
    if (opts.budget >= 0) config.budget = opts.budget;
    if (opts.trace) config.trace = true;
    if (opts.worker_mode) config.worker_mode = true;
    config.validate();
    return config;
}

void print_summary(const af::ExperimentResult& result) {
    std::cout << "mean_final_return " << result.mean_final_return << " +/- "
              << result.std_final_return << "\n";
    for (const auto& s : result.seeds) {
        std::cout << "  seed " << s.seed << ": "
                  << (s.ok ? std::to_string(s.final_return) : "FAILED " + s.error) << "\n";
    }
    if (!result.summary_path.empty()) std::cout << "summary: " << result.summary_path << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dynamic multi-entity task allocation engine"};
    app.require_subcommand(1);

    CommonOpts train_opts, eval_opts, gen_opts, base_opts;
    std::string gen_mode = "zero_shot_entity";
    std::string ckpt_pattern;
    std::string eval_ckpt;

    CLI::App* train = app.add_subcommand("train", "train an allocator per seed");
    add_common(train, train_opts);

    CLI::App* evaluate = app.add_subcommand("evaluate", "greedy evaluation of checkpoints");
    add_common(evaluate, eval_opts);
    evaluate->add_option("--checkpoint", eval_ckpt,
                         "checkpoint path pattern with {seed}, empty = untrained");

    CLI::App* generalize = app.add_subcommand("generalize", "zero/few-shot on a perturbed env");
    add_common(generalize, gen_opts);
    generalize->add_option("--mode", gen_mode,
                           "zero_shot_entity|few_shot_entity|zero_shot_task|few_shot_task");
    generalize->add_option("--checkpoint", ckpt_pattern,
                           "checkpoint path pattern with {seed}, empty = untrained");

    CLI::App* baseline = app.add_subcommand("baseline", "heuristic rolling-replan runs");
    add_common(baseline, base_opts);

    int vb_n = 10, vb_N = 5;
    long vb_trials = 100000;
    std::uint64_t vb_seed = 0;
    CLI::App* verify = app.add_subcommand("verify-bounds", "probability-bound verification");
    verify->add_option("--n", vb_n, "entity count");
    verify->add_option("--N", vb_N, "task count");
    verify->add_option("--trials", vb_trials, "Monte Carlo trials (>= 10^4)");
    verify->add_option("--seed", vb_seed, "rng seed");

    std::string oracle_env = "builtin:retain";
    std::uint64_t oracle_seed = 0;
    CLI::App* oracle = app.add_subcommand("oracle", "brute-force optimum of the initial state");
    oracle->add_option("--env", oracle_env, "env spec file or builtin:<name>");
    oracle->add_option("--seed", oracle_seed, "episode seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            print_summary(af::run_experiment(merge_config(train_opts)));
        } else if (baseline->parsed()) {
            af::ExperimentConfig config = merge_config(base_opts);
            if (!af::is_heuristic(config.algorithm))
                throw af::ConfigError("baseline expects --algo ga|pso|sos");
            print_summary(af::run_experiment(config));
        } else if (evaluate->parsed()) {
            print_summary(af::run_evaluation(merge_config(eval_opts), eval_ckpt));
        } else if (generalize->parsed()) {
            print_summary(af::run_generalization(merge_config(gen_opts), ckpt_pattern,
                                                 af::gen_mode_from_string(gen_mode)));
        } else if (verify->parsed()) {
            const af::BoundsReport report = af::verify_bounds(vb_n, vb_N, vb_trials, vb_seed);
            std::cout << af::to_json(report) << "\n";
            return report.pass ? kExitOk : kExitRuntime;
        } else if (oracle->parsed()) {
            const af::EnvSpec spec = af::resolve_env_spec(oracle_env);
            const auto env = af::make_env(spec);
            env->reset(oracle_seed);
            const af::OracleResult best =
                af::brute_force_optimum(env->open_tasks(), env->available_entities());
            nlohmann::json lists = nlohmann::json::object();
            for (const auto& [task_id, ids] : best.allocation.lists)
                lists[std::to_string(task_id)] = ids;
            const nlohmann::json doc{{"best_return", best.best_return}, {"allocation", lists}};
            std::cout << doc.dump(2) << "\n";
        }
    } catch (const af::FixedShapeError& e) {
        std::cerr << "fixed-shape error: " << e.what() << "\n";
        return kExitFixedShape;
    } catch (const af::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const af::BoundDomainError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const CLI::ParseError& e) {
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}
