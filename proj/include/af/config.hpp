// Experiment configuration: flat key=value files with '#' comments and a
// versioned header. Every field has a default; unknown keys are rejected.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "af/env.hpp"

namespace af {

struct ExperimentConfig {
    std::string env_spec;  // path to an env spec file, or builtin:<name>
    std::string algorithm = "two_stage";  // two_stage|seq_pre|rand_pre|no_tam|no_amix|ga|pso|sos
    std::vector<int> seeds = {0};
    int iterations = 1000;
    int budget = 100;  // few-shot fine-tune episodes
    std::string out_dir = "out";
    bool worker_mode = false;
    bool trace = false;
    int fixed_m = 12;               // task capacity for the fixed-shape ablations
    int embed_dim = 64;
    int heuristic_generations = 10;  // optimizer iterations per re-plan
    int eval_episodes = 5;
    double lr = 1e-4;
    double epsilon_decay = 0.9999;  // per environment step
    int updates_per_iteration = 1;
    std::uint64_t master_seed_offset = 0;

    void validate() const;
};

ExperimentConfig load_experiment_config(const std::string& path);

/// "builtin:rbf_small" etc., or a spec file path.
EnvSpec resolve_env_spec(const std::string& name);

bool is_heuristic(const std::string& algorithm);

}  // namespace af
