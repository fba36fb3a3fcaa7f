// Batch experiment driver: seeded runs fanned out across threads, one CSV
// per seed, a JSON summary per run, checkpoints for learned methods, and
// the generalization (zero-shot / few-shot) pipelines.

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "af/allocator.hpp"
#include "af/config.hpp"
#include "af/trainers.hpp"

namespace af {

struct SeedOutcome {
    int seed = 0;
    bool ok = false;
    std::string error;
    double final_return = 0.0;  // mean of the last 100 episode returns
    std::string csv_path;
    std::string checkpoint_path;
};

struct ExperimentResult {
    std::vector<SeedOutcome> seeds;
    double mean_final_return = 0.0;
    double std_final_return = 0.0;
    std::string summary_path;
};

/// Trains (or replan-loops) every seed and writes csv/summary/checkpoints.
ExperimentResult run_experiment(const ExperimentConfig& config);

enum class GenMode { ZeroShotEntity, FewShotEntity, ZeroShotTask, FewShotTask };
GenMode gen_mode_from_string(const std::string& name);
std::string to_string(GenMode mode);

/// Evaluates (zero-shot) or fine-tunes then evaluates (few-shot) trained
/// checkpoints on a perturbed environment. `checkpoint_pattern` contains
/// "{seed}" which is substituted per seed; pass empty to start untrained.
ExperimentResult run_generalization(const ExperimentConfig& config,
                                    const std::string& checkpoint_pattern, GenMode mode);

/// Plain evaluation of trained checkpoints on the configured spec.
ExperimentResult run_evaluation(const ExperimentConfig& config,
                                const std::string& checkpoint_pattern);

/// Builds the allocator shape the config calls for on the given spec.
std::unique_ptr<Allocator> build_allocator(const ExperimentConfig& config, const EnvSpec& spec,
                                           std::uint64_t seed);

std::string checkpoint_path_for(const std::string& pattern, int seed);

/// Greedy rollout dumped as JSON lines: step, tasks, entities, allocation
/// (with per-step select log-probs), reward.
void trace_episode(Env& env, const Allocator& alloc, const std::string& path, std::uint64_t seed);

}  // namespace af
