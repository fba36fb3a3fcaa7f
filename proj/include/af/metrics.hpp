// Metrics export: one CSV row per episode plus a JSON run summary.

#pragma once

#include <string>
#include <vector>

#include "af/trainers.hpp"

namespace af {

inline constexpr const char* kMetricsCsvHeader =
    "algo,seed,episode,manager_return,worker_return_mean,actor_loss,critic_loss,select_loss,"
    "epsilon,sigma,wall_ms";

void write_metrics_csv(const std::string& path, const std::string& algo, int seed,
                       const std::vector<EpisodeRow>& rows);

struct MetricsFile {
    std::string algo;
    int seed = 0;
    std::vector<EpisodeRow> rows;
};

MetricsFile read_metrics_csv(const std::string& path);

/// Mean of the last `n` episode returns (all of them when fewer exist).
double last_n_mean(const std::vector<EpisodeRow>& rows, int n);

}  // namespace af
