#include "af/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace af {

namespace {
std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}
}  // namespace

void write_metrics_csv(const std::string& path, const std::string& algo, int seed,
                       const std::vector<EpisodeRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write metrics csv: " + path);
    out << kMetricsCsvHeader << "\n";
    for (const EpisodeRow& r : rows) {
        out << algo << "," << seed << "," << r.episode << "," << fmt(r.manager_return) << ","
            << fmt(r.worker_return_mean) << "," << fmt(r.actor_loss) << "," << fmt(r.critic_loss)
            << "," << fmt(r.select_loss) << "," << fmt(r.epsilon) << "," << fmt(r.sigma) << ","
            << fmt(r.wall_ms) << "\n";
    }
}

MetricsFile read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open metrics csv: " + path);
    std::string line;
    if (!std::getline(in, line) || line != kMetricsCsvHeader)
        throw std::runtime_error("bad metrics csv header in " + path);
    MetricsFile file;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        std::vector<std::string> cols;
        while (std::getline(ss, tok, ',')) cols.push_back(tok);
        if (cols.size() != 11) throw std::runtime_error("bad metrics row: " + line);
        if (first) {
            file.algo = cols[0];
            file.seed = std::stoi(cols[1]);
            first = false;
        }
        EpisodeRow r;
        r.episode = std::stoi(cols[2]);
        r.manager_return = std::stod(cols[3]);
        r.worker_return_mean = std::stod(cols[4]);
        r.actor_loss = std::stod(cols[5]);
        r.critic_loss = std::stod(cols[6]);
        r.select_loss = std::stod(cols[7]);
        r.epsilon = std::stod(cols[8]);
        r.sigma = std::stod(cols[9]);
        r.wall_ms = std::stod(cols[10]);
        file.rows.push_back(r);
    }
    return file;
}

double last_n_mean(const std::vector<EpisodeRow>& rows, int n) {
    if (rows.empty()) return 0.0;
    const std::size_t take = std::min<std::size_t>(n, rows.size());
    double acc = 0.0;
    for (std::size_t i = rows.size() - take; i < rows.size(); ++i) acc += rows[i].manager_return;
    return acc / static_cast<double>(take);
}

}  // namespace af
