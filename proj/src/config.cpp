#include "af/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace af {

namespace {
constexpr const char* kConfigHeader = "allocforge-config v1";

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<int> parse_seed_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoi(trim(tok)));
    if (out.empty()) throw ConfigError("empty seed list");
    return out;
}
}  // namespace

bool is_heuristic(const std::string& algorithm) {
    return algorithm == "ga" || algorithm == "pso" || algorithm == "sos";
}

void ExperimentConfig::validate() const {
    if (env_spec.empty()) throw ConfigError("env_spec is required");
    static const char* known[] = {"two_stage", "seq_pre", "rand_pre", "no_tam",
                                  "no_amix",   "ga",      "pso",      "sos"};
    if (std::find(std::begin(known), std::end(known), algorithm) == std::end(known))
        throw ConfigError("unknown algorithm: " + algorithm);
    if (seeds.empty()) throw ConfigError("need at least one seed");
    if (iterations < 0) throw ConfigError("iterations must be >= 0");
    if (budget < 0) throw ConfigError("budget must be >= 0");
    if (fixed_m <= 0) throw ConfigError("fixed_m must be positive");
    if (embed_dim <= 0) throw ConfigError("embed_dim must be positive");
    if (heuristic_generations <= 0) throw ConfigError("heuristic_generations must be positive");
    if (eval_episodes <= 0) throw ConfigError("eval_episodes must be positive");
    if (lr <= 0.0) throw ConfigError("lr must be positive");
    if (epsilon_decay <= 0.0 || epsilon_decay > 1.0) throw ConfigError("bad epsilon_decay");
    if (updates_per_iteration <= 0) throw ConfigError("updates_per_iteration must be positive");
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    std::string line;
    if (!std::getline(in, line) || trim(line) != kConfigHeader)
        throw ConfigError("bad config header in " + path);
    ExperimentConfig c;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError("bad config line: " + t);
        const std::string key = trim(t.substr(0, eq));
        const std::string val = trim(t.substr(eq + 1));
        auto as_bool = [&] {
            if (val == "true") return true;
            if (val == "false") return false;
            throw ConfigError("bad boolean for " + key + ": " + val);
        };
        if (key == "env_spec") c.env_spec = val;
        else if (key == "algorithm") c.algorithm = val;
        else if (key == "seeds") c.seeds = parse_seed_list(val);
        else if (key == "iterations") c.iterations = std::stoi(val);
        else if (key == "budget") c.budget = std::stoi(val);
        else if (key == "out_dir") c.out_dir = val;
        else if (key == "worker_mode") c.worker_mode = as_bool();
        else if (key == "trace") c.trace = as_bool();
        else if (key == "fixed_m") c.fixed_m = std::stoi(val);
        else if (key == "embed_dim") c.embed_dim = std::stoi(val);
        else if (key == "heuristic_generations") c.heuristic_generations = std::stoi(val);
        else if (key == "eval_episodes") c.eval_episodes = std::stoi(val);
        else if (key == "lr") c.lr = std::stod(val);
        else if (key == "epsilon_decay") c.epsilon_decay = std::stod(val);
        else if (key == "updates_per_iteration") c.updates_per_iteration = std::stoi(val);
        else if (key == "master_seed_offset") c.master_seed_offset = std::stoull(val);
        else throw ConfigError("unknown config key: " + key);
    }
    c.validate();
    return c;
}

EnvSpec resolve_env_spec(const std::string& name) {
    if (name.rfind("builtin:", 0) == 0) {
        const std::string which = name.substr(8);
        if (which == "retain") return EnvSpec::retain_default();
        if (which == "ept") return EnvSpec::ept_default();
        if (which == "rbf") return EnvSpec::rbf_default();
        if (which == "rbf_small") return EnvSpec::rbf_small();
        if (which == "mt") return EnvSpec::mt_default();
        if (which == "mt_small") return EnvSpec::mt_small();
        throw ConfigError("unknown builtin env: " + which);
    }
    return load_env_spec(name);
}

}  // namespace af
