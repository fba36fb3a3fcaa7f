#include "af/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace af {

// ---------------------------------------------------------------- EnvSpec

EnvSpec EnvSpec::retain_default() {
    EnvSpec s;
    s.env = "retain";
    s.n_entities = 10;
    s.retain_tasks = 5;
    s.k = 5;  // membership indicator per task
    s.map_extent = 10.0;
    s.episode_steps = 1;
    return s;
}

EnvSpec EnvSpec::ept_default() {
    EnvSpec s;
    s.env = "ept";
    s.n_entities = 20;
    s.k = 1;
    s.map_extent = 100.0;
    s.episode_steps = 50;
    return s;
}

EnvSpec EnvSpec::rbf_default() {
    EnvSpec s;
    s.env = "rbf";
    s.n_entities = 100;
    s.k = 2;
    s.map_extent = 20.0;
    s.episode_steps = 50;
    return s;
}

EnvSpec EnvSpec::rbf_small() {
    EnvSpec s = rbf_default();
    s.n_entities = 20;
    s.map_extent = 10.0;
    s.rbf_spawn_min = 2;
    s.rbf_spawn_max = 4;
    return s;
}

EnvSpec EnvSpec::mt_default() {
    EnvSpec s;
    s.env = "mt";
    s.n_entities = 50;
    s.k = 2;
    s.map_extent = 100.0;
    s.episode_steps = 50;
    return s;
}

EnvSpec EnvSpec::mt_small() {
    EnvSpec s = mt_default();
    s.n_entities = 10;
    s.map_extent = 40.0;
    s.mt_rate = 0.5;
    return s;
}

void EnvSpec::validate() const {
    if (env != "retain" && env != "ept" && env != "rbf" && env != "mt")
        throw ConfigError("unknown env: " + env);
    if (n_entities <= 0) throw ConfigError("n_entities must be positive");
    if (k <= 0) throw ConfigError("k must be positive");
    if (episode_steps <= 0) throw ConfigError("episode_steps must be positive");
    if (map_extent <= 0.0) throw ConfigError("map_extent must be positive");
    if (speed <= 0.0) throw ConfigError("speed must be positive");
    if (env == "retain") {
        if (retain_tasks < 2) throw ConfigError("retain needs at least 2 tasks");
        if (n_entities < retain_tasks) throw ConfigError("retain needs n >= task count");
        if (k != retain_tasks) throw ConfigError("retain requires k == retain_tasks");
    }
    if (env == "rbf") {
        if (rbf_spawn_min < 1 || rbf_spawn_max < rbf_spawn_min) throw ConfigError("bad rbf spawn range");
        if (!rbf_spawn_weights.empty() &&
            static_cast<int>(rbf_spawn_weights.size()) != rbf_spawn_max - rbf_spawn_min + 1)
            throw ConfigError("rbf_spawn_weights length mismatch");
        if (rbf_decay_factor <= 0.0 || rbf_decay_factor > 1.0) throw ConfigError("bad rbf decay factor");
    }
    if (env == "mt" && mt_rate <= 0.0) throw ConfigError("mt_rate must be positive");
    if (worker_mode && env != "rbf") throw ConfigError("worker_mode is rbf-only");
    if (req_scale <= 0.0) throw ConfigError("req_scale must be positive");
}

namespace {

constexpr const char* kSpecHeader = "allocforge-spec v1";

std::string join_weights(const std::vector<double>& w) {
    std::ostringstream os;
    for (std::size_t i = 0; i < w.size(); ++i) os << (i ? "," : "") << w[i];
    return os.str();
}

std::vector<double> parse_weights(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    return out;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

void save_env_spec(const std::string& path, const EnvSpec& s) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write env spec: " + path);
    out << kSpecHeader << "\n";
    out.precision(17);
    out << "env = " << s.env << "\n";
    out << "n_entities = " << s.n_entities << "\n";
    out << "k = " << s.k << "\n";
    out << "map_extent = " << s.map_extent << "\n";
    out << "episode_steps = " << s.episode_steps << "\n";
    out << "entity_seed = " << s.entity_seed << "\n";
    out << "speed = " << s.speed << "\n";
    out << "worker_mode = " << (s.worker_mode ? "true" : "false") << "\n";
    out << "retain_tasks = " << s.retain_tasks << "\n";
    out << "retain_cost = " << s.retain_cost << "\n";
    out << "retain_reward = " << s.retain_reward << "\n";
    out << "retain_last_reward = " << s.retain_last_reward << "\n";
    out << "ept_peak_prob = " << s.ept_peak_prob << "\n";
    out << "ept_surplus_max = " << s.ept_surplus_max << "\n";
    out << "ept_need_min = " << s.ept_need_min << "\n";
    out << "ept_need_max = " << s.ept_need_max << "\n";
    out << "ept_completion_reward = " << s.ept_completion_reward << "\n";
    out << "ept_extra_edges = " << s.ept_extra_edges << "\n";
    out << "rbf_spawn_period = " << s.rbf_spawn_period << "\n";
    out << "rbf_spawn_min = " << s.rbf_spawn_min << "\n";
    out << "rbf_spawn_max = " << s.rbf_spawn_max << "\n";
    if (!s.rbf_spawn_weights.empty()) out << "rbf_spawn_weights = " << join_weights(s.rbf_spawn_weights) << "\n";
    out << "rbf_req_min = " << s.rbf_req_min << "\n";
    out << "rbf_req_max = " << s.rbf_req_max << "\n";
    out << "rbf_decay_grace = " << s.rbf_decay_grace << "\n";
    out << "rbf_decay_period = " << s.rbf_decay_period << "\n";
    out << "rbf_decay_factor = " << s.rbf_decay_factor << "\n";
    out << "rbf_cost_dist = " << s.rbf_cost_dist << "\n";
    out << "rbf_cost_res = " << s.rbf_cost_res << "\n";
    out << "rbf_reward_scale = " << s.rbf_reward_scale << "\n";
    out << "rbf_res_min = " << s.rbf_res_min << "\n";
    out << "rbf_res_max = " << s.rbf_res_max << "\n";
    out << "mt_rate = " << s.mt_rate << "\n";
    out << "mt_req_min = " << s.mt_req_min << "\n";
    out << "mt_req_max = " << s.mt_req_max << "\n";
    out << "mt_cargo_min = " << s.mt_cargo_min << "\n";
    out << "mt_cargo_max = " << s.mt_cargo_max << "\n";
    out << "mt_cost_dist = " << s.mt_cost_dist << "\n";
    out << "mt_reward_scale = " << s.mt_reward_scale << "\n";
    out << "req_scale = " << s.req_scale << "\n";
}

EnvSpec load_env_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open env spec: " + path);
    std::string line;
    if (!std::getline(in, line) || trim(line) != kSpecHeader)
        throw ConfigError("bad env spec header in " + path);
    EnvSpec s;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError("bad env spec line: " + t);
        const std::string key = trim(t.substr(0, eq));
        const std::string val = trim(t.substr(eq + 1));
        auto as_int = [&] { return std::stoi(val); };
        auto as_double = [&] { return std::stod(val); };
        auto as_bool = [&] {
            if (val == "true") return true;
            if (val == "false") return false;
            throw ConfigError("bad boolean: " + val);
        };
        if (key == "env") s.env = val;
        else if (key == "n_entities") s.n_entities = as_int();
        else if (key == "k") s.k = as_int();
        else if (key == "map_extent") s.map_extent = as_double();
        else if (key == "episode_steps") s.episode_steps = as_int();
        else if (key == "entity_seed") s.entity_seed = std::stoull(val);
        else if (key == "speed") s.speed = as_double();
        else if (key == "worker_mode") s.worker_mode = as_bool();
        else if (key == "retain_tasks") s.retain_tasks = as_int();
        else if (key == "retain_cost") s.retain_cost = as_double();
        else if (key == "retain_reward") s.retain_reward = as_double();
        else if (key == "retain_last_reward") s.retain_last_reward = as_double();
        else if (key == "ept_peak_prob") s.ept_peak_prob = as_double();
        else if (key == "ept_surplus_max") s.ept_surplus_max = as_double();
        else if (key == "ept_need_min") s.ept_need_min = as_double();
        else if (key == "ept_need_max") s.ept_need_max = as_double();
        else if (key == "ept_completion_reward") s.ept_completion_reward = as_double();
        else if (key == "ept_extra_edges") s.ept_extra_edges = as_int();
        else if (key == "rbf_spawn_period") s.rbf_spawn_period = as_int();
        else if (key == "rbf_spawn_min") s.rbf_spawn_min = as_int();
        else if (key == "rbf_spawn_max") s.rbf_spawn_max = as_int();
        else if (key == "rbf_spawn_weights") s.rbf_spawn_weights = parse_weights(val);
        else if (key == "rbf_req_min") s.rbf_req_min = as_double();
        else if (key == "rbf_req_max") s.rbf_req_max = as_double();
        else if (key == "rbf_decay_grace") s.rbf_decay_grace = as_int();
        else if (key == "rbf_decay_period") s.rbf_decay_period = as_int();
        else if (key == "rbf_decay_factor") s.rbf_decay_factor = as_double();
        else if (key == "rbf_cost_dist") s.rbf_cost_dist = as_double();
        else if (key == "rbf_cost_res") s.rbf_cost_res = as_double();
        else if (key == "rbf_reward_scale") s.rbf_reward_scale = as_double();
        else if (key == "rbf_res_min") s.rbf_res_min = as_double();
        else if (key == "rbf_res_max") s.rbf_res_max = as_double();
        else if (key == "mt_rate") s.mt_rate = as_double();
        else if (key == "mt_req_min") s.mt_req_min = as_double();
        else if (key == "mt_req_max") s.mt_req_max = as_double();
        else if (key == "mt_cargo_min") s.mt_cargo_min = as_double();
        else if (key == "mt_cargo_max") s.mt_cargo_max = as_double();
        else if (key == "mt_cost_dist") s.mt_cost_dist = as_double();
        else if (key == "mt_reward_scale") s.mt_reward_scale = as_double();
        else if (key == "req_scale") s.req_scale = as_double();
        else throw ConfigError("unknown env spec key: " + key);
    }
    s.validate();
    return s;
}

EnvSpec perturb_entities(const EnvSpec& base, PerturbMode, std::uint64_t seed) {
    EnvSpec s = base;
    s.entity_seed = substream(seed, "perturb-entities", base.entity_seed);
    if (base.env == "rbf") s.n_entities = std::max(1, base.n_entities / 2);
    if (base.env == "mt") s.n_entities = std::max(1, (base.n_entities * 4) / 5);
    s.validate();
    return s;
}

EnvSpec perturb_tasks(const EnvSpec& base, std::uint64_t seed) {
    EnvSpec s = base;
    Rng rng(substream(seed, "perturb-tasks"));
    s.req_scale = base.req_scale * rng.uniform(0.75, 1.5);
    if (base.env == "rbf") {
        const int buckets = base.rbf_spawn_max - base.rbf_spawn_min + 1;
        std::vector<double> w(buckets);
        double total = 0.0;
        for (double& x : w) {
            x = rng.uniform(0.1, 1.0);
            total += x;
        }
        for (double& x : w) x /= total;
        s.rbf_spawn_weights = w;
    } else if (base.env == "mt") {
        s.mt_rate = base.mt_rate * rng.uniform(0.5, 1.5);
    } else if (base.env == "ept") {
        s.ept_peak_prob = std::min(0.9, std::max(0.01, base.ept_peak_prob * rng.uniform(0.5, 1.5)));
    }
    s.validate();
    return s;
}

// ---------------------------------------------------------------- Env base

std::vector<Entity> Env::available_entities() const {
    std::vector<Entity> out;
    for (const Entity& e : entities_)
        if (!e.committed_to) out.push_back(e);
    return out;
}

bool Env::eligible(const Entity&, const Task&) const { return true; }

void Env::set_bids(const std::vector<std::pair<int, double>>&) {
    throw ConfigError("bids are only accepted in rbf worker mode");
}

void Env::base_reset(std::uint64_t seed) {
    step_ = 0;
    next_task_id_ = 0;
    tasks_.clear();
    entities_.clear();
    rng_ = Rng(substream(seed, "episode"));
}

namespace {

std::unordered_map<int, const Entity*> index_entities(const std::vector<Entity>& entities) {
    std::unordered_map<int, const Entity*> by_id;
    for (const Entity& e : entities) by_id.emplace(e.id, &e);
    return by_id;
}

// ---------------------------------------------------------------- retain

class RetainEnv final : public Env {
public:
    explicit RetainEnv(EnvSpec spec) : Env(std::move(spec)) { reset(0); }

    void reset(std::uint64_t seed) override {
        base_reset(seed);
        const int n = spec_.n_entities, N = spec_.retain_tasks;
        for (int i = 0; i < n; ++i) {
            Entity e;
            e.id = i;
            e.demand = spec_.retain_cost;
            std::vector<double> member(N, 0.0);
            if (i == 0)
                std::fill(member.begin(), member.end(), 1.0);  // the almighty
            else if (i < N)
                member[i - 1] = 1.0;  // exclusive best entity of task i-1
            e.resources = ResourceVector(member);
            entities_.push_back(std::move(e));
        }
        for (int j = 0; j < N; ++j) {
            Task t;
            t.id = next_task_id_++;
            t.reward = j + 1 == N ? spec_.retain_last_reward : spec_.retain_reward;
            std::vector<double> req(N, 0.0);
            req[j] = 1.0;
            t.requirement = ResourceVector(req);
            t.residual = t.requirement;
            t.x = static_cast<double>(j);
            tasks_.push_back(std::move(t));
        }
    }

    StepOutcome step(const Allocation& allocation) override {
        validate_allocation(allocation, tasks_, entities_);
        StepOutcome out;
        out.manager_reward = manager_step_reward(tasks_, allocation, entities_);
        const auto by_id = index_entities(entities_);
        for (Task& t : tasks_) {
            const std::vector<int>* list = allocation.list_for(t.id);
            if (!list) continue;
            std::vector<Entity> selected;
            for (int id : *list) selected.push_back(*by_id.at(id));
            if (completion_check(t, selected)) {
                t.completed = true;
                t.residual = ResourceVector::zeros(t.requirement.size());
                out.completed_task_ids.push_back(t.id);
                out.completed_profits.push_back(task_profit(t, selected));
                for (const Entity& e : selected) out.paid_demand_sum += e.demand;
            }
        }
        ++step_;
        out.done = true;
        return out;
    }

    std::unique_ptr<Env> clone() const override { return std::make_unique<RetainEnv>(*this); }
};

// ---------------------------------------------------------------- ept

class EptEnv final : public Env {
public:
    explicit EptEnv(EnvSpec spec) : Env(std::move(spec)) {
        build_grid();
        reset(0);
    }

    void reset(std::uint64_t seed) override {
        base_reset(seed);
        respawn();
    }

    bool eligible(const Entity& entity, const Task& task) const override {
        return edge_cost_[entity.id][tower_of_task_.at(task.id)] > 0.0;
    }

    StepOutcome step(const Allocation& allocation) override {
        validate_allocation(allocation, tasks_, entities_);
        const auto by_id = index_entities(entities_);
        for (const auto& [task_id, list] : allocation.lists) {
            const Task& t = *std::find_if(tasks_.begin(), tasks_.end(),
                                          [&](const Task& x) { return x.id == task_id; });
            for (int id : list)
                if (!eligible(*by_id.at(id), t))
                    throw InvalidAllocation("no wire between tower " + std::to_string(id) +
                                            " and task " + std::to_string(task_id));
        }
        StepOutcome out;
        for (Task& t : tasks_) {
            const std::vector<int>* list = allocation.list_for(t.id);
            if (!list || list->empty()) continue;
            const int tower = tower_of_task_.at(t.id);
            std::vector<Entity> selected;
            for (int id : *list) {
                Entity e = *by_id.at(id);
                e.demand = distance(e.x, e.y, positions_[tower].first, positions_[tower].second) *
                           edge_cost_[id][tower];
                selected.push_back(std::move(e));
            }
            if (completion_check(t, selected)) {
                t.completed = true;
                out.manager_reward += task_profit(t, selected);
                out.completed_task_ids.push_back(t.id);
                out.completed_profits.push_back(task_profit(t, selected));
                for (const Entity& e : selected) out.paid_demand_sum += e.demand;
            }
        }
        ++step_;
        respawn();  // peaks last a single step
        out.done = step_ >= spec_.episode_steps;
        return out;
    }

    std::unique_ptr<Env> clone() const override { return std::make_unique<EptEnv>(*this); }

private:
    void build_grid() {
        Rng grid_rng(substream(spec_.entity_seed, "ept-grid"));
        const int n = spec_.n_entities;
        positions_.resize(n);
        for (auto& p : positions_)
            p = {grid_rng.uniform(0.0, spec_.map_extent), grid_rng.uniform(0.0, spec_.map_extent)};
        edge_cost_.assign(n, std::vector<double>(n, 0.0));
        const double materials[3] = {0.1, 0.3, 0.5};
        auto connect = [&](int a, int b) {
            if (a == b || edge_cost_[a][b] > 0.0) return;
            const double c = materials[grid_rng.uniform_int(0, 2)];
            edge_cost_[a][b] = edge_cost_[b][a] = c;
        };
        for (int i = 1; i < n; ++i) connect(i, grid_rng.uniform_int(0, i - 1));  // spanning tree
        for (int e = 0; e < spec_.ept_extra_edges; ++e)
            connect(grid_rng.uniform_int(0, n - 1), grid_rng.uniform_int(0, n - 1));
    }

    void respawn() {
        tasks_.clear();
        entities_.clear();
        tower_of_task_.clear();
        const int n = spec_.n_entities;
        std::vector<bool> peaked(n, false);
        std::vector<double> need(n, 0.0), surplus(n, 0.0);
        for (int i = 0; i < n; ++i) {
            peaked[i] = rng_.uniform() < spec_.ept_peak_prob;
            need[i] = rng_.uniform(spec_.ept_need_min, spec_.ept_need_max) * spec_.req_scale;
            surplus[i] = rng_.uniform(0.0, spec_.ept_surplus_max);
        }
        for (int i = 0; i < n; ++i) {
            if (peaked[i]) {
                Task t;
                t.id = next_task_id_++;
                t.reward = spec_.ept_completion_reward;
                t.requirement = ResourceVector({need[i]});
                t.residual = t.requirement;
                t.x = positions_[i].first;
                t.y = positions_[i].second;
                tower_of_task_[t.id] = i;
                tasks_.push_back(std::move(t));
            } else {
                Entity e;
                e.id = i;
                e.resources = ResourceVector({surplus[i]});
                e.x = positions_[i].first;
                e.y = positions_[i].second;
                entities_.push_back(std::move(e));
            }
        }
    }

    std::vector<std::pair<double, double>> positions_;
    std::vector<std::vector<double>> edge_cost_;  // 0 means no wire
    std::map<int, int> tower_of_task_;
};

// ------------------------------------------------- rbf / mt (travel base)

class TravelEnv : public Env {
public:
    StepOutcome step(const Allocation& allocation) override {
        {
            const std::vector<Entity> available = available_entities();
            validate_allocation(allocation, tasks_, available);
        }
        StepOutcome out;
        if (spec_.worker_mode) out.worker_rewards.assign(entities_.size(), 0.0);

        commit(allocation);
        advance_travel();
        resolve_completions(out);
        age_and_decay();
        refresh_residuals();
        ++step_;
        spawn_tasks();
        out.done = step_ >= spec_.episode_steps;
        return out;
    }

    void set_bids(const std::vector<std::pair<int, double>>& bids) override {
        if (!spec_.worker_mode) Env::set_bids(bids);
        for (const auto& [id, bid] : bids) {
            for (Entity& e : entities_) {
                if (e.id != id || e.committed_to) continue;
                e.demand = std::max(0.0, bid);
            }
        }
    }

protected:
    explicit TravelEnv(EnvSpec spec) : Env(std::move(spec)) {}

    virtual double commit_cost(const Entity& e, const Task& t) const = 0;
    virtual void on_completion(std::vector<int>& selected_indices) = 0;
    virtual void spawn_tasks() = 0;
    virtual bool decay_enabled() const { return false; }

    void base_travel_reset(std::uint64_t seed) {
        base_reset(seed);
        travel_.clear();
        committed_.clear();
    }

    void commit(const Allocation& allocation) {
        for (const auto& [task_id, list] : allocation.lists) {
            const Task& t = *find_task(task_id);
            for (int id : list) {
                Entity& e = *find_entity(id);
                e.committed_to = task_id;
                if (!spec_.worker_mode || e.kind == EntityKind::Item)
                    e.demand = commit_cost(e, t);
                const double dist = distance(e.x, e.y, t.x, t.y);
                travel_[id] = static_cast<int>(std::ceil(dist / spec_.speed));
                committed_[task_id].push_back(id);
            }
        }
    }

    void advance_travel() {
        for (auto& [id, remaining] : travel_) {
            if (remaining <= 0) continue;
            --remaining;
            if (remaining == 0) {
                Entity& e = *find_entity(id);
                const Task* t = find_task(*e.committed_to);
                if (t) {
                    e.x = t->x;
                    e.y = t->y;
                }
            }
        }
    }

    void resolve_completions(StepOutcome& out) {
        std::vector<int> done_tasks;
        for (Task& t : tasks_) {
            auto it = committed_.find(t.id);
            if (it == committed_.end() || it->second.empty()) continue;
            bool all_arrived = true;
            for (int id : it->second)
                if (travel_[id] > 0) all_arrived = false;
            if (!all_arrived) continue;

            std::vector<Entity> selected;
            std::vector<int> indices;
            for (int id : it->second) {
                for (std::size_t i = 0; i < entities_.size(); ++i)
                    if (entities_[i].id == id) indices.push_back(static_cast<int>(i));
                selected.push_back(*find_entity(id));
            }
            ResourceVector total = ResourceVector::zeros(t.requirement.size());
            for (const Entity& e : selected) total.add(e.resources);
            if (!total.covers(t.requirement)) continue;  // wait for top-ups

            const double profit = task_profit(t, selected);
            if (profit >= 0.0) {
                out.manager_reward += profit;
                out.completed_task_ids.push_back(t.id);
                out.completed_profits.push_back(profit);
                for (int idx : indices) {
                    out.paid_demand_sum += entities_[idx].demand;
                    if (spec_.worker_mode && entities_[idx].kind == EntityKind::Worker) {
                        out.worker_rewards[idx] += entities_[idx].demand;
                        out.worker_reward_sum += entities_[idx].demand;
                    }
                }
                double before = 0.0;
                for (int idx : indices) before += entities_[idx].resources.sum();
                on_completion(indices);
                double after = 0.0;
                for (int idx : indices) after += entities_[idx].resources.sum();
                out.resources_consumed += before - after;
                t.completed = true;
            }
            // covered but negative profit: abandoned; entities walk free
            for (int idx : indices) {
                entities_[idx].committed_to.reset();
                travel_.erase(entities_[idx].id);
            }
            committed_.erase(t.id);
            done_tasks.push_back(t.id);
        }
        for (int id : done_tasks)
            tasks_.erase(std::remove_if(tasks_.begin(), tasks_.end(),
                                        [&](const Task& t) { return t.id == id; }),
                         tasks_.end());
    }

    void age_and_decay() {
        if (!decay_enabled()) return;
        for (Task& t : tasks_) {
            ++t.age;
            if (t.age >= spec_.rbf_decay_grace &&
                (t.age - spec_.rbf_decay_grace) % spec_.rbf_decay_period == 0) {
                t.reward *= spec_.rbf_decay_factor;
                t.requirement.scale(spec_.rbf_decay_factor);
            }
        }
    }

    void refresh_residuals() {
        for (Task& t : tasks_) {
            ResourceVector pledged = ResourceVector::zeros(t.requirement.size());
            auto it = committed_.find(t.id);
            if (it != committed_.end())
                for (int id : it->second) pledged.add(find_entity(id)->resources);
            ResourceVector residual = t.requirement;
            residual.subtract_clamped(pledged);
            t.residual = residual;
        }
    }

    Task* find_task(int id) {
        for (Task& t : tasks_)
            if (t.id == id) return &t;
        return nullptr;
    }
    Entity* find_entity(int id) {
        for (Entity& e : entities_)
            if (e.id == id) return &e;
        return nullptr;
    }

    std::map<int, int> travel_;                   // entity id -> steps remaining
    std::map<int, std::vector<int>> committed_;   // task id -> entity ids
};

class RbfEnv final : public TravelEnv {
public:
    explicit RbfEnv(EnvSpec spec) : TravelEnv(std::move(spec)) { reset(0); }

    void reset(std::uint64_t seed) override {
        base_travel_reset(seed);
        Rng ent_rng(substream(spec_.entity_seed, "rbf-entities"));
        for (int i = 0; i < spec_.n_entities; ++i) {
            Entity e;
            e.id = i;
            e.kind = spec_.worker_mode ? EntityKind::Worker : EntityKind::Item;
            std::vector<double> res(spec_.k);
            for (double& r : res)
                r = static_cast<double>(ent_rng.uniform_int(static_cast<int>(spec_.rbf_res_min),
                                                            static_cast<int>(spec_.rbf_res_max)));
            e.resources = ResourceVector(res);
            e.x = spec_.map_extent / 2.0;  // everyone starts mid-map
            e.y = spec_.map_extent / 2.0;
            entities_.push_back(std::move(e));
        }
        spawn_batch();
    }

    std::unique_ptr<Env> clone() const override { return std::make_unique<RbfEnv>(*this); }

protected:
    double commit_cost(const Entity& e, const Task& t) const override {
        return spec_.rbf_cost_dist * distance(e.x, e.y, t.x, t.y) +
               spec_.rbf_cost_res * e.resources.sum();
    }
    void on_completion(std::vector<int>&) override {}  // foragers keep their attributes
    bool decay_enabled() const override { return true; }

    void spawn_tasks() override {
        if (step_ % spec_.rbf_spawn_period == 0) spawn_batch();
    }

private:
    void spawn_batch() {
        const int buckets = spec_.rbf_spawn_max - spec_.rbf_spawn_min + 1;
        int count;
        if (spec_.rbf_spawn_weights.empty()) {
            count = rng_.uniform_int(spec_.rbf_spawn_min, spec_.rbf_spawn_max);
        } else {
            const double u = rng_.uniform();
            double cum = 0.0;
            count = spec_.rbf_spawn_max;
            for (int b = 0; b < buckets; ++b) {
                cum += spec_.rbf_spawn_weights[b];
                if (u < cum) {
                    count = spec_.rbf_spawn_min + b;
                    break;
                }
            }
        }
        for (int c = 0; c < count; ++c) {
            Task t;
            t.id = next_task_id_++;
            std::vector<double> req(spec_.k);
            for (double& r : req)
                r = spec_.req_scale *
                    static_cast<double>(rng_.uniform_int(static_cast<int>(spec_.rbf_req_min),
                                                         static_cast<int>(spec_.rbf_req_max)));
            t.requirement = ResourceVector(req);
            t.residual = t.requirement;
            t.reward = spec_.rbf_reward_scale * t.requirement.sum();
            t.x = rng_.uniform(0.0, spec_.map_extent);
            t.y = rng_.uniform(0.0, spec_.map_extent);
            tasks_.push_back(std::move(t));
        }
    }
};

class MtEnv final : public TravelEnv {
public:
    explicit MtEnv(EnvSpec spec) : TravelEnv(std::move(spec)) { reset(0); }

    void reset(std::uint64_t seed) override {
        base_travel_reset(seed);
        Rng ent_rng(substream(spec_.entity_seed, "mt-entities"));
        for (int i = 0; i < spec_.n_entities; ++i) {
            Entity e;
            e.id = i;
            std::vector<double> res(spec_.k);
            for (double& r : res) r = ent_rng.uniform(spec_.mt_cargo_min, spec_.mt_cargo_max);
            e.resources = ResourceVector(res);
            e.x = ent_rng.uniform(0.0, spec_.map_extent);
            e.y = ent_rng.uniform(0.0, spec_.map_extent);
            entities_.push_back(std::move(e));
        }
        spawn_tasks();
    }

    std::unique_ptr<Env> clone() const override { return std::make_unique<MtEnv>(*this); }

protected:
    double commit_cost(const Entity& e, const Task& t) const override {
        return spec_.mt_cost_dist * distance(e.x, e.y, t.x, t.y);
    }

    void on_completion(std::vector<int>& selected_indices) override {
        // Delivered cargo is gone.
        for (int idx : selected_indices)
            entities_[idx].resources = ResourceVector::zeros(spec_.k);
    }

    void spawn_tasks() override {
        const int count = rng_.poisson(spec_.mt_rate);
        for (int c = 0; c < count; ++c) {
            Task t;
            t.id = next_task_id_++;
            std::vector<double> req(spec_.k);
            for (double& r : req) r = spec_.req_scale * rng_.uniform(spec_.mt_req_min, spec_.mt_req_max);
            t.requirement = ResourceVector(req);
            t.residual = t.requirement;
            t.reward = spec_.mt_reward_scale * t.requirement.sum();
            t.x = rng_.uniform(0.0, spec_.map_extent);
            t.y = rng_.uniform(0.0, spec_.map_extent);
            tasks_.push_back(std::move(t));
        }
    }
};

}  // namespace

std::unique_ptr<Env> make_env(const EnvSpec& spec) {
    spec.validate();
    if (spec.env == "retain") return std::make_unique<RetainEnv>(spec);
    if (spec.env == "ept") return std::make_unique<EptEnv>(spec);
    if (spec.env == "rbf") return std::make_unique<RbfEnv>(spec);
    if (spec.env == "mt") return std::make_unique<MtEnv>(spec);
    throw ConfigError("unknown env: " + spec.env);
}

}  // namespace af
