// Domain types and reward accounting shared by every other module.
//
// A manager assigns entities to tasks. A task pays its reward minus the
// demands of the entities assigned to it, and only completed tasks count:
// completion needs the selected resources to cover the requirement
// componentwise AND the profit to be non-negative (a negative-profit task
// is abandoned).

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace af {

struct InvalidAllocation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Fixed-length vector of non-negative resource quantities.
class ResourceVector {
public:
    ResourceVector() = default;
    explicit ResourceVector(std::vector<double> values) : v_(std::move(values)) { check(); }
    static ResourceVector zeros(std::size_t k) { return ResourceVector(std::vector<double>(k, 0.0)); }

    std::size_t size() const { return v_.size(); }
    double operator[](std::size_t i) const { return v_[i]; }
    const std::vector<double>& values() const { return v_; }

    void add(const ResourceVector& other) {
        require_same_size(other);
        for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += other.v_[i];
    }

    /// Componentwise max(0, this - other).
    void subtract_clamped(const ResourceVector& other) {
        require_same_size(other);
        for (std::size_t i = 0; i < v_.size(); ++i) v_[i] = std::max(0.0, v_[i] - other.v_[i]);
    }

    void scale(double factor) {
        if (factor < 0.0) throw std::invalid_argument("negative resource scale");
        for (double& x : v_) x *= factor;
    }

    void clamp_to(const ResourceVector& upper) {
        require_same_size(upper);
        for (std::size_t i = 0; i < v_.size(); ++i) v_[i] = std::min(v_[i], upper.v_[i]);
    }

    /// true iff this >= other componentwise.
    bool covers(const ResourceVector& other) const {
        require_same_size(other);
        for (std::size_t i = 0; i < v_.size(); ++i)
            if (v_[i] < other.v_[i]) return false;
        return true;
    }

    bool all_zero() const {
        for (double x : v_)
            if (x != 0.0) return false;
        return true;
    }

    double sum() const {
        double s = 0.0;
        for (double x : v_) s += x;
        return s;
    }

    bool operator==(const ResourceVector& other) const { return v_ == other.v_; }

private:
    void check() const {
        for (double x : v_)
            if (!(x >= 0.0)) throw std::invalid_argument("resource component < 0");
    }
    void require_same_size(const ResourceVector& other) const {
        if (other.v_.size() != v_.size()) throw std::invalid_argument("resource dimension mismatch");
    }

    std::vector<double> v_;
};

struct Task {
    int id = 0;
    double reward = 0.0;
    ResourceVector requirement;
    ResourceVector residual;  // remaining need; <= requirement componentwise
    double x = 0.0, y = 0.0;
    bool completed = false;
    int age = 0;  // steps since spawn
};

enum class EntityKind { Item, Worker };

struct Entity {
    int id = 0;
    EntityKind kind = EntityKind::Item;
    ResourceVector resources;
    double x = 0.0, y = 0.0;
    double demand = 0.0;  // d_i; cost-rule output for items, bid for workers
    std::optional<int> committed_to;
};

/// Per-task ordered entity-id lists plus the set of abandoned tasks.
struct Allocation {
    std::map<int, std::vector<int>> lists;  // task id -> entity ids in pick order
    std::set<int> abandoned;

    const std::vector<int>* list_for(int task_id) const {
        auto it = lists.find(task_id);
        return it == lists.end() ? nullptr : &it->second;
    }
};

double distance(double ax, double ay, double bx, double by);

/// R_i = r_i - sum of selected demands. Empty selection allowed.
double task_profit(const Task& task, const std::vector<Entity>& selected);

/// true iff the selected resources cover the requirement componentwise and
/// the profit is non-negative (negative profit means the manager abandons).
bool completion_check(const Task& task, const std::vector<Entity>& selected);

/// Throws InvalidAllocation on unknown ids or an entity in two lists.
void validate_allocation(const Allocation& allocation, const std::vector<Task>& tasks,
                         const std::vector<Entity>& entities);

/// Sum of task_profit over tasks whose completion_check passes.
double manager_step_reward(const std::vector<Task>& tasks, const Allocation& allocation,
                           const std::vector<Entity>& entities);

}  // namespace af
