#include "af/core.hpp"

#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace af {

double distance(double ax, double ay, double bx, double by) {
    return std::hypot(ax - bx, ay - by);
}

double task_profit(const Task& task, const std::vector<Entity>& selected) {
    double cost = 0.0;
    for (const Entity& e : selected) cost += e.demand;
    return task.reward - cost;
}

bool completion_check(const Task& task, const std::vector<Entity>& selected) {
    ResourceVector total = ResourceVector::zeros(task.requirement.size());
    for (const Entity& e : selected) total.add(e.resources);
    if (!total.covers(task.requirement)) return false;
    return task_profit(task, selected) >= 0.0;
}

void validate_allocation(const Allocation& allocation, const std::vector<Task>& tasks,
                         const std::vector<Entity>& entities) {
    std::unordered_set<int> task_ids, entity_ids, used;
    for (const Task& t : tasks) task_ids.insert(t.id);
    for (const Entity& e : entities) entity_ids.insert(e.id);
    for (const auto& [task_id, list] : allocation.lists) {
        if (!task_ids.count(task_id)) throw InvalidAllocation("unknown task id " + std::to_string(task_id));
        if (allocation.abandoned.count(task_id) && !list.empty())
            throw InvalidAllocation("abandoned task " + std::to_string(task_id) + " has entities");
        for (int entity_id : list) {
            if (!entity_ids.count(entity_id))
                throw InvalidAllocation("unknown entity id " + std::to_string(entity_id));
            if (!used.insert(entity_id).second)
                throw InvalidAllocation("entity " + std::to_string(entity_id) + " allocated twice");
        }
    }
    for (int task_id : allocation.abandoned)
        if (!task_ids.count(task_id)) throw InvalidAllocation("unknown abandoned task id");
}

double manager_step_reward(const std::vector<Task>& tasks, const Allocation& allocation,
                           const std::vector<Entity>& entities) {
    validate_allocation(allocation, tasks, entities);
    std::unordered_map<int, const Entity*> by_id;
    for (const Entity& e : entities) by_id.emplace(e.id, &e);
    double total = 0.0;
    for (const Task& task : tasks) {
        const std::vector<int>* list = allocation.list_for(task.id);
        if (!list || allocation.abandoned.count(task.id)) continue;
        std::vector<Entity> selected;
        selected.reserve(list->size());
        for (int id : *list) selected.push_back(*by_id.at(id));
        if (completion_check(task, selected)) total += task_profit(task, selected);
    }
    return total;
}

}  // namespace af
