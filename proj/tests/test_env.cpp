#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "af/env.hpp"
#include "af/rng.hpp"

using namespace af;

namespace {

/// Random but valid allocation: disjoint subsets of available entities.
Allocation random_allocation(const Env& env, Rng& rng, double assign_prob = 0.4) {
    Allocation a;
    std::vector<const Task*> open;
    for (const Task& t : env.open_tasks()) open.push_back(&t);
    if (open.empty()) return a;
    for (const Entity& e : env.available_entities()) {
        if (rng.uniform() > assign_prob) continue;
        const Task* t = open[rng.uniform_int(0, static_cast<int>(open.size()) - 1)];
        if (!env.eligible(e, *t)) continue;
        a.lists[t->id].push_back(e.id);
    }
    return a;
}

struct TrajectoryDigest {
    std::vector<double> rewards;
    std::vector<std::size_t> task_counts;
    std::vector<double> resource_totals;

    bool operator==(const TrajectoryDigest& other) const {
        return rewards == other.rewards && task_counts == other.task_counts &&
               resource_totals == other.resource_totals;
    }
};

TrajectoryDigest run_scripted(Env& env, std::uint64_t seed, int steps) {
    TrajectoryDigest digest;
    env.reset(seed);
    Rng rng(substream(seed, "script"));
    for (int s = 0; s < steps; ++s) {
        const StepOutcome out = env.step(random_allocation(env, rng));
        digest.rewards.push_back(out.manager_reward);
        digest.task_counts.push_back(env.open_tasks().size());
        double total = 0.0;
        for (const Entity& e : env.all_entities()) total += e.resources.sum();
        digest.resource_totals.push_back(total);
        if (out.done) break;
    }
    return digest;
}

}  // namespace

TEST_CASE("reset determinism and initial placement") {
    for (const EnvSpec& spec : {EnvSpec::retain_default(), EnvSpec::ept_default(),
                                EnvSpec::rbf_default(), EnvSpec::mt_default()}) {
        auto a = make_env(spec);
        auto b = make_env(spec);
        a->reset(5);
        b->reset(5);
        REQUIRE(a->all_entities().size() == b->all_entities().size());
        for (std::size_t i = 0; i < a->all_entities().size(); ++i) {
            CHECK(a->all_entities()[i].resources == b->all_entities()[i].resources);
            CHECK(a->all_entities()[i].x == b->all_entities()[i].x);
        }
        REQUIRE(a->open_tasks().size() == b->open_tasks().size());
    }

    const auto rbf = make_env(EnvSpec::rbf_default());
    rbf->reset(0);
    CHECK(rbf->all_entities().size() == 100);
    for (const Entity& e : rbf->all_entities()) {
        CHECK(e.x == doctest::Approx(10.0));  // middle of the 20x20 map
        CHECK(e.y == doctest::Approx(10.0));
    }

    const auto mt = make_env(EnvSpec::mt_default());
    mt->reset(0);
    CHECK(mt->all_entities().size() == 50);
    for (const Entity& e : mt->all_entities()) CHECK(e.resources.sum() > 0.0);
}

TEST_CASE("retain structure: the almighty covers every task, the last needs it") {
    const EnvSpec spec = EnvSpec::retain_default();
    auto env = make_env(spec);
    env->reset(1);
    const auto& entities = env->all_entities();
    const auto& tasks = env->open_tasks();
    REQUIRE(static_cast<int>(tasks.size()) == spec.retain_tasks);
    for (const Task& t : tasks) CHECK(entities[0].resources.covers(t.requirement));
    // nobody else covers the last task's requirement
    for (std::size_t i = 1; i < entities.size(); ++i)
        CHECK_FALSE(entities[i].resources.covers(tasks.back().requirement));
    // every earlier task has exactly one exclusive member besides the almighty
    for (int j = 0; j + 1 < spec.retain_tasks; ++j) {
        int coverers = 0;
        for (const Entity& e : entities)
            if (e.resources.covers(tasks[j].requirement)) ++coverers;
        CHECK(coverers == 2);
    }
}

TEST_CASE("ept: transmission cost is distance times a wire material rate") {
    EnvSpec spec = EnvSpec::ept_default();
    spec.ept_peak_prob = 0.3;
    auto env = make_env(spec);
    int checked = 0;
    for (int episode = 0; episode < 10 && checked < 5; ++episode) {
        env->reset(episode);
        for (int s = 0; s < spec.episode_steps && checked < 5; ++s) {
            const auto tasks = env->open_tasks();
            if (tasks.empty()) {
                env->step(Allocation{});
                continue;
            }
            // single entity on a single task isolates one cost term
            const Task t = tasks[0];
            const std::vector<Entity> pool = env->available_entities();
            const Entity* helper = nullptr;
            for (const Entity& e : pool)
                if (env->eligible(e, t) && e.resources.covers(t.requirement)) helper = &e;
            if (!helper) {
                env->step(Allocation{});
                continue;
            }
            const double dist = distance(helper->x, helper->y, t.x, t.y);
            Allocation a;
            a.lists[t.id] = {helper->id};
            const StepOutcome out = env->step(a);
            bool completed = false;
            double profit = 0.0;
            for (std::size_t c = 0; c < out.completed_task_ids.size(); ++c) {
                if (out.completed_task_ids[c] == t.id) {
                    completed = true;
                    profit = out.completed_profits[c];
                }
            }
            if (!completed) continue;  // profit may have been negative
            const double implied_rate = (t.reward - profit) / dist;
            const bool known_material = std::fabs(implied_rate - 0.1) < 1e-9 ||
                                        std::fabs(implied_rate - 0.3) < 1e-9 ||
                                        std::fabs(implied_rate - 0.5) < 1e-9;
            CHECK(known_material);
            ++checked;
        }
    }
    CHECK(checked > 0);
}

TEST_CASE("ept: ineligible tower in an allocation is an error") {
    EnvSpec spec = EnvSpec::ept_default();
    spec.ept_peak_prob = 0.3;
    auto env = make_env(spec);
    for (int episode = 0; episode < 20; ++episode) {
        env->reset(episode + 100);
        const auto tasks = env->open_tasks();
        if (tasks.empty()) continue;
        for (const Entity& e : env->available_entities()) {
            if (env->eligible(e, tasks[0])) continue;
            Allocation a;
            a.lists[tasks[0].id] = {e.id};
            CHECK_THROWS_AS(env->step(a), InvalidAllocation);
            return;
        }
    }
    FAIL("never found an ineligible pair");
}

TEST_CASE("mt: completion clears cargo and conserves resources") {
    EnvSpec spec = EnvSpec::mt_small();
    auto env = make_env(spec);
    Rng rng(12);
    bool saw_clearing = false;
    for (int episode = 0; episode < 20; ++episode) {
        env->reset(episode);
        double previous_total = 0.0;
        for (const Entity& e : env->all_entities()) previous_total += e.resources.sum();
        bool done = false;
        while (!done) {
            const StepOutcome out = env->step(random_allocation(*env, rng, 0.7));
            done = out.done;
            double total = 0.0;
            for (const Entity& e : env->all_entities()) total += e.resources.sum();
            CHECK(total <= previous_total + 1e-9);
            CHECK(total == doctest::Approx(previous_total - out.resources_consumed));
            if (out.resources_consumed > 0.0) saw_clearing = true;
            previous_total = total;
        }
    }
    CHECK(saw_clearing);
}

TEST_CASE("rbf: stale tasks decay monotonically after the grace period") {
    EnvSpec spec = EnvSpec::rbf_small();
    spec.episode_steps = 40;
    auto env = make_env(spec);
    env->reset(21);
    // never allocate; watch the first batches rot
    std::map<int, std::pair<double, double>> last;  // id -> (reward, req sum)
    for (int s = 0; s < 40; ++s) {
        const StepOutcome out = env->step(Allocation{});
        for (const Task& t : env->open_tasks()) {
            const auto it = last.find(t.id);
            if (it != last.end()) {
                CHECK(t.reward <= it->second.first + 1e-12);
                CHECK(t.requirement.sum() <= it->second.second + 1e-12);
            }
            last[t.id] = {t.reward, t.requirement.sum()};
        }
        if (out.done) break;
    }
    // at least one surviving task must actually have decayed
    bool decayed = false;
    for (const Task& t : env->open_tasks())
        if (t.age > spec.rbf_decay_grace && t.reward < t.requirement.sum()) decayed = true;
    for (const Task& t : env->open_tasks())
        if (t.age > spec.rbf_decay_grace) decayed = true;
    CHECK(decayed);
}

TEST_CASE("commitment exclusivity and rejection of committed entities") {
    EnvSpec spec = EnvSpec::rbf_small();
    auto env = make_env(spec);
    env->reset(31);
    Rng rng(32);
    bool exercised = false;
    for (int s = 0; s < 30; ++s) {
        const StepOutcome out = env->step(random_allocation(*env, rng, 0.8));
        std::set<int> committed;
        for (const Entity& e : env->all_entities()) {
            if (!e.committed_to) continue;
            CHECK(committed.insert(e.id).second);  // each id at most once
            if (!exercised && !env->open_tasks().empty()) {
                Allocation bad;
                bad.lists[env->open_tasks()[0].id] = {e.id};
                CHECK_THROWS_AS(env->step(bad), InvalidAllocation);
                exercised = true;
            }
        }
        if (out.done) break;
    }
    CHECK(exercised);
}

TEST_CASE("trajectory determinism for every environment") {
    for (const EnvSpec& spec : {EnvSpec::retain_default(), EnvSpec::ept_default(),
                                EnvSpec::rbf_small(), EnvSpec::mt_small()}) {
        auto a = make_env(spec);
        auto b = make_env(spec);
        const auto da = run_scripted(*a, 99, 30);
        const auto db = run_scripted(*b, 99, 30);
        CHECK(da == db);
    }
}

TEST_CASE("clone preserves mid-episode state and rng") {
    auto env = make_env(EnvSpec::rbf_small());
    env->reset(41);
    Rng rng(42);
    for (int s = 0; s < 7; ++s) env->step(random_allocation(*env, rng));
    auto copy = env->clone();
    Rng rng_a(43), rng_b(43);
    for (int s = 0; s < 10; ++s) {
        const auto out_a = env->step(random_allocation(*env, rng_a));
        const auto out_b = copy->step(random_allocation(*copy, rng_b));
        CHECK(out_a.manager_reward == out_b.manager_reward);
        CHECK(env->open_tasks().size() == copy->open_tasks().size());
    }
}

TEST_CASE("perturb_entities follows the per-environment count rules") {
    const EnvSpec rbf = EnvSpec::rbf_default();
    const EnvSpec rbf_p = perturb_entities(rbf, PerturbMode::ZeroShot, 1);
    CHECK(rbf_p.n_entities == 50);
    CHECK(rbf_p.entity_seed != rbf.entity_seed);

    const EnvSpec mt = EnvSpec::mt_default();
    CHECK(perturb_entities(mt, PerturbMode::ZeroShot, 1).n_entities == 40);

    const EnvSpec ept = EnvSpec::ept_default();
    const EnvSpec ept_p = perturb_entities(ept, PerturbMode::FewShot, 1);
    CHECK(ept_p.n_entities == 20);  // count unchanged, attributes resampled
    CHECK(ept_p.entity_seed != ept.entity_seed);

    // fresh attributes actually differ
    auto base_env = make_env(rbf);
    auto pert_env = make_env(rbf_p);
    base_env->reset(0);
    pert_env->reset(0);
    bool any_diff = false;
    for (int i = 0; i < 50; ++i)
        any_diff |= !(base_env->all_entities()[i].resources == pert_env->all_entities()[i].resources);
    CHECK(any_diff);
}

TEST_CASE("perturb_tasks resamples spawn statistics deterministically") {
    const EnvSpec rbf = EnvSpec::rbf_default();
    const EnvSpec a = perturb_tasks(rbf, 7);
    const EnvSpec b = perturb_tasks(rbf, 7);
    CHECK(a.req_scale == b.req_scale);
    CHECK(a.rbf_spawn_weights == b.rbf_spawn_weights);
    CHECK(a.n_entities == rbf.n_entities);
    REQUIRE(!a.rbf_spawn_weights.empty());
    double sum = 0.0;
    for (double w : a.rbf_spawn_weights) sum += w;
    CHECK(sum == doctest::Approx(1.0));
    CHECK(a.req_scale != rbf.req_scale);

    // a +50%-scale requirement shift still validates
    EnvSpec scaled = rbf;
    scaled.req_scale = 1.5;
    CHECK_NOTHROW(scaled.validate());
}

TEST_CASE("env spec file round-trip and unknown-key rejection") {
    const EnvSpec spec = EnvSpec::rbf_small();
    save_env_spec("spec_roundtrip.tmp", spec);
    const EnvSpec loaded = load_env_spec("spec_roundtrip.tmp");
    CHECK(loaded.env == spec.env);
    CHECK(loaded.n_entities == spec.n_entities);
    CHECK(loaded.rbf_spawn_min == spec.rbf_spawn_min);
    CHECK(loaded.map_extent == spec.map_extent);

    std::ofstream bad("spec_bad.tmp");
    bad << "allocforge-spec v1\nenv = rbf\nnot_a_key = 3\n";
    bad.close();
    CHECK_THROWS_AS(load_env_spec("spec_bad.tmp"), ConfigError);

    std::ofstream worse("spec_worse.tmp");
    worse << "something else\n";
    worse.close();
    CHECK_THROWS_AS(load_env_spec("spec_worse.tmp"), ConfigError);
}
