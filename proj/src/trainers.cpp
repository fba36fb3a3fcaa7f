#include "af/trainers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>

namespace af {

void ReplayBuffer::push(Transition t) {
    if (ring_.size() < capacity_) {
        ring_.push_back(std::move(t));
    } else {
        ring_[cursor_] = std::move(t);
    }
    cursor_ = (cursor_ + 1) % capacity_;
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
    const std::size_t n = ring_.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // partial Fisher-Yates: first `batch` entries are a uniform draw
    const std::size_t take = std::min(batch, n);
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + rng.next_u64() % (n - i);
        std::swap(idx[i], idx[j]);
    }
    std::vector<const Transition*> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.push_back(&ring_[idx[i]]);
    return out;
}

double sac_actor_loss_value(const PreAssignment& pre, double q_total_under_policy, double alpha) {
    double log_prob = 0.0;
    for (double lp : pre.log_probs) log_prob += lp;
    return alpha * log_prob - q_total_under_policy;
}

double critic_td_target(double reward, bool terminal, double gamma, double bootstrap_max) {
    return reward + (terminal ? 0.0 : gamma * bootstrap_max);
}

double sac_critic_loss_value(const std::vector<double>& q, const std::vector<double>& targets) {
    if (q.empty() || q.size() != targets.size()) throw DimensionError("critic loss batch mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) acc += 0.5 * (targets[i] - q[i]) * (targets[i] - q[i]);
    return acc / static_cast<double>(q.size());
}

double bootstrap_max_q(const Allocator& alloc, const FeatureSnapshot& next, int samples, Rng& rng) {
    const int n = next.n(), m = next.m();
    if (n == 0 || m == 0) return 0.0;

    // Tiny instances: exact max by enumeration.
    double joint = 1.0;
    for (int i = 0; i < n && joint <= 729.0; ++i) joint *= m;
    if (joint <= 729.0) {
        std::vector<int> choice(n, 0);
        double best = alloc.q_total(next, choice, true);
        while (true) {
            int pos = n - 1;
            while (pos >= 0 && choice[pos] == m - 1) choice[pos--] = 0;
            if (pos < 0) break;
            ++choice[pos];
            best = std::max(best, alloc.q_total(next, choice, true));
        }
        return best;
    }

    const auto policy = alloc.pre_assign_policy(next);
    double best = alloc.q_total(next, Allocator::greedy_choices(policy), true);
    for (int s = 0; s < samples; ++s)
        best = std::max(best, alloc.q_total(next, Allocator::sample_choices(policy, rng), true));
    return best;
}

double sac_actor_update(Allocator& alloc, const std::vector<const Transition*>& batch, double alpha,
                        double lr) {
    if (batch.empty()) throw std::invalid_argument("empty actor batch");
    Tape tape;
    std::vector<Tape::Ref> losses;
    for (const Transition* t : batch) {
        Tape::Ref policy = alloc.policy_matrix_node(tape, t->state, true);
        // exact discrete entropy term: replayed choices are mostly
        // exploratory, so the sampled log pi(c) estimator is biased here
        Tape::Ref neg_entropy = alloc.policy_neg_entropy_node(tape, t->state, true);
        Tape::Ref q_tot = alloc.qtot_under_policy_node(tape, t->state, policy);
        losses.push_back(tape.sub(tape.scale(neg_entropy, alpha), q_tot));
    }
    Tape::Ref loss = tape.mean_op(tape.concat(losses));
    const double loss_value = tape.value0(loss);
    tape.backward(loss);
    clip_gradients(alloc.actor_blocks(), 10.0);
    adam_step(alloc.actor_blocks(), lr);
    return loss_value;
}

double sac_critic_update(Allocator& alloc, const std::vector<const Transition*>& batch, double gamma,
                         double lr, int bootstrap_samples, Rng& rng) {
    if (batch.empty()) throw std::invalid_argument("empty critic batch");
    std::vector<double> targets;
    targets.reserve(batch.size());
    for (const Transition* t : batch) {
        const double boot =
            t->done ? 0.0 : bootstrap_max_q(alloc, t->next_state, bootstrap_samples, rng);
        targets.push_back(critic_td_target(t->reward, t->done, gamma, boot));
    }
    Tape tape;
    std::vector<Tape::Ref> terms;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        Tape::Ref vm = -1;
        Tape::Ref q = alloc.qtot_node(tape, batch[b]->state, batch[b]->choices, true, &vm);
        Tape::Ref diff = tape.sub(q, tape.scalar(targets[b]));
        Tape::Ref term = tape.scale(tape.square(diff), 0.5);
        // light L2 anchor on the whole value matrix; without it the
        // unsampled entries and the mixing bias drift apart unboundedly
        if (vm >= 0) term = tape.add(term, tape.scale(tape.mean_op(tape.square(vm)), 1e-3));
        terms.push_back(term);
    }
    Tape::Ref loss = tape.mean_op(tape.concat(terms));
    const double loss_value = tape.value0(loss);
    tape.backward(loss);
    clip_gradients(alloc.critic_blocks(), 10.0);
    adam_step(alloc.critic_blocks(), lr);
    return loss_value;
}

SelectUpdateStats select_policy_update(Allocator& alloc, const std::vector<SelectTrace>& traces,
                                       double lr, double& baseline_mean, long& baseline_count) {
    SelectUpdateStats stats;
    std::vector<const SelectTrace*> usable;
    for (const SelectTrace& t : traces)
        if (t.resolved && !t.picked.empty()) usable.push_back(&t);
    if (usable.empty()) return stats;

    Tape tape;
    std::vector<Tape::Ref> policy_terms, value_terms;
    for (const SelectTrace* t : usable) {
        // f_v is the baseline head: a task-conditional baseline keeps the
        // per-pick cost differences from drowning in cross-task profit spread
        Tape tmp;
        const double baseline = tmp.value0(alloc.select_value_node(tmp, *t, false));
        const double advantage = t->profit - baseline;
        const auto log_probs = alloc.select_logprob_nodes(tape, *t, true);
        for (Tape::Ref lp : log_probs) policy_terms.push_back(tape.scale(lp, -advantage));
        Tape::Ref pred = alloc.select_value_node(tape, *t, true);
        value_terms.push_back(tape.square(tape.sub(pred, tape.scalar(t->profit))));
    }
    Tape::Ref policy_loss = tape.mean_op(tape.concat(policy_terms));
    Tape::Ref value_loss = tape.mean_op(tape.concat(value_terms));
    Tape::Ref loss = tape.add(policy_loss, value_loss);
    stats.policy_loss = tape.value0(policy_loss);
    stats.value_loss = tape.value0(value_loss);
    tape.backward(loss);
    auto blocks = alloc.select_blocks();
    auto vblocks = alloc.value_head_blocks();
    blocks.insert(blocks.end(), vblocks.begin(), vblocks.end());
    clip_gradients(blocks, 10.0);
    adam_step(blocks, lr);

    // running mean kept as a diagnostic of the profit scale
    for (const SelectTrace* t : usable) {
        ++baseline_count;
        baseline_mean += (t->profit - baseline_mean) / static_cast<double>(baseline_count);
    }
    return stats;
}

// ------------------------------------------------------------- workers

std::vector<double> worker_observation(const Entity& worker, const std::vector<Task>& open_tasks) {
    const int k = static_cast<int>(worker.resources.size());
    std::vector<double> obs = worker.resources.values();
    obs.push_back(worker.x);
    obs.push_back(worker.y);
    const Task* nearest = nullptr;
    double best = 0.0;
    for (const Task& t : open_tasks) {
        const double d = distance(worker.x, worker.y, t.x, t.y);
        if (!nearest || d < best) {
            nearest = &t;
            best = d;
        }
    }
    if (nearest) {
        for (int c = 0; c < k; ++c) obs.push_back(nearest->requirement[c]);
        obs.push_back(best);
    } else {
        for (int c = 0; c < k; ++c) obs.push_back(0.0);
        obs.push_back(0.0);
    }
    obs.push_back(static_cast<double>(open_tasks.size()));
    return obs;
}

WorkerPool::WorkerPool(int count, int k, int hidden, std::uint64_t seed) {
    const int obs = worker_obs_dim(k);
    agents_.reserve(count);
    for (int i = 0; i < count; ++i) {
        Rng rng(substream(seed, "worker-init", static_cast<std::uint64_t>(i)));
        Agent a;
        a.actor = Mlp::make("w" + std::to_string(i) + ".actor", {obs, hidden, hidden, 1}, rng);
        a.critic = Mlp::make("w" + std::to_string(i) + ".critic", {obs + 1, hidden, hidden, 1}, rng);
        a.actor_target = a.actor;
        a.critic_target = a.critic;
        agents_.push_back(std::move(a));
    }
}

double WorkerPool::actor_bid(const Mlp& actor, const std::vector<double>& obs) const {
    const double raw = actor.eval(obs)[0];
    return raw > 30.0 ? raw : std::log1p(std::exp(raw));  // softplus keeps bids >= 0
}

double WorkerPool::bid(int worker, const std::vector<double>& obs) const {
    return actor_bid(agents_[worker].actor, obs);
}

double WorkerPool::explore_bid(int worker, const std::vector<double>& obs, double sigma,
                               Rng& rng) const {
    return std::max(0.0, bid(worker, obs) + sigma * rng.normal());
}

void WorkerPool::push(int worker, WorkerTransition t) {
    Agent& a = agents_[worker];
    if (a.buffer.size() < buffer_capacity_) {
        a.buffer.push_back(std::move(t));
    } else {
        a.buffer[a.cursor] = std::move(t);
    }
    a.cursor = (a.cursor + 1) % buffer_capacity_;
}

WorkerPool::UpdateStats WorkerPool::update(int worker, Rng& rng, double gamma, double tau, double lr,
                                           int batch) {
    UpdateStats stats;
    Agent& a = agents_[worker];
    if (a.buffer.size() < static_cast<std::size_t>(batch)) return stats;

    std::vector<const WorkerTransition*> sample;
    std::vector<std::size_t> idx(a.buffer.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (int i = 0; i < batch; ++i) {
        const std::size_t j = i + rng.next_u64() % (idx.size() - i);
        std::swap(idx[i], idx[j]);
        sample.push_back(&a.buffer[idx[i]]);
    }

    // critic: fit r + gamma * Q_target(s', mu_target(s'))
    std::vector<double> targets;
    for (const WorkerTransition* t : sample) {
        double boot = 0.0;
        if (!t->done) {
            const double next_bid = actor_bid(a.actor_target, t->next_obs);
            std::vector<double> in = t->next_obs;
            in.push_back(next_bid);
            boot = a.critic_target.eval(in)[0];
        }
        targets.push_back(t->reward + (t->done ? 0.0 : gamma * boot));
    }
    {
        Tape tape;
        std::vector<Tape::Ref> terms;
        for (std::size_t b = 0; b < sample.size(); ++b) {
            std::vector<double> in = sample[b]->obs;
            in.push_back(sample[b]->bid);
            Tape::Ref q = a.critic.forward(tape, tape.constant(in), true);
            terms.push_back(tape.square(tape.sub(q, tape.scalar(targets[b]))));
        }
        Tape::Ref loss = tape.mean_op(tape.concat(terms));
        stats.critic_loss = tape.value0(loss);
        tape.backward(loss);
        adam_step(a.critic.blocks(), lr);
    }

    // actor: maximize Q(s, mu(s)) through the bid
    {
        Tape tape;
        std::vector<Tape::Ref> terms;
        for (const WorkerTransition* t : sample) {
            Tape::Ref raw = a.actor.forward(tape, tape.constant(t->obs), true);
            Tape::Ref mu = tape.softplus(raw);
            Tape::Ref in = tape.concat({tape.constant(t->obs), mu});
            terms.push_back(a.critic.forward(tape, in, false));
        }
        Tape::Ref loss = tape.neg(tape.mean_op(tape.concat(terms)));
        stats.actor_loss = tape.value0(loss);
        tape.backward(loss);
        adam_step(a.actor.blocks(), lr);
    }

    auto as_const = [](std::vector<ParamBlock*> v) {
        return std::vector<const ParamBlock*>(v.begin(), v.end());
    };
    soft_update(as_const(a.actor.blocks()), a.actor_target.blocks(), tau);
    soft_update(as_const(a.critic.blocks()), a.critic_target.blocks(), tau);
    return stats;
}

// ------------------------------------------------------------- driver

std::vector<Entity> allocation_entities(const Env& env, const Allocator& alloc) {
    if (is_fixed_shape(alloc.mode())) return env.all_entities();
    return env.available_entities();
}

namespace {

bool uses_pre_assign(AllocMode mode) {
    return mode != AllocMode::SequentialPre && mode != AllocMode::RandomOrderPre;
}

struct WorkerEpisodeState {
    struct Pending {
        std::vector<double> obs;
        double bid = 0.0;
        bool active = false;
    };
    std::vector<Pending> pending;
    std::vector<double> episode_reward;
    std::vector<bool> was_committed;
};

void collect_bids(Env& env, WorkerPool* workers, WorkerEpisodeState& ws, double sigma, Rng& rng,
                  bool greedy) {
    if (!workers) return;
    std::vector<std::pair<int, double>> bids;
    const auto& entities = env.all_entities();
    for (std::size_t i = 0; i < entities.size(); ++i) {
        const Entity& e = entities[i];
        if (e.kind != EntityKind::Worker || e.committed_to) continue;
        const auto obs = worker_observation(e, env.open_tasks());
        const double b = greedy ? workers->bid(static_cast<int>(i), obs)
                                : workers->explore_bid(static_cast<int>(i), obs, sigma, rng);
        bids.emplace_back(e.id, b);
        ws.pending[i].obs = obs;
        ws.pending[i].bid = b;
    }
    env.set_bids(bids);
}

void settle_worker_transitions(Env& env, WorkerPool* workers, WorkerEpisodeState& ws,
                               const StepOutcome& out, bool episode_end) {
    if (!workers) return;
    const auto& entities = env.all_entities();
    for (std::size_t i = 0; i < entities.size(); ++i) {
        const Entity& e = entities[i];
        if (e.kind != EntityKind::Worker) continue;
        const bool committed_now = e.committed_to.has_value();
        const double paid = out.worker_rewards.empty() ? 0.0 : out.worker_rewards[i];
        ws.episode_reward[i] += paid;

        auto& p = ws.pending[i];
        if (!ws.was_committed[i] && committed_now) {
            p.active = true;  // bid got this worker committed; reward settles later
        }
        if (p.active && (!committed_now || episode_end)) {
            WorkerTransition t;
            t.obs = p.obs;
            t.bid = p.bid;
            t.reward = paid;
            t.next_obs = worker_observation(e, env.open_tasks());
            t.done = episode_end;
            workers->push(static_cast<int>(i), std::move(t));
            p.active = false;
        } else if (!p.active && !ws.was_committed[i] && !committed_now && !p.obs.empty()) {
            WorkerTransition t;  // bid ignored this step
            t.obs = p.obs;
            t.bid = p.bid;
            t.reward = 0.0;
            t.next_obs = worker_observation(e, env.open_tasks());
            t.done = episode_end;
            workers->push(static_cast<int>(i), std::move(t));
        }
        ws.was_committed[i] = committed_now;
    }
}

}  // namespace

TrainResult train_manager(Env& env, Allocator& alloc, const TrainConfig& config,
                          WorkerPool* workers) {
    TrainResult result;
    if (config.iterations <= 0) return result;

    ReplayBuffer buffer(1000);
    Rng explore_rng(substream(config.seed, "exploration"));
    Rng update_rng(substream(config.seed, "updates"));
    ExplorationSchedule epsilon = config.epsilon;
    ExplorationSchedule sigma = config.sigma;
    double select_baseline = 0.0;
    long select_baseline_n = 0;

    const int n_entities = static_cast<int>(env.all_entities().size());

    for (int episode = 0; episode < config.iterations; ++episode) {
        const auto wall_start = std::chrono::steady_clock::now();
        env.reset(substream(config.seed, "env", static_cast<std::uint64_t>(episode)));

        WorkerEpisodeState ws;
        if (workers) {
            ws.pending.resize(n_entities);
            ws.episode_reward.assign(n_entities, 0.0);
            ws.was_committed.assign(n_entities, false);
        }

        double episode_return = 0.0;
        std::vector<SelectTrace> episode_traces;
        std::map<int, std::vector<std::size_t>> open_trace_idx;  // task id -> trace indices
        bool done = false;

        while (!done) {
            collect_bids(env, workers, ws, sigma.value(), explore_rng, false);

            const std::vector<Task> tasks = env.open_tasks();
            const std::vector<Entity> ents = allocation_entities(env, alloc);
            Transition tr;
            AllocateResult ar;
            bool have_action = false;

            if (!tasks.empty() && !ents.empty()) {
                tr.state = alloc.make_snapshot(tasks, ents);
                if (uses_pre_assign(alloc.mode()) && explore_rng.uniform() < epsilon.value()) {
                    std::vector<int> random_choices(ents.size());
                    for (auto& c : random_choices)
                        c = explore_rng.uniform_int(0, tr.state.m() - 1);
                    ar = alloc.allocate(tasks, ents, explore_rng, false, &random_choices);
                } else {
                    ar = alloc.allocate(tasks, ents, explore_rng, false);
                }
                have_action = uses_pre_assign(alloc.mode());
                tr.choices = ar.pre.choices;
            }

            StepOutcome out = env.step(ar.allocation);
            episode_return += out.manager_reward;
            done = out.done;
            epsilon.advance();
            sigma.advance();

            for (SelectTrace& trace : ar.traces) {
                episode_traces.push_back(std::move(trace));
                open_trace_idx[episode_traces.back().task_id].push_back(episode_traces.size() - 1);
            }
            for (std::size_t c = 0; c < out.completed_task_ids.size(); ++c) {
                auto it = open_trace_idx.find(out.completed_task_ids[c]);
                if (it == open_trace_idx.end()) continue;
                for (std::size_t ti : it->second) {
                    episode_traces[ti].profit = out.completed_profits[c];
                    episode_traces[ti].resolved = true;
                }
                open_trace_idx.erase(it);
            }

            settle_worker_transitions(env, workers, ws, out, done);

            if (have_action && !tr.choices.empty()) {
                tr.reward = out.manager_reward;
                tr.done = done;
                const std::vector<Task> next_tasks = env.open_tasks();
                const std::vector<Entity> next_ents = allocation_entities(env, alloc);
                if (!next_tasks.empty() && !next_ents.empty())
                    tr.next_state = alloc.make_snapshot(next_tasks, next_ents);
                else
                    tr.done = true;  // no successor decision point to bootstrap
                if (config.on_transition) config.on_transition(tr);
                buffer.push(std::move(tr));
            }
        }

        // incomplete tasks earn nothing
        for (auto& [task_id, indices] : open_trace_idx)
            for (std::size_t ti : indices) {
                episode_traces[ti].profit = 0.0;
                episode_traces[ti].resolved = true;
            }

        EpisodeRow row;
        row.episode = episode;
        row.manager_return = episode_return;
        row.epsilon = epsilon.value();
        row.sigma = sigma.value();

        const bool can_update =
            uses_pre_assign(alloc.mode()) && buffer.size() >= static_cast<std::size_t>(config.batch_size);
        for (int u = 0; u < config.updates_per_iteration; ++u) {
            if (can_update) {
                const auto batch = buffer.sample(config.batch_size, update_rng);
                row.actor_loss = sac_actor_update(alloc, batch, config.alpha, config.lr);
                row.critic_loss = sac_critic_update(alloc, batch, config.gamma, config.lr,
                                                    config.bootstrap_samples, update_rng);
            }
            for (int su = 0; su < 2; ++su) {
                const auto sel = select_policy_update(alloc, episode_traces, 2.0 * config.lr,
                                                      select_baseline, select_baseline_n);
                row.select_loss = sel.policy_loss;
            }
        }
        alloc.soft_update_targets(config.tau);

        if (workers) {
            for (int w = 0; w < workers->count(); ++w)
                workers->update(w, update_rng, config.gamma, config.tau, config.lr,
                                config.batch_size);
            row.worker_return_mean =
                std::accumulate(ws.episode_reward.begin(), ws.episode_reward.end(), 0.0) /
                static_cast<double>(std::max<std::size_t>(1, ws.episode_reward.size()));
        }

        row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                                wall_start)
                          .count();
        result.rows.push_back(row);
    }
    return result;
}

double evaluate_return(Env& env, const Allocator& alloc, int episodes, std::uint64_t seed,
                       WorkerPool* workers) {
    double total = 0.0;
    Rng rng(substream(seed, "eval"));
    const int n_entities = static_cast<int>(env.all_entities().size());
    for (int ep = 0; ep < episodes; ++ep) {
        env.reset(substream(seed, "eval-env", static_cast<std::uint64_t>(ep)));
        WorkerEpisodeState ws;
        if (workers) {
            ws.pending.resize(n_entities);
            ws.episode_reward.assign(n_entities, 0.0);
            ws.was_committed.assign(n_entities, false);
        }
        bool done = false;
        while (!done) {
            collect_bids(env, workers, ws, 0.0, rng, true);
            const std::vector<Task> tasks = env.open_tasks();
            const std::vector<Entity> ents = allocation_entities(env, alloc);
            AllocateResult ar;
            if (!tasks.empty() && !ents.empty()) ar = alloc.allocate(tasks, ents, rng, true);
            StepOutcome out = env.step(ar.allocation);
            total += out.manager_reward;
            done = out.done;
            if (workers) {
                const auto& entities = env.all_entities();
                for (std::size_t i = 0; i < entities.size(); ++i)
                    ws.was_committed[i] = entities[i].committed_to.has_value();
            }
        }
    }
    return total / static_cast<double>(episodes);
}

}  // namespace af
