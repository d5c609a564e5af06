#include "tbench/ddpg_her.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <thread>

#include <nlohmann/json.hpp>

#include "tbench/errors.hpp"

namespace tbench {

// ---------------------------------------------------------------------------
// Config

void DdpgHerConfig::validate() const {
    auto require = [](bool ok, const char* field, const char* what) {
        if (!ok) throw ValidationError(std::string("ddpg_her.") + field, what);
    };
    require(buffer_size > 0, "buffer_size", "must be positive");
    require(polyak >= 0.0 && polyak <= 1.0, "polyak", "must lie in [0, 1]");
    require(action_l2 >= 0.0, "action_l2", "must be non-negative");
    require(batch_size > 0, "batch_size", "must be positive");
    require(rollouts_per_worker > 0, "rollouts_per_worker", "must be positive");
    require(workers > 0, "workers", "must be positive");
    require(epochs > 0, "epochs", "must be positive");
    require(cycles_per_epoch > 0, "cycles_per_epoch", "must be positive");
    require(batches_per_cycle >= 0, "batches_per_cycle", "must be non-negative");
    require(test_rollouts > 0, "test_rollouts", "must be positive");
    require(random_eps >= 0.0 && random_eps <= 1.0, "random_eps", "must lie in [0, 1]");
    require(noise_eps >= 0.0, "noise_eps", "must be non-negative");
    require(her_prob >= 0.0 && her_prob <= 1.0, "her_prob", "must lie in [0, 1]");
    require(actor_lr > 0.0, "actor_lr", "must be positive");
    require(critic_lr > 0.0, "critic_lr", "must be positive");
    require(gamma > 0.0 && gamma <= 1.0, "gamma", "must lie in (0, 1]");
    require(obs_clip > 0.0, "obs_clip", "must be positive");
    require(norm_clip > 0.0, "norm_clip", "must be positive");
    require(!hidden.empty(), "hidden", "needs at least one layer");
    for (int h : hidden) require(h > 0, "hidden", "layer widths must be positive");
    require(episode_steps > 0, "episode_steps", "must be positive");
    require(tolerance > 0.0, "tolerance", "must be positive");
}

std::string DdpgHerConfig::to_json() const {
    nlohmann::json j;
    j["buffer_size"] = buffer_size;
    j["polyak"] = polyak;
    j["action_l2"] = action_l2;
    j["batch_size"] = batch_size;
    j["rollouts_per_worker"] = rollouts_per_worker;
    j["workers"] = workers;
    j["epochs"] = epochs;
    j["cycles_per_epoch"] = cycles_per_epoch;
    j["batches_per_cycle"] = batches_per_cycle;
    j["test_rollouts"] = test_rollouts;
    j["random_eps"] = random_eps;
    j["noise_eps"] = noise_eps;
    j["her_prob"] = her_prob;
    j["actor_lr"] = actor_lr;
    j["critic_lr"] = critic_lr;
    j["gamma"] = gamma;
    j["obs_clip"] = obs_clip;
    j["norm_clip"] = norm_clip;
    j["hidden"] = hidden;
    j["episode_steps"] = episode_steps;
    j["tolerance"] = tolerance;
    j["reward_mode"] = reward_mode == GoalRewardMode::DENSE ? "dense" : "sparse";
    return j.dump();
}

void DdpgHerConfig::merge_json(const std::string& json_text) {
    const auto j = nlohmann::json::parse(json_text);
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "buffer_size") buffer_size = value.get<long>();
            else if (key == "polyak") polyak = value.get<double>();
            else if (key == "action_l2") action_l2 = value.get<double>();
            else if (key == "batch_size") batch_size = value.get<int>();
            else if (key == "rollouts_per_worker") rollouts_per_worker = value.get<int>();
            else if (key == "workers") workers = value.get<int>();
            else if (key == "epochs") epochs = value.get<long>();
            else if (key == "cycles_per_epoch") cycles_per_epoch = value.get<int>();
            else if (key == "batches_per_cycle") batches_per_cycle = value.get<int>();
            else if (key == "test_rollouts") test_rollouts = value.get<int>();
            else if (key == "random_eps") random_eps = value.get<double>();
            else if (key == "noise_eps") noise_eps = value.get<double>();
            else if (key == "her_prob") her_prob = value.get<double>();
            else if (key == "actor_lr") actor_lr = value.get<double>();
            else if (key == "critic_lr") critic_lr = value.get<double>();
            else if (key == "gamma") gamma = value.get<double>();
            else if (key == "obs_clip") obs_clip = value.get<double>();
            else if (key == "norm_clip") norm_clip = value.get<double>();
            else if (key == "hidden") hidden = value.get<std::vector<int>>();
            else if (key == "episode_steps") episode_steps = value.get<int>();
            else if (key == "tolerance") tolerance = value.get<double>();
            else if (key == "reward_mode") {
                const auto m = value.get<std::string>();
                if (m == "dense") reward_mode = GoalRewardMode::DENSE;
                else if (m == "sparse") reward_mode = GoalRewardMode::SPARSE;
                else throw ValidationError("ddpg_her.reward_mode", "expected 'dense' or 'sparse'");
            } else {
                throw ValidationError("ddpg_her." + key, "unknown learner setting");
            }
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("ddpg_her." + key, e.what());
        }
    }
}

// ---------------------------------------------------------------------------
// Actions and rewards

std::vector<double> map_action(std::span<const double> normalized,
                               const std::vector<std::pair<double, double>>& ranges) {
    if (normalized.size() != ranges.size()) {
        throw InterfaceError("map_action: " + std::to_string(normalized.size()) + " actions for " +
                             std::to_string(ranges.size()) + " actuators");
    }
    std::vector<double> out(normalized.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto [lo, hi] = ranges[i];
        const double a = std::clamp(normalized[i], -1.0, 1.0);
        out[i] = 0.5 * (lo + hi) + a * 0.5 * (hi - lo);
    }
    return out;
}

double goal_reward(const Eigen::Vector3d& achieved, const Eigen::Vector3d& desired, double tol, bool terminal,
                   GoalRewardMode mode) {
    const double d = (achieved - desired).norm();
    if (d <= tol) return 0.0;
    if (mode == GoalRewardMode::SPARSE) return -1.0;
    return -kGoalDistanceScale * d - (terminal ? 1.0 : 0.0);
}

Eigen::VectorXd explore_action(const Eigen::VectorXd& out, CounterRng& rng, double random_prob, double noise_scale) {
    Eigen::VectorXd a(out.size());
    if (rng.uniform() < random_prob) {
        for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = rng.uniform(-1.0, 1.0);
        return a;
    }
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = std::clamp(out(i) + noise_scale * rng.normal(), -1.0, 1.0);
    return a;
}

// ---------------------------------------------------------------------------
// HER

namespace {

template <class AchievedAt>
GoalTransition relabel(const GoalTransition& tr, int t, int length, AchievedAt achieved_at, CounterRng& rng,
                       double p, const RewardSettings& rs, int* future_state) {
    GoalTransition out = tr;
    int future = -1;
    if (rng.uniform() < p) {
        const int j = t + static_cast<int>(rng.below(static_cast<std::uint64_t>(length - t)));
        out.desired_goal = achieved_at(j);
        out.reward = goal_reward(out.achieved_goal, out.desired_goal, rs.tolerance, out.done, rs.mode);
        future = j + 1;
    }
    if (future_state != nullptr) *future_state = future;
    return out;
}

}  // namespace

GoalTransition her_relabel_one(std::span<const GoalTransition> episode, int t, CounterRng& rng, double p,
                               const RewardSettings& rs, int* future_state) {
    if (episode.empty()) throw InterfaceError("her_relabel: empty episode");
    const int n = static_cast<int>(episode.size());
    if (t < 0 || t >= n) throw InterfaceError("her_relabel: transition index out of range");
    return relabel(
        episode[static_cast<std::size_t>(t)], t, n,
        [&](int j) { return episode[static_cast<std::size_t>(j)].achieved_goal; }, rng, p, rs, future_state);
}

std::vector<GoalTransition> her_relabel(std::span<const GoalTransition> episode, CounterRng& rng, double p,
                                        const RewardSettings& rs) {
    if (episode.empty()) throw InterfaceError("her_relabel: empty episode");
    std::vector<GoalTransition> out;
    out.reserve(episode.size());
    for (int t = 0; t < static_cast<int>(episode.size()); ++t) out.push_back(her_relabel_one(episode, t, rng, p, rs));
    return out;
}

// ---------------------------------------------------------------------------
// Replay buffer

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw InterfaceError("replay buffer capacity must be positive");
}

void ReplayBuffer::store_episode(std::span<const GoalTransition> episode) {
    const int length = static_cast<int>(episode.size());
    const std::uint64_t id = next_episode_++;
    for (int t = 0; t < length; ++t) {
        Slot slot{episode[static_cast<std::size_t>(t)], id, t, length};
        if (slots_.size() < capacity_) {
            slots_.push_back(std::move(slot));
            ++size_;
        } else {
            slots_[head_] = std::move(slot);
            head_ = (head_ + 1) % capacity_;
        }
    }
}

const GoalTransition& ReplayBuffer::at(std::size_t i) const {
    if (i >= size_) throw LookupError("replay index out of range");
    return slots_[physical(i)].tr;
}

std::uint64_t ReplayBuffer::episode_of(std::size_t i) const {
    if (i >= size_) throw LookupError("replay index out of range");
    return slots_[physical(i)].episode;
}

std::vector<GoalTransition> ReplayBuffer::sample(std::size_t n, CounterRng& sample_rng, CounterRng& her_rng,
                                                 double her_prob, const RewardSettings& rs) const {
    if (size_ == 0) throw LifecycleError("sampling from an empty replay buffer");
    std::vector<GoalTransition> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = static_cast<std::size_t>(sample_rng.below(size_));
        const Slot& s = slots_[physical(i)];
        // Later steps of an episode are newer, so they are still in the ring.
        auto achieved_at = [&](int j) { return slots_[physical(i + static_cast<std::size_t>(j - s.t))].tr.achieved_goal; };
        out.push_back(relabel(s.tr, s.t, s.length, achieved_at, her_rng, her_prob, rs, nullptr));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Networks and update

DdpgNets DdpgNets::create(int obs_size, int act_size, const DdpgHerConfig& cfg, std::uint64_t key) {
    const int in = obs_size + 3;
    std::vector<int> actor_dims{in};
    actor_dims.insert(actor_dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    std::vector<int> critic_dims{in + act_size};
    critic_dims.insert(critic_dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    actor_dims.push_back(act_size);
    critic_dims.push_back(1);

    CounterRng actor_rng(key, streams::kActorInit);
    CounterRng critic_rng(key, streams::kCriticInit);
    DdpgNets nets;
    nets.actor = Mlp(actor_dims, OutputActivation::TANH, actor_rng);
    nets.critic = Mlp(critic_dims, OutputActivation::IDENTITY, critic_rng);
    nets.actor_target = nets.actor;
    nets.critic_target = nets.critic;
    nets.actor_opt = Adam(nets.actor, cfg.actor_lr);
    nets.critic_opt = Adam(nets.critic, cfg.critic_lr);
    nets.normalizer = RunningNormalizer(in, cfg.norm_clip, cfg.obs_clip);
    return nets;
}

Eigen::MatrixXd DdpgNets::policy_input(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& goals) const {
    Eigen::MatrixXd x(obs.rows() + goals.rows(), obs.cols());
    x << obs, goals;
    return normalizer.normalize_batch(x);
}

namespace {

struct Batch {
    Eigen::MatrixXd obs, next_obs, goals, actions;
    Eigen::VectorXd rewards, not_done;
};

Batch pack(const std::vector<GoalTransition>& batch) {
    if (batch.empty()) throw InterfaceError("ddpg_update: empty batch");
    const auto n = static_cast<Eigen::Index>(batch.size());
    const auto od = batch.front().obs.size();
    const auto ad = batch.front().action.size();
    Batch b;
    b.obs.resize(od, n);
    b.next_obs.resize(od, n);
    b.goals.resize(3, n);
    b.actions.resize(ad, n);
    b.rewards.resize(n);
    b.not_done.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& tr = batch[static_cast<std::size_t>(i)];
        b.obs.col(i) = tr.obs;
        b.next_obs.col(i) = tr.next_obs;
        b.goals.col(i) = tr.desired_goal;
        b.actions.col(i) = tr.action;
        b.rewards(i) = tr.reward;
        b.not_done(i) = tr.done ? 0.0 : 1.0;
    }
    return b;
}

Eigen::MatrixXd stack(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
    Eigen::MatrixXd m(top.rows() + bottom.rows(), top.cols());
    m << top, bottom;
    return m;
}

Eigen::VectorXd targets_for(const Batch& b, const DdpgNets& nets, double gamma) {
    const Eigen::MatrixXd x2 = nets.policy_input(b.next_obs, b.goals);
    const Eigen::MatrixXd a2 = nets.actor_target.forward_batch(x2);
    const Eigen::MatrixXd q2 = nets.critic_target.forward_batch(stack(x2, a2));
    return b.rewards + gamma * b.not_done.cwiseProduct(q2.row(0).transpose());
}

}  // namespace

Eigen::VectorXd critic_targets(const std::vector<GoalTransition>& batch, const DdpgNets& nets,
                               const DdpgHerConfig& cfg) {
    return targets_for(pack(batch), nets, cfg.gamma);
}

DdpgLossStats ddpg_update(const std::vector<GoalTransition>& batch, DdpgNets& nets, const DdpgHerConfig& cfg) {
    const Batch b = pack(batch);
    const auto n = static_cast<double>(batch.size());
    const Eigen::VectorXd y = targets_for(b, nets, cfg.gamma);
    const Eigen::MatrixXd x = nets.policy_input(b.obs, b.goals);
    DdpgLossStats stats;

    MlpCache critic_cache;
    const Eigen::MatrixXd q = nets.critic.forward_batch(stack(x, b.actions), &critic_cache);
    const Eigen::RowVectorXd err = q.row(0) - y.transpose();
    stats.critic_loss = err.squaredNorm() / n;

    MlpCache actor_cache, pi_cache;
    const Eigen::MatrixXd pi = nets.actor.forward_batch(x, &actor_cache);
    const Eigen::MatrixXd q_pi = nets.critic.forward_batch(stack(x, pi), &pi_cache);
    const double elems = static_cast<double>(pi.size());
    stats.mean_q = q_pi.mean();
    stats.actor_loss = -stats.mean_q + cfg.action_l2 * pi.squaredNorm() / elems;
    if (!std::isfinite(stats.critic_loss) || !std::isfinite(stats.actor_loss)) {
        throw NumericFaultError("non-finite DDPG loss");
    }

    // Both gradients use the pre-update critic.
    const MlpParams critic_grad = nets.critic.backward(critic_cache, 2.0 / n * err);
    Eigen::MatrixXd input_grad;
    nets.critic.backward(pi_cache, Eigen::MatrixXd::Constant(1, q_pi.cols(), -1.0 / n), &input_grad);
    const Eigen::MatrixXd dpi = input_grad.bottomRows(pi.rows()) + (2.0 * cfg.action_l2 / elems) * pi;
    const MlpParams actor_grad = nets.actor.backward(actor_cache, dpi);

    nets.critic_opt.step(nets.critic, critic_grad);
    nets.actor_opt.step(nets.actor, actor_grad);
    return stats;
}

// ---------------------------------------------------------------------------
// Training

namespace {

Eigen::VectorXd to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

struct Rollout {
    std::vector<GoalTransition> transitions;
    bool success = false;
    double tactile_sum = 0.0;
};

Rollout run_episode(const GraspSim& sim, const DdpgNets& nets, std::uint64_t reset_seed, CounterRng* explore,
                    const DdpgHerConfig& cfg, TraceWriter* trace = nullptr) {
    const RewardSettings rs{cfg.tolerance, cfg.reward_mode};
    Rollout out;
    auto [state, observation] = sim.reset(reset_seed);
    if (trace) trace->write(state);
    while (state.phase != Phase::TERMINAL) {
        const Eigen::VectorXd o = to_vector(observation.values);
        for (double v : observation.tactile()) out.tactile_sum += v;
        const Eigen::VectorXd x = nets.policy_input(o, observation.desired_goal);
        const Eigen::VectorXd mu = nets.actor.forward(x);
        const Eigen::VectorXd a =
            explore != nullptr ? explore_action(mu, *explore, cfg.random_eps, cfg.noise_eps) : mu;

        StepResult r = sim.step(state, std::span<const double>(a.data(), static_cast<std::size_t>(a.size())));
        GoalTransition tr;
        tr.obs = o;
        tr.action = a;
        tr.next_obs = to_vector(r.observation.values);
        tr.achieved_goal = r.observation.achieved_goal;
        tr.desired_goal = observation.desired_goal;
        tr.done = r.state.phase == Phase::TERMINAL;
        tr.reward = goal_reward(tr.achieved_goal, tr.desired_goal, rs.tolerance, tr.done, rs.mode);
        if (trace) trace->write(r.state, &r.events, tr.reward);
        out.transitions.push_back(std::move(tr));
        if (r.events.success) out.success = true;
        state = std::move(r.state);
        observation = std::move(r.observation);
    }
    return out;
}

}  // namespace

RunRecord train_ddpg_her(const SimParams& base_params, const SensorLayout& layout, RunType run_type,
                         std::uint64_t seed, const DdpgHerConfig& cfg, const TrainOptions& opts) {
    cfg.validate();
    if (layout.profile != HandProfileId::SHADOW) {
        throw ConfigurationError("the DDPG+HER learner drives the SHADOW profile only");
    }
    SimParams params = base_params;
    params.max_episode_steps = cfg.episode_steps;
    params.success_tolerance = cfg.tolerance;
    const GraspSim sim(params, layout, run_type);

    RunRecord rec;
    rec.profile = LearnerProfile::SHADOW_DDPGHER;
    rec.config_id = layout.config_id;
    rec.run_type = run_type;
    rec.seed = seed;
    rec.env_seed = derive_env_seed(rec.profile, layout.config_id, seed);
    rec.config_hash = opts.config_hash;
    rec.total_timesteps = cfg.epochs * cfg.cycles_per_epoch * cfg.workers * cfg.rollouts_per_worker *
                          static_cast<long>(cfg.episode_steps);

    const std::uint64_t key = rec.env_seed;
    std::optional<TraceWriter> trace_storage;
    TraceWriter* trace = opts.trace != nullptr ? &trace_storage.emplace(*opts.trace) : nullptr;
    DdpgNets nets = DdpgNets::create(sim.observation_size(), sim.action_size(), cfg, key);
    ReplayBuffer buffer(static_cast<std::size_t>(cfg.buffer_size));
    CounterRng sample_rng(key, streams::kReplaySample);
    CounterRng her_rng(key, streams::kHerRelabel);
    std::vector<CounterRng> explore;
    for (int w = 0; w < cfg.workers; ++w) {
        explore.emplace_back(key, streams::kWorkerBase + static_cast<std::uint64_t>(w));
    }
    const RewardSettings rs{cfg.tolerance, cfg.reward_mode};

    double tactile_sum = 0.0;
    double stored = 0.0;
    std::uint64_t episode_index = 0;
    auto& diag = rec.diagnostics;

    for (long epoch = 0; epoch < cfg.epochs; ++epoch) {
        double critic_loss = 0.0, actor_loss = 0.0;
        long updates = 0;
        for (int cycle = 0; cycle < cfg.cycles_per_epoch; ++cycle) {
            // Collectors share a read-only snapshot of the networks.
            std::vector<std::vector<Rollout>> per_worker(static_cast<std::size_t>(cfg.workers));
            auto collect = [&](int w, std::uint64_t first_episode) {
                auto& mine = per_worker[static_cast<std::size_t>(w)];
                for (int k = 0; k < cfg.rollouts_per_worker; ++k) {
                    const std::uint64_t ep = first_episode + static_cast<std::uint64_t>(w * cfg.rollouts_per_worker + k);
                    mine.push_back(run_episode(sim, nets, hash64({key, ep}), &explore[static_cast<std::size_t>(w)], cfg));
                }
            };
            if (cfg.workers == 1) {
                collect(0, episode_index);
            } else {
                std::vector<std::thread> pool;
                for (int w = 0; w < cfg.workers; ++w) pool.emplace_back(collect, w, episode_index);
                for (auto& th : pool) th.join();
            }
            episode_index += static_cast<std::uint64_t>(cfg.workers * cfg.rollouts_per_worker);

            for (const auto& worker : per_worker) {
                for (const auto& ro : worker) {
                    buffer.store_episode(ro.transitions);
                    tactile_sum += ro.tactile_sum;
                    stored += static_cast<double>(ro.transitions.size());
                    Eigen::MatrixXd cols(nets.normalizer.size(), static_cast<Eigen::Index>(ro.transitions.size()));
                    for (std::size_t t = 0; t < ro.transitions.size(); ++t) {
                        cols.col(static_cast<Eigen::Index>(t)) << ro.transitions[t].obs, ro.transitions[t].desired_goal;
                    }
                    nets.normalizer.update(cols);
                }
            }

            if (buffer.size() >= static_cast<std::size_t>(cfg.batch_size)) {
                for (int b = 0; b < cfg.batches_per_cycle; ++b) {
                    const auto batch = buffer.sample(static_cast<std::size_t>(cfg.batch_size), sample_rng, her_rng,
                                                     cfg.her_prob, rs);
                    try {
                        const auto s = ddpg_update(batch, nets, cfg);
                        critic_loss += s.critic_loss;
                        actor_loss += s.actor_loss;
                        ++updates;
                    } catch (const NumericFaultError& e) {
                        throw NumericFaultError("config " + std::to_string(layout.config_id) + ", seed " +
                                                std::to_string(seed) + ", epoch " + std::to_string(epoch) + ": " +
                                                e.what());
                    }
                }
                polyak_update(nets.actor_target, nets.actor, cfg.polyak);
                polyak_update(nets.critic_target, nets.critic, cfg.polyak);
            }
        }
        if (!nets.actor.params().all_finite() || !nets.critic.params().all_finite()) {
            throw NumericFaultError("config " + std::to_string(layout.config_id) + ", seed " + std::to_string(seed) +
                                    ": non-finite parameters after epoch " + std::to_string(epoch));
        }

        int successes = 0;
        for (int i = 0; i < cfg.test_rollouts; ++i) {
            const auto ro = run_episode(sim, nets, hash64({key, hash_name("test"), static_cast<std::uint64_t>(epoch),
                                                           static_cast<std::uint64_t>(i)}),
                                        nullptr, cfg, i == 0 ? trace : nullptr);
            if (ro.success) ++successes;
        }
        const double rate = static_cast<double>(successes) / static_cast<double>(cfg.test_rollouts);
        rec.curve.push_back(rate);

        diag["critic_loss"].push_back(updates > 0 ? critic_loss / static_cast<double>(updates) : 0.0);
        diag["actor_loss"].push_back(updates > 0 ? actor_loss / static_cast<double>(updates) : 0.0);
        diag["buffer_fill"].push_back(static_cast<double>(buffer.size()) / static_cast<double>(buffer.capacity()));
        const Eigen::VectorXd var = nets.normalizer.variance();
        diag["normalizer_mean_abs"].push_back(nets.normalizer.mean().cwiseAbs().mean());
        diag["normalizer_mean_std"].push_back(var.cwiseSqrt().mean());
        if (opts.on_epoch) opts.on_epoch(epoch, rate);
    }

    rec.counters["stored_observations"] = stored;
    rec.counters["tactile_sum"] = tactile_sum;
    rec.checksum = nets.actor.checksum() + nets.critic.checksum();
    return rec;
}

}  // namespace tbench
