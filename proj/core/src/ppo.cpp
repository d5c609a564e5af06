#include "tbench/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <tuple>

#include <nlohmann/json.hpp>

#include "tbench/errors.hpp"
#include "tbench/rng.hpp"

namespace tbench {

// ---------------------------------------------------------------------------
// Config

void PpoConfig::validate() const {
    auto require = [](bool ok, const char* field, const char* what) {
        if (!ok) throw ValidationError(std::string("ppo.") + field, what);
    };
    require(gamma > 0.0 && gamma <= 1.0, "gamma", "must lie in (0, 1]");
    require(lambda >= 0.0 && lambda <= 1.0, "lambda", "must lie in [0, 1]");
    require(clip > 0.0, "clip", "must be positive");
    require(minibatch_episodes > 0, "minibatch_episodes", "must be positive");
    require(max_episode_steps > 0, "max_episode_steps", "must be positive");
    require(timesteps_per_epoch > 0, "timesteps_per_epoch", "must be positive");
    require(total_timesteps > 0, "total_timesteps", "must be positive");
    require(total_timesteps % timesteps_per_epoch == 0, "total_timesteps",
            "must be a multiple of timesteps_per_epoch");
    require(updates_per_epoch >= 0, "updates_per_epoch", "must be non-negative");
    require(entropy_coef >= 0.0, "entropy_coef", "must be non-negative");
    require(grad_clip > 0.0, "grad_clip", "must be positive");
    require(actor_lr > 0.0, "actor_lr", "must be positive");
    require(critic_lr > 0.0, "critic_lr", "must be positive");
    require(variance > 0.0, "variance", "must be positive");
    require(!hidden.empty(), "hidden", "needs at least one layer");
    for (int h : hidden) require(h > 0, "hidden", "layer widths must be positive");
    require(actor_output_scale > 0.0, "actor_output_scale", "must be positive");
}

std::string PpoConfig::to_json() const {
    nlohmann::json j;
    j["gamma"] = gamma;
    j["lambda"] = lambda;
    j["clip"] = clip;
    j["minibatch_episodes"] = minibatch_episodes;
    j["max_episode_steps"] = max_episode_steps;
    j["timesteps_per_epoch"] = timesteps_per_epoch;
    j["total_timesteps"] = total_timesteps;
    j["updates_per_epoch"] = updates_per_epoch;
    j["entropy_coef"] = entropy_coef;
    j["grad_clip"] = grad_clip;
    j["actor_lr"] = actor_lr;
    j["critic_lr"] = critic_lr;
    j["variance"] = variance;
    j["hidden"] = hidden;
    j["actor_output_scale"] = actor_output_scale;
    j["normalize_advantages"] = normalize_advantages;
    j["freeze_policy"] = freeze_policy;
    return j.dump();
}

void PpoConfig::merge_json(const std::string& json_text) {
    const auto j = nlohmann::json::parse(json_text);
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "gamma") gamma = value.get<double>();
            else if (key == "lambda") lambda = value.get<double>();
            else if (key == "clip") clip = value.get<double>();
            else if (key == "minibatch_episodes") minibatch_episodes = value.get<int>();
            else if (key == "max_episode_steps") max_episode_steps = value.get<int>();
            else if (key == "timesteps_per_epoch") timesteps_per_epoch = value.get<long>();
            else if (key == "total_timesteps") total_timesteps = value.get<long>();
            else if (key == "updates_per_epoch") updates_per_epoch = value.get<int>();
            else if (key == "entropy_coef") entropy_coef = value.get<double>();
            else if (key == "grad_clip") grad_clip = value.get<double>();
            else if (key == "actor_lr") actor_lr = value.get<double>();
            else if (key == "critic_lr") critic_lr = value.get<double>();
            else if (key == "variance") variance = value.get<double>();
            else if (key == "hidden") hidden = value.get<std::vector<int>>();
            else if (key == "actor_output_scale") actor_output_scale = value.get<double>();
            else if (key == "normalize_advantages") normalize_advantages = value.get<bool>();
            else if (key == "freeze_policy") freeze_policy = value.get<bool>();
            else throw ValidationError("ppo." + key, "unknown learner setting");
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("ppo." + key, e.what());
        }
    }
}

// ---------------------------------------------------------------------------
// Reward

double shaped_reward(const RewardInputs& in) {
    if (in.events.success) return kSuccessReward;
    if (in.events.timeout) return kTimeoutReward;
    double r = std::exp(-(in.hand - in.object).squaredNorm());
    for (const auto& f : in.fingertips) r += kFingertipWeight * std::exp(-(f - in.object).squaredNorm());
    if (in.events.lift_attempt_failed || in.events.object_dropped) r += kFailedLiftBonus;
    return r;
}

double shaped_reward(const GraspSim& sim, const SimState& state, const StepEvents& events) {
    RewardInputs in;
    in.hand = state.hand_pos;
    in.object = state.object_pos;
    in.fingertips = sim.fingertip_positions(state);
    in.events = events;
    return shaped_reward(in);
}

// ---------------------------------------------------------------------------
// GAE

GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      double bootstrap_value, double gamma, double lambda) {
    if (rewards.empty()) throw InterfaceError("compute_gae: empty trajectory");
    if (values.size() != rewards.size()) throw InterfaceError("compute_gae: values and rewards differ in length");
    const std::size_t n = rewards.size();
    GaeResult out;
    out.advantages.resize(n);
    out.returns.resize(n);
    double acc = 0.0;
    for (std::size_t t = n; t-- > 0;) {
        const double next_v = t + 1 < n ? values[t + 1] : bootstrap_value;
        const double delta = rewards[t] + gamma * next_v - values[t];
        acc = delta + gamma * lambda * acc;
        out.advantages[t] = acc;
        out.returns[t] = acc + values[t];
    }
    return out;
}

void prepare_advantages(std::vector<Trajectory>& trajs, const PpoConfig& cfg) {
    double sum = 0.0, sumsq = 0.0;
    std::size_t n = 0;
    for (auto& tr : trajs) {
        auto g = compute_gae(tr.rewards, tr.values, tr.bootstrap_value, cfg.gamma, cfg.lambda);
        tr.advantages = std::move(g.advantages);
        tr.returns = std::move(g.returns);
        for (double a : tr.advantages) {
            sum += a;
            sumsq += a * a;
        }
        n += tr.advantages.size();
    }
    if (!cfg.normalize_advantages || n < 2) return;
    const double mean = sum / static_cast<double>(n);
    const double sd = std::sqrt(std::max(sumsq / static_cast<double>(n) - mean * mean, 0.0));
    for (auto& tr : trajs) {
        for (double& a : tr.advantages) a = (a - mean) / (sd + 1e-8);
    }
}

// ---------------------------------------------------------------------------
// Update

PpoNets PpoNets::create(int obs_size, int act_size, const PpoConfig& cfg, std::uint64_t key) {
    std::vector<int> actor_dims{obs_size};
    actor_dims.insert(actor_dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    std::vector<int> critic_dims = actor_dims;
    actor_dims.push_back(act_size);
    critic_dims.push_back(1);

    CounterRng actor_rng(key, streams::kActorInit);
    CounterRng critic_rng(key, streams::kCriticInit);
    PpoNets nets;
    nets.actor = Mlp(actor_dims, OutputActivation::TANH, actor_rng, cfg.actor_output_scale);
    nets.critic = Mlp(critic_dims, OutputActivation::IDENTITY, critic_rng);
    nets.actor_opt = Adam(nets.actor, cfg.actor_lr);
    nets.critic_opt = Adam(nets.critic, cfg.critic_lr);
    return nets;
}

PpoLossStats ppo_update(const std::vector<const Trajectory*>& batch, PpoNets& nets, const PpoConfig& cfg) {
    Eigen::Index total = 0;
    for (const auto* tr : batch) total += tr->size();
    if (total == 0) throw InterfaceError("ppo_update: empty batch");

    const Eigen::Index obs_dim = nets.actor.input_size();
    const Eigen::Index act_dim = nets.actor.output_size();
    Eigen::MatrixXd obs(obs_dim, total), act(act_dim, total);
    Eigen::VectorXd old_logp(total), adv(total), ret(total);
    Eigen::Index col = 0;
    for (const auto* tr : batch) {
        if (tr->advantages.size() != tr->rewards.size()) {
            throw InterfaceError("ppo_update: advantages not computed");
        }
        const Eigen::Index n = tr->size();
        obs.middleCols(col, n) = tr->observations;
        act.middleCols(col, n) = tr->actions;
        for (Eigen::Index i = 0; i < n; ++i) {
            old_logp(col + i) = tr->logprobs[static_cast<std::size_t>(i)];
            adv(col + i) = tr->advantages[static_cast<std::size_t>(i)];
            ret(col + i) = tr->returns[static_cast<std::size_t>(i)];
        }
        col += n;
    }
    const double inv_n = 1.0 / static_cast<double>(total);
    PpoLossStats stats;

    // Actor: clipped surrogate.
    MlpCache actor_cache;
    const Eigen::MatrixXd mean = nets.actor.forward_batch(obs, &actor_cache);
    const Eigen::MatrixXd diff = act - mean;
    const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * cfg.variance);
    Eigen::MatrixXd actor_up = Eigen::MatrixXd::Zero(act_dim, total);
    double surrogate = 0.0;
    long clipped = 0;
    for (Eigen::Index i = 0; i < total; ++i) {
        const double logp = static_cast<double>(act_dim) * log_norm -
                            0.5 * diff.col(i).squaredNorm() / cfg.variance;
        const double ratio = std::exp(logp - old_logp(i));
        const double a = adv(i);
        const double clipped_ratio = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
        surrogate += std::min(ratio * a, clipped_ratio * a);
        stats.approx_kl += old_logp(i) - logp;
        const bool outside = (a > 0.0 && ratio > 1.0 + cfg.clip) || (a < 0.0 && ratio < 1.0 - cfg.clip);
        if (outside) {
            ++clipped;
            continue;
        }
        // d(-ratio * a)/d(mean) = -a * ratio * (action - mean) / variance
        actor_up.col(i) = -inv_n * a * ratio / cfg.variance * diff.col(i);
    }
    stats.actor_loss = -surrogate * inv_n;
    stats.approx_kl *= inv_n;
    stats.clip_fraction = static_cast<double>(clipped) * inv_n;

    // Critic: squared error to the returns.
    MlpCache critic_cache;
    const Eigen::MatrixXd v = nets.critic.forward_batch(obs, &critic_cache);
    const Eigen::RowVectorXd err = v.row(0) - ret.transpose();
    stats.critic_loss = err.squaredNorm() * inv_n;

    if (!std::isfinite(stats.actor_loss) || !std::isfinite(stats.critic_loss)) {
        throw NumericFaultError("non-finite PPO loss");
    }

    MlpParams actor_grad = nets.actor.backward(actor_cache, actor_up);
    MlpParams critic_grad = nets.critic.backward(critic_cache, 2.0 * inv_n * err);
    clip_global_norm(actor_grad, cfg.grad_clip);
    clip_global_norm(critic_grad, cfg.grad_clip);
    nets.actor_opt.step(nets.actor, actor_grad);
    nets.critic_opt.step(nets.critic, critic_grad);
    return stats;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

Eigen::VectorXd to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

struct EpisodeBuilder {
    std::vector<Eigen::VectorXd> obs;
    std::vector<Eigen::VectorXd> act;
    Trajectory traj;

    void finish(Outcome outcome, double bootstrap) {
        const auto n = static_cast<Eigen::Index>(obs.size());
        traj.observations.resize(obs.empty() ? 0 : obs.front().size(), n);
        traj.actions.resize(act.empty() ? 0 : act.front().size(), n);
        for (Eigen::Index i = 0; i < n; ++i) {
            traj.observations.col(i) = obs[static_cast<std::size_t>(i)];
            traj.actions.col(i) = act[static_cast<std::size_t>(i)];
        }
        traj.outcome = outcome;
        traj.bootstrap_value = bootstrap;
    }
};

}  // namespace

RunRecord train_ppo(const SimParams& base_params, const SensorLayout& layout, RunType run_type,
                    std::uint64_t seed, const PpoConfig& cfg, const TrainOptions& opts) {
    cfg.validate();
    if (layout.profile != HandProfileId::MPL) {
        throw ConfigurationError("the PPO learner drives the MPL profile only");
    }
    SimParams params = base_params;
    params.max_episode_steps = cfg.max_episode_steps;
    const GraspSim sim(params, layout, run_type);

    RunRecord rec;
    rec.profile = LearnerProfile::MPL_PPO;
    rec.config_id = layout.config_id;
    rec.run_type = run_type;
    rec.seed = seed;
    rec.env_seed = derive_env_seed(rec.profile, layout.config_id, seed);
    rec.config_hash = opts.config_hash;
    rec.total_timesteps = cfg.total_timesteps;

    const std::uint64_t key = rec.env_seed;
    PpoNets nets = PpoNets::create(sim.observation_size(), sim.action_size(), cfg, key);
    GaussianPolicy policy{Mlp{}, cfg.variance};
    CounterRng noise(key, streams::kPolicyNoise);
    CounterRng shuffle_rng(key, streams::kMinibatch);
    TraceWriter* trace = nullptr;
    std::optional<TraceWriter> trace_storage;
    if (opts.trace != nullptr) trace = &trace_storage.emplace(*opts.trace);

    double tactile_sum = 0.0;
    double stored = 0.0;
    std::uint64_t episode_index = 0;
    double last_rate = 0.0;
    const long epochs = cfg.epochs();
    auto& diag = rec.diagnostics;

    for (long epoch = 0; epoch < epochs; ++epoch) {
        std::vector<Trajectory> trajs;
        long finished = 0, successes = 0;
        auto [state, observation] = sim.reset(hash64({key, episode_index++}));
        if (trace) trace->write(state);
        EpisodeBuilder ep;

        for (long t = 0; t < cfg.timesteps_per_epoch; ++t) {
            const Eigen::VectorXd o = to_vector(observation.values);
            for (double v : observation.tactile()) tactile_sum += v;
            stored += 1.0;

            const Eigen::VectorXd mean = nets.actor.forward(o);
            const double value = nets.critic.forward(o)(0);
            const Eigen::VectorXd a = policy.sample(mean, noise);

            StepResult r = sim.step(state, std::span<const double>(a.data(), static_cast<std::size_t>(a.size())));
            const double reward = shaped_reward(sim, r.state, r.events);
            if (trace) trace->write(r.state, &r.events, reward);

            ep.obs.push_back(o);
            ep.act.push_back(a);
            ep.traj.logprobs.push_back(gaussian_logprob(cfg.variance, mean, a));
            ep.traj.rewards.push_back(reward);
            ep.traj.values.push_back(value);
            const bool terminal = r.state.phase == Phase::TERMINAL;
            ep.traj.dones.push_back(terminal);

            state = std::move(r.state);
            observation = std::move(r.observation);

            if (terminal) {
                ++finished;
                if (state.outcome == Outcome::SUCCESS) ++successes;
                // Timeouts are truncations: bootstrap from the critic.
                const double boot = r.events.timeout ? nets.critic.forward(to_vector(observation.values))(0) : 0.0;
                ep.finish(state.outcome, boot);
                trajs.push_back(std::move(ep.traj));
                ep = EpisodeBuilder{};
                if (t + 1 < cfg.timesteps_per_epoch) {
                    std::tie(state, observation) = sim.reset(hash64({key, episode_index++}));
                    if (trace) trace->write(state);
                }
            }
        }
        if (!ep.obs.empty()) {
            ep.finish(Outcome::NONE, nets.critic.forward(to_vector(observation.values))(0));
            trajs.push_back(std::move(ep.traj));
        }

        const double rate = finished > 0 ? static_cast<double>(successes) / static_cast<double>(finished) : last_rate;
        last_rate = rate;
        rec.curve.push_back(rate);

        PpoLossStats mean_stats;
        if (!cfg.freeze_policy && cfg.updates_per_epoch > 0) {
            prepare_advantages(trajs, cfg);
            std::vector<std::size_t> order(trajs.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::size_t cursor = order.size();
            const std::size_t mb = static_cast<std::size_t>(cfg.minibatch_episodes);
            for (int u = 0; u < cfg.updates_per_epoch; ++u) {
                if (cursor + std::min(mb, order.size()) > order.size()) {
                    for (std::size_t i = order.size(); i > 1; --i) {
                        std::swap(order[i - 1], order[shuffle_rng.below(i)]);
                    }
                    cursor = 0;
                }
                std::vector<const Trajectory*> batch;
                for (std::size_t k = 0; k < mb && cursor < order.size(); ++k) batch.push_back(&trajs[order[cursor++]]);
                try {
                    const auto s = ppo_update(batch, nets, cfg);
                    mean_stats.actor_loss += s.actor_loss / cfg.updates_per_epoch;
                    mean_stats.critic_loss += s.critic_loss / cfg.updates_per_epoch;
                    mean_stats.clip_fraction += s.clip_fraction / cfg.updates_per_epoch;
                    mean_stats.approx_kl += s.approx_kl / cfg.updates_per_epoch;
                } catch (const NumericFaultError& e) {
                    throw NumericFaultError("config " + std::to_string(layout.config_id) + ", seed " +
                                            std::to_string(seed) + ", epoch " + std::to_string(epoch) +
                                            ": " + e.what());
                }
            }
            if (!nets.actor.params().all_finite() || !nets.critic.params().all_finite()) {
                throw NumericFaultError("config " + std::to_string(layout.config_id) + ", seed " +
                                        std::to_string(seed) + ": non-finite parameters after epoch " +
                                        std::to_string(epoch));
            }
        }

        diag["episodes"].push_back(static_cast<double>(finished));
        diag["actor_loss"].push_back(mean_stats.actor_loss);
        diag["critic_loss"].push_back(mean_stats.critic_loss);
        diag["clip_fraction"].push_back(mean_stats.clip_fraction);
        diag["approx_kl"].push_back(mean_stats.approx_kl);
        if (opts.on_epoch) opts.on_epoch(epoch, rate);
    }

    rec.counters["stored_observations"] = stored;
    rec.counters["tactile_sum"] = tactile_sum;
    rec.checksum = nets.actor.checksum() + nets.critic.checksum();
    return rec;
}

}  // namespace tbench
