#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tbench/grasp_sim.hpp"
#include "tbench/nn.hpp"
#include "tbench/run_record.hpp"

namespace tbench {

struct PpoConfig {
    double gamma = 0.99;
    double lambda = 0.97;
    double clip = 0.2;
    int minibatch_episodes = 6;
    int max_episode_steps = 100;
    long timesteps_per_epoch = 1000;
    long total_timesteps = 500000;
    int updates_per_epoch = 80;
    double entropy_coef = 0.0;  // the policy variance is fixed, so this term has zero gradient
    double grad_clip = 0.5;
    double actor_lr = 3e-4;
    double critic_lr = 1e-3;
    double variance = 0.05;
    std::vector<int> hidden = {256, 256, 256};
    double actor_output_scale = 0.01;
    bool normalize_advantages = true;
    bool freeze_policy = false;  // skip updates: random-init baseline

    long epochs() const { return total_timesteps / timesteps_per_epoch; }
    /// Throws ValidationError naming the first bad field.
    void validate() const;

    std::string to_json() const;
    void merge_json(const std::string& json_text);
};

struct RewardInputs {
    Eigen::Vector3d hand = Eigen::Vector3d::Zero();
    Eigen::Vector3d object = Eigen::Vector3d::Zero();
    std::array<Eigen::Vector3d, kFingerCount> fingertips{};
    StepEvents events;
};

inline constexpr double kFingertipWeight = 0.2;
inline constexpr double kFailedLiftBonus = 5.0;
inline constexpr double kSuccessReward = 1000.0;
inline constexpr double kTimeoutReward = -100.0;

double shaped_reward(const RewardInputs& in);
double shaped_reward(const GraspSim& sim, const SimState& state, const StepEvents& events);

struct GaeResult {
    std::vector<double> advantages;
    std::vector<double> returns;
};

GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      double bootstrap_value, double gamma, double lambda);

/// One episode segment, one column per step.
struct Trajectory {
    Eigen::MatrixXd observations;
    Eigen::MatrixXd actions;
    std::vector<double> logprobs;
    std::vector<double> rewards;
    std::vector<double> values;
    std::vector<bool> dones;
    Outcome outcome = Outcome::NONE;  // NONE: cut at the epoch boundary
    double bootstrap_value = 0.0;

    std::vector<double> advantages;
    std::vector<double> returns;

    int size() const { return static_cast<int>(rewards.size()); }
};

struct PpoNets {
    Mlp actor;   // tanh head, mean of the Gaussian policy
    Mlp critic;  // identity head
    Adam actor_opt;
    Adam critic_opt;

    static PpoNets create(int obs_size, int act_size, const PpoConfig& cfg, std::uint64_t key);
};

struct PpoLossStats {
    double actor_loss = 0.0;
    double critic_loss = 0.0;
    double clip_fraction = 0.0;
    double approx_kl = 0.0;
};

/// One gradient step for each network on `batch` (advantages must be filled).
PpoLossStats ppo_update(const std::vector<const Trajectory*>& batch, PpoNets& nets, const PpoConfig& cfg);

/// Fills advantages/returns on every trajectory and, if enabled, normalizes
/// advantages over the whole set.
void prepare_advantages(std::vector<Trajectory>& trajs, const PpoConfig& cfg);

struct TrainOptions {
    std::string config_hash;
    std::function<void(long epoch, double success_rate)> on_epoch;
    std::ostream* trace = nullptr;  // JSON-lines state dump
};

RunRecord train_ppo(const SimParams& params, const SensorLayout& layout, RunType run_type,
                    std::uint64_t seed, const PpoConfig& cfg, const TrainOptions& opts = {});

}  // namespace tbench
