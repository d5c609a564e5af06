#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "tbench/grasp_sim.hpp"
#include "tbench/nn.hpp"
#include "tbench/ppo.hpp"
#include "tbench/rng.hpp"
#include "tbench/run_record.hpp"

namespace tbench {

enum class GoalRewardMode : std::uint8_t { DENSE, SPARSE };

struct DdpgHerConfig {
    long buffer_size = 1'000'000;
    double polyak = 0.95;
    double action_l2 = 1.0;
    int batch_size = 256;
    int rollouts_per_worker = 2;
    int workers = 2;  // 19 in the original multi-process setup
    long epochs = 500;
    int cycles_per_epoch = 50;
    int batches_per_cycle = 40;
    int test_rollouts = 10;
    double random_eps = 0.3;
    double noise_eps = 0.2;
    double her_prob = 0.8;
    double actor_lr = 1e-3;
    double critic_lr = 1e-3;
    double gamma = 0.98;
    double obs_clip = 200.0;
    double norm_clip = 5.0;
    std::vector<int> hidden = {256, 256, 256};
    int episode_steps = 100;
    double tolerance = 0.01;
    GoalRewardMode reward_mode = GoalRewardMode::DENSE;

    void validate() const;
    std::string to_json() const;
    void merge_json(const std::string& json_text);
};

/// center + a * (hi - lo) / 2 per dimension, with `a` clipped to [-1, 1].
std::vector<double> map_action(std::span<const double> normalized,
                               const std::vector<std::pair<double, double>>& ranges);

inline constexpr double kGoalDistanceScale = 10.0;

/// Dense: 0 inside tolerance, else -10 d, plus -1 on a terminal miss.
/// Sparse: 0 inside tolerance, else -1.
double goal_reward(const Eigen::Vector3d& achieved, const Eigen::Vector3d& desired, double tol,
                   bool terminal, GoalRewardMode mode = GoalRewardMode::DENSE);

struct GoalTransition {
    Eigen::VectorXd obs;
    Eigen::VectorXd action;
    double reward = 0.0;
    Eigen::VectorXd next_obs;
    Eigen::Vector3d achieved_goal = Eigen::Vector3d::Zero();  // object position after the step
    Eigen::Vector3d desired_goal = Eigen::Vector3d::Zero();
    bool done = false;
};

struct RewardSettings {
    double tolerance = 0.01;
    GoalRewardMode mode = GoalRewardMode::DENSE;
};

/// Relabels transition `t` of `episode` with probability `p` using the
/// achieved goal of a uniformly drawn step in [t, T-1] (state index in
/// (t, T]). `future_state` receives that state index, or -1 if untouched.
GoalTransition her_relabel_one(std::span<const GoalTransition> episode, int t, CounterRng& rng, double p,
                               const RewardSettings& rs, int* future_state = nullptr);

/// Relabeled copy of every transition in order.
std::vector<GoalTransition> her_relabel(std::span<const GoalTransition> episode, CounterRng& rng, double p,
                                        const RewardSettings& rs);

/// FIFO ring of goal transitions with episode bookkeeping for future sampling.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t size() const noexcept { return size_; }
    std::uint64_t episodes_stored() const noexcept { return next_episode_; }

    /// Appends a whole episode; the oldest transitions are evicted first.
    void store_episode(std::span<const GoalTransition> episode);

    /// Oldest-to-newest view, for audits.
    const GoalTransition& at(std::size_t i) const;
    std::uint64_t episode_of(std::size_t i) const;

    /// Uniformly sampled transitions with HER relabeling.
    std::vector<GoalTransition> sample(std::size_t n, CounterRng& sample_rng, CounterRng& her_rng, double her_prob,
                                       const RewardSettings& rs) const;

private:
    struct Slot {
        GoalTransition tr;
        std::uint64_t episode = 0;
        int t = 0;
        int length = 0;
    };
    std::size_t physical(std::size_t logical) const { return (head_ + logical) % capacity_; }

    std::size_t capacity_;
    std::size_t head_ = 0;  // physical index of the oldest slot
    std::size_t size_ = 0;
    std::uint64_t next_episode_ = 0;
    std::vector<Slot> slots_;
};

/// With probability `random_prob` a uniform action in [-1,1]^n, else the
/// output plus N(0, noise^2) clipped to [-1,1].
Eigen::VectorXd explore_action(const Eigen::VectorXd& policy_output, CounterRng& rng, double random_prob,
                               double noise_scale);

struct DdpgNets {
    Mlp actor, critic, actor_target, critic_target;
    Adam actor_opt, critic_opt;
    RunningNormalizer normalizer;  // over [obs, goal]

    static DdpgNets create(int obs_size, int act_size, const DdpgHerConfig& cfg, std::uint64_t key);
    Eigen::MatrixXd policy_input(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& goals) const;
};

struct DdpgLossStats {
    double critic_loss = 0.0;
    double actor_loss = 0.0;
    double mean_q = 0.0;
};

/// One critic and actor step on `batch`. Target networks are left alone.
DdpgLossStats ddpg_update(const std::vector<GoalTransition>& batch, DdpgNets& nets, const DdpgHerConfig& cfg);

/// Critic targets y = r + gamma (1 - done) Q'(s', pi'(s')).
Eigen::VectorXd critic_targets(const std::vector<GoalTransition>& batch, const DdpgNets& nets,
                               const DdpgHerConfig& cfg);

RunRecord train_ddpg_her(const SimParams& params, const SensorLayout& layout, RunType run_type,
                         std::uint64_t seed, const DdpgHerConfig& cfg, const TrainOptions& opts = {});

}  // namespace tbench
