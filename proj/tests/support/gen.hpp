#pragma once

// Hand-rolled generators for property tests. Every generator draws from a
// CounterRng so failures reproduce from the printed case index.

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "tbench/ddpg_her.hpp"
#include "tbench/grasp_sim.hpp"
#include "tbench/rng.hpp"

namespace tbench::gen {

inline CounterRng case_rng(std::uint64_t suite, std::uint64_t index) {
    return CounterRng(hash64({suite, index}), 0);
}

inline int uniform_int(CounterRng& rng, int lo, int hi) {
    return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

inline std::vector<double> uniform_vector(CounterRng& rng, std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

inline Eigen::VectorXd normal_vector(CounterRng& rng, Eigen::Index n, double scale = 1.0) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = scale * rng.normal();
    return v;
}

inline Eigen::MatrixXd normal_matrix(CounterRng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
    }
    return m;
}

/// Success-rate-like values: mostly continuous, sometimes repeated or at the ends.
inline std::vector<double> rate_sample(CounterRng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) {
        const double pick = rng.uniform();
        if (pick < 0.1) x = 0.0;
        else if (pick < 0.2) x = 1.0;
        else if (pick < 0.35) x = static_cast<double>(rng.below(11)) / 10.0;
        else x = rng.uniform();
    }
    return v;
}

/// A goal-conditioned episode with a random-walk achieved goal.
inline std::vector<GoalTransition> random_episode(CounterRng& rng, int length, int obs_size, int act_size,
                                                  const RewardSettings& rs) {
    std::vector<GoalTransition> ep(static_cast<std::size_t>(length));
    Eigen::Vector3d pos(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), 0.025);
    const Eigen::Vector3d desired(0.0, 0.0, 0.175);
    Eigen::VectorXd obs = normal_vector(rng, obs_size);
    for (int t = 0; t < length; ++t) {
        auto& tr = ep[static_cast<std::size_t>(t)];
        tr.obs = obs;
        tr.action = normal_vector(rng, act_size, 0.5).cwiseMax(-1.0).cwiseMin(1.0);
        pos += Eigen::Vector3d(rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01), rng.uniform(-0.005, 0.01));
        obs = normal_vector(rng, obs_size);
        tr.next_obs = obs;
        tr.achieved_goal = pos;
        tr.desired_goal = desired;
        tr.done = t == length - 1;
        tr.reward = goal_reward(tr.achieved_goal, tr.desired_goal, rs.tolerance, tr.done, rs.mode);
    }
    return ep;
}

/// MPL action that closes the fingers in `mask` (bit i = actuator i) for
/// `close_ticks` ticks and raises the hand afterwards.
inline std::vector<double> scripted_mpl_action(int tick, int mask = 0b1111, int close_ticks = 15) {
    std::vector<double> a(7, 0.0);
    for (int i = 0; i < 4; ++i) a[static_cast<std::size_t>(3 + i)] = ((mask >> i) & 1) && tick < close_ticks ? 1.0 : 0.0;
    if (tick >= close_ticks) a[2] = 1.0;
    return a;
}

struct ScriptedEpisode {
    std::vector<StepResult> steps;
    std::vector<double> rewards;
};

template <class RewardFn>
ScriptedEpisode run_scripted(const GraspSim& sim, std::uint64_t seed, int mask, RewardFn reward) {
    ScriptedEpisode ep;
    auto [state, obs] = sim.reset(seed);
    for (int t = 0; state.phase != Phase::TERMINAL; ++t) {
        auto r = sim.step(state, scripted_mpl_action(t, mask));
        ep.rewards.push_back(reward(r));
        state = r.state;
        ep.steps.push_back(std::move(r));
    }
    return ep;
}

}  // namespace tbench::gen
