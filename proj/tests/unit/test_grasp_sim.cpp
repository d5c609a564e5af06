#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "gen.hpp"
#include "tbench/errors.hpp"
#include "tbench/grasp_sim.hpp"

using namespace tbench;

namespace {

GraspSim mpl_sim(int config, RunType type = RunType::MAIN, SimParams p = SimParams::mpl()) {
    return GraspSim(p, build_layout(config, HandProfile::mpl()), type);
}

GraspSim shadow_sim(int config, RunType type = RunType::MAIN, SimParams p = SimParams::shadow()) {
    return GraspSim(p, build_layout(config, HandProfile::shadow()), type);
}

double tactile_sum(const Observation& o) {
    double s = 0.0;
    for (double v : o.tactile()) s += v;
    return s;
}

Contact make_contact(int finger, int phalanx, Eigen::Vector3d normal) {
    Contact c;
    c.pad = PadId::phalanx_pad(finger, phalanx);
    c.normal = normal;
    return c;
}

// Closes the fingers without lifting and returns the first state in contact.
SimState closed_grip(const GraspSim& sim, int mask = 0b1111) {
    auto [s, o] = sim.reset(0);
    for (int t = 0; t < 15; ++t) s = sim.step(s, gen::scripted_mpl_action(t, mask)).state;
    return s;
}

}  // namespace

TEST(GraspSimReset, DeterministicAndSized) {
    const auto sim = mpl_sim(2);
    const auto [s1, o1] = sim.reset(17);
    const auto [s2, o2] = sim.reset(17);
    EXPECT_TRUE(s1 == s2);
    EXPECT_EQ(o1.values, o2.values);
    EXPECT_EQ(o1.values.size(), 91u);
    EXPECT_EQ(o1.tactile_offset, 12);
    EXPECT_EQ(s1.phase, Phase::REACH);
    EXPECT_EQ(s1.step_count, 0);
    EXPECT_DOUBLE_EQ(o1.values[0], 1.0);
}

TEST(GraspSimReset, NoInitialContact) {
    for (int id = 1; id <= 6; ++id) {
        for (RunType t : {RunType::MAIN, RunType::CONTROL}) {
            const auto [s, o] = mpl_sim(id, t).reset(3);
            EXPECT_EQ(tactile_sum(o), 0.0);
            EXPECT_TRUE(mpl_sim(id, t).contacts(s).empty());
            const auto [ss, so] = shadow_sim(id, t).reset(3);
            EXPECT_EQ(tactile_sum(so), 0.0);
            EXPECT_EQ(so.values.size(), static_cast<std::size_t>(53 + kSensorTotals[static_cast<std::size_t>(id)]));
        }
    }
}

TEST(GraspSimReset, CubeUnderPalm) {
    const auto [s, o] = mpl_sim(1).reset(0);
    EXPECT_DOUBLE_EQ(s.object_pos.x(), s.hand_pos.x());
    EXPECT_DOUBLE_EQ(s.object_pos.y(), s.hand_pos.y());
    EXPECT_DOUBLE_EQ(s.object_pos.z(), 0.025);
    EXPECT_GT(s.hand_pos.z(), s.object_pos.z());
}

TEST(GraspSimReset, JitterIsSeededWhenEnabled) {
    auto p = SimParams::mpl();
    p.start_jitter = 0.002;
    const auto sim = mpl_sim(1, RunType::MAIN, p);
    EXPECT_TRUE(sim.reset(5).first == sim.reset(5).first);
    EXPECT_FALSE(sim.reset(5).first == sim.reset(6).first);
}

TEST(GraspSimReset, MismatchedLayoutRejected) {
    EXPECT_THROW(GraspSim(SimParams::mpl(), build_layout(1, HandProfile::shadow()), RunType::MAIN),
                 ConfigurationError);
}

TEST(GraspSimStep, ZeroActionIsIdentity) {
    const auto sim = mpl_sim(1);
    const auto [s, o] = sim.reset(0);
    const auto r = sim.step(s, std::vector<double>(7, 0.0));
    EXPECT_EQ(r.state.hand_pos, s.hand_pos);
    EXPECT_EQ(r.state.actuation, s.actuation);
    EXPECT_EQ(r.state.object_pos, s.object_pos);
    EXPECT_EQ(r.state.step_count, 1);
}

TEST(GraspSimStep, TimeoutAtHundredSteps) {
    const auto sim = mpl_sim(1);
    auto [s, o] = sim.reset(0);
    StepResult r;
    for (int t = 0; t < 100; ++t) {
        ASSERT_NE(s.phase, Phase::TERMINAL);
        r = sim.step(s, std::vector<double>(7, 0.0));
        if (t < 99) EXPECT_FALSE(r.events.timeout);
        s = r.state;
    }
    EXPECT_TRUE(r.events.timeout);
    EXPECT_EQ(s.phase, Phase::TERMINAL);
    EXPECT_EQ(s.outcome, Outcome::TIMEOUT);
    EXPECT_THROW(sim.step(s, std::vector<double>(7, 0.0)), LifecycleError);
}

TEST(GraspSimStep, WrongActionLength) {
    const auto sim = mpl_sim(1);
    const auto [s, o] = sim.reset(0);
    EXPECT_THROW(sim.step(s, std::vector<double>(23, 0.0)), InterfaceError);
}

TEST(GraspSimStep, ScriptedGraspLiftsToOneMeterAndSucceeds) {
    const auto sim = mpl_sim(1);
    const auto ep = gen::run_scripted(sim, 0, 0b1111, [](const StepResult&) { return 0.0; });
    const auto& last = ep.steps.back();
    EXPECT_TRUE(last.events.success);
    EXPECT_TRUE(last.events.object_lifted);
    EXPECT_FALSE(last.events.object_dropped);
    EXPECT_EQ(last.state.outcome, Outcome::SUCCESS);
    EXPECT_GE(last.state.hand_pos.z(), 1.0 - 1e-9);
    EXPECT_GT(last.state.object_pos.z(), 0.0);
    int successes = 0;
    for (const auto& st : ep.steps) successes += st.events.success;
    EXPECT_EQ(successes, 1);
}

TEST(GraspSimStep, FailedHoldDropsAndContinuesToTimeout) {
    auto p = SimParams::mpl();
    p.hold_jitter = 0.03;
    const auto sim = mpl_sim(1, RunType::MAIN, p);
    const auto ep = gen::run_scripted(sim, 0, 0b1111, [](const StepResult&) { return 0.0; });
    bool dropped = false;
    for (const auto& st : ep.steps) {
        EXPECT_FALSE(st.events.success && st.events.object_dropped);
        if (st.events.object_dropped) {
            dropped = true;
            EXPECT_TRUE(st.events.lift_attempt_failed);
            EXPECT_DOUBLE_EQ(st.state.object_pos.z(), 0.025);
        }
    }
    EXPECT_TRUE(dropped);
    EXPECT_TRUE(ep.steps.back().events.timeout);
    EXPECT_EQ(ep.steps.back().state.outcome, Outcome::DROPPED);
    EXPECT_EQ(ep.steps.size(), 100u);
}

TEST(GraspSimStep, RisingWithoutGripReportsFailedLiftOnce) {
    const auto sim = mpl_sim(1);
    const auto ep = gen::run_scripted(sim, 0, 0b0010, [](const StepResult&) { return 0.0; });
    int failed = 0;
    for (const auto& st : ep.steps) failed += st.events.lift_attempt_failed;
    EXPECT_EQ(failed, 1);
    EXPECT_DOUBLE_EQ(ep.steps.back().state.object_pos.z(), 0.025);
}

TEST(Contacts, FarCubeGivesNone) {
    const auto sim = mpl_sim(1);
    auto s = closed_grip(sim);
    s.hand_pos.z() += 0.5;
    EXPECT_TRUE(sim.contacts(s).empty());
}

TEST(Contacts, GripContactsAreAxisAlignedAndOnePerPad) {
    const auto sim = mpl_sim(1);
    const auto s = closed_grip(sim);
    const auto cs = sim.contacts(s);
    ASSERT_FALSE(cs.empty());
    EXPECT_LE(cs.size(), static_cast<std::size_t>(kSensedPhalanges + 1));
    std::set<int> surfaces;
    for (const auto& c : cs) {
        EXPECT_TRUE(surfaces.insert(c.pad.surface_index()).second);
        EXPECT_NEAR(c.normal.norm(), 1.0, 1e-12);
        EXPECT_NEAR(c.normal.cwiseAbs().maxCoeff(), 1.0, 1e-12);
        const auto& dims = HandProfile::mpl().phalanx_dims[static_cast<std::size_t>(c.pad.finger)]
                                                          [static_cast<std::size_t>(c.pad.phalanx)];
        EXPECT_LE(std::abs(c.surface_point_mm.x()), dims.length_mm / 2.0 + 1e-9);
        EXPECT_LE(std::abs(c.surface_point_mm.y()), dims.width_mm / 2.0 + 1e-9);
    }
    EXPECT_TRUE(grasp_stable(cs));
}

TEST(GraspStable, Examples) {
    const Eigen::Vector3d px(1, 0, 0), nx(-1, 0, 0), py(0, 1, 0);
    EXPECT_TRUE(grasp_stable({make_contact(0, 2, nx), make_contact(1, 2, px)}));
    EXPECT_FALSE(grasp_stable({make_contact(1, 2, px)}));
    EXPECT_FALSE(grasp_stable({make_contact(0, 2, px), make_contact(1, 2, px)}));
    EXPECT_FALSE(grasp_stable({make_contact(0, 2, px), make_contact(1, 2, py)}));
    EXPECT_FALSE(grasp_stable({}));
}

TEST(HoldTest, AntipodalPinchHoldsAndIsDeterministic) {
    auto p = SimParams::mpl();
    p.auto_lift = false;
    const auto sim = mpl_sim(1, RunType::MAIN, p);
    auto s = closed_grip(sim);
    EXPECT_THROW((void)sim.hold_test(s), LifecycleError);
    std::vector<double> up(7, 0.0);
    up[2] = 1.0;
    s = sim.step(s, up).state;
    ASSERT_EQ(s.phase, Phase::LIFT_HOLD);
    EXPECT_TRUE(sim.hold_test(s));
    EXPECT_EQ(sim.hold_test(s), sim.hold_test(s));

    auto single = s;
    single.actuation = {0.0, single.actuation[1], 0.0, 0.0};
    EXPECT_FALSE(sim.hold_test(single));
}

TEST(Observe, ControlZeroesOnlyTheTactileSlice) {
    const auto main_sim = mpl_sim(1, RunType::MAIN);
    const auto ctrl_sim = mpl_sim(1, RunType::CONTROL);
    const auto s = closed_grip(main_sim);
    const auto om = main_sim.observe(s);
    const auto oc = ctrl_sim.observe(s);
    ASSERT_EQ(om.values.size(), oc.values.size());
    EXPECT_GT(tactile_sum(om), 0.0);
    EXPECT_EQ(tactile_sum(oc), 0.0);
    for (int i = 0; i < om.tactile_offset; ++i) EXPECT_EQ(om.values[static_cast<std::size_t>(i)], oc.values[static_cast<std::size_t>(i)]);
}

TEST(Observe, LengthsMatchAcrossRunTypes) {
    for (int id = 1; id <= 6; ++id) {
        EXPECT_EQ(mpl_sim(id, RunType::MAIN).observation_size(), mpl_sim(id, RunType::CONTROL).observation_size());
        EXPECT_EQ(mpl_sim(id).observation_size(), 12 + kSensorTotals[static_cast<std::size_t>(id)]);
        EXPECT_EQ(shadow_sim(id).observation_size(), 53 + kSensorTotals[static_cast<std::size_t>(id)]);
    }
}

TEST(ShadowSim, ScriptedGraspReachesGoalAtEnd) {
    const auto sim = shadow_sim(2);
    auto [s, o] = sim.reset(0);
    StepResult r;
    std::size_t touches = 0;
    for (int t = 0; s.phase != Phase::TERMINAL; ++t) {
        std::vector<double> a(23, 0.0);
        const double q = std::min(1.0, -0.8 + 0.05 * t);
        for (int f = 0; f < 5; ++f) {
            for (int j = 1; j < 4; ++j) a[static_cast<std::size_t>(4 * f + j)] = q;
        }
        a[22] = t >= 20 && s.object_pos.z() < s.goal.z() ? 1.0 : 0.0;
        r = sim.step(s, a);
        touches += sim.contacts(r.state).size();
        s = r.state;
    }
    EXPECT_EQ(s.step_count, 100);
    EXPECT_TRUE(r.events.success);
    EXPECT_LE((s.object_pos - s.goal).norm(), sim.params().success_tolerance);
    EXPECT_GT(touches, 0u);
    EXPECT_EQ(r.observation.desired_goal, s.goal);
    EXPECT_EQ(r.observation.achieved_goal, s.object_pos);
}

TEST(ShadowSim, ActuationRangesLayout) {
    const auto ranges = shadow_sim(1).actuation_ranges();
    ASSERT_EQ(ranges.size(), 23u);
    for (const auto& [lo, hi] : ranges) EXPECT_LT(lo, hi);
    EXPECT_DOUBLE_EQ(ranges[22].second, SimParams::shadow().max_translation);
}

TEST(SimParams, JsonRoundTrip) {
    auto p = SimParams::shadow();
    p.hold_probe_ticks = 17;
    p.rest_splay = 0.5;
    SimParams q = SimParams::mpl();
    q.merge_json(p.to_json());
    EXPECT_EQ(q.to_json(), p.to_json());
    EXPECT_THROW(q.merge_json(R"({"joint_rate": 0})"), ConfigurationError);
}

TEST(Trace, OneJsonLinePerWrite) {
    const auto sim = mpl_sim(1);
    auto [s, o] = sim.reset(0);
    std::ostringstream out;
    TraceWriter w(out);
    w.write(s);
    const auto r = sim.step(s, gen::scripted_mpl_action(0));
    w.write(r.state, &r.events, 1.5);
    const auto text = out.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
    EXPECT_NE(text.find("\"events\""), std::string::npos);
}

// Property suite over random action sequences on both profiles.
TEST(GraspSimProperties, RandomRollouts) {
    for (std::uint64_t k = 0; k < 60; ++k) {
        auto rng = gen::case_rng(21, k);
        const bool shadow = k % 2 == 1;
        const int id = gen::uniform_int(rng, 1, 6);
        const RunType type = rng.uniform() < 0.5 ? RunType::MAIN : RunType::CONTROL;
        const auto sim = shadow ? shadow_sim(id, type) : mpl_sim(id, type);
        const auto ranges = sim.actuation_ranges();
        auto [s, o] = sim.reset(k);
        auto replay = s;
        std::vector<std::vector<double>> actions;
        int terminal_flags = 0;
        while (s.phase != Phase::TERMINAL) {
            auto a = gen::uniform_vector(rng, static_cast<std::size_t>(sim.action_size()), -1.3, 1.3);
            // Bias toward closing so contacts actually happen.
            for (std::size_t i = shadow ? 0 : 3; i < (shadow ? 20u : 7u); ++i) a[i] = std::abs(a[i]);
            actions.push_back(a);
            const auto r = sim.step(s, a);
            s = r.state;
            ASSERT_GE(s.object_pos.z(), 0.0) << "case " << k;
            ASSERT_NEAR(s.object_quat.norm(), 1.0, 1e-9);
            ASSERT_LE(s.step_count, sim.params().max_episode_steps);
            ASSERT_FALSE(r.events.success && r.events.object_dropped);
            for (double v : r.observation.tactile()) ASSERT_TRUE(v == 0.0 || v == 1.0);
            if (type == RunType::CONTROL) ASSERT_EQ(tactile_sum(r.observation), 0.0);
            for (std::size_t i = 0; i < s.actuation.size(); ++i) {
                if (shadow) {
                    ASSERT_GE(s.actuation[i], -1.0 - 1e-12);
                    ASSERT_LE(s.actuation[i], 1.0 + 1e-12);
                } else {
                    ASSERT_GE(s.actuation[i], 0.0);
                    ASSERT_LE(s.actuation[i], 1.0);
                }
            }
            terminal_flags = r.events.success + r.events.timeout;
            if (r.events.success) ASSERT_GT(s.object_pos.z(), 0.0);
        }
        EXPECT_EQ(terminal_flags, 1);
        EXPECT_NE(s.outcome, Outcome::NONE);
        (void)ranges;

        for (const auto& a : actions) replay = sim.step(replay, a).state;
        EXPECT_TRUE(replay == s) << "case " << k;
    }
}
