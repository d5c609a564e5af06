#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tbench/sensor_layout.hpp"

namespace tbench {

enum class RunType : std::uint8_t { MAIN, CONTROL };

std::string to_string(RunType t);
RunType parse_run_type(const std::string& s);

enum class Phase : std::uint8_t { REACH, LIFT_HOLD, TERMINAL };
enum class Outcome : std::uint8_t { NONE, SUCCESS, DROPPED, TIMEOUT };

std::string to_string(Phase p);
std::string to_string(Outcome o);

/// How an episode is judged successful.
enum class SuccessMode : std::uint8_t {
    LIFT_AND_HOLD,  // reach lift height with the object held, then pass the hold probe
    GOAL_AT_END,    // object within tolerance of the goal at the final tick
};

/// Scale and geometry parameters of the simulator. All lengths in meters.
struct SimParams {
    HandProfileId hand = HandProfileId::MPL;
    SuccessMode success_mode = SuccessMode::LIFT_AND_HOLD;

    double cube_side = 0.05;
    double max_translation = 0.01;   // per tick at |action| = 1
    double contact_epsilon = 0.0005;
    int hold_probe_ticks = 50;
    double hold_jitter = 0.001;
    int max_episode_steps = 100;
    double lift_height = 1.0;
    bool auto_lift = true;           // carry the object to lift_height once it leaves the ground
    double flex_rate = 0.02;         // coupled-flexion change per tick at |action| = 1
    double joint_rate = 0.1;         // SHADOW: max normalized joint change per tick toward its target
    double dt = 0.04;                // seconds per tick, for reported velocities

    double finger_thickness = 0.01;
    double finger_base_offset = 0.006;  // |x| of index..little base joints from palm center
    double thumb_base_offset = 0.006;   // |x| of the thumb base joint
    std::array<double, kFingerCount> finger_base_y = {0.0, -0.03, -0.01, 0.01, 0.03};
    double abduction_shift = 0.005;     // lateral base shift at full abduction (SHADOW)
    double rest_splay = 0.9076;           // outward tilt of the proximal phalanx at zero flexion (rad)

    Eigen::Vector3d start_hand_pos = Eigen::Vector3d(0.0, 0.0, 0.09);
    double start_flexion = 0.13;        // MPL coupled flexion at reset, in [0, 1]
    double start_joint = -0.8;          // SHADOW normalized flexion at reset, in [-1, 1]
    double start_jitter = 0.0;          // uniform +/- jitter of the cube's xy at reset
    Eigen::Vector3d workspace_lo = Eigen::Vector3d(-0.25, -0.25, 0.0);
    Eigen::Vector3d workspace_hi = Eigen::Vector3d(0.25, 0.25, 1.2);

    double goal_height = 0.15;          // goal above the cube's start (GOAL_AT_END)
    double success_tolerance = 0.01;

    static SimParams mpl();
    static SimParams shadow();
    static SimParams for_profile(HandProfileId id);

    /// Applies keys present in `json_text` on top of `*this`.
    void merge_json(const std::string& json_text);
    std::string to_json() const;
    static SimParams load(const std::filesystem::path& path);
};

/// Number of action dimensions for a profile: 7 (MPL) or 23 (SHADOW).
int action_size(HandProfileId id);
/// Observation length excluding goals: 12 + N (MPL) or 53 + N (SHADOW).
int observation_size(HandProfileId id, int sensor_count);

struct SimState {
    HandProfileId profile = HandProfileId::MPL;
    Eigen::Vector3d hand_pos = Eigen::Vector3d::Zero();
    std::vector<double> actuation;      // MPL: 4 in [0,1]; SHADOW: 20 in [-1,1]
    std::vector<double> velocity;       // SHADOW: 20 joint + 3 hand velocities; MPL: empty
    Eigen::Vector3d object_pos = Eigen::Vector3d::Zero();
    Eigen::Vector4d object_quat = Eigen::Vector4d(1.0, 0.0, 0.0, 0.0);  // (w, x, y, z)
    Eigen::Vector3d goal = Eigen::Vector3d::Zero();
    Phase phase = Phase::REACH;
    int step_count = 0;
    bool lifted = false;
    bool dropped = false;
    bool lift_attempt_reported = false;
    Outcome outcome = Outcome::NONE;

    bool operator==(const SimState& o) const;
};

struct Contact {
    PadId pad;
    Eigen::Vector2d surface_point_mm = Eigen::Vector2d::Zero();
    Eigen::Vector3d normal = Eigen::Vector3d::Zero();  // outward cube-face normal
};

using ContactSet = std::vector<Contact>;

struct Observation {
    std::vector<double> values;
    int tactile_offset = 0;
    int tactile_count = 0;
    Eigen::Vector3d achieved_goal = Eigen::Vector3d::Zero();  // SHADOW only
    Eigen::Vector3d desired_goal = Eigen::Vector3d::Zero();   // SHADOW only

    std::span<const double> tactile() const {
        return std::span<const double>(values).subspan(static_cast<std::size_t>(tactile_offset),
                                                       static_cast<std::size_t>(tactile_count));
    }
};

struct StepEvents {
    bool lift_attempt_failed = false;
    bool object_lifted = false;
    bool object_dropped = false;
    bool success = false;
    bool timeout = false;
    int contact_count = 0;
};

struct StepResult {
    SimState state;
    Observation observation;
    StepEvents events;
};

/// Force-closure proxy: two contacts on distinct links with n_i . n_j <= -0.5.
bool grasp_stable(const ContactSet& cs);

/// Deterministic kinematic grasp-and-lift simulator for one (profile, layout,
/// run type). Stateless between calls; all state lives in SimState.
class GraspSim {
public:
    GraspSim(SimParams params, SensorLayout layout, RunType run_type);

    const SimParams& params() const noexcept { return params_; }
    const SensorLayout& layout() const noexcept { return layout_; }
    RunType run_type() const noexcept { return run_type_; }
    int action_size() const noexcept;
    int observation_size() const noexcept;

    std::pair<SimState, Observation> reset(std::uint64_t seed) const;
    StepResult step(const SimState& state, std::span<const double> action) const;
    ContactSet contacts(const SimState& state) const;
    bool hold_test(const SimState& state) const;
    Observation observe(const SimState& state) const;

    /// Distal phalanx centers, thumb first.
    std::array<Eigen::Vector3d, kFingerCount> fingertip_positions(const SimState& state) const;
    /// Proximal joint angle per finger (radians).
    std::array<double, kFingerCount> proximal_angles(const SimState& state) const;

    /// Per-dimension actuation ranges for the SHADOW action map:
    /// 20 joint-angle ranges (radians) then 3 per-tick translations (m).
    std::vector<std::pair<double, double>> actuation_ranges() const;

private:
    struct FingerPose {
        int side = 1;  // +1: base on the +x edge, curls toward -x
        double lateral = 0.0;
        std::array<Eigen::Vector3d, kPhalangesPerFinger + 1> joints{};
        std::array<Eigen::Vector3d, kPhalangesPerFinger> inward{};
        std::array<double, kPhalangesPerFinger> length{};
        std::array<double, kPhalangesPerFinger> width{};
    };

    std::array<FingerPose, kFingerCount> finger_poses(const SimState& s) const;
    double cube_separation(const SimState& s, int finger) const;
    double palm_separation(const SimState& s) const;
    double ground_clearance(const SimState& s, int finger) const;
    double min_cube_separation(const SimState& s) const;
    double min_ground_clearance(const SimState& s) const;
    ContactSet contacts_with_offset(const SimState& s, const Eigen::Vector3d& hand_offset) const;
    void move_fingers(SimState& s, std::span<const double> action) const;
    double move_hand(SimState& s, const Eigen::Vector3d& delta, bool carry) const;

    SimParams params_;
    HandProfile profile_;
    SensorLayout layout_;
    RunType run_type_;
};

/// Writes one JSON object per line describing a SimState snapshot.
class TraceWriter {
public:
    explicit TraceWriter(std::ostream& out) : out_(out) {}
    void write(const SimState& state, const StepEvents* events = nullptr, double reward = 0.0);

private:
    std::ostream& out_;
};

}  // namespace tbench
