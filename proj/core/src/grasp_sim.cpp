#include "tbench/grasp_sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tbench/errors.hpp"
#include "tbench/rng.hpp"

namespace tbench {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
// Full-flexion joint angles (proximal, middle, distal).
constexpr std::array<double, kPhalangesPerFinger> kMaxFlex = {90.0 * kDeg, 100.0 * kDeg,
                                                              70.0 * kDeg};
constexpr double kMaxAbduction = 0.35;  // rad, SHADOW
constexpr double kMaxSubstep = 0.02;    // actuation units per collision sweep substep
constexpr double kGroundTol = 1e-9;
constexpr double kFeasTol = 1e-12;

// MPL coupled actuator driving each finger (thumb and little share actuator 0).
constexpr std::array<int, kFingerCount> kMplActuator = {0, 1, 2, 3, 0};

/// Signed distance from (x, z) to an axis-aligned square.
double square_sdf(double x, double z, double cx, double cz, double h) {
    const double qx = std::abs(x - cx) - h;
    const double qz = std::abs(z - cz) - h;
    const double ox = std::max(qx, 0.0);
    const double oz = std::max(qz, 0.0);
    return std::sqrt(ox * ox + oz * oz) + std::min(std::max(qx, qz), 0.0);
}

struct FaceProbe {
    double separation = 0.0;
    double t = 0.5;                // along the face, 0 = proximal end
    double lateral_mm = 0.0;       // across the face, relative to its center line
    Eigen::Vector3d normal = Eigen::Vector3d::Zero();
};

/// Closest approach between a pad face (segment a->b in the x-z plane, extruded
/// over [y - w/2, y + w/2]) and the cube. The signed distance along the segment
/// is convex, so golden-section search finds its minimum.
FaceProbe probe_face(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double y, double w,
                     const Eigen::Vector3d& cube, double h, bool want_point) {
    auto f = [&](double t) {
        return square_sdf(a.x() + t * (b.x() - a.x()), a.z() + t * (b.z() - a.z()), cube.x(),
                          cube.z(), h);
    };

    const double lo_y = std::max(y - w / 2.0, cube.y() - h);
    const double hi_y = std::min(y + w / 2.0, cube.y() + h);
    const double gap_y = std::max(0.0, lo_y - hi_y);

    FaceProbe p;
    // Cheap reject: face bounding box far from the cube.
    const double bx_lo = std::min(a.x(), b.x()), bx_hi = std::max(a.x(), b.x());
    const double bz_lo = std::min(a.z(), b.z()), bz_hi = std::max(a.z(), b.z());
    const double dx = std::max({cube.x() - h - bx_hi, bx_lo - cube.x() - h, 0.0});
    const double dz = std::max({cube.z() - h - bz_hi, bz_lo - cube.z() - h, 0.0});
    const double box_gap = std::sqrt(dx * dx + dz * dz + gap_y * gap_y);
    if (!want_point && box_gap > 0.005) {
        p.separation = box_gap;
        return p;
    }

    constexpr double kInvPhi = 0.6180339887498949;
    double lo = 0.0, hi = 1.0;
    double x1 = hi - kInvPhi * (hi - lo), x2 = lo + kInvPhi * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    for (int i = 0; i < 48; ++i) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - kInvPhi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + kInvPhi * (hi - lo);
            f2 = f(x2);
        }
    }
    double t = 0.5 * (lo + hi);
    double m = f(t);
    for (double end : {0.0, 1.0}) {
        const double fe = f(end);
        if (fe < m) {
            m = fe;
            t = end;
        }
    }
    p.separation = gap_y > 0.0 ? std::hypot(std::max(m, 0.0), gap_y) : m;
    if (!want_point) return p;

    // Flush faces have a flat minimum; report the middle of it.
    const double level = m + 1e-9;
    double l0 = 0.0, l1 = t;
    if (f(0.0) <= level) {
        l1 = 0.0;
    } else {
        for (int i = 0; i < 40; ++i) {
            const double mid = 0.5 * (l0 + l1);
            (f(mid) <= level ? l1 : l0) = mid;
        }
    }
    double r0 = t, r1 = 1.0;
    if (f(1.0) <= level) {
        r0 = 1.0;
    } else {
        for (int i = 0; i < 40; ++i) {
            const double mid = 0.5 * (r0 + r1);
            (f(mid) <= level ? r0 : r1) = mid;
        }
    }
    p.t = 0.5 * (l1 + r0);

    const double lateral = gap_y > 0.0 ? (y < cube.y() ? y + w / 2.0 : y - w / 2.0)
                                       : 0.5 * (lo_y + hi_y);
    p.lateral_mm = std::clamp(lateral - y, -w / 2.0, w / 2.0) * 1000.0;

    // Outward cube-face normal at the closest approach.
    const double px = a.x() + p.t * (b.x() - a.x());
    const double pz = a.z() + p.t * (b.z() - a.z());
    const double qx = std::abs(px - cube.x()) - h;
    const double qz = std::abs(pz - cube.z()) - h;
    if (gap_y > std::max(m, 0.0)) {
        p.normal = Eigen::Vector3d(0.0, y < cube.y() ? -1.0 : 1.0, 0.0);
    } else if (qx >= qz) {
        p.normal = Eigen::Vector3d(px < cube.x() ? -1.0 : 1.0, 0.0, 0.0);
    } else {
        p.normal = Eigen::Vector3d(0.0, 0.0, pz < cube.z() ? -1.0 : 1.0);
    }
    return p;
}

Eigen::Vector3d face_start(const Eigen::Vector3d& joint, const Eigen::Vector3d& inward, double t2) {
    return joint + t2 * inward;
}

}  // namespace

std::string to_string(RunType t) { return t == RunType::MAIN ? "MAIN" : "CONTROL"; }

RunType parse_run_type(const std::string& s) {
    if (s == "MAIN" || s == "main") return RunType::MAIN;
    if (s == "CONTROL" || s == "control") return RunType::CONTROL;
    throw LookupError("unknown run type '" + s + "'");
}

std::string to_string(Phase p) {
    switch (p) {
        case Phase::REACH: return "REACH";
        case Phase::LIFT_HOLD: return "LIFT_HOLD";
        case Phase::TERMINAL: return "TERMINAL";
    }
    return "?";
}

std::string to_string(Outcome o) {
    switch (o) {
        case Outcome::NONE: return "none";
        case Outcome::SUCCESS: return "success";
        case Outcome::DROPPED: return "dropped";
        case Outcome::TIMEOUT: return "timeout";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Parameters

SimParams SimParams::mpl() { return SimParams{}; }

SimParams SimParams::shadow() {
    SimParams p;
    p.hand = HandProfileId::SHADOW;
    p.success_mode = SuccessMode::GOAL_AT_END;
    p.auto_lift = false;
    p.finger_thickness = 0.008;
    p.finger_base_offset = 0.06;
    p.thumb_base_offset = 0.06;
    p.start_hand_pos = Eigen::Vector3d(0.0, 0.0, 0.085);
    return p;
}

SimParams SimParams::for_profile(HandProfileId id) {
    return id == HandProfileId::MPL ? mpl() : shadow();
}

namespace {

nlohmann::json vec3_json(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

Eigen::Vector3d json_vec3(const nlohmann::json& j) {
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

}  // namespace

void SimParams::merge_json(const std::string& json_text) {
    const auto j = nlohmann::json::parse(json_text);
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    if (j.contains("hand")) hand = parse_hand_profile(j.at("hand").get<std::string>());
    if (j.contains("success_mode")) {
        const auto m = j.at("success_mode").get<std::string>();
        if (m == "lift_and_hold") success_mode = SuccessMode::LIFT_AND_HOLD;
        else if (m == "goal_at_end") success_mode = SuccessMode::GOAL_AT_END;
        else throw ConfigurationError("unknown success_mode '" + m + "'");
    }
    get("cube_side", cube_side);
    get("max_translation", max_translation);
    get("contact_epsilon", contact_epsilon);
    get("hold_probe_ticks", hold_probe_ticks);
    get("hold_jitter", hold_jitter);
    get("max_episode_steps", max_episode_steps);
    get("lift_height", lift_height);
    get("auto_lift", auto_lift);
    get("flex_rate", flex_rate);
    get("joint_rate", joint_rate);
    get("dt", dt);
    get("finger_thickness", finger_thickness);
    get("finger_base_offset", finger_base_offset);
    get("thumb_base_offset", thumb_base_offset);
    get("finger_base_y", finger_base_y);
    get("abduction_shift", abduction_shift);
    get("rest_splay", rest_splay);
    if (j.contains("start_hand_pos")) start_hand_pos = json_vec3(j.at("start_hand_pos"));
    get("start_flexion", start_flexion);
    get("start_joint", start_joint);
    get("start_jitter", start_jitter);
    if (j.contains("workspace_lo")) workspace_lo = json_vec3(j.at("workspace_lo"));
    if (j.contains("workspace_hi")) workspace_hi = json_vec3(j.at("workspace_hi"));
    get("goal_height", goal_height);
    get("success_tolerance", success_tolerance);

    if (!(cube_side > 0.0) || !(max_translation > 0.0) || !(contact_epsilon >= 0.0) ||
        hold_probe_ticks < 0 || max_episode_steps <= 0 || !(dt > 0.0) || !(joint_rate > 0.0) ||
        !(success_tolerance > 0.0)) {
        throw ConfigurationError("simulator parameters out of range");
    }
}

std::string SimParams::to_json() const {
    nlohmann::json j;
    j["hand"] = tbench::to_string(hand);
    j["success_mode"] = success_mode == SuccessMode::LIFT_AND_HOLD ? "lift_and_hold" : "goal_at_end";
    j["cube_side"] = cube_side;
    j["max_translation"] = max_translation;
    j["contact_epsilon"] = contact_epsilon;
    j["hold_probe_ticks"] = hold_probe_ticks;
    j["hold_jitter"] = hold_jitter;
    j["max_episode_steps"] = max_episode_steps;
    j["lift_height"] = lift_height;
    j["auto_lift"] = auto_lift;
    j["flex_rate"] = flex_rate;
    j["joint_rate"] = joint_rate;
    j["dt"] = dt;
    j["finger_thickness"] = finger_thickness;
    j["finger_base_offset"] = finger_base_offset;
    j["thumb_base_offset"] = thumb_base_offset;
    j["finger_base_y"] = finger_base_y;
    j["abduction_shift"] = abduction_shift;
    j["rest_splay"] = rest_splay;
    j["start_hand_pos"] = vec3_json(start_hand_pos);
    j["start_flexion"] = start_flexion;
    j["start_joint"] = start_joint;
    j["start_jitter"] = start_jitter;
    j["workspace_lo"] = vec3_json(workspace_lo);
    j["workspace_hi"] = vec3_json(workspace_hi);
    j["goal_height"] = goal_height;
    j["success_tolerance"] = success_tolerance;
    return j.dump(2);
}

SimParams SimParams::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LookupError("cannot open simulator parameter file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const auto text = ss.str();
    const auto j = nlohmann::json::parse(text);
    SimParams p = j.contains("hand") ? for_profile(parse_hand_profile(j.at("hand").get<std::string>()))
                                     : SimParams{};
    p.merge_json(text);
    return p;
}

int action_size(HandProfileId id) { return id == HandProfileId::MPL ? 7 : 23; }

int observation_size(HandProfileId id, int sensor_count) {
    return (id == HandProfileId::MPL ? 12 : 53) + sensor_count;
}

bool SimState::operator==(const SimState& o) const {
    return profile == o.profile && hand_pos == o.hand_pos && actuation == o.actuation &&
           velocity == o.velocity && object_pos == o.object_pos && object_quat == o.object_quat &&
           goal == o.goal && phase == o.phase && step_count == o.step_count &&
           lifted == o.lifted && dropped == o.dropped &&
           lift_attempt_reported == o.lift_attempt_reported && outcome == o.outcome;
}

bool grasp_stable(const ContactSet& cs) {
    for (std::size_t i = 0; i < cs.size(); ++i) {
        for (std::size_t j = i + 1; j < cs.size(); ++j) {
            if (cs[i].pad.same_surface(cs[j].pad)) continue;
            if (cs[i].normal.dot(cs[j].normal) <= -0.5) return true;
        }
    }
    return false;
}

// ---------------------------------------------------------------------------
// Simulator

GraspSim::GraspSim(SimParams params, SensorLayout layout, RunType run_type)
    : params_(std::move(params)),
      profile_(HandProfile::for_id(params_.hand)),
      layout_(std::move(layout)),
      run_type_(run_type) {
    if (layout_.profile != params_.hand) {
        throw ConfigurationError("layout built for " + tbench::to_string(layout_.profile) +
                                 " cannot drive the " + tbench::to_string(params_.hand) + " hand");
    }
}

int GraspSim::action_size() const noexcept { return tbench::action_size(params_.hand); }

int GraspSim::observation_size() const noexcept {
    return tbench::observation_size(params_.hand, static_cast<int>(layout_.size()));
}

std::array<GraspSim::FingerPose, kFingerCount> GraspSim::finger_poses(const SimState& s) const {
    std::array<FingerPose, kFingerCount> poses;
    for (int f = 0; f < kFingerCount; ++f) {
        FingerPose& fp = poses[f];
        fp.side = f == 0 ? -1 : 1;
        const double base_x = f == 0 ? params_.thumb_base_offset : params_.finger_base_offset;

        std::array<double, kPhalangesPerFinger> rel{};
        double shift = 0.0;
        if (params_.hand == HandProfileId::MPL) {
            const double q = s.actuation[static_cast<std::size_t>(kMplActuator[f])];
            for (int k = 0; k < kPhalangesPerFinger; ++k) rel[k] = q * kMaxFlex[k];
        } else {
            const std::size_t j0 = static_cast<std::size_t>(4 * f);
            shift = params_.abduction_shift * s.actuation[j0];
            for (int k = 0; k < kPhalangesPerFinger; ++k) {
                rel[k] = 0.5 * (s.actuation[j0 + 1 + k] + 1.0) * kMaxFlex[k];
            }
        }

        fp.lateral = s.hand_pos.y() + params_.finger_base_y[f] + shift;
        fp.joints[0] = Eigen::Vector3d(s.hand_pos.x() + fp.side * base_x, fp.lateral, s.hand_pos.z());
        double phi = -params_.rest_splay;
        for (int k = 0; k < kPhalangesPerFinger; ++k) {
            phi += rel[k];
            const auto& dims = profile_.phalanx_dims[f][k];
            fp.length[k] = dims.length_mm / 1000.0;
            fp.width[k] = dims.width_mm / 1000.0;
            const Eigen::Vector3d dir(-fp.side * std::sin(phi), 0.0, -std::cos(phi));
            fp.inward[k] = Eigen::Vector3d(-fp.side * std::cos(phi), 0.0, std::sin(phi));
            fp.joints[k + 1] = fp.joints[k] + fp.length[k] * dir;
        }
    }
    return poses;
}

namespace {

double finger_cube_separation(const auto& fp, const Eigen::Vector3d& cube, double h, double t2) {
    double sep = std::numeric_limits<double>::infinity();
    for (int k = 0; k < kPhalangesPerFinger; ++k) {
        const auto a = face_start(fp.joints[k], fp.inward[k], t2);
        const auto b = face_start(fp.joints[k + 1], fp.inward[k], t2);
        sep = std::min(sep, probe_face(a, b, fp.lateral, fp.width[k], cube, h, false).separation);
    }
    return sep;
}

double finger_ground_clearance(const auto& fp, double t2) {
    double z = std::numeric_limits<double>::infinity();
    for (int k = 0; k < kPhalangesPerFinger; ++k) {
        z = std::min({z, fp.joints[k + 1].z(), face_start(fp.joints[k + 1], fp.inward[k], t2).z()});
    }
    return z;
}

}  // namespace

double GraspSim::cube_separation(const SimState& s, int finger) const {
    const auto poses = finger_poses(s);
    return finger_cube_separation(poses[finger], s.object_pos, params_.cube_side / 2.0,
                                  params_.finger_thickness / 2.0);
}

double GraspSim::palm_separation(const SimState& s) const {
    const double h = params_.cube_side / 2.0;
    const auto& palm = profile_.palm_dims;
    const double gx = std::max(0.0, std::abs(s.hand_pos.x() - s.object_pos.x()) -
                                        (palm.length_mm / 2000.0 + h));
    const double gy = std::max(0.0, std::abs(s.hand_pos.y() - s.object_pos.y()) -
                                        (palm.width_mm / 2000.0 + h));
    const double dz = s.hand_pos.z() - (s.object_pos.z() + h);
    if (gx > 0.0 || gy > 0.0) return std::sqrt(gx * gx + gy * gy + std::max(dz, 0.0) * std::max(dz, 0.0));
    return dz;
}

double GraspSim::ground_clearance(const SimState& s, int finger) const {
    const auto poses = finger_poses(s);
    return finger_ground_clearance(poses[finger], params_.finger_thickness / 2.0);
}

double GraspSim::min_cube_separation(const SimState& s) const {
    const auto poses = finger_poses(s);
    const double h = params_.cube_side / 2.0;
    double sep = palm_separation(s);
    for (const auto& fp : poses) {
        sep = std::min(sep, finger_cube_separation(fp, s.object_pos, h, params_.finger_thickness / 2.0));
    }
    return sep;
}

double GraspSim::min_ground_clearance(const SimState& s) const {
    const auto poses = finger_poses(s);
    double z = s.hand_pos.z();
    for (const auto& fp : poses) z = std::min(z, finger_ground_clearance(fp, params_.finger_thickness / 2.0));
    return z;
}

ContactSet GraspSim::contacts(const SimState& s) const {
    return contacts_with_offset(s, Eigen::Vector3d::Zero());
}

ContactSet GraspSim::contacts_with_offset(const SimState& state, const Eigen::Vector3d& hand_offset) const {
    SimState s = state;
    s.hand_pos += hand_offset;
    ContactSet out;
    const double h = params_.cube_side / 2.0;
    const double t2 = params_.finger_thickness / 2.0;
    const auto poses = finger_poses(s);
    for (int f = 0; f < kFingerCount; ++f) {
        const auto& fp = poses[f];
        for (int k = 0; k < kPhalangesPerFinger; ++k) {
            const auto a = face_start(fp.joints[k], fp.inward[k], t2);
            const auto b = face_start(fp.joints[k + 1], fp.inward[k], t2);
            const auto quick = probe_face(a, b, fp.lateral, fp.width[k], s.object_pos, h, false);
            if (quick.separation > params_.contact_epsilon) continue;
            const auto p = probe_face(a, b, fp.lateral, fp.width[k], s.object_pos, h, true);
            if (p.separation > params_.contact_epsilon) continue;
            Contact c;
            c.pad = PadId::phalanx_pad(f, k);
            c.surface_point_mm = Eigen::Vector2d((p.t - 0.5) * fp.length[k] * 1000.0, p.lateral_mm);
            c.normal = p.normal;
            out.push_back(c);
        }
    }
    if (palm_separation(s) <= params_.contact_epsilon) {
        const auto& palm = profile_.palm_dims;
        const double half_l = palm.length_mm / 2000.0, half_w = palm.width_mm / 2000.0;
        const double x_lo = std::max(s.hand_pos.x() - half_l, s.object_pos.x() - h);
        const double x_hi = std::min(s.hand_pos.x() + half_l, s.object_pos.x() + h);
        const double y_lo = std::max(s.hand_pos.y() - half_w, s.object_pos.y() - h);
        const double y_hi = std::min(s.hand_pos.y() + half_w, s.object_pos.y() + h);
        Contact c;
        c.pad = PadId::palm();
        const double u = std::clamp(0.5 * (x_lo + x_hi) - s.hand_pos.x(), -half_l, half_l);
        const double v = std::clamp(0.5 * (y_lo + y_hi) - s.hand_pos.y(), -half_w, half_w);
        c.surface_point_mm = Eigen::Vector2d(u * 1000.0, v * 1000.0);
        c.normal = Eigen::Vector3d::UnitZ();
        out.push_back(c);
    }
    return out;
}

void GraspSim::move_fingers(SimState& s, std::span<const double> action) const {
    const double t2 = params_.finger_thickness / 2.0;
    const double h = params_.cube_side / 2.0;

    // Fingers affected by each actuator group, and the group's target values.
    struct Group {
        std::vector<int> fingers;
        std::vector<std::size_t> slots;
        std::vector<double> target;
    };
    std::vector<Group> groups;
    if (params_.hand == HandProfileId::MPL) {
        for (int a = 0; a < 4; ++a) {
            Group g;
            for (int f = 0; f < kFingerCount; ++f) if (kMplActuator[f] == a) g.fingers.push_back(f);
            g.slots = {static_cast<std::size_t>(a)};
            g.target = {std::clamp(s.actuation[a] + params_.flex_rate * action[3 + a], 0.0, 1.0)};
            groups.push_back(std::move(g));
        }
    } else {
        for (int f = 0; f < kFingerCount; ++f) {
            Group g;
            g.fingers = {f};
            for (int j = 0; j < 4; ++j) {
                g.slots.push_back(static_cast<std::size_t>(4 * f + j));
                const std::size_t slot = static_cast<std::size_t>(4 * f + j);
                const double goal = std::clamp(action[slot], -1.0, 1.0);
                g.target.push_back(s.actuation[slot] +
                                   std::clamp(goal - s.actuation[slot], -params_.joint_rate, params_.joint_rate));
            }
            groups.push_back(std::move(g));
        }
    }

    for (const auto& g : groups) {
        auto measure = [&](const SimState& st, double& sep, double& ground) {
            const auto poses = finger_poses(st);
            sep = std::numeric_limits<double>::infinity();
            ground = std::numeric_limits<double>::infinity();
            for (int f : g.fingers) {
                sep = std::min(sep, finger_cube_separation(poses[f], st.object_pos, h, t2));
                ground = std::min(ground, finger_ground_clearance(poses[f], t2));
            }
        };
        double sep0 = 0.0, ground0 = 0.0;
        measure(s, sep0, ground0);
        const double sep_floor = std::min(0.0, sep0) - kFeasTol;
        const double ground_floor = std::min(0.0, ground0) - kFeasTol;

        std::vector<double> start(g.slots.size());
        for (std::size_t i = 0; i < g.slots.size(); ++i) start[i] = s.actuation[g.slots[i]];

        auto apply = [&](double alpha) {
            SimState t = s;
            for (std::size_t i = 0; i < g.slots.size(); ++i) {
                t.actuation[g.slots[i]] = start[i] + alpha * (g.target[i] - start[i]);
            }
            return t;
        };
        auto feasible = [&](const SimState& t) {
            double sep = 0.0, ground = 0.0;
            measure(t, sep, ground);
            return sep >= sep_floor && ground >= ground_floor;
        };

        // Sweep in substeps so a large move cannot pass through the cube.
        double span = 0.0;
        for (std::size_t i = 0; i < g.slots.size(); ++i) span = std::max(span, std::abs(g.target[i] - start[i]));
        const int substeps = std::max(1, static_cast<int>(std::ceil(span / kMaxSubstep - 1e-9)));
        double lo = 0.0, hi = 1.0;
        bool blocked = false;
        for (int k = 1; k <= substeps; ++k) {
            const double alpha = static_cast<double>(k) / substeps;
            if (!feasible(apply(alpha))) {
                hi = alpha;
                blocked = true;
                break;
            }
            lo = alpha;
        }
        if (blocked) {
            for (int i = 0; i < 24; ++i) {
                const double mid = 0.5 * (lo + hi);
                (feasible(apply(mid)) ? lo : hi) = mid;
            }
        }
        s = apply(lo);
    }
}

double GraspSim::move_hand(SimState& s, const Eigen::Vector3d& delta, bool carry) const {
    const double h = params_.cube_side / 2.0;
    const Eigen::Vector3d start = s.hand_pos;
    const Eigen::Vector3d goal = (start + delta).cwiseMax(params_.workspace_lo).cwiseMin(params_.workspace_hi);
    const Eigen::Vector3d step = goal - start;
    if (step.isZero(0.0)) return 0.0;

    const Eigen::Vector3d obj0 = s.object_pos;
    const double sep_floor = carry ? 0.0 : std::min(0.0, min_cube_separation(s)) - kFeasTol;
    const double ground_floor = std::min(0.0, min_ground_clearance(s)) - kFeasTol;

    auto apply = [&](double alpha) {
        SimState t = s;
        t.hand_pos = start + alpha * step;
        if (carry) t.object_pos = obj0 + alpha * step;
        return t;
    };
    auto feasible = [&](const SimState& t) {
        if (min_ground_clearance(t) < ground_floor) return false;
        if (carry) return t.object_pos.z() - h >= -kGroundTol;
        return min_cube_separation(t) >= sep_floor;
    };

    double alpha = 1.0;
    if (!feasible(apply(1.0))) {
        double lo = 0.0, hi = 1.0;
        for (int i = 0; i < 24; ++i) {
            const double mid = 0.5 * (lo + hi);
            (feasible(apply(mid)) ? lo : hi) = mid;
        }
        alpha = lo;
    }
    s = apply(alpha);
    if (carry) s.object_pos.z() = std::max(s.object_pos.z(), h);
    return alpha;
}

std::pair<SimState, Observation> GraspSim::reset(std::uint64_t seed) const {
    SimState s;
    s.profile = params_.hand;
    s.hand_pos = params_.start_hand_pos;
    const double h = params_.cube_side / 2.0;
    s.object_pos = Eigen::Vector3d(0.0, 0.0, h);
    if (params_.start_jitter > 0.0) {
        CounterRng rng(seed, streams::kSimReset);
        s.object_pos.x() += rng.uniform(-params_.start_jitter, params_.start_jitter);
        s.object_pos.y() += rng.uniform(-params_.start_jitter, params_.start_jitter);
    }
    if (params_.hand == HandProfileId::MPL) {
        s.actuation.assign(4, std::clamp(params_.start_flexion, 0.0, 1.0));
    } else {
        s.actuation.assign(20, 0.0);
        for (int f = 0; f < kFingerCount; ++f) {
            for (int j = 1; j < 4; ++j) s.actuation[static_cast<std::size_t>(4 * f + j)] = params_.start_joint;
        }
        s.velocity.assign(23, 0.0);
    }
    s.goal = Eigen::Vector3d(0.0, 0.0, h + params_.goal_height);
    if (min_cube_separation(s) < 0.0 || min_ground_clearance(s) < 0.0) {
        throw ConfigurationError("start pose intersects the object or the ground");
    }
    Observation obs = observe(s);
    return {std::move(s), std::move(obs)};
}

StepResult GraspSim::step(const SimState& state, std::span<const double> action) const {
    if (static_cast<int>(action.size()) != action_size()) {
        throw InterfaceError("action has " + std::to_string(action.size()) + " entries, expected " +
                             std::to_string(action_size()));
    }
    if (state.phase == Phase::TERMINAL) throw LifecycleError("step called on a terminal episode");

    std::vector<double> a(action.begin(), action.end());
    for (double& v : a) v = std::isfinite(v) ? std::clamp(v, -1.0, 1.0) : 0.0;

    const double h = params_.cube_side / 2.0;
    StepResult r;
    SimState& s = r.state;
    s = state;
    const std::vector<double> actuation0 = s.actuation;
    const Eigen::Vector3d hand0 = s.hand_pos;
    const bool grounded0 = s.object_pos.z() - h <= kGroundTol;

    move_fingers(s, a);

    const ContactSet mid = contacts(s);
    const bool carry = grasp_stable(mid);
    Eigen::Vector3d delta;
    if (params_.hand == HandProfileId::MPL) {
        delta = params_.max_translation * Eigen::Vector3d(a[0], a[1], a[2]);
    } else {
        delta = params_.max_translation * Eigen::Vector3d(a[20], a[21], a[22]);
    }
    move_hand(s, delta, carry);
    const double rise = s.hand_pos.z() - hand0.z();

    if (grounded0 && !carry && rise > 0.0 && !mid.empty() && !s.lift_attempt_reported) {
        r.events.lift_attempt_failed = true;
        s.lift_attempt_reported = true;
    }

    const ContactSet after = contacts(s);
    const bool held = grasp_stable(after);
    const bool airborne = s.object_pos.z() - h > kGroundTol;

    auto drop = [&] {
        s.object_pos.z() = h;
        s.dropped = true;
        s.phase = Phase::REACH;
        r.events.object_dropped = true;
        r.events.lift_attempt_failed = true;
    };

    if (airborne && !held) {
        drop();
    } else if (airborne && grounded0) {
        r.events.object_lifted = true;
        s.lifted = true;
        s.phase = Phase::LIFT_HOLD;
        if (params_.success_mode == SuccessMode::LIFT_AND_HOLD && params_.auto_lift && !s.dropped) {
            const double up = std::max(0.0, params_.lift_height - s.hand_pos.z());
            s.hand_pos.z() += up;
            s.object_pos.z() += up;
        }
    }

    if (s.phase == Phase::LIFT_HOLD && params_.success_mode == SuccessMode::LIFT_AND_HOLD &&
        !s.dropped && s.hand_pos.z() >= params_.lift_height - 1e-9) {
        if (hold_test(s)) {
            r.events.success = true;
            s.phase = Phase::TERMINAL;
            s.outcome = Outcome::SUCCESS;
        } else {
            drop();
        }
    }

    ++s.step_count;
    if (params_.hand == HandProfileId::SHADOW) {
        for (std::size_t i = 0; i < 20; ++i) s.velocity[i] = (s.actuation[i] - actuation0[i]) / params_.dt;
        for (int i = 0; i < 3; ++i) s.velocity[20 + static_cast<std::size_t>(i)] = (s.hand_pos[i] - hand0[i]) / params_.dt;
    }

    if (s.phase != Phase::TERMINAL && s.step_count >= params_.max_episode_steps) {
        s.phase = Phase::TERMINAL;
        const bool at_goal = (s.object_pos - s.goal).norm() <= params_.success_tolerance;
        if (params_.success_mode == SuccessMode::GOAL_AT_END && at_goal) {
            r.events.success = true;
            s.outcome = Outcome::SUCCESS;
        } else {
            r.events.timeout = true;
            s.outcome = s.dropped ? Outcome::DROPPED : Outcome::TIMEOUT;
        }
    }

    const ContactSet final_contacts = contacts(s);
    r.events.contact_count = static_cast<int>(final_contacts.size());
    r.observation = observe(s);
    return r;
}

bool GraspSim::hold_test(const SimState& s) const {
    const double h = params_.cube_side / 2.0;
    if (s.phase != Phase::LIFT_HOLD || s.object_pos.z() - h <= kGroundTol) {
        throw LifecycleError("hold_test requires a lifted object in the LIFT_HOLD phase");
    }
    const double j = params_.hold_jitter;
    const std::array<Eigen::Vector3d, 4> cycle = {Eigen::Vector3d(0, 0, j), Eigen::Vector3d(0, 0, -j),
                                                  Eigen::Vector3d(0, j, 0), Eigen::Vector3d(0, -j, 0)};
    if (!grasp_stable(contacts(s))) return false;
    for (int k = 0; k < params_.hold_probe_ticks; ++k) {
        if (!grasp_stable(contacts_with_offset(s, cycle[static_cast<std::size_t>(k) % cycle.size()]))) {
            return false;
        }
    }
    return true;
}

Observation GraspSim::observe(const SimState& s) const {
    Observation o;
    const int n = static_cast<int>(layout_.size());
    o.values.reserve(static_cast<std::size_t>(observation_size()));
    if (params_.hand == HandProfileId::MPL) {
        o.values.push_back(1.0);  // object id
        for (int i = 0; i < 3; ++i) o.values.push_back(s.hand_pos[i]);
        for (int i = 0; i < 3; ++i) o.values.push_back(s.object_pos[i]);
        for (double a : proximal_angles(s)) o.values.push_back(a);
    } else {
        for (double v : s.actuation) o.values.push_back(v);
        for (int i = 0; i < 3; ++i) o.values.push_back(s.hand_pos[i]);
        for (double v : s.velocity) o.values.push_back(v);
        for (int i = 0; i < 3; ++i) o.values.push_back(s.object_pos[i]);
        for (int i = 0; i < 4; ++i) o.values.push_back(s.object_quat[i]);
        o.achieved_goal = s.object_pos;
        o.desired_goal = s.goal;
    }
    o.tactile_offset = static_cast<int>(o.values.size());
    o.tactile_count = n;
    if (run_type_ == RunType::MAIN) {
        std::vector<SurfacePoint> points;
        for (const auto& c : contacts(s)) points.push_back({c.pad, c.surface_point_mm});
        for (bool on : activation(layout_, points)) o.values.push_back(on ? 1.0 : 0.0);
    } else {
        o.values.insert(o.values.end(), static_cast<std::size_t>(n), 0.0);
    }
    return o;
}

std::array<Eigen::Vector3d, kFingerCount> GraspSim::fingertip_positions(const SimState& s) const {
    const auto poses = finger_poses(s);
    std::array<Eigen::Vector3d, kFingerCount> tips;
    for (int f = 0; f < kFingerCount; ++f) tips[f] = 0.5 * (poses[f].joints[2] + poses[f].joints[3]);
    return tips;
}

std::array<double, kFingerCount> GraspSim::proximal_angles(const SimState& s) const {
    std::array<double, kFingerCount> out{};
    for (int f = 0; f < kFingerCount; ++f) {
        if (params_.hand == HandProfileId::MPL) {
            out[f] = s.actuation[static_cast<std::size_t>(kMplActuator[f])] * kMaxFlex[0];
        } else {
            out[f] = 0.5 * (s.actuation[static_cast<std::size_t>(4 * f + 1)] + 1.0) * kMaxFlex[0];
        }
    }
    return out;
}

std::vector<std::pair<double, double>> GraspSim::actuation_ranges() const {
    std::vector<std::pair<double, double>> r;
    for (int f = 0; f < kFingerCount; ++f) {
        r.emplace_back(-kMaxAbduction, kMaxAbduction);
        for (double m : kMaxFlex) r.emplace_back(0.0, m);
    }
    for (int i = 0; i < 3; ++i) r.emplace_back(-params_.max_translation, params_.max_translation);
    return r;
}

void TraceWriter::write(const SimState& s, const StepEvents* events, double reward) {
    nlohmann::json j;
    j["step"] = s.step_count;
    j["phase"] = to_string(s.phase);
    j["hand"] = vec3_json(s.hand_pos);
    j["actuation"] = s.actuation;
    j["object"] = vec3_json(s.object_pos);
    j["outcome"] = to_string(s.outcome);
    if (events != nullptr) {
        j["events"] = {{"lift_attempt_failed", events->lift_attempt_failed},
                       {"object_lifted", events->object_lifted},
                       {"object_dropped", events->object_dropped},
                       {"success", events->success},
                       {"timeout", events->timeout},
                       {"contact_count", events->contact_count}};
        j["reward"] = reward;
    }
    out_ << j.dump() << '\n';
}

}  // namespace tbench
