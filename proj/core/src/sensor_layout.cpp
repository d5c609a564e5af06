#include "tbench/sensor_layout.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tbench/errors.hpp"

namespace tbench {

namespace {

struct GridCell {
    int row;
    int col;
};

// Per-phalanx patterns on the 3x3 grid, row-major.
const std::vector<GridCell>& default_pattern(int config_id) {
    static const std::array<std::vector<GridCell>, 7> patterns = {{
        {},
        {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 0}, {0, 1}, {1, -1}, {1, 0}, {1, 1}},
        {{-1, -1}, {-1, 1}, {0, 0}, {1, -1}, {1, 1}},  // corners + center
        {{-1, -1}, {-1, 1}, {1, -1}, {1, 1}},          // corners
        {{-1, 0}, {0, -1}, {0, 0}, {0, 1}, {1, 0}},    // center + edge midpoints
        {{0, 0}},
        {{0, 0}},
    }};
    return patterns[static_cast<std::size_t>(config_id)];
}

void check_config_id(int config_id) {
    if (config_id < 1 || config_id > 6) {
        throw ConfigurationUnknownError("unknown sensor configuration id " +
                                        std::to_string(config_id) + " (expected 1..6)");
    }
}

void check_fits(const SensorSpec& s, const PadDims& dims) {
    const double half_len = dims.length_mm / 2.0;
    const double half_wid = dims.width_mm / 2.0;
    if (!(s.radius_mm > 0.0)) {
        throw GeometryViolationError("sensor radius must be positive on " + s.pad.to_string());
    }
    if (std::abs(s.position_mm.x()) + s.radius_mm > half_len + 1e-12 ||
        std::abs(s.position_mm.y()) + s.radius_mm > half_wid + 1e-12) {
        std::ostringstream os;
        os << "sensor at (" << s.position_mm.x() << ", " << s.position_mm.y() << ") r="
           << s.radius_mm << " does not fit pad " << s.pad.to_string() << " ("
           << dims.length_mm << "x" << dims.width_mm << " mm)";
        throw GeometryViolationError(os.str());
    }
}

const PadDims& pad_dims(const HandProfile& profile, const PadId& pad) {
    return pad.is_palm() ? profile.palm_dims
                         : profile.phalanx_dims[static_cast<std::size_t>(pad.finger)]
                                               [static_cast<std::size_t>(pad.phalanx)];
}

void check_pad_exists(const PadId& pad) {
    if (pad.is_palm()) return;
    if (pad.finger < 0 || pad.finger >= kFingerCount || pad.phalanx < 0 ||
        pad.phalanx >= kPhalangesPerFinger) {
        throw LookupError("unknown pad " + pad.to_string());
    }
}

double phalanx_radius(const HandProfile& profile, int config_id) {
    return config_id == 6 ? profile.large_sensor_radius_mm : profile.sensor_radius_mm;
}

}  // namespace

std::string to_string(HandProfileId id) {
    return id == HandProfileId::MPL ? "MPL" : "SHADOW";
}

HandProfileId parse_hand_profile(const std::string& s) {
    if (s == "MPL" || s == "mpl") return HandProfileId::MPL;
    if (s == "SHADOW" || s == "shadow") return HandProfileId::SHADOW;
    throw LookupError("unknown hand profile '" + s + "'");
}

std::string PadId::to_string() const {
    if (is_palm()) return "palm[" + std::to_string(slot) + "]";
    return "finger" + std::to_string(finger) + ".phalanx" + std::to_string(phalanx);
}

HandProfile HandProfile::mpl() {
    HandProfile p;
    p.id = HandProfileId::MPL;
    for (auto& finger : p.phalanx_dims) finger.fill(PadDims{30.0, 18.0});
    p.palm_dims = {80.0, 80.0};
    p.sensor_radius_mm = 2.0;
    p.large_sensor_radius_mm = 3.8;
    p.col_spacing_mm = 6.5;
    p.row_spacing_mm = {4.5, 4.5, 4.5};
    return p;
}

HandProfile HandProfile::shadow() {
    HandProfile p;
    p.id = HandProfileId::SHADOW;
    for (auto& finger : p.phalanx_dims) finger = {PadDims{28.0, 14.0}, PadDims{18.0, 14.0}, PadDims{24.0, 14.0}};
    p.palm_dims = {80.0, 80.0};
    p.sensor_radius_mm = 1.5;
    p.large_sensor_radius_mm = 3.5;
    p.col_spacing_mm = 5.0;
    p.row_spacing_mm = {6.0, 3.0, 7.5};
    return p;
}

HandProfile HandProfile::for_id(HandProfileId id) {
    return id == HandProfileId::MPL ? mpl() : shadow();
}

void HandProfile::validate() const {
    for (int f = 0; f < kFingerCount; ++f) {
        for (int ph = 0; ph < kPhalangesPerFinger; ++ph) {
            const auto& d = phalanx_dims[f][ph];
            const double r = std::max(sensor_radius_mm, large_sensor_radius_mm);
            const double need_len = 2.0 * (row_spacing_mm[ph] + sensor_radius_mm);
            const double need_wid = 2.0 * (col_spacing_mm + sensor_radius_mm);
            if (d.length_mm + 1e-12 < need_len || d.width_mm + 1e-12 < need_wid ||
                d.length_mm + 1e-12 < 2.0 * r || d.width_mm + 1e-12 < 2.0 * r) {
                throw GeometryViolationError("pad " + PadId::phalanx_pad(f, ph).to_string() +
                                             " too small for the sensor grid");
            }
        }
    }
}

SensorLayout build_layout(int config_id, const HandProfile& profile,
                          const LayoutOverride* overrides) {
    check_config_id(config_id);
    profile.validate();

    const std::array<std::vector<PatternEntry>, kPhalangesPerFinger>* custom = nullptr;
    if (overrides != nullptr) {
        if (auto it = overrides->patterns.find(config_id); it != overrides->patterns.end()) {
            custom = &it->second;
        }
    }

    SensorLayout layout;
    layout.profile = profile.id;
    layout.config_id = config_id;
    layout.sensors.reserve(static_cast<std::size_t>(kSensorTotals[config_id]));

    const double radius = phalanx_radius(profile, config_id);
    for (int f = 0; f < kFingerCount; ++f) {
        for (int ph = 0; ph < kPhalangesPerFinger; ++ph) {
            const PadId pad = PadId::phalanx_pad(f, ph);
            if (custom != nullptr) {
                for (const auto& e : (*custom)[ph]) {
                    layout.sensors.push_back({pad, e.position_mm, e.radius_mm});
                }
            } else {
                for (const auto& cell : default_pattern(config_id)) {
                    layout.sensors.push_back(
                        {pad,
                         Eigen::Vector2d(cell.row * profile.row_spacing_mm[ph],
                                         cell.col * profile.col_spacing_mm),
                         radius});
                }
            }
        }
    }

    // Palm: one sensor per non-thumb finger base, along the distal edge.
    const double x = profile.palm_dims.length_mm / 2.0 - profile.palm_sensor_inset_mm;
    const double pitch = profile.palm_dims.width_mm / kPalmSlots;
    for (int s = 0; s < kPalmSlots; ++s) {
        const double y = -profile.palm_dims.width_mm / 2.0 + pitch * (s + 0.5);
        layout.sensors.push_back({PadId::palm(s), Eigen::Vector2d(x, y), radius});
    }

    for (const auto& s : layout.sensors) check_fits(s, pad_dims(profile, s.pad));

    if (static_cast<int>(layout.sensors.size()) != kSensorTotals[config_id]) {
        throw GeometryViolationError("configuration " + std::to_string(config_id) + " has " +
                                     std::to_string(layout.sensors.size()) +
                                     " sensors, expected " +
                                     std::to_string(kSensorTotals[config_id]));
    }
    return layout;
}

std::vector<SensorSpec> sensor_positions(const SensorLayout& layout, const PadId& pad) {
    check_pad_exists(pad);
    std::vector<SensorSpec> out;
    if (pad.is_palm() && (pad.slot < 0 || pad.slot >= kPalmSlots)) return out;
    for (const auto& s : layout.sensors) {
        if (s.pad == pad) out.push_back(s);
    }
    return out;
}

std::vector<bool> activation(const SensorLayout& layout, const std::vector<SurfacePoint>& contacts) {
    for (const auto& c : contacts) check_pad_exists(c.pad);
    std::vector<bool> active(layout.sensors.size(), false);
    for (std::size_t i = 0; i < layout.sensors.size(); ++i) {
        const auto& s = layout.sensors[i];
        for (const auto& c : contacts) {
            if (!c.pad.same_surface(s.pad)) continue;
            if ((c.point_mm - s.position_mm).norm() <= s.radius_mm) {
                active[i] = true;
                break;
            }
        }
    }
    return active;
}

LayoutOverride LayoutOverride::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LookupError("cannot open layout override file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

LayoutOverride LayoutOverride::parse(const std::string& json_text) {
    using nlohmann::json;
    static const char* kPhalanxNames[] = {"proximal", "middle", "distal"};

    const json doc = json::parse(json_text);
    if (!doc.is_object()) throw GeometryViolationError("layout override must be a JSON object");

    auto parse_list = [](const json& list) {
        std::vector<PatternEntry> out;
        for (const auto& e : list) {
            const auto& pos = e.at("position_mm");
            out.push_back({Eigen::Vector2d(pos.at(0).get<double>(), pos.at(1).get<double>()),
                           e.at("radius_mm").get<double>()});
        }
        return out;
    };

    LayoutOverride result;
    for (const auto& [key, value] : doc.items()) {
        const int config_id = std::stoi(key);
        check_config_id(config_id);
        std::array<std::vector<PatternEntry>, kPhalangesPerFinger> per_phalanx;
        if (value.is_array()) {
            per_phalanx.fill(parse_list(value));
        } else {
            for (int ph = 0; ph < kPhalangesPerFinger; ++ph) {
                per_phalanx[ph] = parse_list(value.at(kPhalanxNames[ph]));
            }
        }
        const std::size_t expected =
            static_cast<std::size_t>((kSensorTotals[config_id] - kPalmSlots) / kSensedPhalanges);
        for (int ph = 0; ph < kPhalangesPerFinger; ++ph) {
            if (per_phalanx[ph].size() != expected) {
                throw GeometryViolationError(
                    "override for configuration " + key + " lists " +
                    std::to_string(per_phalanx[ph].size()) + " sensors on " + kPhalanxNames[ph] +
                    " pads, expected " + std::to_string(expected));
            }
        }
        result.patterns[config_id] = std::move(per_phalanx);
    }
    return result;
}

}  // namespace tbench
