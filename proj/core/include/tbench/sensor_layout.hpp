#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace tbench {

enum class HandProfileId : std::uint8_t { MPL, SHADOW };

std::string to_string(HandProfileId id);
HandProfileId parse_hand_profile(const std::string& s);

inline constexpr int kFingerCount = 5;
inline constexpr int kPhalangesPerFinger = 3;
inline constexpr int kPalmSlots = 4;
inline constexpr int kConfigCount = 6;
inline constexpr int kSensedPhalanges = kFingerCount * kPhalangesPerFinger;

/// Total sensor count per configuration id (index 1..6).
inline constexpr std::array<int, 7> kSensorTotals = {0, 139, 79, 64, 79, 19, 19};

struct PadDims {
    double length_mm = 0.0;
    double width_mm = 0.0;
};

/// Geometry of one hand model's sensor-bearing surfaces. Finger 0 is the
/// thumb; fingers 1..4 are index..little. Phalanx 0 is proximal.
struct HandProfile {
    HandProfileId id = HandProfileId::MPL;
    std::array<std::array<PadDims, kPhalangesPerFinger>, kFingerCount> phalanx_dims{};
    PadDims palm_dims{};

    double sensor_radius_mm = 0.0;        // configs 1-5 and palm
    double large_sensor_radius_mm = 0.0;  // config 6
    double col_spacing_mm = 0.0;          // across the pad width
    std::array<double, kPhalangesPerFinger> row_spacing_mm{};  // along the pad length
    double palm_sensor_inset_mm = 5.0;    // distance of palm sensors from the distal edge

    static HandProfile mpl();
    static HandProfile shadow();
    static HandProfile for_id(HandProfileId id);

    /// Throws GeometryViolationError if a pad cannot host the densest grid
    /// plus one radius of margin.
    void validate() const;
};

enum class PadKind : std::uint8_t { Phalanx, Palm };

/// A sensor-bearing surface. For palm sensors `slot` names the finger base
/// (0 = index .. 3 = little); contacts on the palm ignore the slot.
struct PadId {
    PadKind kind = PadKind::Phalanx;
    int finger = 0;
    int phalanx = 0;
    int slot = 0;

    static PadId phalanx_pad(int finger, int phalanx) { return {PadKind::Phalanx, finger, phalanx, 0}; }
    static PadId palm(int slot = 0) { return {PadKind::Palm, 0, 0, slot}; }

    bool is_palm() const noexcept { return kind == PadKind::Palm; }
    /// 0..14 for phalanges (finger*3 + phalanx), 15 for the palm.
    int surface_index() const noexcept {
        return is_palm() ? kSensedPhalanges : finger * kPhalangesPerFinger + phalanx;
    }
    bool same_surface(const PadId& o) const noexcept { return surface_index() == o.surface_index(); }
    bool operator==(const PadId&) const = default;

    std::string to_string() const;
};

struct SensorSpec {
    PadId pad;
    Eigen::Vector2d position_mm = Eigen::Vector2d::Zero();  // (along length, across width)
    double radius_mm = 0.0;
};

struct SensorLayout {
    HandProfileId profile = HandProfileId::MPL;
    int config_id = 0;
    std::vector<SensorSpec> sensors;

    std::size_t size() const noexcept { return sensors.size(); }
};

/// A contact location expressed in its pad's local surface frame (mm).
struct SurfacePoint {
    PadId pad;
    Eigen::Vector2d point_mm = Eigen::Vector2d::Zero();
};

/// One per-phalanx pattern entry from a layout-override file.
struct PatternEntry {
    Eigen::Vector2d position_mm = Eigen::Vector2d::Zero();
    double radius_mm = 0.0;
};

/// Replacement per-phalanx patterns keyed by config id. Each config holds
/// a pattern for proximal/middle/distal pads, repeated on every finger.
struct LayoutOverride {
    std::map<int, std::array<std::vector<PatternEntry>, kPhalangesPerFinger>> patterns;

    /// Parses and validates against count invariants.
    static LayoutOverride load(const std::filesystem::path& path);
    static LayoutOverride parse(const std::string& json_text);
};

/// Builds configuration `config_id` (1..6) on `profile`.
SensorLayout build_layout(int config_id, const HandProfile& profile,
                          const LayoutOverride* overrides = nullptr);

/// Sensors on one pad as (position, radius), in layout order.
std::vector<SensorSpec> sensor_positions(const SensorLayout& layout, const PadId& pad);

/// Boolean activation, closed-disc rule (distance <= radius).
std::vector<bool> activation(const SensorLayout& layout, const std::vector<SurfacePoint>& contacts);

}  // namespace tbench
