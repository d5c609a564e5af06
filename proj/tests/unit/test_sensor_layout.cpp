#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "gen.hpp"
#include "tbench/errors.hpp"
#include "tbench/sensor_layout.hpp"

using namespace tbench;

namespace {

using PointSet = std::set<std::pair<double, double>>;

PointSet positions_on(const SensorLayout& layout, const PadId& pad) {
    PointSet out;
    for (const auto& s : sensor_positions(layout, pad)) out.insert({s.position_mm.x(), s.position_mm.y()});
    return out;
}

const std::array<HandProfile, 2> kProfiles = {HandProfile::mpl(), HandProfile::shadow()};

}  // namespace

TEST(SensorLayout, TotalsMatchForBothProfiles) {
    const std::array<std::size_t, 7> expected = {0, 139, 79, 64, 79, 19, 19};
    for (const auto& profile : kProfiles) {
        for (int id = 1; id <= 6; ++id) {
            const auto layout = build_layout(id, profile);
            EXPECT_EQ(layout.size(), expected[static_cast<std::size_t>(id)]) << "config " << id;
            const auto palm = std::count_if(layout.sensors.begin(), layout.sensors.end(),
                                            [](const SensorSpec& s) { return s.pad.is_palm(); });
            EXPECT_EQ(palm, 4);
        }
    }
}

TEST(SensorLayout, ConfigOneHasNinePerPhalanx) {
    const auto layout = build_layout(1, HandProfile::mpl());
    EXPECT_EQ((139 - 4) / 15, 9);
    for (int f = 0; f < kFingerCount; ++f) {
        for (int p = 0; p < kPhalangesPerFinger; ++p) {
            EXPECT_EQ(sensor_positions(layout, PadId::phalanx_pad(f, p)).size(), 9u);
        }
    }
}

TEST(SensorLayout, MplGridCoordinates) {
    const auto layout = build_layout(1, HandProfile::mpl());
    PointSet expected;
    for (int r = -1; r <= 1; ++r) {
        for (int c = -1; c <= 1; ++c) expected.insert({r * 4.5, c * 6.5});
    }
    for (int f = 0; f < kFingerCount; ++f) {
        for (int p = 0; p < kPhalangesPerFinger; ++p) {
            EXPECT_EQ(positions_on(layout, PadId::phalanx_pad(f, p)), expected);
            for (const auto& s : sensor_positions(layout, PadId::phalanx_pad(f, p))) EXPECT_DOUBLE_EQ(s.radius_mm, 2.0);
        }
    }
}

TEST(SensorLayout, ShadowRowSpacingPerPhalanx) {
    const auto layout = build_layout(1, HandProfile::shadow());
    const std::array<double, 3> rows = {6.0, 3.0, 7.5};
    for (int p = 0; p < kPhalangesPerFinger; ++p) {
        PointSet expected;
        for (int r = -1; r <= 1; ++r) {
            for (int c = -1; c <= 1; ++c) expected.insert({r * rows[static_cast<std::size_t>(p)], c * 5.0});
        }
        EXPECT_EQ(positions_on(layout, PadId::phalanx_pad(2, p)), expected) << "phalanx " << p;
    }
}

TEST(SensorLayout, ConfigThreeHasNoCenter) {
    for (const auto& profile : kProfiles) {
        const auto layout = build_layout(3, profile);
        EXPECT_EQ(layout.size(), 64u);
        for (const auto& s : layout.sensors) {
            if (!s.pad.is_palm()) EXPECT_FALSE(s.position_mm.isZero()) << s.pad.to_string();
        }
    }
}

TEST(SensorLayout, ConfigThreeIsConfigTwoMinusCenter) {
    for (const auto& profile : kProfiles) {
        const auto two = build_layout(2, profile);
        const auto three = build_layout(3, profile);
        for (int f = 0; f < kFingerCount; ++f) {
            for (int p = 0; p < kPhalangesPerFinger; ++p) {
                auto expected = positions_on(two, PadId::phalanx_pad(f, p));
                ASSERT_EQ(expected.erase({0.0, 0.0}), 1u);
                EXPECT_EQ(positions_on(three, PadId::phalanx_pad(f, p)), expected);
            }
        }
    }
}

TEST(SensorLayout, ConfigsTwoAndFourDifferOnEveryPhalanx) {
    for (const auto& profile : kProfiles) {
        const auto two = build_layout(2, profile);
        const auto four = build_layout(4, profile);
        EXPECT_EQ(two.size(), four.size());
        for (int f = 0; f < kFingerCount; ++f) {
            for (int p = 0; p < kPhalangesPerFinger; ++p) {
                const auto a = positions_on(two, PadId::phalanx_pad(f, p));
                const auto b = positions_on(four, PadId::phalanx_pad(f, p));
                EXPECT_NE(a, b);
                EXPECT_TRUE(a.contains({0.0, 0.0}));
                EXPECT_TRUE(b.contains({0.0, 0.0}));
            }
        }
    }
}

TEST(SensorLayout, SingleSensorConfigs) {
    const auto five = build_layout(5, HandProfile::shadow());
    EXPECT_EQ(five.size(), 19u);
    for (const auto& s : five.sensors) {
        if (s.pad.is_palm()) continue;
        EXPECT_TRUE(s.position_mm.isZero());
        EXPECT_DOUBLE_EQ(s.radius_mm, 1.5);
    }
    const auto six = build_layout(6, HandProfile::mpl());
    const auto pad = sensor_positions(six, PadId::phalanx_pad(1, 2));
    ASSERT_EQ(pad.size(), 1u);
    EXPECT_TRUE(pad[0].position_mm.isZero());
    EXPECT_DOUBLE_EQ(pad[0].radius_mm, 3.8);
    EXPECT_DOUBLE_EQ(sensor_positions(build_layout(6, HandProfile::shadow()), PadId::phalanx_pad(0, 0))[0].radius_mm,
                     3.5);
}

TEST(SensorLayout, PalmSensorsSitAtFingerBases) {
    for (const auto& profile : kProfiles) {
        const auto layout = build_layout(2, profile);
        PointSet palm;
        for (const auto& s : layout.sensors) {
            if (s.pad.is_palm()) {
                palm.insert({s.position_mm.x(), s.position_mm.y()});
                EXPECT_DOUBLE_EQ(s.radius_mm, profile.sensor_radius_mm);
            }
        }
        const double x = profile.palm_dims.length_mm / 2.0 - 5.0;
        EXPECT_EQ(palm, (PointSet{{x, -30.0}, {x, -10.0}, {x, 10.0}, {x, 30.0}}));
        EXPECT_TRUE(layout.sensors.back().pad.is_palm());
    }
}

TEST(SensorLayout, PositionSetsAreCentrallySymmetric) {
    for (const auto& profile : kProfiles) {
        for (int id = 1; id <= 6; ++id) {
            const auto layout = build_layout(id, profile);
            for (int f = 0; f < kFingerCount; ++f) {
                for (int p = 0; p < kPhalangesPerFinger; ++p) {
                    const auto pts = positions_on(layout, PadId::phalanx_pad(f, p));
                    for (const auto& [x, y] : pts) EXPECT_TRUE(pts.contains({-x + 0.0, -y + 0.0}));
                }
            }
        }
    }
}

TEST(SensorLayout, OrderingIsFingerPhalanxRowMajorPalmLast) {
    const auto layout = build_layout(1, HandProfile::mpl());
    int last_surface = -1;
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const int surface = layout.sensors[i].pad.surface_index();
        EXPECT_GE(surface, last_surface);
        last_surface = surface;
    }
    const auto pad = sensor_positions(layout, PadId::phalanx_pad(0, 0));
    for (std::size_t i = 1; i < pad.size(); ++i) {
        const auto& a = pad[i - 1].position_mm;
        const auto& b = pad[i].position_mm;
        EXPECT_TRUE(a.x() < b.x() || (a.x() == b.x() && a.y() < b.y()));
    }
}

TEST(SensorLayout, DeterministicConstruction) {
    const auto a = build_layout(4, HandProfile::shadow());
    const auto b = build_layout(4, HandProfile::shadow());
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.sensors[i].pad, b.sensors[i].pad);
        EXPECT_EQ(a.sensors[i].position_mm, b.sensors[i].position_mm);
        EXPECT_EQ(a.sensors[i].radius_mm, b.sensors[i].radius_mm);
    }
}

TEST(SensorLayout, Errors) {
    EXPECT_THROW(build_layout(0, HandProfile::mpl()), ConfigurationUnknownError);
    EXPECT_THROW(build_layout(7, HandProfile::mpl()), ConfigurationUnknownError);
    auto tiny = HandProfile::mpl();
    tiny.phalanx_dims[1][1] = {10.0, 10.0};
    EXPECT_THROW(build_layout(1, tiny), GeometryViolationError);
    const auto layout = build_layout(1, HandProfile::mpl());
    EXPECT_THROW(sensor_positions(layout, PadId::phalanx_pad(5, 0)), LookupError);
    EXPECT_THROW(sensor_positions(layout, PadId::phalanx_pad(0, 3)), LookupError);
    EXPECT_TRUE(sensor_positions(layout, PadId::palm(4)).empty());
    EXPECT_THROW(activation(layout, {{PadId::phalanx_pad(-1, 0), {0.0, 0.0}}}), LookupError);
}

TEST(SensorLayout, ProfilesSatisfyMarginInvariant) {
    for (const auto& profile : kProfiles) EXPECT_NO_THROW(profile.validate());
}

TEST(Activation, CenterBoundaryAndOr) {
    const auto layout = build_layout(1, HandProfile::mpl());
    const auto pad = PadId::phalanx_pad(1, 2);
    const auto specs = sensor_positions(layout, pad);
    const auto index_of = [&](const SensorSpec& s) {
        for (std::size_t i = 0; i < layout.size(); ++i) {
            if (layout.sensors[i].pad == s.pad && layout.sensors[i].position_mm == s.position_mm) return i;
        }
        return layout.size();
    };

    const auto none = activation(layout, {});
    EXPECT_EQ(std::count(none.begin(), none.end(), true), 0);

    const auto& center = specs[4];
    auto act = activation(layout, {{pad, center.position_mm}});
    EXPECT_TRUE(act[index_of(center)]);
    EXPECT_EQ(std::count(act.begin(), act.end(), true), 1);

    const Eigen::Vector2d on_edge = center.position_mm + Eigen::Vector2d(0.0, 2.0);
    EXPECT_TRUE(activation(layout, {{pad, on_edge}})[index_of(center)]);
    const Eigen::Vector2d outside = center.position_mm + Eigen::Vector2d(0.0, 2.0 + 1e-9);
    EXPECT_FALSE(activation(layout, {{pad, outside}})[index_of(center)]);

    const auto twice = activation(layout, {{pad, center.position_mm}, {pad, center.position_mm + Eigen::Vector2d(0.5, 0.5)}});
    EXPECT_EQ(twice, act);

    // Same local point on another pad must not light this one.
    const auto other = activation(layout, {{PadId::phalanx_pad(2, 2), center.position_mm}});
    EXPECT_FALSE(other[index_of(center)]);
}

TEST(Activation, MonotoneUnderAddedContacts) {
    for (std::uint64_t k = 0; k < 200; ++k) {
        auto rng = gen::case_rng(11, k);
        const int id = gen::uniform_int(rng, 1, 6);
        const auto layout = build_layout(id, rng.uniform() < 0.5 ? HandProfile::mpl() : HandProfile::shadow());
        std::vector<SurfacePoint> contacts;
        std::vector<bool> prev(layout.size(), false);
        const int n = gen::uniform_int(rng, 1, 12);
        for (int i = 0; i < n; ++i) {
            const bool palm = rng.uniform() < 0.15;
            const PadId pad = palm ? PadId::palm() : PadId::phalanx_pad(gen::uniform_int(rng, 0, 4),
                                                                        gen::uniform_int(rng, 0, 2));
            const double span = palm ? 40.0 : 15.0;
            contacts.push_back({pad, Eigen::Vector2d(rng.uniform(-span, span), rng.uniform(-span, span))});
            const auto cur = activation(layout, contacts);
            ASSERT_EQ(cur.size(), layout.size());
            for (std::size_t s = 0; s < cur.size(); ++s) ASSERT_TRUE(!prev[s] || cur[s]) << "case " << k;
            prev = cur;
        }
    }
}

TEST(LayoutOverride, SwapsPatternsAndChecksCounts) {
    const std::string swap = R"({"2": [
        {"position_mm": [0, 0], "radius_mm": 2},
        {"position_mm": [4.5, 0], "radius_mm": 2},
        {"position_mm": [-4.5, 0], "radius_mm": 2},
        {"position_mm": [0, 6.5], "radius_mm": 2},
        {"position_mm": [0, -6.5], "radius_mm": 2}]})";
    const auto ov = LayoutOverride::parse(swap);
    const auto layout = build_layout(2, HandProfile::mpl(), &ov);
    EXPECT_EQ(layout.size(), 79u);
    EXPECT_EQ(positions_on(layout, PadId::phalanx_pad(0, 0)),
              positions_on(build_layout(4, HandProfile::mpl()), PadId::phalanx_pad(0, 0)));

    EXPECT_THROW(LayoutOverride::parse(R"({"2": [{"position_mm": [0, 0], "radius_mm": 2}]})"),
                 GeometryViolationError);
    EXPECT_THROW(LayoutOverride::parse(R"({"9": []})"), ConfigurationUnknownError);
}
