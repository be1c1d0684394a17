#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "placefuse/radar/pillars.hpp"
#include "placefuse/radar/radar.hpp"

#include "helpers/gradcheck.hpp"

using namespace placefuse;
using namespace placefuse::radar;

TEST(Accumulate, IdentityPoseLeavesPointsUnchanged) {
    RadarSweepSet set;
    set.sweeps.push_back({{0, 0, 0}, {{1.5, -2.0, 0.3, 0.1, 4.0, 1, 0, 0.05}}});
    auto pts = accumulate_sweeps(set);
    ASSERT_EQ(pts.size(), 1u);
    EXPECT_DOUBLE_EQ(pts[0].x, 1.5);
    EXPECT_DOUBLE_EQ(pts[0].y, -2.0);
    EXPECT_DOUBLE_EQ(pts[0].vx, 0.3);
    EXPECT_DOUBLE_EQ(pts[0].t, 0.05);
}

TEST(Accumulate, QuarterTurnRotatesPositionAndVelocity) {
    RadarSweepSet set;
    set.sweeps.push_back({{0, 0, M_PI / 2}, {{1.0, 0.0, 1.0, 0.0, 0.0, 1, 0, 0.0}}});
    set.sweeps.push_back({{0, 0, 0}, {}});
    set.reference_pose_index = 1;
    auto pts = accumulate_sweeps(set);
    ASSERT_EQ(pts.size(), 1u);
    EXPECT_NEAR(pts[0].x, 0.0, 1e-12);
    EXPECT_NEAR(pts[0].y, 1.0, 1e-12);
    EXPECT_NEAR(pts[0].vx, 0.0, 1e-12);
    EXPECT_NEAR(pts[0].vy, 1.0, 1e-12);
}

TEST(Accumulate, SixSweepsConcatenate) {
    RadarSweepSet set;
    nn::Rng rng(3);
    for (int s = 0; s < 6; ++s) {
        RadarSweep sweep;
        sweep.pose = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-M_PI, M_PI)};
        for (int i = 0; i < 7; ++i)
            sweep.points.push_back({rng.uniform(-20, 20), rng.uniform(-20, 20), 0, 0, 1, 1, 0,
                                    0.1 * s});
        set.sweeps.push_back(sweep);
    }
    set.reference_pose_index = 5;
    auto pts = accumulate_sweeps(set);
    EXPECT_EQ(pts.size(), 42u);
}

TEST(Accumulate, RigidTransformPreservesIntraSweepDistances) {
    RadarSweepSet set;
    nn::Rng rng(5);
    RadarSweep sweep;
    sweep.pose = {3.7, -1.2, 2.1};
    for (int i = 0; i < 10; ++i)
        sweep.points.push_back({rng.uniform(-30, 30), rng.uniform(-30, 30), 0, 0, 0, 1, 0, 0});
    set.sweeps.push_back(sweep);
    set.sweeps.push_back({{-8.0, 2.0, -0.7}, {}});
    set.reference_pose_index = 1;
    auto pts = accumulate_sweeps(set);
    for (size_t i = 0; i < pts.size(); ++i)
        for (size_t j = i + 1; j < pts.size(); ++j) {
            const double before = std::hypot(sweep.points[i].x - sweep.points[j].x,
                                             sweep.points[i].y - sweep.points[j].y);
            const double after = std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y);
            EXPECT_NEAR(before, after, 1e-9);
        }
}

TEST(SplitDynamic, RulesAndPartition) {
    std::vector<RadarPoint> pts;
    pts.push_back({0, 0, 0, 0, 0, 1, 0, 0});    // stationary flag, zero speed
    pts.push_back({0, 0, 3, 4, 0, 1, 0, 0});    // speed 5 > 0.5
    pts.push_back({0, 0, 0, 0, 0, 0, 0, 0});    // moving flag despite zero speed
    pts.push_back({0, 0, 0.3, 0.0, 0, 1, 0, 0});  // below threshold
    auto split = split_dynamic(pts, 0.5);
    EXPECT_EQ(split.stationary.size() + split.dynamic.size(), pts.size());
    EXPECT_EQ(split.stationary.size(), 2u);
    EXPECT_EQ(split.dynamic.size(), 2u);
    EXPECT_DOUBLE_EQ(split.dynamic[0].speed(), 5.0);
}

TEST(SweepsJsonl, RoundTrip) {
    namespace fs = std::filesystem;
    const auto path = fs::temp_directory_path() / "pf_radar_test.jsonl";
    RadarSweepSet set;
    set.sweeps.push_back({{1.0, 2.0, 0.5}, {{1, 2, 3, 4, 5, 0, 2, 0.25}}});
    set.sweeps.push_back({{0, 0, 0}, {{-1, -2, 0, 0, 7.5, 1, 0, 0.5}}});
    set.reference_pose_index = 1;
    write_sweeps_jsonl(path.string(), set);
    auto back = read_sweeps_jsonl(path.string());
    ASSERT_EQ(back.sweeps.size(), 2u);
    EXPECT_EQ(back.reference_pose_index, 1);
    EXPECT_DOUBLE_EQ(back.sweeps[0].pose.yaw, 0.5);
    EXPECT_DOUBLE_EQ(back.sweeps[0].points[0].t, 0.25);
    EXPECT_EQ(back.sweeps[0].points[0].dyn_prop, 0);
    EXPECT_EQ(back.sweeps[0].points[0].invalid_state, 2);
    fs::remove(path);
}

namespace {

std::vector<RadarPoint> random_static_cloud(std::uint64_t seed, int n, double span = 40.0) {
    nn::Rng rng(seed);
    std::vector<RadarPoint> pts;
    for (int i = 0; i < n; ++i) {
        RadarPoint p;
        // keep positions away from exact cell boundaries
        p.x = std::floor(rng.uniform(-span, span) / 0.8) * 0.8 + rng.uniform(0.1, 0.7);
        p.y = std::floor(rng.uniform(-span, span) / 0.8) * 0.8 + rng.uniform(0.1, 0.7);
        p.vx = rng.uniform(-0.2, 0.2);
        p.vy = rng.uniform(-0.2, 0.2);
        p.rcs = rng.uniform(0, 10);
        p.t = rng.uniform(-0.5, 0.0);
        pts.push_back(p);
    }
    return pts;
}

}  // namespace

TEST(PillarEncode, ZeroPointsGiveZeroMap) {
    nn::ParamStore store(11);
    PillarEncoder enc(store, 4);
    const auto spec = geo::BevGridSpec::standard();
    auto f = enc.encode_points(nullptr, {}, spec, 16);
    for (double v : f->data) EXPECT_EQ(v, 0.0);
}

TEST(PillarEncode, SinglePointIsLocal) {
    nn::ParamStore store(13);
    PillarEncoder enc(store, 4);
    const auto spec = geo::BevGridSpec::standard();
    std::vector<RadarPoint> pts = {{0.3, 0.3, 0.0, 0.0, 5.0, 1, 0, 0.0}};
    auto f = enc.encode_points(nullptr, pts, spec, 16);
    const std::int64_t plane = 128 * 128;
    bool nonzero_at_cell = false;
    for (int ch = 0; ch < 4; ++ch) {
        for (std::int64_t i = 0; i < plane; ++i) {
            if (i == 64 * 128 + 64) {
                nonzero_at_cell = nonzero_at_cell || f->data[ch * plane + i] != 0.0;
            } else {
                ASSERT_EQ(f->data[ch * plane + i], 0.0);
            }
        }
    }
    EXPECT_TRUE(nonzero_at_cell);
}

TEST(PillarEncode, PermutationInvariantWithinPillars) {
    nn::ParamStore store(17);
    PillarEncoder enc(store, 6);
    const auto spec = geo::BevGridSpec::standard();
    auto pts = random_static_cloud(19, 40, 10.0);  // dense: many shared pillars
    auto f1 = enc.encode_points(nullptr, pts, spec, 16);
    nn::Rng rng(23);
    for (size_t i = pts.size(); i > 1; --i) std::swap(pts[i - 1], pts[rng.below(i)]);
    auto f2 = enc.encode_points(nullptr, pts, spec, 16);
    for (std::int64_t i = 0; i < f1->size(); ++i) EXPECT_EQ(f1->data[i], f2->data[i]);
}

TEST(PillarEncode, TranslationCovariantByOneCell) {
    nn::ParamStore store(29);
    PillarEncoder enc(store, 4);
    const auto spec = geo::BevGridSpec::standard();
    auto pts = random_static_cloud(31, 25, 30.0);
    auto f1 = enc.encode_points(nullptr, pts, spec, 16);
    auto shifted = pts;
    for (auto& p : shifted) p.x += spec.cell_size;
    auto f2 = enc.encode_points(nullptr, shifted, spec, 16);
    const std::int64_t plane = 128 * 128;
    for (int ch = 0; ch < 4; ++ch)
        for (int y = 0; y < 128; ++y)
            for (int x = 0; x < 127; ++x)
                ASSERT_NEAR(f2->data[ch * plane + y * 128 + x + 1],
                            f1->data[ch * plane + y * 128 + x], 1e-9);
}

TEST(PillarEncode, OverflowDropIsDeterministic) {
    nn::ParamStore store(37);
    PillarEncoder enc(store, 4);
    const auto spec = geo::BevGridSpec::standard();
    nn::Rng rng(41);
    std::vector<RadarPoint> pts;
    for (int i = 0; i < 24; ++i)  // all in one pillar, above the 16-point cap
        pts.push_back({0.05 + 0.0125 * i, 0.2, 0, 0, rng.uniform(0, 5), 1, 0, 0});
    auto f1 = enc.encode_points(nullptr, pts, spec, 16);
    for (size_t i = pts.size(); i > 1; --i) std::swap(pts[i - 1], pts[rng.below(i)]);
    auto f2 = enc.encode_points(nullptr, pts, spec, 16);
    for (std::int64_t i = 0; i < f1->size(); ++i) EXPECT_EQ(f1->data[i], f2->data[i]);
}

TEST(PillarEncode, GradientMatchesFiniteDifferences) {
    nn::ParamStore store(43);
    PillarEncoder enc(store, 3);
    const auto spec = geo::BevGridSpec::from_ranges(-6.4, 6.4, -6.4, 6.4, -10, 10, 0.8);
    auto pts = random_static_cloud(47, 12, 5.0);
    auto batch = build_pillar_batch(pts, spec, 16);
    batch.features->requires_grad = true;
    auto proj = nn::make_tensor({3, spec.height, spec.width});
    nn::Rng rng(53);
    pf_test::fill_uniform(proj, rng);
    auto fn = [&](nn::Tape* tape) {
        return nn::sum_all(tape, nn::mul(tape, enc.encode(tape, batch, spec), proj));
    };
    std::vector<nn::TensorPtr> leaves = {batch.features};
    for (const auto& p : store.all()) leaves.push_back(p->tensor);
    EXPECT_LT(pf_test::gradcheck(fn, leaves).max_rel_err, 2e-5);
}
