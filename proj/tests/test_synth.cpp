#include <gtest/gtest.h>

#include <cmath>

#include "placefuse/descriptor/descriptor.hpp"
#include "placefuse/synth/splits.hpp"

using namespace placefuse;
using namespace placefuse::synth;

namespace {

RenderConfig quiet_cfg() {
    RenderConfig cfg;
    cfg.scale_noise_from(0.0);
    return cfg;
}

World empty_world() {
    World w;
    w.bounds = 80.0;
    return w;
}

bool samples_equal(const data::PlaceSample& a, const data::PlaceSample& b) {
    if (a.images.views.size() != b.images.views.size()) return false;
    for (size_t v = 0; v < a.images.views.size(); ++v) {
        if (a.images.views[v]->data != b.images.views[v]->data) return false;
        if (a.images.gt_depth[v]->data != b.images.gt_depth[v]->data) return false;
    }
    if (a.radar.sweeps.size() != b.radar.sweeps.size()) return false;
    for (size_t s = 0; s < a.radar.sweeps.size(); ++s) {
        const auto& pa = a.radar.sweeps[s].points;
        const auto& pb = b.radar.sweeps[s].points;
        if (pa.size() != pb.size()) return false;
        for (size_t i = 0; i < pa.size(); ++i)
            if (pa[i].x != pb[i].x || pa[i].y != pb[i].y || pa[i].vx != pb[i].vx ||
                pa[i].rcs != pb[i].rcs || pa[i].dyn_prop != pb[i].dyn_prop)
                return false;
    }
    return true;
}

}  // namespace

TEST(Render, EmptyWorldGivesMaxDepthAndNoRadar) {
    auto cfg = quiet_cfg();
    auto rig = make_rig(cfg);
    auto s = render_sample(empty_world(), {0, 0, 0}, rig, cfg, 7);
    for (const auto& d : s.images.gt_depth)
        for (double v : d->data) EXPECT_EQ(v, cfg.no_hit_depth);
    for (const auto& img : s.images.views)
        for (double v : img->data) EXPECT_EQ(v, cfg.background);
    for (const auto& sweep : s.radar.sweeps) EXPECT_TRUE(sweep.points.empty());
}

TEST(Render, SingleStaticPoleDepthColumnAndZeroDoppler) {
    auto cfg = quiet_cfg();
    auto rig = make_rig(cfg);
    World w = empty_world();
    w.poles.push_back({5.0, 0.0, 0.3, 0.8});
    auto s = render_sample(w, {0, 0, 0}, rig, cfg, 9);

    // the forward view (index 0) must contain a column at roughly 5 m depth
    bool found = false;
    const auto& depth = s.images.gt_depth[0];
    for (int x = 0; x < cfg.image_w; ++x) {
        const double d = depth->data[static_cast<size_t>(x)];
        if (d < cfg.no_hit_depth) {
            EXPECT_NEAR(d, 5.0, 0.5);
            found = true;
        }
    }
    EXPECT_TRUE(found);
    // every other view sees nothing
    for (int v = 1; v < cfg.n_views; ++v)
        for (double d : s.images.gt_depth[static_cast<size_t>(v)]->data)
            EXPECT_EQ(d, cfg.no_hit_depth);

    const auto& ref = s.radar.sweeps.back();
    ASSERT_FALSE(ref.points.empty());
    for (const auto& p : ref.points) {
        const double d = std::hypot(p.x, p.y);  // tangent rays graze out to ~5.0 m
        EXPECT_GE(d, 5.0 - 0.3 - 1e-9);
        EXPECT_LE(d, 5.0);
        EXPECT_EQ(p.speed(), 0.0);
        EXPECT_EQ(p.dyn_prop, 1);
    }
}

TEST(Render, DynamicDiscDopplerIsRadialProjection) {
    auto cfg = quiet_cfg();
    auto rig = make_rig(cfg);
    World w = empty_world();
    w.dynamics.push_back({10.0, 0.0, 1.0, 3.0, 4.0, 1.0});
    auto s = render_sample(w, {0, 0, 0}, rig, cfg, 11);
    const auto& ref = s.radar.sweeps.back();  // t = 0: disc exactly at (10,0)
    bool found = false;
    for (const auto& p : ref.points) {
        EXPECT_EQ(p.dyn_prop, 0);
        if (p.y == 0.0) {  // the exactly-forward ray
            EXPECT_DOUBLE_EQ(p.vx, 3.0);
            EXPECT_DOUBLE_EQ(p.vy, 0.0);
            found = true;
        }
    }
    EXPECT_TRUE(found);
}

TEST(Render, DynamicRadialSpeedExceedsThreshold) {
    auto cfg = quiet_cfg();
    auto rig = make_rig(cfg);
    World w = empty_world();
    w.dynamics.push_back({8.0, 3.0, 1.2, -2.5, 1.0, 1.0});  // radial component > 1 m/s
    auto s = render_sample(w, {0, 0, 0}, rig, cfg, 13);
    int fast = 0;
    for (const auto& p : s.radar.sweeps.back().points)
        if (p.speed() > 0.5) ++fast;
    EXPECT_GE(fast, 1);
}

TEST(Render, RainDimsImagesLeavesRadarAlone) {
    RenderConfig cfg;
    cfg.scale_noise_from(0.01);
    auto rig = make_rig(cfg);
    World w = empty_world();
    w.poles.push_back({6.0, 1.0, 0.5, 0.9});
    auto clear_s = render_sample(w, {0, 0, 0}, rig, cfg, 17);
    RenderConfig rain_cfg = cfg;
    rain_cfg.rain = true;
    auto rain_s = render_sample(w, {0, 0, 0}, rig, rain_cfg, 17);

    // contrast (std around background) must shrink under rain
    auto contrast = [&](const data::PlaceSample& s) {
        double acc = 0;
        int n = 0;
        for (const auto& img : s.images.views)
            for (double v : img->data) {
                acc += (v - cfg.background) * (v - cfg.background);
                ++n;
            }
        return std::sqrt(acc / n);
    };
    EXPECT_LT(contrast(rain_s), contrast(clear_s));
    // same seed: radar identical bit for bit
    for (size_t s = 0; s < clear_s.radar.sweeps.size(); ++s) {
        ASSERT_EQ(clear_s.radar.sweeps[s].points.size(), rain_s.radar.sweeps[s].points.size());
        for (size_t i = 0; i < clear_s.radar.sweeps[s].points.size(); ++i) {
            EXPECT_EQ(clear_s.radar.sweeps[s].points[i].x, rain_s.radar.sweeps[s].points[i].x);
            EXPECT_EQ(clear_s.radar.sweeps[s].points[i].vx, rain_s.radar.sweeps[s].points[i].vx);
        }
    }
}

TEST(Render, DeterministicGivenSeeds) {
    WorldConfig wc;
    wc.n_places = 10;
    wc.n_static = 40;
    wc.n_dynamic = 6;
    auto world = build_world_with_dynamics(wc, 99);
    RenderConfig cfg;
    auto rig = make_rig(cfg);
    auto a = render_sample(world, {3.0, -2.0, 0.7}, rig, cfg, 23);
    auto b = render_sample(world, {3.0, -2.0, 0.7}, rig, cfg, 23);
    EXPECT_TRUE(samples_equal(a, b));
    auto c = render_sample(world, {3.0, -2.0, 0.7}, rig, cfg, 24);
    EXPECT_FALSE(samples_equal(a, c));
}

TEST(Render, PoseOutsideBoundsIsAnError) {
    auto cfg = quiet_cfg();
    auto rig = make_rig(cfg);
    EXPECT_THROW(render_sample(empty_world(), {200.0, 0, 0}, rig, cfg, 1), std::invalid_argument);
}

TEST(BuildWorld, PlacesRespectSeparationAndDeterminism) {
    WorldConfig wc;
    wc.n_places = 30;
    auto w1 = build_world_with_dynamics(wc, 41);
    auto w2 = build_world_with_dynamics(wc, 41);
    EXPECT_EQ(w1.places.size(), 30u);
    EXPECT_EQ(w1.walls.size(), w2.walls.size());
    EXPECT_EQ(w1.dynamics.size(), w2.dynamics.size());
    for (size_t i = 0; i < w1.places.size(); ++i) {
        EXPECT_EQ(w1.places[i].x, w2.places[i].x);
        for (size_t j = i + 1; j < w1.places.size(); ++j)
            EXPECT_GE(std::hypot(w1.places[i].x - w1.places[j].x,
                                 w1.places[i].y - w1.places[j].y), wc.min_place_separation);
    }
    for (const auto& d : w1.dynamics) {
        EXPECT_GT(d.speed(), 0.5);
        EXPECT_LE(d.speed(), 10.0);
    }
}

TEST(BuildSplits, ExactRevisitReproducesDatabaseSamples) {
    WorldConfig wc;
    wc.n_places = 10;
    wc.n_static = 40;
    wc.n_dynamic = 6;
    wc.bounds = 60;
    auto world = build_world_with_dynamics(wc, 51);
    RevisitSpec rspec;
    rspec.n_places = 10;
    rspec.revisits_per_place = 1;
    rspec.heading_jitter = 0.0;
    rspec.position_jitter = 0.0;
    rspec.dynamic_resample = false;
    rspec.noise_level = 0.0;
    RenderConfig rcfg;
    auto splits = build_splits(world, rspec, rcfg, 53);
    EXPECT_EQ(splits.database.size(), 10u);
    const int total_queries = static_cast<int>(splits.train_query.size() +
                                               splits.val_query.size() + splits.test_query.size());
    EXPECT_EQ(total_queries, 10);
    auto check = [&](const std::vector<data::PlaceSample>& queries) {
        for (const auto& q : queries) {
            const auto& db = splits.database[static_cast<size_t>(q.place_index)];
            EXPECT_TRUE(samples_equal(q, db)) << q.id;
        }
    };
    check(splits.train_query);
    check(splits.val_query);
    check(splits.test_query);
}

TEST(BuildSplits, ProportionsAndJitterBounds) {
    WorldConfig wc;
    wc.n_places = 25;
    wc.n_static = 50;
    wc.n_dynamic = 8;
    auto world = build_world_with_dynamics(wc, 61);
    RevisitSpec rspec;
    rspec.n_places = 25;
    rspec.revisits_per_place = 4;  // 100 queries
    rspec.position_jitter = 2.0;
    RenderConfig rcfg;
    rcfg.image_h = 8;
    rcfg.image_w = 16;
    rcfg.radar_rays = 64;
    auto splits = build_splits(world, rspec, rcfg, 63);
    EXPECT_EQ(splits.train_query.size(), 60u);
    EXPECT_EQ(splits.val_query.size(), 8u);
    EXPECT_EQ(splits.test_query.size(), 32u);
    for (const auto* qs : {&splits.train_query, &splits.val_query, &splits.test_query})
        for (const auto& q : *qs) {
            const auto& a = world.places[static_cast<size_t>(q.place_index)];
            EXPECT_LE(std::hypot(q.x - a.x, q.y - a.y), rspec.position_jitter + 1e-9);
        }
}

TEST(BuildSplits, DynamicResampleChangesClutter) {
    WorldConfig wc;
    wc.n_places = 10;
    wc.n_static = 30;
    wc.n_dynamic = 8;
    wc.bounds = 60;
    auto world = build_world_with_dynamics(wc, 71);
    RevisitSpec rspec;
    rspec.n_places = 10;
    rspec.revisits_per_place = 1;
    rspec.heading_jitter = 0.0;
    rspec.position_jitter = 0.0;
    rspec.dynamic_resample = true;
    rspec.noise_level = 0.0;
    RenderConfig rcfg;
    auto splits = build_splits(world, rspec, rcfg, 73);
    int different = 0, total = 0;
    auto check = [&](const std::vector<data::PlaceSample>& queries) {
        for (const auto& q : queries) {
            ++total;
            if (!samples_equal(q, splits.database[static_cast<size_t>(q.place_index)])) ++different;
        }
    };
    check(splits.train_query);
    check(splits.val_query);
    check(splits.test_query);
    EXPECT_GT(different, total / 2);
}

TEST(BuildSplits, HeadingJitterPreservesDescriptorViaRadarOccupancy) {
    // rotation-invariance of the sensor + descriptor chain, independent of
    // any learned weights: voxelized static radar occupancy as the BEV map
    WorldConfig wc;
    wc.n_places = 10;
    wc.n_static = 60;
    wc.n_dynamic = 0;
    wc.bounds = 60;
    auto world = build_world_with_dynamics(wc, 81);
    auto cfg = quiet_cfg();
    // single sweep: ego motion between sweeps translates along the heading,
    // which is a genuine scene change rather than a rotation
    cfg.n_sweeps = 1;
    auto rig = make_rig(cfg);
    const auto spec = geo::BevGridSpec::standard();
    const geo::PolarGridSpec pspec;
    desc::DescriptorConfig dcfg;

    auto occupancy_descriptor = [&](const data::PlaceSample& s) {
        auto pts = radar::accumulate_sweeps(s.radar);
        auto fmap = nn::make_tensor({1, 128, 128});
        for (const auto& p : pts) {
            const auto g = geo::world_to_grid(spec, p.x, p.y);
            const int cx = geo::grid_cell(g.x), cy = geo::grid_cell(g.y);
            if (cx >= 0 && cx < 128 && cy >= 0 && cy < 128) fmap->data[cy * 128 + cx] += 1.0;
        }
        return desc::make_descriptor(nullptr, fmap, spec, pspec, dcfg);
    };

    const auto& anchor = world.places[0];
    auto base = render_sample(world, {anchor.x, anchor.y, anchor.heading}, rig, cfg, 91);
    auto rot = render_sample(world, {anchor.x, anchor.y, anchor.heading + M_PI / 2}, rig, cfg, 91);
    auto d1 = occupancy_descriptor(base);
    auto d2 = occupancy_descriptor(rot);
    double num = 0, den = 0;
    for (std::int64_t i = 0; i < d1.tensor->size(); ++i) {
        num += (d1.tensor->data[i] - d2.tensor->data[i]) * (d1.tensor->data[i] - d2.tensor->data[i]);
        den += d1.tensor->data[i] * d1.tensor->data[i];
    }
    EXPECT_LT(std::sqrt(num) / std::sqrt(den), 0.05);
}

TEST(RevisitSpecCheck, Validation) {
    RevisitSpec r;
    r.n_places = 5;
    EXPECT_THROW(r.validate(), std::invalid_argument);
    r.n_places = 10;
    r.position_jitter = 9.5;
    EXPECT_THROW(r.validate(), std::invalid_argument);
}
