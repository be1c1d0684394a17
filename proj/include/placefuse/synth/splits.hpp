#pragma once

// Database / query split construction mirroring the real-data layout: the
// database observes each place once at its canonical heading; queries revisit
// with pose jitter, resampled moving clutter and fresh sensor noise. Split
// sizes follow the 6312/7075/924/3696 database/train/val/test proportions.

#include "placefuse/synth/render.hpp"

namespace placefuse::synth {

struct RevisitSpec {
    int n_places = 50;
    int revisits_per_place = 2;
    double heading_jitter = M_PI;    // up to +-pi
    double position_jitter = 2.0;    // meters, must stay below the 9 m positive radius
    bool dynamic_resample = true;
    double noise_level = 0.02;
    bool rain_mode = false;          // rain-corrupt the test query split

    void validate() const {
        if (n_places < 10) throw std::invalid_argument("RevisitSpec: n_places must be >= 10");
        if (revisits_per_place < 1)
            throw std::invalid_argument("RevisitSpec: revisits_per_place must be >= 1");
        if (!(position_jitter < 9.0))
            throw std::invalid_argument("RevisitSpec: position_jitter must stay below 9 m");
        if (heading_jitter < 0 || heading_jitter > M_PI)
            throw std::invalid_argument("RevisitSpec: heading_jitter must be in [0, pi]");
        if (noise_level < 0) throw std::invalid_argument("RevisitSpec: noise_level must be >= 0");
    }
};

struct SplitSet {
    std::vector<data::PlaceSample> database;
    std::vector<data::PlaceSample> train_query;
    std::vector<data::PlaceSample> val_query;
    std::vector<data::PlaceSample> test_query;

    std::vector<data::PlaceSample>& of(data::Split s) {
        switch (s) {
            case data::Split::Database: return database;
            case data::Split::TrainQuery: return train_query;
            case data::Split::ValQuery: return val_query;
            default: return test_query;
        }
    }
};

// query split proportions from the reference dataset split sizes
inline data::Split query_split_for(int rank, int total) {
    const double frac = (rank + 0.5) / total;
    const double train = 7075.0 / 11695.0, val = 924.0 / 11695.0;
    if (frac < train) return data::Split::TrainQuery;
    if (frac < train + val) return data::Split::ValQuery;
    return data::Split::TestQuery;
}

inline SplitSet build_splits(const World& world, const RevisitSpec& rspec, const RenderConfig& rcfg,
                             std::uint64_t seed) {
    rspec.validate();
    if (static_cast<int>(world.places.size()) != rspec.n_places)
        throw std::invalid_argument("build_splits: world has " +
                                    std::to_string(world.places.size()) + " places, spec asks " +
                                    std::to_string(rspec.n_places));
    const auto rig = make_rig(rcfg);
    SplitSet out;

    RenderConfig cfg = rcfg;
    cfg.scale_noise_from(rspec.noise_level);

    // database renders: one per place, canonical heading, one dynamics draw
    std::vector<std::vector<DynamicEntity>> db_dynamics(world.places.size());
    for (size_t p = 0; p < world.places.size(); ++p) {
        World w = world;
        db_dynamics[p] = sample_dynamics(world, static_cast<int>(world.dynamics.size()),
                                         seed ^ nn::fnv1a64("db_dyn" + std::to_string(p)));
        w.dynamics = db_dynamics[p];
        const auto& anchor = world.places[p];
        auto s = render_sample(w, {anchor.x, anchor.y, anchor.heading}, rig, cfg,
                               seed ^ nn::fnv1a64("db" + std::to_string(p)));
        s.id = "db_" + std::to_string(p);
        s.split = data::Split::Database;
        s.place_index = static_cast<int>(p);
        out.database.push_back(std::move(s));
    }

    // query renders: jittered pose, fresh noise, optionally resampled clutter
    const int total = rspec.n_places * rspec.revisits_per_place;
    std::vector<int> order(static_cast<size_t>(total));
    for (int i = 0; i < total; ++i) order[static_cast<size_t>(i)] = i;
    nn::Rng shuffle_rng(seed ^ nn::fnv1a64("split_shuffle"));
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    for (int rank = 0; rank < total; ++rank) {
        const int q = order[static_cast<size_t>(rank)];
        const int p = q / rspec.revisits_per_place;
        const auto split = query_split_for(rank, total);
        const std::uint64_t qseed = seed ^ nn::fnv1a64("query" + std::to_string(q));
        nn::Rng jitter(qseed);
        const auto& anchor = world.places[static_cast<size_t>(p)];
        Pose pose;
        const double ang = jitter.uniform(0, 2 * M_PI);
        const double rad = rspec.position_jitter * std::sqrt(jitter.uniform());
        pose.x = anchor.x + rad * std::cos(ang);
        pose.y = anchor.y + rad * std::sin(ang);
        pose.yaw = anchor.heading + jitter.uniform(-rspec.heading_jitter, rspec.heading_jitter);

        World w = world;
        w.dynamics = rspec.dynamic_resample
                         ? sample_dynamics(world, static_cast<int>(world.dynamics.size()),
                                           qseed ^ nn::fnv1a64("dyn"))
                         : db_dynamics[static_cast<size_t>(p)];
        RenderConfig qcfg = cfg;
        qcfg.rain = rspec.rain_mode && split == data::Split::TestQuery;
        auto s = render_sample(w, pose, rig, qcfg, qseed);
        s.id = "q_" + std::to_string(q);
        s.split = split;
        s.place_index = p;
        out.of(split).push_back(std::move(s));
    }
    return out;
}

}  // namespace placefuse::synth
