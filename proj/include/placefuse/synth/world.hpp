#pragma once

// Deterministic 2D synthetic world: wall segments and pole discs as static
// structure, moving discs as dynamic clutter, and the ray intersection
// routines shared by the camera and radar simulators.

#include <cmath>
#include <optional>
#include <vector>

#include "placefuse/nn/tensor.hpp"

namespace placefuse::synth {

struct Wall {
    double x1, y1, x2, y2;
    double intensity;
};

struct Pole {
    double cx, cy, radius;
    double intensity;
};

struct DynamicEntity {
    double cx, cy, radius;  // position at t = 0
    double vx, vy;          // m/s, speed within (0.5, 10]
    double intensity;

    double speed() const { return std::hypot(vx, vy); }
    double x_at(double t) const { return cx + vx * t; }
    double y_at(double t) const { return cy + vy * t; }
};

struct PlaceAnchor {
    double x, y;
    double heading;  // canonical database heading
};

struct World {
    std::vector<Wall> walls;
    std::vector<Pole> poles;
    std::vector<DynamicEntity> dynamics;
    std::vector<PlaceAnchor> places;
    double bounds = 80.0;  // half-extent, meters
    std::uint64_t seed = 0;

    bool inside(double x, double y) const {
        return std::fabs(x) <= bounds && std::fabs(y) <= bounds;
    }
};

struct Hit {
    double distance;
    double intensity;
    bool dynamic;
    int dynamic_index;  // -1 for static hits
};

namespace detail {

inline std::optional<double> ray_segment(double ox, double oy, double dx, double dy,
                                         const Wall& w) {
    const double ex = w.x2 - w.x1, ey = w.y2 - w.y1;
    const double denom = dx * ey - dy * ex;
    if (std::fabs(denom) < 1e-12) return std::nullopt;
    const double qx = w.x1 - ox, qy = w.y1 - oy;
    const double t = (qx * ey - qy * ex) / denom;
    const double s = (qx * dy - qy * dx) / denom;
    if (t > 1e-6 && s >= 0.0 && s <= 1.0) return t;
    return std::nullopt;
}

inline std::optional<double> ray_circle(double ox, double oy, double dx, double dy, double cx,
                                        double cy, double r) {
    const double fx = ox - cx, fy = oy - cy;
    const double b = fx * dx + fy * dy;
    const double c = fx * fx + fy * fy - r * r;
    const double disc = b * b - c;
    if (disc < 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    const double t1 = -b - sq, t2 = -b + sq;
    if (t1 > 1e-6) return t1;
    if (t2 > 1e-6) return t2;
    return std::nullopt;
}

}  // namespace detail

// Nearest intersection of a world-frame ray with all entities; dynamics are
// evaluated at time t.
inline std::optional<Hit> cast_ray(const World& world, double ox, double oy, double dx, double dy,
                                   double t, double max_range) {
    std::optional<Hit> best;
    auto consider = [&](std::optional<double> d, double intensity, bool dyn, int di) {
        if (!d || *d > max_range) return;
        if (!best || *d < best->distance) best = Hit{*d, intensity, dyn, di};
    };
    for (const auto& w : world.walls)
        consider(detail::ray_segment(ox, oy, dx, dy, w), w.intensity, false, -1);
    for (const auto& p : world.poles)
        consider(detail::ray_circle(ox, oy, dx, dy, p.cx, p.cy, p.radius), p.intensity, false, -1);
    for (size_t i = 0; i < world.dynamics.size(); ++i) {
        const auto& e = world.dynamics[i];
        consider(detail::ray_circle(ox, oy, dx, dy, e.x_at(t), e.y_at(t), e.radius), e.intensity,
                 true, static_cast<int>(i));
    }
    return best;
}

struct WorldConfig {
    int n_places = 50;
    int n_static = 260;
    int n_dynamic = 18;
    double bounds = 120.0;
    double min_place_separation = 20.0;
};

// Static structure plus place anchors. Each place gets a few nearby poles so
// places stay distinguishable from one another.
inline World build_world(const WorldConfig& cfg, std::uint64_t seed) {
    if (cfg.n_places < 1) throw std::invalid_argument("build_world: n_places must be positive");
    World world;
    world.bounds = cfg.bounds;
    world.seed = seed;
    nn::Rng rng(seed);

    // place anchors with minimum separation, by rejection
    const double span = cfg.bounds * 0.85;
    int attempts = 0;
    while (static_cast<int>(world.places.size()) < cfg.n_places) {
        if (++attempts > 200000)
            throw std::runtime_error("build_world: cannot fit places at the requested separation");
        const double x = rng.uniform(-span, span), y = rng.uniform(-span, span);
        bool ok = true;
        for (const auto& p : world.places)
            if (std::hypot(p.x - x, p.y - y) < cfg.min_place_separation) {
                ok = false;
                break;
            }
        if (ok) world.places.push_back({x, y, rng.uniform(-M_PI, M_PI)});
    }

    const int n_walls = cfg.n_static * 2 / 5;
    for (int i = 0; i < n_walls; ++i) {
        const double x = rng.uniform(-cfg.bounds, cfg.bounds);
        const double y = rng.uniform(-cfg.bounds, cfg.bounds);
        const double ang = rng.uniform(0, M_PI);
        const double len = rng.uniform(5.0, 25.0);
        world.walls.push_back({x, y, x + len * std::cos(ang), y + len * std::sin(ang),
                               rng.uniform(0.3, 0.9)});
    }
    for (int i = 0; i < cfg.n_static - n_walls; ++i)
        world.poles.push_back({rng.uniform(-cfg.bounds, cfg.bounds),
                               rng.uniform(-cfg.bounds, cfg.bounds), rng.uniform(0.2, 0.6),
                               rng.uniform(0.4, 1.0)});
    // local structure per place
    for (const auto& p : world.places)
        for (int i = 0; i < 3; ++i) {
            const double ang = rng.uniform(0, 2 * M_PI), d = rng.uniform(6.0, 22.0);
            world.poles.push_back({p.x + d * std::cos(ang), p.y + d * std::sin(ang),
                                   rng.uniform(0.25, 0.6), rng.uniform(0.5, 1.0)});
        }
    return world;
}

std::vector<DynamicEntity> sample_dynamics(const World&, int, std::uint64_t);

// build_world + a first dynamics draw; renders resample per query as needed.
inline World build_world_with_dynamics(const WorldConfig& cfg, std::uint64_t seed) {
    World world = build_world(cfg, seed);
    world.dynamics = sample_dynamics(world, cfg.n_dynamic, seed ^ nn::fnv1a64("dyn0"));
    return world;
}

// Moving clutter, placed half near places and half along paths between
// random place pairs so queries see it inside the BEV range.
inline std::vector<DynamicEntity> sample_dynamics(const World& world, int n_dynamic,
                                                  std::uint64_t seed) {
    nn::Rng rng(seed);
    std::vector<DynamicEntity> out;
    if (world.places.empty() || n_dynamic <= 0) return out;
    for (int i = 0; i < n_dynamic; ++i) {
        DynamicEntity e;
        if (i % 2 == 0) {
            const auto& p = world.places[rng.below(world.places.size())];
            const double ang = rng.uniform(0, 2 * M_PI), d = rng.uniform(4.0, 16.0);
            e.cx = p.x + d * std::cos(ang);
            e.cy = p.y + d * std::sin(ang);
        } else {
            const auto& a = world.places[rng.below(world.places.size())];
            const auto& b = world.places[rng.below(world.places.size())];
            const double lam = rng.uniform(0.1, 0.9);
            e.cx = a.x + lam * (b.x - a.x) + rng.normal() * 4.0;
            e.cy = a.y + lam * (b.y - a.y) + rng.normal() * 4.0;
        }
        e.radius = rng.uniform(0.5, 1.5);
        const double speed = rng.uniform(1.0, 10.0);
        const double dir = rng.uniform(0, 2 * M_PI);
        e.vx = speed * std::cos(dir);
        e.vy = speed * std::sin(dir);
        e.intensity = rng.uniform(0.8, 1.5);
        out.push_back(e);
    }
    return out;
}

}  // namespace placefuse::synth
