#pragma once

// Sensor simulation: per-column raycast cameras extruded to small images
// with exact depth ground truth, and a 360-degree Doppler radar with
// multi-sweep ego motion.

#include "placefuse/data/sample.hpp"
#include "placefuse/synth/world.hpp"

namespace placefuse::synth {

struct RenderConfig {
    int n_views = 6;
    int image_h = 32;
    int image_w = 64;
    int radar_rays = 256;
    int n_sweeps = 6;
    double sweep_dt = 0.1;      // seconds between radar sweeps
    double ego_speed = 1.5;     // m/s forward motion across the sweep window
    double max_range = 60.0;
    double noise_level = 0.02;  // image noise sigma
    double radar_pos_noise = 0.03;
    double radar_vel_noise = 0.05;
    double radar_rcs_noise = 0.5;
    double background = 0.08;

    // one knob for every sensor's noise, so zero means bit-reproducible hits
    void scale_noise_from(double level) {
        noise_level = level;
        radar_pos_noise = 1.5 * level;
        radar_vel_noise = 2.5 * level;
        radar_rcs_noise = 25.0 * level;
    }
    double no_hit_depth = 102.4;  // outside the supervised bin range
    bool rain = false;            // contrast x0.4 + heavier pixel noise; radar untouched
};

// Vehicle-frame ray table: view v covers the 1/n_views sector centered on
// yaw offset v*2pi/n; all rows of a column share the column azimuth.
inline cam::CameraRig make_rig(const RenderConfig& cfg) {
    cam::CameraRig rig;
    rig.image_h = cfg.image_h;
    rig.image_w = cfg.image_w;
    const double fov = 2.0 * M_PI / cfg.n_views;
    for (int v = 0; v < cfg.n_views; ++v) {
        cam::CameraRig::View view;
        const double center = v * fov;
        for (int y = 0; y < cfg.image_h; ++y)
            for (int x = 0; x < cfg.image_w; ++x) {
                const double az = center + (x + 0.5) / cfg.image_w * fov - fov / 2.0;
                view.pixel_rays.push_back({std::cos(az), std::sin(az)});
            }
        rig.views.push_back(std::move(view));
    }
    rig.validate();
    return rig;
}

struct Pose {
    double x = 0, y = 0, yaw = 0;
};

// Column apparent height shrinks with depth; rows below it carry the hit
// intensity, rows above the background level.
inline int column_fill_rows(double depth, int image_h) {
    const double frac = 1.2 / (1.0 + 0.15 * depth);
    return std::max(1, std::min(image_h, static_cast<int>(image_h * frac)));
}

inline data::PlaceSample render_sample(const World& world, const Pose& pose,
                                       const cam::CameraRig& rig, const RenderConfig& cfg,
                                       std::uint64_t seed) {
    if (!world.inside(pose.x, pose.y))
        throw std::invalid_argument("render_sample: pose outside world bounds");
    data::PlaceSample sample;
    sample.x = pose.x;
    sample.y = pose.y;
    sample.yaw = pose.yaw;

    nn::Rng cam_rng(seed ^ 0xCA3E7A11ull);
    nn::Rng radar_rng(seed ^ 0x7ADA7000ull);
    nn::Rng rain_rng(seed ^ 0x5A1D5A1Dull);

    // --- cameras ---
    const int ih = rig.image_h, iw = rig.image_w;
    for (const auto& view : rig.views) {
        auto img = nn::make_tensor({1, ih, iw});
        auto depth = nn::make_tensor({ih, iw});
        for (int x = 0; x < iw; ++x) {
            const auto& ray = view.pixel_rays[static_cast<size_t>(x)];  // row 0; shared azimuth
            const double ca = std::cos(pose.yaw), sa = std::sin(pose.yaw);
            const double dx = ca * ray[0] - sa * ray[1];
            const double dy = sa * ray[0] + ca * ray[1];
            const auto hit = cast_ray(world, pose.x, pose.y, dx, dy, 0.0, cfg.max_range);
            const double d = hit ? hit->distance : cfg.no_hit_depth;
            const int fill = hit ? column_fill_rows(d, ih) : 0;
            const double shade = hit ? hit->intensity / (1.0 + 0.02 * d) : 0.0;
            for (int y = 0; y < ih; ++y) {
                const bool filled = y >= ih - fill;
                img->data[static_cast<size_t>(y) * iw + x] = filled ? shade : cfg.background;
                depth->data[static_cast<size_t>(y) * iw + x] = d;
            }
        }
        for (double& v : img->data) v += cam_rng.normal() * cfg.noise_level;
        if (cfg.rain) {
            for (double& v : img->data) {
                v = cfg.background + 0.4 * (v - cfg.background);
                v += rain_rng.normal() * cfg.noise_level * 5.0;
            }
        }
        sample.images.views.push_back(img);
        sample.images.gt_depth.push_back(depth);
    }

    // --- radar sweeps; reference sweep is the last (t = 0) ---
    const double hx = std::cos(pose.yaw), hy = std::sin(pose.yaw);
    for (int s = 0; s < cfg.n_sweeps; ++s) {
        const double t = -(cfg.n_sweeps - 1 - s) * cfg.sweep_dt;
        radar::RadarSweep sweep;
        sweep.pose = {pose.x + hx * cfg.ego_speed * t, pose.y + hy * cfg.ego_speed * t, pose.yaw};
        const double cs = std::cos(sweep.pose.yaw), ss = std::sin(sweep.pose.yaw);
        for (int r = 0; r < cfg.radar_rays; ++r) {
            const double az_local = 2.0 * M_PI * r / cfg.radar_rays;
            const double lx = std::cos(az_local), ly = std::sin(az_local);
            const double dx = cs * lx - ss * ly;
            const double dy = ss * lx + cs * ly;
            const auto hit = cast_ray(world, sweep.pose.x, sweep.pose.y, dx, dy, t, cfg.max_range);
            if (!hit) continue;
            radar::RadarPoint p;
            const double d = hit->distance + radar_rng.normal() * cfg.radar_pos_noise;
            p.x = d * lx;
            p.y = d * ly;
            double radial = 0.0;
            if (hit->dynamic) {
                const auto& e = world.dynamics[static_cast<size_t>(hit->dynamic_index)];
                radial = e.vx * dx + e.vy * dy;  // velocity projected on the world-frame ray
            }
            radial += radar_rng.normal() * cfg.radar_vel_noise;
            p.vx = radial * lx;  // radial vector in the sweep's sensor frame
            p.vy = radial * ly;
            p.rcs = hit->intensity * 10.0 + radar_rng.normal() * cfg.radar_rcs_noise;
            p.dyn_prop = hit->dynamic ? 0 : 1;
            p.invalid_state = 0;
            p.t = t;
            sweep.points.push_back(p);
        }
        sample.radar.sweeps.push_back(std::move(sweep));
    }
    sample.radar.reference_pose_index = cfg.n_sweeps - 1;
    return sample;
}

}  // namespace placefuse::synth
