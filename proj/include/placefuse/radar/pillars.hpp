#pragma once

// Pillar feature encoder: per-point shared linear + ReLU, max-pool per
// occupied cell, channel transform, scatter into the BEV grid.

#include <algorithm>
#include <array>

#include "placefuse/geometry/bev.hpp"
#include "placefuse/radar/radar.hpp"

namespace placefuse::radar {

constexpr int kPillarPointFeatures = 10;

// Per-point rows: (x_cell, y_cell, vx, vy, rcs, t_rel, dx_center, dy_center,
// dx_mean, dy_mean). Positions are cell-local meters so shifting the cloud by
// whole cells leaves pillar features unchanged.
struct PillarBatch {
    nn::TensorPtr features;        // [N, 10]
    std::vector<int> segment;      // pillar id per point
    std::vector<int> pillar_cell;  // flattened y*W+x per pillar
    int n_pillars = 0;
};

inline PillarBatch build_pillar_batch(const std::vector<RadarPoint>& points,
                                      const geo::BevGridSpec& spec, int max_points_per_pillar) {
    PillarBatch batch;
    std::vector<geo::GridXY> xy;
    xy.reserve(points.size());
    for (const auto& p : points) xy.push_back({p.x, p.y});
    const auto grid = geo::voxelize_points(spec, xy);

    double t_max = -HUGE_VAL;
    for (const auto& p : points) t_max = std::max(t_max, p.t);

    std::vector<std::array<double, kPillarPointFeatures>> rows;
    for (int cy = 0; cy < spec.height; ++cy) {
        for (int cx = 0; cx < spec.width; ++cx) {
            auto idx = grid.cell_points[static_cast<size_t>(cy) * spec.width + cx];
            if (idx.empty()) continue;
            if (static_cast<int>(idx.size()) > max_points_per_pillar) {
                // drop farthest-from-mean; ties broken on the full feature tuple
                double mx = 0, my = 0;
                for (int i : idx) {
                    mx += points[i].x;
                    my += points[i].y;
                }
                mx /= idx.size();
                my /= idx.size();
                auto key = [&](int i) {
                    const auto& p = points[i];
                    return std::make_tuple(std::hypot(p.x - mx, p.y - my), p.x, p.y, p.vx, p.vy,
                                           p.rcs, p.t);
                };
                std::sort(idx.begin(), idx.end(), [&](int a, int b) { return key(a) < key(b); });
                idx.resize(static_cast<size_t>(max_points_per_pillar));
            }
            double mean_x = 0, mean_y = 0;
            for (int i : idx) {
                mean_x += points[i].x;
                mean_y += points[i].y;
            }
            mean_x /= idx.size();
            mean_y /= idx.size();
            // the cell site is the cell center under nearest-site binning
            const double center_x = spec.x_min + cx * spec.cell_size;
            const double center_y = spec.y_min + cy * spec.cell_size;
            const double corner_x = center_x - 0.5 * spec.cell_size;
            const double corner_y = center_y - 0.5 * spec.cell_size;
            const int pillar = batch.n_pillars++;
            batch.pillar_cell.push_back(cy * spec.width + cx);
            for (int i : idx) {
                const auto& p = points[i];
                rows.push_back({p.x - corner_x, p.y - corner_y, p.vx, p.vy, p.rcs, p.t - t_max,
                                p.x - center_x, p.y - center_y, p.x - mean_x, p.y - mean_y});
                batch.segment.push_back(pillar);
            }
        }
    }
    batch.features = nn::make_tensor({static_cast<int>(rows.size()), kPillarPointFeatures});
    for (size_t i = 0; i < rows.size(); ++i)
        std::copy(rows[i].begin(), rows[i].end(),
                  batch.features->data.begin() + static_cast<std::int64_t>(i) * kPillarPointFeatures);
    return batch;
}

class PillarEncoder {
public:
    PillarEncoder() = default;
    PillarEncoder(nn::ParamStore& store, int channels, const std::string& prefix = "pillar") {
        w1_ = store.create(prefix + ".w1", {kPillarPointFeatures, channels}, kPillarPointFeatures);
        b1_ = store.create(prefix + ".b1", {channels}, kPillarPointFeatures);
        wf_ = store.create(prefix + ".wf", {channels, channels}, channels);
        bf_ = store.create(prefix + ".bf", {channels}, channels);
    }

    // Empty input or all-empty pillars produce an all-zero map. The channel
    // transform runs on pooled pillar vectors before scattering so empty
    // cells stay exactly zero.
    nn::TensorPtr encode(nn::Tape* tape, const PillarBatch& batch,
                         const geo::BevGridSpec& spec) const {
        if (batch.n_pillars == 0)
            return nn::make_tensor({w1_->tensor->dim(1), spec.height, spec.width});
        auto h = nn::relu(tape, nn::linear(tape, batch.features, w1_->tensor, b1_->tensor));
        auto pooled = nn::segment_max(tape, h, batch.segment, batch.n_pillars);
        auto mixed = nn::linear(tape, pooled, wf_->tensor, bf_->tensor);
        return nn::scatter_rows(tape, mixed, batch.pillar_cell, spec.height, spec.width);
    }

    nn::TensorPtr encode_points(nn::Tape* tape, const std::vector<RadarPoint>& points,
                                const geo::BevGridSpec& spec, int max_points_per_pillar) const {
        return encode(tape, build_pillar_batch(points, spec, max_points_per_pillar), spec);
    }

private:
    nn::ParameterPtr w1_, b1_, wf_, bf_;
};

}  // namespace placefuse::radar
