#pragma once

// Fixed BEV grid: world<->grid affine map, point voxelization, and the
// bilinear rotation used by tests and the synthetic world.

#include <cmath>
#include <set>
#include <vector>

#include "placefuse/nn/kernels.hpp"
#include "placefuse/nn/ops.hpp"
#include "placefuse/nn/tensor.hpp"

namespace placefuse::geo {

using nn::TensorPtr;

struct BevGridSpec {
    double x_min = -51.2, x_max = 51.2;
    double y_min = -51.2, y_max = 51.2;
    double z_min = -10.0, z_max = 10.0;
    double cell_size = 0.8;
    int width = 128;   // cells along x
    int height = 128;  // cells along y

    static BevGridSpec standard() { return BevGridSpec{}; }

    // width/height are derived; construction rejects ranges that do not
    // divide evenly into cells.
    static BevGridSpec from_ranges(double x_min, double x_max, double y_min, double y_max,
                                   double z_min, double z_max, double cell_size) {
        if (!(cell_size > 0.0)) throw std::invalid_argument("BevGridSpec: cell size must be positive");
        const double wx = (x_max - x_min) / cell_size;
        const double wy = (y_max - y_min) / cell_size;
        const double rw = std::round(wx), rh = std::round(wy);
        if (std::fabs(wx - rw) > 1e-9 || std::fabs(wy - rh) > 1e-9 || rw < 1 || rh < 1)
            throw std::invalid_argument("BevGridSpec: range/cell arithmetic inconsistent: (" +
                                        std::to_string(x_max - x_min) + ", " +
                                        std::to_string(y_max - y_min) + ") m at " +
                                        std::to_string(cell_size) + " m/cell");
        BevGridSpec s;
        s.x_min = x_min; s.x_max = x_max;
        s.y_min = y_min; s.y_max = y_max;
        s.z_min = z_min; s.z_max = z_max;
        s.cell_size = cell_size;
        s.width = static_cast<int>(rw);
        s.height = static_cast<int>(rh);
        return s;
    }
};

struct GridXY {
    double x, y;
};

// Continuous grid coordinates: (x_min,y_min) -> (0,0), (x_max,y_max) -> (W,H).
inline GridXY world_to_grid(const BevGridSpec& spec, double wx, double wy) {
    return {(wx - spec.x_min) / spec.cell_size, (wy - spec.y_min) / spec.cell_size};
}

inline GridXY grid_to_world(const BevGridSpec& spec, double gx, double gy) {
    return {spec.x_min + gx * spec.cell_size, spec.y_min + gy * spec.cell_size};
}

struct VoxelGrid {
    int width = 0, height = 0;
    // indices into the input point list, grouped per cell (row-major y*W+x)
    std::vector<std::vector<int>> cell_points;
    int dropped = 0;  // points outside the grid

    bool occupied(int cx, int cy) const {
        return !cell_points[static_cast<size_t>(cy) * width + cx].empty();
    }
    std::set<std::pair<int, int>> occupied_cells() const {
        std::set<std::pair<int, int>> cells;
        for (int cy = 0; cy < height; ++cy)
            for (int cx = 0; cx < width; ++cx)
                if (occupied(cx, cy)) cells.insert({cx, cy});
        return cells;
    }
};

// Cell index of a continuous grid coordinate: nearest sample site, so that
// binning, bilinear sampling, the polar transform and rotate_bev all share
// one lattice convention.
inline int grid_cell(double g) { return static_cast<int>(std::floor(g + 0.5)); }

inline VoxelGrid voxelize_points(const BevGridSpec& spec, const std::vector<GridXY>& world_xy) {
    VoxelGrid v;
    v.width = spec.width;
    v.height = spec.height;
    v.cell_points.assign(static_cast<size_t>(spec.width) * spec.height, {});
    for (size_t i = 0; i < world_xy.size(); ++i) {
        const GridXY g = world_to_grid(spec, world_xy[i].x, world_xy[i].y);
        const int cx = grid_cell(g.x);
        const int cy = grid_cell(g.y);
        if (cx < 0 || cx >= spec.width || cy < 0 || cy >= spec.height) {
            ++v.dropped;
            continue;
        }
        v.cell_points[static_cast<size_t>(cy) * spec.width + cx].push_back(static_cast<int>(i));
    }
    return v;
}

// Bilinear rotation of a [C,H,W] map about the grid-center sample coordinate
// (W/2, H/2); source positions outside the map read zero. Test fixture and
// synthetic-world helper, not part of the differentiable path.
inline TensorPtr rotate_bev(const TensorPtr& fmap, double angle) {
    if (fmap->rank() != 3)
        throw std::invalid_argument("rotate_bev: expected [C,H,W], got " + nn::shape_str(fmap->shape));
    const int h = fmap->dim(1), w = fmap->dim(2);
    const double cx = w / 2.0, cy = h / 2.0;
    const double ca = std::cos(angle), sa = std::sin(angle);
    auto pts = nn::make_tensor({h * w, 2});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double dx = x - cx, dy = y - cy;
            // inverse map: rotate output coords by -angle
            pts->data[2 * (static_cast<std::int64_t>(y) * w + x)] = cx + ca * dx + sa * dy;
            pts->data[2 * (static_cast<std::int64_t>(y) * w + x) + 1] = cy - sa * dx + ca * dy;
        }
    }
    auto rows = nn::bilinear_sample(nullptr, fmap, pts);
    return nn::to_map(nullptr, rows, h, w);
}

}  // namespace placefuse::geo
