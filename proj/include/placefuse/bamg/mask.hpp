#pragma once

// Background-attentive mask generation. Dynamic radar returns are voxelized;
// cells within radius r of any occupied cell are masked out. Hard masks are
// exact threshold evaluations; soft masks are a logistic relaxation in tau
// that carries gradient to the learnable radius.

#include <cmath>
#include <fstream>
#include <limits>
#include <vector>

#include "placefuse/geometry/bev.hpp"
#include "placefuse/radar/radar.hpp"

namespace placefuse::bamg {

using nn::TensorPtr;

struct MaskRadius {
    nn::ParameterPtr r;
    double min_cells = 0.05;
    double max_cells = 8.0;

    static MaskRadius create(nn::ParamStore& store, double init = 0.5,
                             const std::string& name = "bamg.r") {
        MaskRadius m;
        m.r = store.create(name, {1}, 1, nn::ParamInit::Zeros, /*wd_exempt=*/true);
        m.r->tensor->data[0] = init;
        return m;
    }

    double value() const { return r->tensor->data[0]; }

    // applied after each optimizer step
    void clamp() const {
        double& v = r->tensor->data[0];
        v = std::min(std::max(v, min_cells), max_cells);
    }
};

enum class MaskMode { Soft, Hard };

struct BackgroundMask {
    TensorPtr values;  // [H,W]; {0,1} in hard mode, [0,1] in soft mode
    MaskMode mode = MaskMode::Hard;
};

using CellList = std::vector<std::pair<int, int>>;  // (x, y), sorted, unique

inline CellList dynamic_voxel_grid(const std::vector<radar::RadarPoint>& dynamic_points,
                                   const geo::BevGridSpec& spec) {
    std::vector<geo::GridXY> xy;
    xy.reserve(dynamic_points.size());
    for (const auto& p : dynamic_points) xy.push_back({p.x, p.y});
    const auto grid = geo::voxelize_points(spec, xy);
    CellList cells;
    for (int cy = 0; cy < spec.height; ++cy)
        for (int cx = 0; cx < spec.width; ++cx)
            if (grid.occupied(cx, cy)) cells.push_back({cx, cy});
    return cells;
}

namespace detail {

// exact minimum squared distance from each grid cell to the nearest listed
// cell, by exhaustive scan. Infinity when the list is empty.
inline std::vector<double> dist2_exhaustive(const CellList& cells, int h, int w) {
    std::vector<double> d2(static_cast<size_t>(h) * w, std::numeric_limits<double>::infinity());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& [cx, cy] : cells) {
                const double dx = x - cx, dy = y - cy;
                best = std::min(best, dx * dx + dy * dy);
            }
            d2[static_cast<size_t>(y) * w + x] = best;
        }
    return d2;
}

// Two-pass exact squared Euclidean distance transform: nearest-occupied scan
// per column, then a lower-envelope-of-parabolas pass per row. All squared
// distances are small integers, so doubles hold them exactly and the two
// routes agree bit-for-bit.
inline std::vector<double> dist2_transform(const CellList& cells, int h, int w) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> colpass(static_cast<size_t>(h) * w, inf);
    std::vector<char> occ(static_cast<size_t>(h) * w, 0);
    for (const auto& [cx, cy] : cells) occ[static_cast<size_t>(cy) * w + cx] = 1;
    for (int x = 0; x < w; ++x) {
        int last = -1;
        for (int y = 0; y < h; ++y) {
            if (occ[static_cast<size_t>(y) * w + x]) last = y;
            if (last >= 0) colpass[static_cast<size_t>(y) * w + x] = double(y - last) * (y - last);
        }
        last = -1;
        for (int y = h - 1; y >= 0; --y) {
            if (occ[static_cast<size_t>(y) * w + x]) last = y;
            if (last >= 0)
                colpass[static_cast<size_t>(y) * w + x] =
                    std::min(colpass[static_cast<size_t>(y) * w + x], double(last - y) * (last - y));
        }
    }
    std::vector<double> d2(static_cast<size_t>(h) * w, inf);
    std::vector<int> v(static_cast<size_t>(w));
    std::vector<double> z(static_cast<size_t>(w) + 1);
    std::vector<int> sites(static_cast<size_t>(w));
    for (int y = 0; y < h; ++y) {
        const double* f = colpass.data() + static_cast<size_t>(y) * w;
        int m = 0;
        for (int x = 0; x < w; ++x)
            if (std::isfinite(f[x])) sites[m++] = x;
        if (m == 0) continue;
        int k = 0;
        v[0] = sites[0];
        z[0] = -inf;
        z[1] = inf;
        for (int i = 1; i < m; ++i) {
            const int q = sites[i];
            double s;
            while (true) {
                const int p = v[k];
                s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * q - 2.0 * p);
                if (s <= z[k])
                    --k;
                else
                    break;
            }
            ++k;
            v[k] = q;
            z[k] = s;
            z[k + 1] = inf;
        }
        k = 0;
        double* out = d2.data() + static_cast<size_t>(y) * w;
        for (int x = 0; x < w; ++x) {
            while (z[k + 1] < x) ++k;
            const double dx = x - v[k];
            out[x] = dx * dx + f[v[k]];
        }
    }
    return d2;
}

}  // namespace detail

// Minimum distance (in cell units) per grid cell. Small cell lists use the
// exhaustive scan, large ones the two-pass transform; results are identical.
inline std::shared_ptr<std::vector<double>> min_distance_grid(const CellList& cells, int h, int w,
                                                              int exhaustive_limit = 64) {
    auto d2 = static_cast<int>(cells.size()) <= exhaustive_limit
                  ? detail::dist2_exhaustive(cells, h, w)
                  : detail::dist2_transform(cells, h, w);
    auto d = std::make_shared<std::vector<double>>(d2.size());
    for (size_t i = 0; i < d2.size(); ++i) (*d)[i] = std::sqrt(d2[i]);
    return d;
}

// Hard mode thresholds exactly (M = 0 iff d <= r); soft mode is
// sigmoid((d - r)/tau) recorded on the tape for d(mask)/dr.
inline BackgroundMask generate_mask(nn::Tape* tape, const CellList& cells, const MaskRadius& radius,
                                    MaskMode mode, double tau, int h, int w) {
    BackgroundMask mask;
    mask.mode = mode;
    const auto dmin = min_distance_grid(cells, h, w);
    if (mode == MaskMode::Hard) {
        mask.values = nn::make_tensor({h, w});
        const double r = radius.value();
        for (size_t i = 0; i < dmin->size(); ++i)
            mask.values->data[i] = (*dmin)[i] <= r ? 0.0 : 1.0;
    } else {
        mask.values = nn::soft_mask(tape, dmin, h, w, radius.r->tensor, tau);
    }
    return mask;
}

inline BackgroundMask all_ones_mask(int h, int w) {
    BackgroundMask mask;
    mask.mode = MaskMode::Hard;
    mask.values = nn::make_tensor({h, w}, 1.0);
    return mask;
}

// Debug export: binary PGM, 0 = dynamic (masked), 255 = background.
inline void write_mask_pgm(const std::string& path, const BackgroundMask& mask) {
    const int h = mask.values->dim(0), w = mask.values->dim(1);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("mask: cannot open '" + path + "' for writing");
    os << "P5\n" << w << " " << h << "\n255\n";
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double v = mask.values->data[static_cast<size_t>(y) * w + x];
            const unsigned char b = v >= 0.5 ? 255 : 0;
            os.write(reinterpret_cast<const char*>(&b), 1);
        }
}

}  // namespace placefuse::bamg
