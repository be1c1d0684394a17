#pragma once

// Cartesian-to-polar resampling of BEV maps. A BEV rotation becomes a
// circular shift along the angular axis, up to interpolation error.

#include <cmath>

#include "placefuse/geometry/bev.hpp"

namespace placefuse::geo {

struct PolarGridSpec {
    int n_radial = 64;
    int n_angular = 128;
    double max_radius = 51.2;

    void validate() const {
        if (n_radial < 1 || n_angular < 1 || !(max_radius > 0.0))
            throw std::invalid_argument("PolarGridSpec: invalid bin counts or radius");
        if (n_angular % 4 != 0)
            throw std::invalid_argument("PolarGridSpec: n_angular must be divisible by 4");
    }
};

// Sample positions for bin (ri, tj): radius (ri+0.5)*max_r/n_r at angle
// tj*2pi/n_t, expressed in grid coordinates of `spec`.
inline nn::TensorPtr polar_sample_points(const BevGridSpec& spec, const PolarGridSpec& pspec) {
    pspec.validate();
    auto pts = nn::make_tensor({pspec.n_radial * pspec.n_angular, 2});
    for (int ri = 0; ri < pspec.n_radial; ++ri) {
        const double r = (ri + 0.5) * pspec.max_radius / pspec.n_radial;
        for (int tj = 0; tj < pspec.n_angular; ++tj) {
            const double th = 2.0 * M_PI * tj / pspec.n_angular;
            const GridXY g = world_to_grid(spec, r * std::cos(th), r * std::sin(th));
            const std::int64_t i = static_cast<std::int64_t>(ri) * pspec.n_angular + tj;
            pts->data[2 * i] = g.x;
            pts->data[2 * i + 1] = g.y;
        }
    }
    return pts;
}

// [C,H,W] -> [C, n_radial, n_angular]; differentiable w.r.t. the feature map.
inline nn::TensorPtr polar_transform(nn::Tape* tape, const nn::TensorPtr& fmap,
                                     const BevGridSpec& spec, const PolarGridSpec& pspec,
                                     const nn::TensorPtr& cached_points = nullptr) {
    if (fmap->rank() != 3 || fmap->dim(1) != spec.height || fmap->dim(2) != spec.width)
        throw std::invalid_argument("polar_transform: fmap " + nn::shape_str(fmap->shape) +
                                    " does not match the BEV grid");
    auto pts = cached_points ? cached_points : polar_sample_points(spec, pspec);
    auto rows = nn::bilinear_sample(tape, fmap, pts);
    return nn::to_map(tape, rows, pspec.n_radial, pspec.n_angular);
}

// Circular shift along the angular (last) axis by k bins; shift-equivalence
// oracle companion to rotate_bev.
inline nn::TensorPtr circular_shift_angular(const nn::TensorPtr& polar, int k) {
    if (polar->rank() != 3)
        throw std::invalid_argument("circular_shift_angular: expected [C,R,T]");
    const int c = polar->dim(0), r = polar->dim(1), t = polar->dim(2);
    auto out = nn::make_tensor(polar->shape);
    const int kk = ((k % t) + t) % t;
    for (int ch = 0; ch < c; ++ch)
        for (int ri = 0; ri < r; ++ri) {
            const std::int64_t base = (static_cast<std::int64_t>(ch) * r + ri) * t;
            for (int tj = 0; tj < t; ++tj) out->data[base + (tj + kk) % t] = polar->data[base + tj];
        }
    return out;
}

}  // namespace placefuse::geo
