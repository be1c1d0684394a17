#pragma once

// Fused differentiable kernels: convolution, bilinear sampling, pillar
// segment ops, ray splatting, deformable-attention sampling, mask relaxation
// and the DFT magnitude. Each records a single tape node and recomputes what
// it can in backward to keep live memory down.

#include <algorithm>
#include <cmath>

#include "placefuse/nn/fft.hpp"
#include "placefuse/nn/tensor.hpp"

namespace placefuse::nn {

// Cross-correlation of x:[Cin,H,W] with kernels:[Cout,Cin,k,k], zero padding.
// padding must be (k-1)/2 so stride-1 output preserves the spatial size.
inline TensorPtr conv2d(Tape* tape, const TensorPtr& x, const TensorPtr& kernels,
                        const TensorPtr& bias, int padding, int stride = 1) {
    if (x->rank() != 3 || kernels->rank() != 4)
        throw std::invalid_argument("conv2d: x " + shape_str(x->shape) + " kernels " +
                                    shape_str(kernels->shape));
    const int cin = x->dim(0), h = x->dim(1), w = x->dim(2);
    const int cout = kernels->dim(0), k = kernels->dim(2);
    if (k % 2 == 0) throw std::invalid_argument("conv2d: kernel size must be odd, got " + std::to_string(k));
    if (kernels->dim(1) != cin || kernels->dim(3) != k)
        throw std::invalid_argument("conv2d: kernels " + shape_str(kernels->shape) +
                                    " incompatible with x " + shape_str(x->shape));
    if (padding != (k - 1) / 2)
        throw std::invalid_argument("conv2d: padding must be (k-1)/2 = " + std::to_string((k - 1) / 2));
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    if (bias && bias->size() != cout)
        throw std::invalid_argument("conv2d: bias " + shape_str(bias->shape));

    const int oh = (h + 2 * padding - k) / stride + 1;
    const int ow = (w + 2 * padding - k) / stride + 1;
    auto y = make_tensor({cout, oh, ow});
    const std::int64_t in_plane = static_cast<std::int64_t>(h) * w;
    const std::int64_t out_plane = static_cast<std::int64_t>(oh) * ow;

    // valid output range per kernel tap, so inner loops run unchecked
    auto out_range = [stride, padding](int kpos, int in_dim, int out_dim, int& lo, int& hi) {
        lo = 0;
        while (lo < out_dim && lo * stride + kpos - padding < 0) ++lo;
        hi = out_dim;
        while (hi > lo && (hi - 1) * stride + kpos - padding >= in_dim) --hi;
    };

    for (int oc = 0; oc < cout; ++oc) {
        double* yp = y->data.data() + oc * out_plane;
        if (bias) {
            const double bv = bias->data[oc];
            for (std::int64_t i = 0; i < out_plane; ++i) yp[i] = bv;
        }
        for (int ic = 0; ic < cin; ++ic) {
            const double* xp = x->data.data() + ic * in_plane;
            const double* kp = kernels->data.data() +
                               (static_cast<std::int64_t>(oc) * cin + ic) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                int oy_lo, oy_hi;
                out_range(ky, h, oh, oy_lo, oy_hi);
                for (int kx = 0; kx < k; ++kx) {
                    const double kv = kp[ky * k + kx];
                    if (kv == 0.0) continue;
                    int ox_lo, ox_hi;
                    out_range(kx, w, ow, ox_lo, ox_hi);
                    for (int oy = oy_lo; oy < oy_hi; ++oy) {
                        const int iy = oy * stride + ky - padding;
                        const double* xrow = xp + static_cast<std::int64_t>(iy) * w + kx - padding;
                        double* yrow = yp + static_cast<std::int64_t>(oy) * ow;
                        if (stride == 1) {
                            for (int ox = ox_lo; ox < ox_hi; ++ox) yrow[ox] += kv * xrow[ox];
                        } else {
                            for (int ox = ox_lo; ox < ox_hi; ++ox)
                                yrow[ox] += kv * xrow[static_cast<std::int64_t>(ox) * stride];
                        }
                    }
                }
            }
        }
    }

    if (wants_grad(tape, {&x, &kernels, &bias})) {
        y->requires_grad = true;
        tape->record([x, kernels, bias, y, cin, cout, h, w, k, padding, stride, oh, ow,
                      in_plane, out_plane, out_range] {
            if (y->grad.empty()) return;
            if (bias && bias->requires_grad) {
                bias->ensure_grad();
                for (int oc = 0; oc < cout; ++oc) {
                    const double* gp = y->grad.data() + oc * out_plane;
                    double acc = 0.0;
                    for (std::int64_t i = 0; i < out_plane; ++i) acc += gp[i];
                    bias->grad[oc] += acc;
                }
            }
            const bool gx = x->requires_grad, gk = kernels->requires_grad;
            if (gx) x->ensure_grad();
            if (gk) kernels->ensure_grad();
            if (!gx && !gk) return;
            for (int oc = 0; oc < cout; ++oc) {
                const double* gp = y->grad.data() + oc * out_plane;
                for (int ic = 0; ic < cin; ++ic) {
                    const double* xp = x->data.data() + ic * in_plane;
                    const std::int64_t kbase = (static_cast<std::int64_t>(oc) * cin + ic) * k * k;
                    for (int ky = 0; ky < k; ++ky) {
                        int oy_lo, oy_hi;
                        out_range(ky, h, oh, oy_lo, oy_hi);
                        for (int kx = 0; kx < k; ++kx) {
                            const double kv = kernels->data[kbase + ky * k + kx];
                            int ox_lo, ox_hi;
                            out_range(kx, w, ow, ox_lo, ox_hi);
                            double kacc = 0.0;
                            for (int oy = oy_lo; oy < oy_hi; ++oy) {
                                const int iy = oy * stride + ky - padding;
                                const double* grow = gp + static_cast<std::int64_t>(oy) * ow;
                                const std::int64_t row_off =
                                    static_cast<std::int64_t>(iy) * w + kx - padding;
                                const double* xrow = xp + row_off;
                                double* gxrow = gx ? x->grad.data() + ic * in_plane + row_off
                                                   : nullptr;
                                if (stride == 1) {
                                    if (gk)
                                        for (int ox = ox_lo; ox < ox_hi; ++ox)
                                            kacc += grow[ox] * xrow[ox];
                                    if (gx)
                                        for (int ox = ox_lo; ox < ox_hi; ++ox)
                                            gxrow[ox] += grow[ox] * kv;
                                } else {
                                    for (int ox = ox_lo; ox < ox_hi; ++ox) {
                                        const std::int64_t ix = static_cast<std::int64_t>(ox) * stride;
                                        if (gk) kacc += grow[ox] * xrow[ix];
                                        if (gx) gxrow[ix] += grow[ox] * kv;
                                    }
                                }
                            }
                            if (gk) kernels->grad[kbase + ky * k + kx] += kacc;
                        }
                    }
                }
            }
        });
    }
    return y;
}

namespace detail {

// One bilinear tap set: weights and the four clamped source indices.
// Indices outside the grid are marked -1 and read as zero.
struct BilinearTaps {
    std::int64_t idx[4];
    double wgt[4];
    int x0, y0;
    double fx, fy;
};

inline BilinearTaps bilinear_taps(double px, double py, int h, int w) {
    BilinearTaps t{};
    t.x0 = static_cast<int>(std::floor(px));
    t.y0 = static_cast<int>(std::floor(py));
    t.fx = px - t.x0;
    t.fy = py - t.y0;
    const int xs[2] = {t.x0, t.x0 + 1};
    const int ys[2] = {t.y0, t.y0 + 1};
    const double wx[2] = {1.0 - t.fx, t.fx};
    const double wy[2] = {1.0 - t.fy, t.fy};
    for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
            const int j = dy * 2 + dx;
            const bool in = xs[dx] >= 0 && xs[dx] < w && ys[dy] >= 0 && ys[dy] < h;
            t.idx[j] = in ? static_cast<std::int64_t>(ys[dy]) * w + xs[dx] : -1;
            t.wgt[j] = wx[dx] * wy[dy];
        }
    return t;
}

}  // namespace detail

// Sample fmap:[C,H,W] at continuous points:[P,2] (x,y) -> [P,C]. Points fully
// outside the grid return 0; partially outside taps read zero. Differentiable
// w.r.t. both the map and the point coordinates.
inline TensorPtr bilinear_sample(Tape* tape, const TensorPtr& fmap, const TensorPtr& points) {
    if (fmap->rank() != 3 || points->rank() != 2 || points->dim(1) != 2)
        throw std::invalid_argument("bilinear_sample: fmap " + shape_str(fmap->shape) +
                                    " points " + shape_str(points->shape));
    const int c = fmap->dim(0), h = fmap->dim(1), w = fmap->dim(2);
    const int p = points->dim(0);
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    auto y = make_tensor({p, c});
    for (int i = 0; i < p; ++i) {
        const auto t = detail::bilinear_taps(points->data[2 * i], points->data[2 * i + 1], h, w);
        double* yo = y->data.data() + static_cast<std::int64_t>(i) * c;
        for (int ch = 0; ch < c; ++ch) {
            const double* fp = fmap->data.data() + ch * plane;
            double acc = 0.0;
            for (int j = 0; j < 4; ++j)
                if (t.idx[j] >= 0) acc += t.wgt[j] * fp[t.idx[j]];
            yo[ch] = acc;
        }
    }
    if (wants_grad(tape, {&fmap, &points})) {
        y->requires_grad = true;
        tape->record([fmap, points, y, c, h, w, p, plane] {
            if (y->grad.empty()) return;
            const bool gf = fmap->requires_grad, gp = points->requires_grad;
            if (gf) fmap->ensure_grad();
            if (gp) points->ensure_grad();
            for (int i = 0; i < p; ++i) {
                const double px = points->data[2 * i], py = points->data[2 * i + 1];
                const auto t = detail::bilinear_taps(px, py, h, w);
                const double* gy = y->grad.data() + static_cast<std::int64_t>(i) * c;
                double gx_acc = 0.0, gy_acc = 0.0;
                for (int ch = 0; ch < c; ++ch) {
                    const double g = gy[ch];
                    if (g == 0.0) continue;
                    if (gf) {
                        double* fg = fmap->grad.data() + ch * plane;
                        for (int j = 0; j < 4; ++j)
                            if (t.idx[j] >= 0) fg[t.idx[j]] += g * t.wgt[j];
                    }
                    if (gp) {
                        const double* fp = fmap->data.data() + ch * plane;
                        double v[4];
                        for (int j = 0; j < 4; ++j) v[j] = t.idx[j] >= 0 ? fp[t.idx[j]] : 0.0;
                        // d/dx = (1-fy)(v10-v00) + fy(v11-v01); d/dy analogous
                        gx_acc += g * ((1.0 - t.fy) * (v[1] - v[0]) + t.fy * (v[3] - v[2]));
                        gy_acc += g * ((1.0 - t.fx) * (v[2] - v[0]) + t.fx * (v[3] - v[1]));
                    }
                }
                if (gp) {
                    points->grad[2 * i] += gx_acc;
                    points->grad[2 * i + 1] += gy_acc;
                }
            }
        });
    }
    return y;
}

// Per-segment, per-channel max of x:[N,C] grouped by seg ids into [S,C].
// Empty segments yield 0. Gradients route to the first maximizing row.
inline TensorPtr segment_max(Tape* tape, const TensorPtr& x, const std::vector<int>& seg, int s) {
    if (x->rank() != 2 || static_cast<int>(seg.size()) != x->dim(0))
        throw std::invalid_argument("segment_max: x " + shape_str(x->shape) + " with " +
                                    std::to_string(seg.size()) + " segment ids");
    const int n = x->dim(0), c = x->dim(1);
    auto y = make_tensor({s, c});
    auto arg = std::make_shared<std::vector<int>>(static_cast<size_t>(s) * c, -1);
    for (int i = 0; i < n; ++i) {
        const int g = seg[i];
        if (g < 0 || g >= s) throw std::invalid_argument("segment_max: segment id out of range");
        const double* xi = x->data.data() + static_cast<std::int64_t>(i) * c;
        double* yo = y->data.data() + static_cast<std::int64_t>(g) * c;
        int* ao = arg->data() + static_cast<std::int64_t>(g) * c;
        for (int j = 0; j < c; ++j) {
            if (ao[j] < 0 || xi[j] > yo[j]) {
                yo[j] = xi[j];
                ao[j] = i;
            }
        }
    }
    if (wants_grad(tape, {&x})) {
        y->requires_grad = true;
        tape->record([x, y, arg, s, c] {
            if (y->grad.empty()) return;
            x->ensure_grad();
            for (int g = 0; g < s; ++g)
                for (int j = 0; j < c; ++j) {
                    const int i = (*arg)[static_cast<std::int64_t>(g) * c + j];
                    if (i >= 0)
                        x->grad[static_cast<std::int64_t>(i) * c + j] +=
                            y->grad[static_cast<std::int64_t>(g) * c + j];
                }
        });
    }
    return y;
}

// Scatter row s of x:[S,C] into cell cells[s] of a [C,H,W] map.
inline TensorPtr scatter_rows(Tape* tape, const TensorPtr& x, const std::vector<int>& cells,
                              int h, int w) {
    if (x->rank() != 2 || static_cast<int>(cells.size()) != x->dim(0))
        throw std::invalid_argument("scatter_rows: x " + shape_str(x->shape));
    const int s = x->dim(0), c = x->dim(1);
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    auto y = make_tensor({c, h, w});
    for (int i = 0; i < s; ++i) {
        const int cell = cells[i];
        if (cell < 0 || cell >= plane) throw std::invalid_argument("scatter_rows: cell out of range");
        const double* xi = x->data.data() + static_cast<std::int64_t>(i) * c;
        for (int ch = 0; ch < c; ++ch) y->data[ch * plane + cell] += xi[ch];
    }
    if (wants_grad(tape, {&x})) {
        y->requires_grad = true;
        tape->record([x, y, cells, s, c, plane] {
            if (y->grad.empty()) return;
            x->ensure_grad();
            for (int i = 0; i < s; ++i)
                for (int ch = 0; ch < c; ++ch)
                    x->grad[static_cast<std::int64_t>(i) * c + ch] +=
                        y->grad[ch * plane + cells[i]];
        });
    }
    return y;
}

struct SplatStats {
    double total_mass = 0.0;    // sum of feature values weighted by their bin mass
    double dropped_mass = 0.0;  // portion whose target cell fell outside the grid
};

// Depth-distribution splat: out[c, cells[p*d]] += feat[p,c] * alpha[p,d].
// cells[p*D+d] == -1 marks an out-of-grid target (dropped, tracked in stats).
inline TensorPtr splat(Tape* tape, const TensorPtr& feat, const TensorPtr& alpha,
                       const std::vector<int>& cells, int h, int w, SplatStats* stats = nullptr) {
    if (feat->rank() != 2 || alpha->rank() != 2 || feat->dim(0) != alpha->dim(0))
        throw std::invalid_argument("splat: feat " + shape_str(feat->shape) + " alpha " +
                                    shape_str(alpha->shape));
    const int p = feat->dim(0), c = feat->dim(1), d = alpha->dim(1);
    if (static_cast<int>(cells.size()) != p * d)
        throw std::invalid_argument("splat: cells length mismatch");
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    auto y = make_tensor({c, h, w});
    long double total = 0.0L, dropped = 0.0L;
    for (int i = 0; i < p; ++i) {
        const double* fi = feat->data.data() + static_cast<std::int64_t>(i) * c;
        const double* ai = alpha->data.data() + static_cast<std::int64_t>(i) * d;
        double fsum = 0.0;
        for (int ch = 0; ch < c; ++ch) fsum += fi[ch];
        for (int j = 0; j < d; ++j) {
            const int cell = cells[static_cast<std::int64_t>(i) * d + j];
            total += static_cast<long double>(ai[j]) * fsum;
            if (cell < 0) {
                dropped += static_cast<long double>(ai[j]) * fsum;
                continue;
            }
            const double a = ai[j];
            for (int ch = 0; ch < c; ++ch) y->data[ch * plane + cell] += a * fi[ch];
        }
    }
    if (stats) {
        stats->total_mass = static_cast<double>(total);
        stats->dropped_mass = static_cast<double>(dropped);
    }
    if (wants_grad(tape, {&feat, &alpha})) {
        y->requires_grad = true;
        tape->record([feat, alpha, y, cells, p, c, d, plane] {
            if (y->grad.empty()) return;
            const bool gf = feat->requires_grad, ga = alpha->requires_grad;
            if (gf) feat->ensure_grad();
            if (ga) alpha->ensure_grad();
            for (int i = 0; i < p; ++i) {
                const double* fi = feat->data.data() + static_cast<std::int64_t>(i) * c;
                const double* ai = alpha->data.data() + static_cast<std::int64_t>(i) * d;
                for (int j = 0; j < d; ++j) {
                    const int cell = cells[static_cast<std::int64_t>(i) * d + j];
                    if (cell < 0) continue;
                    double fdot = 0.0;
                    for (int ch = 0; ch < c; ++ch) {
                        const double g = y->grad[ch * plane + cell];
                        if (gf) feat->grad[static_cast<std::int64_t>(i) * c + ch] += ai[j] * g;
                        fdot += fi[ch] * g;
                    }
                    if (ga) alpha->grad[static_cast<std::int64_t>(i) * d + j] += fdot;
                }
            }
        });
    }
    return y;
}

// Logistic relaxation of the hard distance-threshold mask:
// m = sigmoid((dmin - r) / tau). dmin entries may be +inf (no dynamic cells).
// Differentiable w.r.t. the scalar radius r.
inline TensorPtr soft_mask(Tape* tape, const std::shared_ptr<std::vector<double>>& dmin,
                           int h, int w, const TensorPtr& r, double tau) {
    if (r->size() != 1) throw std::invalid_argument("soft_mask: r must be scalar");
    if (static_cast<int>(dmin->size()) != h * w)
        throw std::invalid_argument("soft_mask: distance grid size mismatch");
    if (!(tau > 0.0)) throw std::invalid_argument("soft_mask: tau must be positive");
    auto y = make_tensor({h, w});
    const double rv = r->data[0];
    for (size_t i = 0; i < dmin->size(); ++i) {
        const double dv = (*dmin)[i];
        y->data[i] = std::isinf(dv) ? 1.0 : 1.0 / (1.0 + std::exp(-(dv - rv) / tau));
    }
    if (wants_grad(tape, {&r})) {
        y->requires_grad = true;
        tape->record([dmin, r, y, tau] {
            if (y->grad.empty()) return;
            r->ensure_grad();
            double acc = 0.0;
            for (size_t i = 0; i < dmin->size(); ++i) {
                if (std::isinf((*dmin)[i])) continue;
                const double m = y->data[i];
                acc += y->grad[i] * (-m * (1.0 - m) / tau);
            }
            r->grad[0] += acc;
        });
    }
    return y;
}

// Deformable-attention sampling core. For each query p (with reference point
// base[p]) and each head, n_points offsets and logits are read from
// off_logits[p, (h*n_points+k)*3 + {0:dx, 1:dy, 2:logit}]; attention weights
// are the per-head softmax over logits, and the head output is the weighted
// sum of bilinear samples of value_map at base + offset. Output [P, heads*C].
inline TensorPtr deform_sample_agg(Tape* tape, const TensorPtr& value_map,
                                   const TensorPtr& off_logits,
                                   const std::shared_ptr<std::vector<double>>& base,
                                   int heads, int n_points) {
    if (value_map->rank() != 3 || off_logits->rank() != 2)
        throw std::invalid_argument("deform_sample_agg: value_map " + shape_str(value_map->shape) +
                                    " off_logits " + shape_str(off_logits->shape));
    const int c = value_map->dim(0), h = value_map->dim(1), w = value_map->dim(2);
    const int p = off_logits->dim(0);
    const int g = heads * n_points * 3;
    if (off_logits->dim(1) != g)
        throw std::invalid_argument("deform_sample_agg: off_logits cols " +
                                    std::to_string(off_logits->dim(1)) + " != heads*points*3 = " +
                                    std::to_string(g));
    if (static_cast<int>(base->size()) != 2 * p)
        throw std::invalid_argument("deform_sample_agg: base point count mismatch");
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    auto y = make_tensor({p, heads * c});

    // channels-last copy of the value map: each bilinear tap reads C
    // contiguous doubles instead of striding across planes
    auto rows_of = [plane, c, h, w](const std::vector<double>& src) {
        auto rows = std::make_shared<std::vector<double>>(static_cast<size_t>(plane) * c);
        for (int ch = 0; ch < c; ++ch) {
            const double* sp = src.data() + ch * plane;
            double* rp = rows->data() + ch;
            for (std::int64_t i = 0; i < plane; ++i) rp[i * c] = sp[i];
        }
        return rows;
    };
    const auto vrows = rows_of(value_map->data);

    std::vector<double> wbuf(static_cast<size_t>(n_points));
    for (int q = 0; q < p; ++q) {
        const double bx = (*base)[2 * q], by = (*base)[2 * q + 1];
        const double* ol = off_logits->data.data() + static_cast<std::int64_t>(q) * g;
        double* yo = y->data.data() + static_cast<std::int64_t>(q) * heads * c;
        for (int hd = 0; hd < heads; ++hd) {
            const double* hol = ol + hd * n_points * 3;
            double mx = -HUGE_VAL;
            for (int k = 0; k < n_points; ++k) mx = std::max(mx, hol[k * 3 + 2]);
            double denom = 0.0;
            for (int k = 0; k < n_points; ++k) {
                wbuf[k] = std::exp(hol[k * 3 + 2] - mx);
                denom += wbuf[k];
            }
            double* ho = yo + static_cast<std::int64_t>(hd) * c;
            for (int k = 0; k < n_points; ++k) {
                const double a = wbuf[k] / denom;
                const auto t = detail::bilinear_taps(bx + hol[k * 3], by + hol[k * 3 + 1], h, w);
                for (int j = 0; j < 4; ++j) {
                    if (t.idx[j] < 0) continue;
                    const double aw = a * t.wgt[j];
                    const double* vr = vrows->data() + t.idx[j] * c;
                    for (int ch = 0; ch < c; ++ch) ho[ch] += aw * vr[ch];
                }
            }
        }
    }

    if (wants_grad(tape, {&value_map, &off_logits})) {
        y->requires_grad = true;
        tape->record([value_map, off_logits, base, y, heads, n_points, c, h, w, p, g, plane,
                      vrows] {
            if (y->grad.empty()) return;
            const bool gv = value_map->requires_grad, go = off_logits->requires_grad;
            if (gv) value_map->ensure_grad();
            if (go) off_logits->ensure_grad();
            auto grows = gv ? std::make_shared<std::vector<double>>(static_cast<size_t>(plane) * c)
                            : nullptr;
            std::vector<double> wbuf(static_cast<size_t>(n_points));
            std::vector<double> da(static_cast<size_t>(n_points));
            for (int q = 0; q < p; ++q) {
                const double bx = (*base)[2 * q], by = (*base)[2 * q + 1];
                const double* ol = off_logits->data.data() + static_cast<std::int64_t>(q) * g;
                double* gol = go ? off_logits->grad.data() + static_cast<std::int64_t>(q) * g : nullptr;
                const double* gy = y->grad.data() + static_cast<std::int64_t>(q) * heads * c;
                for (int hd = 0; hd < heads; ++hd) {
                    const double* hol = ol + hd * n_points * 3;
                    double mx = -HUGE_VAL;
                    for (int k = 0; k < n_points; ++k) mx = std::max(mx, hol[k * 3 + 2]);
                    double denom = 0.0;
                    for (int k = 0; k < n_points; ++k) {
                        wbuf[k] = std::exp(hol[k * 3 + 2] - mx);
                        denom += wbuf[k];
                    }
                    for (int k = 0; k < n_points; ++k) wbuf[k] /= denom;
                    const double* gh = gy + static_cast<std::int64_t>(hd) * c;
                    for (int k = 0; k < n_points; ++k) {
                        const auto t = detail::bilinear_taps(bx + hol[k * 3], by + hol[k * 3 + 1], h, w);
                        const double a = wbuf[k];
                        double vdot = 0.0, gx_acc = 0.0, gy_acc = 0.0;
                        double tapdot[4] = {0, 0, 0, 0};
                        for (int j = 0; j < 4; ++j) {
                            if (t.idx[j] < 0) continue;
                            const double* vr = vrows->data() + t.idx[j] * c;
                            double dot = 0.0;
                            for (int ch = 0; ch < c; ++ch) dot += gh[ch] * vr[ch];
                            tapdot[j] = dot;
                            vdot += t.wgt[j] * dot;
                            if (gv) {
                                double* gr = grows->data() + t.idx[j] * c;
                                const double aw = a * t.wgt[j];
                                for (int ch = 0; ch < c; ++ch) gr[ch] += aw * gh[ch];
                            }
                        }
                        if (go) {
                            gx_acc = (1.0 - t.fy) * (tapdot[1] - tapdot[0]) +
                                     t.fy * (tapdot[3] - tapdot[2]);
                            gy_acc = (1.0 - t.fx) * (tapdot[2] - tapdot[0]) +
                                     t.fx * (tapdot[3] - tapdot[1]);
                            gol[(hd * n_points + k) * 3] += a * gx_acc;
                            gol[(hd * n_points + k) * 3 + 1] += a * gy_acc;
                        }
                        da[k] = vdot;
                    }
                    if (go) {
                        double dot = 0.0;
                        for (int k = 0; k < n_points; ++k) dot += wbuf[k] * da[k];
                        for (int k = 0; k < n_points; ++k)
                            gol[(hd * n_points + k) * 3 + 2] += wbuf[k] * (da[k] - dot);
                    }
                }
            }
            if (gv) {
                // fold the channels-last gradient buffer back into the map
                for (int ch = 0; ch < c; ++ch) {
                    double* gp = value_map->grad.data() + ch * plane;
                    const double* rp = grows->data() + ch;
                    for (std::int64_t i = 0; i < plane; ++i) gp[i] += rp[i * c];
                }
            }
        });
    }
    return y;
}

// 1D DFT magnitude along the last axis of x:[C,R,T] (per channel and row).
inline TensorPtr dft_mag_rows(Tape* tape, const TensorPtr& x) {
    if (x->rank() != 3)
        throw std::invalid_argument("dft_mag_rows: expected [C,R,T], got " + shape_str(x->shape));
    const int cols = x->dim(2);
    if (!is_pow2(cols)) throw std::invalid_argument("dft_mag_rows: angular dim must be a power of two");
    const std::int64_t rows = x->size() / cols;
    auto y = make_tensor(x->shape);
    auto spec_re = std::make_shared<std::vector<double>>(x->data.begin(), x->data.end());
    auto spec_im = std::make_shared<std::vector<double>>(x->size(), 0.0);
    std::vector<double> re(static_cast<size_t>(cols)), im(static_cast<size_t>(cols));
    for (std::int64_t r = 0; r < rows; ++r) {
        std::copy_n(spec_re->begin() + r * cols, cols, re.begin());
        std::fill(im.begin(), im.end(), 0.0);
        fft_inplace(re, im, -1);
        std::copy(re.begin(), re.end(), spec_re->begin() + r * cols);
        std::copy(im.begin(), im.end(), spec_im->begin() + r * cols);
        for (int j = 0; j < cols; ++j) y->data[r * cols + j] = std::hypot(re[j], im[j]);
    }
    if (wants_grad(tape, {&x})) {
        y->requires_grad = true;
        tape->record([x, y, spec_re, spec_im, rows, cols] {
            if (y->grad.empty()) return;
            x->ensure_grad();
            std::vector<double> gre(static_cast<size_t>(cols)), gim(static_cast<size_t>(cols));
            for (std::int64_t r = 0; r < rows; ++r) {
                for (int j = 0; j < cols; ++j) {
                    const double mag = y->data[r * cols + j];
                    const double g = mag > 0.0 ? y->grad[r * cols + j] / mag : 0.0;
                    gre[j] = g * (*spec_re)[r * cols + j];
                    gim[j] = g * (*spec_im)[r * cols + j];
                }
                fft_inplace(gre, gim, +1);
                for (int j = 0; j < cols; ++j) x->grad[r * cols + j] += gre[j];
            }
        });
    }
    return y;
}

// Per-channel 2D DFT magnitude of x:[C,R,T]. Backward distributes through
// the stored complex spectrum; bins with zero magnitude get zero gradient.
inline TensorPtr dft_mag2d(Tape* tape, const TensorPtr& x) {
    if (x->rank() != 3)
        throw std::invalid_argument("dft_mag2d: expected [C,R,T], got " + shape_str(x->shape));
    const int c = x->dim(0), rows = x->dim(1), cols = x->dim(2);
    if (!is_pow2(rows) || !is_pow2(cols))
        throw std::invalid_argument("dft_mag2d: grid dims must be powers of two");
    const std::int64_t plane = static_cast<std::int64_t>(rows) * cols;
    auto y = make_tensor(x->shape);
    auto spec_re = std::make_shared<std::vector<double>>(x->data.begin(), x->data.end());
    auto spec_im = std::make_shared<std::vector<double>>(x->size(), 0.0);
    for (int ch = 0; ch < c; ++ch) {
        std::vector<double> re(spec_re->begin() + ch * plane, spec_re->begin() + (ch + 1) * plane);
        std::vector<double> im(static_cast<size_t>(plane), 0.0);
        fft2d_inplace(re, im, rows, cols, -1);
        std::copy(re.begin(), re.end(), spec_re->begin() + ch * plane);
        std::copy(im.begin(), im.end(), spec_im->begin() + ch * plane);
        for (std::int64_t i = 0; i < plane; ++i)
            y->data[ch * plane + i] = std::hypot(re[i], im[i]);
    }
    if (wants_grad(tape, {&x})) {
        y->requires_grad = true;
        tape->record([x, y, spec_re, spec_im, c, rows, cols, plane] {
            if (y->grad.empty()) return;
            x->ensure_grad();
            for (int ch = 0; ch < c; ++ch) {
                std::vector<double> gre(static_cast<size_t>(plane));
                std::vector<double> gim(static_cast<size_t>(plane));
                for (std::int64_t i = 0; i < plane; ++i) {
                    const double mag = y->data[ch * plane + i];
                    const double g = mag > 0.0 ? y->grad[ch * plane + i] / mag : 0.0;
                    gre[i] = g * (*spec_re)[ch * plane + i];
                    gim[i] = g * (*spec_im)[ch * plane + i];
                }
                // adjoint of the unscaled forward DFT = unscaled inverse transform
                fft2d_inplace(gre, gim, rows, cols, +1);
                for (std::int64_t i = 0; i < plane; ++i) x->grad[ch * plane + i] += gre[i];
            }
        });
    }
    return y;
}

}  // namespace placefuse::nn
