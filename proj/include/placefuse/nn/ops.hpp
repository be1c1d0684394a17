#pragma once

// Differentiable tensor operations: elementwise math, dense linear algebra,
// layout changes and reductions. Heavier fused kernels are in kernels.hpp.

#include <algorithm>
#include <cmath>

#include "placefuse/nn/tensor.hpp"

namespace placefuse::nn {

namespace detail {

inline void check_same_shape(const char* op, const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape)
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a->shape) +
                                    " vs " + shape_str(b->shape));
}

template <typename Fwd, typename Bwd>
TensorPtr unary_op(Tape* tape, const TensorPtr& x, Fwd fwd, Bwd bwd) {
    auto y = make_tensor(x->shape);
    for (std::int64_t i = 0; i < x->size(); ++i) y->data[i] = fwd(x->data[i]);
    if (wants_grad(tape, {&x})) {
        y->requires_grad = true;
        tape->record([x, y, bwd] {
            if (y->grad.empty()) return;
            x->ensure_grad();
            for (std::int64_t i = 0; i < x->size(); ++i)
                x->grad[i] += y->grad[i] * bwd(x->data[i], y->data[i]);
        });
    }
    return y;
}

}  // namespace detail

inline TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    detail::check_same_shape("add", a, b);
    auto y = make_tensor(a->shape);
    for (std::int64_t i = 0; i < a->size(); ++i) y->data[i] = a->data[i] + b->data[i];
    if (wants_grad(tape, {&a, &b})) {
        y->requires_grad = true;
        tape->record([a, b, y] {
            if (y->grad.empty()) return;
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::int64_t i = 0; i < a->size(); ++i) a->grad[i] += y->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::int64_t i = 0; i < b->size(); ++i) b->grad[i] += y->grad[i];
            }
        });
    }
    return y;
}

inline TensorPtr sub(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    detail::check_same_shape("sub", a, b);
    auto y = make_tensor(a->shape);
    for (std::int64_t i = 0; i < a->size(); ++i) y->data[i] = a->data[i] - b->data[i];
    if (wants_grad(tape, {&a, &b})) {
        y->requires_grad = true;
        tape->record([a, b, y] {
            if (y->grad.empty()) return;
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::int64_t i = 0; i < a->size(); ++i) a->grad[i] += y->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::int64_t i = 0; i < b->size(); ++i) b->grad[i] -= y->grad[i];
            }
        });
    }
    return y;
}

inline TensorPtr mul(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    detail::check_same_shape("mul", a, b);
    auto y = make_tensor(a->shape);
    for (std::int64_t i = 0; i < a->size(); ++i) y->data[i] = a->data[i] * b->data[i];
    if (wants_grad(tape, {&a, &b})) {
        y->requires_grad = true;
        tape->record([a, b, y] {
            if (y->grad.empty()) return;
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::int64_t i = 0; i < a->size(); ++i) a->grad[i] += y->grad[i] * b->data[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::int64_t i = 0; i < b->size(); ++i) b->grad[i] += y->grad[i] * a->data[i];
            }
        });
    }
    return y;
}

inline TensorPtr scale(Tape* tape, const TensorPtr& x, double c) {
    return detail::unary_op(tape, x, [c](double v) { return v * c; },
                            [c](double, double) { return c; });
}

inline TensorPtr add_const(Tape* tape, const TensorPtr& x, double c) {
    return detail::unary_op(tape, x, [c](double v) { return v + c; },
                            [](double, double) { return 1.0; });
}

inline TensorPtr relu(Tape* tape, const TensorPtr& x) {
    return detail::unary_op(tape, x, [](double v) { return v > 0.0 ? v : 0.0; },
                            [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline TensorPtr sigmoid(Tape* tape, const TensorPtr& x) {
    return detail::unary_op(tape, x,
                            [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
                            [](double, double y) { return y * (1.0 - y); });
}

inline TensorPtr sum_all(Tape* tape, const TensorPtr& x) {
    long double acc = 0.0L;
    for (double v : x->data) acc += v;
    auto y = scalar_tensor(static_cast<double>(acc));
    if (wants_grad(tape, {&x})) {
        y->requires_grad = true;
        tape->record([x, y] {
            if (y->grad.empty()) return;
            x->ensure_grad();
            for (std::int64_t i = 0; i < x->size(); ++i) x->grad[i] += y->grad[0];
        });
    }
    return y;
}

// y = x·w + b with x:[N,Cin], w:[Cin,Cout], b:[Cout]
inline TensorPtr linear(Tape* tape, const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
    if (x->rank() != 2 || w->rank() != 2 || x->dim(1) != w->dim(0))
        throw std::invalid_argument("linear: x " + shape_str(x->shape) +
                                    " incompatible with w " + shape_str(w->shape));
    const int n = x->dim(0), cin = x->dim(1), cout = w->dim(1);
    if (b && (b->rank() != 1 || b->dim(0) != cout))
        throw std::invalid_argument("linear: bias " + shape_str(b->shape) +
                                    " incompatible with w " + shape_str(w->shape));
    auto y = make_tensor({n, cout});
    for (int i = 0; i < n; ++i) {
        double* yo = y->data.data() + static_cast<std::int64_t>(i) * cout;
        if (b) {
            const double* bp = b->data.data();
            for (int j = 0; j < cout; ++j) yo[j] = bp[j];
        }
        const double* xi = x->data.data() + static_cast<std::int64_t>(i) * cin;
        for (int k = 0; k < cin; ++k) {
            const double xv = xi[k];
            const double* wr = w->data.data() + static_cast<std::int64_t>(k) * cout;
            for (int j = 0; j < cout; ++j) yo[j] += xv * wr[j];
        }
    }
    if (wants_grad(tape, {&x, &w, &b})) {
        y->requires_grad = true;
        tape->record([x, w, b, y, n, cin, cout] {
            if (y->grad.empty()) return;
            if (x->requires_grad) {
                x->ensure_grad();
                for (int i = 0; i < n; ++i) {
                    const double* go = y->grad.data() + static_cast<std::int64_t>(i) * cout;
                    double* gx = x->grad.data() + static_cast<std::int64_t>(i) * cin;
                    for (int k = 0; k < cin; ++k) {
                        const double* wr = w->data.data() + static_cast<std::int64_t>(k) * cout;
                        double acc = 0.0;
                        for (int j = 0; j < cout; ++j) acc += go[j] * wr[j];
                        gx[k] += acc;
                    }
                }
            }
            if (w->requires_grad) {
                w->ensure_grad();
                for (int i = 0; i < n; ++i) {
                    const double* go = y->grad.data() + static_cast<std::int64_t>(i) * cout;
                    const double* xi = x->data.data() + static_cast<std::int64_t>(i) * cin;
                    for (int k = 0; k < cin; ++k) {
                        double* gw = w->grad.data() + static_cast<std::int64_t>(k) * cout;
                        const double xv = xi[k];
                        for (int j = 0; j < cout; ++j) gw[j] += xv * go[j];
                    }
                }
            }
            if (b && b->requires_grad) {
                b->ensure_grad();
                for (int i = 0; i < n; ++i) {
                    const double* go = y->grad.data() + static_cast<std::int64_t>(i) * cout;
                    for (int j = 0; j < cout; ++j) b->grad[j] += go[j];
                }
            }
        });
    }
    return y;
}

// Numerically stable softmax along `axis`; outputs sum to 1 on every slice.
inline TensorPtr softmax(Tape* tape, const TensorPtr& x, int axis) {
    if (axis < 0) axis += x->rank();
    if (axis < 0 || axis >= x->rank())
        throw std::invalid_argument("softmax: axis out of range for " + shape_str(x->shape));
    const int k = x->dim(axis);
    std::int64_t inner = 1, outer = 1;
    for (int i = axis + 1; i < x->rank(); ++i) inner *= x->dim(i);
    for (int i = 0; i < axis; ++i) outer *= x->dim(i);

    auto y = make_tensor(x->shape);
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * k * inner + in;
            double mx = -HUGE_VAL;
            for (int j = 0; j < k; ++j) mx = std::max(mx, x->data[base + j * inner]);
            double denom = 0.0;
            for (int j = 0; j < k; ++j) {
                const double e = std::exp(x->data[base + j * inner] - mx);
                y->data[base + j * inner] = e;
                denom += e;
            }
            for (int j = 0; j < k; ++j) y->data[base + j * inner] /= denom;
        }
    }
    if (wants_grad(tape, {&x})) {
        y->requires_grad = true;
        tape->record([x, y, k, inner, outer] {
            if (y->grad.empty()) return;
            x->ensure_grad();
            for (std::int64_t o = 0; o < outer; ++o) {
                for (std::int64_t in = 0; in < inner; ++in) {
                    const std::int64_t base = o * k * inner + in;
                    double dot = 0.0;
                    for (int j = 0; j < k; ++j)
                        dot += y->grad[base + j * inner] * y->data[base + j * inner];
                    for (int j = 0; j < k; ++j) {
                        const std::int64_t idx = base + j * inner;
                        x->grad[idx] += y->data[idx] * (y->grad[idx] - dot);
                    }
                }
            }
        });
    }
    return y;
}

// Mean cross-entropy from logits against integer bin targets; rows where
// valid[i]==0 are excluded. Returns 0 if nothing is supervised.
inline TensorPtr softmax_xent(Tape* tape, const TensorPtr& logits,
                              const std::vector<int>& targets, const std::vector<char>& valid,
                              int* supervised_count = nullptr) {
    if (logits->rank() != 2)
        throw std::invalid_argument("softmax_xent: logits must be [N,K], got " + shape_str(logits->shape));
    const int n = logits->dim(0), k = logits->dim(1);
    if (static_cast<int>(targets.size()) != n || static_cast<int>(valid.size()) != n)
        throw std::invalid_argument("softmax_xent: target/valid length mismatch");
    int count = 0;
    long double acc = 0.0L;
    for (int i = 0; i < n; ++i) {
        if (!valid[i]) continue;
        ++count;
        const double* row = logits->data.data() + static_cast<std::int64_t>(i) * k;
        double mx = -HUGE_VAL;
        for (int j = 0; j < k; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
        acc += std::log(denom) + mx - row[targets[i]];
    }
    if (supervised_count) *supervised_count = count;
    auto y = scalar_tensor(count ? static_cast<double>(acc / count) : 0.0);
    if (count && wants_grad(tape, {&logits})) {
        y->requires_grad = true;
        tape->record([logits, y, targets, valid, n, k, count] {
            if (y->grad.empty()) return;
            logits->ensure_grad();
            const double g = y->grad[0] / count;
            for (int i = 0; i < n; ++i) {
                if (!valid[i]) continue;
                const double* row = logits->data.data() + static_cast<std::int64_t>(i) * k;
                double* gr = logits->grad.data() + static_cast<std::int64_t>(i) * k;
                double mx = -HUGE_VAL;
                for (int j = 0; j < k; ++j) mx = std::max(mx, row[j]);
                double denom = 0.0;
                for (int j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
                for (int j = 0; j < k; ++j) {
                    const double p = std::exp(row[j] - mx) / denom;
                    gr[j] += g * (p - (j == targets[i] ? 1.0 : 0.0));
                }
            }
        });
    }
    return y;
}

// [C,H,W] -> [H*W, C]
inline TensorPtr to_rows(Tape* tape, const TensorPtr& fmap) {
    if (fmap->rank() != 3)
        throw std::invalid_argument("to_rows: expected [C,H,W], got " + shape_str(fmap->shape));
    const int c = fmap->dim(0), h = fmap->dim(1), w = fmap->dim(2);
    const std::int64_t p = static_cast<std::int64_t>(h) * w;
    auto y = make_tensor({static_cast<int>(p), c});
    for (int ch = 0; ch < c; ++ch)
        for (std::int64_t i = 0; i < p; ++i) y->data[i * c + ch] = fmap->data[ch * p + i];
    if (wants_grad(tape, {&fmap})) {
        y->requires_grad = true;
        tape->record([fmap, y, c, p] {
            if (y->grad.empty()) return;
            fmap->ensure_grad();
            for (int ch = 0; ch < c; ++ch)
                for (std::int64_t i = 0; i < p; ++i) fmap->grad[ch * p + i] += y->grad[i * c + ch];
        });
    }
    return y;
}

// [H*W, C] -> [C,H,W]
inline TensorPtr to_map(Tape* tape, const TensorPtr& rows, int h, int w) {
    if (rows->rank() != 2 || rows->dim(0) != h * w)
        throw std::invalid_argument("to_map: rows " + shape_str(rows->shape) + " do not cover " +
                                    std::to_string(h) + "x" + std::to_string(w));
    const int c = rows->dim(1);
    const std::int64_t p = static_cast<std::int64_t>(h) * w;
    auto y = make_tensor({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (std::int64_t i = 0; i < p; ++i) y->data[ch * p + i] = rows->data[i * c + ch];
    if (wants_grad(tape, {&rows})) {
        y->requires_grad = true;
        tape->record([rows, y, c, p] {
            if (y->grad.empty()) return;
            rows->ensure_grad();
            for (int ch = 0; ch < c; ++ch)
                for (std::int64_t i = 0; i < p; ++i) rows->grad[i * c + ch] += y->grad[ch * p + i];
        });
    }
    return y;
}

// fmap[C,H,W] * mask[H,W], mask broadcast over channels
inline TensorPtr mul_bcast_hw(Tape* tape, const TensorPtr& fmap, const TensorPtr& mask) {
    if (fmap->rank() != 3 || mask->rank() != 2 || fmap->dim(1) != mask->dim(0) ||
        fmap->dim(2) != mask->dim(1))
        throw std::invalid_argument("mul_bcast_hw: fmap " + shape_str(fmap->shape) +
                                    " vs mask " + shape_str(mask->shape));
    const int c = fmap->dim(0);
    const std::int64_t p = static_cast<std::int64_t>(fmap->dim(1)) * fmap->dim(2);
    auto y = make_tensor(fmap->shape);
    for (int ch = 0; ch < c; ++ch)
        for (std::int64_t i = 0; i < p; ++i) y->data[ch * p + i] = fmap->data[ch * p + i] * mask->data[i];
    if (wants_grad(tape, {&fmap, &mask})) {
        y->requires_grad = true;
        tape->record([fmap, mask, y, c, p] {
            if (y->grad.empty()) return;
            if (fmap->requires_grad) {
                fmap->ensure_grad();
                for (int ch = 0; ch < c; ++ch)
                    for (std::int64_t i = 0; i < p; ++i)
                        fmap->grad[ch * p + i] += y->grad[ch * p + i] * mask->data[i];
            }
            if (mask->requires_grad) {
                mask->ensure_grad();
                for (int ch = 0; ch < c; ++ch)
                    for (std::int64_t i = 0; i < p; ++i)
                        mask->grad[i] += y->grad[ch * p + i] * fmap->data[ch * p + i];
            }
        });
    }
    return y;
}

// fmap[C,H,W] + mask[H,W], mask broadcast over channels
inline TensorPtr add_bcast_hw(Tape* tape, const TensorPtr& fmap, const TensorPtr& mask) {
    if (fmap->rank() != 3 || mask->rank() != 2 || fmap->dim(1) != mask->dim(0) ||
        fmap->dim(2) != mask->dim(1))
        throw std::invalid_argument("add_bcast_hw: fmap " + shape_str(fmap->shape) +
                                    " vs mask " + shape_str(mask->shape));
    const int c = fmap->dim(0);
    const std::int64_t p = static_cast<std::int64_t>(fmap->dim(1)) * fmap->dim(2);
    auto y = make_tensor(fmap->shape);
    for (int ch = 0; ch < c; ++ch)
        for (std::int64_t i = 0; i < p; ++i) y->data[ch * p + i] = fmap->data[ch * p + i] + mask->data[i];
    if (wants_grad(tape, {&fmap, &mask})) {
        y->requires_grad = true;
        tape->record([fmap, mask, y, c, p] {
            if (y->grad.empty()) return;
            if (fmap->requires_grad) {
                fmap->ensure_grad();
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(c) * p; ++i)
                    fmap->grad[i] += y->grad[i];
            }
            if (mask->requires_grad) {
                mask->ensure_grad();
                for (int ch = 0; ch < c; ++ch)
                    for (std::int64_t i = 0; i < p; ++i) mask->grad[i] += y->grad[ch * p + i];
            }
        });
    }
    return y;
}

inline TensorPtr concat_cols(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    if (a->rank() != 2 || b->rank() != 2 || a->dim(0) != b->dim(0))
        throw std::invalid_argument("concat_cols: " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    const int n = a->dim(0), ca = a->dim(1), cb = b->dim(1);
    auto y = make_tensor({n, ca + cb});
    for (int i = 0; i < n; ++i) {
        std::copy_n(a->data.data() + static_cast<std::int64_t>(i) * ca, ca,
                    y->data.data() + static_cast<std::int64_t>(i) * (ca + cb));
        std::copy_n(b->data.data() + static_cast<std::int64_t>(i) * cb, cb,
                    y->data.data() + static_cast<std::int64_t>(i) * (ca + cb) + ca);
    }
    if (wants_grad(tape, {&a, &b})) {
        y->requires_grad = true;
        tape->record([a, b, y, n, ca, cb] {
            if (y->grad.empty()) return;
            for (int i = 0; i < n; ++i) {
                const double* g = y->grad.data() + static_cast<std::int64_t>(i) * (ca + cb);
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (int j = 0; j < ca; ++j) a->grad[static_cast<std::int64_t>(i) * ca + j] += g[j];
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    for (int j = 0; j < cb; ++j) b->grad[static_cast<std::int64_t>(i) * cb + j] += g[ca + j];
                }
            }
        });
    }
    return y;
}

inline TensorPtr slice_cols(Tape* tape, const TensorPtr& x, int start, int len) {
    if (x->rank() != 2 || start < 0 || start + len > x->dim(1))
        throw std::invalid_argument("slice_cols: range [" + std::to_string(start) + "," +
                                    std::to_string(start + len) + ") outside " + shape_str(x->shape));
    const int n = x->dim(0), c = x->dim(1);
    auto y = make_tensor({n, len});
    for (int i = 0; i < n; ++i)
        std::copy_n(x->data.data() + static_cast<std::int64_t>(i) * c + start, len,
                    y->data.data() + static_cast<std::int64_t>(i) * len);
    if (wants_grad(tape, {&x})) {
        y->requires_grad = true;
        tape->record([x, y, n, c, start, len] {
            if (y->grad.empty()) return;
            x->ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < len; ++j)
                    x->grad[static_cast<std::int64_t>(i) * c + start + j] +=
                        y->grad[static_cast<std::int64_t>(i) * len + j];
        });
    }
    return y;
}

// Stack 2D tensors with equal column counts vertically.
inline TensorPtr concat_rows(Tape* tape, const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty input");
    const int c = parts[0]->dim(1);
    int n = 0;
    for (const auto& p : parts) {
        if (p->rank() != 2 || p->dim(1) != c)
            throw std::invalid_argument("concat_rows: inconsistent part " + shape_str(p->shape));
        n += p->dim(0);
    }
    auto y = make_tensor({n, c});
    std::int64_t off = 0;
    bool grad = false;
    for (const auto& p : parts) {
        std::copy(p->data.begin(), p->data.end(), y->data.begin() + off);
        off += p->size();
        grad = grad || p->requires_grad;
    }
    if (tape && grad) {
        y->requires_grad = true;
        tape->record([parts, y] {
            if (y->grad.empty()) return;
            std::int64_t off = 0;
            for (const auto& p : parts) {
                if (p->requires_grad) {
                    p->ensure_grad();
                    for (std::int64_t i = 0; i < p->size(); ++i) p->grad[i] += y->grad[off + i];
                }
                off += p->size();
            }
        });
    }
    return y;
}

inline TensorPtr concat_channels(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    if (a->rank() != 3 || b->rank() != 3 || a->dim(1) != b->dim(1) || a->dim(2) != b->dim(2))
        throw std::invalid_argument("concat_channels: " + shape_str(a->shape) + " vs " +
                                    shape_str(b->shape));
    auto y = make_tensor({a->dim(0) + b->dim(0), a->dim(1), a->dim(2)});
    std::copy(a->data.begin(), a->data.end(), y->data.begin());
    std::copy(b->data.begin(), b->data.end(), y->data.begin() + a->size());
    if (wants_grad(tape, {&a, &b})) {
        y->requires_grad = true;
        tape->record([a, b, y] {
            if (y->grad.empty()) return;
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::int64_t i = 0; i < a->size(); ++i) a->grad[i] += y->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::int64_t i = 0; i < b->size(); ++i) b->grad[i] += y->grad[a->size() + i];
            }
        });
    }
    return y;
}

// Per-row layer norm over the last axis of [N,C] with learnable gain/shift.
inline TensorPtr layer_norm_rows(Tape* tape, const TensorPtr& x, const TensorPtr& gamma,
                                 const TensorPtr& beta, double eps = 1e-5) {
    if (x->rank() != 2 || gamma->size() != x->dim(1) || beta->size() != x->dim(1))
        throw std::invalid_argument("layer_norm_rows: x " + shape_str(x->shape) + " gamma " +
                                    shape_str(gamma->shape));
    const int n = x->dim(0), c = x->dim(1);
    auto y = make_tensor(x->shape);
    auto inv_std = std::make_shared<std::vector<double>>(n);
    auto means = std::make_shared<std::vector<double>>(n);
    for (int i = 0; i < n; ++i) {
        const double* xi = x->data.data() + static_cast<std::int64_t>(i) * c;
        double m = 0.0;
        for (int j = 0; j < c; ++j) m += xi[j];
        m /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) var += (xi[j] - m) * (xi[j] - m);
        var /= c;
        const double is = 1.0 / std::sqrt(var + eps);
        (*means)[i] = m;
        (*inv_std)[i] = is;
        double* yi = y->data.data() + static_cast<std::int64_t>(i) * c;
        for (int j = 0; j < c; ++j) yi[j] = (xi[j] - m) * is * gamma->data[j] + beta->data[j];
    }
    if (wants_grad(tape, {&x, &gamma, &beta})) {
        y->requires_grad = true;
        tape->record([x, gamma, beta, y, means, inv_std, n, c] {
            if (y->grad.empty()) return;
            for (int i = 0; i < n; ++i) {
                const double* xi = x->data.data() + static_cast<std::int64_t>(i) * c;
                const double* gy = y->grad.data() + static_cast<std::int64_t>(i) * c;
                const double m = (*means)[i], is = (*inv_std)[i];
                if (gamma->requires_grad) {
                    gamma->ensure_grad();
                    for (int j = 0; j < c; ++j) gamma->grad[j] += gy[j] * (xi[j] - m) * is;
                }
                if (beta->requires_grad) {
                    beta->ensure_grad();
                    for (int j = 0; j < c; ++j) beta->grad[j] += gy[j];
                }
                if (x->requires_grad) {
                    x->ensure_grad();
                    double* gx = x->grad.data() + static_cast<std::int64_t>(i) * c;
                    double sum_g = 0.0, sum_gx = 0.0;
                    for (int j = 0; j < c; ++j) {
                        const double gh = gy[j] * gamma->data[j];
                        sum_g += gh;
                        sum_gx += gh * (xi[j] - m) * is;
                    }
                    for (int j = 0; j < c; ++j) {
                        const double gh = gy[j] * gamma->data[j];
                        const double xh = (xi[j] - m) * is;
                        gx[j] += is * (gh - sum_g / c - xh * sum_gx / c);
                    }
                }
            }
        });
    }
    return y;
}

// Euclidean distance between two flat vectors; subgradient 0 at zero distance.
inline TensorPtr l2_distance(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    detail::check_same_shape("l2_distance", a, b);
    long double acc = 0.0L;
    for (std::int64_t i = 0; i < a->size(); ++i) {
        const double d = a->data[i] - b->data[i];
        acc += static_cast<long double>(d) * d;
    }
    const double dist = std::sqrt(static_cast<double>(acc));
    auto y = scalar_tensor(dist);
    if (wants_grad(tape, {&a, &b})) {
        y->requires_grad = true;
        tape->record([a, b, y, dist] {
            if (y->grad.empty() || dist <= 0.0) return;
            const double g = y->grad[0] / dist;
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::int64_t i = 0; i < a->size(); ++i)
                    a->grad[i] += g * (a->data[i] - b->data[i]);
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::int64_t i = 0; i < b->size(); ++i)
                    b->grad[i] -= g * (a->data[i] - b->data[i]);
            }
        });
    }
    return y;
}

// Top-left spatial crop of [C,H,W] to [C,new_h,new_w].
inline TensorPtr crop_hw(Tape* tape, const TensorPtr& x, int new_h, int new_w) {
    if (x->rank() != 3 || new_h > x->dim(1) || new_w > x->dim(2) || new_h < 1 || new_w < 1)
        throw std::invalid_argument("crop_hw: cannot crop " + shape_str(x->shape) + " to " +
                                    std::to_string(new_h) + "x" + std::to_string(new_w));
    const int c = x->dim(0), h = x->dim(1), w = x->dim(2);
    auto y = make_tensor({c, new_h, new_w});
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < new_h; ++i)
            std::copy_n(x->data.data() + (static_cast<std::int64_t>(ch) * h + i) * w, new_w,
                        y->data.data() + (static_cast<std::int64_t>(ch) * new_h + i) * new_w);
    if (wants_grad(tape, {&x})) {
        y->requires_grad = true;
        tape->record([x, y, c, h, w, new_h, new_w] {
            if (y->grad.empty()) return;
            x->ensure_grad();
            for (int ch = 0; ch < c; ++ch)
                for (int i = 0; i < new_h; ++i)
                    for (int j = 0; j < new_w; ++j)
                        x->grad[(static_cast<std::int64_t>(ch) * h + i) * w + j] +=
                            y->grad[(static_cast<std::int64_t>(ch) * new_h + i) * new_w + j];
        });
    }
    return y;
}

// Flatten to a rank-1 view (copy).
inline TensorPtr flatten(Tape* tape, const TensorPtr& x) {
    auto y = make_tensor({static_cast<int>(x->size())}, x->data);
    if (wants_grad(tape, {&x})) {
        y->requires_grad = true;
        tape->record([x, y] {
            if (y->grad.empty()) return;
            x->ensure_grad();
            for (std::int64_t i = 0; i < x->size(); ++i) x->grad[i] += y->grad[i];
        });
    }
    return y;
}

// v / ||v||2. A zero vector maps to zeros and sets *degenerate.
inline TensorPtr l2_normalize(Tape* tape, const TensorPtr& v, bool* degenerate = nullptr,
                              double tiny = 1e-30) {
    long double acc = 0.0L;
    for (double x : v->data) acc += static_cast<long double>(x) * x;
    const double norm = std::sqrt(static_cast<double>(acc));
    auto y = make_tensor(v->shape);
    if (degenerate) *degenerate = norm < tiny;
    if (norm < tiny) return y;
    for (std::int64_t i = 0; i < v->size(); ++i) y->data[i] = v->data[i] / norm;
    if (wants_grad(tape, {&v})) {
        y->requires_grad = true;
        tape->record([v, y, norm] {
            if (y->grad.empty()) return;
            v->ensure_grad();
            double dot = 0.0;
            for (std::int64_t i = 0; i < v->size(); ++i) dot += y->grad[i] * y->data[i];
            for (std::int64_t i = 0; i < v->size(); ++i)
                v->grad[i] += (y->grad[i] - y->data[i] * dot) / norm;
        });
    }
    return y;
}

}  // namespace placefuse::nn
