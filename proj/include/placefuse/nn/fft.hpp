#pragma once

// Iterative radix-2 complex FFT for power-of-two lengths. Unscaled in both
// directions; callers apply 1/N where needed.

#include <cmath>
#include <stdexcept>
#include <vector>

namespace placefuse::nn {

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place transform of interleaved (re,im) pairs. sign=-1 forward, +1 inverse.
inline void fft_inplace(std::vector<double>& re, std::vector<double>& im, int sign) {
    const int n = static_cast<int>(re.size());
    if (!is_pow2(n)) throw std::invalid_argument("fft: length must be a power of two");
    if (im.size() != re.size()) throw std::invalid_argument("fft: re/im length mismatch");
    // bit reversal
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (int len = 2; len <= n; len <<= 1) {
        const double ang = sign * 2.0 * M_PI / len;
        const double wr = std::cos(ang), wi = std::sin(ang);
        for (int i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (int j = 0; j < len / 2; ++j) {
                const int a = i + j, b = i + j + len / 2;
                const double tr = re[b] * cr - im[b] * ci;
                const double ti = re[b] * ci + im[b] * cr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                const double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
}

// 2D transform over a row-major [rows, cols] grid, both dims power of two.
inline void fft2d_inplace(std::vector<double>& re, std::vector<double>& im, int rows, int cols,
                          int sign) {
    if (static_cast<int>(re.size()) != rows * cols)
        throw std::invalid_argument("fft2d: size mismatch");
    std::vector<double> tr(static_cast<size_t>(std::max(rows, cols)));
    std::vector<double> ti(static_cast<size_t>(std::max(rows, cols)));
    for (int r = 0; r < rows; ++r) {
        std::vector<double> rr(re.begin() + static_cast<std::ptrdiff_t>(r) * cols,
                               re.begin() + static_cast<std::ptrdiff_t>(r + 1) * cols);
        std::vector<double> ri(im.begin() + static_cast<std::ptrdiff_t>(r) * cols,
                               im.begin() + static_cast<std::ptrdiff_t>(r + 1) * cols);
        fft_inplace(rr, ri, sign);
        std::copy(rr.begin(), rr.end(), re.begin() + static_cast<std::ptrdiff_t>(r) * cols);
        std::copy(ri.begin(), ri.end(), im.begin() + static_cast<std::ptrdiff_t>(r) * cols);
    }
    for (int c = 0; c < cols; ++c) {
        std::vector<double> cr(static_cast<size_t>(rows)), ci(static_cast<size_t>(rows));
        for (int r = 0; r < rows; ++r) {
            cr[r] = re[static_cast<std::int64_t>(r) * cols + c];
            ci[r] = im[static_cast<std::int64_t>(r) * cols + c];
        }
        fft_inplace(cr, ci, sign);
        for (int r = 0; r < rows; ++r) {
            re[static_cast<std::int64_t>(r) * cols + c] = cr[r];
            im[static_cast<std::int64_t>(r) * cols + c] = ci[r];
        }
    }
}

}  // namespace placefuse::nn
