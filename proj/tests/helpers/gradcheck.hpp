#pragma once

// Central finite-difference gradient checking against tape gradients.

#include <cmath>
#include <functional>
#include <vector>

#include "placefuse/nn/tensor.hpp"

namespace pf_test {

using placefuse::nn::Tape;
using placefuse::nn::TensorPtr;

struct GradCheckResult {
    double max_rel_err = 0.0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
};

// fn must rebuild the computation from the given leaf tensors on every call
// (their data is perturbed in place between calls). Leaves are expected to
// have requires_grad set before the call.
inline GradCheckResult gradcheck(const std::function<TensorPtr(Tape*)>& fn,
                                 const std::vector<TensorPtr>& leaves, double eps = 1e-5) {
    Tape tape;
    for (const auto& l : leaves) l->zero_grad();
    TensorPtr loss = fn(&tape);
    tape.backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (const auto& l : leaves) {
        l->ensure_grad();
        analytic.push_back(l->grad);
    }

    GradCheckResult res;
    for (size_t li = 0; li < leaves.size(); ++li) {
        auto& leaf = *leaves[li];
        for (std::int64_t i = 0; i < leaf.size(); ++i) {
            const double saved = leaf.data[i];
            leaf.data[i] = saved + eps;
            const double up = fn(nullptr)->data[0];
            leaf.data[i] = saved - eps;
            const double dn = fn(nullptr)->data[0];
            leaf.data[i] = saved;
            const double numeric = (up - dn) / (2.0 * eps);
            const double a = analytic[li][i];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-6});
            const double rel = std::fabs(a - numeric) / denom;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.analytic_at_worst = a;
                res.numeric_at_worst = numeric;
            }
        }
    }
    return res;
}

inline void fill_uniform(const TensorPtr& t, placefuse::nn::Rng& rng, double lo = -1.0,
                         double hi = 1.0) {
    for (double& v : t->data) v = rng.uniform(lo, hi);
}

}  // namespace pf_test
