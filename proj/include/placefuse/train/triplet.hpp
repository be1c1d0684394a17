#pragma once

// Triplet mining by metric radius and the triplet margin loss.

#include <functional>
#include <optional>

#include "placefuse/data/sample.hpp"
#include "placefuse/nn/ops.hpp"

namespace placefuse::train {

enum class PositiveRule { Descriptor, Geometric };

struct TripletSpec {
    double pos_radius = 9.0;
    double neg_radius = 18.0;
    int k_negatives = 10;
    double margin = 0.1;
    PositiveRule positive_rule = PositiveRule::Descriptor;

    void validate() const {
        if (!(neg_radius > pos_radius))
            throw std::invalid_argument("TripletSpec: neg_radius must exceed pos_radius");
        if (k_negatives < 1) throw std::invalid_argument("TripletSpec: k_negatives must be >= 1");
        if (margin < 0) throw std::invalid_argument("TripletSpec: margin must be >= 0");
    }
};

struct Triplet {
    int positive;
    std::vector<int> negatives;
};

// Positive: among database samples within pos_radius, the one closest in
// descriptor space under the current model ("best positive"); geometric
// nearest behind the flag. Negatives: k seeded-random samples beyond
// neg_radius. Returns nullopt when no geometric positive exists (the caller
// counts the skip); fewer than k negatives is an error.
inline std::optional<Triplet> mine_triplets(
    const data::PlaceSample& query, const std::vector<data::PlaceSample>& db,
    const TripletSpec& spec, std::uint64_t rng_seed,
    const std::function<double(int)>& descriptor_distance = nullptr) {
    spec.validate();
    std::vector<int> positives, negatives;
    for (size_t i = 0; i < db.size(); ++i) {
        const double d = std::hypot(db[i].x - query.x, db[i].y - query.y);
        if (d <= spec.pos_radius)
            positives.push_back(static_cast<int>(i));
        else if (d > spec.neg_radius)
            negatives.push_back(static_cast<int>(i));
    }
    if (positives.empty()) return std::nullopt;
    if (static_cast<int>(negatives.size()) < spec.k_negatives)
        throw std::runtime_error("mine_triplets: only " + std::to_string(negatives.size()) +
                                 " negatives beyond " + std::to_string(spec.neg_radius) +
                                 " m, need " + std::to_string(spec.k_negatives));

    Triplet out;
    if (positives.size() == 1) {
        out.positive = positives[0];
    } else if (spec.positive_rule == PositiveRule::Descriptor && descriptor_distance) {
        double best = HUGE_VAL;
        out.positive = positives[0];
        for (int idx : positives) {
            const double d = descriptor_distance(idx);
            if (d < best) {
                best = d;
                out.positive = idx;
            }
        }
    } else {
        double best = HUGE_VAL;
        out.positive = positives[0];
        for (int idx : positives) {
            const double d = std::hypot(db[static_cast<size_t>(idx)].x - query.x,
                                        db[static_cast<size_t>(idx)].y - query.y);
            if (d < best) {
                best = d;
                out.positive = idx;
            }
        }
    }

    nn::Rng rng(rng_seed);
    for (size_t i = negatives.size(); i > 1; --i)
        std::swap(negatives[i - 1], negatives[rng.below(i)]);
    negatives.resize(static_cast<size_t>(spec.k_negatives));
    out.negatives = std::move(negatives);
    return out;
}

// sum_k max(d(q,p) - d(q,n_k) + m, 0), accumulated in extended precision so
// the all-equal degenerate case lands exactly on k*m. Subgradient 0 at the
// hinge.
inline nn::TensorPtr hinge_sum(nn::Tape* tape, const nn::TensorPtr& d_qp,
                               const std::vector<nn::TensorPtr>& d_qn, double margin) {
    long double acc = 0.0L;
    std::vector<char> active(d_qn.size(), 0);
    for (size_t k = 0; k < d_qn.size(); ++k) {
        const double term = d_qp->data[0] - d_qn[k]->data[0] + margin;
        if (term > 0.0) {
            acc += term;
            active[k] = 1;
        }
    }
    auto loss = nn::scalar_tensor(static_cast<double>(acc));
    bool grad = d_qp->requires_grad;
    for (const auto& t : d_qn) grad = grad || t->requires_grad;
    if (tape && grad) {
        loss->requires_grad = true;
        tape->record([d_qp, d_qn, loss, active] {
            if (loss->grad.empty()) return;
            const double g = loss->grad[0];
            for (size_t k = 0; k < d_qn.size(); ++k) {
                if (!active[k]) continue;
                if (d_qp->requires_grad) {
                    d_qp->ensure_grad();
                    d_qp->grad[0] += g;
                }
                if (d_qn[k]->requires_grad) {
                    d_qn[k]->ensure_grad();
                    d_qn[k]->grad[0] -= g;
                }
            }
        });
    }
    return loss;
}

// Triplet margin loss over descriptor tensors.
inline nn::TensorPtr triplet_loss(nn::Tape* tape, const nn::TensorPtr& q,
                                  const nn::TensorPtr& p, const std::vector<nn::TensorPtr>& ns,
                                  double margin) {
    if (ns.empty()) throw std::invalid_argument("triplet_loss: need at least one negative");
    auto d_qp = nn::l2_distance(tape, q, p);
    std::vector<nn::TensorPtr> d_qn;
    d_qn.reserve(ns.size());
    for (const auto& n : ns) d_qn.push_back(nn::l2_distance(tape, q, n));
    return hinge_sum(tape, d_qp, d_qn, margin);
}

}  // namespace placefuse::train
