#pragma once

// Camera BEV stream: a small shared conv encoder per view (stride-2 twice,
// x4 downsampling) with feature and depth-distribution heads, followed by a
// lift-splat scatter of depth-weighted features into the BEV grid.

#include "placefuse/camera/camera.hpp"
#include "placefuse/geometry/bev.hpp"

namespace placefuse::cam {

constexpr int kFeatureStride = 4;

struct ViewFeatures {
    nn::TensorPtr feat;          // [C, h', w']
    nn::TensorPtr depth_logits;  // [n_bins, h', w']
};

class ViewEncoder {
public:
    ViewEncoder() = default;
    ViewEncoder(nn::ParamStore& store, int image_channels, int channels, int n_bins,
                int hidden = 8, const std::string& prefix = "cam") {
        hidden_ = hidden;
        c1w_ = store.create(prefix + ".c1.w", {hidden, image_channels, 3, 3}, image_channels * 9);
        c1b_ = store.create(prefix + ".c1.b", {hidden}, image_channels * 9);
        c2w_ = store.create(prefix + ".c2.w", {hidden, hidden, 3, 3}, hidden * 9);
        c2b_ = store.create(prefix + ".c2.b", {hidden}, hidden * 9);
        c3w_ = store.create(prefix + ".c3.w", {hidden, hidden, 3, 3}, hidden * 9);
        c3b_ = store.create(prefix + ".c3.b", {hidden}, hidden * 9);
        fw_ = store.create(prefix + ".feat.w", {channels, hidden, 1, 1}, hidden);
        fb_ = store.create(prefix + ".feat.b", {channels}, hidden);
        dw_ = store.create(prefix + ".depth.w", {n_bins, hidden, 1, 1}, hidden);
        db_ = store.create(prefix + ".depth.b", {n_bins}, hidden);
    }

    ViewFeatures encode_view(nn::Tape* tape, const nn::TensorPtr& img) const {
        auto h1 = nn::relu(tape, nn::conv2d(tape, img, c1w_->tensor, c1b_->tensor, 1, 2));
        auto h2 = nn::relu(tape, nn::conv2d(tape, h1, c2w_->tensor, c2b_->tensor, 1, 2));
        auto h3 = nn::relu(tape, nn::conv2d(tape, h2, c3w_->tensor, c3b_->tensor, 1, 1));
        ViewFeatures out;
        out.feat = nn::conv2d(tape, h3, fw_->tensor, fb_->tensor, 0, 1);
        out.depth_logits = nn::conv2d(tape, h3, dw_->tensor, db_->tensor, 0, 1);
        return out;
    }

    // Weights are shared across views: identical inputs give identical outputs.
    std::vector<ViewFeatures> encode_views(nn::Tape* tape, const MultiViewImages& imgs) const {
        std::vector<ViewFeatures> out;
        out.reserve(imgs.views.size());
        for (const auto& v : imgs.views) out.push_back(encode_view(tape, v));
        return out;
    }

private:
    int hidden_ = 8;
    nn::ParameterPtr c1w_, c1b_, c2w_, c2b_, c3w_, c3b_, fw_, fb_, dw_, db_;
};

// Image pixel sampled for feature pixel (fy,fx): center of its stride block.
inline int feature_pixel_row(int fy) { return fy * kFeatureStride + kFeatureStride / 2; }
inline int feature_pixel_col(int fx) { return fx * kFeatureStride + kFeatureStride / 2; }

// Flattened BEV cell per (feature pixel, depth bin); -1 when the lifted point
// falls outside the grid. Pure geometry, no gradient.
inline std::vector<int> lift_cells(const CameraRig& rig, const std::vector<ViewFeatures>& feats,
                                   const DepthBins& bins, const geo::BevGridSpec& spec) {
    bins.validate();
    std::vector<int> cells;
    for (size_t vi = 0; vi < feats.size(); ++vi) {
        const auto& view = rig.views.at(vi);
        const int fh = feats[vi].feat->dim(1), fw = feats[vi].feat->dim(2);
        for (int fy = 0; fy < fh; ++fy) {
            for (int fx = 0; fx < fw; ++fx) {
                const int py = std::min(feature_pixel_row(fy), rig.image_h - 1);
                const int px = std::min(feature_pixel_col(fx), rig.image_w - 1);
                const auto& ray = view.pixel_rays[static_cast<size_t>(py) * rig.image_w + px];
                for (int d = 0; d < bins.n_bins; ++d) {
                    const double depth = bins.center(d);
                    const double wx = view.origin[0] + depth * ray[0];
                    const double wy = view.origin[1] + depth * ray[1];
                    const auto g = geo::world_to_grid(spec, wx, wy);
                    const int cx = geo::grid_cell(g.x);
                    const int cy = geo::grid_cell(g.y);
                    const bool in = cx >= 0 && cx < spec.width && cy >= 0 && cy < spec.height;
                    cells.push_back(in ? cy * spec.width + cx : -1);
                }
            }
        }
    }
    return cells;
}

struct LiftResult {
    nn::TensorPtr bev;           // [C, H, W]
    nn::TensorPtr feat_rows;     // [P, C] (all views concatenated)
    nn::TensorPtr logit_rows;    // [P, n_bins]
    nn::SplatStats stats;
};

// Softmax the depth logits into a per-pixel distribution, scatter
// feature*alpha along each ray, sum-pool into BEV cells.
inline LiftResult lift_splat(nn::Tape* tape, const std::vector<ViewFeatures>& feats,
                             const CameraRig& rig, const DepthBins& bins,
                             const geo::BevGridSpec& spec) {
    for (const auto& vf : feats)
        if (vf.depth_logits->dim(0) != bins.n_bins)
            throw std::invalid_argument("lift_splat: encoder predicts " +
                                        std::to_string(vf.depth_logits->dim(0)) +
                                        " depth bins, DepthBins has " + std::to_string(bins.n_bins));
    std::vector<nn::TensorPtr> frows, lrows;
    for (const auto& vf : feats) {
        frows.push_back(nn::to_rows(tape, vf.feat));
        lrows.push_back(nn::to_rows(tape, vf.depth_logits));
    }
    LiftResult out;
    out.feat_rows = nn::concat_rows(tape, frows);
    out.logit_rows = nn::concat_rows(tape, lrows);
    auto alpha = nn::softmax(tape, out.logit_rows, 1);
    const auto cells = lift_cells(rig, feats, bins, spec);
    out.bev = nn::splat(tape, out.feat_rows, alpha, cells, spec.height, spec.width, &out.stats);
    return out;
}

struct DepthLossResult {
    nn::TensorPtr loss;  // scalar
    int supervised = 0;
    bool empty_supervision = false;  // warning flag: no pixel in range
};

// Cross-entropy between the predicted depth distribution and the one-hot bin
// holding the raycast ground-truth depth, averaged over supervised pixels.
inline DepthLossResult depth_loss(nn::Tape* tape, const nn::TensorPtr& logit_rows,
                                  const std::vector<double>& gt_depth_per_pixel,
                                  const DepthBins& bins) {
    bins.validate();
    const int n = logit_rows->dim(0);
    if (static_cast<int>(gt_depth_per_pixel.size()) != n)
        throw std::invalid_argument("depth_loss: ground-truth depth count mismatch");
    std::vector<int> targets(static_cast<size_t>(n), 0);
    std::vector<char> valid(static_cast<size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
        const int b = bins.bin_of(gt_depth_per_pixel[i]);
        if (b >= 0) {
            targets[static_cast<size_t>(i)] = b;
            valid[static_cast<size_t>(i)] = 1;
        }
    }
    DepthLossResult res;
    res.loss = nn::softmax_xent(tape, logit_rows, targets, valid, &res.supervised);
    res.empty_supervision = res.supervised == 0;
    return res;
}

// Ground-truth depth per feature pixel, subsampled at the stride centers.
inline std::vector<double> feature_pixel_depths(const MultiViewImages& imgs,
                                                const std::vector<ViewFeatures>& feats) {
    std::vector<double> out;
    for (size_t vi = 0; vi < feats.size(); ++vi) {
        const int fh = feats[vi].feat->dim(1), fw = feats[vi].feat->dim(2);
        const auto& gt = imgs.gt_depth.at(vi);
        const int ih = gt->dim(0), iw = gt->dim(1);
        for (int fy = 0; fy < fh; ++fy)
            for (int fx = 0; fx < fw; ++fx) {
                const int py = std::min(feature_pixel_row(fy), ih - 1);
                const int px = std::min(feature_pixel_col(fx), iw - 1);
                out.push_back(gt->data[static_cast<size_t>(py) * iw + px]);
            }
    }
    return out;
}

}  // namespace placefuse::cam
