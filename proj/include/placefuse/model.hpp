#pragma once

// End-to-end place recognition model: camera and radar BEV streams, the
// background-attentive mask, bidirectional fusion, and the polar-DFT
// descriptor head. Every component is registered in one parameter store
// regardless of the ablation mode, so checkpoints are interchangeable
// between modes; the mode selects which paths run and which parameters
// receive gradients.

#include "placefuse/bamg/mask.hpp"
#include "placefuse/bsf/bsf.hpp"
#include "placefuse/camera/stream.hpp"
#include "placefuse/data/sample.hpp"
#include "placefuse/descriptor/descriptor.hpp"
#include "placefuse/geometry/polar.hpp"
#include "placefuse/radar/pillars.hpp"

namespace placefuse::model {

enum class AblationMode { Full, NoBamg, NoBsf, Neither };

inline const char* mode_name(AblationMode m) {
    switch (m) {
        case AblationMode::Full: return "full";
        case AblationMode::NoBamg: return "no_bamg";
        case AblationMode::NoBsf: return "no_bsf";
        case AblationMode::Neither: return "neither";
    }
    return "?";
}

inline AblationMode mode_from_name(const std::string& s) {
    if (s == "full") return AblationMode::Full;
    if (s == "no_bamg") return AblationMode::NoBamg;
    if (s == "no_bsf") return AblationMode::NoBsf;
    if (s == "neither") return AblationMode::Neither;
    throw std::invalid_argument("unknown mode '" + s + "' (full|no_bamg|no_bsf|neither)");
}

struct ModelConfig {
    int channels = 32;
    int n_heads = 4;
    int n_points = 4;
    double offset_init_scale = 0.1;
    bool layer_norm = true;
    int n_blocks = 3;
    int cam_hidden = 8;
    int image_channels = 1;
    cam::DepthBins bins{};
    geo::BevGridSpec grid = geo::BevGridSpec::standard();
    geo::PolarGridSpec polar{};
    desc::DescriptorConfig descriptor{};
    double r_init = 0.5, r_min = 0.05, r_max = 8.0;
    double mask_tau = 0.25;
    double v_thresh = 0.5;
    std::set<int> moving_dynprops = {0};
    int max_points_per_pillar = 16;
    AblationMode mode = AblationMode::Full;

    bsf::DefAttnConfig attn_config() const {
        bsf::DefAttnConfig a;
        a.channels = channels;
        a.n_heads = n_heads;
        a.n_points = n_points;
        a.offset_init_scale = offset_init_scale;
        a.layer_norm = layer_norm;
        return a;
    }
};

struct ForwardResult {
    desc::DescriptorResult descriptor;
    nn::TensorPtr logit_rows;       // per-feature-pixel depth logits
    std::vector<double> gt_depths;  // matching ground truth (empty when absent)
    nn::TensorPtr mask_values;      // null when the mode runs unmasked
    nn::TensorPtr f_out;
    nn::SplatStats lift_stats;
};

class PlaceModel {
public:
    explicit PlaceModel(const ModelConfig& cfg, std::uint64_t seed)
        : cfg_(cfg), store_(seed) {
        cfg_.attn_config().validate();
        cfg_.descriptor.validate(cfg_.polar);
        cam_enc_ = cam::ViewEncoder(store_, cfg_.image_channels, cfg_.channels, cfg_.bins.n_bins,
                                    cfg_.cam_hidden);
        pillar_ = radar::PillarEncoder(store_, cfg_.channels);
        bsf_ = bsf::BsfStack(store_, cfg_.attn_config(), cfg_.grid.height, cfg_.grid.width,
                             cfg_.n_blocks);
        radius_ = bamg::MaskRadius::create(store_, cfg_.r_init);
        radius_.min_cells = cfg_.r_min;
        radius_.max_cells = cfg_.r_max;
        const int c = cfg_.channels;
        // plain concat+conv fusion used by the no_bsf / neither modes
        plain_fuse_w_ = store_.create("plain_fuse.w", {c, 2 * c, 3, 3}, 2 * c * 9);
        plain_fuse_b_ = store_.create("plain_fuse.b", {c}, 2 * c * 9);
        polar_points_ = geo::polar_sample_points(cfg_.grid, cfg_.polar);
    }

    ForwardResult forward(nn::Tape* tape, const data::PlaceSample& sample,
                          const cam::CameraRig& rig, bamg::MaskMode mask_mode,
                          bool zero_radar = false) const {
        ForwardResult out;

        // radar stream
        auto points = radar::accumulate_sweeps(sample.radar);
        if (zero_radar) points.clear();
        auto split = radar::split_dynamic(points, cfg_.v_thresh, cfg_.moving_dynprops);
        auto f_r = pillar_.encode_points(tape, split.stationary, cfg_.grid,
                                         cfg_.max_points_per_pillar);

        // camera stream
        auto feats = cam_enc_.encode_views(tape, sample.images);
        auto lift = cam::lift_splat(tape, feats, rig, cfg_.bins, cfg_.grid);
        out.logit_rows = lift.logit_rows;
        out.lift_stats = lift.stats;
        if (sample.images.has_depth())
            out.gt_depths = cam::feature_pixel_depths(sample.images, feats);
        auto f_c = lift.bev;

        // background mask
        nn::TensorPtr mask;  // null = run unmasked (bit-identical to all-ones)
        const bool wants_mask = cfg_.mode == AblationMode::Full || cfg_.mode == AblationMode::NoBsf;
        if (wants_mask) {
            const auto cells = bamg::dynamic_voxel_grid(split.dynamic, cfg_.grid);
            mask = bamg::generate_mask(tape, cells, radius_, mask_mode, cfg_.mask_tau,
                                       cfg_.grid.height, cfg_.grid.width)
                       .values;
        }
        out.mask_values = mask;

        // fusion
        nn::TensorPtr fused;
        if (cfg_.mode == AblationMode::Full || cfg_.mode == AblationMode::NoBamg) {
            fused = bsf_.run(tape, f_c, f_r, cfg_.mode == AblationMode::Full ? mask : nullptr);
        } else {
            // concat + 3x3 conv baseline; in no_bsf mode the mask is added
            // onto both feature maps before fusion
            auto cam_in = f_c, rad_in = f_r;
            if (cfg_.mode == AblationMode::NoBsf && mask) {
                cam_in = nn::add_bcast_hw(tape, f_c, mask);
                rad_in = nn::add_bcast_hw(tape, f_r, mask);
            }
            auto cat = nn::concat_channels(tape, cam_in, rad_in);
            fused = nn::conv2d(tape, cat, plain_fuse_w_->tensor, plain_fuse_b_->tensor, 1);
        }
        out.f_out = fused;
        out.descriptor =
            desc::make_descriptor(tape, fused, cfg_.grid, cfg_.polar, cfg_.descriptor, polar_points_);
        return out;
    }

    desc::PlaceDescriptor describe(const data::PlaceSample& sample, const cam::CameraRig& rig,
                                   bool zero_radar = false) const {
        return forward(nullptr, sample, rig, bamg::MaskMode::Hard, zero_radar)
            .descriptor.to_descriptor();
    }

    // Parameters updated in a given mode. The mask radius only learns where
    // the mask is part of the graph.
    std::vector<nn::ParameterPtr> active_params(AblationMode mode) const {
        std::vector<nn::ParameterPtr> out;
        const bool use_bsf = mode == AblationMode::Full || mode == AblationMode::NoBamg;
        const bool learn_r = mode == AblationMode::Full || mode == AblationMode::NoBsf;
        for (const auto& p : store_.all()) {
            const bool is_bsf = p->name.rfind("bsf.", 0) == 0;
            const bool is_plain = p->name.rfind("plain_fuse.", 0) == 0;
            const bool is_r = p->name == "bamg.r";
            if (is_bsf && !use_bsf) continue;
            if (is_plain && use_bsf) continue;
            if (is_r && !learn_r) continue;
            out.push_back(p);
        }
        return out;
    }

    const ModelConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return store_; }
    const nn::ParamStore& params() const { return store_; }
    const bamg::MaskRadius& radius() const { return radius_; }
    double radius_value() const { return radius_.value(); }
    void clamp_radius() const { radius_.clamp(); }

private:
    ModelConfig cfg_;
    nn::ParamStore store_;
    cam::ViewEncoder cam_enc_;
    radar::PillarEncoder pillar_;
    bsf::BsfStack bsf_;
    bamg::MaskRadius radius_;
    nn::ParameterPtr plain_fuse_w_, plain_fuse_b_;
    nn::TensorPtr polar_points_;
};

}  // namespace placefuse::model
