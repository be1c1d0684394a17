#pragma once

// Bidirectional spatial fusion: a stack of three identically-shaped blocks.
// Each block runs masked deformable self-attention on both streams, cross
// attention in both directions (camera queries over radar values and radar
// queries over camera values), then a 3x3 convolution over the concatenated
// outputs. A linear layer produces the radar input of the next block.
//
// Masking: value maps are multiplied by the mask inside every attention, and
// each block multiplies its query maps by the mask on entry. Together these
// make the output exactly independent of features inside hard-masked cells.

#include <cmath>

#include "placefuse/bamg/mask.hpp"
#include "placefuse/nn/kernels.hpp"
#include "placefuse/nn/ops.hpp"

namespace placefuse::bsf {

using nn::TensorPtr;

struct DefAttnConfig {
    int channels = 32;
    int n_heads = 4;
    int n_points = 4;
    double offset_init_scale = 0.1;  // cells; scales the initial sampling ring
    bool layer_norm = true;

    void validate() const {
        if (channels < 1 || n_heads < 1 || n_points < 1)
            throw std::invalid_argument("DefAttnConfig: counts must be positive");
        if (channels % n_heads != 0)
            throw std::invalid_argument("DefAttnConfig: channels (" + std::to_string(channels) +
                                        ") not divisible by n_heads (" + std::to_string(n_heads) + ")");
    }
    int head_dim() const { return channels / n_heads; }
    int pred_cols() const { return n_heads * n_points * 3; }
};

// Fixed sinusoidal encoding of BEV coordinates, laid out as [H*W, C] rows so
// it can be added to flattened query maps. Deterministic in (C,H,W).
inline TensorPtr sinusoidal_pos_rows(int channels, int h, int w) {
    auto rows = nn::make_tensor({h * w, channels});
    const int quads = channels / 4;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double* r = rows->data.data() + (static_cast<std::int64_t>(y) * w + x) * channels;
            for (int q = 0; q < quads; ++q) {
                const double freq = std::pow(10000.0, -4.0 * q / channels);
                r[4 * q] = std::sin(x * freq);
                r[4 * q + 1] = std::cos(x * freq);
                r[4 * q + 2] = std::sin(y * freq);
                r[4 * q + 3] = std::cos(y * freq);
            }
        }
    return rows;
}

// Reference points: each query's own grid coordinate.
inline std::shared_ptr<std::vector<double>> grid_base_points(int h, int w) {
    auto base = std::make_shared<std::vector<double>>();
    base->reserve(static_cast<size_t>(h) * w * 2);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            base->push_back(static_cast<double>(x));
            base->push_back(static_cast<double>(y));
        }
    return base;
}

struct DefAttnParams {
    nn::ParameterPtr w_off, b_off;             // offset/logit predictor
    std::vector<nn::ParameterPtr> wv, bv;      // per-head value projection C -> C/heads
    nn::ParameterPtr wo, bo;                   // output projection C -> C
    nn::ParameterPtr ln_g, ln_b;

    static DefAttnParams create(nn::ParamStore& store, const DefAttnConfig& cfg,
                                const std::string& prefix) {
        cfg.validate();
        DefAttnParams p;
        const int c = cfg.channels;
        // zero weights: offsets start at the reference point; the bias spreads
        // the initial sample ring so heads/points are not degenerate
        p.w_off = store.create(prefix + ".woff", {c, cfg.pred_cols()}, c, nn::ParamInit::Zeros);
        p.b_off = store.create(prefix + ".boff", {cfg.pred_cols()}, c, nn::ParamInit::Zeros);
        for (int h = 0; h < cfg.n_heads; ++h)
            for (int k = 0; k < cfg.n_points; ++k) {
                const double ang =
                    2.0 * M_PI * (h * cfg.n_points + k) / (cfg.n_heads * cfg.n_points);
                const double mag = cfg.offset_init_scale * (k + 1);
                p.b_off->tensor->data[(h * cfg.n_points + k) * 3] = mag * std::cos(ang);
                p.b_off->tensor->data[(h * cfg.n_points + k) * 3 + 1] = mag * std::sin(ang);
            }
        for (int h = 0; h < cfg.n_heads; ++h) {
            p.wv.push_back(store.create(prefix + ".wv" + std::to_string(h), {c, cfg.head_dim()}, c));
            p.bv.push_back(store.create(prefix + ".bv" + std::to_string(h), {cfg.head_dim()}, c));
        }
        p.wo = store.create(prefix + ".wo", {c, c}, c);
        p.bo = store.create(prefix + ".bo", {c}, c);
        if (cfg.layer_norm) {
            p.ln_g = store.create(prefix + ".ln_g", {c}, c, nn::ParamInit::Ones);
            p.ln_b = store.create(prefix + ".ln_b", {c}, c, nn::ParamInit::Zeros);
        }
        return p;
    }
};

// One deformable attention pass. For every query pixel, a linear layer on the
// (position-encoded) query predicts per-head point offsets and weights; the
// weighted bilinear samples of the masked value map are projected per head,
// concatenated, output-projected, and added back onto the query (residual).
// mask may be null for the unmasked variant.
inline TensorPtr def_attn(nn::Tape* tape, const TensorPtr& query_map, const TensorPtr& value_map,
                          const TensorPtr& mask, const DefAttnConfig& cfg,
                          const DefAttnParams& params, const TensorPtr& pos_rows,
                          const std::shared_ptr<std::vector<double>>& base) {
    if (query_map->shape != value_map->shape)
        throw std::invalid_argument("def_attn: query " + nn::shape_str(query_map->shape) +
                                    " vs value " + nn::shape_str(value_map->shape));
    if (mask && (mask->dim(0) != query_map->dim(1) || mask->dim(1) != query_map->dim(2)))
        throw std::invalid_argument("def_attn: mask " + nn::shape_str(mask->shape) +
                                    " does not match map " + nn::shape_str(query_map->shape));
    const int h = query_map->dim(1), w = query_map->dim(2);
    auto q_rows = nn::to_rows(tape, query_map);
    auto attn_in = nn::add(tape, q_rows, pos_rows);
    auto off_logits = nn::linear(tape, attn_in, params.w_off->tensor, params.b_off->tensor);
    auto values = mask ? nn::mul_bcast_hw(tape, value_map, mask) : value_map;
    auto agg = nn::deform_sample_agg(tape, values, off_logits, base, cfg.n_heads, cfg.n_points);
    std::vector<TensorPtr> head_outs;
    for (int hd = 0; hd < cfg.n_heads; ++hd) {
        auto slice = nn::slice_cols(tape, agg, hd * cfg.channels, cfg.channels);
        head_outs.push_back(nn::linear(tape, slice, params.wv[hd]->tensor, params.bv[hd]->tensor));
    }
    TensorPtr cat = head_outs[0];
    for (size_t i = 1; i < head_outs.size(); ++i) cat = nn::concat_cols(tape, cat, head_outs[i]);
    auto out = nn::linear(tape, cat, params.wo->tensor, params.bo->tensor);
    auto res = nn::add(tape, q_rows, out);
    if (cfg.layer_norm) res = nn::layer_norm_rows(tape, res, params.ln_g->tensor, params.ln_b->tensor);
    return nn::to_map(tape, res, h, w);
}

struct FusionParams {
    DefAttnParams dsa;    // self-attention on the query stream
    DefAttnParams cross;  // cross-attention onto the other stream

    static FusionParams create(nn::ParamStore& store, const DefAttnConfig& cfg,
                               const std::string& prefix) {
        return {DefAttnParams::create(store, cfg, prefix + ".dsa"),
                DefAttnParams::create(store, cfg, prefix + ".cross")};
    }
};

// Self-attention on the camera stream, then cross-attention with camera
// queries over masked radar values.
inline TensorPtr fusion_pass(nn::Tape* tape, const TensorPtr& query_stream,
                             const TensorPtr& value_stream, const TensorPtr& mask,
                             const DefAttnConfig& cfg, const FusionParams& params,
                             const TensorPtr& pos_rows,
                             const std::shared_ptr<std::vector<double>>& base) {
    auto q_in = mask ? nn::mul_bcast_hw(tape, query_stream, mask) : query_stream;
    auto self_out = def_attn(tape, q_in, query_stream, mask, cfg, params.dsa, pos_rows, base);
    return def_attn(tape, self_out, value_stream, mask, cfg, params.cross, pos_rows, base);
}

struct BsfBlockState {
    FusionParams r2i;  // camera queries, radar values
    FusionParams i2r;  // radar queries, camera values
    nn::ParameterPtr fuse_w, fuse_b;      // conv 2C -> C, 3x3
    nn::ParameterPtr next_w, next_b;      // linear C -> C feeding the next block's radar input

    static BsfBlockState create(nn::ParamStore& store, const DefAttnConfig& cfg,
                                const std::string& prefix) {
        BsfBlockState s;
        s.r2i = FusionParams::create(store, cfg, prefix + ".r2i");
        s.i2r = FusionParams::create(store, cfg, prefix + ".i2r");
        const int c = cfg.channels;
        s.fuse_w = store.create(prefix + ".fuse.w", {c, 2 * c, 3, 3}, 2 * c * 9);
        s.fuse_b = store.create(prefix + ".fuse.b", {c}, 2 * c * 9);
        s.next_w = store.create(prefix + ".next.w", {c, c}, c);
        s.next_b = store.create(prefix + ".next.b", {c}, c);
        return s;
    }
};

struct BsfBlockOut {
    TensorPtr f_out;     // fused camera-side output
    TensorPtr f_r_next;  // radar input for the next block
};

inline BsfBlockOut bsf_block(nn::Tape* tape, const TensorPtr& f_c, const TensorPtr& f_r,
                             const TensorPtr& mask, const DefAttnConfig& cfg,
                             const BsfBlockState& state, const TensorPtr& pos_rows,
                             const std::shared_ptr<std::vector<double>>& base) {
    const int h = f_c->dim(1), w = f_c->dim(2);
    auto r2i_out = fusion_pass(tape, f_c, f_r, mask, cfg, state.r2i, pos_rows, base);
    auto i2r_out = fusion_pass(tape, f_r, f_c, mask, cfg, state.i2r, pos_rows, base);
    BsfBlockOut out;
    auto cat = nn::concat_channels(tape, r2i_out, i2r_out);
    out.f_out = nn::conv2d(tape, cat, state.fuse_w->tensor, state.fuse_b->tensor, 1);
    auto next = nn::linear(tape, nn::to_rows(tape, i2r_out), state.next_w->tensor,
                           state.next_b->tensor);
    out.f_r_next = nn::to_map(tape, next, h, w);
    return out;
}

class BsfStack {
public:
    BsfStack() = default;
    BsfStack(nn::ParamStore& store, const DefAttnConfig& cfg, int h, int w, int n_blocks = 3,
             const std::string& prefix = "bsf") {
        cfg.validate();
        cfg_ = cfg;
        for (int i = 0; i < n_blocks; ++i)
            blocks_.push_back(BsfBlockState::create(store, cfg, prefix + ".b" + std::to_string(i)));
        pos_rows_ = sinusoidal_pos_rows(cfg.channels, h, w);
        base_ = grid_base_points(h, w);
    }

    // Block i consumes block i-1's f_out as camera input and f_r_next as
    // radar input; the first block consumes the stream features directly.
    TensorPtr run(nn::Tape* tape, const TensorPtr& f_c, const TensorPtr& f_r,
                  const TensorPtr& mask) const {
        TensorPtr cam = f_c, rad = f_r;
        TensorPtr out;
        for (const auto& block : blocks_) {
            auto res = bsf_block(tape, cam, rad, mask, cfg_, block, pos_rows_, base_);
            out = res.f_out;
            cam = res.f_out;
            rad = res.f_r_next;
        }
        return out;
    }

    BsfBlockOut run_block(nn::Tape* tape, int i, const TensorPtr& f_c, const TensorPtr& f_r,
                          const TensorPtr& mask) const {
        return bsf_block(tape, f_c, f_r, mask, cfg_, blocks_.at(static_cast<size_t>(i)), pos_rows_,
                         base_);
    }

    const DefAttnConfig& config() const { return cfg_; }
    int n_blocks() const { return static_cast<int>(blocks_.size()); }
    const TensorPtr& pos_rows() const { return pos_rows_; }
    const std::shared_ptr<std::vector<double>>& base_points() const { return base_; }
    const std::vector<BsfBlockState>& blocks() const { return blocks_; }

private:
    DefAttnConfig cfg_;
    std::vector<BsfBlockState> blocks_;
    TensorPtr pos_rows_;
    std::shared_ptr<std::vector<double>> base_;
};

}  // namespace placefuse::bsf
