#pragma once

// Run configuration: flat key=value text with dotted section prefixes.
// Unknown keys are rejected; values are validated before any work starts.

#include <fstream>
#include <map>
#include <sstream>

#include "placefuse/model.hpp"
#include "placefuse/synth/splits.hpp"
#include "placefuse/train/trainer.hpp"

namespace placefuse::app {

struct RunConfig {
    std::uint64_t seed = 7;

    std::string paths_data = "data";
    std::string paths_out = "out";

    double grid_x_min = -51.2, grid_x_max = 51.2;
    double grid_y_min = -51.2, grid_y_max = 51.2;
    double grid_z_min = -10.0, grid_z_max = 10.0;
    double grid_cell_size = 0.8;

    int polar_n_radial = 64, polar_n_angular = 128;
    double polar_max_radius = 51.2;

    int model_channels = 32, model_heads = 4, model_points = 4, model_blocks = 3;
    double model_offset_init_scale = 0.1;
    bool model_layer_norm = true;
    int model_cam_hidden = 8;
    std::string model_mode = "full";

    // synthetic default 32x64 views; the format supports full-scale frames
    // (e.g. 256x704) unchanged
    int camera_n_views = 6, camera_image_h = 32, camera_image_w = 64;
    int camera_depth_bins = 32;
    double camera_depth_min = 1.0, camera_depth_max = 51.2;

    double radar_v_thresh = 0.5;
    std::string radar_moving_dynprops = "0";
    int radar_max_points_per_pillar = 16;

    int desc_k_radial = 16, desc_k_angular = 16;
    bool desc_normalize = true;
    int desc_dft_axes = 2;

    double bamg_r_init = 0.5, bamg_r_min = 0.05, bamg_r_max = 8.0, bamg_tau = 0.25;

    double train_lr = 0.001, train_momentum = 0.9, train_weight_decay = 0.001;
    double train_lr_decay = 0.5;
    int train_lr_decay_every = 5;
    int train_epochs = 20, train_batch = 4, train_k_negatives = 10;
    double train_margin = 0.1, train_pos_radius = 9.0, train_neg_radius = 18.0;
    double train_depth_loss_weight = 0.05;
    std::string train_positive_rule = "descriptor";

    int synth_n_places = 50, synth_revisits_per_place = 2;
    double synth_heading_jitter = M_PI, synth_position_jitter = 2.0;
    bool synth_dynamic_resample = true;
    double synth_noise_level = 0.02;
    bool synth_rain_mode = false;
    int synth_n_static = 260, synth_n_dynamic = 18;
    double synth_bounds = 120.0, synth_min_place_separation = 20.0;
    int synth_radar_rays = 256, synth_n_sweeps = 6;
    double synth_sweep_dt = 0.1, synth_ego_speed = 1.5;

    std::string eval_split = "test_query";
    std::string eval_top_ns = "1,5,10";
    double eval_success_radius = 9.0;

    // ---- derived views ----

    geo::BevGridSpec grid() const {
        return geo::BevGridSpec::from_ranges(grid_x_min, grid_x_max, grid_y_min, grid_y_max,
                                             grid_z_min, grid_z_max, grid_cell_size);
    }

    geo::PolarGridSpec polar() const {
        geo::PolarGridSpec p;
        p.n_radial = polar_n_radial;
        p.n_angular = polar_n_angular;
        p.max_radius = polar_max_radius;
        p.validate();
        return p;
    }

    std::set<int> moving_props() const {
        std::set<int> out;
        std::stringstream ss(radar_moving_dynprops);
        std::string tok;
        while (std::getline(ss, tok, ','))
            if (!tok.empty()) out.insert(std::stoi(tok));
        return out;
    }

    std::vector<int> top_ns() const {
        std::vector<int> out;
        std::stringstream ss(eval_top_ns);
        std::string tok;
        while (std::getline(ss, tok, ','))
            if (!tok.empty()) out.push_back(std::stoi(tok));
        if (out.empty()) throw std::invalid_argument("config: eval.top_ns is empty");
        return out;
    }

    model::ModelConfig model_config() const {
        model::ModelConfig m;
        m.channels = model_channels;
        m.n_heads = model_heads;
        m.n_points = model_points;
        m.offset_init_scale = model_offset_init_scale;
        m.layer_norm = model_layer_norm;
        m.n_blocks = model_blocks;
        m.cam_hidden = model_cam_hidden;
        m.bins = cam::DepthBins{camera_depth_bins, camera_depth_min, camera_depth_max};
        m.bins.validate();
        m.grid = grid();
        m.polar = polar();
        m.descriptor.k_radial = desc_k_radial;
        m.descriptor.k_angular = desc_k_angular;
        m.descriptor.normalize = desc_normalize;
        m.descriptor.dft_axes = desc_dft_axes;
        m.descriptor.validate(m.polar);
        m.r_init = bamg_r_init;
        m.r_min = bamg_r_min;
        m.r_max = bamg_r_max;
        m.mask_tau = bamg_tau;
        m.v_thresh = radar_v_thresh;
        m.moving_dynprops = moving_props();
        m.max_points_per_pillar = radar_max_points_per_pillar;
        m.mode = model::mode_from_name(model_mode);
        return m;
    }

    train::TrainConfig train_config() const {
        train::TrainConfig t;
        t.sgd.lr = train_lr;
        t.sgd.momentum = train_momentum;
        t.sgd.weight_decay = train_weight_decay;
        t.sgd.decay_factor = train_lr_decay;
        t.sgd.decay_every_epochs = train_lr_decay_every;
        t.sgd.validate();
        t.epochs = train_epochs;
        t.batch = train_batch;
        t.triplet.pos_radius = train_pos_radius;
        t.triplet.neg_radius = train_neg_radius;
        t.triplet.k_negatives = train_k_negatives;
        t.triplet.margin = train_margin;
        if (train_positive_rule == "descriptor")
            t.triplet.positive_rule = train::PositiveRule::Descriptor;
        else if (train_positive_rule == "geometric")
            t.triplet.positive_rule = train::PositiveRule::Geometric;
        else
            throw std::invalid_argument("config: train.positive_rule must be descriptor|geometric");
        t.triplet.validate();
        t.depth_loss_weight = train_depth_loss_weight;
        t.seed = seed;
        return t;
    }

    synth::WorldConfig world_config() const {
        synth::WorldConfig w;
        w.n_places = synth_n_places;
        w.n_static = synth_n_static;
        w.n_dynamic = synth_n_dynamic;
        w.bounds = synth_bounds;
        w.min_place_separation = synth_min_place_separation;
        return w;
    }

    synth::RevisitSpec revisit_spec() const {
        synth::RevisitSpec r;
        r.n_places = synth_n_places;
        r.revisits_per_place = synth_revisits_per_place;
        r.heading_jitter = synth_heading_jitter;
        r.position_jitter = synth_position_jitter;
        r.dynamic_resample = synth_dynamic_resample;
        r.noise_level = synth_noise_level;
        r.rain_mode = synth_rain_mode;
        return r;
    }

    synth::RenderConfig render_config() const {
        synth::RenderConfig r;
        r.n_views = camera_n_views;
        r.image_h = camera_image_h;
        r.image_w = camera_image_w;
        r.radar_rays = synth_radar_rays;
        r.n_sweeps = synth_n_sweeps;
        r.sweep_dt = synth_sweep_dt;
        r.ego_speed = synth_ego_speed;
        r.scale_noise_from(synth_noise_level);
        return r;
    }

    void validate() const {
        if (synth_n_places < 1) throw std::invalid_argument("config: synth.n_places must be >= 1");
        if (camera_n_views < 1 || camera_image_h < 8 || camera_image_w < 8)
            throw std::invalid_argument("config: camera dimensions too small");
        if (train_epochs < 0) throw std::invalid_argument("config: train.epochs must be >= 0");
        if (train_batch < 1) throw std::invalid_argument("config: train.batch must be >= 1");
        if (radar_v_thresh < 0) throw std::invalid_argument("config: radar.v_thresh must be >= 0");
        if (!(eval_success_radius > 0))
            throw std::invalid_argument("config: eval.success_radius must be positive");
        model_config();   // validates grid/polar/model/descriptor consistency
        train_config();   // validates optimizer and triplet spec
        top_ns();
    }

    // hash over everything a checkpoint or descriptor database depends on
    std::uint64_t config_hash() const {
        std::ostringstream os;
        os << grid_x_min << '|' << grid_x_max << '|' << grid_y_min << '|' << grid_y_max << '|'
           << grid_z_min << '|' << grid_z_max << '|' << grid_cell_size << '|' << polar_n_radial
           << '|' << polar_n_angular << '|' << polar_max_radius << '|' << model_channels << '|'
           << model_heads << '|' << model_points << '|' << model_blocks << '|'
           << model_offset_init_scale << '|' << model_layer_norm << '|' << model_cam_hidden << '|'
           << camera_n_views << '|' << camera_image_h << '|' << camera_image_w << '|'
           << camera_depth_bins << '|' << camera_depth_min << '|' << camera_depth_max << '|'
           << radar_v_thresh << '|' << radar_moving_dynprops << '|' << radar_max_points_per_pillar
           << '|' << desc_k_radial << '|' << desc_k_angular << '|' << desc_normalize << '|'
           << desc_dft_axes << '|' << bamg_r_min << '|' << bamg_r_max << '|' << bamg_tau;
        return nn::fnv1a64(os.str());
    }
};

namespace detail {

template <typename T>
void parse_value(const std::string& key, const std::string& raw, T& out) {
    std::istringstream ss(raw);
    if constexpr (std::is_same_v<T, bool>) {
        if (raw == "true" || raw == "1") {
            out = true;
            return;
        }
        if (raw == "false" || raw == "0") {
            out = false;
            return;
        }
        throw std::invalid_argument("config: key '" + key + "' expects true|false, got '" + raw + "'");
    } else if constexpr (std::is_same_v<T, std::string>) {
        out = raw;
    } else {
        ss >> out;
        char extra;
        if (ss.fail() || static_cast<bool>(ss.get(extra)))
            throw std::invalid_argument("config: key '" + key + "' has malformed value '" + raw + "'");
    }
}

}  // namespace detail

inline void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
    using detail::parse_value;
    static const std::map<std::string, std::function<void(RunConfig&, const std::string&)>>
        handlers = {
#define PF_KEY(name, field) \
    {name, [](RunConfig& c, const std::string& v) { parse_value(name, v, c.field); }}
            PF_KEY("seed", seed),
            PF_KEY("paths.data", paths_data),
            PF_KEY("paths.out", paths_out),
            PF_KEY("grid.x_min", grid_x_min),
            PF_KEY("grid.x_max", grid_x_max),
            PF_KEY("grid.y_min", grid_y_min),
            PF_KEY("grid.y_max", grid_y_max),
            PF_KEY("grid.z_min", grid_z_min),
            PF_KEY("grid.z_max", grid_z_max),
            PF_KEY("grid.cell_size", grid_cell_size),
            PF_KEY("polar.n_radial", polar_n_radial),
            PF_KEY("polar.n_angular", polar_n_angular),
            PF_KEY("polar.max_radius", polar_max_radius),
            PF_KEY("model.channels", model_channels),
            PF_KEY("model.heads", model_heads),
            PF_KEY("model.points", model_points),
            PF_KEY("model.blocks", model_blocks),
            PF_KEY("model.offset_init_scale", model_offset_init_scale),
            PF_KEY("model.layer_norm", model_layer_norm),
            PF_KEY("model.cam_hidden", model_cam_hidden),
            PF_KEY("model.mode", model_mode),
            PF_KEY("camera.n_views", camera_n_views),
            PF_KEY("camera.image_h", camera_image_h),
            PF_KEY("camera.image_w", camera_image_w),
            PF_KEY("camera.depth_bins", camera_depth_bins),
            PF_KEY("camera.depth_min", camera_depth_min),
            PF_KEY("camera.depth_max", camera_depth_max),
            PF_KEY("radar.v_thresh", radar_v_thresh),
            PF_KEY("radar.moving_dynprops", radar_moving_dynprops),
            PF_KEY("radar.max_points_per_pillar", radar_max_points_per_pillar),
            PF_KEY("desc.k_radial", desc_k_radial),
            PF_KEY("desc.k_angular", desc_k_angular),
            PF_KEY("desc.normalize", desc_normalize),
            PF_KEY("desc.dft_axes", desc_dft_axes),
            PF_KEY("bamg.r_init", bamg_r_init),
            PF_KEY("bamg.r_min", bamg_r_min),
            PF_KEY("bamg.r_max", bamg_r_max),
            PF_KEY("bamg.tau", bamg_tau),
            PF_KEY("train.lr", train_lr),
            PF_KEY("train.momentum", train_momentum),
            PF_KEY("train.weight_decay", train_weight_decay),
            PF_KEY("train.lr_decay", train_lr_decay),
            PF_KEY("train.lr_decay_every", train_lr_decay_every),
            PF_KEY("train.epochs", train_epochs),
            PF_KEY("train.batch", train_batch),
            PF_KEY("train.k_negatives", train_k_negatives),
            PF_KEY("train.margin", train_margin),
            PF_KEY("train.pos_radius", train_pos_radius),
            PF_KEY("train.neg_radius", train_neg_radius),
            PF_KEY("train.depth_loss_weight", train_depth_loss_weight),
            PF_KEY("train.positive_rule", train_positive_rule),
            PF_KEY("synth.n_places", synth_n_places),
            PF_KEY("synth.revisits_per_place", synth_revisits_per_place),
            PF_KEY("synth.heading_jitter", synth_heading_jitter),
            PF_KEY("synth.position_jitter", synth_position_jitter),
            PF_KEY("synth.dynamic_resample", synth_dynamic_resample),
            PF_KEY("synth.noise_level", synth_noise_level),
            PF_KEY("synth.rain_mode", synth_rain_mode),
            PF_KEY("synth.n_static", synth_n_static),
            PF_KEY("synth.n_dynamic", synth_n_dynamic),
            PF_KEY("synth.bounds", synth_bounds),
            PF_KEY("synth.min_place_separation", synth_min_place_separation),
            PF_KEY("synth.radar_rays", synth_radar_rays),
            PF_KEY("synth.n_sweeps", synth_n_sweeps),
            PF_KEY("synth.sweep_dt", synth_sweep_dt),
            PF_KEY("synth.ego_speed", synth_ego_speed),
            PF_KEY("eval.split", eval_split),
            PF_KEY("eval.top_ns", eval_top_ns),
            PF_KEY("eval.success_radius", eval_success_radius),
#undef PF_KEY
        };
    const auto it = handlers.find(key);
    if (it == handlers.end())
        throw std::invalid_argument("config: unknown key '" + key + "'");
    it->second(cfg, value);
}

inline RunConfig parse_config_text(std::istream& is) {
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                        " is not key=value");
        apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open '" + path + "'");
    auto cfg = parse_config_text(is);
    cfg.validate();
    return cfg;
}

}  // namespace placefuse::app
