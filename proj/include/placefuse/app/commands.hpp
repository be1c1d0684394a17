#pragma once

// Command layer shared by the CLI and the test suites: synthetic dataset
// generation, training, evaluation with ablation switches, single-sample
// retrieval and mask export.

#include <iostream>

#include "placefuse/app/config.hpp"
#include "placefuse/data/dataset.hpp"
#include "placefuse/nn/checkpoint.hpp"
#include "placefuse/train/eval.hpp"

namespace placefuse::app {

namespace fs = std::filesystem;

struct SynthStats {
    int database = 0, train_query = 0, val_query = 0, test_query = 0;
};

inline SynthStats run_synth(const RunConfig& cfg, const std::string& out_dir, bool force,
                            bool quiet = false) {
    cfg.validate();
    if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !force)
        throw std::runtime_error("synth: output directory '" + out_dir +
                                 "' is not empty (use --force to overwrite)");
    const auto world = synth::build_world_with_dynamics(cfg.world_config(), cfg.seed);
    const auto splits = synth::build_splits(world, cfg.revisit_spec(), cfg.render_config(), cfg.seed);
    const auto rig = synth::make_rig(cfg.render_config());
    data::write_dataset(out_dir, splits, rig, cfg.seed);
    SynthStats stats{static_cast<int>(splits.database.size()),
                     static_cast<int>(splits.train_query.size()),
                     static_cast<int>(splits.val_query.size()),
                     static_cast<int>(splits.test_query.size())};
    if (!quiet)
        std::cout << "synth: database=" << stats.database << " train_query=" << stats.train_query
                  << " val_query=" << stats.val_query << " test_query=" << stats.test_query
                  << " -> " << out_dir << "\n";
    return stats;
}

struct TrainOutputs {
    std::string checkpoint_path;
    std::string loss_csv_path;
    train::TrainResult result;
};

inline TrainOutputs run_train(const RunConfig& cfg, const std::string& data_dir,
                              const std::string& out_dir, bool quiet = false) {
    cfg.validate();
    const auto ds = data::load_dataset(data_dir);
    model::PlaceModel m(cfg.model_config(), cfg.seed);
    const auto result = train::train(m, ds.rig, ds.splits.train_query, ds.splits.database,
                                     cfg.train_config());
    fs::create_directories(out_dir);
    TrainOutputs out;
    out.checkpoint_path = (fs::path(out_dir) / "checkpoint.bin").string();
    out.loss_csv_path = (fs::path(out_dir) / "loss.csv").string();
    nn::save_checkpoint(out.checkpoint_path, m.params(), cfg.config_hash());
    train::write_loss_csv(out.loss_csv_path, result);
    out.result = result;
    if (!quiet) {
        for (size_t e = 0; e < result.epochs.size(); ++e)
            std::cout << "epoch " << e << ": loss=" << result.epochs[e].mean_loss
                      << " lr=" << result.epochs[e].lr << " r=" << result.epochs[e].r_value
                      << " skipped=" << result.epochs[e].skipped_no_positive << "\n";
        std::cout << "train: wrote " << out.checkpoint_path << "\n";
    }
    return out;
}

struct EvalOutputs {
    train::EvalReport report;
    std::string report_path;
    std::string pr_csv_path;
};

inline EvalOutputs run_eval(const RunConfig& cfg, const std::string& data_dir,
                            const std::string& checkpoint, const std::string& mode_override,
                            const std::string& out_dir, bool zero_radar = false,
                            bool quiet = false) {
    cfg.validate();
    RunConfig effective = cfg;
    if (!mode_override.empty()) effective.model_mode = mode_override;
    const auto ds = data::load_dataset(data_dir);
    model::PlaceModel m(effective.model_config(), effective.seed);
    nn::load_checkpoint(checkpoint, m.params(), effective.config_hash());
    const auto& queries = ds.split(data::split_from_name(effective.eval_split));
    if (queries.empty())
        throw std::runtime_error("eval: split '" + effective.eval_split + "' is empty");
    auto report = train::evaluate(m, ds.rig, ds.splits.database, queries, effective.top_ns(),
                                  effective.eval_success_radius, zero_radar);
    EvalOutputs out;
    out.report = report;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        out.report_path = (fs::path(out_dir) / "report.json").string();
        out.pr_csv_path = (fs::path(out_dir) / "pr.csv").string();
        train::write_report_json(out.report_path, report, effective.model_mode);
        train::write_pr_csv(out.pr_csv_path, report);
    }
    if (!quiet) {
        std::cout << "eval(" << effective.model_mode << (zero_radar ? ",camera-only" : "") << "):";
        for (const auto& [n, r] : report.recall_at) std::cout << " recall@" << n << "=" << r;
        std::cout << " max_f1=" << report.max_f1 << " ap=" << report.ap << "\n";
    }
    return out;
}

inline void run_query(const RunConfig& cfg, const std::string& data_dir,
                      const std::string& checkpoint, const std::string& sample_id, int top_n) {
    cfg.validate();
    const auto ds = data::load_dataset(data_dir);
    const auto* sample = ds.find(sample_id);
    if (!sample) throw std::runtime_error("query: unknown sample id '" + sample_id + "'");
    model::PlaceModel m(cfg.model_config(), cfg.seed);
    nn::load_checkpoint(checkpoint, m.params(), cfg.config_hash());

    const int dim = m.config().channels * m.config().descriptor.k_radial *
                    m.config().descriptor.k_angular;
    desc::DescriptorDatabase db(dim);
    for (const auto& s : ds.splits.database) db.add(m.describe(s, ds.rig), s.x, s.y, s.id);
    const auto ranked = db.match(m.describe(*sample, ds.rig), top_n);
    std::cout << "query " << sample_id << " at (" << sample->x << ", " << sample->y << ")\n";
    for (size_t r = 0; r < ranked.size(); ++r) {
        const auto& pos = db.position(ranked[r].index);
        const double err = std::hypot(pos.first - sample->x, pos.second - sample->y);
        std::cout << "  " << (r + 1) << ". " << db.id(ranked[r].index)
                  << " dist=" << ranked[r].distance << " pos=(" << pos.first << ", " << pos.second
                  << ") err=" << err << " m" << (err <= cfg.eval_success_radius ? " *" : "")
                  << "\n";
    }
}

inline void run_export_mask(const RunConfig& cfg, const std::string& data_dir,
                            const std::string& checkpoint, const std::string& sample_id,
                            const std::string& out_path) {
    cfg.validate();
    const auto ds = data::load_dataset(data_dir);
    const auto* sample = ds.find(sample_id);
    if (!sample) throw std::runtime_error("export-mask: unknown sample id '" + sample_id + "'");
    model::PlaceModel m(cfg.model_config(), cfg.seed);
    if (!checkpoint.empty()) nn::load_checkpoint(checkpoint, m.params(), cfg.config_hash());

    auto points = radar::accumulate_sweeps(sample->radar);
    auto split = radar::split_dynamic(points, cfg.radar_v_thresh, cfg.moving_props());
    const auto cells = bamg::dynamic_voxel_grid(split.dynamic, m.config().grid);
    auto mask = bamg::generate_mask(nullptr, cells, m.radius(), bamg::MaskMode::Hard,
                                    m.config().mask_tau, m.config().grid.height,
                                    m.config().grid.width);
    bamg::write_mask_pgm(out_path, mask);
    std::cout << "export-mask: " << cells.size() << " dynamic cells, r=" << m.radius_value()
              << " cells -> " << out_path << "\n";
}

}  // namespace placefuse::app
