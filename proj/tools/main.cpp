// placefuse command line: synthetic dataset generation, training,
// evaluation with ablation switches, single-sample retrieval, mask export.

#include <CLI11.hpp>

#include "placefuse/app/commands.hpp"

namespace {

placefuse::app::RunConfig load_or_default(const std::string& config_path, bool seed_set,
                                          std::uint64_t seed) {
    auto cfg = config_path.empty() ? placefuse::app::RunConfig{}
                                   : placefuse::app::load_config(config_path);
    if (seed_set) cfg.seed = seed;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App cli{"camera-radar BEV fusion place recognition"};
    cli.require_subcommand(1);

    std::string config_path, out_dir, data_dir, checkpoint, mode, sample_id, mask_out;
    std::uint64_t seed = 0;
    bool force = false;
    int top_n = 5;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "config file (key=value)");
        cmd->add_option("--seed", seed, "override the config seed");
    };

    auto* synth = cli.add_subcommand("synth", "generate a synthetic dataset");
    add_common(synth);
    synth->add_option("--out", out_dir, "output dataset directory");
    synth->add_flag("--force", force, "overwrite a non-empty output directory");

    auto* train = cli.add_subcommand("train", "train a model on a dataset");
    add_common(train);
    train->add_option("--data", data_dir, "dataset directory");
    train->add_option("--out", out_dir, "run output directory");

    auto* eval = cli.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval);
    eval->add_option("--data", data_dir, "dataset directory");
    eval->add_option("--checkpoint", checkpoint, "checkpoint file");
    eval->add_option("--mode", mode, "full|no_bamg|no_bsf|neither");
    eval->add_option("--out", out_dir, "directory for report.json and pr.csv");

    auto* query = cli.add_subcommand("query", "top-N retrieval for one sample");
    add_common(query);
    query->add_option("--data", data_dir, "dataset directory");
    query->add_option("--checkpoint", checkpoint, "checkpoint file");
    query->add_option("--id", sample_id, "sample id")->required();
    query->add_option("--top", top_n, "number of candidates");

    auto* exmask = cli.add_subcommand("export-mask", "write a sample's background mask as PGM");
    add_common(exmask);
    exmask->add_option("--data", data_dir, "dataset directory");
    exmask->add_option("--checkpoint", checkpoint, "checkpoint file (optional, for the learned r)");
    exmask->add_option("--id", sample_id, "sample id")->required();
    exmask->add_option("--out", mask_out, "output PGM path");

    CLI11_PARSE(cli, argc, argv);

    try {
        const bool seed_set = cli.count_all() && (synth->count("--seed") || train->count("--seed") ||
                                                  eval->count("--seed") || query->count("--seed") ||
                                                  exmask->count("--seed"));
        auto cfg = load_or_default(config_path, seed_set, seed);
        if (synth->parsed()) {
            placefuse::app::run_synth(cfg, out_dir.empty() ? cfg.paths_data : out_dir, force);
        } else if (train->parsed()) {
            placefuse::app::run_train(cfg, data_dir.empty() ? cfg.paths_data : data_dir,
                                      out_dir.empty() ? cfg.paths_out : out_dir);
        } else if (eval->parsed()) {
            const auto ckpt = checkpoint.empty()
                                  ? (std::filesystem::path(cfg.paths_out) / "checkpoint.bin").string()
                                  : checkpoint;
            placefuse::app::run_eval(cfg, data_dir.empty() ? cfg.paths_data : data_dir, ckpt, mode,
                                     out_dir.empty() ? cfg.paths_out : out_dir);
        } else if (query->parsed()) {
            const auto ckpt = checkpoint.empty()
                                  ? (std::filesystem::path(cfg.paths_out) / "checkpoint.bin").string()
                                  : checkpoint;
            placefuse::app::run_query(cfg, data_dir.empty() ? cfg.paths_data : data_dir, ckpt,
                                      sample_id, top_n);
        } else if (exmask->parsed()) {
            placefuse::app::run_export_mask(cfg, data_dir.empty() ? cfg.paths_data : data_dir,
                                            checkpoint, sample_id,
                                            mask_out.empty() ? "mask.pgm" : mask_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
