#pragma once

// Metric-learning training loop: seeded shuffling, triplet mining against
// the database split, combined triplet + depth loss, momentum SGD with
// stepwise decay, per-epoch statistics.

#include "placefuse/camera/stream.hpp"
#include "placefuse/model.hpp"
#include "placefuse/nn/sgd.hpp"
#include "placefuse/train/triplet.hpp"

namespace placefuse::train {

struct TrainConfig {
    nn::SgdConfig sgd{};
    int epochs = 20;
    int batch = 4;  // triplet tuples per optimizer step
    TripletSpec triplet{};
    double depth_loss_weight = 0.05;
    std::uint64_t seed = 7;
};

struct EpochStats {
    double mean_loss = 0.0;
    double lr = 0.0;
    double r_value = 0.0;
    int tuples = 0;
    int skipped_no_positive = 0;
};

// One pass over the train queries in seeded-shuffled order, stepping the
// optimizer after every `batch` tuples. Loss per tuple: triplet margin loss
// on the descriptors plus the weighted mean depth loss over its members.
inline EpochStats train_epoch(model::PlaceModel& m, const cam::CameraRig& rig,
                              const std::vector<data::PlaceSample>& train_queries,
                              const std::vector<data::PlaceSample>& db,
                              const TrainConfig& cfg, int epoch) {
    cfg.sgd.validate();
    cfg.triplet.validate();
    EpochStats stats;
    stats.lr = nn::effective_lr(cfg.sgd, epoch);
    const auto active = m.active_params(m.config().mode);

    std::vector<int> order(train_queries.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    nn::Rng shuffle_rng(cfg.seed ^ nn::fnv1a64("epoch" + std::to_string(epoch)));
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    long double loss_acc = 0.0L;
    int in_batch = 0;
    auto maybe_step = [&](bool force) {
        if (in_batch == 0) return;
        if (in_batch < cfg.batch && !force) return;
        for (const auto& p : active) p->tensor->ensure_grad();
        nn::sgd_step(active, cfg.sgd, epoch);
        m.clamp_radius();
        in_batch = 0;
    };

    for (int qi : order) {
        const auto& query = train_queries[static_cast<size_t>(qi)];
        const std::uint64_t mine_seed =
            cfg.seed ^ nn::fnv1a64("mine." + std::to_string(epoch) + "." + query.id);
        std::optional<desc::PlaceDescriptor> q_cache;
        auto dist_fn = [&](int db_idx) {
            if (!q_cache) q_cache = m.describe(query, rig);
            const auto pd = m.describe(db[static_cast<size_t>(db_idx)], rig);
            long double acc = 0.0L;
            for (size_t j = 0; j < q_cache->values.size(); ++j) {
                const double d = q_cache->values[j] - pd.values[j];
                acc += static_cast<long double>(d) * d;
            }
            return std::sqrt(static_cast<double>(acc));
        };
        std::optional<Triplet> triplet;
        triplet = mine_triplets(query, db, cfg.triplet, mine_seed,
                                cfg.triplet.positive_rule == PositiveRule::Descriptor
                                    ? std::function<double(int)>(dist_fn)
                                    : nullptr);
        if (!triplet) {
            ++stats.skipped_no_positive;
            continue;
        }

        nn::Tape tape;
        std::vector<nn::TensorPtr> depth_losses;
        auto member_forward = [&](const data::PlaceSample& s) {
            auto res = m.forward(&tape, s, rig, bamg::MaskMode::Soft);
            if (!res.gt_depths.empty() && cfg.depth_loss_weight > 0.0) {
                auto dl = cam::depth_loss(&tape, res.logit_rows, res.gt_depths, m.config().bins);
                depth_losses.push_back(dl.loss);
            }
            return res.descriptor.tensor;
        };
        auto q_desc = member_forward(query);
        auto p_desc = member_forward(db[static_cast<size_t>(triplet->positive)]);
        std::vector<nn::TensorPtr> n_descs;
        for (int ni : triplet->negatives)
            n_descs.push_back(member_forward(db[static_cast<size_t>(ni)]));

        auto loss = triplet_loss(&tape, q_desc, p_desc, n_descs, cfg.triplet.margin);
        if (!depth_losses.empty()) {
            nn::TensorPtr dsum = depth_losses[0];
            for (size_t i = 1; i < depth_losses.size(); ++i)
                dsum = nn::add(&tape, dsum, depth_losses[i]);
            loss = nn::add(&tape, loss,
                           nn::scale(&tape, dsum,
                                     cfg.depth_loss_weight / static_cast<double>(depth_losses.size())));
        }
        loss_acc += loss->data[0];
        ++stats.tuples;
        tape.backward(loss);
        ++in_batch;
        maybe_step(false);
    }
    maybe_step(true);

    stats.mean_loss = stats.tuples ? static_cast<double>(loss_acc / stats.tuples) : 0.0;
    stats.r_value = m.radius_value();
    return stats;
}

struct TrainResult {
    std::vector<EpochStats> epochs;
};

inline TrainResult train(model::PlaceModel& m, const cam::CameraRig& rig,
                         const std::vector<data::PlaceSample>& train_queries,
                         const std::vector<data::PlaceSample>& db, const TrainConfig& cfg) {
    TrainResult out;
    for (int e = 0; e < cfg.epochs; ++e)
        out.epochs.push_back(train_epoch(m, rig, train_queries, db, cfg, e));
    return out;
}

inline void write_loss_csv(const std::string& path, const TrainResult& result) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("train: cannot open '" + path + "' for writing");
    os << "epoch,mean_loss,lr,r_value\n";
    char buf[160];
    for (size_t e = 0; e < result.epochs.size(); ++e) {
        const auto& s = result.epochs[e];
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", e, s.mean_loss, s.lr, s.r_value);
        os << buf;
    }
}

}  // namespace placefuse::train
