#pragma once

// Retrieval evaluation: Recall@N, the precision-recall curve from a sweep
// over the top-1 descriptor distance, max F1 and interpolated average
// precision.

#include <fstream>
#include <map>

#include <json.hpp>

#include "placefuse/descriptor/descriptor.hpp"
#include "placefuse/model.hpp"

namespace placefuse::train {

struct PrPoint {
    double threshold;
    double precision;
    double recall;
};

struct EvalReport {
    std::map<int, double> recall_at;  // percentage in [0,100]
    std::vector<PrPoint> pr_points;
    double max_f1 = 0.0;
    double ap = 0.0;
    double d_success = 9.0;
    int num_queries = 0;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        for (const auto& [n, r] : recall_at) j["recall@" + std::to_string(n)] = r;
        j["max_f1"] = max_f1;
        j["ap"] = ap;
        j["d_success"] = d_success;
        j["num_queries"] = num_queries;
        return j;
    }
};

// One query's retrieval outcome, sufficient for every metric.
struct QueryOutcome {
    double top1_distance = 0.0;
    bool top1_correct = false;                // top-1 within d of the true position
    std::map<int, bool> success_at;           // any of top-N within d
    bool has_geometric_match = true;          // a correct answer exists in the database
};

// Metrics from raw outcomes. The PR curve declares a query positive iff its
// top-1 distance is at or below the threshold; thresholds sweep the distinct
// top-1 distances. Recall divides by the number of queries with a geometric
// match; AP is the area under the all-points interpolated curve.
inline EvalReport compute_metrics(std::vector<QueryOutcome> outcomes, double d_success) {
    EvalReport rep;
    rep.d_success = d_success;
    rep.num_queries = static_cast<int>(outcomes.size());
    if (outcomes.empty()) return rep;

    if (!outcomes.front().success_at.empty())
        for (const auto& [n, _] : outcomes.front().success_at) rep.recall_at[n] = 0.0;
    for (const auto& o : outcomes)
        for (const auto& [n, ok] : o.success_at)
            if (ok) rep.recall_at[n] += 1.0;
    for (auto& [n, r] : rep.recall_at) r = 100.0 * r / rep.num_queries;

    int gtp = 0;
    for (const auto& o : outcomes) gtp += o.has_geometric_match ? 1 : 0;
    if (gtp == 0) return rep;

    std::stable_sort(outcomes.begin(), outcomes.end(),
                     [](const QueryOutcome& a, const QueryOutcome& b) {
                         return a.top1_distance < b.top1_distance;
                     });
    int tp = 0;
    size_t i = 0;
    while (i < outcomes.size()) {
        const double thr = outcomes[i].top1_distance;
        // admit every query tied at this threshold
        while (i < outcomes.size() && outcomes[i].top1_distance == thr) {
            tp += outcomes[i].top1_correct ? 1 : 0;
            ++i;
        }
        const double precision = static_cast<double>(tp) / static_cast<double>(i);
        const double recall = static_cast<double>(tp) / gtp;
        rep.pr_points.push_back({thr, precision, recall});
    }

    for (const auto& pt : rep.pr_points) {
        const double denom = pt.precision + pt.recall;
        if (denom > 0) rep.max_f1 = std::max(rep.max_f1, 2.0 * pt.precision * pt.recall / denom);
    }
    // all-points interpolation: precision envelope from the high-recall end
    double prev_recall = 0.0, ap = 0.0;
    std::vector<double> envelope(rep.pr_points.size());
    double running = 0.0;
    for (size_t k = rep.pr_points.size(); k-- > 0;) {
        running = std::max(running, rep.pr_points[k].precision);
        envelope[k] = running;
    }
    for (size_t k = 0; k < rep.pr_points.size(); ++k) {
        ap += (rep.pr_points[k].recall - prev_recall) * envelope[k];
        prev_recall = rep.pr_points[k].recall;
    }
    rep.ap = ap;
    return rep;
}

// Builds the descriptor database from the database split and evaluates every
// query by exact nearest-neighbor retrieval.
inline EvalReport evaluate(const model::PlaceModel& m, const cam::CameraRig& rig,
                           const std::vector<data::PlaceSample>& db_samples,
                           const std::vector<data::PlaceSample>& queries,
                           const std::vector<int>& top_ns, double d_success,
                           bool zero_radar = false,
                           desc::DescriptorDatabase* out_db = nullptr) {
    if (db_samples.empty()) throw std::runtime_error("evaluate: database split is empty");
    int max_n = 1;
    for (int n : top_ns) max_n = std::max(max_n, n);

    const int dim = m.config().channels * m.config().descriptor.k_radial *
                    m.config().descriptor.k_angular;
    desc::DescriptorDatabase db(dim);
    for (const auto& s : db_samples) db.add(m.describe(s, rig, zero_radar), s.x, s.y, s.id);

    std::vector<QueryOutcome> outcomes;
    outcomes.reserve(queries.size());
    for (const auto& q : queries) {
        const auto qd = m.describe(q, rig, zero_radar);
        const auto ranked = db.match(qd, max_n);
        QueryOutcome o;
        auto within = [&](int idx) {
            const auto& pos = db.position(idx);
            return std::hypot(pos.first - q.x, pos.second - q.y) <= d_success;
        };
        o.top1_distance = ranked.front().distance;
        o.top1_correct = within(ranked.front().index);
        for (int n : top_ns) {
            bool ok = false;
            for (int r = 0; r < std::min<int>(n, static_cast<int>(ranked.size())); ++r)
                ok = ok || within(ranked[static_cast<size_t>(r)].index);
            o.success_at[n] = ok;
        }
        o.has_geometric_match = false;
        for (const auto& s : db_samples)
            if (std::hypot(s.x - q.x, s.y - q.y) <= d_success) {
                o.has_geometric_match = true;
                break;
            }
        outcomes.push_back(std::move(o));
    }
    if (out_db) *out_db = std::move(db);
    return compute_metrics(std::move(outcomes), d_success);
}

inline void write_report_json(const std::string& path, const EvalReport& rep,
                              const std::string& mode_label) {
    auto j = rep.to_json();
    j["mode"] = mode_label;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("eval: cannot open '" + path + "' for writing");
    os << j.dump(2) << "\n";
}

inline void write_pr_csv(const std::string& path, const EvalReport& rep) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("eval: cannot open '" + path + "' for writing");
    os << "threshold,precision,recall\n";
    char buf[128];
    for (const auto& p : rep.pr_points) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", p.threshold, p.precision, p.recall);
        os << buf;
    }
}

}  // namespace placefuse::train
