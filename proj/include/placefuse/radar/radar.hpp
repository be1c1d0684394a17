#pragma once

// Radar preprocessing: multi-sweep accumulation with ego motion and the
// dynamic/static split on radial velocity and the dynamic-property flag.

#include <cmath>
#include <fstream>
#include <set>
#include <vector>

#include <json.hpp>

namespace placefuse::radar {

struct RadarPoint {
    double x = 0, y = 0;    // meters, vehicle frame
    double vx = 0, vy = 0;  // m/s, ego-motion-compensated radial velocity components
    double rcs = 0;         // dBsm
    int dyn_prop = 1;       // 0 = moving, 1 = stationary (nuScenes-style categories)
    int invalid_state = 0;  // recorded, passed through
    double t = 0;           // seconds

    double speed() const { return std::hypot(vx, vy); }
};

struct Pose2D {
    double x = 0, y = 0, yaw = 0;
};

struct RadarSweep {
    Pose2D pose;  // world pose of the sensor when the sweep was taken
    std::vector<RadarPoint> points;
};

struct RadarSweepSet {
    std::vector<RadarSweep> sweeps;
    int reference_pose_index = 0;

    void validate() const {
        if (sweeps.empty()) throw std::invalid_argument("RadarSweepSet: at least one sweep required");
        if (reference_pose_index < 0 || reference_pose_index >= static_cast<int>(sweeps.size()))
            throw std::invalid_argument("RadarSweepSet: reference index out of range");
    }
};

// Transforms every sweep into the reference sweep's frame: positions through
// the relative rigid transform, velocity vectors through its rotation only.
// Timestamps are preserved.
inline std::vector<RadarPoint> accumulate_sweeps(const RadarSweepSet& set) {
    set.validate();
    const Pose2D ref = set.sweeps[static_cast<size_t>(set.reference_pose_index)].pose;
    const double cr = std::cos(ref.yaw), sr = std::sin(ref.yaw);
    std::vector<RadarPoint> out;
    size_t total = 0;
    for (const auto& s : set.sweeps) total += s.points.size();
    out.reserve(total);
    for (const auto& sweep : set.sweeps) {
        const double cs = std::cos(sweep.pose.yaw), ss = std::sin(sweep.pose.yaw);
        for (RadarPoint p : sweep.points) {
            // sweep frame -> world
            const double wx = sweep.pose.x + cs * p.x - ss * p.y;
            const double wy = sweep.pose.y + ss * p.x + cs * p.y;
            const double wvx = cs * p.vx - ss * p.vy;
            const double wvy = ss * p.vx + cs * p.vy;
            // world -> reference frame
            p.x = cr * (wx - ref.x) + sr * (wy - ref.y);
            p.y = -sr * (wx - ref.x) + cr * (wy - ref.y);
            p.vx = cr * wvx + sr * wvy;
            p.vy = -sr * wvx + cr * wvy;
            out.push_back(p);
        }
    }
    return out;
}

struct DynamicSplit {
    std::vector<RadarPoint> stationary;
    std::vector<RadarPoint> dynamic;
};

// A point is dynamic iff its radial speed exceeds v_thresh OR its dynamic
// property is one of the moving categories. Exhaustive, disjoint partition.
inline DynamicSplit split_dynamic(const std::vector<RadarPoint>& points, double v_thresh,
                                  const std::set<int>& moving_props = {0}) {
    if (v_thresh < 0.0) throw std::invalid_argument("split_dynamic: v_thresh must be >= 0");
    DynamicSplit out;
    for (const auto& p : points) {
        if (p.speed() > v_thresh || moving_props.count(p.dyn_prop))
            out.dynamic.push_back(p);
        else
            out.stationary.push_back(p);
    }
    return out;
}

// --- JSON-lines sweep file: one sweep per line ---
// {"pose":[x,y,yaw],"points":[[x,y,vx,vy,rcs,dyn_prop,invalid_state,t],...]}

inline void write_sweeps_jsonl(const std::string& path, const RadarSweepSet& set) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("radar: cannot open '" + path + "' for writing");
    for (const auto& sweep : set.sweeps) {
        nlohmann::ordered_json line;
        line["pose"] = {sweep.pose.x, sweep.pose.y, sweep.pose.yaw};
        auto& pts = line["points"] = nlohmann::json::array();
        for (const auto& p : sweep.points)
            pts.push_back({p.x, p.y, p.vx, p.vy, p.rcs, p.dyn_prop, p.invalid_state, p.t});
        os << line.dump() << '\n';
    }
}

inline RadarSweepSet read_sweeps_jsonl(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("radar: cannot open '" + path + "'");
    RadarSweepSet set;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        RadarSweep sweep;
        const auto& pose = j.at("pose");
        sweep.pose = {pose.at(0).get<double>(), pose.at(1).get<double>(), pose.at(2).get<double>()};
        for (const auto& row : j.at("points")) {
            if (row.size() != 8)
                throw std::runtime_error("radar: point row must have 8 fields in '" + path + "'");
            RadarPoint p;
            p.x = row[0].get<double>();
            p.y = row[1].get<double>();
            p.vx = row[2].get<double>();
            p.vy = row[3].get<double>();
            p.rcs = row[4].get<double>();
            p.dyn_prop = row[5].get<int>();
            p.invalid_state = row[6].get<int>();
            p.t = row[7].get<double>();
            sweep.points.push_back(p);
        }
        set.sweeps.push_back(std::move(sweep));
    }
    set.reference_pose_index = static_cast<int>(set.sweeps.size()) - 1;
    set.validate();
    return set;
}

}  // namespace placefuse::radar
