#pragma once

// One place observation: multi-view images with raycast depth, a radar sweep
// set, and the ground-truth pose used for metric evaluation.

#include <string>

#include "placefuse/camera/camera.hpp"
#include "placefuse/radar/radar.hpp"

namespace placefuse::data {

enum class Split { Database, TrainQuery, ValQuery, TestQuery };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::Database: return "database";
        case Split::TrainQuery: return "train_query";
        case Split::ValQuery: return "val_query";
        case Split::TestQuery: return "test_query";
    }
    return "?";
}

inline Split split_from_name(const std::string& s) {
    if (s == "database") return Split::Database;
    if (s == "train_query") return Split::TrainQuery;
    if (s == "val_query") return Split::ValQuery;
    if (s == "test_query") return Split::TestQuery;
    throw std::runtime_error("manifest: unknown split '" + s + "'");
}

struct PlaceSample {
    std::string id;
    cam::MultiViewImages images;
    radar::RadarSweepSet radar;
    double x = 0, y = 0;  // world position, meters
    double yaw = 0;
    Split split = Split::Database;
    int place_index = -1;  // generator-side ground truth, not used by models
};

}  // namespace placefuse::data
