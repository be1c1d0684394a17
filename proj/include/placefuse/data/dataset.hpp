#pragma once

// On-disk dataset layout:
//   <dir>/manifest.json   sample index: id, split, pose, file paths
//   <dir>/rig.json        per-view pixel ray table
//   <dir>/images/<id>.bin [n_views, C, H, W] f32 tensor container
//   <dir>/depth/<id>.bin  [n_views, H, W] f32 tensor container
//   <dir>/radar/<id>.jsonl one sweep per line

#include <filesystem>

#include "placefuse/data/sample.hpp"
#include "placefuse/synth/splits.hpp"

namespace placefuse::data {

namespace fs = std::filesystem;

struct Dataset {
    synth::SplitSet splits;
    cam::CameraRig rig;
    std::uint64_t seed = 0;

    const std::vector<PlaceSample>& split(Split s) const {
        switch (s) {
            case Split::Database: return splits.database;
            case Split::TrainQuery: return splits.train_query;
            case Split::ValQuery: return splits.val_query;
            default: return splits.test_query;
        }
    }

    const PlaceSample* find(const std::string& id) const {
        for (const auto* v : {&splits.database, &splits.train_query, &splits.val_query,
                              &splits.test_query})
            for (const auto& s : *v)
                if (s.id == id) return &s;
        return nullptr;
    }
};

inline void write_dataset(const std::string& dir, const synth::SplitSet& splits,
                          const cam::CameraRig& rig, std::uint64_t seed) {
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "depth");
    fs::create_directories(fs::path(dir) / "radar");
    cam::write_rig_json((fs::path(dir) / "rig.json").string(), rig);

    nlohmann::ordered_json manifest;
    manifest["seed"] = seed;
    auto& samples = manifest["samples"] = nlohmann::json::array();
    auto dump = [&](const std::vector<PlaceSample>& list) {
        for (const auto& s : list) {
            const int n = s.images.n_views();
            const int c = s.images.views[0]->dim(0);
            const int h = s.images.views[0]->dim(1);
            const int w = s.images.views[0]->dim(2);
            auto imgs = nn::make_tensor({n, c, h, w});
            auto depth = nn::make_tensor({n, h, w});
            for (int v = 0; v < n; ++v) {
                std::copy(s.images.views[static_cast<size_t>(v)]->data.begin(),
                          s.images.views[static_cast<size_t>(v)]->data.end(),
                          imgs->data.begin() + static_cast<std::int64_t>(v) * c * h * w);
                std::copy(s.images.gt_depth[static_cast<size_t>(v)]->data.begin(),
                          s.images.gt_depth[static_cast<size_t>(v)]->data.end(),
                          depth->data.begin() + static_cast<std::int64_t>(v) * h * w);
            }
            const std::string img_rel = "images/" + s.id + ".bin";
            const std::string dep_rel = "depth/" + s.id + ".bin";
            const std::string rad_rel = "radar/" + s.id + ".jsonl";
            cam::write_tensor_f32((fs::path(dir) / img_rel).string(), imgs);
            cam::write_tensor_f32((fs::path(dir) / dep_rel).string(), depth);
            radar::write_sweeps_jsonl((fs::path(dir) / rad_rel).string(), s.radar);

            nlohmann::ordered_json e;
            e["id"] = s.id;
            e["split"] = split_name(s.split);
            e["pose"] = {s.x, s.y, s.yaw};
            e["place_index"] = s.place_index;
            e["images"] = img_rel;
            e["depth"] = dep_rel;
            e["radar"] = rad_rel;
            samples.push_back(e);
        }
    };
    dump(splits.database);
    dump(splits.train_query);
    dump(splits.val_query);
    dump(splits.test_query);

    std::ofstream os((fs::path(dir) / "manifest.json").string());
    if (!os) throw std::runtime_error("dataset: cannot write manifest in '" + dir + "'");
    os << manifest.dump(1) << "\n";
}

namespace detail {

template <typename T>
T manifest_field(const nlohmann::json& j, const char* key) {
    if (!j.contains(key))
        throw std::runtime_error(std::string("manifest: missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw std::runtime_error(std::string("manifest: malformed field '") + key + "'");
    }
}

}  // namespace detail

inline Dataset load_dataset(const std::string& dir) {
    const auto manifest_path = fs::path(dir) / "manifest.json";
    std::ifstream is(manifest_path.string());
    if (!is) throw std::runtime_error("dataset: cannot open '" + manifest_path.string() + "'");
    nlohmann::json manifest;
    try {
        is >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("manifest: parse error: " + std::string(e.what()));
    }
    Dataset ds;
    ds.seed = detail::manifest_field<std::uint64_t>(manifest, "seed");
    ds.rig = cam::read_rig_json((fs::path(dir) / "rig.json").string());
    for (const auto& e : detail::manifest_field<nlohmann::json>(manifest, "samples")) {
        PlaceSample s;
        s.id = detail::manifest_field<std::string>(e, "id");
        s.split = split_from_name(detail::manifest_field<std::string>(e, "split"));
        const auto pose = detail::manifest_field<std::vector<double>>(e, "pose");
        if (pose.size() != 3) throw std::runtime_error("manifest: malformed field 'pose'");
        s.x = pose[0];
        s.y = pose[1];
        s.yaw = pose[2];
        s.place_index = detail::manifest_field<int>(e, "place_index");

        auto imgs = cam::read_tensor_f32(
            (fs::path(dir) / detail::manifest_field<std::string>(e, "images")).string());
        auto depth = cam::read_tensor_f32(
            (fs::path(dir) / detail::manifest_field<std::string>(e, "depth")).string());
        if (imgs->rank() != 4 || depth->rank() != 3)
            throw std::runtime_error("dataset: unexpected tensor rank for sample '" + s.id + "'");
        const int n = imgs->dim(0), c = imgs->dim(1), h = imgs->dim(2), w = imgs->dim(3);
        for (int v = 0; v < n; ++v) {
            auto img = nn::make_tensor({c, h, w});
            std::copy_n(imgs->data.begin() + static_cast<std::int64_t>(v) * c * h * w,
                        static_cast<std::int64_t>(c) * h * w, img->data.begin());
            s.images.views.push_back(img);
            auto d = nn::make_tensor({h, w});
            std::copy_n(depth->data.begin() + static_cast<std::int64_t>(v) * h * w,
                        static_cast<std::int64_t>(h) * w, d->data.begin());
            s.images.gt_depth.push_back(d);
        }
        s.radar = radar::read_sweeps_jsonl(
            (fs::path(dir) / detail::manifest_field<std::string>(e, "radar")).string());
        ds.splits.of(s.split).push_back(std::move(s));
    }
    if (ds.splits.database.empty()) throw std::runtime_error("dataset: database split is empty");
    return ds;
}

}  // namespace placefuse::data
