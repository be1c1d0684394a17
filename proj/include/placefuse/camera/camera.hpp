#pragma once

// Multi-view image containers, the camera rig ray table, and the binary
// tensor file format (shape header + little-endian 32-bit floats).

#include <array>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "placefuse/nn/tensor.hpp"

namespace placefuse::cam {

struct DepthBins {
    int n_bins = 32;
    double d_min = 1.0;
    double d_max = 51.2;

    void validate() const {
        if (n_bins < 1 || !(d_max > d_min))
            throw std::invalid_argument("DepthBins: need n_bins >= 1 and d_max > d_min");
    }
    double width() const { return (d_max - d_min) / n_bins; }
    double center(int i) const { return d_min + (i + 0.5) * width(); }
    // bin containing depth d, or -1 when outside [d_min, d_max]
    int bin_of(double d) const {
        if (d < d_min || d > d_max) return -1;
        const int b = static_cast<int>((d - d_min) / width());
        return std::min(b, n_bins - 1);
    }
};

struct CameraRig {
    struct View {
        std::array<double, 2> origin{0.0, 0.0};       // vehicle frame, meters
        std::vector<std::array<double, 2>> pixel_rays;  // unit (dx,dy) per pixel, row-major
    };
    int image_h = 0, image_w = 0;
    std::vector<View> views;

    void validate() const {
        const size_t expect = static_cast<size_t>(image_h) * image_w;
        for (const auto& v : views) {
            if (v.pixel_rays.size() != expect)
                throw std::invalid_argument("CameraRig: ray table does not cover every pixel");
            for (const auto& r : v.pixel_rays)
                if (!std::isfinite(r[0]) || !std::isfinite(r[1]))
                    throw std::invalid_argument("CameraRig: non-finite ray");
        }
    }
};

struct MultiViewImages {
    std::vector<nn::TensorPtr> views;     // [C_img, H, W] each
    std::vector<nn::TensorPtr> gt_depth;  // [H, W] each, empty when absent

    int n_views() const { return static_cast<int>(views.size()); }
    bool has_depth() const { return !gt_depth.empty(); }
};

// --- binary tensor container ---

inline constexpr char kTensorMagic[8] = {'P', 'F', 'T', 'N', 'S', 'R', '0', '1'};

inline void write_tensor_f32(const std::string& path, const nn::TensorPtr& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("tensor file: cannot open '" + path + "' for writing");
    os.write(kTensorMagic, sizeof(kTensorMagic));
    const std::uint32_t rank = static_cast<std::uint32_t>(t->rank());
    os.write(reinterpret_cast<const char*>(&rank), 4);
    for (int d : t->shape) {
        const std::uint32_t v = static_cast<std::uint32_t>(d);
        os.write(reinterpret_cast<const char*>(&v), 4);
    }
    std::vector<float> buf(t->data.begin(), t->data.end());
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * 4));
    if (!os) throw std::runtime_error("tensor file: write failed for '" + path + "'");
}

inline nn::TensorPtr read_tensor_f32(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("tensor file: cannot open '" + path + "'");
    char magic[sizeof(kTensorMagic)];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kTensorMagic, sizeof(magic)) != 0)
        throw std::runtime_error("tensor file: bad magic in '" + path + "'");
    std::uint32_t rank = 0;
    is.read(reinterpret_cast<char*>(&rank), 4);
    if (rank > 8) throw std::runtime_error("tensor file: implausible rank in '" + path + "'");
    nn::Shape shape(rank);
    for (auto& d : shape) {
        std::uint32_t v = 0;
        is.read(reinterpret_cast<char*>(&v), 4);
        d = static_cast<int>(v);
    }
    auto t = nn::make_tensor(shape);
    std::vector<float> buf(t->data.size());
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    if (!is) throw std::runtime_error("tensor file: truncated payload in '" + path + "'");
    std::copy(buf.begin(), buf.end(), t->data.begin());
    return t;
}

// --- ray table JSON ---

inline void write_rig_json(const std::string& path, const CameraRig& rig) {
    nlohmann::ordered_json j;
    j["image_h"] = rig.image_h;
    j["image_w"] = rig.image_w;
    auto& views = j["views"] = nlohmann::json::array();
    for (const auto& v : rig.views) {
        nlohmann::ordered_json jv;
        jv["origin"] = {v.origin[0], v.origin[1]};
        auto& rays = jv["pixel_rays"] = nlohmann::json::array();
        for (const auto& r : v.pixel_rays) rays.push_back({r[0], r[1]});
        views.push_back(jv);
    }
    std::ofstream os(path);
    if (!os) throw std::runtime_error("rig: cannot open '" + path + "' for writing");
    os << j.dump();
}

inline CameraRig read_rig_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("rig: cannot open '" + path + "'");
    nlohmann::json j;
    is >> j;
    CameraRig rig;
    rig.image_h = j.at("image_h").get<int>();
    rig.image_w = j.at("image_w").get<int>();
    for (const auto& jv : j.at("views")) {
        CameraRig::View v;
        v.origin = {jv.at("origin").at(0).get<double>(), jv.at("origin").at(1).get<double>()};
        for (const auto& r : jv.at("pixel_rays"))
            v.pixel_rays.push_back({r.at(0).get<double>(), r.at(1).get<double>()});
        rig.views.push_back(std::move(v));
    }
    rig.validate();
    return rig;
}

}  // namespace placefuse::cam
