#pragma once

// Rotation-invariant global descriptors: polar transform, DFT magnitude,
// low-frequency crop, L2 normalization; plus the exact nearest-neighbor
// matcher and the on-disk descriptor database.

#include <algorithm>
#include <cstring>
#include <fstream>

#include "placefuse/geometry/polar.hpp"

namespace placefuse::desc {

using nn::TensorPtr;

struct DescriptorConfig {
    int k_radial = 16;
    int k_angular = 16;
    bool normalize = true;
    int dft_axes = 2;  // 2 = full 2D spectrum; 1 = angular-only variant

    void validate(const geo::PolarGridSpec& pspec) const {
        if (k_radial < 1 || k_radial > pspec.n_radial || k_angular < 1 ||
            k_angular > pspec.n_angular)
            throw std::invalid_argument("DescriptorConfig: crop exceeds polar grid");
        if (dft_axes != 1 && dft_axes != 2)
            throw std::invalid_argument("DescriptorConfig: dft_axes must be 1 or 2");
    }
};

struct PlaceDescriptor {
    std::vector<double> values;
    bool degenerate = false;  // all-zero input; normalization skipped

    int dim() const { return static_cast<int>(values.size()); }
};

struct DescriptorResult {
    TensorPtr tensor;  // [dim], on the tape when training
    bool degenerate = false;

    PlaceDescriptor to_descriptor() const {
        PlaceDescriptor d;
        d.values = tensor->data;
        d.degenerate = degenerate;
        return d;
    }
};

// Descriptor from an already-polar [C,R,T] map. Kept separate so the exact
// angular-shift route can bypass the BEV resampling.
inline DescriptorResult descriptor_from_polar(nn::Tape* tape, const TensorPtr& polar,
                                              const geo::PolarGridSpec& pspec,
                                              const DescriptorConfig& cfg) {
    cfg.validate(pspec);
    auto mag = cfg.dft_axes == 2 ? nn::dft_mag2d(tape, polar) : nn::dft_mag_rows(tape, polar);
    auto crop = nn::crop_hw(tape, mag, cfg.k_radial, cfg.k_angular);
    auto flat = nn::flatten(tape, crop);
    DescriptorResult res;
    if (cfg.normalize) {
        res.tensor = nn::l2_normalize(tape, flat, &res.degenerate);
    } else {
        res.tensor = flat;
        bool all_zero = true;
        for (double v : flat->data) all_zero = all_zero && v == 0.0;
        res.degenerate = all_zero;
    }
    return res;
}

// Full pipeline: BEV feature map -> polar -> DFT magnitude -> crop -> L2.
inline DescriptorResult make_descriptor(nn::Tape* tape, const TensorPtr& f_out,
                                        const geo::BevGridSpec& spec,
                                        const geo::PolarGridSpec& pspec,
                                        const DescriptorConfig& cfg,
                                        const TensorPtr& cached_points = nullptr) {
    auto polar = geo::polar_transform(tape, f_out, spec, pspec, cached_points);
    return descriptor_from_polar(tape, polar, pspec, cfg);
}

struct MatchResult {
    int index;
    double distance;
};

class DescriptorDatabase {
public:
    DescriptorDatabase() = default;
    explicit DescriptorDatabase(int dim, std::uint64_t config_hash = 0)
        : dim_(dim), config_hash_(config_hash) {}

    void add(const PlaceDescriptor& d, double world_x, double world_y, const std::string& id) {
        if (d.dim() != dim_)
            throw std::invalid_argument("DescriptorDatabase: descriptor dim " +
                                        std::to_string(d.dim()) + " != database dim " +
                                        std::to_string(dim_));
        data_.insert(data_.end(), d.values.begin(), d.values.end());
        positions_.push_back({world_x, world_y});
        ids_.push_back(id);
    }

    int size() const { return static_cast<int>(ids_.size()); }
    int dim() const { return dim_; }
    std::uint64_t config_hash() const { return config_hash_; }
    const std::pair<double, double>& position(int i) const {
        return positions_[static_cast<size_t>(i)];
    }
    const std::string& id(int i) const { return ids_[static_cast<size_t>(i)]; }
    const double* descriptor(int i) const {
        return data_.data() + static_cast<std::int64_t>(i) * dim_;
    }

    // Exact Euclidean nearest neighbors, ascending distance, ties broken by
    // ascending index.
    std::vector<MatchResult> match(const PlaceDescriptor& query, int top_n) const {
        if (size() == 0) throw std::runtime_error("match: database is empty");
        if (query.dim() != dim_)
            throw std::invalid_argument("match: query dim " + std::to_string(query.dim()) +
                                        " != database dim " + std::to_string(dim_));
        std::vector<MatchResult> all(static_cast<size_t>(size()));
        for (int i = 0; i < size(); ++i) {
            const double* d = descriptor(i);
            long double acc = 0.0L;
            for (int j = 0; j < dim_; ++j) {
                const double diff = query.values[static_cast<size_t>(j)] - d[j];
                acc += static_cast<long double>(diff) * diff;
            }
            all[static_cast<size_t>(i)] = {i, std::sqrt(static_cast<double>(acc))};
        }
        const int n = std::min(top_n, size());
        std::partial_sort(all.begin(), all.begin() + n, all.end(),
                          [](const MatchResult& a, const MatchResult& b) {
                              return a.distance != b.distance ? a.distance < b.distance
                                                              : a.index < b.index;
                          });
        all.resize(static_cast<size_t>(n));
        return all;
    }

    // --- binary file format: header + packed f64 descriptors + positions + ids ---
    void save(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw std::runtime_error("database: cannot open '" + path + "' for writing");
        os.write("PFDB0001", 8);
        const std::uint64_t count = static_cast<std::uint64_t>(size());
        const std::uint32_t dim = static_cast<std::uint32_t>(dim_);
        os.write(reinterpret_cast<const char*>(&count), 8);
        os.write(reinterpret_cast<const char*>(&dim), 4);
        os.write(reinterpret_cast<const char*>(&config_hash_), 8);
        os.write(reinterpret_cast<const char*>(data_.data()),
                 static_cast<std::streamsize>(data_.size() * 8));
        for (const auto& p : positions_) {
            os.write(reinterpret_cast<const char*>(&p.first), 8);
            os.write(reinterpret_cast<const char*>(&p.second), 8);
        }
        for (const auto& id : ids_) {
            const std::uint32_t len = static_cast<std::uint32_t>(id.size());
            os.write(reinterpret_cast<const char*>(&len), 4);
            os.write(id.data(), len);
        }
        if (!os) throw std::runtime_error("database: write failed for '" + path + "'");
    }

    static DescriptorDatabase load(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw std::runtime_error("database: cannot open '" + path + "'");
        char magic[8];
        is.read(magic, 8);
        if (!is || std::memcmp(magic, "PFDB0001", 8) != 0)
            throw std::runtime_error("database: bad magic in '" + path + "'");
        std::uint64_t count = 0;
        std::uint32_t dim = 0;
        std::uint64_t hash = 0;
        is.read(reinterpret_cast<char*>(&count), 8);
        is.read(reinterpret_cast<char*>(&dim), 4);
        is.read(reinterpret_cast<char*>(&hash), 8);
        DescriptorDatabase db(static_cast<int>(dim), hash);
        db.data_.resize(count * dim);
        is.read(reinterpret_cast<char*>(db.data_.data()),
                static_cast<std::streamsize>(db.data_.size() * 8));
        db.positions_.resize(count);
        for (auto& p : db.positions_) {
            is.read(reinterpret_cast<char*>(&p.first), 8);
            is.read(reinterpret_cast<char*>(&p.second), 8);
        }
        db.ids_.resize(count);
        for (auto& id : db.ids_) {
            std::uint32_t len = 0;
            is.read(reinterpret_cast<char*>(&len), 4);
            id.resize(len);
            is.read(id.data(), len);
        }
        if (!is) throw std::runtime_error("database: truncated file '" + path + "'");
        return db;
    }

private:
    int dim_ = 0;
    std::uint64_t config_hash_ = 0;
    std::vector<double> data_;
    std::vector<std::pair<double, double>> positions_;
    std::vector<std::string> ids_;
};

}  // namespace placefuse::desc
