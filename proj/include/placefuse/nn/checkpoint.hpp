#pragma once

// Checkpoint file: a JSON manifest (name, shape, byte offset per parameter)
// followed by the raw little-endian 64-bit float blob. Round-trips bit-exact.

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "placefuse/nn/tensor.hpp"

namespace placefuse::nn {

namespace detail {

inline void write_f64_le(std::ostream& os, const double* src, size_t count) {
    static_assert(sizeof(double) == 8);
    // x86-64 is little-endian; write bytes directly.
    os.write(reinterpret_cast<const char*>(src), static_cast<std::streamsize>(count * 8));
}

inline void read_f64_le(std::istream& is, double* dst, size_t count) {
    is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(count * 8));
    if (!is) throw std::runtime_error("checkpoint: truncated data blob");
}

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'P', 'F', 'C', 'K', 'P', 'T', '0', '1'};

inline void save_checkpoint(const std::string& path, const ParamStore& params,
                            std::uint64_t config_hash) {
    nlohmann::ordered_json manifest;
    manifest["config_hash"] = config_hash;
    manifest["params"] = nlohmann::ordered_json::array();
    std::uint64_t offset = 0;
    for (const auto& p : params.all()) {
        nlohmann::ordered_json e;
        e["name"] = p->name;
        e["shape"] = p->tensor->shape;
        e["offset"] = offset;
        manifest["params"].push_back(e);
        offset += static_cast<std::uint64_t>(p->tensor->size()) * 8;
    }
    const std::string mjson = manifest.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::uint64_t mlen = mjson.size();
    os.write(reinterpret_cast<const char*>(&mlen), 8);
    os.write(mjson.data(), static_cast<std::streamsize>(mjson.size()));
    for (const auto& p : params.all())
        detail::write_f64_le(os, p->tensor->data.data(), p->tensor->data.size());
    if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

// Loads parameter values into an already-constructed store. Shapes and names
// must match; a config hash mismatch is an error unless expected_hash is 0.
inline void load_checkpoint(const std::string& path, ParamStore& params,
                            std::uint64_t expected_hash) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    char magic[sizeof(kCheckpointMagic)];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
    std::uint64_t mlen = 0;
    is.read(reinterpret_cast<char*>(&mlen), 8);
    std::string mjson(mlen, '\0');
    is.read(mjson.data(), static_cast<std::streamsize>(mlen));
    if (!is) throw std::runtime_error("checkpoint: truncated manifest in '" + path + "'");
    const auto manifest = nlohmann::json::parse(mjson);

    const std::uint64_t stored_hash = manifest.at("config_hash").get<std::uint64_t>();
    if (expected_hash != 0 && stored_hash != expected_hash)
        throw std::runtime_error("checkpoint: config hash mismatch (checkpoint " +
                                 std::to_string(stored_hash) + ", expected " +
                                 std::to_string(expected_hash) + ")");

    const auto& entries = manifest.at("params");
    if (entries.size() != params.size())
        throw std::runtime_error("checkpoint: parameter count mismatch");
    const std::streampos blob_start = is.tellg();
    for (const auto& e : entries) {
        const std::string name = e.at("name").get<std::string>();
        const auto shape = e.at("shape").get<Shape>();
        const std::uint64_t offset = e.at("offset").get<std::uint64_t>();
        auto p = params.get(name);
        if (p->tensor->shape != shape)
            throw std::runtime_error("checkpoint: shape mismatch for '" + name + "': file " +
                                     shape_str(shape) + " vs model " + shape_str(p->tensor->shape));
        is.seekg(blob_start + static_cast<std::streamoff>(offset));
        detail::read_f64_le(is, p->tensor->data.data(), p->tensor->data.size());
    }
}

inline std::uint64_t checkpoint_config_hash(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    char magic[sizeof(kCheckpointMagic)];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
    std::uint64_t mlen = 0;
    is.read(reinterpret_cast<char*>(&mlen), 8);
    std::string mjson(mlen, '\0');
    is.read(mjson.data(), static_cast<std::streamsize>(mlen));
    return nlohmann::json::parse(mjson).at("config_hash").get<std::uint64_t>();
}

}  // namespace placefuse::nn
