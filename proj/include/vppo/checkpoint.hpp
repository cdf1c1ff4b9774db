#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vppo/tensor.hpp"

namespace vppo {

// Single-file checkpoint: magic, version, JSON manifest, then named tensors as
// shape + raw little-endian f64. Round-trips bit-exactly.

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'V', 'P', 'P', 'O', 'C', 'K', 'P', 'T'};
inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    nlohmann::ordered_json manifest;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor& tensor(const std::string& name) const {
        for (auto& [n, t] : tensors)
            if (n == name) return t;
        throw std::runtime_error("checkpoint: missing tensor " + name);
    }
    bool has_tensor(const std::string& name) const {
        for (auto& [n, t] : tensors)
            if (n == name) return true;
        return false;
    }
};

namespace detail {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

}  // namespace detail

inline void write_checkpoint(const std::string& path, const nlohmann::ordered_json& manifest,
                             const std::vector<std::pair<std::string, Tensor>>& tensors) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::write_pod(os, kCheckpointVersion);
    std::string m = manifest.dump();
    detail::write_pod(os, static_cast<uint64_t>(m.size()));
    os.write(m.data(), static_cast<std::streamsize>(m.size()));
    detail::write_pod(os, static_cast<uint32_t>(tensors.size()));
    for (auto& [name, t] : tensors) {
        detail::write_pod(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_pod(os, static_cast<uint32_t>(t.shape().size()));
        for (int d : t.shape()) detail::write_pod(os, static_cast<int64_t>(d));
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::string_view(magic, 8) != std::string_view(kCheckpointMagic, 8))
        throw std::runtime_error("checkpoint: bad magic in " + path);
    uint32_t version = detail::read_pod<uint32_t>(is);
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    uint64_t mlen = detail::read_pod<uint64_t>(is);
    std::string m(mlen, '\0');
    is.read(m.data(), static_cast<std::streamsize>(mlen));
    Checkpoint ck;
    ck.manifest = nlohmann::ordered_json::parse(m);
    uint32_t count = detail::read_pod<uint32_t>(is);
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t nlen = detail::read_pod<uint32_t>(is);
        std::string name(nlen, '\0');
        is.read(name.data(), static_cast<std::streamsize>(nlen));
        uint32_t rank = detail::read_pod<uint32_t>(is);
        std::vector<int> shape;
        for (uint32_t r = 0; r < rank; ++r)
            shape.push_back(static_cast<int>(detail::read_pod<int64_t>(is)));
        std::vector<double> data(Tensor::count(shape));
        is.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(double)));
        if (!is) throw std::runtime_error("checkpoint: truncated tensor data");
        ck.tensors.emplace_back(std::move(name),
                                Tensor::from_data(std::move(shape), std::move(data)));
    }
    return ck;
}

}  // namespace vppo
