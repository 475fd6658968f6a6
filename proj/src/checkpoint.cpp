// SPDX-License-Identifier: Apache-2.0
#include "fedpeft/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace fedpeft {

namespace {
constexpr std::uint32_t kMagic = 0x4B504654; // "TFPK" little-endian
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw DataError("checkpoint: truncated file");
    return v;
}

struct Entry {
    std::string name;
    std::vector<long> shape;
    long numel;
};

std::vector<Entry> read_header(std::istream& is, long* header_bytes) {
    if (read_pod<std::uint32_t>(is) != kMagic) throw DataError("checkpoint: bad magic");
    if (read_pod<std::uint32_t>(is) != kVersion) throw DataError("checkpoint: unsupported version");
    const auto count = read_pod<std::uint64_t>(is);
    std::vector<Entry> entries;
    entries.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        Entry e;
        auto name_len = read_pod<std::uint32_t>(is);
        e.name.resize(name_len);
        is.read(e.name.data(), name_len);
        auto ndim = read_pod<std::uint32_t>(is);
        e.numel = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            auto ext = static_cast<long>(read_pod<std::uint64_t>(is));
            e.shape.push_back(ext);
            e.numel *= ext;
        }
        if (!is) throw DataError("checkpoint: truncated header");
        entries.push_back(std::move(e));
    }
    if (header_bytes) *header_bytes = static_cast<long>(is.tellg());
    return entries;
}
} // namespace

void save_paramset(const std::string& path, const ParamSet& tensors) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("checkpoint: cannot open " + path + " for writing");
    write_pod(os, kMagic);
    write_pod(os, kVersion);
    write_pod(os, static_cast<std::uint64_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        write_pod(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod(os, static_cast<std::uint32_t>(t.ndim()));
        for (long d : t.shape()) write_pod(os, static_cast<std::uint64_t>(d));
    }
    for (const auto& [name, t] : tensors)
        os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel()) * 4);
    if (!os) throw DataError("checkpoint: write failed for " + path);
}

ParamSet load_paramset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open " + path);
    auto entries = read_header(is, nullptr);
    ParamSet out;
    for (const auto& e : entries) {
        Tensor t(e.shape);
        is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(e.numel) * 4);
        if (!is) throw DataError("checkpoint: truncated data section");
        out[e.name] = std::move(t);
    }
    return out;
}

CheckpointInfo checkpoint_info(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open " + path);
    CheckpointInfo info;
    auto entries = read_header(is, &info.header_bytes);
    for (const auto& e : entries) info.payload_bytes += e.numel * 4;
    return info;
}

} // namespace fedpeft
