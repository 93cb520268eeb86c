#pragma once

// Weights checkpoint:
//   "FPTW" | u32 format version | u64 spec fingerprint | u32 entry count |
//   entries: u32 name length, name bytes, u32 rank, rank x u32 dims, float32 LE data.
// Optimizer state, when present, is stored as extra entries "adam.m/<name>",
// "adam.v/<name>" and the scalar "adam.step".

#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "../error.hpp"
#include "../raster_io.hpp"
#include "adam.hpp"
#include "network.hpp"

namespace phaseforge::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u64le(std::string& buf, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i) {
        buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
    }
}

class ByteReader {
public:
    explicit ByteReader(std::string bytes) : bytes_(std::move(bytes)) {}

    std::uint32_t u32()
    {
        need(4);
        const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + pos_);
        pos_ += 4;
        return phaseforge::detail::get_u32le(p);
    }
    std::uint64_t u64()
    {
        const std::uint64_t lo = u32();
        const std::uint64_t hi = u32();
        return lo | (hi << 32);
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str(std::size_t n)
    {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const noexcept { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const
    {
        if (pos_ + n > bytes_.size()) {
            throw IoError("truncated checkpoint");
        }
    }
    std::string bytes_;
    std::size_t pos_ = 0;
};

template <typename V>
void put_entry(std::string& buf, const std::string& name, const std::vector<std::size_t>& dims, const V& values)
{
    phaseforge::detail::put_u32le(buf, static_cast<std::uint32_t>(name.size()));
    buf += name;
    phaseforge::detail::put_u32le(buf, static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) {
        phaseforge::detail::put_u32le(buf, static_cast<std::uint32_t>(d));
    }
    for (auto v : values) {
        phaseforge::detail::put_u32le(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
}

} // namespace detail

template <typename T>
std::string encode_checkpoint(const Weights<T>& w, const Adam<T>* optimizer = nullptr)
{
    std::string buf = "FPTW";
    phaseforge::detail::put_u32le(buf, kCheckpointVersion);
    detail::put_u64le(buf, w.fingerprint());
    std::size_t entries = w.count();
    if (optimizer != nullptr) {
        entries += 1 + 2 * w.count();
    }
    phaseforge::detail::put_u32le(buf, static_cast<std::uint32_t>(entries));
    for (const auto& p : w.params()) {
        detail::put_entry(buf, p.name, p.dims, p.values);
    }
    if (optimizer != nullptr) {
        for (std::size_t i = 0; i < w.count(); ++i) {
            const auto& p = w.param(i);
            const auto& m = optimizer->first_moments()[i];
            const auto& v = optimizer->second_moments()[i];
            detail::put_entry(buf, "adam.m/" + p.name, {m.size()}, m);
            detail::put_entry(buf, "adam.v/" + p.name, {v.size()}, v);
        }
        detail::put_entry(buf, "adam.step", {1}, std::vector<double>{static_cast<double>(optimizer->steps())});
    }
    return buf;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Weights<T>& w, const Adam<T>* optimizer = nullptr)
{
    phaseforge::detail::write_file(path, encode_checkpoint(w, optimizer));
}

/// Reads the spec fingerprint stored in a checkpoint header.
inline std::uint64_t checkpoint_fingerprint(const std::filesystem::path& path)
{
    detail::ByteReader in(phaseforge::detail::read_file(path));
    if (in.str(4) != "FPTW") {
        throw IoError("not an FPTW checkpoint: " + path.string());
    }
    in.u32();
    return in.u64();
}

/// Loads parameters into a copy of `layout`. A fingerprint mismatch is an
/// InvalidInput error. Optimizer entries are restored when `optimizer` is given.
template <typename T>
Weights<T> load_checkpoint(const std::filesystem::path& path, const Weights<T>& layout, Adam<T>* optimizer = nullptr)
{
    detail::ByteReader in(phaseforge::detail::read_file(path));
    if (in.str(4) != "FPTW") {
        throw IoError("not an FPTW checkpoint: " + path.string());
    }
    const std::uint32_t version = in.u32();
    if (version != kCheckpointVersion) {
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint64_t fingerprint = in.u64();
    require(fingerprint == layout.fingerprint(),
            "checkpoint fingerprint " + hex64(fingerprint) + " does not match network spec " + hex64(layout.fingerprint()));
    Weights<T> w = layout;
    std::vector<bool> seen(w.count(), false);
    const std::uint32_t entries = in.u32();
    for (std::uint32_t e = 0; e < entries; ++e) {
        const std::string name = in.str(in.u32());
        const std::uint32_t rank = in.u32();
        std::vector<std::size_t> dims(rank);
        std::size_t count = 1;
        for (auto& d : dims) {
            d = in.u32();
            count *= d;
        }
        std::vector<double> data(count);
        for (auto& v : data) {
            v = static_cast<double>(in.f32());
        }
        if (name == "adam.step") {
            if (optimizer != nullptr) {
                optimizer->set_steps(static_cast<std::uint64_t>(data.at(0)));
            }
            continue;
        }
        const bool is_m = name.rfind("adam.m/", 0) == 0;
        const bool is_v = name.rfind("adam.v/", 0) == 0;
        const std::string base = (is_m || is_v) ? name.substr(7) : name;
        const std::size_t idx = w.find(base);
        if (idx == w.count()) {
            throw IoError("checkpoint entry '" + name + "' not present in network");
        }
        if (is_m || is_v) {
            if (optimizer != nullptr) {
                auto& dst = is_m ? optimizer->first_moments()[idx] : optimizer->second_moments()[idx];
                if (dst.size() != data.size()) {
                    throw IoError("optimizer state size mismatch for " + base);
                }
                dst = std::move(data);
            }
            continue;
        }
        if (dims != w.param(idx).dims) {
            throw IoError("shape mismatch for checkpoint entry " + name);
        }
        auto dst = w.mutable_values(idx);
        for (std::size_t k = 0; k < count; ++k) {
            dst[k] = static_cast<T>(data[k]);
        }
        seen[idx] = true;
    }
    if (!in.done()) {
        throw IoError("trailing bytes in checkpoint");
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
        if (!seen[i]) {
            throw IoError("checkpoint lacks parameter " + w.param(i).name);
        }
    }
    return w;
}

} // namespace phaseforge::nn
