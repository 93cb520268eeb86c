#pragma once

// On-disk formats: binary PGM (P5, maxval 255) for fringe images and F32R
// ("F32R", u32 width, u32 height, row-major little-endian float32) for
// phase, depth and error rasters.

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "fringe.hpp"
#include "grid.hpp"
#include "random.hpp"

namespace phaseforge {

namespace fs = std::filesystem;

/// Round-half-up to 0..255.
inline std::uint8_t quantize_u8(double v)
{
    const double scaled = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
    return static_cast<std::uint8_t>(scaled);
}

inline double dequantize_u8(std::uint8_t q) { return static_cast<double>(q) / 255.0; }

/// Simulated 8-bit camera: snaps every intensity to the nearest gray level.
inline FringeImage quantize_image(const FringeImage& image)
{
    FringeImage out = image;
    for (auto& v : out) {
        v = dequantize_u8(quantize_u8(v));
    }
    return out;
}

namespace detail {

inline void put_u32le(std::string& buf, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) {
        buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
    }
}

inline std::uint32_t get_u32le(const unsigned char* p)
{
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& path, const std::string& bytes)
{
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) {
            throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("short write to " + path.string());
    }
}

} // namespace detail

inline std::string hex64(std::uint64_t v)
{
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << v;
    return ss.str();
}

/// FNV-1a 64 of a file's bytes, as 16 hex digits.
inline std::string file_checksum(const fs::path& path)
{
    const std::string bytes = detail::read_file(path);
    return hex64(fnv1a64(bytes.data(), bytes.size()));
}

inline std::string encode_pgm(const FringeImage& image)
{
    std::string buf = "P5\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
    buf.reserve(buf.size() + image.size());
    for (double v : image) {
        buf.push_back(static_cast<char>(quantize_u8(v)));
    }
    return buf;
}

inline void write_pgm(const fs::path& path, const FringeImage& image) { detail::write_file(path, encode_pgm(image)); }

inline FringeImage read_pgm(const fs::path& path)
{
    const std::string bytes = detail::read_file(path);
    std::size_t pos = 0;
    auto skip_space_and_comments = [&] {
        while (pos < bytes.size()) {
            if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') {
                    ++pos;
                }
            } else {
                break;
            }
        }
    };
    auto read_int = [&]() -> long {
        skip_space_and_comments();
        std::size_t start = pos;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
            ++pos;
        }
        if (start == pos) {
            throw IoError("malformed PGM header in " + path.string());
        }
        return std::stol(bytes.substr(start, pos - start));
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
        throw IoError("not a binary PGM (P5): " + path.string());
    }
    pos = 2;
    const long width = read_int();
    const long height = read_int();
    const long maxval = read_int();
    if (width < 1 || height < 1 || maxval != 255) {
        throw IoError("unsupported PGM geometry or maxval in " + path.string());
    }
    ++pos;  // single whitespace before raster
    const auto count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (bytes.size() < pos + count) {
        throw IoError("truncated PGM raster in " + path.string());
    }
    FringeImage image(static_cast<std::size_t>(width), static_cast<std::size_t>(height));
    for (std::size_t i = 0; i < count; ++i) {
        image[i] = dequantize_u8(static_cast<std::uint8_t>(bytes[pos + i]));
    }
    return image;
}

template <typename T>
std::string encode_f32r(const Grid<T>& raster)
{
    std::string buf = "F32R";
    detail::put_u32le(buf, static_cast<std::uint32_t>(raster.width()));
    detail::put_u32le(buf, static_cast<std::uint32_t>(raster.height()));
    buf.reserve(buf.size() + 4 * raster.size());
    for (const auto& v : raster) {
        detail::put_u32le(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return buf;
}

template <typename T>
void write_f32r(const fs::path& path, const Grid<T>& raster)
{
    detail::write_file(path, encode_f32r(raster));
}

inline Grid<double> read_f32r(const fs::path& path)
{
    const std::string bytes = detail::read_file(path);
    if (bytes.size() < 12 || bytes.compare(0, 4, "F32R") != 0) {
        throw IoError("not an F32R raster: " + path.string());
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::uint32_t width = detail::get_u32le(p + 4);
    const std::uint32_t height = detail::get_u32le(p + 8);
    if (width == 0 || height == 0) {
        throw IoError("empty F32R raster: " + path.string());
    }
    const std::size_t count = static_cast<std::size_t>(width) * height;
    if (bytes.size() != 12 + 4 * count) {
        throw IoError("F32R size mismatch in " + path.string());
    }
    Grid<double> raster(width, height);
    for (std::size_t i = 0; i < count; ++i) {
        raster[i] = static_cast<double>(std::bit_cast<float>(detail::get_u32le(p + 12 + 4 * i)));
    }
    return raster;
}

/// "35" for integral frequencies, shortest round-trip decimal otherwise.
inline std::string frequency_tag(double f)
{
    if (f == std::floor(f) && std::abs(f) < 1e15) {
        return std::to_string(static_cast<long long>(f));
    }
    std::ostringstream ss;
    ss << std::setprecision(17) << f;
    return ss.str();
}

/// Writes n0.pgm .. n{N-1}.pgm into dir.
inline std::vector<fs::path> write_fringe_set(const fs::path& dir, const FringeSet& set)
{
    std::vector<fs::path> written;
    for (std::size_t n = 0; n < set.images.size(); ++n) {
        auto path = dir / ("n" + std::to_string(n) + ".pgm");
        write_pgm(path, set.images[n]);
        written.push_back(std::move(path));
    }
    return written;
}

/// Reads n0.pgm, n1.pgm, ... until the first gap; steps = 0 means auto-detect.
inline FringeSet read_fringe_set(const fs::path& dir, double frequency, std::size_t steps = 0)
{
    FringeSet set;
    set.frequency = frequency;
    for (std::size_t n = 0; steps == 0 || n < steps; ++n) {
        const auto path = dir / ("n" + std::to_string(n) + ".pgm");
        if (steps == 0 && !fs::exists(path)) {
            break;
        }
        set.images.push_back(read_pgm(path));
    }
    set.validate();
    return set;
}

} // namespace phaseforge
