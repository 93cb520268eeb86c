#pragma once

// FPTNet layer plans and variant logic.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "error.hpp"
#include "nn/network.hpp"

namespace phaseforge {

enum class VariantKind : std::uint8_t {
    C,     // one fringe -> N-step set at the same frequency
    U_I,   // one fringe -> lower-frequency sets (restricted depth)
    U_II,  // two fringes -> lower-frequency sets (unrestricted depth)
};

inline std::string to_string(VariantKind kind)
{
    switch (kind) {
    case VariantKind::C: return "c";
    case VariantKind::U_I: return "u1";
    case VariantKind::U_II: return "u2";
    }
    return "?";
}

inline VariantKind parse_variant(const std::string& text)
{
    if (text == "c" || text == "C") {
        return VariantKind::C;
    }
    if (text == "u1" || text == "U_I" || text == "U-I") {
        return VariantKind::U_I;
    }
    if (text == "u2" || text == "U_II" || text == "U-II") {
        return VariantKind::U_II;
    }
    throw InvalidInput("unknown variant '" + text + "' (expected c, u1 or u2)");
}

/// Which fringes go in and which N-step stacks come out.
struct Variant {
    VariantKind kind = VariantKind::C;
    std::vector<double> input_frequencies;   // 1 entry (C, U_I) or 2 (U_II): f_s then f_l
    std::vector<double> output_frequencies;  // one N-image stack per entry
    std::size_t phase_steps = 12;

    std::size_t input_count() const noexcept { return kind == VariantKind::U_II ? 2 : 1; }

    void validate() const
    {
        require(phase_steps >= 3, "phase steps must be at least 3");
        require(input_frequencies.size() == input_count(),
                "variant " + to_string(kind) + " takes " + std::to_string(input_count()) + " input fringe(s)");
        require(!output_frequencies.empty(), "variant needs at least one output frequency");
        for (double f : input_frequencies) {
            require(f > 0.0, "input frequencies must be positive");
        }
        for (double f : output_frequencies) {
            require(f > 0.0, "output frequencies must be positive");
        }
        if (kind == VariantKind::C) {
            require(output_frequencies.size() == 1 && output_frequencies[0] == input_frequencies[0],
                    "variant c outputs one stack at its input frequency");
        }
        if (kind == VariantKind::U_II) {
            require(input_frequencies[1] < input_frequencies[0], "u2 second input f_l must be below f_s");
        }
    }

    static Variant same_frequency(double frequency, std::size_t steps)
    {
        return Variant{VariantKind::C, {frequency}, {frequency}, steps};
    }

    /// U variant producing the sets below the top of a ladder.
    static Variant lower_sets(VariantKind kind, const std::vector<double>& ladder, std::size_t steps,
                              double second_input = 0.0)
    {
        require(kind != VariantKind::C, "lower_sets is for U variants");
        require(ladder.size() >= 2, "U variants need a ladder of at least two frequencies");
        Variant v{kind, {ladder.back()}, std::vector<double>(ladder.begin(), ladder.end() - 1), steps};
        if (kind == VariantKind::U_II) {
            v.input_frequencies.push_back(second_input);
        }
        return v;
    }
};

/// round(base * multiplier), at least 1.
inline std::size_t scaled_channels(std::size_t base, double multiplier)
{
    const double scaled = std::round(static_cast<double>(base) * multiplier);
    return scaled < 1.0 ? 1 : static_cast<std::size_t>(scaled);
}

/// The encoder-decoder layer plan. At multiplier 1 and a 1x512x256 input:
///   Step 0  Downsample         16x512x256
///   Step 1  Downsample         64x256x128   + 5 ERF
///   Step 2  Downsample        128x128x64    + ERF dilated 2, 4, 8, 16
///   Step 3  ERF dilated 2, 4, 8, 16 (Step 2 without its downsampler)
///   Step 4  Upsample           64x256x128   + 2 ERF
///   Step 5  Upsample           16x512x256   + 2 ERF
///   Step 6  1x1 convolution     N*stacks x512x256
/// Step 0 keeps full resolution, so the encoder's total stride is 4.
inline nn::NetworkSpec build_network(const Variant& variant, double width_multiplier, bool normalization = true)
{
    variant.validate();
    require(width_multiplier > 0.0 && std::isfinite(width_multiplier), "width multiplier must be positive");
    using nn::LayerKind;
    using nn::LayerSpec;
    const std::size_t in = variant.input_count();
    const std::size_t c16 = scaled_channels(16, width_multiplier);
    const std::size_t c64 = scaled_channels(64, width_multiplier);
    const std::size_t c128 = scaled_channels(128, width_multiplier);
    const std::size_t out = variant.phase_steps * variant.output_frequencies.size();
    require(c16 > in && c64 > c16 && c128 > c64,
            "width multiplier " + std::to_string(width_multiplier) + " leaves a downsampler without conv channels");

    nn::NetworkSpec spec;
    spec.width_multiplier = width_multiplier;
    spec.normalization = normalization;
    auto& L = spec.layers;
    L.push_back({LayerKind::Downsample, in, c16, 1, 1, "Step 0"});
    L.push_back({LayerKind::Downsample, c16, c64, 1, 2, "Step 1"});
    for (int i = 0; i < 5; ++i) {
        L.push_back({LayerKind::Erf, c64, c64, 1, 1, "Step 1"});
    }
    L.push_back({LayerKind::Downsample, c64, c128, 1, 2, "Step 2"});
    for (const char* step : {"Step 2", "Step 3"}) {
        for (std::size_t d : {2, 4, 8, 16}) {
            L.push_back({LayerKind::Erf, c128, c128, d, 1, step});
        }
    }
    L.push_back({LayerKind::Upsample, c128, c64, 1, 1, "Step 4"});
    L.push_back({LayerKind::Erf, c64, c64, 1, 1, "Step 4"});
    L.push_back({LayerKind::Erf, c64, c64, 1, 1, "Step 4"});
    L.push_back({LayerKind::Upsample, c64, c16, 1, 1, "Step 5"});
    L.push_back({LayerKind::Erf, c16, c16, 1, 1, "Step 5"});
    L.push_back({LayerKind::Erf, c16, c16, 1, 1, "Step 5"});
    L.push_back({LayerKind::OutputConv, c16, out, 1, 1, "Step 6"});
    spec.validate();
    return spec;
}

/// Spatial sizes are padded to this multiple before entering the network.
inline constexpr std::size_t kSpatialMultiple = 8;

/// One input fringe suffices while the depth span stays within one period.
inline VariantKind select_variant(double depth_min, double depth_max, double z_th)
{
    require(depth_min <= depth_max, "depth range min must not exceed max");
    return (depth_max - depth_min) <= z_th ? VariantKind::U_I : VariantKind::U_II;
}

struct LowFrequencyAdvice {
    bool divides_highest = false;
    bool safe_unrestricted = true;
    std::string note;
};

/// A second input frequency that divides f_s inherits its period ambiguity,
/// so it is only usable when the depth stays within one f_s period.
inline LowFrequencyAdvice validate_fl_choice(double highest, double lower)
{
    require(lower > 0.0, "f_l must be positive");
    require(lower < highest, "f_l must be strictly below f_s");
    const double ratio = highest / lower;
    const bool divides = std::abs(ratio - std::round(ratio)) < 1e-9;
    LowFrequencyAdvice advice;
    advice.divides_highest = divides;
    advice.safe_unrestricted = !divides;
    advice.note = divides ? "f_l divides f_s: usable only for restricted depth"
                          : "f_l does not divide f_s: usable for unrestricted depth";
    return advice;
}

} // namespace phaseforge
