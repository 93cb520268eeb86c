#pragma once

// Classical fringe mathematics: rendering phase-shifted fringes, least-squares
// demodulation, multi-frequency temporal unwrapping and height recovery.
// All phase arithmetic is carried out in double precision.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "error.hpp"
#include "grid.hpp"

namespace phaseforge {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Default modulation threshold, 5 gray levels of an 8-bit camera.
inline constexpr double kDefaultModulationThreshold = 5.0 / 255.0;

/// Normalized intensity raster, values in [0, 1].
using FringeImage = Grid<double>;

/// Per-pixel depth z(x, y) in simulation depth units.
struct Surface {
    Grid<double> depth;
    double range_min = 0.0;
    double range_max = 0.0;

    std::size_t width() const noexcept { return depth.width(); }
    std::size_t height() const noexcept { return depth.height(); }
};

struct RenderParams {
    double background = 0.5;                 // a
    double modulation = 0.5;                 // b
    double phase_constant = 1.0 / 35.0;      // c, radians per depth-unit per frequency-unit
    bool carrier_enabled = false;

    void validate() const
    {
        require(std::isfinite(background) && std::isfinite(modulation), "render params must be finite");
        require(modulation >= 0.0, "modulation must be nonnegative");
        require(background - modulation >= 0.0 && background + modulation <= 1.0,
                "background +/- modulation must stay within [0, 1]");
        require(phase_constant > 0.0 && std::isfinite(phase_constant), "phase_constant must be positive");
    }
};

struct SystemGeometry {
    double camera_to_reference_mm = 1000.0;  // l
    double projector_to_camera_mm = 60.0;    // d
    double projected_width_mm = 280.0;       // c_1
    double measurement_range_mm = 250.0;     // L

    void validate() const
    {
        require(camera_to_reference_mm > 0.0 && projector_to_camera_mm > 0.0 && projected_width_mm > 0.0 &&
                    measurement_range_mm > 0.0,
                "system geometry fields must be strictly positive");
    }
};

/// Ordered fringe frequencies f_1 < ... < f_s used for temporal unwrapping.
class FrequencyLadder {
public:
    FrequencyLadder() = default;
    explicit FrequencyLadder(std::vector<double> frequencies) : frequencies_(std::move(frequencies))
    {
        require(!frequencies_.empty(), "frequency ladder must not be empty");
        require(frequencies_.front() == 1.0, "frequency ladder must start at f_1 = 1");
        for (std::size_t i = 0; i < frequencies_.size(); ++i) {
            require(frequencies_[i] > 0.0 && std::isfinite(frequencies_[i]), "ladder frequencies must be positive");
            if (i > 0) {
                require(frequencies_[i] > frequencies_[i - 1], "ladder frequencies must be strictly increasing");
            }
        }
    }

    /// f_i = 2^(i-1), i = 1..count.
    static FrequencyLadder doubling(std::size_t count)
    {
        require(count >= 1, "ladder needs at least one frequency");
        std::vector<double> f(count);
        for (std::size_t i = 0; i < count; ++i) {
            f[i] = std::ldexp(1.0, static_cast<int>(i));
        }
        return FrequencyLadder(std::move(f));
    }

    const std::vector<double>& frequencies() const noexcept { return frequencies_; }
    std::size_t count() const noexcept { return frequencies_.size(); }
    double highest() const { return frequencies_.back(); }

private:
    std::vector<double> frequencies_;
};

/// N phase-shifted images at one frequency, offsets 2*pi*n/N (zero-based n).
struct FringeSet {
    double frequency = 0.0;
    std::vector<FringeImage> images;

    std::size_t phase_steps() const noexcept { return images.size(); }
    std::size_t width() const { return images.front().width(); }
    std::size_t height() const { return images.front().height(); }

    double offset(std::size_t n) const { return phase_offset(n, images.size()); }
    std::vector<double> offsets() const
    {
        std::vector<double> out(images.size());
        for (std::size_t n = 0; n < out.size(); ++n) {
            out[n] = offset(n);
        }
        return out;
    }

    static double phase_offset(std::size_t n, std::size_t steps)
    {
        return kTwoPi * static_cast<double>(n) / static_cast<double>(steps);
    }

    void validate() const
    {
        require(frequency > 0.0, "fringe set frequency must be positive");
        require(images.size() >= 3, "fringe set needs at least 3 phase steps");
        for (const auto& img : images) {
            require(img.same_shape(images.front()), "fringe set images must share dimensions");
        }
    }
};

/// Wrapped phase in (-pi, pi]. Masked pixels carry NaN.
struct PhaseMap {
    Grid<double> phase;
    Grid<std::uint8_t> valid;
    double frequency = 0.0;

    std::size_t width() const noexcept { return phase.width(); }
    std::size_t height() const noexcept { return phase.height(); }
    std::size_t valid_count() const
    {
        std::size_t count = 0;
        for (auto v : valid) {
            count += v != 0;
        }
        return count;
    }
};

/// Unwrapped phase Phi = 2*pi*K + phi together with the fringe order K.
struct AbsolutePhaseMap {
    Grid<double> phase;
    Grid<std::int64_t> order;
    Grid<std::uint8_t> valid;
    double frequency = 0.0;

    std::size_t width() const noexcept { return phase.width(); }
    std::size_t height() const noexcept { return phase.height(); }
};

/// Maps any angle into (-pi, pi]; the branch cut resolves to +pi.
inline double wrap_phase(double angle)
{
    double r = std::atan2(std::sin(angle), std::cos(angle));
    return r <= -kPi ? kPi : r;
}

/// Nearest integer, ties away from zero.
inline std::int64_t round_half_away(double value)
{
    return static_cast<std::int64_t>(std::round(value));
}

inline double carrier_phase(std::size_t x, std::size_t width, double frequency)
{
    return kTwoPi * frequency * static_cast<double>(x) / static_cast<double>(width);
}

/// I = a + b*cos(z*f*c + carrier(x) + offset).
inline FringeImage render_fringe(const Surface& surface, double frequency, double offset, const RenderParams& params)
{
    params.validate();
    require(!surface.depth.empty(), "surface must not be empty");
    require(frequency > 0.0, "frequency must be positive");
    constexpr double kSlack = 1e-12;
    const std::size_t w = surface.width();
    const std::size_t h = surface.height();
    FringeImage image(w, h);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double phase = surface.depth(x, y) * frequency * params.phase_constant + offset;
            if (params.carrier_enabled) {
                phase += carrier_phase(x, w, frequency);
            }
            double v = params.background + params.modulation * std::cos(phase);
            if (v < 0.0 || v > 1.0) {
                if (v < -kSlack || v > 1.0 + kSlack || !std::isfinite(v)) {
                    throw NumericError("rendered intensity out of range: " + std::to_string(v));
                }
                v = std::clamp(v, 0.0, 1.0);
            }
            image(x, y) = v;
        }
    }
    return image;
}

/// Variant with an explicit target size check.
inline FringeImage render_fringe(const Surface& surface, std::size_t width, std::size_t height, double frequency,
                                 double offset, const RenderParams& params)
{
    require(surface.width() == width && surface.height() == height, "surface dimensions do not match image size");
    return render_fringe(surface, frequency, offset, params);
}

inline FringeSet render_set(const Surface& surface, double frequency, std::size_t steps, const RenderParams& params)
{
    require(steps >= 3, "phase steps must be at least 3 for least-squares demodulation");
    FringeSet set;
    set.frequency = frequency;
    set.images.reserve(steps);
    for (std::size_t n = 0; n < steps; ++n) {
        set.images.push_back(render_fringe(surface, frequency, FringeSet::phase_offset(n, steps), params));
    }
    return set;
}

/// Least-squares phase: atan2(-sum I sin d, sum I cos d). Pixels whose
/// modulation estimate (2/N)*|sum I e^{-i d}| falls below the threshold are masked.
inline PhaseMap wrapped_phase(const FringeSet& set, double modulation_threshold = kDefaultModulationThreshold)
{
    set.validate();
    const std::size_t steps = set.phase_steps();
    std::vector<double> sin_d(steps), cos_d(steps);
    for (std::size_t n = 0; n < steps; ++n) {
        sin_d[n] = std::sin(set.offset(n));
        cos_d[n] = std::cos(set.offset(n));
    }
    PhaseMap out{Grid<double>(set.width(), set.height()), Grid<std::uint8_t>(set.width(), set.height()),
                 set.frequency};
    const double scale = 2.0 / static_cast<double>(steps);
    for (std::size_t i = 0; i < out.phase.size(); ++i) {
        double s = 0.0;
        double c = 0.0;
        for (std::size_t n = 0; n < steps; ++n) {
            s += set.images[n][i] * sin_d[n];
            c += set.images[n][i] * cos_d[n];
        }
        const double modulation = scale * std::hypot(s, c);
        if (modulation < modulation_threshold || !(modulation > 0.0)) {
            out.phase[i] = std::numeric_limits<double>::quiet_NaN();
            out.valid[i] = 0;
            continue;
        }
        double phi = std::atan2(-s, c);
        out.phase[i] = phi <= -kPi ? kPi : phi;
        out.valid[i] = 1;
    }
    return out;
}

/// One temporal unwrapping step with ratio r = f_cur / f_prev:
/// K = INT((r*Phi_prev - phi) / 2pi), Phi = 2pi*K + phi.
inline AbsolutePhaseMap unwrap_step(const AbsolutePhaseMap& previous, const PhaseMap& wrapped)
{
    require(previous.frequency > 0.0 && wrapped.frequency > previous.frequency,
            "unwrap_step requires strictly increasing frequency");
    require(previous.phase.same_shape(wrapped.phase), "unwrap_step maps must share dimensions");
    const double ratio = wrapped.frequency / previous.frequency;
    const std::size_t w = wrapped.width();
    const std::size_t h = wrapped.height();
    AbsolutePhaseMap out{Grid<double>(w, h), Grid<std::int64_t>(w, h), Grid<std::uint8_t>(w, h), wrapped.frequency};
    for (std::size_t i = 0; i < out.phase.size(); ++i) {
        if (!previous.valid[i] || !wrapped.valid[i]) {
            out.phase[i] = std::numeric_limits<double>::quiet_NaN();
            out.valid[i] = 0;
            continue;
        }
        const std::int64_t k = round_half_away((ratio * previous.phase[i] - wrapped.phase[i]) / kTwoPi);
        out.order[i] = k;
        out.phase[i] = kTwoPi * static_cast<double>(k) + wrapped.phase[i];
        out.valid[i] = 1;
    }
    return out;
}

/// The lowest frequency's absolute phase is its wrapped phase (order 0).
inline AbsolutePhaseMap absolute_from_base(const PhaseMap& base)
{
    AbsolutePhaseMap out{base.phase, Grid<std::int64_t>(base.width(), base.height(), 0), base.valid, base.frequency};
    return out;
}

/// Chains unwrap_step over a ladder starting at f_1 = 1. The last entry is
/// the measurement output.
inline std::vector<AbsolutePhaseMap> unwrap_ladder(const std::vector<PhaseMap>& wrapped_maps)
{
    require(!wrapped_maps.empty(), "unwrap_ladder needs at least one phase map");
    std::vector<double> freqs;
    freqs.reserve(wrapped_maps.size());
    for (const auto& m : wrapped_maps) {
        freqs.push_back(m.frequency);
    }
    FrequencyLadder ladder(freqs);  // validates ordering and f_1 = 1

    std::vector<AbsolutePhaseMap> out;
    out.reserve(wrapped_maps.size());
    out.push_back(absolute_from_base(wrapped_maps.front()));
    for (std::size_t i = 1; i < wrapped_maps.size(); ++i) {
        out.push_back(unwrap_step(out.back(), wrapped_maps[i]));
    }
    return out;
}

/// Ladder unwrapping with a known carrier: the base level is resolved as
/// carrier + wrap(phi - carrier), which is exact while |z*f_1*c| < pi.
inline std::vector<AbsolutePhaseMap> unwrap_ladder(const std::vector<PhaseMap>& wrapped_maps,
                                                   const RenderParams& params)
{
    if (!params.carrier_enabled) {
        return unwrap_ladder(wrapped_maps);
    }
    require(!wrapped_maps.empty(), "unwrap_ladder needs at least one phase map");
    const PhaseMap& base = wrapped_maps.front();
    std::vector<PhaseMap> rebased = wrapped_maps;
    for (std::size_t y = 0; y < base.height(); ++y) {
        for (std::size_t x = 0; x < base.width(); ++x) {
            if (!base.valid(x, y)) {
                continue;
            }
            const double carrier = carrier_phase(x, base.width(), base.frequency);
            rebased.front().phase(x, y) = carrier + wrap_phase(base.phase(x, y) - carrier);
        }
    }
    auto out = unwrap_ladder(rebased);
    out.front().phase = base.phase;
    for (std::size_t i = 0; i < base.phase.size(); ++i) {
        if (base.valid[i]) {
            out.front().order[i] = round_half_away((rebased.front().phase[i] - base.phase[i]) / kTwoPi);
            out.front().phase[i] = rebased.front().phase[i];
        }
    }
    return out;
}

struct OrderError {
    double delta_k = 0.0;
    bool safe = true;
};

/// Fringe-order error caused by phase errors at consecutive doubling frequencies.
/// Unwrapping stays correct while |2*d_prev - d_cur| < pi.
inline OrderError order_error(double delta_prev, double delta_cur)
{
    const double excess = 2.0 * delta_prev - delta_cur;
    return {excess / kTwoPi, std::abs(excess) < kPi};
}

/// z_th = l*c_1 / (f_s*d), in mm.
inline double restricted_depth(const SystemGeometry& geometry, double highest_frequency)
{
    geometry.validate();
    require(highest_frequency > 0.0, "highest frequency must be positive");
    return geometry.camera_to_reference_mm * geometry.projected_width_mm /
           (highest_frequency * geometry.projector_to_camera_mm);
}

/// Depth whose phase term z*f_s*c spans one fringe period: 2*pi/(f_s*c).
inline double restricted_depth_sim(const RenderParams& params, double highest_frequency)
{
    require(highest_frequency > 0.0, "highest frequency must be positive");
    require(params.phase_constant > 0.0, "phase_constant must be positive");
    return kTwoPi / (highest_frequency * params.phase_constant);
}

/// z = (Phi - carrier) / (f*c). Masked pixels get depth 0.
inline Surface height_from_phase(const AbsolutePhaseMap& abs_phase, const RenderParams& params)
{
    const double scale = abs_phase.frequency * params.phase_constant;
    require(scale != 0.0 && std::isfinite(scale), "height_from_phase needs nonzero f*c");
    const std::size_t w = abs_phase.width();
    const std::size_t h = abs_phase.height();
    Surface surface{Grid<double>(w, h), std::numeric_limits<double>::infinity(),
                    -std::numeric_limits<double>::infinity()};
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            if (!abs_phase.valid(x, y)) {
                continue;
            }
            double phi = abs_phase.phase(x, y);
            if (params.carrier_enabled) {
                phi -= carrier_phase(x, w, abs_phase.frequency);
            }
            const double z = phi / scale;
            surface.depth(x, y) = z;
            surface.range_min = std::min(surface.range_min, z);
            surface.range_max = std::max(surface.range_max, z);
        }
    }
    if (surface.range_min > surface.range_max) {
        surface.range_min = surface.range_max = 0.0;
    }
    return surface;
}

} // namespace phaseforge
