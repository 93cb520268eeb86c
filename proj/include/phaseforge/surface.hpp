#pragma once

// Synthetic ground truth: random smooth surfaces, multi-frequency rendering
// and camera noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "error.hpp"
#include "fringe.hpp"
#include "grid.hpp"
#include "random.hpp"

namespace phaseforge {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct SurfaceGenConfig {
    std::uint64_t seed = 0;
    Interval amplitude_range{5.0, 55.0};
    Interval sigma_range{2.0, 125.0};
    Interval depth_range{0.0, 6.28};
    std::size_t width = 64;
    std::size_t height = 64;

    void validate() const
    {
        require(width >= 1 && height >= 1, "surface size must be nonzero");
        require(amplitude_range.lo > 0.0 && amplitude_range.hi >= amplitude_range.lo,
                "amplitude_range must be strictly positive");
        require(sigma_range.lo > 0.0 && sigma_range.hi >= sigma_range.lo, "sigma_range must be strictly positive");
        require(depth_range.lo < depth_range.hi, "depth_range min must be below max");
    }
};

/// Scipy-style "reflect" boundary: (d c b a | a b c d | d c b a).
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n)
{
    const auto period = static_cast<std::ptrdiff_t>(2 * n);
    std::ptrdiff_t m = i % period;
    if (m < 0) {
        m += period;
    }
    if (m >= static_cast<std::ptrdiff_t>(n)) {
        m = period - 1 - m;
    }
    return static_cast<std::size_t>(m);
}

/// Normalized Gaussian taps over [-half, half], half = ceil(3*sigma).
inline std::vector<double> gaussian_kernel(double sigma, std::size_t half)
{
    std::vector<double> taps(2 * half + 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < taps.size(); ++i) {
        const double d = static_cast<double>(i) - static_cast<double>(half);
        taps[i] = std::exp(-0.5 * d * d / (sigma * sigma));
        sum += taps[i];
    }
    for (auto& t : taps) {
        t /= sum;
    }
    return taps;
}

/// Separable Gaussian blur with reflective padding, truncated at 3 sigma.
/// Sigma is capped so the kernel half-width never exceeds max(width, height).
inline Grid<double> gaussian_filter(const Grid<double>& input, double sigma)
{
    require(sigma > 0.0, "gaussian sigma must be positive");
    const std::size_t w = input.width();
    const std::size_t h = input.height();
    const std::size_t limit = std::max(w, h);
    auto half = static_cast<std::size_t>(std::ceil(3.0 * sigma));
    if (half > limit) {
        half = limit;
        sigma = static_cast<double>(limit) / 3.0;
    }
    const auto taps = gaussian_kernel(sigma, half);
    const auto offset = static_cast<std::ptrdiff_t>(half);

    Grid<double> rows(w, h);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::size_t k = 0; k < taps.size(); ++k) {
                const auto sx = reflect_index(static_cast<std::ptrdiff_t>(x) + static_cast<std::ptrdiff_t>(k) - offset, w);
                acc += taps[k] * input(sx, y);
            }
            rows(x, y) = acc;
        }
    }
    Grid<double> out(w, h);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::size_t k = 0; k < taps.size(); ++k) {
                const auto sy = reflect_index(static_cast<std::ptrdiff_t>(y) + static_cast<std::ptrdiff_t>(k) - offset, h);
                acc += taps[k] * rows(x, sy);
            }
            out(x, y) = acc;
        }
    }
    return out;
}

/// Filtered random field before rescaling, with the amplitude and sigma drawn for it.
struct SmoothField {
    Grid<double> values;
    double amplitude = 0.0;
    double sigma = 0.0;
};

inline SmoothField smooth_random_field(const SurfaceGenConfig& config)
{
    config.validate();
    Rng rng(config.seed);
    SmoothField field;
    field.amplitude = rng.uniform(config.amplitude_range.lo, config.amplitude_range.hi);
    field.sigma = rng.uniform(config.sigma_range.lo, config.sigma_range.hi);
    Grid<double> noise(config.width, config.height);
    for (auto& v : noise) {
        v = rng.uniform(0.0, field.amplitude);
    }
    field.values = gaussian_filter(noise, field.sigma);
    return field;
}

/// Random smooth surface: uniform noise of random amplitude, Gaussian blur of
/// random width, then min-max rescaled into the target depth range.
inline Surface generate_surface(const SurfaceGenConfig& config)
{
    const SmoothField field = smooth_random_field(config);
    const auto [lo_it, hi_it] = std::minmax_element(field.values.begin(), field.values.end());
    const double lo = *lo_it;
    const double span = *hi_it - lo;
    const double target_lo = config.depth_range.lo;
    const double target_span = config.depth_range.hi - config.depth_range.lo;

    Surface surface{Grid<double>(config.width, config.height), config.depth_range.lo, config.depth_range.hi};
    for (std::size_t i = 0; i < surface.depth.size(); ++i) {
        const double t = span > 0.0 ? (field.values[i] - lo) / span : 0.0;
        surface.depth[i] = std::clamp(target_lo + t * target_span, config.depth_range.lo, config.depth_range.hi);
    }
    return surface;
}

inline Surface flat_surface(std::size_t width, std::size_t height, double depth)
{
    return Surface{Grid<double>(width, height, depth), depth, depth};
}

inline std::vector<FringeSet> render_scene(const Surface& surface, const std::vector<double>& frequencies,
                                           std::size_t steps, const RenderParams& params)
{
    require(!frequencies.empty(), "render_scene needs at least one frequency");
    std::vector<FringeSet> sets;
    sets.reserve(frequencies.size());
    for (double f : frequencies) {
        sets.push_back(render_set(surface, f, steps, params));
    }
    return sets;
}

/// Adds i.i.d. zero-mean Gaussian noise and clamps to [0, 1]. Sigma 0 is the identity.
inline FringeImage add_noise(const FringeImage& image, double gaussian_sigma, std::uint64_t seed)
{
    require(gaussian_sigma >= 0.0, "noise sigma must be nonnegative");
    FringeImage out = image;
    if (gaussian_sigma == 0.0) {
        return out;
    }
    Rng rng(seed);
    for (auto& v : out) {
        v = std::clamp(v + gaussian_sigma * rng.normal(), 0.0, 1.0);
    }
    return out;
}

} // namespace phaseforge
