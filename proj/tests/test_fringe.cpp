#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <numbers>

#include "phaseforge/fringe.hpp"
#include "phaseforge/random.hpp"
#include "phaseforge/surface.hpp"

using namespace phaseforge;

namespace {

constexpr double pi = std::numbers::pi;

/// Analytic fringe set for a per-pixel phase map, built without render_fringe.
FringeSet analytic_set(const Grid<double>& phi, std::size_t steps, double a, double b, double frequency = 1.0)
{
    FringeSet set;
    set.frequency = frequency;
    for (std::size_t n = 0; n < steps; ++n) {
        const double delta = 2.0 * pi * static_cast<double>(n) / static_cast<double>(steps);
        FringeImage img(phi.width(), phi.height());
        for (std::size_t i = 0; i < phi.size(); ++i) {
            img[i] = a + b * std::cos(phi[i] + delta);
        }
        set.images.push_back(img);
    }
    return set;
}

/// Reference wrap: shift into (-pi, pi] by whole turns.
double wrap_reference(double angle)
{
    double r = std::fmod(angle, 2.0 * pi);
    if (r > pi) {
        r -= 2.0 * pi;
    }
    if (r <= -pi) {
        r += 2.0 * pi;
    }
    return r;
}

double angular_distance(double a, double b) { return std::abs(wrap_reference(a - b)); }

AbsolutePhaseMap constant_absolute(double value, double frequency, std::size_t w = 1, std::size_t h = 1)
{
    return AbsolutePhaseMap{Grid<double>(w, h, value), Grid<std::int64_t>(w, h, 0), Grid<std::uint8_t>(w, h, 1),
                            frequency};
}

PhaseMap constant_wrapped(double value, double frequency, std::size_t w = 1, std::size_t h = 1)
{
    return PhaseMap{Grid<double>(w, h, value), Grid<std::uint8_t>(w, h, 1), frequency};
}

} // namespace

TEST(WrapPhase, RangeAndBranchCut)
{
    EXPECT_DOUBLE_EQ(wrap_phase(pi), pi);
    EXPECT_NEAR(wrap_phase(-pi), pi, 1e-15);
    EXPECT_NEAR(wrap_phase(3 * pi), pi, 1e-12);
    EXPECT_NEAR(wrap_phase(2 * pi + 0.3), 0.3, 1e-12);
    EXPECT_NEAR(wrap_phase(-0.3), -0.3, 1e-15);
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double x = rng.uniform(-100, 100);
        const double w = wrap_phase(x);
        ASSERT_GT(w, -pi);
        ASSERT_LE(w, pi);
        ASSERT_LT(angular_distance(w, x), 1e-9);
    }
}

TEST(RoundHalfAway, Ties)
{
    EXPECT_EQ(round_half_away(2.5), 3);
    EXPECT_EQ(round_half_away(-2.5), -3);
    EXPECT_EQ(round_half_away(2.4999), 2);
    EXPECT_EQ(round_half_away(-0.5), -1);
}

TEST(RenderParams, RejectsOutOfRangeIntensity)
{
    Surface s = flat_surface(4, 4, 0.0);
    RenderParams bad;
    bad.background = 0.6;
    bad.modulation = 0.5;
    EXPECT_THROW(render_fringe(s, 1.0, 0.0, bad), InvalidInput);
    RenderParams zero_c;
    zero_c.phase_constant = 0.0;
    EXPECT_THROW(render_fringe(s, 1.0, 0.0, zero_c), InvalidInput);
}

TEST(RenderFringe, FlatSurfaceIsUniformWhite)
{
    const auto img = render_fringe(flat_surface(8, 5, 0.0), 3.0, 0.0, RenderParams{});
    for (double v : img) {
        EXPECT_EQ(v, 1.0);
    }
}

TEST(RenderFringe, DimensionCheck)
{
    EXPECT_THROW(render_fringe(flat_surface(8, 5, 0.0), 9, 5, 1.0, 0.0, RenderParams{}), InvalidInput);
    EXPECT_NO_THROW(render_fringe(flat_surface(8, 5, 0.0), 8, 5, 1.0, 0.0, RenderParams{}));
}

TEST(RenderFringe, RampGivesOneCyclePerRow)
{
    // z ramps 0 -> 2pi/(f*c) across the width: the row intensity minus the
    // background changes sign exactly twice in one cosine period.
    const std::size_t w = 200;
    const double f = 4.0;
    RenderParams p;
    Surface s{Grid<double>(w, 3), 0.0, 0.0};
    const double top = 2.0 * pi / (f * p.phase_constant);
    for (std::size_t y = 0; y < 3; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            s.depth(x, y) = top * (static_cast<double>(x) + 0.5) / static_cast<double>(w);
        }
    }
    const auto img = render_fringe(s, f, 0.0, p);
    for (std::size_t y = 0; y < 3; ++y) {
        int crossings = 0;
        for (std::size_t x = 1; x < w; ++x) {
            const double a = img(x - 1, y) - p.background;
            const double b = img(x, y) - p.background;
            crossings += (a > 0) != (b > 0);
        }
        EXPECT_EQ(crossings, 2);
    }
}

TEST(RenderFringe, CarrierAddsOneCyclePerFrequencyUnit)
{
    RenderParams p;
    p.carrier_enabled = true;
    const std::size_t w = 256;
    const auto img = render_fringe(flat_surface(w, 1, 0.0), 3.0, 0.0, p);
    int crossings = 0;
    for (std::size_t x = 1; x < w; ++x) {
        crossings += ((img(x - 1, 0) - 0.5) > 0) != ((img(x, 0) - 0.5) > 0);
    }
    EXPECT_EQ(crossings, 6);
}

TEST(RenderSet, FourStepQuadrature)
{
    RenderParams p;
    const double phi = 0.7;
    const double z = phi / (2.0 * p.phase_constant);
    const auto set = render_set(flat_surface(2, 2, z), 2.0, 4, p);
    ASSERT_EQ(set.phase_steps(), 4u);
    const double a = p.background;
    const double b = p.modulation;
    EXPECT_NEAR(set.images[0][0], a + b * std::cos(phi), 1e-12);
    EXPECT_NEAR(set.images[1][0], a - b * std::sin(phi), 1e-12);
    EXPECT_NEAR(set.images[2][0], a - b * std::cos(phi), 1e-12);
    EXPECT_NEAR(set.images[3][0], a + b * std::sin(phi), 1e-12);
}

TEST(RenderSet, OffsetsAndValidation)
{
    const auto set = render_set(flat_surface(3, 3, 1.0), 1.0, 12, RenderParams{});
    const auto offsets = set.offsets();
    for (std::size_t n = 0; n < 12; ++n) {
        EXPECT_NEAR(offsets[n], 2.0 * pi * static_cast<double>(n) / 12.0, 1e-12);
    }
    EXPECT_THROW(render_set(flat_surface(3, 3, 1.0), 1.0, 2, RenderParams{}), InvalidInput);
}

TEST(WrappedPhase, ZeroPhase)
{
    const auto m = wrapped_phase(analytic_set(Grid<double>(4, 4, 0.0), 5, 0.5, 0.5));
    for (double v : m.phase) {
        EXPECT_NEAR(v, 0.0, 1e-12);
    }
    EXPECT_EQ(m.valid_count(), 16u);
}

TEST(WrappedPhase, ThreeStepInjectedPhase)
{
    const auto m = wrapped_phase(analytic_set(Grid<double>(1, 1, 1.0), 3, 0.5, 0.4));
    EXPECT_NEAR(m.phase[0], 1.0, 1e-9);
}

TEST(WrappedPhase, UniformGrayIsMasked)
{
    const auto m = wrapped_phase(analytic_set(Grid<double>(3, 2, 0.4), 4, 0.5, 0.0));
    EXPECT_EQ(m.valid_count(), 0u);
    for (double v : m.phase) {
        EXPECT_TRUE(std::isnan(v));
    }
}

TEST(WrappedPhase, ThresholdBoundary)
{
    const auto set = analytic_set(Grid<double>(1, 1, 0.3), 4, 0.5, 0.01);
    EXPECT_EQ(wrapped_phase(set, 0.009).valid_count(), 1u);
    EXPECT_EQ(wrapped_phase(set, 0.011).valid_count(), 0u);
}

TEST(WrappedPhase, RandomizedExactness)
{
    Rng rng(2024);
    for (int trial = 0; trial < 600; ++trial) {
        const std::size_t steps = std::array<std::size_t, 4>{3, 4, 7, 12}[trial % 4];
        const double b = rng.uniform(0.05, 0.5);
        const double a = rng.uniform(b, 1.0 - b);
        const double phi = rng.uniform(-40.0, 40.0);
        const auto m = wrapped_phase(analytic_set(Grid<double>(1, 1, phi), steps, a, b));
        ASSERT_EQ(m.valid_count(), 1u);
        ASSERT_GT(m.phase[0], -pi);
        ASSERT_LE(m.phase[0], pi);
        ASSERT_LT(angular_distance(m.phase[0], phi), 1e-9) << "N=" << steps << " phi=" << phi;
    }
}

TEST(WrappedPhase, BackgroundOffsetInvariance)
{
    Rng rng(5);
    Grid<double> phi(6, 6);
    for (auto& v : phi) {
        v = rng.uniform(-pi, pi);
    }
    const auto base = analytic_set(phi, 6, 0.4, 0.3);
    auto shifted = base;
    for (auto& img : shifted.images) {
        for (auto& v : img) {
            v += 0.17;
        }
    }
    const auto p0 = wrapped_phase(base);
    const auto p1 = wrapped_phase(shifted);
    for (std::size_t i = 0; i < phi.size(); ++i) {
        EXPECT_LT(angular_distance(p0.phase[i], p1.phase[i]), 1e-12);
    }
}

TEST(WrappedPhase, RenderRoundTrip)
{
    for (bool carrier : {false, true}) {
        RenderParams p;
        p.carrier_enabled = carrier;
        SurfaceGenConfig sc;
        sc.seed = 77;
        sc.depth_range = {0.0, 20.0};
        const auto s = generate_surface(sc);
        const auto m = wrapped_phase(render_set(s, 5.0, 4, p));
        for (std::size_t y = 0; y < s.height(); ++y) {
            for (std::size_t x = 0; x < s.width(); ++x) {
                double truth = s.depth(x, y) * 5.0 * p.phase_constant;
                if (carrier) {
                    truth += 2.0 * pi * 5.0 * static_cast<double>(x) / static_cast<double>(s.width());
                }
                ASSERT_LT(angular_distance(m.phase(x, y), truth), 1e-9);
            }
        }
    }
}

TEST(UnwrapStep, NullCase)
{
    const auto out = unwrap_step(constant_absolute(0.0, 1.0, 3, 3), constant_wrapped(0.0, 2.0, 3, 3));
    for (std::size_t i = 0; i < 9; ++i) {
        EXPECT_EQ(out.order[i], 0);
        EXPECT_EQ(out.phase[i], 0.0);
    }
}

TEST(UnwrapStep, HandEvaluatedPixel)
{
    const auto out = unwrap_step(constant_absolute(3 * pi, 1.0), constant_wrapped(0.1, 2.0));
    EXPECT_EQ(out.order[0], 3);
    EXPECT_NEAR(out.phase[0], 2 * pi * 3 + 0.1, 1e-12);
}

TEST(UnwrapStep, RatioTwoMatchesLiteralDoublingFormula)
{
    Rng rng(3);
    for (int i = 0; i < 2000; ++i) {
        const double prev = rng.uniform(-50.0, 50.0);
        const double phi = rng.uniform(-pi, pi);
        const auto out = unwrap_step(constant_absolute(prev, 4.0), constant_wrapped(phi, 8.0));
        const double k = std::round((2.0 * prev - phi) / (2.0 * pi));
        ASSERT_EQ(static_cast<double>(out.order[0]), k);
        ASSERT_EQ(out.phase[0], 2.0 * pi * k + phi);
    }
}

TEST(UnwrapStep, Rejections)
{
    EXPECT_THROW(unwrap_step(constant_absolute(0.0, 2.0), constant_wrapped(0.0, 2.0)), InvalidInput);
    EXPECT_THROW(unwrap_step(constant_absolute(0.0, 1.0, 2, 2), constant_wrapped(0.0, 2.0, 3, 2)), InvalidInput);
}

TEST(UnwrapStep, MaskPropagates)
{
    auto prev = constant_absolute(1.0, 1.0, 2, 1);
    prev.valid[1] = 0;
    const auto out = unwrap_step(prev, constant_wrapped(0.5, 2.0, 2, 1));
    EXPECT_EQ(out.valid[0], 1);
    EXPECT_EQ(out.valid[1], 0);
    EXPECT_TRUE(std::isnan(out.phase[1]));
}

TEST(FrequencyLadder, Validation)
{
    EXPECT_NO_THROW(FrequencyLadder({1, 2, 4}));
    EXPECT_THROW(FrequencyLadder({2, 4}), InvalidInput);
    EXPECT_THROW(FrequencyLadder({1, 4, 4}), InvalidInput);
    EXPECT_THROW(FrequencyLadder(std::vector<double>{}), InvalidInput);
    const auto d = FrequencyLadder::doubling(7);
    EXPECT_EQ(d.frequencies().back(), 64.0);
}

TEST(UnwrapLadder, SingleLevelIsVerbatim)
{
    const auto m = constant_wrapped(0.25, 1.0, 2, 2);
    const auto out = unwrap_ladder({m});
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].phase, m.phase);
}

TEST(UnwrapLadder, DoublingLadderOnRandomSurface)
{
    RenderParams p;
    SurfaceGenConfig sc;
    sc.seed = 12;
    sc.depth_range = {0.0, 0.9 * pi / p.phase_constant};
    const auto s = generate_surface(sc);
    std::vector<PhaseMap> maps;
    for (double f = 1; f <= 64; f *= 2) {
        maps.push_back(wrapped_phase(render_set(s, f, 4, p)));
    }
    const auto abs = unwrap_ladder(maps);
    ASSERT_EQ(abs.size(), 7u);
    for (std::size_t i = 0; i < s.depth.size(); ++i) {
        const double truth = s.depth[i] * 64.0 * p.phase_constant;
        ASSERT_NEAR(abs.back().phase[i], truth, 1e-6);
        ASSERT_EQ(abs.back().order[i], round_half_away((truth - wrap_phase(truth)) / (2 * pi)));
        ASSERT_GE(abs.back().order[i], 0);
        // wrap consistency
        ASSERT_NEAR(abs.back().phase[i] - 2 * pi * static_cast<double>(abs.back().order[i]), maps.back().phase[i], 1e-9);
    }
}

TEST(UnwrapLadder, CarrierReferencedBase)
{
    RenderParams p;
    p.carrier_enabled = true;
    SurfaceGenConfig sc;
    sc.seed = 31;
    sc.depth_range = {0.0, 0.9 * pi / p.phase_constant};
    const auto s = generate_surface(sc);
    std::vector<PhaseMap> maps;
    for (double f = 1; f <= 16; f *= 2) {
        maps.push_back(wrapped_phase(render_set(s, f, 5, p)));
    }
    const auto abs = unwrap_ladder(maps, p);
    for (std::size_t y = 0; y < s.height(); ++y) {
        for (std::size_t x = 0; x < s.width(); ++x) {
            const double truth = s.depth(x, y) * 16.0 * p.phase_constant + carrier_phase(x, s.width(), 16.0);
            ASSERT_NEAR(abs.back().phase(x, y), truth, 1e-6);
        }
    }
}

TEST(OrderError, Examples)
{
    const auto zero = order_error(0.0, 0.0);
    EXPECT_EQ(zero.delta_k, 0.0);
    EXPECT_TRUE(zero.safe);
    const auto bad = order_error(0.2 * pi, -0.7 * pi);
    EXPECT_NEAR(bad.delta_k, 1.1 / 2.0, 1e-12);
    EXPECT_FALSE(bad.safe);
    EXPECT_TRUE(order_error(0.1, 0.1).safe);
}

TEST(RestrictedDepth, GeometricForm)
{
    SystemGeometry g;
    EXPECT_NEAR(restricted_depth(g, 64.0), 72.9167, 1e-3);
    EXPECT_NEAR(restricted_depth(g, 128.0), restricted_depth(g, 64.0) / 2.0, 1e-12);
    SystemGeometry unit{1.0, 1.0, 1.0, 1.0};
    EXPECT_DOUBLE_EQ(restricted_depth(unit, 1.0), 1.0);
    EXPECT_THROW(restricted_depth(g, 0.0), InvalidInput);
}

TEST(RestrictedDepth, SimulationForm)
{
    RenderParams p;
    EXPECT_NEAR(restricted_depth_sim(p, 35.0), 2 * pi, 1e-12);
    RenderParams unit;
    unit.phase_constant = 1.0;
    EXPECT_NEAR(restricted_depth_sim(unit, 2 * pi), 1.0, 1e-15);
    RenderParams doubled = p;
    doubled.phase_constant *= 2.0;
    EXPECT_NEAR(restricted_depth_sim(doubled, 35.0), restricted_depth_sim(p, 35.0) / 2.0, 1e-12);
}

TEST(HeightFromPhase, ZeroPhaseZeroHeight)
{
    const auto s = height_from_phase(constant_absolute(0.0, 8.0, 3, 3), RenderParams{});
    for (double z : s.depth) {
        EXPECT_EQ(z, 0.0);
    }
}

TEST(HeightFromPhase, PhaseEqualsHeightAtReferenceConstants)
{
    const auto s = height_from_phase(constant_absolute(4.2, 35.0), RenderParams{});
    EXPECT_NEAR(s.depth[0], 4.2, 1e-12);
}

TEST(HeightFromPhase, MaskedPixelsAreZero)
{
    auto abs = constant_absolute(5.0, 35.0, 2, 1);
    abs.valid[0] = 0;
    const auto s = height_from_phase(abs, RenderParams{});
    EXPECT_EQ(s.depth[0], 0.0);
    EXPECT_NEAR(s.depth[1], 5.0, 1e-12);
}

TEST(HeightFromPhase, FullRoundTrip)
{
    for (bool carrier : {false, true}) {
        RenderParams p;
        p.carrier_enabled = carrier;
        SurfaceGenConfig sc;
        sc.seed = 99;
        sc.depth_range = {0.0, 0.8 * pi / p.phase_constant};
        const auto s = generate_surface(sc);
        std::vector<PhaseMap> maps;
        for (double f = 1; f <= 64; f *= 2) {
            maps.push_back(wrapped_phase(render_set(s, f, 4, p)));
        }
        const auto z = height_from_phase(unwrap_ladder(maps, p).back(), p);
        for (std::size_t i = 0; i < s.depth.size(); ++i) {
            ASSERT_NEAR(z.depth[i], s.depth[i], 1e-6);
        }
    }
}

TEST(PeriodAmbiguity, HighestFrequencyIdenticalLowerDiffers)
{
    RenderParams p;
    const double shift = restricted_depth_sim(p, 35.0);
    const auto a = flat_surface(16, 16, 1.3);
    const auto b = flat_surface(16, 16, 1.3 + shift);
    const auto sa = render_set(a, 35.0, 12, p);
    const auto sb = render_set(b, 35.0, 12, p);
    double same = 0.0;
    for (std::size_t n = 0; n < 12; ++n) {
        for (std::size_t i = 0; i < sa.images[n].size(); ++i) {
            same = std::max(same, std::abs(sa.images[n][i] - sb.images[n][i]));
        }
    }
    EXPECT_LT(same, 1e-12);
    const auto la = render_set(a, 30.0, 12, p);
    const auto lb = render_set(b, 30.0, 12, p);
    double diff = 0.0;
    for (std::size_t n = 0; n < 12; ++n) {
        for (std::size_t i = 0; i < la.images[n].size(); ++i) {
            diff = std::max(diff, std::abs(la.images[n][i] - lb.images[n][i]));
        }
    }
    EXPECT_GT(diff, 0.1);
}
