#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>

#include "phaseforge/pipeline.hpp"

using namespace phaseforge;

namespace {

fs::path temp_dir(const std::string& name)
{
    auto p = fs::temp_directory_path() / ("pf_pipe_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

PhaseMap phase_map(std::size_t w, std::size_t h, double value)
{
    return PhaseMap{Grid<double>(w, h, value), Grid<std::uint8_t>(w, h, 1), 8.0};
}

int run_cli(const std::string& args, const fs::path& log)
{
    const std::string cmd = std::string(PHASEFORGE_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), {}};
}

} // namespace

TEST(Evaluate, IdenticalInputsGiveZeroErrors)
{
    RenderParams p;
    const auto s = flat_surface(12, 10, 3.0);
    const auto set = render_set(s, 8.0, 4, p);
    const auto m = evaluate(set, set);
    EXPECT_EQ(m.mean_abs_phase_error, 0.0);
    EXPECT_EQ(m.max_abs_phase_error, 0.0);
    EXPECT_EQ(m.mean_grayscale_error, 0.0);
    EXPECT_EQ(m.valid_pixel_count, 120u);
}

TEST(Evaluate, ConstantOffset)
{
    const auto gt = phase_map(8, 8, 3.1);
    const auto pred = phase_map(8, 8, 3.2);
    const auto m = evaluate(pred, gt);
    EXPECT_NEAR(m.mean_abs_phase_error, 0.1, 1e-12);
    EXPECT_NEAR(m.max_abs_phase_error, 0.1, 1e-12);
    // offset across the branch cut is still wrapped to 0.1
    const auto m2 = evaluate(phase_map(8, 8, -kPi + 0.05), phase_map(8, 8, kPi - 0.05));
    EXPECT_NEAR(m2.mean_abs_phase_error, 0.1, 1e-12);
}

TEST(Evaluate, MaskedPixelsAreExcluded)
{
    auto gt = phase_map(4, 4, 0.0);
    auto pred = phase_map(4, 4, 0.2);
    pred.phase[3] = 2.5;
    pred.valid[3] = 0;
    gt.valid[5] = 0;
    const auto m = evaluate(pred, gt);
    EXPECT_EQ(m.valid_pixel_count, 14u);
    EXPECT_NEAR(m.max_abs_phase_error, 0.2, 1e-12);
    EXPECT_EQ(m.phase_error_map[3], 0.0);
    for (double v : m.phase_error_map) {
        EXPECT_TRUE(std::isfinite(v));
    }
    EXPECT_THROW(evaluate(phase_map(4, 4, 0.0), phase_map(5, 4, 0.0)), InvalidInput);
}

TEST(Evaluate, OrderErrorRateFollowsPredicate)
{
    // Injected wrapped-phase errors at the two lowest rungs of a 1, 2 ladder;
    // the predicted rate is the fraction violating |2*dp - dc| < pi.
    const std::size_t w = 40;
    const std::size_t h = 1;
    Grid<double> depth(w, h, 0.0);
    RenderParams params;
    for (std::size_t x = 0; x < w; ++x) {
        depth(x, 0) = (0.3 + 0.1 * static_cast<double>(x) / w) / (2.0 * params.phase_constant);
    }
    Surface s{depth, 0.0, 1.0};
    const auto truth = unwrap_ladder({wrapped_phase(render_set(s, 1.0, 4, params)),
                                      wrapped_phase(render_set(s, 2.0, 4, params))});
    auto base = wrapped_phase(render_set(s, 1.0, 4, params));
    auto top = wrapped_phase(render_set(s, 2.0, 4, params));
    std::size_t predicted = 0;
    for (std::size_t x = 0; x < w; ++x) {
        const double dp = -1.2 * kPi / 2.0 + 1.2 * kPi * static_cast<double>(x) / (w - 1) * 0.999 + 0.0013;
        const double dc = 0.35;
        base.phase[x] = wrap_phase(base.phase[x] + dp);
        top.phase[x] = wrap_phase(top.phase[x] + dc);
        predicted += order_error(dp, dc).safe ? 0 : 1;
    }
    const auto got = unwrap_ladder({base, top});
    const auto m = evaluate(got.back(), truth.back());
    EXPECT_GT(predicted, 0u);
    EXPECT_NEAR(m.order_error_rate, static_cast<double>(predicted) / w, 1e-12);
}

TEST(Visualize, RangeMatchesScan)
{
    Grid<double> g(5, 3);
    for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] = std::sin(static_cast<double>(i)) * 2.0;
    }
    g[7] = std::numeric_limits<double>::quiet_NaN();
    const auto v = visualize(g);
    double lo = 1e300;
    double hi = -1e300;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (i != 7) {
            lo = std::min(lo, g[i]);
            hi = std::max(hi, g[i]);
        }
    }
    EXPECT_EQ(v.min, lo);
    EXPECT_EQ(v.max, hi);
    double img_lo = 1.0;
    double img_hi = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (i != 7) {
            img_lo = std::min(img_lo, v.image[i]);
            img_hi = std::max(img_hi, v.image[i]);
        }
    }
    EXPECT_EQ(img_lo, 0.0);
    EXPECT_EQ(img_hi, 1.0);
    EXPECT_EQ(v.image[7], 0.0);
}

TEST(Report, EmptyListIsValidJson)
{
    const auto dir = temp_dir("empty");
    const auto doc = report({}, dir);
    EXPECT_EQ(doc["count"], 0);
    const auto back = json::parse(slurp(dir / "report.json"));
    EXPECT_TRUE(back["entries"].empty());
    fs::remove_all(dir);
}

TEST(Report, WritesRastersAndRecordedRange)
{
    const auto dir = temp_dir("maps");
    RenderParams p;
    const auto s = flat_surface(16, 8, 2.0);
    const auto gt = render_set(s, 8.0, 4, p);
    auto pred = gt;
    for (std::size_t i = 0; i < pred.images[1].size(); ++i) {
        pred.images[1][i] = std::clamp(pred.images[1][i] + 0.01 * static_cast<double>(i % 5), 0.0, 1.0);
    }
    auto m = evaluate(pred, gt);
    m.label = "scene/0";
    const auto doc = report({m}, dir);
    const auto& e = doc["entries"][0];
    const auto raw = read_f32r(dir / e["phase_error"]["raster"].get<std::string>());
    const auto vis = read_pgm(dir / e["grayscale_error"]["visualization"].get<std::string>());
    EXPECT_EQ(raw.width(), 16u);
    EXPECT_EQ(vis.width(), 16u);
    const auto range = e["grayscale_error"]["range"];
    const auto v = visualize(m.grayscale_error_map);
    EXPECT_NEAR(range[0].get<double>(), v.min, 1e-15);
    EXPECT_NEAR(range[1].get<double>(), v.max, 1e-15);
    EXPECT_EQ(e["phase_error"]["raster"].get<std::string>().find('/'), std::string::npos);
    fs::remove_all(dir);
}

TEST(EndToEnd, ClassicalReproducesSurface)
{
    RunConfig cfg;
    cfg.surface.width = 48;
    cfg.surface.height = 32;
    for (bool carrier : {false, true}) {
        cfg.render.carrier_enabled = carrier;
        for (const auto& s : run_classical_e2e(cfg, 4)) {
            EXPECT_LT(s.height.max_abs, 1e-6) << s.label << " carrier " << carrier;
            EXPECT_EQ(s.height.valid, 48u * 32u);
        }
    }
}

TEST(EndToEnd, OracleStagesMatchClassicalBitForBit)
{
    RunConfig cfg;
    cfg.surface.width = 32;
    cfg.surface.height = 24;
    cfg.render.carrier_enabled = true;
    for (std::size_t i = 0; i < 3; ++i) {
        const auto truth = generate_surface(e2e_surface_config(cfg, i));
        const auto sets = render_ladder(truth, cfg);
        const auto classical = classical_retrieve(sets, cfg.render);
        const auto c_stage = oracle_transformer({sets.back()});
        const auto u_stage = oracle_transformer(std::vector<FringeSet>(sets.begin(), sets.end() - 1));
        const auto learned = end_to_end_retrieve({sets.back().images[0]}, c_stage, u_stage, cfg.ladder, cfg.render);
        EXPECT_EQ(learned.height.depth, classical.height.depth);
        EXPECT_EQ(learned.absolute().phase, classical.absolute().phase);
        EXPECT_EQ(learned.absolute().order, classical.absolute().order);
    }
}

TEST(EndToEnd, RejectsStagesOffTheLadder)
{
    RunConfig cfg;
    cfg.surface.width = 16;
    cfg.surface.height = 16;
    const auto truth = generate_surface(e2e_surface_config(cfg, 0));
    const auto sets = render_ladder(truth, cfg);
    const auto good_c = oracle_transformer({sets.back()});
    const auto short_u = oracle_transformer(std::vector<FringeSet>(sets.begin() + 1, sets.end() - 1));
    EXPECT_THROW(end_to_end_retrieve({sets.back().images[0]}, good_c, short_u, cfg.ladder, cfg.render), InvalidInput);
    const auto wrong_c = oracle_transformer({sets.front()});
    const auto good_u = oracle_transformer(std::vector<FringeSet>(sets.begin(), sets.end() - 1));
    EXPECT_THROW(end_to_end_retrieve({sets.back().images[0]}, wrong_c, good_u, cfg.ladder, cfg.render), InvalidInput);
}

TEST(Cli, ExitCodes)
{
    const auto dir = temp_dir("cli");
    const auto log = dir / "out.txt";
    EXPECT_EQ(run_cli("show-config", log), 0);
    EXPECT_EQ(run_cli("--no-such-flag", log), 1);
    EXPECT_EQ(run_cli("frobnicate", log), 1);
    std::ofstream(dir / "bad.json") << R"({"unknown_knob": 1})";
    EXPECT_EQ(run_cli("show-config --config " + (dir / "bad.json").string(), log), 2);
    EXPECT_NE(slurp(log).find("\"exit_code\":2"), std::string::npos);
    EXPECT_EQ(run_cli("phase --input " + (dir / "nowhere").string() + " --freq 8 --out x.f32r", log), 2);
}

TEST(Cli, GenDataIsDeterministicAndU2NeedsSecondFrequency)
{
    const auto dir = temp_dir("cli_data");
    std::ofstream(dir / "c.json") << R"({"seed": 3, "surface": {"width": 16, "height": 16},
        "dataset": {"splits": [2, 1, 1]}, "network": {"c_frequency": 8, "u_input_frequency": 8,
        "u_second_input_frequency": 5, "u_output_frequencies": [4]}, "train": {"epochs": 1}})";
    const auto cfg = (dir / "c.json").string();
    ASSERT_EQ(run_cli("gen-data --config " + cfg + " --out " + (dir / "d1").string(), dir / "a.txt"), 0);
    ASSERT_EQ(run_cli("gen-data --config " + cfg + " --out " + (dir / "d2").string(), dir / "b.txt"), 0);
    EXPECT_EQ(load_manifest(dir / "d1").checksum, load_manifest(dir / "d2").checksum);
    const int code = run_cli("train --variant u2 --config " + cfg + " --input " + (dir / "d1").string() + " --out " +
                                 (dir / "w.fptw").string(),
                             dir / "t.txt");
    EXPECT_EQ(code, 2);
    EXPECT_NE(slurp(dir / "t.txt").find("second input"), std::string::npos);
    fs::remove_all(dir);
}

TEST(Cli, ClassicalRunWritesReport)
{
    const auto dir = temp_dir("cli_e2e");
    std::ofstream(dir / "c.json") << R"({"surface": {"width": 24, "height": 16}, "dataset": {"splits": [0, 0, 2]}})";
    ASSERT_EQ(run_cli("run-e2e --classical --config " + (dir / "c.json").string() + " --out " + (dir / "r").string(),
                      dir / "log.txt"),
              0);
    const auto doc = json::parse(slurp(dir / "r" / "report.json"));
    EXPECT_EQ(doc["mode"], "classical");
    ASSERT_EQ(doc["scenes"].size(), 2u);
    for (const auto& s : doc["scenes"]) {
        EXPECT_LT(s["max_abs_height_error"].get<double>(), 1e-6);
    }
    // the report itself round-trips through show-config
    ASSERT_EQ(run_cli("show-config --input " + (dir / "r" / "report.json").string(), dir / "echo.txt"), 0);
    EXPECT_EQ(json::parse(slurp(dir / "echo.txt")), doc);
    fs::remove_all(dir);
}
