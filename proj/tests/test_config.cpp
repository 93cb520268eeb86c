#include <gtest/gtest.h>

#include <fstream>

#include "phaseforge/config.hpp"
#include "phaseforge/raster_io.hpp"

using namespace phaseforge;

TEST(RunConfig, DefaultsValidate)
{
    RunConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_NEAR(c.modulation_threshold, 5.0 / 255.0, 1e-15);
    EXPECT_EQ(c.ladder.back(), 64.0);
}

TEST(RunConfig, JsonRoundTrip)
{
    RunConfig c;
    c.seed = 99;
    c.render.carrier_enabled = true;
    c.depth_range = Interval{1.0, 2.5};
    c.dataset.regime = DepthRegime::Unrestricted;
    c.dataset.frequencies = {64, 56};
    c.dataset.quantize = false;
    c.network.variant = VariantKind::U_II;
    c.network.u_second_input_frequency = 56;
    c.network.c_frequency = 8;
    c.train.learning_rate = 0.01;
    c.paths.weights = "w.fptw";
    const auto back = run_config_from_json(to_json(c));
    EXPECT_TRUE(back == c);
    EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
}

TEST(RunConfig, PartialDocumentKeepsDefaults)
{
    const auto c = run_config_from_json(json::parse(R"({"seed": 3, "render": {"carrier": true}})"));
    EXPECT_EQ(c.seed, 3u);
    EXPECT_TRUE(c.render.carrier_enabled);
    EXPECT_EQ(c.dataset.phase_steps, RunConfig{}.dataset.phase_steps);
}

TEST(RunConfig, RejectsUnknownKeys)
{
    EXPECT_THROW(run_config_from_json(json::parse(R"({"sed": 3})")), InvalidInput);
    EXPECT_THROW(run_config_from_json(json::parse(R"({"train": {"lr": 0.1}})")), InvalidInput);
    EXPECT_THROW(run_config_from_json(json::parse(R"({"render": {"carier": true}})")), InvalidInput);
}

TEST(RunConfig, RejectsBadValues)
{
    EXPECT_THROW(run_config_from_json(json::parse(R"({"seed": "x"})")), InvalidInput);
    EXPECT_THROW(run_config_from_json(json::parse(R"({"dataset": {"phase_steps": 2}})")), InvalidInput);
    EXPECT_THROW(run_config_from_json(json::parse(R"({"dataset": {"regime": "sideways"}})")), InvalidInput);
    EXPECT_THROW(run_config_from_json(json::parse(R"({"dataset": {"splits": [1, 2]}})")), InvalidInput);
    EXPECT_THROW(run_config_from_json(json::parse(R"({"ladder": [2, 4]})")), InvalidInput);
    EXPECT_THROW(run_config_from_json(json::parse(R"({"network": {"variant": "z"}})")), InvalidInput);
    EXPECT_THROW(run_config_from_json(json::parse(R"({"surface": {"depth_range": [1]}})")), InvalidInput);
}

TEST(RunConfig, VariantSelection)
{
    RunConfig c;
    const auto v = c.variant(VariantKind::C);
    EXPECT_EQ(v.input_frequencies, std::vector<double>{64.0});
    c.network.c_frequency = 8;
    EXPECT_EQ(c.variant(VariantKind::C).output_frequencies, std::vector<double>{8.0});
    const auto u = c.variant(VariantKind::U_I);
    EXPECT_EQ(u.output_frequencies, (std::vector<double>{1, 2, 4, 8, 16, 32}));
    EXPECT_THROW(c.variant(VariantKind::U_II), InvalidInput);
    c.network.u_second_input_frequency = 56;
    EXPECT_EQ(c.variant(VariantKind::U_II).input_frequencies, (std::vector<double>{64, 56}));
}

TEST(RunConfig, LoadFromFile)
{
    const auto path = fs::temp_directory_path() / "pf_cfg_test.json";
    std::ofstream(path) << R"({"seed": 11})";
    EXPECT_EQ(load_run_config(path.string()).seed, 11u);
    std::ofstream(path) << "{not json";
    EXPECT_THROW(load_run_config(path.string()), InvalidInput);
    fs::remove(path);
    EXPECT_THROW(load_run_config(path.string()), IoError);
}
