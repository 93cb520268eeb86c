// phaseforge command-line front end.
//
// Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numeric failure.
// Errors are printed to stderr as one JSON object.

#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "phaseforge/phaseforge.hpp"

namespace pf = phaseforge;
using pf::json;

namespace {

struct Options {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string variant;
    std::string ladder;
    std::optional<std::size_t> steps;
    std::optional<double> freq;
    bool classical = false;
    std::string weights;
    std::string weights2;
    std::vector<std::string> inputs;
};

std::vector<double> parse_ladder(const std::string& text)
{
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            pf::require(used == item.size(), "");
        } catch (const std::exception&) {
            throw pf::InvalidInput("bad ladder entry '" + item + "'");
        }
    }
    pf::require(!out.empty(), "ladder is empty");
    return out;
}

pf::RunConfig load_config(const Options& o)
{
    pf::RunConfig cfg = o.config.empty() ? pf::RunConfig{} : pf::load_run_config(o.config);
    if (o.seed) {
        cfg.seed = *o.seed;
    }
    if (!o.ladder.empty()) {
        cfg.ladder = parse_ladder(o.ladder);
    }
    if (o.steps) {
        cfg.dataset.phase_steps = *o.steps;
    }
    if (!o.variant.empty()) {
        cfg.network.variant = pf::parse_variant(o.variant);
    }
    cfg.validate();
    return cfg;
}

std::string need(const std::string& value, const std::string& flag)
{
    pf::require(!value.empty(), "missing " + flag);
    return value;
}

double need_freq(const Options& o)
{
    pf::require(o.freq.has_value(), "missing --freq");
    return *o.freq;
}

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

/// Wrapped or absolute phase raster with NaN marking masked pixels.
pf::PhaseMap phase_from_raster(const pf::Grid<double>& raster, double frequency)
{
    pf::PhaseMap m{raster, pf::Grid<std::uint8_t>(raster.width(), raster.height()), frequency};
    for (std::size_t i = 0; i < raster.size(); ++i) {
        m.valid[i] = std::isfinite(raster[i]) ? 1 : 0;
    }
    return m;
}

int cmd_gen_data(const Options& o)
{
    const auto cfg = load_config(o);
    const std::string out = o.out.empty() ? need(cfg.paths.dataset, "--out") : o.out;
    const auto m = pf::build_dataset(cfg, out);
    print({{"dataset", out},
           {"checksum", m.checksum},
           {"regime", pf::to_string(m.regime)},
           {"depth_range", {m.depth_range.lo, m.depth_range.hi}},
           {"splits", {{"train", m.count("train")}, {"validation", m.count("validation")}, {"test", m.count("test")}}}});
    return 0;
}

int cmd_train(const Options& o)
{
    const auto cfg = load_config(o);
    const std::string data = o.inputs.empty() ? need(cfg.paths.dataset, "--input <dataset>") : o.inputs.front();
    const std::string out = o.out.empty() ? need(cfg.paths.weights, "--out") : o.out;
    const auto manifest = pf::load_manifest(data);
    const auto variant = cfg.variant(cfg.network.variant);
    const auto spec = pf::build_network(variant, cfg.network.width_multiplier, cfg.network.normalization);
    auto tc = pf::TrainConfig::from(cfg.train);
    tc.checkpoint_path = out;
    tc.log_path = out + ".log.jsonl";
    const auto result = pf::train(spec, data, manifest, variant, tc);
    json log = json::array();
    for (const auto& e : result.log) {
        log.push_back(pf::to_json(e));
    }
    print({{"weights", out},
           {"weights_checksum", pf::file_checksum(out)},
           {"fingerprint", pf::hex64(spec.fingerprint())},
           {"log", log}});
    return 0;
}

std::vector<pf::FringeImage> read_input_images(const std::vector<std::string>& paths)
{
    std::vector<pf::FringeImage> images;
    for (const auto& p : paths) {
        images.push_back(pf::fs::path(p).extension() == ".f32r" ? pf::read_f32r(p) : pf::read_pgm(p));
    }
    return images;
}

int cmd_infer(const Options& o)
{
    const auto cfg = load_config(o);
    const auto variant = cfg.variant(cfg.network.variant);
    const auto spec = pf::build_network(variant, cfg.network.width_multiplier, cfg.network.normalization);
    const auto weights = pf::load_weights(o.weights.empty() ? need(cfg.paths.weights, "--weights") : o.weights, spec);
    pf::require(!o.inputs.empty() && o.inputs.size() <= 2, "infer takes 1 or 2 --input fringes");
    const auto sets = pf::infer(weights, spec, variant, read_input_images(o.inputs));
    const pf::fs::path out = need(o.out, "--out");
    json written = json::array();
    for (const auto& set : sets) {
        const auto dir = out / ("f" + pf::frequency_tag(set.frequency));
        pf::write_fringe_set(dir, set);
        written.push_back({{"frequency", set.frequency}, {"dir", dir.string()}, {"steps", set.phase_steps()}});
    }
    print({{"sets", written}});
    return 0;
}

int cmd_phase(const Options& o)
{
    const auto cfg = load_config(o);
    pf::require(o.inputs.size() == 1, "phase takes one --input fringe-set directory");
    const auto set = pf::read_fringe_set(o.inputs.front(), need_freq(o), o.steps.value_or(0));
    const auto phase = pf::wrapped_phase(set, cfg.modulation_threshold);
    const std::string out = need(o.out, "--out");
    pf::write_f32r(out, phase.phase);
    print({{"phase", out}, {"frequency", set.frequency}, {"steps", set.phase_steps()}, {"valid", phase.valid_count()}});
    return 0;
}

int cmd_unwrap(const Options& o)
{
    const auto cfg = load_config(o);
    pf::require(o.inputs.size() == 1, "unwrap takes one --input scene directory holding f<freq>/ sets");
    std::vector<pf::PhaseMap> maps;
    for (double f : cfg.ladder) {
        const auto dir = pf::fs::path(o.inputs.front()) / ("f" + pf::frequency_tag(f));
        maps.push_back(pf::wrapped_phase(pf::read_fringe_set(dir, f, o.steps.value_or(0)), cfg.modulation_threshold));
    }
    const auto abs = pf::unwrap_ladder(maps, cfg.render);
    const std::string out = need(o.out, "--out");
    pf::write_f32r(out, abs.back().phase);
    print({{"absolute_phase", out}, {"frequency", abs.back().frequency}, {"ladder", cfg.ladder}});
    return 0;
}

int cmd_height(const Options& o)
{
    const auto cfg = load_config(o);
    pf::require(o.inputs.size() == 1, "height takes one --input absolute-phase raster");
    const auto raster = pf::read_f32r(o.inputs.front());
    const auto wrapped = phase_from_raster(raster, need_freq(o));
    const pf::AbsolutePhaseMap abs{wrapped.phase, pf::Grid<std::int64_t>(raster.width(), raster.height()),
                                   wrapped.valid, wrapped.frequency};
    const auto surface = pf::height_from_phase(abs, cfg.render);
    const std::string out = need(o.out, "--out");
    pf::write_f32r(out, surface.depth);
    print({{"height", out}, {"min", surface.range_min}, {"max", surface.range_max}});
    return 0;
}

int cmd_eval(const Options& o)
{
    const auto cfg = load_config(o);
    pf::require(o.inputs.size() == 2, "eval takes --input <prediction> --input <ground truth>");
    const pf::fs::path pred = o.inputs[0];
    const pf::fs::path gt = o.inputs[1];
    pf::Metrics m;
    if (pf::fs::is_directory(pred) && pf::fs::is_directory(gt)) {
        const double f = need_freq(o);
        m = pf::evaluate(pf::read_fringe_set(pred, f, o.steps.value_or(0)), pf::read_fringe_set(gt, f, o.steps.value_or(0)),
                         cfg.modulation_threshold);
    } else {
        const double f = o.freq.value_or(1.0);
        m = pf::evaluate(phase_from_raster(pf::read_f32r(pred), f), phase_from_raster(pf::read_f32r(gt), f));
    }
    m.label = pred.filename().string();
    print(pf::report({m}, need(o.out, "--out")));
    return 0;
}

int cmd_run_e2e(const Options& o)
{
    const auto cfg = load_config(o);
    const pf::fs::path out = need(o.out, "--out");
    const std::size_t count = std::max<std::size_t>(1, cfg.dataset.test_count);
    std::vector<pf::Metrics> metrics;
    json scenes = json::array();
    if (o.classical) {
        for (auto& s : pf::run_classical_e2e(cfg, count)) {
            scenes.push_back({{"label", s.label},
                              {"max_abs_height_error", s.height.max_abs},
                              {"mean_abs_height_error", s.height.mean_abs},
                              {"valid", s.height.valid}});
            metrics.push_back(std::move(s.phase));
        }
    } else {
        const auto c_variant = cfg.variant(pf::VariantKind::C);
        const auto c_spec = pf::build_network(c_variant, cfg.network.width_multiplier, cfg.network.normalization);
        pf::VariantKind u_kind = cfg.network.variant;
        if (u_kind == pf::VariantKind::C) {
            const auto range = pf::e2e_surface_config(cfg, 0).depth_range;
            u_kind = pf::select_variant(range.lo, range.hi, pf::restricted_depth_sim(cfg.render, cfg.ladder.back()));
        }
        const auto u_variant = cfg.variant(u_kind);
        const auto u_spec = pf::build_network(u_variant, cfg.network.width_multiplier, cfg.network.normalization);
        const auto c_stage = pf::network_transformer(
            pf::load_weights(o.weights.empty() ? need(cfg.paths.weights, "--weights") : o.weights, c_spec), c_spec,
            c_variant);
        const auto u_stage = pf::network_transformer(
            pf::load_weights(o.weights2.empty() ? need(cfg.paths.weights2, "--weights2") : o.weights2, u_spec), u_spec,
            u_variant);
        for (std::size_t i = 0; i < count; ++i) {
            const auto truth = pf::generate_surface(pf::e2e_surface_config(cfg, i));
            std::vector<pf::FringeImage> inputs;
            for (double f : u_variant.input_frequencies) {
                inputs.push_back(pf::render_fringe(truth, f, 0.0, cfg.render));
            }
            if (cfg.dataset.quantize) {
                for (auto& img : inputs) {
                    img = pf::quantize_image(img);
                }
            }
            const auto r = pf::end_to_end_retrieve(inputs, c_stage, u_stage, cfg.ladder, cfg.render,
                                                   cfg.modulation_threshold);
            const auto gt = pf::analytic_phase(truth, cfg.ladder.back(), cfg.render);
            auto m = pf::evaluate(r.wrapped.back(),
                                  phase_from_raster(gt, cfg.ladder.back()));
            m.label = "scene" + std::to_string(i);
            const auto h = pf::height_error(r.height, truth, r.absolute().valid);
            scenes.push_back({{"label", m.label},
                              {"max_abs_height_error", h.max_abs},
                              {"mean_abs_height_error", h.mean_abs},
                              {"valid", h.valid}});
            metrics.push_back(std::move(m));
        }
    }
    json doc = pf::report(metrics, out);
    doc["mode"] = o.classical ? "classical" : "learned";
    doc["scenes"] = scenes;
    pf::detail::write_file(out / "report.json", doc.dump(2) + "\n");
    print(doc);
    return 0;
}

int cmd_show_config(const Options& o)
{
    if (!o.inputs.empty()) {
        json j;
        try {
            j = json::parse(pf::detail::read_file(o.inputs.front()));
        } catch (const json::exception& e) {
            throw pf::InvalidInput(o.inputs.front() + " is not valid JSON: " + e.what());
        }
        print(j);
        return 0;
    }
    print(pf::to_json(load_config(o)));
    return 0;
}

int report_error(const char* kind, const std::string& message, int code)
{
    std::cerr << json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << "\n";
    return code;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"phaseforge: fringe projection simulation, FPTNet training and phase retrieval"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "RunConfig JSON file");
        sub->add_option("--out", o.out, "Output path");
        sub->add_option("--seed", o.seed, "Master seed override");
        sub->add_option("--variant", o.variant, "Network variant: c, u1 or u2");
        sub->add_option("--ladder", o.ladder, "Comma-separated frequency ladder");
        sub->add_option("--steps", o.steps, "Phase steps N");
        sub->add_option("--freq", o.freq, "Fringe frequency");
        sub->add_flag("--classical", o.classical, "Classical pipeline (no networks)");
        sub->add_option("--weights", o.weights, "FPTNet-C checkpoint");
        sub->add_option("--weights2", o.weights2, "FPTNet-U checkpoint");
        sub->add_option("--input", o.inputs, "Input path (repeatable)")->expected(1)->multi_option_policy(
            CLI::MultiOptionPolicy::TakeAll);
    };

    struct Command {
        const char* name;
        const char* help;
        int (*run)(const Options&);
    };
    const Command commands[] = {
        {"gen-data", "Generate a synthetic dataset", cmd_gen_data},
        {"train", "Train an FPTNet variant", cmd_train},
        {"infer", "Transform input fringes with a trained network", cmd_infer},
        {"phase", "Wrapped phase of a fringe set", cmd_phase},
        {"unwrap", "Temporal unwrapping along the ladder", cmd_unwrap},
        {"height", "Height from absolute phase", cmd_height},
        {"eval", "Compare prediction against ground truth", cmd_eval},
        {"run-e2e", "End-to-end retrieval on random scenes", cmd_run_e2e},
        {"show-config", "Print the effective configuration", cmd_show_config},
    };
    int (*selected)(const Options&) = nullptr;
    for (const auto& c : commands) {
        auto* sub = app.add_subcommand(c.name, c.help);
        common(sub);
        sub->callback([&selected, run = c.run] { selected = run; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("usage", e.what(), 1);
    }

    try {
        return selected(o);
    } catch (const pf::NumericError& e) {
        return report_error("numeric", e.what(), 3);
    } catch (const pf::InvalidInput& e) {
        return report_error("invalid_input", e.what(), 2);
    } catch (const pf::IoError& e) {
        return report_error("io", e.what(), 2);
    } catch (const json::exception& e) {
        return report_error("invalid_input", e.what(), 2);
    } catch (const std::filesystem::filesystem_error& e) {
        return report_error("io", e.what(), 2);
    } catch (const std::exception& e) {
        return report_error("internal", e.what(), 2);
    }
}
