#pragma once

// RunConfig: every knob of a pipeline run in one JSON document. All keys are
// optional on input (defaults apply); unknown keys are rejected; the emitted
// form lists every key, so emit(parse(emit(c))) is stable.

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "fptnet_spec.hpp"
#include "fringe.hpp"
#include "nn/adam.hpp"
#include "surface.hpp"

namespace phaseforge {

using json = nlohmann::json;

enum class DepthRegime : std::uint8_t { Restricted, Unrestricted };

inline std::string to_string(DepthRegime r) { return r == DepthRegime::Restricted ? "restricted" : "unrestricted"; }

inline DepthRegime parse_regime(const std::string& text)
{
    if (text == "restricted" || text == "RESTRICTED") {
        return DepthRegime::Restricted;
    }
    if (text == "unrestricted" || text == "UNRESTRICTED") {
        return DepthRegime::Unrestricted;
    }
    throw InvalidInput("unknown depth regime '" + text + "'");
}

struct DatasetSettings {
    DepthRegime regime = DepthRegime::Restricted;
    std::size_t train_count = 30;
    std::size_t validation_count = 5;
    std::size_t test_count = 5;
    std::vector<double> frequencies{8.0};               // rendered per surface
    std::vector<double> ground_truth_frequencies{8.0};  // subset used as targets
    std::size_t phase_steps = 4;
    bool quantize = true;
    double noise_sigma = 0.0;

    bool operator==(const DatasetSettings&) const = default;
};

struct NetworkSettings {
    VariantKind variant = VariantKind::C;
    double width_multiplier = 0.25;
    bool normalization = true;
    std::optional<double> c_frequency;               // default: highest ladder frequency
    std::optional<double> u_input_frequency;         // default: highest ladder frequency
    std::optional<double> u_second_input_frequency;  // f_l for U-II
    std::vector<double> u_output_frequencies;        // default: ladder without its top

    bool operator==(const NetworkSettings&) const = default;
};

struct TrainSettings {
    double learning_rate = 1e-3;
    std::size_t batch_size = 4;
    std::size_t epochs = 10;
    std::uint64_t seed = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t checkpoint_every = 0;  // epochs; 0 = final checkpoint only

    nn::AdamConfig adam() const { return {learning_rate, beta1, beta2, epsilon}; }
    void validate() const
    {
        require(learning_rate > 0.0, "learning_rate must be positive");
        require(batch_size >= 1, "batch_size must be at least 1");
        adam().validate();
    }
    bool operator==(const TrainSettings&) const = default;
};

struct PathSettings {
    std::string dataset;
    std::string weights;
    std::string weights2;

    bool operator==(const PathSettings&) const = default;
};

struct RunConfig {
    std::uint64_t seed = 7;
    double modulation_threshold = kDefaultModulationThreshold;
    RenderParams render;
    SystemGeometry geometry;
    SurfaceGenConfig surface;          // seed field unused; per-surface seeds are derived
    std::optional<Interval> depth_range;  // empty: regime default
    DatasetSettings dataset;
    std::vector<double> ladder{1, 2, 4, 8, 16, 32, 64};
    NetworkSettings network;
    TrainSettings train;
    PathSettings paths;

    void validate() const
    {
        render.validate();
        geometry.validate();
        require(modulation_threshold >= 0.0, "modulation_threshold must be nonnegative");
        require(dataset.phase_steps >= 3, "phase_steps must be at least 3");
        require(!dataset.frequencies.empty(), "dataset needs at least one frequency");
        FrequencyLadder check(ladder);
        (void)check;
        train.validate();
    }

    /// Variant used for training or inference of the given kind.
    Variant variant(VariantKind kind) const
    {
        const double top = ladder.back();
        Variant v;
        v.kind = kind;
        v.phase_steps = dataset.phase_steps;
        if (kind == VariantKind::C) {
            const double f = network.c_frequency.value_or(top);
            v.input_frequencies = {f};
            v.output_frequencies = {f};
        } else {
            v.input_frequencies = {network.u_input_frequency.value_or(top)};
            if (kind == VariantKind::U_II) {
                require(network.u_second_input_frequency.has_value(), "u2 requires network.u_second_input_frequency");
                v.input_frequencies.push_back(*network.u_second_input_frequency);
            }
            v.output_frequencies = network.u_output_frequencies;
            if (v.output_frequencies.empty()) {
                require(ladder.size() >= 2, "U variants need a ladder of at least two frequencies");
                v.output_frequencies.assign(ladder.begin(), ladder.end() - 1);
            }
        }
        v.validate();
        return v;
    }

    bool operator==(const RunConfig& o) const
    {
        auto same_interval = [](const Interval& a, const Interval& b) { return a.lo == b.lo && a.hi == b.hi; };
        const bool depth_eq = depth_range.has_value() == o.depth_range.has_value() &&
                              (!depth_range || same_interval(*depth_range, *o.depth_range));
        return seed == o.seed && modulation_threshold == o.modulation_threshold &&
               render.background == o.render.background && render.modulation == o.render.modulation &&
               render.phase_constant == o.render.phase_constant && render.carrier_enabled == o.render.carrier_enabled &&
               geometry.camera_to_reference_mm == o.geometry.camera_to_reference_mm &&
               geometry.projector_to_camera_mm == o.geometry.projector_to_camera_mm &&
               geometry.projected_width_mm == o.geometry.projected_width_mm &&
               geometry.measurement_range_mm == o.geometry.measurement_range_mm && surface.width == o.surface.width &&
               surface.height == o.surface.height && same_interval(surface.amplitude_range, o.surface.amplitude_range) &&
               same_interval(surface.sigma_range, o.surface.sigma_range) && depth_eq && dataset == o.dataset &&
               ladder == o.ladder && network == o.network && train == o.train && paths == o.paths;
    }
};

namespace detail {

inline void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where)
{
    require(j.is_object(), where + " must be a JSON object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items()) {
        require(ok.count(key) != 0, "unknown key '" + key + "' in " + where);
    }
}

template <typename V>
void read_if(const json& j, const char* key, V& out)
{
    if (auto it = j.find(key); it != j.end()) {
        try {
            out = it->template get<V>();
        } catch (const json::exception& e) {
            throw InvalidInput(std::string("bad value for '") + key + "': " + e.what());
        }
    }
}

inline void read_optional(const json& j, const char* key, std::optional<double>& out)
{
    if (auto it = j.find(key); it != j.end()) {
        if (it->is_null()) {
            out.reset();
        } else {
            require(it->is_number(), std::string("'") + key + "' must be a number or null");
            out = it->get<double>();
        }
    }
}

inline json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline Interval read_interval(const json& j, const std::string& where)
{
    require(j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number(), where + " must be [lo, hi]");
    return Interval{j[0].get<double>(), j[1].get<double>()};
}

} // namespace detail

inline json to_json(const RunConfig& c)
{
    json j;
    j["seed"] = c.seed;
    j["modulation_threshold"] = c.modulation_threshold;
    j["render"] = {{"background", c.render.background},
                   {"modulation", c.render.modulation},
                   {"phase_constant", c.render.phase_constant},
                   {"carrier", c.render.carrier_enabled}};
    j["geometry"] = {{"l_mm", c.geometry.camera_to_reference_mm},
                     {"d_mm", c.geometry.projector_to_camera_mm},
                     {"c1_mm", c.geometry.projected_width_mm},
                     {"range_mm", c.geometry.measurement_range_mm}};
    j["surface"] = {{"width", c.surface.width},
                    {"height", c.surface.height},
                    {"amplitude_range", {c.surface.amplitude_range.lo, c.surface.amplitude_range.hi}},
                    {"sigma_range", {c.surface.sigma_range.lo, c.surface.sigma_range.hi}},
                    {"depth_range", c.depth_range ? json{c.depth_range->lo, c.depth_range->hi} : json(nullptr)}};
    j["dataset"] = {{"regime", to_string(c.dataset.regime)},
                    {"splits", {c.dataset.train_count, c.dataset.validation_count, c.dataset.test_count}},
                    {"frequencies", c.dataset.frequencies},
                    {"ground_truth_frequencies", c.dataset.ground_truth_frequencies},
                    {"phase_steps", c.dataset.phase_steps},
                    {"quantize", c.dataset.quantize},
                    {"noise_sigma", c.dataset.noise_sigma}};
    j["ladder"] = c.ladder;
    j["network"] = {{"variant", to_string(c.network.variant)},
                    {"width_multiplier", c.network.width_multiplier},
                    {"normalization", c.network.normalization},
                    {"c_frequency", detail::optional_json(c.network.c_frequency)},
                    {"u_input_frequency", detail::optional_json(c.network.u_input_frequency)},
                    {"u_second_input_frequency", detail::optional_json(c.network.u_second_input_frequency)},
                    {"u_output_frequencies", c.network.u_output_frequencies}};
    j["train"] = {{"learning_rate", c.train.learning_rate}, {"batch_size", c.train.batch_size},
                  {"epochs", c.train.epochs},               {"seed", c.train.seed},
                  {"beta1", c.train.beta1},                 {"beta2", c.train.beta2},
                  {"epsilon", c.train.epsilon},             {"checkpoint_every", c.train.checkpoint_every}};
    j["paths"] = {{"dataset", c.paths.dataset}, {"weights", c.paths.weights}, {"weights2", c.paths.weights2}};
    return j;
}

inline RunConfig run_config_from_json(const json& j)
{
    using detail::read_if;
    detail::reject_unknown_keys(j,
                                {"seed", "modulation_threshold", "render", "geometry", "surface", "dataset", "ladder",
                                 "network", "train", "paths"},
                                "config");
    RunConfig c;
    read_if(j, "seed", c.seed);
    read_if(j, "modulation_threshold", c.modulation_threshold);
    if (auto it = j.find("render"); it != j.end()) {
        detail::reject_unknown_keys(*it, {"background", "modulation", "phase_constant", "carrier"}, "render");
        read_if(*it, "background", c.render.background);
        read_if(*it, "modulation", c.render.modulation);
        read_if(*it, "phase_constant", c.render.phase_constant);
        read_if(*it, "carrier", c.render.carrier_enabled);
    }
    if (auto it = j.find("geometry"); it != j.end()) {
        detail::reject_unknown_keys(*it, {"l_mm", "d_mm", "c1_mm", "range_mm"}, "geometry");
        read_if(*it, "l_mm", c.geometry.camera_to_reference_mm);
        read_if(*it, "d_mm", c.geometry.projector_to_camera_mm);
        read_if(*it, "c1_mm", c.geometry.projected_width_mm);
        read_if(*it, "range_mm", c.geometry.measurement_range_mm);
    }
    if (auto it = j.find("surface"); it != j.end()) {
        detail::reject_unknown_keys(*it, {"width", "height", "amplitude_range", "sigma_range", "depth_range"}, "surface");
        read_if(*it, "width", c.surface.width);
        read_if(*it, "height", c.surface.height);
        if (it->contains("amplitude_range")) {
            c.surface.amplitude_range = detail::read_interval((*it)["amplitude_range"], "surface.amplitude_range");
        }
        if (it->contains("sigma_range")) {
            c.surface.sigma_range = detail::read_interval((*it)["sigma_range"], "surface.sigma_range");
        }
        if (it->contains("depth_range") && !(*it)["depth_range"].is_null()) {
            c.depth_range = detail::read_interval((*it)["depth_range"], "surface.depth_range");
        }
    }
    if (auto it = j.find("dataset"); it != j.end()) {
        detail::reject_unknown_keys(*it,
                                    {"regime", "splits", "frequencies", "ground_truth_frequencies", "phase_steps",
                                     "quantize", "noise_sigma"},
                                    "dataset");
        std::string regime = to_string(c.dataset.regime);
        read_if(*it, "regime", regime);
        c.dataset.regime = parse_regime(regime);
        if (it->contains("splits")) {
            const auto& s = (*it)["splits"];
            require(s.is_array() && s.size() == 3, "dataset.splits must be [train, validation, test]");
            c.dataset.train_count = s[0].get<std::size_t>();
            c.dataset.validation_count = s[1].get<std::size_t>();
            c.dataset.test_count = s[2].get<std::size_t>();
        }
        read_if(*it, "frequencies", c.dataset.frequencies);
        read_if(*it, "ground_truth_frequencies", c.dataset.ground_truth_frequencies);
        read_if(*it, "phase_steps", c.dataset.phase_steps);
        read_if(*it, "quantize", c.dataset.quantize);
        read_if(*it, "noise_sigma", c.dataset.noise_sigma);
    }
    read_if(j, "ladder", c.ladder);
    if (auto it = j.find("network"); it != j.end()) {
        detail::reject_unknown_keys(*it,
                                    {"variant", "width_multiplier", "normalization", "c_frequency", "u_input_frequency",
                                     "u_second_input_frequency", "u_output_frequencies"},
                                    "network");
        std::string variant = to_string(c.network.variant);
        read_if(*it, "variant", variant);
        c.network.variant = parse_variant(variant);
        read_if(*it, "width_multiplier", c.network.width_multiplier);
        read_if(*it, "normalization", c.network.normalization);
        detail::read_optional(*it, "c_frequency", c.network.c_frequency);
        detail::read_optional(*it, "u_input_frequency", c.network.u_input_frequency);
        detail::read_optional(*it, "u_second_input_frequency", c.network.u_second_input_frequency);
        read_if(*it, "u_output_frequencies", c.network.u_output_frequencies);
    }
    if (auto it = j.find("train"); it != j.end()) {
        detail::reject_unknown_keys(*it,
                                    {"learning_rate", "batch_size", "epochs", "seed", "beta1", "beta2", "epsilon",
                                     "checkpoint_every"},
                                    "train");
        read_if(*it, "learning_rate", c.train.learning_rate);
        read_if(*it, "batch_size", c.train.batch_size);
        read_if(*it, "epochs", c.train.epochs);
        read_if(*it, "seed", c.train.seed);
        read_if(*it, "beta1", c.train.beta1);
        read_if(*it, "beta2", c.train.beta2);
        read_if(*it, "epsilon", c.train.epsilon);
        read_if(*it, "checkpoint_every", c.train.checkpoint_every);
    }
    if (auto it = j.find("paths"); it != j.end()) {
        detail::reject_unknown_keys(*it, {"dataset", "weights", "weights2"}, "paths");
        read_if(*it, "dataset", c.paths.dataset);
        read_if(*it, "weights", c.paths.weights);
        read_if(*it, "weights2", c.paths.weights2);
    }
    c.validate();
    return c;
}

inline RunConfig load_run_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config " + path);
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw InvalidInput("config " + path + " is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

} // namespace phaseforge
