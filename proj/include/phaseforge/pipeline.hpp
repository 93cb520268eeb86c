#pragma once

// End-to-end phase retrieval, evaluation metrics and report emission.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "fptnet.hpp"
#include "fringe.hpp"
#include "raster_io.hpp"

namespace phaseforge {

struct Metrics {
    std::string label;
    Grid<double> phase_error_map;      // wrap(pred - gt), 0 where either side is masked
    Grid<double> grayscale_error_map;  // mean |I_pred - I_gt| over the stack; empty for phase inputs
    double mean_abs_phase_error = 0.0;
    double max_abs_phase_error = 0.0;
    double mean_grayscale_error = 0.0;
    double order_error_rate = 0.0;
    std::size_t valid_pixel_count = 0;
};

namespace detail {

inline void fill_phase_stats(Metrics& m, const Grid<double>& pred, const Grid<std::uint8_t>& pred_valid,
                             const Grid<double>& gt, const Grid<std::uint8_t>& gt_valid)
{
    require(pred.same_shape(gt), "evaluate: prediction and ground truth differ in size");
    m.phase_error_map = Grid<double>(pred.width(), pred.height(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!pred_valid[i] || !gt_valid[i]) {
            continue;
        }
        const double d = wrap_phase(pred[i] - gt[i]);
        m.phase_error_map[i] = d;
        total += std::abs(d);
        m.max_abs_phase_error = std::max(m.max_abs_phase_error, std::abs(d));
        ++m.valid_pixel_count;
    }
    m.mean_abs_phase_error = m.valid_pixel_count ? total / static_cast<double>(m.valid_pixel_count) : 0.0;
}

} // namespace detail

inline Metrics evaluate(const PhaseMap& pred, const PhaseMap& gt)
{
    Metrics m;
    detail::fill_phase_stats(m, pred.phase, pred.valid, gt.phase, gt.valid);
    return m;
}

/// Absolute phase comparison: also counts pixels whose fringe order differs.
inline Metrics evaluate(const AbsolutePhaseMap& pred, const AbsolutePhaseMap& gt)
{
    Metrics m;
    detail::fill_phase_stats(m, pred.phase, pred.valid, gt.phase, gt.valid);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < pred.phase.size(); ++i) {
        if (pred.valid[i] && gt.valid[i] && pred.order[i] != gt.order[i]) {
            ++wrong;
        }
    }
    m.order_error_rate = m.valid_pixel_count ? static_cast<double>(wrong) / static_cast<double>(m.valid_pixel_count) : 0.0;
    return m;
}

/// Fringe comparison: wrapped-phase statistics plus the grayscale error.
inline Metrics evaluate(const FringeSet& pred, const FringeSet& gt,
                        double modulation_threshold = kDefaultModulationThreshold)
{
    pred.validate();
    gt.validate();
    require(pred.phase_steps() == gt.phase_steps(), "evaluate: fringe sets differ in phase steps");
    require(pred.width() == gt.width() && pred.height() == gt.height(), "evaluate: fringe sets differ in size");
    Metrics m = evaluate(wrapped_phase(pred, modulation_threshold), wrapped_phase(gt, modulation_threshold));
    m.grayscale_error_map = Grid<double>(gt.width(), gt.height());
    const double inv = 1.0 / static_cast<double>(gt.phase_steps());
    double total = 0.0;
    for (std::size_t i = 0; i < m.grayscale_error_map.size(); ++i) {
        double e = 0.0;
        for (std::size_t n = 0; n < gt.phase_steps(); ++n) {
            e += std::abs(pred.images[n][i] - gt.images[n][i]);
        }
        m.grayscale_error_map[i] = e * inv;
        total += e * inv;
    }
    m.mean_grayscale_error = total / static_cast<double>(m.grayscale_error_map.size());
    return m;
}

/// Linear min-max mapping of the finite values to 0..255; NaN maps to 0.
struct Visualization {
    FringeImage image;
    double min = 0.0;
    double max = 0.0;
};

inline Visualization visualize(const Grid<double>& map)
{
    Visualization v{FringeImage(map.width(), map.height()), 0.0, 0.0};
    bool any = false;
    for (double x : map) {
        if (std::isfinite(x)) {
            v.min = any ? std::min(v.min, x) : x;
            v.max = any ? std::max(v.max, x) : x;
            any = true;
        }
    }
    const double span = v.max - v.min;
    for (std::size_t i = 0; i < map.size(); ++i) {
        v.image[i] = (std::isfinite(map[i]) && span > 0.0) ? (map[i] - v.min) / span : 0.0;
    }
    return v;
}

namespace detail {

inline std::string safe_label(const std::string& label, std::size_t index)
{
    std::string out;
    for (char ch : label) {
        out.push_back((std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_') ? ch : '_');
    }
    return out.empty() ? "entry" + std::to_string(index) : out;
}

} // namespace detail

/// Writes <dir>/report.json plus float and 8-bit renderings of each error map.
inline json report(const std::vector<Metrics>& metrics, const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError("cannot create report directory " + dir.string());
    }
    json entries = json::array();
    for (std::size_t i = 0; i < metrics.size(); ++i) {
        const auto& m = metrics[i];
        const std::string stem = detail::safe_label(m.label, i);
        json e = {{"label", m.label},
                  {"mean_abs_phase_error", m.mean_abs_phase_error},
                  {"max_abs_phase_error", m.max_abs_phase_error},
                  {"mean_grayscale_error", m.mean_grayscale_error},
                  {"order_error_rate", m.order_error_rate},
                  {"valid_pixel_count", m.valid_pixel_count}};
        auto emit_map = [&](const Grid<double>& map, const std::string& kind) {
            if (map.empty()) {
                return;
            }
            const std::string raw = stem + "." + kind + ".f32r";
            const std::string vis = stem + "." + kind + ".pgm";
            write_f32r(dir / raw, map);
            const auto v = visualize(map);
            write_pgm(dir / vis, v.image);
            e[kind] = {{"raster", raw}, {"visualization", vis}, {"range", {v.min, v.max}}};
        };
        emit_map(m.phase_error_map, "phase_error");
        emit_map(m.grayscale_error_map, "grayscale_error");
        entries.push_back(std::move(e));
    }
    json doc = {{"entries", entries}, {"count", metrics.size()}};
    if (!metrics.empty()) {
        double mean = 0.0;
        double worst = 0.0;
        for (const auto& m : metrics) {
            mean += m.mean_abs_phase_error;
            worst = std::max(worst, m.max_abs_phase_error);
        }
        doc["mean_abs_phase_error"] = mean / static_cast<double>(metrics.size());
        doc["max_abs_phase_error"] = worst;
    }
    detail::write_file(dir / "report.json", doc.dump(2) + "\n");
    return doc;
}

/// Wrapped phases, the unwrapped ladder and the recovered height.
struct Retrieval {
    std::vector<PhaseMap> wrapped;
    std::vector<AbsolutePhaseMap> unwrapped;
    Surface height;

    const AbsolutePhaseMap& absolute() const { return unwrapped.back(); }
};

/// Demodulate every set, unwrap along the ladder, convert to height.
inline Retrieval classical_retrieve(const std::vector<FringeSet>& ladder_sets, const RenderParams& params,
                                    double modulation_threshold = kDefaultModulationThreshold)
{
    require(!ladder_sets.empty(), "no fringe sets to retrieve from");
    Retrieval r;
    for (const auto& set : ladder_sets) {
        r.wrapped.push_back(wrapped_phase(set, modulation_threshold));
    }
    r.unwrapped = unwrap_ladder(r.wrapped, params);
    r.height = height_from_phase(r.unwrapped.back(), params);
    return r;
}

/// A fringe-to-fringe stage: input fringes in, fringe sets out.
using FringeTransformer = std::function<std::vector<FringeSet>(const std::vector<FringeImage>&)>;

inline FringeTransformer network_transformer(FloatWeights weights, nn::NetworkSpec spec, Variant variant)
{
    return [w = std::move(weights), s = std::move(spec), v = std::move(variant)](const std::vector<FringeImage>& in) {
        return infer(w, s, v, in);
    };
}

/// Pass-through stage returning stored ground-truth sets.
inline FringeTransformer oracle_transformer(std::vector<FringeSet> sets)
{
    return [s = std::move(sets)](const std::vector<FringeImage>&) { return s; };
}

/// Learned pipeline: the C stage yields the highest-frequency stack, the U
/// stage yields the lower ladder stacks; both feed classical_retrieve.
/// inputs[0] is the f_s fringe; inputs[1] (U-II only) the f_l fringe.
inline Retrieval end_to_end_retrieve(const std::vector<FringeImage>& inputs, const FringeTransformer& c_stage,
                                     const FringeTransformer& u_stage, const std::vector<double>& ladder,
                                     const RenderParams& params,
                                     double modulation_threshold = kDefaultModulationThreshold)
{
    require(inputs.size() == 1 || inputs.size() == 2, "end-to-end retrieval takes 1 or 2 input fringes");
    FrequencyLadder check(ladder);
    (void)check;
    auto top = c_stage({inputs.front()});
    require(top.size() == 1 && top.front().frequency == ladder.back(),
            "C stage must return one set at the highest ladder frequency");
    std::vector<FringeSet> sets = u_stage(inputs);
    require(sets.size() + 1 == ladder.size(), "U stage must return one set per lower ladder frequency");
    for (std::size_t i = 0; i < sets.size(); ++i) {
        require(sets[i].frequency == ladder[i], "U stage output frequencies do not follow the ladder");
    }
    sets.push_back(std::move(top.front()));
    return classical_retrieve(sets, params, modulation_threshold);
}

struct HeightError {
    double max_abs = 0.0;
    double mean_abs = 0.0;
    std::size_t valid = 0;
};

inline HeightError height_error(const Surface& recovered, const Surface& truth, const Grid<std::uint8_t>& valid)
{
    require(recovered.depth.same_shape(truth.depth), "height maps differ in size");
    HeightError e;
    double total = 0.0;
    for (std::size_t i = 0; i < truth.depth.size(); ++i) {
        if (!valid[i]) {
            continue;
        }
        const double d = std::abs(recovered.depth[i] - truth.depth[i]);
        e.max_abs = std::max(e.max_abs, d);
        total += d;
        ++e.valid;
    }
    e.mean_abs = e.valid ? total / static_cast<double>(e.valid) : 0.0;
    return e;
}

/// Renders the full ladder for a generated surface (no noise, no quantization).
inline std::vector<FringeSet> render_ladder(const Surface& surface, const RunConfig& cfg)
{
    return render_scene(surface, cfg.ladder, cfg.dataset.phase_steps, cfg.render);
}

/// Surface config for end-to-end scenes. Depth defaults to a range that keeps
/// the f = 1 phase inside one period so the ladder base needs no unwrapping.
inline SurfaceGenConfig e2e_surface_config(const RunConfig& cfg, std::size_t index)
{
    SurfaceGenConfig sc = cfg.surface;
    sc.seed = derive_seed(cfg.seed, "e2e", index);
    const double base_period = kTwoPi / (cfg.ladder.front() * cfg.render.phase_constant);
    sc.depth_range = cfg.depth_range.value_or(Interval{0.0, 0.45 * base_period});
    return sc;
}

struct SceneResult {
    std::string label;
    HeightError height;
    Metrics phase;
};

/// Classical render -> demodulate -> unwrap -> height on `count` random scenes.
inline std::vector<SceneResult> run_classical_e2e(const RunConfig& cfg, std::size_t count)
{
    cfg.validate();
    std::vector<SceneResult> results;
    for (std::size_t i = 0; i < count; ++i) {
        const Surface truth = generate_surface(e2e_surface_config(cfg, i));
        const auto r = classical_retrieve(render_ladder(truth, cfg), cfg.render, cfg.modulation_threshold);
        SceneResult s;
        s.label = "scene" + std::to_string(i);
        s.height = height_error(r.height, truth, r.absolute().valid);
        const Grid<double> gt_phase = analytic_phase(truth, cfg.ladder.back(), cfg.render);
        const Grid<std::uint8_t> all_valid(truth.width(), truth.height(), 1);
        s.phase = Metrics{};
        detail::fill_phase_stats(s.phase, r.absolute().phase, r.absolute().valid, gt_phase, all_valid);
        s.phase.label = s.label;
        results.push_back(std::move(s));
    }
    return results;
}

} // namespace phaseforge
