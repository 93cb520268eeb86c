#pragma once

// Reproducible synthetic datasets on disk:
//   <root>/manifest.json
//   <root>/<split>/<surface-id>/surface.f32r
//   <root>/<split>/<surface-id>/f<freq>/n<step>.pgm   (n<step>.f32r when not quantized)
//   <root>/<split>/<surface-id>/f<freq>/phase_gt.f32r (absolute phase z*f*c + carrier)

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "error.hpp"
#include "fringe.hpp"
#include "raster_io.hpp"
#include "random.hpp"
#include "surface.hpp"

namespace phaseforge {

inline constexpr const char* kGeneratorVersion = "phaseforge-dataset/1";
inline const std::vector<std::string> kSplitNames{"train", "validation", "test"};

struct SurfaceRecord {
    std::string id;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> files;  // relative path -> checksum
};

struct DatasetManifest {
    DepthRegime regime = DepthRegime::Restricted;
    std::uint64_t seed = 0;
    std::size_t phase_steps = 0;
    std::vector<double> frequencies;
    std::vector<double> ground_truth_frequencies;
    bool quantized = true;
    RenderParams render;
    Interval depth_range;
    double z_th = 0.0;
    std::map<std::string, std::vector<SurfaceRecord>> splits;
    std::string checksum;  // over the manifest body, timestamps excluded
    json document;

    bool has_frequency(double f) const
    {
        return std::find(frequencies.begin(), frequencies.end(), f) != frequencies.end();
    }
    std::size_t count(const std::string& split) const
    {
        auto it = splits.find(split);
        return it == splits.end() ? 0 : it->second.size();
    }
};

/// Highest frequency among everything rendered.
inline double dataset_highest_frequency(const DatasetSettings& d)
{
    double top = 0.0;
    for (double f : d.frequencies) {
        top = std::max(top, f);
    }
    for (double f : d.ground_truth_frequencies) {
        top = std::max(top, f);
    }
    return top;
}

/// Depth range implied by the regime: restricted defaults to [0, z_th] and may
/// not exceed one period; unrestricted needs an explicit range wider than z_th.
inline Interval resolve_depth_range(const RunConfig& cfg)
{
    const double z_th = restricted_depth_sim(cfg.render, dataset_highest_frequency(cfg.dataset));
    if (cfg.dataset.regime == DepthRegime::Restricted) {
        const Interval range = cfg.depth_range.value_or(Interval{0.0, z_th});
        require(range.hi - range.lo <= z_th * (1.0 + 1e-12),
                "restricted regime depth span exceeds z_th = " + std::to_string(z_th));
        return range;
    }
    require(cfg.depth_range.has_value(), "unrestricted regime requires surface.depth_range");
    require(cfg.depth_range->hi - cfg.depth_range->lo > z_th,
            "unrestricted regime depth span must exceed z_th = " + std::to_string(z_th));
    return *cfg.depth_range;
}

inline std::string surface_id(std::size_t index)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "s%04zu", index);
    return buf;
}

/// Analytic absolute phase z*f*c (+ carrier).
inline Grid<double> analytic_phase(const Surface& surface, double frequency, const RenderParams& params)
{
    Grid<double> phase(surface.width(), surface.height());
    for (std::size_t y = 0; y < surface.height(); ++y) {
        for (std::size_t x = 0; x < surface.width(); ++x) {
            double p = surface.depth(x, y) * frequency * params.phase_constant;
            if (params.carrier_enabled) {
                p += carrier_phase(x, surface.width(), frequency);
            }
            phase(x, y) = p;
        }
    }
    return phase;
}

/// Frequencies rendered per surface: the inputs followed by any extra targets.
inline std::vector<double> rendered_frequencies(const DatasetSettings& d)
{
    std::vector<double> all = d.frequencies;
    for (double f : d.ground_truth_frequencies) {
        if (std::find(all.begin(), all.end(), f) == all.end()) {
            all.push_back(f);
        }
    }
    return all;
}

inline SurfaceGenConfig surface_config_for(const RunConfig& cfg, const std::string& split, std::size_t index)
{
    SurfaceGenConfig sc = cfg.surface;
    sc.seed = derive_seed(cfg.seed, "surface/" + split, index);
    sc.depth_range = resolve_depth_range(cfg);
    return sc;
}

/// Renders one scene the way the dataset writer does: optional noise, then
/// optional 8-bit quantization.
inline std::vector<FringeSet> render_camera_scene(const RunConfig& cfg, const Surface& surface,
                                                  const std::string& noise_tag)
{
    auto sets = render_scene(surface, rendered_frequencies(cfg.dataset), cfg.dataset.phase_steps, cfg.render);
    for (auto& set : sets) {
        for (std::size_t n = 0; n < set.images.size(); ++n) {
            auto& img = set.images[n];
            if (cfg.dataset.noise_sigma > 0.0) {
                img = add_noise(img, cfg.dataset.noise_sigma,
                                derive_seed(cfg.seed, noise_tag + "/f" + frequency_tag(set.frequency), n));
            }
            if (cfg.dataset.quantize) {
                img = quantize_image(img);
            }
        }
    }
    return sets;
}

namespace detail {

inline std::string manifest_checksum(json body)
{
    body.erase("created_utc");
    body.erase("checksum");
    return hex64(fnv1a64(body.dump()));
}

inline std::string utc_now()
{
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace detail

inline DatasetManifest manifest_from_json(const json& doc)
{
    DatasetManifest m;
    try {
        require(doc.at("generator").get<std::string>() == kGeneratorVersion, "unsupported dataset generator version");
        m.regime = parse_regime(doc.at("regime").get<std::string>());
        m.seed = doc.at("seed").get<std::uint64_t>();
        m.phase_steps = doc.at("phase_steps").get<std::size_t>();
        m.frequencies = doc.at("frequencies").get<std::vector<double>>();
        m.ground_truth_frequencies = doc.at("ground_truth_frequencies").get<std::vector<double>>();
        m.quantized = doc.at("quantized").get<bool>();
        const auto& r = doc.at("render");
        m.render = RenderParams{r.at("background").get<double>(), r.at("modulation").get<double>(),
                                r.at("phase_constant").get<double>(), r.at("carrier").get<bool>()};
        m.depth_range = Interval{doc.at("depth_range").at(0).get<double>(), doc.at("depth_range").at(1).get<double>()};
        m.z_th = doc.at("z_th").get<double>();
        for (const auto& name : kSplitNames) {
            auto& records = m.splits[name];
            for (const auto& s : doc.at("splits").at(name).at("surfaces")) {
                SurfaceRecord rec;
                rec.id = s.at("id").get<std::string>();
                rec.seed = s.at("seed").get<std::uint64_t>();
                rec.files = s.at("files").get<std::map<std::string, std::string>>();
                records.push_back(std::move(rec));
            }
        }
        m.checksum = doc.at("checksum").get<std::string>();
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("malformed dataset manifest: ") + e.what());
    }
    m.document = doc;
    return m;
}

/// Writes every split of the dataset described by cfg under root.
inline DatasetManifest build_dataset(const RunConfig& cfg, const fs::path& root)
{
    cfg.validate();
    const Interval depth = resolve_depth_range(cfg);
    const double z_th = restricted_depth_sim(cfg.render, dataset_highest_frequency(cfg.dataset));
    for (double f : cfg.dataset.ground_truth_frequencies) {
        require(f > 0.0, "ground-truth frequencies must be positive");
    }

    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec || !fs::is_directory(root)) {
        throw IoError("cannot create dataset directory " + root.string());
    }

    json doc;
    doc["generator"] = kGeneratorVersion;
    doc["regime"] = to_string(cfg.dataset.regime);
    doc["seed"] = cfg.seed;
    doc["phase_steps"] = cfg.dataset.phase_steps;
    doc["frequencies"] = rendered_frequencies(cfg.dataset);
    doc["ground_truth_frequencies"] = cfg.dataset.ground_truth_frequencies;
    doc["quantized"] = cfg.dataset.quantize;
    doc["noise_sigma"] = cfg.dataset.noise_sigma;
    doc["render"] = {{"background", cfg.render.background},
                     {"modulation", cfg.render.modulation},
                     {"phase_constant", cfg.render.phase_constant},
                     {"carrier", cfg.render.carrier_enabled}};
    doc["surface"] = {{"width", cfg.surface.width},
                      {"height", cfg.surface.height},
                      {"amplitude_range", {cfg.surface.amplitude_range.lo, cfg.surface.amplitude_range.hi}},
                      {"sigma_range", {cfg.surface.sigma_range.lo, cfg.surface.sigma_range.hi}}};
    doc["depth_range"] = {depth.lo, depth.hi};
    doc["z_th"] = z_th;

    const std::vector<std::size_t> counts{cfg.dataset.train_count, cfg.dataset.validation_count,
                                          cfg.dataset.test_count};
    json splits;
    for (std::size_t s = 0; s < kSplitNames.size(); ++s) {
        const std::string& split = kSplitNames[s];
        json surfaces = json::array();
        for (std::size_t i = 0; i < counts[s]; ++i) {
            const std::string id = surface_id(i);
            const SurfaceGenConfig sc = surface_config_for(cfg, split, i);
            const Surface surface = generate_surface(sc);
            const fs::path dir = root / split / id;
            std::map<std::string, std::string> files;
            auto record = [&](const fs::path& path) {
                files[fs::relative(path, root).generic_string()] = file_checksum(path);
            };
            write_f32r(dir / "surface.f32r", surface.depth);
            record(dir / "surface.f32r");
            const auto sets = render_camera_scene(cfg, surface, "noise/" + split + "/" + id);
            for (const auto& set : sets) {
                const fs::path fdir = dir / ("f" + frequency_tag(set.frequency));
                for (std::size_t n = 0; n < set.images.size(); ++n) {
                    if (cfg.dataset.quantize) {
                        const auto p = fdir / ("n" + std::to_string(n) + ".pgm");
                        write_pgm(p, set.images[n]);
                        record(p);
                    } else {
                        const auto p = fdir / ("n" + std::to_string(n) + ".f32r");
                        write_f32r(p, set.images[n]);
                        record(p);
                    }
                }
                write_f32r(fdir / "phase_gt.f32r", analytic_phase(surface, set.frequency, cfg.render));
                record(fdir / "phase_gt.f32r");
            }
            surfaces.push_back({{"id", id}, {"seed", sc.seed}, {"files", files}});
        }
        splits[split] = {{"count", counts[s]}, {"surfaces", surfaces}};
    }
    doc["splits"] = splits;
    doc["checksum"] = detail::manifest_checksum(doc);
    doc["created_utc"] = detail::utc_now();
    detail::write_file(root / "manifest.json", doc.dump(2) + "\n");
    return manifest_from_json(doc);
}

inline DatasetManifest load_manifest(const fs::path& root)
{
    const auto path = root / "manifest.json";
    json doc;
    try {
        doc = json::parse(detail::read_file(path));
    } catch (const json::exception& e) {
        throw InvalidInput("manifest " + path.string() + " is not valid JSON: " + e.what());
    }
    return manifest_from_json(doc);
}

/// Recomputes every file checksum and the manifest checksum. Returns the
/// list of problems (empty when the tree is intact).
inline std::vector<std::string> verify_dataset(const fs::path& root, const DatasetManifest& m)
{
    std::vector<std::string> problems;
    if (detail::manifest_checksum(m.document) != m.checksum) {
        problems.push_back("manifest checksum mismatch");
    }
    for (const auto& [split, records] : m.splits) {
        for (const auto& rec : records) {
            for (const auto& [rel, sum] : rec.files) {
                const auto path = root / rel;
                if (!fs::exists(path)) {
                    problems.push_back("missing " + rel);
                } else if (file_checksum(path) != sum) {
                    problems.push_back("checksum mismatch " + rel);
                }
            }
        }
    }
    return problems;
}

/// One surface with the fringe sets loaded for the requested frequencies.
struct SceneSample {
    std::string id;
    std::map<double, FringeSet> sets;
};

inline FringeSet load_set(const fs::path& dir, double frequency, std::size_t steps, bool quantized)
{
    if (quantized) {
        return read_fringe_set(dir, frequency, steps);
    }
    FringeSet set;
    set.frequency = frequency;
    for (std::size_t n = 0; n < steps; ++n) {
        set.images.push_back(read_f32r(dir / ("n" + std::to_string(n) + ".f32r")));
    }
    set.validate();
    return set;
}

inline std::vector<SceneSample> load_split(const fs::path& root, const DatasetManifest& m, const std::string& split,
                                           const std::vector<double>& frequencies)
{
    for (double f : frequencies) {
        require(m.has_frequency(f), "dataset lacks frequency " + frequency_tag(f));
    }
    std::vector<SceneSample> out;
    auto it = m.splits.find(split);
    require(it != m.splits.end(), "dataset has no split " + split);
    for (const auto& rec : it->second) {
        SceneSample sample;
        sample.id = rec.id;
        for (double f : frequencies) {
            sample.sets.emplace(f, load_set(root / split / rec.id / ("f" + frequency_tag(f)), f, m.phase_steps,
                                            m.quantized));
        }
        out.push_back(std::move(sample));
    }
    return out;
}

} // namespace phaseforge
