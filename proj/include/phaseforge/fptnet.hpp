#pragma once

// Training and inference for the fringe-to-fringe networks.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "dataset.hpp"
#include "error.hpp"
#include "fptnet_spec.hpp"
#include "nn/adam.hpp"
#include "nn/checkpoint.hpp"
#include "nn/network.hpp"
#include "random.hpp"

namespace phaseforge {

using FloatNet = nn::Network<float>;
using FloatWeights = nn::Weights<float>;

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double wall_time_s = 0.0;
};

inline json to_json(const EpochLog& e)
{
    return {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"wall_time_s", e.wall_time_s}};
}

struct TrainConfig {
    nn::AdamConfig adam;
    std::size_t batch_size = 4;
    std::size_t epochs = 10;
    std::uint64_t seed = 1;
    std::size_t checkpoint_every = 0;   // epochs between intermediate checkpoints
    fs::path checkpoint_path;           // empty: no checkpoint files
    fs::path log_path;                  // empty: no JSON-lines log
    std::size_t max_train_samples = 0;  // 0: whole split
    std::function<void(const EpochLog&)> on_epoch;

    void validate() const
    {
        adam.validate();
        require(batch_size >= 1, "batch_size must be at least 1");
    }

    static TrainConfig from(const TrainSettings& s)
    {
        TrainConfig c;
        c.adam = s.adam();
        c.batch_size = s.batch_size;
        c.epochs = s.epochs;
        c.seed = s.seed;
        c.checkpoint_every = s.checkpoint_every;
        return c;
    }
};

struct TrainResult {
    FloatWeights weights;
    nn::Adam<float> optimizer;
    std::vector<EpochLog> log;
};

/// Network input: the first image (offset 0) of every input frequency, as channels.
inline nn::Tensor<float> input_tensor(const std::vector<const FringeImage*>& fringes)
{
    require(!fringes.empty(), "no input fringes");
    const std::size_t w = fringes.front()->width();
    const std::size_t h = fringes.front()->height();
    nn::Tensor<float> t(1, fringes.size(), h, w);
    for (std::size_t c = 0; c < fringes.size(); ++c) {
        require(fringes[c]->width() == w && fringes[c]->height() == h, "input fringes differ in size");
        auto* dst = t.plane(0, c);
        const auto src = fringes[c]->values();
        for (std::size_t i = 0; i < src.size(); ++i) {
            dst[i] = static_cast<float>(src[i]);
        }
    }
    return t;
}

/// Stacks batch entries of identical shape into one tensor.
inline nn::Tensor<float> stack_batch(const std::vector<const nn::Tensor<float>*>& items)
{
    require(!items.empty(), "empty batch");
    nn::Tensor<float> out(items.size(), items.front()->shape());
    const std::size_t per = items.front()->shape().elements();
    for (std::size_t i = 0; i < items.size(); ++i) {
        require(items[i]->shape() == items.front()->shape(), "batch entries differ in shape");
        std::copy_n(items[i]->values().data(), per, out.values().data() + i * per);
    }
    return out;
}

namespace detail {

struct TrainingPair {
    nn::Tensor<float> input;
    nn::Tensor<float> target;
};

inline TrainingPair make_pair(const SceneSample& s, const Variant& v)
{
    std::vector<const FringeImage*> inputs;
    for (double f : v.input_frequencies) {
        inputs.push_back(&s.sets.at(f).images.at(0));
    }
    TrainingPair p{input_tensor(inputs), {}};
    const std::size_t h = p.input.height();
    const std::size_t w = p.input.width();
    p.target = nn::Tensor<float>(1, v.phase_steps * v.output_frequencies.size(), h, w);
    std::size_t c = 0;
    for (double f : v.output_frequencies) {
        const auto& set = s.sets.at(f);
        require(set.images.size() == v.phase_steps, "dataset phase steps differ from variant");
        for (const auto& img : set.images) {
            auto* dst = p.target.plane(0, c++);
            for (std::size_t i = 0; i < img.size(); ++i) {
                dst[i] = static_cast<float>(img[i]);
            }
        }
    }
    p.input = nn::pad_to_multiple(p.input, kSpatialMultiple);
    p.target = nn::pad_to_multiple(p.target, kSpatialMultiple);
    return p;
}

inline std::vector<double> variant_frequencies(const Variant& v)
{
    std::vector<double> all = v.input_frequencies;
    for (double f : v.output_frequencies) {
        if (std::find(all.begin(), all.end(), f) == all.end()) {
            all.push_back(f);
        }
    }
    return all;
}

inline std::vector<TrainingPair> load_pairs(const fs::path& root, const DatasetManifest& m, const std::string& split,
                                            const Variant& v, std::size_t limit = 0)
{
    auto samples = load_split(root, m, split, variant_frequencies(v));
    if (limit != 0 && samples.size() > limit) {
        samples.resize(limit);
    }
    std::vector<TrainingPair> pairs;
    pairs.reserve(samples.size());
    for (const auto& s : samples) {
        pairs.push_back(make_pair(s, v));
    }
    return pairs;
}

inline double mean_eval_loss(const FloatNet& net, const FloatWeights& w, const std::vector<TrainingPair>& pairs,
                             std::size_t batch)
{
    if (pairs.empty()) {
        return 0.0;
    }
    double total = 0.0;
    for (std::size_t start = 0; start < pairs.size(); start += batch) {
        const std::size_t end = std::min(pairs.size(), start + batch);
        std::vector<const nn::Tensor<float>*> xs, ys;
        for (std::size_t i = start; i < end; ++i) {
            xs.push_back(&pairs[i].input);
            ys.push_back(&pairs[i].target);
        }
        const auto out = net.forward(w, stack_batch(xs), nn::Mode::Eval, false);
        total += nn::mse_loss(out.output, stack_batch(ys)).value * static_cast<double>(end - start);
    }
    return total / static_cast<double>(pairs.size());
}

} // namespace detail

/// Rejects dataset/variant combinations that cannot train.
inline void check_dataset_for_variant(const DatasetManifest& m, const Variant& v)
{
    v.validate();
    require(m.phase_steps == v.phase_steps, "dataset has " + std::to_string(m.phase_steps) +
                                                "-step sets, variant expects " + std::to_string(v.phase_steps));
    if (v.kind == VariantKind::U_I) {
        require(m.regime == DepthRegime::Restricted, "variant u1 requires a restricted-depth dataset");
    }
    if (v.kind == VariantKind::U_II) {
        require(m.has_frequency(v.input_frequencies[1]),
                "variant u2 needs second input frequency " + frequency_tag(v.input_frequencies[1]) +
                    " which the dataset lacks");
    }
    for (double f : detail::variant_frequencies(v)) {
        require(m.has_frequency(f), "dataset lacks frequency " + frequency_tag(f) + " required by the variant");
    }
}

/// Minimizes the mean squared fringe error with Adam. Batches are reshuffled
/// each epoch from the seed; validation loss is monitored only.
inline TrainResult train(const nn::NetworkSpec& spec, const fs::path& dataset_root, const DatasetManifest& manifest,
                         const Variant& variant, const TrainConfig& config)
{
    config.validate();
    check_dataset_for_variant(manifest, variant);
    const FloatNet net(spec);
    const auto train_pairs = detail::load_pairs(dataset_root, manifest, "train", variant, config.max_train_samples);
    const auto val_pairs = detail::load_pairs(dataset_root, manifest, "validation", variant);
    require(!train_pairs.empty(), "training split is empty");
    require(train_pairs.front().input.channels() == spec.input_channels() &&
                train_pairs.front().target.channels() == spec.output_channels(),
            "network spec does not match the variant's input/output channels");

    TrainResult result{net.init_weights(config.seed), {}, {}};
    result.optimizer = nn::Adam<float>(result.weights, config.adam);
    std::ofstream log;
    if (!config.log_path.empty()) {
        if (config.log_path.has_parent_path()) {
            fs::create_directories(config.log_path.parent_path());
        }
        log.open(config.log_path, std::ios::trunc);
        if (!log) {
            throw IoError("cannot write training log " + config.log_path.string());
        }
    }

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(train_pairs.size());
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(config.seed, "shuffle", epoch));
        for (std::size_t i = order.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(rng.uniform01() * static_cast<double>(i));
            std::swap(order[i - 1], order[std::min(j, i - 1)]);
        }
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<const nn::Tensor<float>*> xs, ys;
            for (std::size_t i = start; i < end; ++i) {
                xs.push_back(&train_pairs[order[i]].input);
                ys.push_back(&train_pairs[order[i]].target);
            }
            auto fwd = net.forward(result.weights, stack_batch(xs), nn::Mode::Train, true);
            const auto loss = nn::mse_loss(fwd.output, stack_batch(ys));
            if (!std::isfinite(loss.value)) {
                throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
            }
            epoch_loss += loss.value * static_cast<double>(end - start);
            const auto grads = net.backward(result.weights, fwd.cache, loss.gradient);
            net.update_running_stats(result.weights, fwd.cache);
            result.optimizer.step(result.weights, grads);
        }
        EpochLog entry;
        entry.epoch = epoch;
        entry.train_loss = epoch_loss / static_cast<double>(order.size());
        entry.val_loss = detail::mean_eval_loss(net, result.weights, val_pairs, config.batch_size);
        entry.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!std::isfinite(entry.val_loss)) {
            throw NumericError("validation loss is not finite at epoch " + std::to_string(epoch));
        }
        result.log.push_back(entry);
        if (log) {
            log << to_json(entry).dump() << "\n" << std::flush;
        }
        if (config.on_epoch) {
            config.on_epoch(entry);
        }
        if (!config.checkpoint_path.empty() && config.checkpoint_every != 0 && epoch % config.checkpoint_every == 0 &&
            epoch != config.epochs) {
            nn::save_checkpoint(config.checkpoint_path.string() + ".epoch" + std::to_string(epoch), result.weights,
                                &result.optimizer);
        }
    }
    if (!config.checkpoint_path.empty()) {
        nn::save_checkpoint(config.checkpoint_path, result.weights, &result.optimizer);
    }
    return result;
}

/// Runs the network in eval mode on 1 or 2 fringes: pads to a multiple of 8,
/// crops back, clamps to [0, 1] and splits the channels into N-image stacks.
inline std::vector<FringeSet> infer(const FloatWeights& weights, const nn::NetworkSpec& spec, const Variant& variant,
                                    const std::vector<FringeImage>& inputs)
{
    variant.validate();
    require(inputs.size() == variant.input_count(), "variant " + to_string(variant.kind) + " takes " +
                                                        std::to_string(variant.input_count()) + " input fringe(s), got " +
                                                        std::to_string(inputs.size()));
    require(spec.output_channels() == variant.phase_steps * variant.output_frequencies.size(),
            "network spec does not match the variant's output plan");
    const FloatNet net(spec);
    std::vector<const FringeImage*> ptrs;
    for (const auto& img : inputs) {
        ptrs.push_back(&img);
    }
    const auto x = input_tensor(ptrs);
    const std::size_t h = x.height();
    const std::size_t w = x.width();
    const auto y = nn::crop(net.forward(weights, nn::pad_to_multiple(x, kSpatialMultiple), nn::Mode::Eval, false).output,
                            h, w);
    if (!y.all_finite()) {
        throw NumericError("network produced non-finite output");
    }
    std::vector<FringeSet> sets;
    std::size_t c = 0;
    for (double f : variant.output_frequencies) {
        FringeSet set;
        set.frequency = f;
        for (std::size_t n = 0; n < variant.phase_steps; ++n, ++c) {
            FringeImage img(w, h);
            const float* src = y.plane(0, c);
            for (std::size_t i = 0; i < img.size(); ++i) {
                img[i] = std::clamp(static_cast<double>(src[i]), 0.0, 1.0);
            }
            set.images.push_back(std::move(img));
        }
        sets.push_back(std::move(set));
    }
    return sets;
}

/// Loads a checkpoint for the given spec; a spec mismatch is InvalidInput.
inline FloatWeights load_weights(const fs::path& path, const nn::NetworkSpec& spec)
{
    return nn::load_checkpoint(path, FloatNet(spec).empty_weights());
}

} // namespace phaseforge
