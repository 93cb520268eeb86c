#pragma once

// Encoder-decoder built from downsampler, factorized residual (ERF),
// upsampler and 1x1 output layers. The layer plan (NetworkSpec) is separate
// from the parameter store (Weights) so checkpoints can be validated against
// the plan by fingerprint.

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "../error.hpp"
#include "../random.hpp"
#include "ops.hpp"
#include "tensor.hpp"

namespace phaseforge::nn {

enum class LayerKind : std::uint8_t { Downsample, Erf, Upsample, OutputConv };

inline const char* to_string(LayerKind kind)
{
    switch (kind) {
    case LayerKind::Downsample: return "downsample";
    case LayerKind::Erf: return "erf";
    case LayerKind::Upsample: return "upsample";
    case LayerKind::OutputConv: return "output";
    }
    return "?";
}

struct LayerSpec {
    LayerKind kind = LayerKind::Erf;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t dilation = 1;  // ERF only
    std::size_t stride = 2;    // Downsample only: 1 keeps resolution, 2 halves it
    std::string label;         // e.g. "Step 2"

    Shape output_shape(Shape in) const
    {
        require(in.channels == in_channels, "layer input channels do not match plan");
        switch (kind) {
        case LayerKind::Downsample:
            if (stride == 2) {
                require(in.height % 2 == 0 && in.width % 2 == 0, "downsample needs even spatial size");
                return {out_channels, in.height / 2, in.width / 2};
            }
            return {out_channels, in.height, in.width};
        case LayerKind::Erf: return in;
        case LayerKind::Upsample: return {out_channels, in.height * 2, in.width * 2};
        case LayerKind::OutputConv: return {out_channels, in.height, in.width};
        }
        return in;
    }
};

struct NetworkSpec {
    std::vector<LayerSpec> layers;
    double width_multiplier = 1.0;
    bool normalization = true;

    std::size_t input_channels() const { return layers.front().in_channels; }
    std::size_t output_channels() const { return layers.back().out_channels; }

    /// Combined stride of the encoder; spatial sizes must be multiples of it.
    std::size_t spatial_factor() const
    {
        std::size_t factor = 1;
        for (const auto& l : layers) {
            if (l.kind == LayerKind::Downsample && l.stride == 2) {
                factor *= 2;
            }
        }
        return factor;
    }

    void validate() const
    {
        require(!layers.empty(), "network spec has no layers");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto& l = layers[i];
            require(l.in_channels >= 1 && l.out_channels >= 1, "layer with zero channels");
            if (i > 0) {
                require(layers[i - 1].out_channels == l.in_channels, "channel chaining broken at layer " + std::to_string(i));
            }
            switch (l.kind) {
            case LayerKind::Downsample:
                require(l.out_channels > l.in_channels, "downsample must add channels (conv branch would be empty)");
                require(l.stride == 1 || l.stride == 2, "downsample stride must be 1 or 2");
                break;
            case LayerKind::Erf:
                require(l.in_channels == l.out_channels, "ERF layer must preserve channels");
                require(l.dilation >= 1, "ERF dilation must be positive");
                break;
            default: break;
            }
        }
    }

    /// Output shape after every layer.
    std::vector<Shape> layer_shapes(Shape input) const
    {
        std::vector<Shape> shapes;
        Shape s = input;
        for (const auto& l : layers) {
            s = l.output_shape(s);
            shapes.push_back(s);
        }
        return shapes;
    }

    std::uint64_t fingerprint() const
    {
        std::uint64_t h = fnv1a64("fptnet-spec-v1");
        auto mix_u64 = [&](std::uint64_t v) { h = fnv1a64(&v, sizeof v, h); };
        mix_u64(layers.size());
        mix_u64(normalization ? 1 : 0);
        for (const auto& l : layers) {
            mix_u64(static_cast<std::uint64_t>(l.kind));
            mix_u64(l.in_channels);
            mix_u64(l.out_channels);
            mix_u64(l.kind == LayerKind::Erf ? l.dilation : 0);
            mix_u64(l.kind == LayerKind::Downsample ? l.stride : 0);
        }
        return h;
    }
};

template <typename T>
struct Parameter {
    std::string name;
    std::vector<std::size_t> dims;
    std::vector<T> values;
    bool trainable = true;

    std::size_t size() const noexcept { return values.size(); }
};

/// Parameter store. Any mutation through mutable_values() bumps the version,
/// which invalidates forward caches taken earlier.
template <typename T>
class Weights {
public:
    Weights() = default;
    explicit Weights(std::uint64_t fingerprint) : fingerprint_(fingerprint) {}

    std::size_t add(std::string name, std::vector<std::size_t> dims, bool trainable, T fill = T{})
    {
        std::size_t count = 1;
        for (auto d : dims) {
            count *= d;
        }
        params_.push_back({std::move(name), std::move(dims), std::vector<T>(count, fill), trainable});
        return params_.size() - 1;
    }

    std::size_t count() const noexcept { return params_.size(); }
    const Parameter<T>& param(std::size_t i) const { return params_.at(i); }
    std::span<const T> values(std::size_t i) const { return params_.at(i).values; }
    std::span<T> mutable_values(std::size_t i)
    {
        ++version_;
        return params_.at(i).values;
    }
    const std::vector<Parameter<T>>& params() const noexcept { return params_; }

    std::uint64_t fingerprint() const noexcept { return fingerprint_; }
    std::uint64_t version() const noexcept { return version_; }
    void touch() noexcept { ++version_; }

    std::size_t trainable_count() const
    {
        std::size_t total = 0;
        for (const auto& p : params_) {
            total += p.trainable ? p.size() : 0;
        }
        return total;
    }

    /// Index of the named parameter, or count() when absent.
    std::size_t find(const std::string& name) const
    {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            if (params_[i].name == name) {
                return i;
            }
        }
        return params_.size();
    }

private:
    std::vector<Parameter<T>> params_;
    std::uint64_t fingerprint_ = 0;
    std::uint64_t version_ = 0;
};

/// Gradient buffers aligned with Weights::params(); empty for non-trainable entries.
template <typename T>
struct Gradients {
    std::vector<std::vector<T>> values;

    static Gradients zeros_like(const Weights<T>& w)
    {
        Gradients g;
        g.values.reserve(w.count());
        for (const auto& p : w.params()) {
            g.values.emplace_back(p.trainable ? p.size() : 0, T{});
        }
        return g;
    }

    double squared_norm() const
    {
        double total = 0.0;
        for (const auto& v : values) {
            for (T x : v) {
                total += static_cast<double>(x) * static_cast<double>(x);
            }
        }
        return total;
    }
};

enum class Mode : std::uint8_t { Train, Eval };

template <typename T>
struct LayerCache {
    std::vector<Tensor<T>> tensors;
    std::vector<NormStats<T>> norms;
    std::vector<std::uint32_t> argmax;
};

template <typename T>
struct ForwardCache {
    std::vector<LayerCache<T>> layers;
    Shape input_shape;
    std::uint64_t fingerprint = 0;
    std::uint64_t weights_version = 0;
    Mode mode = Mode::Eval;
    bool filled = false;
};

namespace detail {

template <typename T>
struct ConvUnit {
    std::size_t weight = 0;
    std::size_t bias = 0;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    ConvGeometry geometry;

    Tensor<T> forward(const Tensor<T>& x, const Weights<T>& w) const
    {
        return conv2d_forward<T>(x, w.values(weight), w.values(bias), out_channels, geometry);
    }

    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy, const Weights<T>& w, Gradients<T>& g,
                       bool need_input_grad = true) const
    {
        conv2d_backward_weights<T>(x, dy, g.values[weight], g.values[bias], geometry);
        if (!need_input_grad) {
            return {};
        }
        return conv2d_backward_data<T>(dy, w.values(weight), in_channels, x.height(), x.width(), geometry);
    }
};

template <typename T>
struct NormUnit {
    std::size_t gamma = 0;
    std::size_t beta = 0;
    std::size_t running_mean = 0;
    std::size_t running_var = 0;

    Tensor<T> forward(const Tensor<T>& x, const Weights<T>& w, Mode mode, NormStats<T>& stats) const
    {
        return batchnorm_forward<T>(x, w.values(gamma), w.values(beta), w.values(running_mean), w.values(running_var),
                                    mode == Mode::Train, stats);
    }

    Tensor<T> backward(const Tensor<T>& dy, const Tensor<T>& x, const Weights<T>& w, const NormStats<T>& stats,
                       Gradients<T>& g) const
    {
        return batchnorm_backward<T>(dy, x, w.values(gamma), stats, g.values[gamma], g.values[beta]);
    }

    void update_running(Weights<T>& w, const NormStats<T>& stats, double momentum) const
    {
        auto mean = w.mutable_values(running_mean);
        auto var = w.mutable_values(running_var);
        for (std::size_t c = 0; c < mean.size(); ++c) {
            mean[c] = static_cast<T>((1.0 - momentum) * static_cast<double>(mean[c]) + momentum * stats.mean[c]);
            var[c] = static_cast<T>((1.0 - momentum) * static_cast<double>(var[c]) + momentum * stats.var[c]);
        }
    }
};

template <typename T>
class Layer {
public:
    virtual ~Layer() = default;
    /// cache == nullptr means inference without retaining activations.
    virtual Tensor<T> forward(const Tensor<T>& x, const Weights<T>& w, Mode mode, LayerCache<T>* cache) const = 0;
    virtual Tensor<T> backward(const Tensor<T>& dy, const Weights<T>& w, const LayerCache<T>& cache,
                               Gradients<T>& g) const = 0;
    virtual void update_running(Weights<T>&, const LayerCache<T>&, double) const {}
};

template <typename T>
ConvUnit<T> make_conv(Weights<T>& w, const std::string& name, std::size_t in, std::size_t out, ConvGeometry g,
                      bool transposed = false)
{
    ConvUnit<T> unit;
    unit.in_channels = in;
    unit.out_channels = out;
    unit.geometry = g;
    if (transposed) {
        // stored in convolution layout: the transposed input plays the conv output role
        unit.weight = w.add(name + ".weight", {in, out, g.kernel_h, g.kernel_w}, true);
        unit.bias = w.add(name + ".bias", {out}, true);
    } else {
        unit.weight = w.add(name + ".weight", {out, in, g.kernel_h, g.kernel_w}, true);
        unit.bias = w.add(name + ".bias", {out}, true);
    }
    return unit;
}

template <typename T>
NormUnit<T> make_norm(Weights<T>& w, const std::string& name, std::size_t channels)
{
    NormUnit<T> unit;
    unit.gamma = w.add(name + ".gamma", {channels}, true, T{1});
    unit.beta = w.add(name + ".beta", {channels}, true, T{0});
    unit.running_mean = w.add(name + ".running_mean", {channels}, false, T{0});
    unit.running_var = w.add(name + ".running_var", {channels}, false, T{1});
    return unit;
}

/// [stride-2 3x3 conv (out-in channels) | 2x2 max-pool of the input] -> norm -> ReLU.
/// With stride 1 the pooled branch is replaced by the input itself.
template <typename T>
class DownsampleLayer final : public Layer<T> {
public:
    DownsampleLayer(Weights<T>& w, const std::string& name, const LayerSpec& spec, bool norm)
        : spec_(spec), norm_enabled_(norm)
    {
        const ConvGeometry g{3, 3, spec.stride, 1, 1, 1, 1};
        conv_ = make_conv<T>(w, name + ".conv", spec.in_channels, spec.out_channels - spec.in_channels, g);
        if (norm) {
            norm_ = make_norm<T>(w, name + ".norm", spec.out_channels);
        }
    }

    Tensor<T> forward(const Tensor<T>& x, const Weights<T>& w, Mode mode, LayerCache<T>* cache) const override
    {
        Tensor<T> conv = conv_.forward(x, w);
        std::vector<std::uint32_t> argmax;
        Tensor<T> merged =
            spec_.stride == 2 ? concat_channels(conv, maxpool2x2_forward(x, cache ? &argmax : nullptr)) : concat_channels(conv, x);
        NormStats<T> stats;
        Tensor<T> y = norm_enabled_ ? norm_.forward(merged, w, mode, stats) : merged;
        relu_inplace(y);
        if (cache != nullptr) {
            cache->tensors = {x, std::move(merged), y};
            cache->norms = {std::move(stats)};
            cache->argmax = std::move(argmax);
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy, const Weights<T>& w, const LayerCache<T>& cache,
                       Gradients<T>& g) const override
    {
        const Tensor<T>& x = cache.tensors[0];
        const Tensor<T>& merged = cache.tensors[1];
        Tensor<T> grad = dy;
        relu_backward_inplace(grad, cache.tensors[2]);
        if (norm_enabled_) {
            grad = norm_.backward(grad, merged, w, cache.norms[0], g);
        }
        const std::size_t conv_ch = spec_.out_channels - spec_.in_channels;
        Tensor<T> d_conv = slice_channels(grad, 0, conv_ch);
        Tensor<T> d_pass = slice_channels(grad, conv_ch, spec_.in_channels);
        Tensor<T> dx = conv_.backward(x, d_conv, w, g);
        if (spec_.stride == 2) {
            add_inplace(dx, maxpool2x2_backward(d_pass, cache.argmax, x.shape()));
        } else {
            add_inplace(dx, d_pass);
        }
        return dx;
    }

    void update_running(Weights<T>& w, const LayerCache<T>& cache, double momentum) const override
    {
        if (norm_enabled_) {
            norm_.update_running(w, cache.norms[0], momentum);
        }
    }

private:
    LayerSpec spec_;
    bool norm_enabled_;
    ConvUnit<T> conv_;
    NormUnit<T> norm_;
};

/// Non-bottleneck 1-D residual block:
/// x -> 3x1 -> ReLU -> 1x3 -> norm -> ReLU -> 3x1(dil) -> ReLU -> 1x3(dil) -> norm -> (+x) -> ReLU.
template <typename T>
class ErfLayer final : public Layer<T> {
public:
    ErfLayer(Weights<T>& w, const std::string& name, const LayerSpec& spec, bool norm) : norm_enabled_(norm)
    {
        const std::size_t c = spec.in_channels;
        const std::size_t d = spec.dilation;
        conv1_ = make_conv<T>(w, name + ".conv3x1_1", c, c, ConvGeometry{3, 1, 1, 1, 0, 1, 1});
        conv2_ = make_conv<T>(w, name + ".conv1x3_1", c, c, ConvGeometry{1, 3, 1, 0, 1, 1, 1});
        if (norm) {
            norm1_ = make_norm<T>(w, name + ".norm1", c);
        }
        conv3_ = make_conv<T>(w, name + ".conv3x1_2", c, c, ConvGeometry{3, 1, 1, d, 0, d, 1});
        conv4_ = make_conv<T>(w, name + ".conv1x3_2", c, c, ConvGeometry{1, 3, 1, 0, d, 1, d});
        if (norm) {
            norm2_ = make_norm<T>(w, name + ".norm2", c);
        }
    }

    Tensor<T> forward(const Tensor<T>& x, const Weights<T>& w, Mode mode, LayerCache<T>* cache) const override
    {
        Tensor<T> r1 = conv1_.forward(x, w);
        relu_inplace(r1);
        Tensor<T> a2 = conv2_.forward(r1, w);
        NormStats<T> s1;
        NormStats<T> s2;
        Tensor<T> r2 = norm_enabled_ ? norm1_.forward(a2, w, mode, s1) : a2;
        relu_inplace(r2);
        Tensor<T> r3 = conv3_.forward(r2, w);
        relu_inplace(r3);
        Tensor<T> a4 = conv4_.forward(r3, w);
        Tensor<T> y = norm_enabled_ ? norm2_.forward(a4, w, mode, s2) : a4;
        add_inplace(y, x);
        relu_inplace(y);
        if (cache != nullptr) {
            cache->tensors = {x, std::move(r1), std::move(a2), std::move(r2), std::move(r3), std::move(a4), y};
            cache->norms = {std::move(s1), std::move(s2)};
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy, const Weights<T>& w, const LayerCache<T>& cache,
                       Gradients<T>& g) const override
    {
        const auto& t = cache.tensors;
        Tensor<T> grad = dy;
        relu_backward_inplace(grad, t[6]);
        Tensor<T> residual = grad;
        if (norm_enabled_) {
            grad = norm2_.backward(grad, t[5], w, cache.norms[1], g);
        }
        grad = conv4_.backward(t[4], grad, w, g);
        relu_backward_inplace(grad, t[4]);
        grad = conv3_.backward(t[3], grad, w, g);
        relu_backward_inplace(grad, t[3]);
        if (norm_enabled_) {
            grad = norm1_.backward(grad, t[2], w, cache.norms[0], g);
        }
        grad = conv2_.backward(t[1], grad, w, g);
        relu_backward_inplace(grad, t[1]);
        grad = conv1_.backward(t[0], grad, w, g);
        add_inplace(grad, residual);
        return grad;
    }

    void update_running(Weights<T>& w, const LayerCache<T>& cache, double momentum) const override
    {
        if (norm_enabled_) {
            norm1_.update_running(w, cache.norms[0], momentum);
            norm2_.update_running(w, cache.norms[1], momentum);
        }
    }

private:
    bool norm_enabled_;
    ConvUnit<T> conv1_, conv2_, conv3_, conv4_;
    NormUnit<T> norm1_, norm2_;
};

/// Stride-2 transposed 3x3 convolution (doubles resolution) -> norm -> ReLU.
template <typename T>
class UpsampleLayer final : public Layer<T> {
public:
    UpsampleLayer(Weights<T>& w, const std::string& name, const LayerSpec& spec, bool norm)
        : spec_(spec), norm_enabled_(norm)
    {
        deconv_ = make_conv<T>(w, name + ".deconv", spec.in_channels, spec.out_channels, geometry(), true);
        if (norm) {
            norm_ = make_norm<T>(w, name + ".norm", spec.out_channels);
        }
    }

    static ConvGeometry geometry() { return ConvGeometry{3, 3, 2, 1, 1, 1, 1}; }

    Tensor<T> forward(const Tensor<T>& x, const Weights<T>& w, Mode mode, LayerCache<T>* cache) const override
    {
        Tensor<T> up = conv2d_backward_data<T>(x, w.values(deconv_.weight), spec_.out_channels, 2 * x.height(),
                                               2 * x.width(), geometry());
        const auto bias = w.values(deconv_.bias);
        for (std::size_t n = 0; n < up.batch(); ++n) {
            for (std::size_t c = 0; c < up.channels(); ++c) {
                T* p = up.plane(n, c);
                for (std::size_t i = 0; i < up.plane_size(); ++i) {
                    p[i] += bias[c];
                }
            }
        }
        NormStats<T> stats;
        Tensor<T> y = norm_enabled_ ? norm_.forward(up, w, mode, stats) : up;
        relu_inplace(y);
        if (cache != nullptr) {
            cache->tensors = {x, std::move(up), y};
            cache->norms = {std::move(stats)};
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy, const Weights<T>& w, const LayerCache<T>& cache,
                       Gradients<T>& g) const override
    {
        const Tensor<T>& x = cache.tensors[0];
        Tensor<T> grad = dy;
        relu_backward_inplace(grad, cache.tensors[2]);
        if (norm_enabled_) {
            grad = norm_.backward(grad, cache.tensors[1], w, cache.norms[0], g);
        }
        // the upsampled gradient is the input of the equivalent forward convolution
        conv2d_backward_weights<T>(grad, x, g.values[deconv_.weight], std::span<T>{}, geometry());
        auto& db = g.values[deconv_.bias];
        for (std::size_t c = 0; c < grad.channels(); ++c) {
            double total = 0.0;
            for (std::size_t n = 0; n < grad.batch(); ++n) {
                const T* p = grad.plane(n, c);
                for (std::size_t i = 0; i < grad.plane_size(); ++i) {
                    total += static_cast<double>(p[i]);
                }
            }
            db[c] += static_cast<T>(total);
        }
        return conv2d_forward<T>(grad, w.values(deconv_.weight), std::span<const T>{}, spec_.in_channels, geometry());
    }

    void update_running(Weights<T>& w, const LayerCache<T>& cache, double momentum) const override
    {
        if (norm_enabled_) {
            norm_.update_running(w, cache.norms[0], momentum);
        }
    }

private:
    LayerSpec spec_;
    bool norm_enabled_;
    ConvUnit<T> deconv_;
    NormUnit<T> norm_;
};

/// Linear 1x1 convolution producing the output fringes.
template <typename T>
class OutputLayer final : public Layer<T> {
public:
    OutputLayer(Weights<T>& w, const std::string& name, const LayerSpec& spec)
    {
        conv_ = make_conv<T>(w, name + ".conv1x1", spec.in_channels, spec.out_channels, ConvGeometry{1, 1, 1, 0, 0, 1, 1});
    }

    Tensor<T> forward(const Tensor<T>& x, const Weights<T>& w, Mode, LayerCache<T>* cache) const override
    {
        if (cache != nullptr) {
            cache->tensors = {x};
        }
        return conv_.forward(x, w);
    }

    Tensor<T> backward(const Tensor<T>& dy, const Weights<T>& w, const LayerCache<T>& cache,
                       Gradients<T>& g) const override
    {
        return conv_.backward(cache.tensors[0], dy, w, g);
    }

private:
    ConvUnit<T> conv_;
};

} // namespace detail

template <typename T>
struct ForwardResult {
    Tensor<T> output;
    ForwardCache<T> cache;
};

/// Executable form of a NetworkSpec.
template <typename T>
class Network {
public:
    explicit Network(NetworkSpec spec) : spec_(std::move(spec))
    {
        spec_.validate();
        layout_ = Weights<T>(spec_.fingerprint());
        for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
            const auto& l = spec_.layers[i];
            const std::string name = std::string("l") + (i < 10 ? "0" : "") + std::to_string(i) + "." + to_string(l.kind);
            switch (l.kind) {
            case LayerKind::Downsample:
                layers_.push_back(std::make_unique<detail::DownsampleLayer<T>>(layout_, name, l, spec_.normalization));
                break;
            case LayerKind::Erf:
                layers_.push_back(std::make_unique<detail::ErfLayer<T>>(layout_, name, l, spec_.normalization));
                break;
            case LayerKind::Upsample:
                layers_.push_back(std::make_unique<detail::UpsampleLayer<T>>(layout_, name, l, spec_.normalization));
                break;
            case LayerKind::OutputConv:
                layers_.push_back(std::make_unique<detail::OutputLayer<T>>(layout_, name, l));
                break;
            }
        }
    }

    const NetworkSpec& spec() const noexcept { return spec_; }

    /// Zero-filled parameter store with the right layout (norm scales at 1).
    Weights<T> empty_weights() const { return layout_; }

    /// Fan-in scaled uniform initialization: U(-sqrt(6/fan_in), sqrt(6/fan_in)) ahead of ReLUs,
    /// U(-sqrt(3/fan_in), sqrt(3/fan_in)) for the linear output conv, zero biases.
    /// The closing norm scale of each residual block starts at 0 so blocks begin as identities.
    Weights<T> init_weights(std::uint64_t seed) const
    {
        Weights<T> w = layout_;
        Rng rng(derive_seed(seed, "weight-init"));
        for (std::size_t i = 0; i < w.count(); ++i) {
            const auto& p = w.param(i);
            if (p.name.ends_with(".norm2.gamma")) {
                for (auto& v : w.mutable_values(i)) {
                    v = T{0};
                }
                continue;
            }
            if (p.dims.size() != 4) {
                continue;
            }
            const bool linear = p.name.find(".output.") != std::string::npos;
            const bool transposed = p.name.find(".deconv.") != std::string::npos;
            double fan_in = static_cast<double>(p.dims[1] * p.dims[2] * p.dims[3]);
            if (transposed) {
                // each output of a stride-2 transposed conv sees about a quarter of the taps
                fan_in = static_cast<double>(p.dims[0] * p.dims[2] * p.dims[3]) / 4.0;
            }
            const double bound = std::sqrt((linear ? 3.0 : 6.0) / fan_in);
            for (auto& v : w.mutable_values(i)) {
                v = static_cast<T>(rng.uniform(-bound, bound));
            }
        }
        return w;
    }

    /// Runs every layer. keep_cache retains activations for backward().
    ForwardResult<T> forward(const Weights<T>& w, const Tensor<T>& input, Mode mode, bool keep_cache,
                             std::vector<Shape>* layer_shapes = nullptr) const
    {
        check_weights(w);
        require(input.channels() == spec_.input_channels(), "input has " + std::to_string(input.channels()) +
                                                                 " channels, network expects " +
                                                                 std::to_string(spec_.input_channels()));
        const std::size_t factor = spec_.spatial_factor();
        require(input.height() % factor == 0 && input.width() % factor == 0,
                "input spatial size must be a multiple of " + std::to_string(factor));
        ForwardResult<T> result;
        result.cache.input_shape = input.shape();
        result.cache.fingerprint = w.fingerprint();
        result.cache.weights_version = w.version();
        result.cache.mode = mode;
        if (keep_cache) {
            result.cache.layers.resize(layers_.size());
        }
        Tensor<T> x = input;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            x = layers_[i]->forward(x, w, mode, keep_cache ? &result.cache.layers[i] : nullptr);
            if (layer_shapes != nullptr) {
                layer_shapes->push_back(x.shape());
            }
        }
        result.cache.filled = keep_cache;
        result.output = std::move(x);
        return result;
    }

    Gradients<T> backward(const Weights<T>& w, const ForwardCache<T>& cache, const Tensor<T>& output_grad) const
    {
        check_weights(w);
        require(cache.filled && cache.layers.size() == layers_.size(), "forward cache was not retained");
        require(cache.fingerprint == w.fingerprint() && cache.weights_version == w.version(),
                "stale forward cache: weights changed since forward()");
        Gradients<T> g = Gradients<T>::zeros_like(w);
        Tensor<T> grad = output_grad;
        for (std::size_t i = layers_.size(); i-- > 0;) {
            grad = layers_[i]->backward(grad, w, cache.layers[i], g);
        }
        return g;
    }

    /// Folds training-mode batch statistics into the running estimates.
    void update_running_stats(Weights<T>& w, const ForwardCache<T>& cache, double momentum = 0.1) const
    {
        if (!spec_.normalization || cache.mode != Mode::Train || !cache.filled) {
            return;
        }
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            layers_[i]->update_running(w, cache.layers[i], momentum);
        }
    }

private:
    void check_weights(const Weights<T>& w) const
    {
        require(w.fingerprint() == spec_.fingerprint(), "weights fingerprint does not match network spec");
        require(w.count() == layout_.count(), "weights layout does not match network spec");
    }

    NetworkSpec spec_;
    Weights<T> layout_;
    std::vector<std::unique_ptr<detail::Layer<T>>> layers_;
};

template <typename T>
struct LossResult {
    double value = 0.0;
    Tensor<T> gradient;
};

/// Mean squared error over every pixel of every output image: each stack's
/// (1/(m*N)) * sum ||pred - target||^2, averaged over stacks and batch.
template <typename T>
LossResult<T> mse_loss(const Tensor<T>& predicted, const Tensor<T>& target)
{
    require(predicted.batch() == target.batch() && predicted.shape() == target.shape(), "loss: shape mismatch");
    LossResult<T> r;
    r.gradient = Tensor<T>(predicted.batch(), predicted.shape());
    const auto p = predicted.values();
    const auto t = target.values();
    auto g = r.gradient.values();
    const double scale = 1.0 / static_cast<double>(p.size());
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
        total += d * d;
        g[i] = static_cast<T>(2.0 * d * scale);
    }
    r.value = total * scale;
    return r;
}

} // namespace phaseforge::nn
