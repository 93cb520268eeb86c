#pragma once

// Primitive tensor operations with exact backward passes. Weights use the
// [out][in][kh][kw] layout throughout.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "../error.hpp"
#include "parallel.hpp"
#include "tensor.hpp"

namespace phaseforge::nn {

struct ConvGeometry {
    std::size_t kernel_h = 3;
    std::size_t kernel_w = 3;
    std::size_t stride = 1;
    std::size_t pad_h = 1;
    std::size_t pad_w = 1;
    std::size_t dilation_h = 1;
    std::size_t dilation_w = 1;

    std::size_t out_h(std::size_t in) const { return out_extent(in, kernel_h, pad_h, dilation_h); }
    std::size_t out_w(std::size_t in) const { return out_extent(in, kernel_w, pad_w, dilation_w); }
    std::size_t taps() const noexcept { return kernel_h * kernel_w; }

private:
    std::size_t out_extent(std::size_t in, std::size_t k, std::size_t pad, std::size_t dil) const
    {
        const std::ptrdiff_t span = static_cast<std::ptrdiff_t>(in + 2 * pad) -
                                    static_cast<std::ptrdiff_t>(dil * (k - 1)) - 1;
        require(span >= 0, "convolution kernel larger than padded input");
        return static_cast<std::size_t>(span) / stride + 1;
    }
};

namespace detail {

/// Output indices o with 0 <= o*stride + offset < in_extent, clipped to [0, out_extent).
struct TapRange {
    std::size_t lo = 0;
    std::size_t hi = 0;
};

inline TapRange tap_range(std::ptrdiff_t offset, std::size_t stride, std::size_t in_extent, std::size_t out_extent)
{
    const auto s = static_cast<std::ptrdiff_t>(stride);
    const std::ptrdiff_t lo = offset >= 0 ? 0 : (-offset + s - 1) / s;
    const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(in_extent) - 1 - offset;
    if (last < 0) {
        return {0, 0};
    }
    const std::ptrdiff_t hi = last / s + 1;
    const auto out = static_cast<std::ptrdiff_t>(out_extent);
    const std::ptrdiff_t clo = std::clamp<std::ptrdiff_t>(lo, 0, out);
    const std::ptrdiff_t chi = std::clamp<std::ptrdiff_t>(hi, clo, out);
    return {static_cast<std::size_t>(clo), static_cast<std::size_t>(chi)};
}

struct TapTable {
    std::vector<TapRange> rows;  // per ky
    std::vector<TapRange> cols;  // per kx
    std::vector<std::ptrdiff_t> row_offset;
    std::vector<std::ptrdiff_t> col_offset;
};

inline TapTable make_taps(const ConvGeometry& g, std::size_t in_h, std::size_t in_w, std::size_t out_h,
                          std::size_t out_w)
{
    TapTable t;
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        const auto off = static_cast<std::ptrdiff_t>(ky * g.dilation_h) - static_cast<std::ptrdiff_t>(g.pad_h);
        t.row_offset.push_back(off);
        t.rows.push_back(tap_range(off, g.stride, in_h, out_h));
    }
    for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        const auto off = static_cast<std::ptrdiff_t>(kx * g.dilation_w) - static_cast<std::ptrdiff_t>(g.pad_w);
        t.col_offset.push_back(off);
        t.cols.push_back(tap_range(off, g.stride, in_w, out_w));
    }
    return t;
}

} // namespace detail

/// y[n][o] = bias[o] + sum_i W[o][i] (*) x[n][i]. Empty bias means none.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias,
                         std::size_t out_channels, const ConvGeometry& g)
{
    const std::size_t in_ch = x.channels();
    require(weight.size() == out_channels * in_ch * g.taps(), "conv2d: weight size mismatch");
    require(bias.empty() || bias.size() == out_channels, "conv2d: bias size mismatch");
    const std::size_t out_h = g.out_h(x.height());
    const std::size_t out_w = g.out_w(x.width());
    const std::size_t in_w = x.width();
    Tensor<T> y(x.batch(), out_channels, out_h, out_w);
    const auto taps = detail::make_taps(g, x.height(), x.width(), out_h, out_w);
    const std::size_t s = g.stride;

    parallel_for(x.batch() * out_channels, [&](std::size_t job) {
        const std::size_t n = job / out_channels;
        const std::size_t o = job % out_channels;
        T* yp = y.plane(n, o);
        std::fill_n(yp, out_h * out_w, bias.empty() ? T{} : bias[o]);
        for (std::size_t i = 0; i < in_ch; ++i) {
            const T* xp = x.plane(n, i);
            const T* wp = weight.data() + (o * in_ch + i) * g.taps();
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
                const auto rows = taps.rows[ky];
                for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                    const auto cols = taps.cols[kx];
                    const T wv = wp[ky * g.kernel_w + kx];
                    const std::size_t count = cols.hi - cols.lo;
                    if (count == 0) {
                        continue;
                    }
                    for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
                        const auto iy = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(oy * s) + taps.row_offset[ky]);
                        const auto ix0 = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(cols.lo * s) + taps.col_offset[kx]);
                        const T* src = xp + iy * in_w + ix0;
                        T* dst = yp + oy * out_w + cols.lo;
                        if (s == 1) {
                            for (std::size_t k = 0; k < count; ++k) {
                                dst[k] += wv * src[k];
                            }
                        } else {
                            for (std::size_t k = 0; k < count; ++k) {
                                dst[k] += wv * src[k * s];
                            }
                        }
                    }
                }
            }
        }
    });
    return y;
}

/// Gradient of conv2d_forward w.r.t. its input (also the transposed-convolution forward).
template <typename T>
Tensor<T> conv2d_backward_data(const Tensor<T>& dy, std::span<const T> weight, std::size_t in_channels,
                               std::size_t in_h, std::size_t in_w, const ConvGeometry& g)
{
    const std::size_t out_ch = dy.channels();
    require(weight.size() == out_ch * in_channels * g.taps(), "conv2d_backward_data: weight size mismatch");
    require(g.out_h(in_h) == dy.height() && g.out_w(in_w) == dy.width(),
            "conv2d_backward_data: gradient shape does not match geometry");
    const std::size_t out_h = dy.height();
    const std::size_t out_w = dy.width();
    Tensor<T> dx(dy.batch(), in_channels, in_h, in_w);
    const auto taps = detail::make_taps(g, in_h, in_w, out_h, out_w);
    const std::size_t s = g.stride;

    parallel_for(dy.batch() * in_channels, [&](std::size_t job) {
        const std::size_t n = job / in_channels;
        const std::size_t i = job % in_channels;
        T* xp = dx.plane(n, i);
        for (std::size_t o = 0; o < out_ch; ++o) {
            const T* gp = dy.plane(n, o);
            const T* wp = weight.data() + (o * in_channels + i) * g.taps();
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
                const auto rows = taps.rows[ky];
                for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                    const auto cols = taps.cols[kx];
                    const T wv = wp[ky * g.kernel_w + kx];
                    const std::size_t count = cols.hi - cols.lo;
                    if (count == 0) {
                        continue;
                    }
                    for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
                        const auto iy = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(oy * s) + taps.row_offset[ky]);
                        const auto ix0 = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(cols.lo * s) + taps.col_offset[kx]);
                        T* dst = xp + iy * in_w + ix0;
                        const T* src = gp + oy * out_w + cols.lo;
                        if (s == 1) {
                            for (std::size_t k = 0; k < count; ++k) {
                                dst[k] += wv * src[k];
                            }
                        } else {
                            for (std::size_t k = 0; k < count; ++k) {
                                dst[k * s] += wv * src[k];
                            }
                        }
                    }
                }
            }
        }
    });
    return dx;
}

/// Accumulates dW += dL/dW and db += dL/db (db may be empty) for conv2d_forward.
template <typename T>
void conv2d_backward_weights(const Tensor<T>& x, const Tensor<T>& dy, std::span<T> dweight, std::span<T> dbias,
                             const ConvGeometry& g)
{
    const std::size_t in_ch = x.channels();
    const std::size_t out_ch = dy.channels();
    require(dweight.size() == out_ch * in_ch * g.taps(), "conv2d_backward_weights: weight size mismatch");
    require(g.out_h(x.height()) == dy.height() && g.out_w(x.width()) == dy.width(),
            "conv2d_backward_weights: shape mismatch");
    const std::size_t out_h = dy.height();
    const std::size_t out_w = dy.width();
    const std::size_t in_w = x.width();
    const auto taps = detail::make_taps(g, x.height(), x.width(), out_h, out_w);
    const std::size_t s = g.stride;

    parallel_for(out_ch, [&](std::size_t o) {
        std::vector<T> row(out_w);
        if (!dbias.empty()) {
            double total = 0.0;
            for (std::size_t n = 0; n < dy.batch(); ++n) {
                const T* gp = dy.plane(n, o);
                for (std::size_t p = 0; p < dy.plane_size(); ++p) {
                    total += static_cast<double>(gp[p]);
                }
            }
            dbias[o] += static_cast<T>(total);
        }
        for (std::size_t i = 0; i < in_ch; ++i) {
            T* wp = dweight.data() + (o * in_ch + i) * g.taps();
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
                const auto rows = taps.rows[ky];
                for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                    const auto cols = taps.cols[kx];
                    const std::size_t count = cols.hi - cols.lo;
                    if (count == 0 || rows.hi == rows.lo) {
                        continue;
                    }
                    std::fill_n(row.begin(), count, T{});
                    for (std::size_t n = 0; n < dy.batch(); ++n) {
                        const T* gp = dy.plane(n, o);
                        const T* xp = x.plane(n, i);
                        for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
                            const auto iy = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(oy * s) + taps.row_offset[ky]);
                            const auto ix0 = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(cols.lo * s) + taps.col_offset[kx]);
                            const T* src = xp + iy * in_w + ix0;
                            const T* gr = gp + oy * out_w + cols.lo;
                            if (s == 1) {
                                for (std::size_t k = 0; k < count; ++k) {
                                    row[k] += gr[k] * src[k];
                                }
                            } else {
                                for (std::size_t k = 0; k < count; ++k) {
                                    row[k] += gr[k] * src[k * s];
                                }
                            }
                        }
                    }
                    double total = 0.0;
                    for (std::size_t k = 0; k < count; ++k) {
                        total += static_cast<double>(row[k]);
                    }
                    wp[ky * g.kernel_w + kx] += static_cast<T>(total);
                }
            }
        }
    });
}

/// Max pooling with a 2x2 window and stride 2. Records the winning input index per output.
template <typename T>
Tensor<T> maxpool2x2_forward(const Tensor<T>& x, std::vector<std::uint32_t>* argmax)
{
    require(x.height() >= 2 && x.width() >= 2, "maxpool2x2 needs at least 2x2 input");
    const std::size_t oh = x.height() / 2;
    const std::size_t ow = x.width() / 2;
    Tensor<T> y(x.batch(), x.channels(), oh, ow);
    if (argmax != nullptr) {
        argmax->assign(y.size(), 0);
    }
    for (std::size_t n = 0; n < x.batch(); ++n) {
        for (std::size_t c = 0; c < x.channels(); ++c) {
            const T* xp = x.plane(n, c);
            T* yp = y.plane(n, c);
            const std::size_t base = (n * x.channels() + c) * oh * ow;
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    std::size_t best = (2 * oy) * x.width() + 2 * ox;
                    for (std::size_t dy = 0; dy < 2; ++dy) {
                        for (std::size_t dx = 0; dx < 2; ++dx) {
                            const std::size_t idx = (2 * oy + dy) * x.width() + 2 * ox + dx;
                            if (xp[idx] > xp[best]) {
                                best = idx;
                            }
                        }
                    }
                    yp[oy * ow + ox] = xp[best];
                    if (argmax != nullptr) {
                        (*argmax)[base + oy * ow + ox] = static_cast<std::uint32_t>(best);
                    }
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> maxpool2x2_backward(const Tensor<T>& dy, const std::vector<std::uint32_t>& argmax, Shape input_shape)
{
    require(argmax.size() == dy.size(), "maxpool2x2_backward: stale argmax");
    Tensor<T> dx(dy.batch(), input_shape);
    for (std::size_t n = 0; n < dy.batch(); ++n) {
        for (std::size_t c = 0; c < dy.channels(); ++c) {
            const T* gp = dy.plane(n, c);
            T* xp = dx.plane(n, c);
            const std::size_t base = (n * dy.channels() + c) * dy.plane_size();
            for (std::size_t p = 0; p < dy.plane_size(); ++p) {
                xp[argmax[base + p]] += gp[p];
            }
        }
    }
    return dx;
}

template <typename T>
void relu_inplace(Tensor<T>& x)
{
    for (auto& v : x.values()) {
        v = v > T{} ? v : T{};
    }
}

/// dx = dy where the ReLU output was positive.
template <typename T>
void relu_backward_inplace(Tensor<T>& grad, const Tensor<T>& output)
{
    auto g = grad.values();
    auto y = output.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(y[i] > T{})) {
            g[i] = T{};
        }
    }
}

/// Per-channel statistics collected by a training-mode normalization pass.
template <typename T>
struct NormStats {
    std::vector<double> mean;
    std::vector<double> var;      // biased
    std::vector<double> inv_std;
    bool batch_statistics = true;
};

inline constexpr double kNormEpsilon = 1e-5;

/// Per-channel normalization with learned scale/shift. Training mode uses the
/// batch statistics; evaluation mode uses the supplied running estimates.
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta,
                            std::span<const T> running_mean, std::span<const T> running_var, bool training,
                            NormStats<T>& stats)
{
    const std::size_t C = x.channels();
    require(gamma.size() == C && beta.size() == C, "batchnorm: parameter size mismatch");
    stats.mean.assign(C, 0.0);
    stats.var.assign(C, 0.0);
    stats.inv_std.assign(C, 0.0);
    stats.batch_statistics = training;
    const double count = static_cast<double>(x.batch() * x.plane_size());
    Tensor<T> y(x.batch(), x.shape());
    for (std::size_t c = 0; c < C; ++c) {
        double mean = 0.0;
        double var = 0.0;
        if (training) {
            for (std::size_t n = 0; n < x.batch(); ++n) {
                const T* xp = x.plane(n, c);
                for (std::size_t p = 0; p < x.plane_size(); ++p) {
                    mean += static_cast<double>(xp[p]);
                }
            }
            mean /= count;
            for (std::size_t n = 0; n < x.batch(); ++n) {
                const T* xp = x.plane(n, c);
                for (std::size_t p = 0; p < x.plane_size(); ++p) {
                    const double d = static_cast<double>(xp[p]) - mean;
                    var += d * d;
                }
            }
            var /= count;
        } else {
            mean = static_cast<double>(running_mean[c]);
            var = static_cast<double>(running_var[c]);
        }
        const double inv_std = 1.0 / std::sqrt(var + kNormEpsilon);
        stats.mean[c] = mean;
        stats.var[c] = var;
        stats.inv_std[c] = inv_std;
        const double scale = static_cast<double>(gamma[c]) * inv_std;
        const double shift = static_cast<double>(beta[c]) - mean * scale;
        for (std::size_t n = 0; n < x.batch(); ++n) {
            const T* xp = x.plane(n, c);
            T* yp = y.plane(n, c);
            for (std::size_t p = 0; p < x.plane_size(); ++p) {
                yp[p] = static_cast<T>(static_cast<double>(xp[p]) * scale + shift);
            }
        }
    }
    return y;
}

/// Returns dx and accumulates dgamma, dbeta.
template <typename T>
Tensor<T> batchnorm_backward(const Tensor<T>& dy, const Tensor<T>& x, std::span<const T> gamma,
                             const NormStats<T>& stats, std::span<T> dgamma, std::span<T> dbeta)
{
    const std::size_t C = x.channels();
    const double count = static_cast<double>(x.batch() * x.plane_size());
    Tensor<T> dx(x.batch(), x.shape());
    for (std::size_t c = 0; c < C; ++c) {
        const double mean = stats.mean[c];
        const double inv_std = stats.inv_std[c];
        double sum_dy = 0.0;
        double sum_dy_xhat = 0.0;
        for (std::size_t n = 0; n < x.batch(); ++n) {
            const T* xp = x.plane(n, c);
            const T* gp = dy.plane(n, c);
            for (std::size_t p = 0; p < x.plane_size(); ++p) {
                const double xhat = (static_cast<double>(xp[p]) - mean) * inv_std;
                sum_dy += static_cast<double>(gp[p]);
                sum_dy_xhat += static_cast<double>(gp[p]) * xhat;
            }
        }
        dgamma[c] += static_cast<T>(sum_dy_xhat);
        dbeta[c] += static_cast<T>(sum_dy);
        const double g = static_cast<double>(gamma[c]);
        for (std::size_t n = 0; n < x.batch(); ++n) {
            const T* xp = x.plane(n, c);
            const T* gp = dy.plane(n, c);
            T* dp = dx.plane(n, c);
            for (std::size_t p = 0; p < x.plane_size(); ++p) {
                if (stats.batch_statistics) {
                    const double xhat = (static_cast<double>(xp[p]) - mean) * inv_std;
                    dp[p] = static_cast<T>(g * inv_std / count *
                                           (count * static_cast<double>(gp[p]) - sum_dy - xhat * sum_dy_xhat));
                } else {
                    dp[p] = static_cast<T>(g * inv_std * static_cast<double>(gp[p]));
                }
            }
        }
    }
    return dx;
}

} // namespace phaseforge::nn
