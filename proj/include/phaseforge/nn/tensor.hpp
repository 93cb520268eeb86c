#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <span>
#include <string>
#include <vector>

#include "../error.hpp"

namespace phaseforge::nn {

/// (channels, height, width) of one sample.
struct Shape {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t elements() const noexcept { return channels * height * width; }
    bool operator==(const Shape&) const = default;

    std::string str() const
    {
        return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
    }
};

/// Batch of NCHW activations, row-major within each channel plane.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t batch, Shape shape, T fill = T{})
        : batch_(batch), shape_(shape), data_(batch * shape.elements(), fill)
    {
    }
    Tensor(std::size_t batch, std::size_t channels, std::size_t height, std::size_t width, T fill = T{})
        : Tensor(batch, Shape{channels, height, width}, fill)
    {
    }

    std::size_t batch() const noexcept { return batch_; }
    const Shape& shape() const noexcept { return shape_; }
    std::size_t channels() const noexcept { return shape_.channels; }
    std::size_t height() const noexcept { return shape_.height; }
    std::size_t width() const noexcept { return shape_.width; }
    std::size_t plane_size() const noexcept { return shape_.height * shape_.width; }
    std::size_t size() const noexcept { return data_.size(); }

    T* plane(std::size_t n, std::size_t c) noexcept { return data_.data() + (n * shape_.channels + c) * plane_size(); }
    const T* plane(std::size_t n, std::size_t c) const noexcept
    {
        return data_.data() + (n * shape_.channels + c) * plane_size();
    }

    T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) noexcept
    {
        return plane(n, c)[y * shape_.width + x];
    }
    const T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept
    {
        return plane(n, c)[y * shape_.width + x];
    }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }

    bool all_finite() const
    {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    bool operator==(const Tensor&) const = default;

private:
    std::size_t batch_ = 0;
    Shape shape_;
    std::vector<T> data_;
};

/// Concatenates along channels: [a | b].
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b)
{
    require(a.batch() == b.batch() && a.height() == b.height() && a.width() == b.width(),
            "concat_channels: mismatched tensors");
    Tensor<T> out(a.batch(), a.channels() + b.channels(), a.height(), a.width());
    const std::size_t plane = a.plane_size();
    for (std::size_t n = 0; n < a.batch(); ++n) {
        std::copy_n(a.plane(n, 0), plane * a.channels(), out.plane(n, 0));
        std::copy_n(b.plane(n, 0), plane * b.channels(), out.plane(n, a.channels()));
    }
    return out;
}

/// Channel range [first, first + count) as a new tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t first, std::size_t count)
{
    require(first + count <= x.channels(), "slice_channels: out of range");
    Tensor<T> out(x.batch(), count, x.height(), x.width());
    for (std::size_t n = 0; n < x.batch(); ++n) {
        std::copy_n(x.plane(n, first), x.plane_size() * count, out.plane(n, 0));
    }
    return out;
}

template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src)
{
    require(dst.size() == src.size(), "add_inplace: size mismatch");
    auto d = dst.values();
    auto s = src.values();
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] += s[i];
    }
}

/// Reflect-pads height and width up to the next multiple (bottom/right side).
template <typename T>
Tensor<T> pad_to_multiple(const Tensor<T>& x, std::size_t multiple)
{
    require(multiple >= 1, "pad multiple must be positive");
    const std::size_t h = (x.height() + multiple - 1) / multiple * multiple;
    const std::size_t w = (x.width() + multiple - 1) / multiple * multiple;
    if (h == x.height() && w == x.width()) {
        return x;
    }
    auto reflect = [](std::size_t i, std::size_t n) {
        if (n == 1) {
            return std::size_t{0};
        }
        const std::size_t period = 2 * (n - 1);
        std::size_t m = i % period;
        return m < n ? m : period - m;
    };
    Tensor<T> out(x.batch(), x.channels(), h, w);
    for (std::size_t n = 0; n < x.batch(); ++n) {
        for (std::size_t c = 0; c < x.channels(); ++c) {
            for (std::size_t y = 0; y < h; ++y) {
                const std::size_t sy = reflect(y, x.height());
                for (std::size_t xx = 0; xx < w; ++xx) {
                    out.at(n, c, y, xx) = x.at(n, c, sy, reflect(xx, x.width()));
                }
            }
        }
    }
    return out;
}

/// Top-left crop to height x width.
template <typename T>
Tensor<T> crop(const Tensor<T>& x, std::size_t height, std::size_t width)
{
    require(height <= x.height() && width <= x.width(), "crop larger than tensor");
    if (height == x.height() && width == x.width()) {
        return x;
    }
    Tensor<T> out(x.batch(), x.channels(), height, width);
    for (std::size_t n = 0; n < x.batch(); ++n) {
        for (std::size_t c = 0; c < x.channels(); ++c) {
            for (std::size_t y = 0; y < height; ++y) {
                std::copy_n(x.plane(n, c) + y * x.width(), width, out.plane(n, c) + y * width);
            }
        }
    }
    return out;
}

} // namespace phaseforge::nn
