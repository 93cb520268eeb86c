#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "../error.hpp"
#include "network.hpp"

namespace phaseforge::nn {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const
    {
        require(learning_rate > 0.0, "learning_rate must be positive");
        require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "Adam betas must lie in [0, 1)");
        require(epsilon > 0.0, "Adam epsilon must be positive");
    }
};

/// Adaptive-moment gradient descent with bias correction.
template <typename T>
class Adam {
public:
    Adam() = default;
    Adam(const Weights<T>& w, AdamConfig config) : config_(config)
    {
        config_.validate();
        for (const auto& p : w.params()) {
            first_.emplace_back(p.trainable ? p.size() : 0, 0.0);
            second_.emplace_back(p.trainable ? p.size() : 0, 0.0);
        }
    }

    void step(Weights<T>& w, const Gradients<T>& g)
    {
        require(g.values.size() == w.count() && first_.size() == w.count(), "optimizer state does not match weights");
        ++steps_;
        const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
        const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
        for (std::size_t i = 0; i < w.count(); ++i) {
            if (!w.param(i).trainable) {
                continue;
            }
            auto values = w.mutable_values(i);
            const auto& grad = g.values[i];
            auto& m = first_[i];
            auto& v = second_[i];
            for (std::size_t k = 0; k < values.size(); ++k) {
                const double gk = static_cast<double>(grad[k]);
                m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * gk;
                v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * gk * gk;
                const double update = config_.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.epsilon);
                values[k] = static_cast<T>(static_cast<double>(values[k]) - update);
            }
        }
    }

    std::uint64_t steps() const noexcept { return steps_; }
    const AdamConfig& config() const noexcept { return config_; }
    std::vector<std::vector<double>>& first_moments() noexcept { return first_; }
    std::vector<std::vector<double>>& second_moments() noexcept { return second_; }
    const std::vector<std::vector<double>>& first_moments() const noexcept { return first_; }
    const std::vector<std::vector<double>>& second_moments() const noexcept { return second_; }
    void set_steps(std::uint64_t steps) noexcept { steps_ = steps; }

private:
    AdamConfig config_;
    std::vector<std::vector<double>> first_;
    std::vector<std::vector<double>> second_;
    std::uint64_t steps_ = 0;
};

} // namespace phaseforge::nn
