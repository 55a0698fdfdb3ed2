#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "errors.hpp"
#include "tensor.hpp"

namespace siamhar {

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adaptive-moment optimizer with bias correction.
///
/// Moment buffers are created lazily on the first step and bound to the
/// parameter list by position; the list must not change between steps.
class Adam {
public:
    explicit Adam(AdamOptions options = {}) : options_(options) {
        if (!(options_.learning_rate > 0)) throw ContractError("Adam: learning rate must be positive");
    }

    const AdamOptions& options() const noexcept { return options_; }
    std::uint64_t step_count() const noexcept { return step_; }
    const std::vector<std::vector<double>>& first_moments() const noexcept { return m_; }
    const std::vector<std::vector<double>>& second_moments() const noexcept { return v_; }

    /// Applies one update using each parameter's accumulated gradient. A
    /// parameter without a gradient buffer is treated as having zero gradient.
    void step(ParameterList& params) {
        if (m_.empty()) {
            for (const auto& p : params) {
                m_.emplace_back(p.tensor.numel(), 0.0);
                v_.emplace_back(p.tensor.numel(), 0.0);
            }
        }
        if (m_.size() != params.size()) {
            throw ContractError("Adam: parameter list changed size between steps");
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (m_[i].size() != params[i].tensor.numel()) {
                throw DimensionError("Adam: accumulator shape mismatch for " + params[i].name);
            }
            if (params[i].tensor.has_grad()) {
                for (double g : params[i].tensor.grad()) {
                    if (!std::isfinite(g)) {
                        throw NonFiniteError("Adam: non-finite gradient in parameter '" + params[i].name + "'");
                    }
                }
            }
        }

        ++step_;
        const double t = static_cast<double>(step_);
        const double c1 = 1.0 - std::pow(options_.beta1, t);
        const double c2 = 1.0 - std::pow(options_.beta2, t);
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor& p = params[i].tensor;
            if (!p.has_grad()) continue;
            auto w = p.data();
            auto g = std::as_const(p).grad();
            auto& m = m_[i];
            auto& v = v_[i];
            for (std::size_t j = 0; j < w.size(); ++j) {
                m[j] = options_.beta1 * m[j] + (1.0 - options_.beta1) * g[j];
                v[j] = options_.beta2 * v[j] + (1.0 - options_.beta2) * g[j] * g[j];
                const double mhat = m[j] / c1;
                const double vhat = v[j] / c2;
                w[j] -= options_.learning_rate * mhat / (std::sqrt(vhat) + options_.epsilon);
            }
        }
    }

    static void zero_grad(ParameterList& params) {
        for (auto& p : params) p.tensor.zero_grad();
    }

private:
    AdamOptions options_;
    std::uint64_t step_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

}  // namespace siamhar
