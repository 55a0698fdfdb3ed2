#pragma once

// Shared test helpers: random tensors and a central finite-difference
// gradient checker.

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "siamhar/ops.hpp"
#include "siamhar/tape.hpp"
#include "siamhar/tensor.hpp"

namespace siamhar::test {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0,
                            bool requires_grad = false) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t(std::move(shape), 0.0, requires_grad);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

/// sum(out ⊙ weights): a scalar loss that exercises every output element
/// with a distinct sensitivity.
inline Tensor probe_loss(const Tensor& out, const Tensor& weights, Tape* tape) {
    return ops::sum(ops::mul(out, weights, tape), tape);
}

struct GradCheckResult {
    double worst_relative_error = 0.0;
    std::string worst_tensor;
};

/// Compares tape gradients of `loss_fn` with respect to each tensor in `wrt`
/// against central differences. The error per tensor is
/// ||analytic - numeric|| / max(||analytic|| + ||numeric||, 1e-7).
inline GradCheckResult check_gradients(const std::function<Tensor(Tape*)>& loss_fn, std::vector<Tensor> wrt,
                                       double step = 1e-5) {
    for (auto& t : wrt) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    {
        Tape tape;
        Tensor loss = loss_fn(&tape);
        tape.backward(loss);
    }
    GradCheckResult result;
    for (std::size_t w = 0; w < wrt.size(); ++w) {
        Tensor& t = wrt[w];
        std::vector<double> analytic(t.numel(), 0.0);
        if (t.has_grad()) analytic.assign(t.grad().begin(), t.grad().end());
        double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
        for (std::size_t i = 0; i < t.numel(); ++i) {
            const double orig = t[i];
            t[i] = orig + step;
            const double up = loss_fn(nullptr).item();
            t[i] = orig - step;
            const double down = loss_fn(nullptr).item();
            t[i] = orig;
            const double numeric = (up - down) / (2.0 * step);
            diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
            a2 += analytic[i] * analytic[i];
            n2 += numeric * numeric;
        }
        const double err = std::sqrt(diff2) / std::max(std::sqrt(a2) + std::sqrt(n2), 1e-7);
        if (err >= result.worst_relative_error) {
            result.worst_relative_error = err;
            result.worst_tensor = "#" + std::to_string(w);
        }
    }
    return result;
}

}  // namespace siamhar::test
