#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "errors.hpp"
#include "tape.hpp"
#include "tensor.hpp"

// Differentiable primitives. Every op takes an optional tape; when the tape
// is non-null and an input requires gradients, the op records its backward
// rule. Outputs are checked for finiteness.

namespace siamhar::ops {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

inline MatrixMap as_matrix(std::span<double> s, std::size_t rows, std::size_t cols) {
    return MatrixMap(s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline ConstMatrixMap as_matrix(std::span<const double> s, std::size_t rows, std::size_t cols) {
    return ConstMatrixMap(s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

// ---------------------------------------------------------------------------
// Linear algebra

/// C = A·B for A [m×k], B [k×n].
inline Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " · " +
                             shape_str(b.shape()));
    }
    Tensor out(Shape{m, n});
    as_matrix(out.data(), m, n).noalias() = as_matrix(a.data(), m, k) * as_matrix(b.data(), k, n);
    const bool rec = detail::recording(tape, {&a, &b});
    return detail::finish(out, "matmul", tape, rec, [a, b, m, k, n](std::span<const double> g) mutable {
        auto dc = as_matrix(g, m, n);
        if (a.requires_grad()) {
            as_matrix(a.ensure_grad(), m, k).noalias() += dc * as_matrix(std::as_const(b).data(), k, n).transpose();
        }
        if (b.requires_grad()) {
            as_matrix(b.ensure_grad(), k, n).noalias() += as_matrix(std::as_const(a).data(), m, k).transpose() * dc;
        }
    });
}

/// y = x·Wᵀ + bias for x [B×in], W [out×in], bias [out] (may be omitted).
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias, Tape* tape = nullptr) {
    require_rank(x, 2, "linear");
    require_rank(weight, 2, "linear");
    const std::size_t batch = x.dim(0), in = x.dim(1), outw = weight.dim(0);
    if (weight.dim(1) != in) {
        throw DimensionError("linear: input width " + std::to_string(in) + " does not match weight " +
                             shape_str(weight.shape()));
    }
    if (bias && (bias->rank() != 1 || bias->dim(0) != outw)) {
        throw DimensionError("linear: bias shape " + shape_str(bias->shape()) + " for " +
                             std::to_string(outw) + " outputs");
    }
    Tensor out(Shape{batch, outw});
    auto y = as_matrix(out.data(), batch, outw);
    y.noalias() = as_matrix(x.data(), batch, in) * as_matrix(weight.data(), outw, in).transpose();
    if (bias) {
        y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias->data().data(), static_cast<Eigen::Index>(outw));
    }
    const bool rec = detail::recording(tape, {&x, &weight, bias});
    Tensor b = bias ? *bias : Tensor();
    const bool has_bias = bias != nullptr;
    return detail::finish(out, "linear", tape, rec,
                          [x, weight, b, has_bias, batch, in, outw](std::span<const double> g) mutable {
                              auto dy = as_matrix(g, batch, outw);
                              if (x.requires_grad()) {
                                  as_matrix(x.ensure_grad(), batch, in).noalias() +=
                                      dy * as_matrix(std::as_const(weight).data(), outw, in);
                              }
                              if (weight.requires_grad()) {
                                  as_matrix(weight.ensure_grad(), outw, in).noalias() +=
                                      dy.transpose() * as_matrix(std::as_const(x).data(), batch, in);
                              }
                              if (has_bias && b.requires_grad()) {
                                  Eigen::Map<Eigen::RowVectorXd>(b.ensure_grad().data(),
                                                                 static_cast<Eigen::Index>(outw)) +=
                                      dy.colwise().sum();
                              }
                          });
}

/// x + bias broadcast over every leading axis; bias length equals x's last extent.
inline Tensor add_bias(const Tensor& x, const Tensor& bias, Tape* tape = nullptr) {
    const std::size_t f = x.shape().back();
    if (bias.rank() != 1 || bias.dim(0) != f) {
        throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " vs input " + shape_str(x.shape()));
    }
    const std::size_t rows = x.numel() / f;
    Tensor out(x.shape());
    as_matrix(out.data(), rows, f) =
        as_matrix(x.data(), rows, f).rowwise() +
        Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), static_cast<Eigen::Index>(f));
    const bool rec = detail::recording(tape, {&x, &bias});
    return detail::finish(out, "add_bias", tape, rec, [x, bias, rows, f](std::span<const double> g) mutable {
        auto dy = as_matrix(g, rows, f);
        if (x.requires_grad()) as_matrix(x.ensure_grad(), rows, f) += dy;
        if (bias.requires_grad()) {
            Eigen::Map<Eigen::RowVectorXd>(bias.ensure_grad().data(), static_cast<Eigen::Index>(f)) +=
                dy.colwise().sum();
        }
    });
}

// ---------------------------------------------------------------------------
// Elementwise

enum class Unary { neg, sigmoid, tanh, relu, exp, abs };

inline const char* unary_name(Unary op) {
    switch (op) {
        case Unary::neg: return "neg";
        case Unary::sigmoid: return "sigmoid";
        case Unary::tanh: return "tanh";
        case Unary::relu: return "relu";
        case Unary::exp: return "exp";
        case Unary::abs: return "abs";
    }
    return "?";
}

inline double sigmoid_scalar(double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

inline Tensor unary(Unary op, const Tensor& x, Tape* tape = nullptr) {
    Tensor out(x.shape());
    auto xs = x.data();
    auto ys = out.data();
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double v = xs[i];
        switch (op) {
            case Unary::neg: ys[i] = -v; break;
            case Unary::sigmoid: ys[i] = sigmoid_scalar(v); break;
            case Unary::tanh: ys[i] = std::tanh(v); break;
            case Unary::relu: ys[i] = v > 0 ? v : 0.0; break;
            case Unary::exp: ys[i] = std::exp(v); break;
            case Unary::abs: ys[i] = std::abs(v); break;
        }
    }
    const bool rec = detail::recording(tape, {&x});
    return detail::finish(out, unary_name(op), tape, rec, [op, x, out](std::span<const double> g) mutable {
        auto dx = x.ensure_grad();
        auto xs = std::as_const(x).data();
        auto ys = std::as_const(out).data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            double d = 0.0;
            switch (op) {
                case Unary::neg: d = -1.0; break;
                case Unary::sigmoid: d = ys[i] * (1.0 - ys[i]); break;
                case Unary::tanh: d = 1.0 - ys[i] * ys[i]; break;
                case Unary::relu: d = xs[i] > 0 ? 1.0 : 0.0; break;
                case Unary::exp: d = ys[i]; break;
                case Unary::abs: d = xs[i] > 0 ? 1.0 : (xs[i] < 0 ? -1.0 : 0.0); break;
            }
            dx[i] += d * g[i];
        }
    });
}

inline Tensor neg(const Tensor& x, Tape* t = nullptr) { return unary(Unary::neg, x, t); }
inline Tensor sigmoid(const Tensor& x, Tape* t = nullptr) { return unary(Unary::sigmoid, x, t); }
inline Tensor tanh(const Tensor& x, Tape* t = nullptr) { return unary(Unary::tanh, x, t); }
inline Tensor relu(const Tensor& x, Tape* t = nullptr) { return unary(Unary::relu, x, t); }
inline Tensor exp(const Tensor& x, Tape* t = nullptr) { return unary(Unary::exp, x, t); }
inline Tensor abs(const Tensor& x, Tape* t = nullptr) { return unary(Unary::abs, x, t); }

enum class Binary { add, sub, mul };

inline Tensor binary(Binary op, const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
    const char* name = op == Binary::add ? "add" : op == Binary::sub ? "sub" : "mul";
    require_same_shape(a, b, name);
    Tensor out(a.shape());
    auto as = a.data();
    auto bs = b.data();
    auto ys = out.data();
    for (std::size_t i = 0; i < ys.size(); ++i) {
        switch (op) {
            case Binary::add: ys[i] = as[i] + bs[i]; break;
            case Binary::sub: ys[i] = as[i] - bs[i]; break;
            case Binary::mul: ys[i] = as[i] * bs[i]; break;
        }
    }
    const bool rec = detail::recording(tape, {&a, &b});
    return detail::finish(out, name, tape, rec, [op, a, b](std::span<const double> g) mutable {
        // a and b may alias (x*x): read both operands before accumulating.
        const bool ga = a.requires_grad(), gb = b.requires_grad();
        std::vector<double> da(ga ? g.size() : 0), db(gb ? g.size() : 0);
        auto as = std::as_const(a).data();
        auto bs = std::as_const(b).data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            switch (op) {
                case Binary::add:
                    if (ga) da[i] = g[i];
                    if (gb) db[i] = g[i];
                    break;
                case Binary::sub:
                    if (ga) da[i] = g[i];
                    if (gb) db[i] = -g[i];
                    break;
                case Binary::mul:
                    if (ga) da[i] = g[i] * bs[i];
                    if (gb) db[i] = g[i] * as[i];
                    break;
            }
        }
        if (ga) {
            auto dst = a.ensure_grad();
            for (std::size_t i = 0; i < da.size(); ++i) dst[i] += da[i];
        }
        if (gb) {
            auto dst = b.ensure_grad();
            for (std::size_t i = 0; i < db.size(); ++i) dst[i] += db[i];
        }
    });
}

inline Tensor add(const Tensor& a, const Tensor& b, Tape* t = nullptr) { return binary(Binary::add, a, b, t); }
inline Tensor sub(const Tensor& a, const Tensor& b, Tape* t = nullptr) { return binary(Binary::sub, a, b, t); }
inline Tensor mul(const Tensor& a, const Tensor& b, Tape* t = nullptr) { return binary(Binary::mul, a, b, t); }

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& x, Tape* tape = nullptr) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    Tensor out(Shape{1}, s);
    const bool rec = detail::recording(tape, {&x});
    return detail::finish(out, "sum", tape, rec, [x](std::span<const double> g) mutable {
        for (double& d : x.ensure_grad()) d += g[0];
    });
}

inline Tensor mean(const Tensor& x, Tape* tape = nullptr) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    const double n = static_cast<double>(x.numel());
    Tensor out(Shape{1}, s / n);
    const bool rec = detail::recording(tape, {&x});
    return detail::finish(out, "mean", tape, rec, [x, n](std::span<const double> g) mutable {
        for (double& d : x.ensure_grad()) d += g[0] / n;
    });
}

/// Sum over the last axis: [..., F] -> [...]; a rank-1 input reduces to [1].
inline Tensor sum_last(const Tensor& x, Tape* tape = nullptr) {
    const std::size_t f = x.shape().back();
    const std::size_t rows = x.numel() / f;
    Shape shape(x.shape().begin(), x.shape().end() - 1);
    if (shape.empty()) shape = {1};
    Tensor out(shape);
    as_matrix(out.data(), rows, 1) = as_matrix(x.data(), rows, f).rowwise().sum();
    const bool rec = detail::recording(tape, {&x});
    return detail::finish(out, "sum_last", tape, rec, [x, rows, f](std::span<const double> g) mutable {
        as_matrix(x.ensure_grad(), rows, f).colwise() += as_matrix(g, rows, 1).col(0);
    });
}

// ---------------------------------------------------------------------------
// Structural

inline Tensor reshape(const Tensor& x, Shape shape, Tape* tape = nullptr) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    }
    Tensor out(std::move(shape));
    std::copy(x.data().begin(), x.data().end(), out.data().begin());
    const bool rec = detail::recording(tape, {&x});
    return detail::finish(out, "reshape", tape, rec, [x](std::span<const double> g) mutable {
        auto dx = x.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    });
}

/// [B×M×N] -> [B×N×M].
inline Tensor swap_last2(const Tensor& x, Tape* tape = nullptr) {
    require_rank(x, 3, "swap_last2");
    const std::size_t b = x.dim(0), m = x.dim(1), n = x.dim(2);
    Tensor out(Shape{b, n, m});
    for (std::size_t i = 0; i < b; ++i) {
        as_matrix(out.data().subspan(i * m * n, m * n), n, m) =
            as_matrix(x.data().subspan(i * m * n, m * n), m, n).transpose();
    }
    const bool rec = detail::recording(tape, {&x});
    return detail::finish(out, "swap_last2", tape, rec, [x, b, m, n](std::span<const double> g) mutable {
        auto dx = x.ensure_grad();
        for (std::size_t i = 0; i < b; ++i) {
            as_matrix(dx.subspan(i * m * n, m * n), m, n) += as_matrix(g.subspan(i * m * n, m * n), n, m).transpose();
        }
    });
}

/// Reverses axis 1 of [B×T×F].
inline Tensor reverse_time(const Tensor& x, Tape* tape = nullptr) {
    require_rank(x, 3, "reverse_time");
    const std::size_t b = x.dim(0), t = x.dim(1), f = x.dim(2);
    Tensor out(x.shape());
    auto src = x.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t s = 0; s < t; ++s) {
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>((i * t + s) * f), f,
                        dst.begin() + static_cast<std::ptrdiff_t>((i * t + (t - 1 - s)) * f));
        }
    }
    const bool rec = detail::recording(tape, {&x});
    return detail::finish(out, "reverse_time", tape, rec, [x, b, t, f](std::span<const double> g) mutable {
        auto dx = x.ensure_grad();
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t s = 0; s < t; ++s) {
                for (std::size_t k = 0; k < f; ++k) dx[(i * t + s) * f + k] += g[(i * t + (t - 1 - s)) * f + k];
            }
        }
    });
}

/// Concatenates along the last axis; leading extents must agree.
inline Tensor concat_last(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
    if (a.rank() != b.rank() || !std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin())) {
        throw DimensionError("concat_last: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    const std::size_t fa = a.shape().back(), fb = b.shape().back();
    const std::size_t rows = a.numel() / fa;
    Shape shape = a.shape();
    shape.back() = fa + fb;
    Tensor out(shape);
    auto y = as_matrix(out.data(), rows, fa + fb);
    y.leftCols(static_cast<Eigen::Index>(fa)) = as_matrix(a.data(), rows, fa);
    y.rightCols(static_cast<Eigen::Index>(fb)) = as_matrix(b.data(), rows, fb);
    const bool rec = detail::recording(tape, {&a, &b});
    return detail::finish(out, "concat_last", tape, rec, [a, b, rows, fa, fb](std::span<const double> g) mutable {
        auto dy = as_matrix(g, rows, fa + fb);
        if (a.requires_grad()) as_matrix(a.ensure_grad(), rows, fa) += dy.leftCols(static_cast<Eigen::Index>(fa));
        if (b.requires_grad()) as_matrix(b.ensure_grad(), rows, fb) += dy.rightCols(static_cast<Eigen::Index>(fb));
    });
}

/// Selects timestep t of [B×T×F] -> [B×F].
inline Tensor take_timestep(const Tensor& x, std::size_t step, Tape* tape = nullptr) {
    require_rank(x, 3, "take_timestep");
    const std::size_t b = x.dim(0), t = x.dim(1), f = x.dim(2);
    if (step >= t) throw DimensionError("take_timestep: step out of range");
    Tensor out(Shape{b, f});
    for (std::size_t i = 0; i < b; ++i) {
        std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>((i * t + step) * f), f,
                    out.data().begin() + static_cast<std::ptrdiff_t>(i * f));
    }
    const bool rec = detail::recording(tape, {&x});
    return detail::finish(out, "take_timestep", tape, rec, [x, b, t, f, step](std::span<const double> g) mutable {
        auto dx = x.ensure_grad();
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t k = 0; k < f; ++k) dx[(i * t + step) * f + k] += g[i * f + k];
        }
    });
}

/// Temporal mean of [B×T×F] -> [B×F].
inline Tensor mean_time(const Tensor& x, Tape* tape = nullptr) {
    require_rank(x, 3, "mean_time");
    const std::size_t b = x.dim(0), t = x.dim(1), f = x.dim(2);
    Tensor out(Shape{b, f});
    for (std::size_t i = 0; i < b; ++i) {
        as_matrix(out.data().subspan(i * f, f), 1, f) =
            as_matrix(x.data().subspan(i * t * f, t * f), t, f).colwise().sum() / static_cast<double>(t);
    }
    const bool rec = detail::recording(tape, {&x});
    return detail::finish(out, "mean_time", tape, rec, [x, b, t, f](std::span<const double> g) mutable {
        auto dx = x.ensure_grad();
        for (std::size_t i = 0; i < b; ++i) {
            as_matrix(dx.subspan(i * t * f, t * f), t, f).rowwise() +=
                as_matrix(g.subspan(i * f, f), 1, f).row(0) / static_cast<double>(t);
        }
    });
}

/// Rows [begin, end) of axis 0.
inline Tensor slice_batch(const Tensor& x, std::size_t begin, std::size_t end, Tape* tape = nullptr) {
    if (begin >= end || end > x.dim(0)) throw DimensionError("slice_batch: bad range");
    const std::size_t row = x.numel() / x.dim(0);
    Shape shape = x.shape();
    shape[0] = end - begin;
    Tensor out(shape);
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(begin * row), (end - begin) * row, out.data().begin());
    const bool rec = detail::recording(tape, {&x});
    return detail::finish(out, "slice_batch", tape, rec, [x, begin, row](std::span<const double> g) mutable {
        auto dx = x.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) dx[begin * row + i] += g[i];
    });
}

/// Stacks along axis 0; trailing extents must agree.
inline Tensor concat_batch(const std::vector<Tensor>& parts, Tape* tape = nullptr) {
    if (parts.empty()) throw DimensionError("concat_batch: no inputs");
    Shape shape = parts.front().shape();
    std::size_t total = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
        if (p.rank() != shape.size() || !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1)) {
            throw DimensionError("concat_batch: " + shape_str(shape) + " vs " + shape_str(p.shape()));
        }
        total += p.dim(0);
        any_grad = any_grad || p.requires_grad();
    }
    shape[0] = total;
    Tensor out(shape);
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.data().begin(), p.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
        off += p.numel();
    }
    const bool rec = tape != nullptr && any_grad;
    return detail::finish(out, "concat_batch", tape, rec, [parts](std::span<const double> g) mutable {
        std::size_t off = 0;
        for (auto& p : parts) {
            if (p.requires_grad()) {
                auto dp = p.ensure_grad();
                for (std::size_t i = 0; i < dp.size(); ++i) dp[i] += g[off + i];
            }
            off += p.numel();
        }
    });
}

/// Mean squared error between predictions and fixed targets of equal shape.
inline Tensor mse(const Tensor& pred, const Tensor& target, Tape* tape = nullptr) {
    Tensor diff = sub(pred, target, tape);
    return mean(mul(diff, diff, tape), tape);
}

}  // namespace siamhar::ops
