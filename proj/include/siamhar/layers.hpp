#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "ops.hpp"
#include "tape.hpp"
#include "tensor.hpp"

namespace siamhar {

/// Batch normalization uses batch statistics in train mode and running
/// statistics in inference mode.
enum class Mode { train, inference };

using Rng = std::mt19937_64;

namespace init {

inline Tensor uniform(Shape shape, double limit, Rng& rng) {
    std::uniform_real_distribution<double> dist(-limit, limit);
    Tensor t(std::move(shape), 0.0, true);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

inline double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace init

// ---------------------------------------------------------------------------
// Dilated temporal convolution

struct DilatedConvParams {
    Tensor kernels;  // [out_channels × in_channels × kernel_width]
    Tensor bias;     // [out_channels]
    std::size_t dilation = 1;
    std::size_t stride = 1;

    std::size_t out_channels() const { return kernels.dim(0); }
    std::size_t in_channels() const { return kernels.dim(1); }
    std::size_t kernel_width() const { return kernels.dim(2); }
    std::size_t receptive_width() const { return (kernel_width() - 1) * dilation + 1; }

    static DilatedConvParams make(std::size_t in, std::size_t out, std::size_t width, std::size_t dilation, Rng& rng) {
        DilatedConvParams p;
        p.kernels = init::uniform({out, in, width}, init::glorot_limit(in * width, out * width), rng);
        p.bias = Tensor(Shape{out}, 0.0, true);
        p.dilation = dilation;
        return p;
    }
};

/// Output length of a valid (unpadded) dilated convolution; 0 when the
/// receptive field does not fit.
inline std::size_t conv_output_length(std::size_t length, std::size_t receptive, std::size_t stride) {
    if (length < receptive) return 0;
    return (length - receptive) / stride + 1;
}

inline Tensor conv1d_dilated(const Tensor& input, const DilatedConvParams& p, Tape* tape = nullptr) {
    require_rank(input, 3, "conv1d_dilated");
    require_rank(p.kernels, 3, "conv1d_dilated kernels");
    if (p.dilation == 0 || p.stride == 0) throw ContractError("conv1d_dilated: dilation and stride must be positive");
    const std::size_t batch = input.dim(0), chans = input.dim(1), len = input.dim(2);
    const std::size_t outc = p.out_channels(), width = p.kernel_width();
    if (p.in_channels() != chans) {
        throw DimensionError("conv1d_dilated: input has " + std::to_string(chans) + " channels, kernels expect " +
                             std::to_string(p.in_channels()));
    }
    if (p.bias.rank() != 1 || p.bias.dim(0) != outc) throw DimensionError("conv1d_dilated: bias shape");
    const std::size_t olen = conv_output_length(len, p.receptive_width(), p.stride);
    if (olen == 0) throw SequenceTooShortError(p.receptive_width(), len, "conv1d_dilated");

    const std::size_t ck = chans * width, cols = batch * olen;
    auto col = std::make_shared<ops::RowMatrix>(ck, cols);
    auto x = input.data();
    for (std::size_t c = 0; c < chans; ++c) {
        for (std::size_t k = 0; k < width; ++k) {
            double* row = col->row(static_cast<Eigen::Index>(c * width + k)).data();
            for (std::size_t b = 0; b < batch; ++b) {
                const double* src = x.data() + (b * chans + c) * len + k * p.dilation;
                for (std::size_t t = 0; t < olen; ++t) row[b * olen + t] = src[t * p.stride];
            }
        }
    }
    ops::RowMatrix y = ops::as_matrix(p.kernels.data(), outc, ck) * (*col);
    y.colwise() += Eigen::Map<const Eigen::VectorXd>(p.bias.data().data(), static_cast<Eigen::Index>(outc));

    Tensor out(Shape{batch, outc, olen});
    auto o = out.data();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t oc = 0; oc < outc; ++oc) {
            const double* src = y.row(static_cast<Eigen::Index>(oc)).data() + b * olen;
            std::copy_n(src, olen, o.data() + (b * outc + oc) * olen);
        }
    }

    const bool rec = detail::recording(tape, {&input, &p.kernels, &p.bias});
    Tensor in = input, kern = p.kernels, bias = p.bias;
    const std::size_t dil = p.dilation, stride = p.stride;
    return detail::finish(out, "conv1d_dilated", tape, rec,
                          [in, kern, bias, col, batch, chans, len, outc, width, olen, ck, cols, dil,
                           stride](std::span<const double> g) mutable {
                              ops::RowMatrix dy(outc, cols);
                              for (std::size_t b = 0; b < batch; ++b) {
                                  for (std::size_t oc = 0; oc < outc; ++oc) {
                                      std::copy_n(g.data() + (b * outc + oc) * olen, olen,
                                                  dy.row(static_cast<Eigen::Index>(oc)).data() + b * olen);
                                  }
                              }
                              if (kern.requires_grad()) {
                                  ops::as_matrix(kern.ensure_grad(), outc, ck).noalias() += dy * col->transpose();
                              }
                              if (bias.requires_grad()) {
                                  Eigen::Map<Eigen::VectorXd>(bias.ensure_grad().data(),
                                                              static_cast<Eigen::Index>(outc)) += dy.rowwise().sum();
                              }
                              if (in.requires_grad()) {
                                  ops::RowMatrix dcol = ops::as_matrix(std::as_const(kern).data(), outc, ck).transpose() * dy;
                                  auto dx = in.ensure_grad();
                                  for (std::size_t c = 0; c < chans; ++c) {
                                      for (std::size_t k = 0; k < width; ++k) {
                                          const double* row = dcol.row(static_cast<Eigen::Index>(c * width + k)).data();
                                          for (std::size_t b = 0; b < batch; ++b) {
                                              double* dst = dx.data() + (b * chans + c) * len + k * dil;
                                              for (std::size_t t = 0; t < olen; ++t) dst[t * stride] += row[b * olen + t];
                                          }
                                      }
                                  }
                              }
                          });
}

// ---------------------------------------------------------------------------
// Temporal max pooling (non-overlapping windows, remainder dropped)

inline Tensor max_pool1d(const Tensor& input, std::size_t pool, Tape* tape = nullptr) {
    require_rank(input, 3, "max_pool1d");
    if (pool == 0) throw ContractError("max_pool1d: pool size must be positive");
    const std::size_t batch = input.dim(0), chans = input.dim(1), len = input.dim(2);
    if (len < pool) throw SequenceTooShortError(pool, len, "max_pool1d");
    const std::size_t olen = len / pool;
    Tensor out(Shape{batch, chans, olen});
    auto argmax = std::make_shared<std::vector<std::size_t>>(batch * chans * olen);
    auto x = input.data();
    auto y = out.data();
    for (std::size_t r = 0; r < batch * chans; ++r) {
        for (std::size_t j = 0; j < olen; ++j) {
            std::size_t best = r * len + j * pool;
            for (std::size_t k = 1; k < pool; ++k) {
                if (x[r * len + j * pool + k] > x[best]) best = r * len + j * pool + k;
            }
            y[r * olen + j] = x[best];
            (*argmax)[r * olen + j] = best;
        }
    }
    const bool rec = detail::recording(tape, {&input});
    Tensor in = input;
    return detail::finish(out, "max_pool1d", tape, rec, [in, argmax](std::span<const double> g) mutable {
        auto dx = in.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) dx[(*argmax)[i]] += g[i];
    });
}

// ---------------------------------------------------------------------------
// Batch normalization over axis 1 of [B×C] or [B×C×T]

struct BatchNormParams {
    Tensor gamma;
    Tensor beta;
    Tensor running_mean;
    Tensor running_var;
    double momentum = 0.99;
    double epsilon = 1e-5;

    std::size_t channels() const { return gamma.dim(0); }

    static BatchNormParams make(std::size_t channels) {
        BatchNormParams p;
        p.gamma = Tensor(Shape{channels}, 1.0, true);
        p.beta = Tensor(Shape{channels}, 0.0, true);
        p.running_mean = Tensor(Shape{channels}, 0.0);
        p.running_var = Tensor(Shape{channels}, 1.0);
        return p;
    }
};

inline Tensor batch_norm(const Tensor& input, BatchNormParams& p, Mode mode, Tape* tape = nullptr) {
    if (input.rank() != 2 && input.rank() != 3) {
        throw DimensionError("batch_norm: expected [B×C] or [B×C×T], got " + shape_str(input.shape()));
    }
    const std::size_t batch = input.dim(0), chans = input.dim(1);
    const std::size_t len = input.rank() == 3 ? input.dim(2) : 1;
    if (chans != p.channels()) {
        throw DimensionError("batch_norm: input has " + std::to_string(chans) + " channels, params have " +
                             std::to_string(p.channels()));
    }
    if (mode == Mode::train && batch < 2) {
        throw ContractError("batch_norm: train mode needs a batch of at least 2, got " + std::to_string(batch));
    }
    const double n = static_cast<double>(batch * len);
    auto x = input.data();
    auto gamma = p.gamma.data();
    auto beta = p.beta.data();

    auto inv_std = std::make_shared<std::vector<double>>(chans);
    auto xhat = std::make_shared<std::vector<double>>(input.numel());
    for (std::size_t c = 0; c < chans; ++c) {
        double mu = 0.0, var = 0.0;
        if (mode == Mode::train) {
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t t = 0; t < len; ++t) mu += x[(b * chans + c) * len + t];
            }
            mu /= n;
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t t = 0; t < len; ++t) {
                    const double d = x[(b * chans + c) * len + t] - mu;
                    var += d * d;
                }
            }
            var /= n;
            p.running_mean[c] = p.momentum * p.running_mean[c] + (1.0 - p.momentum) * mu;
            p.running_var[c] = p.momentum * p.running_var[c] + (1.0 - p.momentum) * var * n / (n - 1.0);
        } else {
            mu = p.running_mean[c];
            var = p.running_var[c];
        }
        (*inv_std)[c] = 1.0 / std::sqrt(var + p.epsilon);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t t = 0; t < len; ++t) {
                const std::size_t i = (b * chans + c) * len + t;
                (*xhat)[i] = (x[i] - mu) * (*inv_std)[c];
            }
        }
    }
    Tensor out(input.shape());
    auto y = out.data();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < chans; ++c) {
            for (std::size_t t = 0; t < len; ++t) {
                const std::size_t i = (b * chans + c) * len + t;
                y[i] = gamma[c] * (*xhat)[i] + beta[c];
            }
        }
    }

    const bool rec = detail::recording(tape, {&input, &p.gamma, &p.beta});
    Tensor in = input, g_t = p.gamma, b_t = p.beta;
    return detail::finish(out, "batch_norm", tape, rec,
                          [in, g_t, b_t, inv_std, xhat, batch, chans, len, n, mode](std::span<const double> g) mutable {
                              auto gamma = std::as_const(g_t).data();
                              std::vector<double> sum_dy(chans, 0.0), sum_dy_xhat(chans, 0.0);
                              for (std::size_t b = 0; b < batch; ++b) {
                                  for (std::size_t c = 0; c < chans; ++c) {
                                      for (std::size_t t = 0; t < len; ++t) {
                                          const std::size_t i = (b * chans + c) * len + t;
                                          sum_dy[c] += g[i];
                                          sum_dy_xhat[c] += g[i] * (*xhat)[i];
                                      }
                                  }
                              }
                              if (g_t.requires_grad()) {
                                  auto dg = g_t.ensure_grad();
                                  for (std::size_t c = 0; c < chans; ++c) dg[c] += sum_dy_xhat[c];
                              }
                              if (b_t.requires_grad()) {
                                  auto db = b_t.ensure_grad();
                                  for (std::size_t c = 0; c < chans; ++c) db[c] += sum_dy[c];
                              }
                              if (!in.requires_grad()) return;
                              auto dx = in.ensure_grad();
                              for (std::size_t b = 0; b < batch; ++b) {
                                  for (std::size_t c = 0; c < chans; ++c) {
                                      const double scale = gamma[c] * (*inv_std)[c];
                                      for (std::size_t t = 0; t < len; ++t) {
                                          const std::size_t i = (b * chans + c) * len + t;
                                          if (mode == Mode::train) {
                                              dx[i] += scale / n * (n * g[i] - sum_dy[c] - (*xhat)[i] * sum_dy_xhat[c]);
                                          } else {
                                              dx[i] += scale * g[i];
                                          }
                                      }
                                  }
                              }
                          });
}

// ---------------------------------------------------------------------------
// LSTM

/// Gate weights of one LSTM cell. Gate order everywhere is input, forget,
/// candidate, output.
struct LSTMCellParams {
    Tensor W_i, W_f, W_c, W_o;  // [hidden × input]
    Tensor U_i, U_f, U_c, U_o;  // [hidden × hidden]
    Tensor b_i, b_f, b_c, b_o;  // [hidden]

    std::size_t hidden() const { return W_i.dim(0); }
    std::size_t input() const { return W_i.dim(1); }

    void validate() const {
        const std::size_t h = hidden(), in = input();
        for (const Tensor* w : {&W_i, &W_f, &W_c, &W_o}) {
            if (w->shape() != Shape{h, in}) throw DimensionError("LSTMCellParams: W blocks disagree");
        }
        for (const Tensor* u : {&U_i, &U_f, &U_c, &U_o}) {
            if (u->shape() != Shape{h, h}) throw DimensionError("LSTMCellParams: U blocks disagree");
        }
        for (const Tensor* b : {&b_i, &b_f, &b_c, &b_o}) {
            if (b->shape() != Shape{h}) throw DimensionError("LSTMCellParams: bias blocks disagree");
        }
    }

    std::vector<Tensor*> all() { return {&W_i, &W_f, &W_c, &W_o, &U_i, &U_f, &U_c, &U_o, &b_i, &b_f, &b_c, &b_o}; }

    void append_parameters(ParameterList& out, const std::string& prefix) {
        static const char* names[] = {"W_i", "W_f", "W_c", "W_o", "U_i", "U_f", "U_c", "U_o", "b_i", "b_f", "b_c", "b_o"};
        auto ts = all();
        for (std::size_t i = 0; i < ts.size(); ++i) out.push_back({prefix + names[i], *ts[i]});
    }

    static LSTMCellParams zeros(std::size_t input, std::size_t hidden) {
        LSTMCellParams p;
        for (Tensor* w : {&p.W_i, &p.W_f, &p.W_c, &p.W_o}) *w = Tensor(Shape{hidden, input}, 0.0, true);
        for (Tensor* u : {&p.U_i, &p.U_f, &p.U_c, &p.U_o}) *u = Tensor(Shape{hidden, hidden}, 0.0, true);
        for (Tensor* b : {&p.b_i, &p.b_f, &p.b_c, &p.b_o}) *b = Tensor(Shape{hidden}, 0.0, true);
        return p;
    }

    /// Uniform ±sqrt(1/hidden) weights; forget-gate bias starts at 1.
    static LSTMCellParams make(std::size_t input, std::size_t hidden, Rng& rng) {
        LSTMCellParams p = zeros(input, hidden);
        const double limit = std::sqrt(1.0 / static_cast<double>(hidden));
        for (Tensor* w : {&p.W_i, &p.W_f, &p.W_c, &p.W_o}) *w = init::uniform({hidden, input}, limit, rng);
        for (Tensor* u : {&p.U_i, &p.U_f, &p.U_c, &p.U_o}) *u = init::uniform({hidden, hidden}, limit, rng);
        for (double& v : p.b_f.data()) v = 1.0;
        return p;
    }
};

struct LSTMState {
    Tensor h;
    Tensor c;
};

/// One LSTM step on x_t [B×in] with state [B×hidden], composed from
/// primitive ops:
///   i = σ(W_i x + U_i h + b_i), f = σ(W_f x + U_f h + b_f),
///   c̃ = tanh(W_c x + U_c h + b_c), c = f∘c_prev + i∘c̃,
///   o = σ(W_o x + U_o h + b_o), h = o∘tanh(c).
inline LSTMState lstm_step(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev, const LSTMCellParams& p,
                           Tape* tape = nullptr) {
    p.validate();
    require_rank(x, 2, "lstm_step");
    if (x.dim(1) != p.input()) throw DimensionError("lstm_step: input width mismatch");
    const Shape state{x.dim(0), p.hidden()};
    if (h_prev.shape() != state || c_prev.shape() != state) {
        throw DimensionError("lstm_step: state shape must be " + shape_str(state));
    }
    auto gate = [&](const Tensor& W, const Tensor& U, const Tensor& b) {
        return ops::add(ops::linear(x, W, &b, tape), ops::linear(h_prev, U, nullptr, tape), tape);
    };
    Tensor i = ops::sigmoid(gate(p.W_i, p.U_i, p.b_i), tape);
    Tensor f = ops::sigmoid(gate(p.W_f, p.U_f, p.b_f), tape);
    Tensor cand = ops::tanh(gate(p.W_c, p.U_c, p.b_c), tape);
    Tensor c = ops::add(ops::mul(f, c_prev, tape), ops::mul(i, cand, tape), tape);
    Tensor o = ops::sigmoid(gate(p.W_o, p.U_o, p.b_o), tape);
    Tensor h = ops::mul(o, ops::tanh(c, tape), tape);
    return {h, c};
}

/// Runs the cell over [B×T×in] from zero state; returns every h_t as [B×T×hidden].
///
/// Fused into a single tape node: input projections for all timesteps are
/// one matrix product, and the backward rule is hand-written BPTT.
inline Tensor lstm_sequence(const Tensor& seq, const LSTMCellParams& p, Tape* tape = nullptr) {
    p.validate();
    require_rank(seq, 3, "lstm_sequence");
    const std::size_t batch = seq.dim(0), steps = seq.dim(1), in = seq.dim(2);
    const std::size_t hid = p.hidden(), g4 = 4 * hid;
    if (in != p.input()) {
        throw DimensionError("lstm_sequence: input width " + std::to_string(in) + ", cell expects " +
                             std::to_string(p.input()));
    }
    using ops::RowMatrix;
    auto hb = static_cast<Eigen::Index>(hid);

    auto W = std::make_shared<RowMatrix>(g4, in);
    auto U = std::make_shared<RowMatrix>(g4, hid);
    Eigen::RowVectorXd bias(g4);
    {
        const Tensor* ws[] = {&p.W_i, &p.W_f, &p.W_c, &p.W_o};
        const Tensor* us[] = {&p.U_i, &p.U_f, &p.U_c, &p.U_o};
        const Tensor* bs[] = {&p.b_i, &p.b_f, &p.b_c, &p.b_o};
        for (Eigen::Index k = 0; k < 4; ++k) {
            W->middleRows(k * hb, hb) = ops::as_matrix(ws[k]->data(), hid, in);
            U->middleRows(k * hb, hb) = ops::as_matrix(us[k]->data(), hid, hid);
            bias.segment(k * hb, hb) = Eigen::Map<const Eigen::RowVectorXd>(bs[k]->data().data(), hb);
        }
    }

    // Row (b*T + t) of every [B*T × ...] matrix holds sample b at step t.
    auto X = ops::as_matrix(seq.data(), batch * steps, in);
    auto gates = std::make_shared<RowMatrix>(batch * steps, g4);  // post-activation i, f, c̃, o
    auto cells = std::make_shared<RowMatrix>(batch * steps, hid);
    auto hiddens = std::make_shared<RowMatrix>(batch * steps, hid);
    RowMatrix pre = X * W->transpose();
    pre.rowwise() += bias;

    RowMatrix h = RowMatrix::Zero(batch, hid), c = RowMatrix::Zero(batch, hid);
    RowMatrix a(batch, g4);
    for (std::size_t t = 0; t < steps; ++t) {
        a.noalias() = h * U->transpose();
        for (std::size_t b = 0; b < batch; ++b) {
            const auto r = static_cast<Eigen::Index>(b * steps + t);
            const auto bi = static_cast<Eigen::Index>(b);
            for (Eigen::Index j = 0; j < hb; ++j) {
                const double ig = ops::sigmoid_scalar(pre(r, j) + a(bi, j));
                const double fg = ops::sigmoid_scalar(pre(r, hb + j) + a(bi, hb + j));
                const double cg = std::tanh(pre(r, 2 * hb + j) + a(bi, 2 * hb + j));
                const double og = ops::sigmoid_scalar(pre(r, 3 * hb + j) + a(bi, 3 * hb + j));
                const double cn = fg * c(bi, j) + ig * cg;
                const double hn = og * std::tanh(cn);
                (*gates)(r, j) = ig;
                (*gates)(r, hb + j) = fg;
                (*gates)(r, 2 * hb + j) = cg;
                (*gates)(r, 3 * hb + j) = og;
                (*cells)(r, j) = cn;
                (*hiddens)(r, j) = hn;
                c(bi, j) = cn;
                h(bi, j) = hn;
            }
        }
    }
    Tensor out(Shape{batch, steps, hid});
    ops::as_matrix(out.data(), batch * steps, hid) = *hiddens;

    const bool rec = detail::recording(
        tape, {&seq, &p.W_i, &p.W_f, &p.W_c, &p.W_o, &p.U_i, &p.U_f, &p.U_c, &p.U_o, &p.b_i, &p.b_f, &p.b_c, &p.b_o});
    Tensor in_t = seq;
    LSTMCellParams params = p;
    return detail::finish(
        out, "lstm_sequence", tape, rec,
        [in_t, params, W, U, gates, cells, hiddens, batch, steps, in, hid, g4, hb](std::span<const double> g) mutable {
            auto dH = ops::as_matrix(g, batch * steps, hid);
            RowMatrix dA(batch * steps, g4);  // pre-activation gradients
            RowMatrix dh_next = RowMatrix::Zero(batch, hid), dc_next = RowMatrix::Zero(batch, hid);
            RowMatrix dU = RowMatrix::Zero(g4, hid);
            RowMatrix h_prev(batch, hid), da_t(batch, g4);
            for (std::size_t tt = steps; tt-- > 0;) {
                for (std::size_t b = 0; b < batch; ++b) {
                    const auto r = static_cast<Eigen::Index>(b * steps + tt);
                    const auto bi = static_cast<Eigen::Index>(b);
                    for (Eigen::Index j = 0; j < hb; ++j) {
                        const double ig = (*gates)(r, j), fg = (*gates)(r, hb + j);
                        const double cg = (*gates)(r, 2 * hb + j), og = (*gates)(r, 3 * hb + j);
                        const double cn = (*cells)(r, j);
                        const double cp = tt > 0 ? (*cells)(r - 1, j) : 0.0;
                        const double tc = std::tanh(cn);
                        const double dh = dH(r, j) + dh_next(bi, j);
                        const double dout = dh * tc;
                        const double dc = dh * og * (1.0 - tc * tc) + dc_next(bi, j);
                        dc_next(bi, j) = dc * fg;
                        da_t(bi, j) = dc * cg * ig * (1.0 - ig);
                        da_t(bi, hb + j) = dc * cp * fg * (1.0 - fg);
                        da_t(bi, 2 * hb + j) = dc * ig * (1.0 - cg * cg);
                        da_t(bi, 3 * hb + j) = dout * og * (1.0 - og);
                        h_prev(bi, j) = tt > 0 ? (*hiddens)(r - 1, j) : 0.0;
                    }
                    dA.row(r) = da_t.row(bi);
                }
                dU.noalias() += da_t.transpose() * h_prev;
                dh_next.noalias() = da_t * (*U);
            }
            auto X = ops::as_matrix(std::as_const(in_t).data(), batch * steps, in);
            if (in_t.requires_grad()) ops::as_matrix(in_t.ensure_grad(), batch * steps, in).noalias() += dA * (*W);
            RowMatrix dW = dA.transpose() * X;
            Eigen::RowVectorXd db = dA.colwise().sum();
            Tensor* ws[] = {&params.W_i, &params.W_f, &params.W_c, &params.W_o};
            Tensor* us[] = {&params.U_i, &params.U_f, &params.U_c, &params.U_o};
            Tensor* bs[] = {&params.b_i, &params.b_f, &params.b_c, &params.b_o};
            for (Eigen::Index k = 0; k < 4; ++k) {
                if (ws[k]->requires_grad()) ops::as_matrix(ws[k]->ensure_grad(), hid, in) += dW.middleRows(k * hb, hb);
                if (us[k]->requires_grad()) ops::as_matrix(us[k]->ensure_grad(), hid, hid) += dU.middleRows(k * hb, hb);
                if (bs[k]->requires_grad()) {
                    Eigen::Map<Eigen::RowVectorXd>(bs[k]->ensure_grad().data(), hb) += db.segment(k * hb, hb);
                }
            }
        });
}

/// Stacked LSTM layers; every layer after the first adds its input back
/// (residual). All layers must share one hidden size.
inline Tensor residual_lstm_stack(const Tensor& seq, const std::vector<LSTMCellParams>& layers, Tape* tape = nullptr) {
    if (layers.empty()) throw ContractError("residual_lstm_stack: no layers");
    for (const auto& l : layers) {
        if (l.hidden() != layers.front().hidden()) {
            throw DimensionError("residual_lstm_stack: hidden sizes differ between layers");
        }
    }
    Tensor out = lstm_sequence(seq, layers.front(), tape);
    for (std::size_t k = 1; k < layers.size(); ++k) {
        out = ops::add(lstm_sequence(out, layers[k], tape), out, tape);
    }
    return out;
}

/// Bidirectional LSTM: forward and time-reversed passes concatenated per
/// timestep, giving [B×T×2·hidden].
inline Tensor blstm_sequence(const Tensor& seq, const LSTMCellParams& fwd, const LSTMCellParams& bwd,
                             Tape* tape = nullptr) {
    if (fwd.hidden() != bwd.hidden()) throw DimensionError("blstm_sequence: direction hidden sizes differ");
    Tensor f = lstm_sequence(seq, fwd, tape);
    Tensor b = ops::reverse_time(lstm_sequence(ops::reverse_time(seq, tape), bwd, tape), tape);
    return ops::concat_last(f, b, tape);
}

// ---------------------------------------------------------------------------
// Fully connected

enum class Activation { none, relu, sigmoid };

struct FCParams {
    Tensor weight;  // [out × in]
    Tensor bias;    // [out]
    std::optional<BatchNormParams> bn;
    Activation activation = Activation::none;

    std::size_t in_features() const { return weight.dim(1); }
    std::size_t out_features() const { return weight.dim(0); }

    static FCParams make(std::size_t in, std::size_t out, bool with_bn, Activation act, Rng& rng) {
        FCParams p;
        p.weight = init::uniform({out, in}, init::glorot_limit(in, out), rng);
        p.bias = Tensor(Shape{out}, 0.0, true);
        if (with_bn) p.bn = BatchNormParams::make(out);
        p.activation = act;
        return p;
    }

    void append_parameters(ParameterList& out, const std::string& prefix) {
        out.push_back({prefix + "weight", weight});
        out.push_back({prefix + "bias", bias});
        if (bn) {
            out.push_back({prefix + "bn.gamma", bn->gamma});
            out.push_back({prefix + "bn.beta", bn->beta});
        }
    }

    void append_buffers(ParameterList& out, const std::string& prefix) {
        if (bn) {
            out.push_back({prefix + "bn.running_mean", bn->running_mean});
            out.push_back({prefix + "bn.running_var", bn->running_var});
        }
    }
};

/// activation(batch_norm(x·Wᵀ + b)) for x [B×in].
inline Tensor fc_forward(const Tensor& x, FCParams& p, Mode mode, Tape* tape = nullptr) {
    require_rank(x, 2, "fc_forward");
    if (x.dim(1) != p.in_features()) {
        throw DimensionError("fc_forward: input width " + std::to_string(x.dim(1)) + ", layer expects " +
                             std::to_string(p.in_features()));
    }
    Tensor y = ops::linear(x, p.weight, &p.bias, tape);
    if (p.bn) y = batch_norm(y, *p.bn, mode, tape);
    switch (p.activation) {
        case Activation::relu: return ops::relu(y, tape);
        case Activation::sigmoid: return ops::sigmoid(y, tape);
        case Activation::none: break;
    }
    return y;
}

}  // namespace siamhar
