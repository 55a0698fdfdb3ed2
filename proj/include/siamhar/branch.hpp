#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "errors.hpp"
#include "layers.hpp"
#include "ops.hpp"
#include "tape.hpp"
#include "tensor.hpp"

namespace siamhar {

enum class LstmKind { unidirectional, bidirectional };

/// Per-branch encoder geometry: conv ×2, pool, conv ×2, pool, LSTM stack.
struct BranchConfig {
    std::size_t in_channels = 3;
    std::array<std::size_t, 4> conv_channels{64, 64, 64, 64};
    std::size_t kernel_width = 3;
    std::array<std::size_t, 4> dilations{1, 2, 4, 8};
    std::size_t pool_size = 2;
    std::vector<std::size_t> lstm_hidden{128, 128};
    LstmKind kind = LstmKind::unidirectional;

    std::size_t d() const {
        return kind == LstmKind::bidirectional ? 2 * lstm_hidden.back() : lstm_hidden.back();
    }

    std::size_t receptive(std::size_t layer) const { return (kernel_width - 1) * dilations[layer] + 1; }

    /// Temporal length after the conv/pool front end, 0 if it does not fit.
    std::size_t front_end_length(std::size_t t) const {
        for (std::size_t layer = 0; layer < 4; ++layer) {
            if (t < receptive(layer)) return 0;
            t = t - receptive(layer) + 1;
            if (layer == 1 || layer == 3) t /= pool_size;
            if (t == 0) return 0;
        }
        return t;
    }

    /// Smallest window length that leaves at least one LSTM timestep.
    std::size_t min_length() const {
        std::size_t t = 1;
        for (std::size_t layer = 4; layer-- > 0;) {
            if (layer == 1 || layer == 3) t *= pool_size;
            t += receptive(layer) - 1;
        }
        return t;
    }

    void validate() const {
        if (in_channels == 0) throw ContractError("BranchConfig: in_channels must be positive");
        if (kernel_width == 0 || pool_size == 0) throw ContractError("BranchConfig: kernel width and pool size must be positive");
        for (std::size_t i = 0; i < 4; ++i) {
            if (conv_channels[i] == 0 || dilations[i] == 0) throw ContractError("BranchConfig: zero conv channels or dilation");
        }
        if (lstm_hidden.empty()) throw ContractError("BranchConfig: need at least one LSTM layer");
        for (std::size_t h : lstm_hidden) {
            if (h != lstm_hidden.front()) throw ContractError("BranchConfig: residual LSTM layers must share one hidden size");
        }
        if (lstm_hidden.front() == 0) throw ContractError("BranchConfig: zero hidden size");
    }
};

struct Embedding {
    Tensor vector{Shape{1}};
    std::string source_id;

    std::size_t dim() const { return vector.numel(); }
};

struct ConvBlock {
    DilatedConvParams conv;
    BatchNormParams bn;
};

/// One set of branch weights. A siamese network owns a single Branch and
/// runs both inputs through it, so the weights are shared by construction.
class Branch {
public:
    Branch() = default;

    static Branch make(const BranchConfig& cfg, Rng& rng) {
        cfg.validate();
        Branch b;
        b.cfg_ = cfg;
        std::size_t in = cfg.in_channels;
        for (std::size_t i = 0; i < 4; ++i) {
            b.convs_[i].conv = DilatedConvParams::make(in, cfg.conv_channels[i], cfg.kernel_width, cfg.dilations[i], rng);
            b.convs_[i].bn = BatchNormParams::make(cfg.conv_channels[i]);
            in = cfg.conv_channels[i];
        }
        const std::size_t hid = cfg.lstm_hidden.front();
        for (std::size_t k = 0; k < cfg.lstm_hidden.size(); ++k) {
            const std::size_t layer_in =
                k == 0 ? in : (cfg.kind == LstmKind::bidirectional ? 2 * hid : hid);
            b.forward_.push_back(LSTMCellParams::make(layer_in, hid, rng));
            if (cfg.kind == LstmKind::bidirectional) b.backward_.push_back(LSTMCellParams::make(layer_in, hid, rng));
        }
        return b;
    }

    /// Conv and LSTM weights all zero; batch norm at its identity setting.
    static Branch zeros(const BranchConfig& cfg) {
        Rng rng(0);
        Branch b = make(cfg, rng);
        for (auto& blk : b.convs_) {
            std::fill(blk.conv.kernels.data().begin(), blk.conv.kernels.data().end(), 0.0);
        }
        for (auto* stack : {&b.forward_, &b.backward_}) {
            for (auto& cell : *stack)
                for (Tensor* t : cell.all()) std::fill(t->data().begin(), t->data().end(), 0.0);
        }
        return b;
    }

    const BranchConfig& config() const { return cfg_; }

    void append_parameters(ParameterList& out, const std::string& prefix) {
        for (std::size_t i = 0; i < 4; ++i) {
            const std::string p = prefix + "conv" + std::to_string(i + 1) + ".";
            out.push_back({p + "kernels", convs_[i].conv.kernels});
            out.push_back({p + "bias", convs_[i].conv.bias});
            out.push_back({p + "bn.gamma", convs_[i].bn.gamma});
            out.push_back({p + "bn.beta", convs_[i].bn.beta});
        }
        for (std::size_t k = 0; k < forward_.size(); ++k) {
            forward_[k].append_parameters(out, prefix + "lstm" + std::to_string(k + 1) + ".fwd.");
            if (!backward_.empty()) backward_[k].append_parameters(out, prefix + "lstm" + std::to_string(k + 1) + ".bwd.");
        }
    }

    /// Batch-norm running statistics (saved with checkpoints, not optimized).
    void append_buffers(ParameterList& out, const std::string& prefix) {
        for (std::size_t i = 0; i < 4; ++i) {
            const std::string p = prefix + "conv" + std::to_string(i + 1) + ".";
            out.push_back({p + "bn.running_mean", convs_[i].bn.running_mean});
            out.push_back({p + "bn.running_var", convs_[i].bn.running_var});
        }
    }

    ParameterList parameters() {
        ParameterList out;
        append_parameters(out, "");
        return out;
    }

    /// x [B × channels × T] -> [B × d].
    Tensor encode_batch(const Tensor& x, Mode mode, Tape* tape = nullptr) {
        require_rank(x, 3, "Branch::encode_batch");
        if (x.dim(1) != cfg_.in_channels) {
            throw DimensionError("Branch::encode_batch: input has " + std::to_string(x.dim(1)) +
                                 " channels, branch expects " + std::to_string(cfg_.in_channels));
        }
        const std::size_t need = cfg_.min_length();
        if (x.dim(2) < need) {
            throw SequenceTooShortError(need, x.dim(2), "branch encoder");
        }
        Tensor h = x;
        for (std::size_t i = 0; i < 4; ++i) {
            h = conv1d_dilated(h, convs_[i].conv, tape);
            h = batch_norm(h, convs_[i].bn, mode, tape);
            h = ops::relu(h, tape);
            if (i == 1 || i == 3) h = max_pool1d(h, cfg_.pool_size, tape);
        }
        Tensor seq = ops::swap_last2(h, tape);  // [B × T' × C]
        if (cfg_.kind == LstmKind::unidirectional) {
            Tensor out = residual_lstm_stack(seq, forward_, tape);
            return ops::take_timestep(out, out.dim(1) - 1, tape);
        }
        Tensor out = blstm_sequence(seq, forward_[0], backward_[0], tape);
        for (std::size_t k = 1; k < forward_.size(); ++k) {
            out = ops::add(blstm_sequence(out, forward_[k], backward_[k], tape), out, tape);
        }
        return ops::mean_time(out, tape);
    }

    /// Inference-mode encoding of one window [channels × T].
    Embedding encode(const Tensor& window, std::string source_id = {}) {
        require_rank(window, 2, "Branch::encode");
        Tensor x = ops::reshape(window, Shape{1, window.dim(0), window.dim(1)});
        Tensor v = encode_batch(x, Mode::inference);
        return Embedding{ops::reshape(v, Shape{v.numel()}), std::move(source_id)};
    }

private:
    BranchConfig cfg_;
    std::array<ConvBlock, 4> convs_;
    std::vector<LSTMCellParams> forward_;
    std::vector<LSTMCellParams> backward_;
};

/// Stacks equal-length windows [channels × T] into [B × channels × T].
inline Tensor stack_windows(const std::vector<Tensor>& windows) {
    if (windows.empty()) throw ContractError("stack_windows: no windows");
    const Shape s = windows.front().shape();
    require_rank(windows.front(), 2, "stack_windows");
    Tensor out(Shape{windows.size(), s[0], s[1]});
    const std::size_t n = windows.front().numel();
    for (std::size_t b = 0; b < windows.size(); ++b) {
        if (windows[b].shape() != s) {
            throw DimensionError("stack_windows: window " + std::to_string(b) + " has shape " +
                                 shape_str(windows[b].shape()) + ", expected " + shape_str(s));
        }
        std::copy(windows[b].data().begin(), windows[b].data().end(),
                  out.data().begin() + static_cast<std::ptrdiff_t>(b * n));
    }
    return out;
}

}  // namespace siamhar
