#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <map>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "branch.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "layers.hpp"
#include "ops.hpp"
#include "optimizer.hpp"
#include "tape.hpp"
#include "tensor.hpp"

namespace siamhar {

inline double l1_distance(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) {
        throw DimensionError("l1_distance: dimensions " + std::to_string(a.numel()) + " and " +
                             std::to_string(b.numel()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += std::abs(a[i] - b[i]);
    return s;
}

/// exp(−‖e_A − e_B‖₁).
inline double similarity(const Embedding& a, const Embedding& b) { return std::exp(-l1_distance(a.vector, b.vector)); }

struct PairSample {
    Tensor x_A{Shape{1, 1}};
    Tensor x_B{Shape{1, 1}};
    double y = 0.0;  // 1 when both windows come from the same activity kind
};

/// A training window with the weak-supervision group it came from. Only
/// sample_pairs looks at `group`, and only to decide y.
struct LabeledWindow {
    Tensor window{Shape{1, 1}};
    int group = 0;
};

/// Exactly round(n·positive_fraction) same-group pairs, the rest cross-group,
/// in shuffled order.
inline std::vector<PairSample> sample_pairs(const std::vector<LabeledWindow>& windows, std::size_t n_pairs,
                                            double positive_fraction, std::mt19937_64& rng) {
    if (!(positive_fraction >= 0 && positive_fraction <= 1)) {
        throw ContractError("sample_pairs: positive_fraction outside [0,1]");
    }
    std::map<int, std::vector<std::size_t>> by_group;
    for (std::size_t i = 0; i < windows.size(); ++i) by_group[windows[i].group].push_back(i);
    const auto n_pos = static_cast<std::size_t>(std::llround(static_cast<double>(n_pairs) * positive_fraction));
    const std::size_t n_neg = n_pairs - n_pos;
    if (n_neg > 0 && by_group.size() < 2) {
        throw DataError("sample_pairs: negative pairs need at least two groups, corpus has " +
                        std::to_string(by_group.size()));
    }
    std::vector<std::size_t> pos_anchors;
    for (const auto& [g, idx] : by_group) {
        if (idx.size() >= 2) pos_anchors.insert(pos_anchors.end(), idx.begin(), idx.end());
    }
    std::sort(pos_anchors.begin(), pos_anchors.end());
    if (n_pos > 0 && pos_anchors.empty()) throw DataError("sample_pairs: no group has two windows for a positive pair");

    auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
    std::vector<PairSample> out;
    out.reserve(n_pairs);
    for (std::size_t k = 0; k < n_pos; ++k) {
        const std::size_t a = pos_anchors[pick(pos_anchors.size())];
        const auto& same = by_group[windows[a].group];
        std::size_t b = same[pick(same.size() - 1)];
        if (b == a) b = same.back();
        out.push_back({windows[a].window, windows[b].window, 1.0});
    }
    for (std::size_t k = 0; k < n_neg; ++k) {
        const std::size_t a = pick(windows.size());
        const std::size_t others = windows.size() - by_group[windows[a].group].size();
        std::size_t r = pick(others), b = 0;
        for (std::size_t i = 0; i < windows.size(); ++i) {
            if (windows[i].group == windows[a].group) continue;
            if (r-- == 0) {
                b = i;
                break;
            }
        }
        out.push_back({windows[a].window, windows[b].window, 0.0});
    }
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

/// Non-overlapping fixed-length crops of each segment; segments shorter than
/// `length` contribute nothing. Each crop inherits its segment's label.
inline std::vector<LabeledWindow> crop_segments(const std::vector<Segment>& segments, std::size_t length) {
    if (length == 0) throw ContractError("crop_segments: zero length");
    std::vector<LabeledWindow> out;
    for (const auto& s : segments) {
        const std::size_t chans = s.window.dim(0), len = s.window.dim(1);
        for (std::size_t start = 0; start + length <= len; start += length) {
            Tensor w(Shape{chans, length});
            for (std::size_t c = 0; c < chans; ++c)
                for (std::size_t t = 0; t < length; ++t) w[c * length + t] = s.window[c * len + start + t];
            out.push_back({w, s.label});
        }
    }
    return out;
}

/// BLSTM branch whose embeddings are compared with the fixed similarity.
class RecognitionModel {
public:
    static RecognitionModel make(BranchConfig cfg, Rng& rng) {
        cfg.kind = LstmKind::bidirectional;
        RecognitionModel m;
        m.branch_ = Branch::make(cfg, rng);
        return m;
    }

    Branch& branch() { return branch_; }
    const BranchConfig& config() const { return branch_.config(); }
    std::size_t min_length() const { return branch_.config().min_length(); }

    ParameterList parameters() {
        ParameterList out;
        branch_.append_parameters(out, "branch.");
        return out;
    }

    ParameterList buffers() {
        ParameterList out;
        branch_.append_buffers(out, "branch.");
        return out;
    }

    /// Similarities exp(−‖f(a)−f(b)‖₁) for [B×C×T] pairs, via one stacked pass.
    Tensor similarity_batch(const Tensor& a, const Tensor& b, Mode mode, Tape* tape = nullptr) {
        const std::size_t n = a.dim(0);
        Tensor both = ops::concat_batch({a, b}, tape);
        Tensor e = branch_.encode_batch(both, mode, tape);
        Tensor diff = ops::sub(ops::slice_batch(e, 0, n, tape), ops::slice_batch(e, n, 2 * n, tape), tape);
        return ops::exp(ops::neg(ops::sum_last(ops::abs(diff, tape), tape), tape), tape);
    }

    Embedding embed(const Tensor& window, std::string id = {}) { return branch_.encode(window, std::move(id)); }

private:
    Branch branch_;
};

/// Mean over the batch of (D(x_A, x_B) − y)², followed by one optimizer step.
inline double rec_train_step(RecognitionModel& model, const std::vector<PairSample>& batch, Adam& opt) {
    if (batch.size() < 2) throw ContractError("rec_train_step: batch must hold at least 2 pairs");
    std::vector<Tensor> as, bs;
    Tensor y(Shape{batch.size()});
    for (std::size_t i = 0; i < batch.size(); ++i) {
        as.push_back(batch[i].x_A);
        bs.push_back(batch[i].x_B);
        y[i] = batch[i].y;
    }
    ParameterList params = model.parameters();
    Adam::zero_grad(params);
    Tape tape;
    Tensor d = model.similarity_batch(stack_windows(as), stack_windows(bs), Mode::train, &tape);
    Tensor loss = ops::mse(d, y, &tape);
    tape.backward(loss);
    opt.step(params);
    return loss.item();
}

/// One inference-mode embedding per window, in input order.
inline std::vector<Embedding> embed_segments(RecognitionModel& model, const std::vector<Tensor>& windows,
                                             const std::vector<std::string>& ids = {}) {
    if (!ids.empty() && ids.size() != windows.size()) throw DimensionError("embed_segments: ids and windows differ");
    std::vector<Embedding> out;
    out.reserve(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) {
        out.push_back(model.embed(windows[i], ids.empty() ? std::to_string(i) : ids[i]));
    }
    return out;
}

inline void write_embeddings_csv(std::ostream& os, const std::vector<Embedding>& embeddings) {
    const std::size_t d = embeddings.empty() ? 0 : embeddings.front().dim();
    os << "segment_id";
    for (std::size_t k = 1; k <= d; ++k) os << ",v_" << k;
    os << '\n';
    char buf[64];
    for (const auto& e : embeddings) {
        if (e.dim() != d) throw DimensionError("write_embeddings_csv: mixed embedding dimensions");
        os << e.source_id;
        for (double v : e.vector.data()) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            os << ',' << buf;
        }
        os << '\n';
    }
}

}  // namespace siamhar
