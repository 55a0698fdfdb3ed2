#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
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

// ---------------------------------------------------------------------------
// Generalized Gaussian boundary target

struct GGTarget {
    double alpha = 8.0;
    double beta = 8.0;
    double mu = 0.0;
    bool normalize_peak = true;

    void validate() const {
        if (!(alpha > 0) || !(beta > 0)) throw ContractError("GGTarget: alpha and beta must be positive");
    }
};

/// β/(2αΓ(1/β)) · exp(−(|x−μ|/α)^β); with normalize_peak the prefactor is
/// dropped so the value at μ is exactly 1.
inline double gg_value(double x, const GGTarget& t) {
    t.validate();
    const double e = std::exp(-std::pow(std::abs(x - t.mu) / t.alpha, t.beta));
    if (t.normalize_peak) return e;
    return t.beta / (2.0 * t.alpha * std::tgamma(1.0 / t.beta)) * e;
}

// ---------------------------------------------------------------------------
// Samples

struct SegmentationConfig {
    std::size_t history = 128;  // L_h
    std::size_t future = 64;    // L_f
    std::size_t stride = 4;
    double threshold = 0.5;
    double gg_alpha = 8.0;
    double gg_beta = 8.0;
    std::vector<std::size_t> head_hidden{128, 64};
    double near_fraction = 0.5;  // training draws taken close to a boundary
    double near_span = 3.0;      // "close" means within near_span·α frames

    GGTarget target_shape() const { return GGTarget{gg_alpha, gg_beta, 0.0, true}; }

    void validate() const {
        if (history == 0 || future == 0 || stride == 0) throw ContractError("SegmentationConfig: zero window or stride");
        if (!(threshold >= 0 && threshold <= 1)) throw ContractError("SegmentationConfig: threshold outside [0,1]");
        if (!(near_fraction >= 0 && near_fraction <= 1) || !(near_span > 0)) {
            throw ContractError("SegmentationConfig: near_fraction must be in [0,1] and near_span positive");
        }
        target_shape().validate();
    }
};

struct SegmentationSample {
    Tensor history{Shape{1, 1}};          // [channels × L_h], frames t_M−L_h+1 .. t_M
    Tensor future_reversed{Shape{1, 1}};  // [channels × L_f], frames t_M+L_f .. t_M+1
    double target = 0.0;
    std::size_t t_M = 0;
};

inline Tensor reverse_columns(const Tensor& w) {
    require_rank(w, 2, "reverse_columns");
    const std::size_t c = w.dim(0), n = w.dim(1);
    Tensor out(Shape{c, n});
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t t = 0; t < n; ++t) out[i * n + t] = w[i * n + (n - 1 - t)];
    return out;
}

/// Distance from frame t to the nearest boundary center; infinity if none.
inline double nearest_boundary_distance(const std::vector<double>& centers, double t) {
    double best = std::numeric_limits<double>::infinity();
    for (double c : centers) best = std::min(best, std::abs(t - c));
    return best;
}

inline SegmentationSample make_sample(const SensorStream& stream, std::size_t t_M, std::size_t history,
                                      std::size_t future, const GGTarget& shape) {
    if (t_M + 1 < history || t_M + future >= stream.length()) {
        throw ContractError("make_sample: t_M=" + std::to_string(t_M) + " needs " + std::to_string(history - 1) +
                            " <= t_M < " + std::to_string(static_cast<long long>(stream.length()) -
                                                           static_cast<long long>(future)));
    }
    SegmentationSample s;
    s.t_M = t_M;
    s.history = stream.window(t_M + 1 - history, t_M + 1);
    s.future_reversed = reverse_columns(stream.window(t_M + 1, t_M + 1 + future));
    const double dist = nearest_boundary_distance(stream.boundary_centers, static_cast<double>(t_M));
    GGTarget t = shape;
    t.mu = 0.0;
    t.normalize_peak = true;
    s.target = std::isfinite(dist) ? gg_value(dist, t) : 0.0;
    return s;
}

/// Candidate frames in order: t_M = L_h−1, L_h−1+stride, ... while t_M+L_f < length.
inline std::vector<std::size_t> candidate_frames(std::size_t length, const SegmentationConfig& cfg) {
    if (length < cfg.history + cfg.future) {
        throw SequenceTooShortError(cfg.history + cfg.future, length, "detect_boundaries");
    }
    std::vector<std::size_t> out;
    for (std::size_t t = cfg.history - 1; t + cfg.future < length; t += cfg.stride) out.push_back(t);
    return out;
}

/// Training candidates: with probability cfg.near_fraction a frame within
/// cfg.near_span·α of a random boundary center, otherwise uniform over
/// valid frames.
inline std::vector<SegmentationSample> draw_segmentation_batch(const std::vector<SensorStream>& streams,
                                                               const SegmentationConfig& cfg, std::size_t batch,
                                                               std::mt19937_64& rng) {
    std::vector<const SensorStream*> usable;
    for (const auto& s : streams) {
        if (s.length() >= cfg.history + cfg.future) usable.push_back(&s);
    }
    if (usable.empty()) throw DataError("no stream is long enough for segmentation windows");
    std::vector<SegmentationSample> out;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    while (out.size() < batch) {
        const SensorStream& s = *usable[std::uniform_int_distribution<std::size_t>(0, usable.size() - 1)(rng)];
        const long long lo = static_cast<long long>(cfg.history) - 1;
        const long long hi = static_cast<long long>(s.length() - cfg.future) - 1;
        long long t = std::uniform_int_distribution<long long>(lo, hi)(rng);
        if (unit(rng) < cfg.near_fraction && !s.boundary_centers.empty()) {
            const double c =
                s.boundary_centers[std::uniform_int_distribution<std::size_t>(0, s.boundary_centers.size() - 1)(rng)];
            const double span = cfg.near_span * cfg.gg_alpha;
            t = std::llround(c + std::uniform_real_distribution<double>(-span, span)(rng));
            if (t < lo || t > hi) continue;
        }
        out.push_back(make_sample(s, static_cast<std::size_t>(t), cfg.history, cfg.future, cfg.target_shape()));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Model

/// Shared unidirectional branch applied to history and reversed future, then
/// an FC head on the concatenated representations ending in a sigmoid.
class SegmentationModel {
public:
    static SegmentationModel make(BranchConfig branch_cfg, const SegmentationConfig& cfg, Rng& rng) {
        cfg.validate();
        branch_cfg.kind = LstmKind::unidirectional;
        const std::size_t need = branch_cfg.min_length();
        if (cfg.future < need || cfg.history < need) {
            throw SequenceTooShortError(need, std::min(cfg.history, cfg.future), "segmentation windows");
        }
        SegmentationModel m;
        m.cfg_ = cfg;
        m.branch_ = Branch::make(branch_cfg, rng);
        std::size_t in = 2 * branch_cfg.d();
        for (std::size_t h : cfg.head_hidden) {
            m.head_.push_back(FCParams::make(in, h, true, Activation::relu, rng));
            in = h;
        }
        m.head_.push_back(FCParams::make(in, 1, false, Activation::sigmoid, rng));
        return m;
    }

    /// Zeroes the output layer so every score is sigmoid(0) = 0.5.
    void zero_output_layer() {
        auto& last = head_.back();
        std::fill(last.weight.data().begin(), last.weight.data().end(), 0.0);
        std::fill(last.bias.data().begin(), last.bias.data().end(), 0.0);
    }

    const SegmentationConfig& config() const { return cfg_; }
    SegmentationConfig& config() { return cfg_; }
    Branch& branch() { return branch_; }

    ParameterList parameters() {
        ParameterList out;
        branch_.append_parameters(out, "branch.");
        for (std::size_t i = 0; i < head_.size(); ++i) head_[i].append_parameters(out, "head" + std::to_string(i + 1) + ".");
        return out;
    }

    ParameterList buffers() {
        ParameterList out;
        branch_.append_buffers(out, "branch.");
        for (std::size_t i = 0; i < head_.size(); ++i) head_[i].append_buffers(out, "head" + std::to_string(i + 1) + ".");
        return out;
    }

    /// history [B×C×L_h], future_reversed [B×C×L_f] -> scores [B×1].
    Tensor score_batch(const Tensor& history, const Tensor& future_reversed, Mode mode, Tape* tape = nullptr) {
        Tensor vh = branch_.encode_batch(history, mode, tape);
        Tensor vf = branch_.encode_batch(future_reversed, mode, tape);
        Tensor h = ops::concat_last(vh, vf, tape);
        for (auto& layer : head_) h = fc_forward(h, layer, mode, tape);
        return h;
    }

    double score(const SegmentationSample& s) {
        Tensor h = ops::reshape(s.history, Shape{1, s.history.dim(0), s.history.dim(1)});
        Tensor f = ops::reshape(s.future_reversed, Shape{1, s.future_reversed.dim(0), s.future_reversed.dim(1)});
        return score_batch(h, f, Mode::inference).item();
    }

private:
    SegmentationConfig cfg_;
    Branch branch_;
    std::vector<FCParams> head_;
};

inline double seg_score(SegmentationModel& model, const SegmentationSample& sample) { return model.score(sample); }

/// One MSE/Adam step on a batch of samples; returns the batch loss.
inline double seg_train_step(SegmentationModel& model, const std::vector<SegmentationSample>& batch, Adam& opt) {
    if (batch.size() < 2) throw ContractError("seg_train_step: batch must hold at least 2 samples");
    std::vector<Tensor> hist, fut;
    Tensor target(Shape{batch.size(), 1});
    for (std::size_t i = 0; i < batch.size(); ++i) {
        hist.push_back(batch[i].history);
        fut.push_back(batch[i].future_reversed);
        target[i] = batch[i].target;
    }
    ParameterList params = model.parameters();
    Adam::zero_grad(params);
    Tape tape;
    Tensor pred = model.score_batch(stack_windows(hist), stack_windows(fut), Mode::train, &tape);
    Tensor loss = ops::mse(pred, target, &tape);
    tape.backward(loss);
    opt.step(params);
    return loss.item();
}

/// Inference scores at every candidate frame, evaluated in chunks.
struct StreamScores {
    std::vector<std::size_t> frames;
    std::vector<double> scores;
};

inline StreamScores score_stream(SegmentationModel& model, const SensorStream& stream, std::size_t chunk = 64) {
    const auto& cfg = model.config();
    StreamScores out;
    out.frames = candidate_frames(stream.length(), cfg);
    for (std::size_t b = 0; b < out.frames.size(); b += chunk) {
        const std::size_t e = std::min(out.frames.size(), b + chunk);
        std::vector<Tensor> hist, fut;
        for (std::size_t i = b; i < e; ++i) {
            const std::size_t t = out.frames[i];
            hist.push_back(stream.window(t + 1 - cfg.history, t + 1));
            fut.push_back(reverse_columns(stream.window(t + 1, t + 1 + cfg.future)));
        }
        Tensor s = model.score_batch(stack_windows(hist), stack_windows(fut), Mode::inference);
        for (std::size_t i = 0; i < s.numel(); ++i) out.scores.push_back(s[i]);
    }
    return out;
}

/// Scores above `threshold` at consecutive candidates merge into one region.
/// Each candidate stands for the `stride` frames around it, so regions tile
/// the stream without gaps between neighbouring candidates.
inline std::vector<BoundaryRegion> merge_regions(const std::vector<std::size_t>& frames,
                                                 const std::vector<double>& scores, double threshold,
                                                 std::size_t stride, std::size_t length) {
    if (frames.size() != scores.size()) throw DimensionError("merge_regions: frames and scores differ in length");
    if (stride == 0) throw ContractError("merge_regions: zero stride");
    auto cell_begin = [&](std::size_t t) { return t >= (stride - 1) / 2 ? t - (stride - 1) / 2 : 0; };
    auto cell_end = [&](std::size_t t) { return std::min(length - 1, t + stride / 2); };
    std::vector<BoundaryRegion> out;
    bool open = false;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (scores[i] > threshold) {
            if (!open) {
                out.push_back({cell_begin(frames[i]), cell_end(frames[i]), scores[i]});
                open = true;
            } else {
                out.back().end_frame = cell_end(frames[i]);
                out.back().peak_score = std::max(out.back().peak_score, scores[i]);
            }
        } else {
            open = false;
        }
    }
    return out;
}

inline std::vector<BoundaryRegion> detect_boundaries(SegmentationModel& model, const SensorStream& stream) {
    StreamScores s = score_stream(model, stream);
    return merge_regions(s.frames, s.scores, model.config().threshold, model.config().stride, stream.length());
}

inline void write_boundaries_csv(std::ostream& os, const std::vector<BoundaryRegion>& regions) {
    os << "start_frame,end_frame,peak_score\n";
    char buf[64];
    for (const auto& r : regions) {
        std::snprintf(buf, sizeof buf, "%.17g", r.peak_score);
        os << r.start_frame << ',' << r.end_frame << ',' << buf << '\n';
    }
}

// ---------------------------------------------------------------------------
// Segmentation-and-recognition error assessment

enum class Assessment { correct, incorrect };

inline std::vector<int> collapse_runs(const std::vector<int>& labels) {
    std::vector<int> out;
    for (int l : labels) {
        if (l < kUnknown) throw DataError("assess_segmentation: unknown label code " + std::to_string(l));
        if (out.empty() || out.back() != l) out.push_back(l);
    }
    return out;
}

/// Compares run-length label strings. An activity in the truth must be
/// reproduced exactly; a truth T or U may be omitted or reported as T or U.
/// Anything else the prediction adds is an error.
inline Assessment assess_segmentation(const std::vector<int>& truth_labels, const std::vector<int>& predicted_labels) {
    const std::vector<int> truth = collapse_runs(truth_labels);
    const std::vector<int> pred = collapse_runs(predicted_labels);
    const std::size_t n = truth.size(), m = pred.size();
    // reach[i][j]: truth[0..i) explained by pred[0..j).
    std::vector<std::vector<char>> reach(n + 1, std::vector<char>(m + 1, 0));
    reach[0][0] = 1;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= m; ++j) {
            if (!reach[i][j]) continue;
            const int t = truth[i];
            if (is_activity(t)) {
                if (j < m && pred[j] == t) reach[i + 1][j + 1] = 1;
                // A skipped T/U leaves the neighbouring activities adjacent;
                // the prediction shows them as one run.
                if (j > 0 && pred[j - 1] == t) reach[i + 1][j] = 1;
            } else {
                reach[i + 1][j] = 1;
                if (j < m && !is_activity(pred[j])) reach[i + 1][j + 1] = 1;
            }
        }
    }
    return reach[n][m] ? Assessment::correct : Assessment::incorrect;
}

/// Token form, e.g. {"A","T","B"}. T and U are reserved; any other token made
/// of letters, digits or underscores names an activity.
inline std::vector<int> encode_label_tokens(const std::vector<std::string>& tokens, std::vector<std::string>& legend) {
    std::vector<int> out;
    for (const auto& tok : tokens) {
        if (tok == "T") {
            out.push_back(kTransition);
            continue;
        }
        if (tok == "U") {
            out.push_back(kUnknown);
            continue;
        }
        const bool ok = !tok.empty() && std::all_of(tok.begin(), tok.end(), [](unsigned char c) {
            return std::isalnum(c) || c == '_';
        });
        if (!ok) throw DataError("assess_segmentation: unknown label symbol '" + tok + "'");
        auto it = std::find(legend.begin(), legend.end(), tok);
        if (it == legend.end()) {
            legend.push_back(tok);
            it = legend.end() - 1;
        }
        out.push_back(static_cast<int>(it - legend.begin()));
    }
    return out;
}

inline Assessment assess_segmentation(const std::vector<std::string>& truth, const std::vector<std::string>& predicted) {
    std::vector<std::string> legend;
    std::vector<int> t = encode_label_tokens(truth, legend);
    std::vector<int> p = encode_label_tokens(predicted, legend);
    return assess_segmentation(t, p);
}

}  // namespace siamhar
