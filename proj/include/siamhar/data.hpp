#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "errors.hpp"
#include "tensor.hpp"

namespace siamhar {

/// Per-frame label codes. Activities of interest are 0, 1, 2, ...
inline constexpr int kTransition = -1;
inline constexpr int kUnknown = -2;

inline bool is_activity(int label) { return label >= 0; }

/// A multichannel recording with one label per frame.
struct SensorStream {
    std::string id;
    int subject = 0;
    double rate_hz = 1.0;
    Tensor frames{Shape{1, 1}};          // [channels × T]
    std::vector<int> labels;              // length T
    std::vector<std::string> legend;      // activity names indexed by label id
    std::vector<double> boundary_centers;  // frame positions, ascending

    std::size_t channels() const { return frames.dim(0); }
    std::size_t length() const { return frames.dim(1); }

    double at(std::size_t channel, std::size_t frame) const { return frames[channel * length() + frame]; }

    void validate() const {
        require_rank(frames, 2, "SensorStream");
        if (labels.size() != length()) {
            throw DataError("stream " + id + ": " + std::to_string(labels.size()) + " labels for " +
                            std::to_string(length()) + " frames");
        }
        if (!(rate_hz > 0)) throw DataError("stream " + id + ": sampling rate must be positive");
        for (int l : labels) {
            if (l < kUnknown || (l >= 0 && static_cast<std::size_t>(l) >= legend.size())) {
                throw DataError("stream " + id + ": label " + std::to_string(l) + " outside legend");
            }
        }
    }

    /// Frames [begin, end) of every channel as a [channels × (end-begin)] tensor.
    Tensor window(std::size_t begin, std::size_t end) const {
        if (begin >= end || end > length()) throw ContractError("SensorStream::window: bad range");
        const std::size_t len = end - begin;
        Tensor w(Shape{channels(), len});
        for (std::size_t c = 0; c < channels(); ++c) {
            std::copy_n(frames.data().begin() + static_cast<std::ptrdiff_t>(c * length() + begin), len,
                        w.data().begin() + static_cast<std::ptrdiff_t>(c * len));
        }
        return w;
    }
};

/// Soft boundary: an inclusive run of frames.
struct BoundaryRegion {
    std::size_t start_frame = 0;
    std::size_t end_frame = 0;
    double peak_score = 0.0;
};

/// Boundary centers implied by a label sequence: the midpoint of every
/// transition/unknown run that sits between two activities, and the half
/// frame between directly adjacent different activities.
inline std::vector<double> label_boundary_centers(const std::vector<int>& labels) {
    std::vector<double> centers;
    const std::size_t n = labels.size();
    std::size_t i = 0;
    while (i < n) {
        if (!is_activity(labels[i])) {
            std::size_t j = i;
            while (j < n && !is_activity(labels[j])) ++j;
            if (i > 0 && j < n) centers.push_back(0.5 * static_cast<double>(i + j - 1));
            i = j;
        } else {
            if (i > 0 && is_activity(labels[i - 1]) && labels[i - 1] != labels[i]) {
                centers.push_back(static_cast<double>(i) - 0.5);
            }
            ++i;
        }
    }
    return centers;
}

// ---------------------------------------------------------------------------
// Synthetic streams

enum class Waveform { sine, square, noise };

struct ActivityGenerator {
    std::string name;
    Waveform kind = Waveform::sine;
    double freq_hz = 1.0;    // sine/square
    double amplitude = 1.0;  // sine/square
    double sigma = 1.0;      // noise
};

struct SynthSegment {
    std::size_t activity = 0;
    std::size_t duration = 0;  // frames
};

struct SynthSpec {
    double rate_hz = 50.0;
    std::size_t channels = 3;
    std::vector<ActivityGenerator> activities;
    std::vector<SynthSegment> segments;
    std::size_t ramp = 16;       // cross-fade length in frames, labeled T
    double noise_sigma = 0.0;    // additive measurement noise on every frame

    void validate() const {
        if (!(rate_hz > 0)) throw ContractError("synth: rate must be positive");
        if (channels == 0) throw ContractError("synth: need at least one channel");
        if (activities.size() < 2) throw ContractError("synth: need at least two activity classes");
        if (segments.empty()) throw ContractError("synth: no segments");
        if (ramp == 0) throw ContractError("synth: ramp length must be positive");
        if (noise_sigma < 0) throw ContractError("synth: negative noise");
        for (const auto& a : activities) {
            if (a.kind == Waveform::noise) {
                if (!(a.sigma > 0)) throw ContractError("synth: noise class '" + a.name + "' needs sigma > 0");
            } else if (!(a.freq_hz > 0) || a.freq_hz >= rate_hz / 2 || !(a.amplitude > 0)) {
                throw ContractError("synth: class '" + a.name + "' needs 0 < freq < rate/2 and amplitude > 0");
            }
        }
        for (std::size_t i = 0; i < segments.size(); ++i) {
            if (segments[i].activity >= activities.size()) throw ContractError("synth: segment refers to unknown class");
            if (segments[i].duration <= ramp) throw ContractError("synth: segment shorter than the transition ramp");
        }
    }
};

/// A sequence of `count` segments with random durations in [min_len, max_len]
/// where neighbours always differ in class.
inline std::vector<SynthSegment> random_segments(std::size_t n_classes, std::size_t count, std::size_t min_len,
                                                 std::size_t max_len, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> dur(min_len, max_len);
    std::uniform_int_distribution<std::size_t> cls(0, n_classes - 1);
    std::vector<SynthSegment> out;
    for (std::size_t i = 0; i < count; ++i) {
        std::size_t c = cls(rng);
        while (i > 0 && c == out.back().activity) c = cls(rng);
        out.push_back({c, dur(rng)});
    }
    return out;
}

/// Concatenates generated segments with linear cross-fades centered on each
/// nominal boundary. Ramp frames are labeled T and each ramp midpoint is
/// recorded as a boundary center.
inline SensorStream synth_stream(const SynthSpec& spec, std::mt19937_64& rng, const std::string& id = "synthetic") {
    spec.validate();
    const std::size_t nseg = spec.segments.size();
    std::vector<std::size_t> starts(nseg + 1, 0);
    for (std::size_t i = 0; i < nseg; ++i) starts[i + 1] = starts[i] + spec.segments[i].duration;
    const std::size_t total = starts.back();
    const std::size_t half = spec.ramp / 2;

    // Each segment's signal covers its own span plus the ramps it takes part in.
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
    auto render = [&](std::size_t s, std::size_t from, std::size_t to) {
        const auto& gen = spec.activities[spec.segments[s].activity];
        std::vector<double> sig(spec.channels * (to - from));
        const double phase = phase_dist(rng);
        for (std::size_t c = 0; c < spec.channels; ++c) {
            const double ch_phase = phase + 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(spec.channels);
            for (std::size_t t = from; t < to; ++t) {
                const double arg = 2.0 * std::numbers::pi * gen.freq_hz * static_cast<double>(t) / spec.rate_hz + ch_phase;
                double v = 0.0;
                switch (gen.kind) {
                    case Waveform::sine: v = gen.amplitude * std::sin(arg); break;
                    case Waveform::square: v = std::sin(arg) >= 0 ? gen.amplitude : -gen.amplitude; break;
                    case Waveform::noise: v = gen.sigma * gauss(rng); break;
                }
                sig[c * (to - from) + (t - from)] = v;
            }
        }
        return sig;
    };

    std::vector<std::size_t> from(nseg), to(nseg);
    std::vector<std::vector<double>> signals(nseg);
    for (std::size_t s = 0; s < nseg; ++s) {
        from[s] = s == 0 ? 0 : starts[s] - half;
        to[s] = s + 1 == nseg ? total : starts[s + 1] - half + spec.ramp;
        signals[s] = render(s, from[s], to[s]);
    }

    SensorStream out;
    out.id = id;
    out.rate_hz = spec.rate_hz;
    out.frames = Tensor(Shape{spec.channels, total});
    out.labels.assign(total, 0);
    for (const auto& a : spec.activities) out.legend.push_back(a.name);
    auto value = [&](std::size_t s, std::size_t c, std::size_t t) {
        return signals[s][c * (to[s] - from[s]) + (t - from[s])];
    };
    for (std::size_t s = 0; s < nseg; ++s) {
        const std::size_t own_begin = s == 0 ? 0 : starts[s] - half + spec.ramp;
        const std::size_t own_end = s + 1 == nseg ? total : starts[s + 1] - half;
        for (std::size_t t = own_begin; t < own_end; ++t) {
            out.labels[t] = static_cast<int>(spec.segments[s].activity);
            for (std::size_t c = 0; c < spec.channels; ++c) out.frames[c * total + t] = value(s, c, t);
        }
        if (s + 1 < nseg) {
            const std::size_t r0 = starts[s + 1] - half;
            for (std::size_t k = 0; k < spec.ramp; ++k) {
                const std::size_t t = r0 + k;
                const double w = (static_cast<double>(k) + 0.5) / static_cast<double>(spec.ramp);
                out.labels[t] = kTransition;
                for (std::size_t c = 0; c < spec.channels; ++c) {
                    out.frames[c * total + t] = (1.0 - w) * value(s, c, t) + w * value(s + 1, c, t);
                }
            }
            out.boundary_centers.push_back(static_cast<double>(r0) + 0.5 * static_cast<double>(spec.ramp - 1));
        }
    }
    if (spec.noise_sigma > 0) {
        for (double& v : out.frames.data()) v += spec.noise_sigma * gauss(rng);
    }
    check_finite(out.frames.data(), "synth_stream");
    return out;
}

// ---------------------------------------------------------------------------
// Normalization

struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

/// Per-channel mean and population standard deviation over all frames of
/// the given streams. A constant channel is an error.
inline NormStats compute_norm_stats(const std::vector<SensorStream>& streams) {
    if (streams.empty()) throw ContractError("compute_norm_stats: no streams");
    const std::size_t chans = streams.front().channels();
    NormStats st{std::vector<double>(chans, 0.0), std::vector<double>(chans, 0.0)};
    double n = 0;
    for (const auto& s : streams) {
        if (s.channels() != chans) throw DimensionError("compute_norm_stats: channel counts differ");
        for (std::size_t c = 0; c < chans; ++c)
            for (std::size_t t = 0; t < s.length(); ++t) st.mean[c] += s.at(c, t);
        n += static_cast<double>(s.length());
    }
    for (double& m : st.mean) m /= n;
    for (const auto& s : streams)
        for (std::size_t c = 0; c < chans; ++c)
            for (std::size_t t = 0; t < s.length(); ++t) st.stddev[c] += std::pow(s.at(c, t) - st.mean[c], 2);
    for (std::size_t c = 0; c < chans; ++c) {
        st.stddev[c] = std::sqrt(st.stddev[c] / n);
        if (!(st.stddev[c] > 1e-12)) {
            throw DataError("normalize: channel " + std::to_string(c) + " has zero variance");
        }
    }
    return st;
}

inline SensorStream normalize(const SensorStream& stream, const NormStats& stats) {
    if (stats.mean.size() != stream.channels() || stats.stddev.size() != stream.channels()) {
        throw DimensionError("normalize: stats cover " + std::to_string(stats.mean.size()) + " channels, stream has " +
                             std::to_string(stream.channels()));
    }
    SensorStream out = stream;
    out.frames = stream.frames.clone();
    const std::size_t len = stream.length();
    for (std::size_t c = 0; c < stream.channels(); ++c) {
        if (!(stats.stddev[c] > 1e-12)) throw DataError("normalize: channel " + std::to_string(c) + " has zero variance");
        for (std::size_t t = 0; t < len; ++t) {
            double& v = out.frames[c * len + t];
            v = (v - stats.mean[c]) / stats.stddev[c];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Segments

struct Segment {
    std::size_t begin = 0;  // first frame
    std::size_t end = 0;    // one past the last frame
    Tensor window{Shape{1, 1}};
    int label = kUnknown;   // majority activity in the span, from the stream's ground truth

    std::size_t length() const { return end - begin; }
};

inline int majority_activity(const std::vector<int>& labels, std::size_t begin, std::size_t end) {
    std::map<int, std::size_t> counts;
    for (std::size_t t = begin; t < end; ++t) {
        if (is_activity(labels[t])) ++counts[labels[t]];
    }
    int best = kUnknown;
    std::size_t best_n = 0;
    for (auto [l, n] : counts) {
        if (n > best_n) {
            best = l;
            best_n = n;
        }
    }
    return best;
}

inline Segment make_segment(const SensorStream& s, std::size_t begin, std::size_t end) {
    return Segment{begin, end, s.window(begin, end), majority_activity(s.labels, begin, end)};
}

struct SliceResult {
    std::vector<Segment> segments;
    std::size_t dropped = 0;
};

/// Cuts the stream at every boundary region; the spans between regions
/// become segments. Spans shorter than `min_length` are dropped and counted.
inline SliceResult slice_segments(const SensorStream& stream, const std::vector<BoundaryRegion>& regions,
                                  std::size_t min_length) {
    SliceResult result;
    std::size_t cursor = 0;
    auto emit = [&](std::size_t begin, std::size_t end) {
        if (end <= begin) return;
        if (end - begin < min_length) {
            ++result.dropped;
            return;
        }
        result.segments.push_back(make_segment(stream, begin, end));
    };
    for (const auto& r : regions) {
        if (r.start_frame > r.end_frame || r.start_frame < cursor || r.end_frame >= stream.length()) {
            throw ContractError("slice_segments: regions must be sorted, disjoint and inside the stream");
        }
        emit(cursor, r.start_frame);
        cursor = r.end_frame + 1;
    }
    emit(cursor, stream.length());
    return result;
}

/// Maximal runs of one activity label, straight from the ground truth.
inline SliceResult truth_segments(const SensorStream& stream, std::size_t min_length) {
    SliceResult result;
    const auto& l = stream.labels;
    std::size_t i = 0;
    while (i < l.size()) {
        std::size_t j = i + 1;
        while (j < l.size() && l[j] == l[i]) ++j;
        if (is_activity(l[i])) {
            if (j - i < min_length) {
                ++result.dropped;
            } else {
                result.segments.push_back(make_segment(stream, i, j));
            }
        }
        i = j;
    }
    return result;
}

/// Runs of T/U labels as boundary regions. Two different activities that
/// touch directly (no T/U between them) yield a one-frame region on the
/// first frame of the second activity.
inline std::vector<BoundaryRegion> truth_regions(const SensorStream& stream) {
    std::vector<BoundaryRegion> out;
    const auto& l = stream.labels;
    std::size_t i = 0;
    while (i < l.size()) {
        if (is_activity(l[i])) {
            if (i > 0 && is_activity(l[i - 1]) && l[i - 1] != l[i]) out.push_back({i, i, 1.0});
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < l.size() && !is_activity(l[j])) ++j;
        out.push_back({i, j - 1, 1.0});
        i = j;
    }
    return out;
}

}  // namespace siamhar
