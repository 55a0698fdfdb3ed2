#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "data.hpp"
#include "optimizer.hpp"
#include "recognition.hpp"
#include "segmentation.hpp"

// Training loops shared by the command-line tool and the acceptance runs.

namespace siamhar {

/// The three-class synthetic substrate: a 2 Hz sine, a 5 Hz square wave and
/// white noise.
inline std::vector<ActivityGenerator> standard_synth_activities() {
    return {{"sine", Waveform::sine, 2.0, 1.0, 1.0},
            {"square", Waveform::square, 5.0, 1.0, 1.0},
            {"noise", Waveform::noise, 1.0, 1.0, 1.0}};
}

struct SynthCorpusSpec {
    std::size_t streams = 10;
    std::size_t segments_per_stream = 4;
    std::size_t min_segment = 200;
    std::size_t max_segment = 300;
    std::size_t channels = 3;
    double rate_hz = 50.0;
    std::size_t ramp = 16;
    double noise_sigma = 0.05;
};

inline std::vector<SensorStream> synth_corpus(const SynthCorpusSpec& c, std::mt19937_64& rng,
                                              const std::string& prefix = "synth") {
    std::vector<SensorStream> out;
    for (std::size_t i = 0; i < c.streams; ++i) {
        SynthSpec spec;
        spec.rate_hz = c.rate_hz;
        spec.channels = c.channels;
        spec.activities = standard_synth_activities();
        spec.ramp = c.ramp;
        spec.noise_sigma = c.noise_sigma;
        spec.segments = random_segments(spec.activities.size(), c.segments_per_stream, c.min_segment, c.max_segment, rng);
        out.push_back(synth_stream(spec, rng, prefix + std::to_string(i)));
        out.back().subject = static_cast<int>(i);
    }
    return out;
}

struct LossPoint {
    std::size_t step = 0;
    double loss = 0.0;
};

struct SegTrainOptions {
    std::size_t steps = 4000;
    std::size_t batch = 32;
    double learning_rate = 2e-3;
    std::optional<double> time_budget_s;  // stop early once exceeded
};

inline std::vector<LossPoint> train_segmentation(SegmentationModel& model, const std::vector<SensorStream>& streams,
                                                 const SegTrainOptions& o, std::mt19937_64& rng) {
    Adam opt(AdamOptions{.learning_rate = o.learning_rate});
    std::vector<LossPoint> curve;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t step = 1; step <= o.steps; ++step) {
        auto batch = draw_segmentation_batch(streams, model.config(), o.batch, rng);
        curve.push_back({step, seg_train_step(model, batch, opt)});
        if (o.time_budget_s &&
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() > *o.time_budget_s) {
            break;
        }
    }
    return curve;
}

struct RecTrainOptions {
    std::size_t max_steps = 1000;
    std::size_t batch = 16;
    std::size_t pairs = 200;
    double positive_fraction = 0.5;
    std::size_t crop_length = 64;
    double learning_rate = 1e-3;
    std::size_t check_every = 50;    // evaluate the pool MSE this often
    double target_mse = 0.02;        // and stop once it is below this
    std::optional<double> time_budget_s;
};

/// Mean squared error of D against y over a pair pool, inference mode.
inline double pairs_mse(RecognitionModel& model, const std::vector<PairSample>& pairs, std::size_t chunk = 50) {
    if (pairs.empty()) throw ContractError("pairs_mse: no pairs");
    double s = 0.0;
    for (std::size_t b = 0; b < pairs.size(); b += chunk) {
        const std::size_t e = std::min(pairs.size(), b + chunk);
        std::vector<Tensor> as, bs;
        for (std::size_t i = b; i < e; ++i) {
            as.push_back(pairs[i].x_A);
            bs.push_back(pairs[i].x_B);
        }
        Tensor d = model.similarity_batch(stack_windows(as), stack_windows(bs), Mode::inference);
        for (std::size_t i = b; i < e; ++i) s += (d[i - b] - pairs[i].y) * (d[i - b] - pairs[i].y);
    }
    return s / static_cast<double>(pairs.size());
}

struct RecTrainResult {
    std::vector<LossPoint> curve;  // per-step minibatch loss
    std::size_t steps = 0;
    double pool_mse = 1.0;         // MSE over the whole pair pool after training
};

/// Draws a fixed pair pool from fixed-length crops of labeled segments and
/// runs minibatch steps over it in shuffled epochs.
inline RecTrainResult train_recognition(RecognitionModel& model, const std::vector<Segment>& segments,
                                        const RecTrainOptions& o, std::mt19937_64& rng) {
    auto windows = crop_segments(segments, o.crop_length);
    if (windows.size() < 2) throw DataError("train_recognition: fewer than 2 training crops");
    auto pairs = sample_pairs(windows, o.pairs, o.positive_fraction, rng);
    const std::size_t batch = std::min(o.batch, pairs.size());
    Adam opt(AdamOptions{.learning_rate = o.learning_rate});
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();
    RecTrainResult r;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t step = 1; step <= o.max_steps; ++step) {
        std::vector<PairSample> mb;
        while (mb.size() < batch) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            mb.push_back(pairs[order[cursor++]]);
        }
        r.curve.push_back({step, rec_train_step(model, mb, opt)});
        r.steps = step;
        if (o.check_every > 0 && step % o.check_every == 0) {
            r.pool_mse = pairs_mse(model, pairs);
            if (r.pool_mse < o.target_mse) return r;
        }
        if (o.time_budget_s &&
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() > *o.time_budget_s) {
            break;
        }
    }
    r.pool_mse = pairs_mse(model, pairs);
    return r;
}

}  // namespace siamhar
