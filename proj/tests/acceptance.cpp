// Acceptance run: prints one PASS/FAIL/SKIP line per criterion and exits
// nonzero if any criterion fails. Pass criterion numbers as arguments to run
// a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "siamhar/clustering.hpp"
#include "siamhar/datasets.hpp"
#include "siamhar/evaluation.hpp"
#include "siamhar/training.hpp"
#include "support.hpp"

using namespace siamhar;
using siamhar::test::check_gradients;
using siamhar::test::probe_loss;
using siamhar::test::random_tensor;

namespace {

struct Outcome {
    enum Status { pass, fail, skip } status;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// Keeps elementwise inputs away from the kinks of relu and abs.
Tensor away_from_zero(Tensor t) {
    for (double& v : t.data())
        if (std::abs(v) < 0.05) v += v < 0 ? -0.1 : 0.1;
    return t;
}

// ---------------------------------------------------------------------------
// 1. gradient suite

Outcome gradient_suite() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(101);
    std::map<std::string, double> worst;
    std::map<std::string, int> configs;
    auto record = [&](const std::string& name, const test::GradCheckResult& r) {
        worst[name] = std::max(worst[name], r.worst_relative_error);
        ++configs[name];
    };
    std::uniform_int_distribution<std::size_t> small(1, 4), mid(2, 6);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t b = small(rng), m = mid(rng), n = mid(rng), k = mid(rng);
        {
            Tensor a = random_tensor({m, k}, rng), c = random_tensor({k, n}, rng), w = random_tensor({m, n}, rng);
            record("matmul", check_gradients([&](Tape* t) { return probe_loss(ops::matmul(a, c, t), w, t); }, {a, c}));
        }
        {
            Tensor x = random_tensor({b, k}, rng), W = random_tensor({n, k}, rng), bias = random_tensor({n}, rng);
            Tensor w = random_tensor({b, n}, rng);
            record("linear",
                   check_gradients([&](Tape* t) { return probe_loss(ops::linear(x, W, &bias, t), w, t); }, {x, W, bias}));
        }
        {
            Tensor x = random_tensor({b, m, n}, rng), bias = random_tensor({n}, rng), w = random_tensor({b, m, n}, rng);
            record("add_bias",
                   check_gradients([&](Tape* t) { return probe_loss(ops::add_bias(x, bias, t), w, t); }, {x, bias}));
        }
        {
            Tensor x = away_from_zero(random_tensor({b, m}, rng)), w = random_tensor({b, m}, rng);
            using F = Tensor (*)(const Tensor&, Tape*);
            const std::pair<const char*, F> unaries[] = {{"neg", ops::neg},   {"sigmoid", ops::sigmoid},
                                                          {"tanh", ops::tanh}, {"relu", ops::relu},
                                                          {"exp", ops::exp},   {"abs", ops::abs}};
            for (auto [name, f] : unaries) {
                record(name, check_gradients([&](Tape* t) { return probe_loss(f(x, t), w, t); }, {x}));
            }
        }
        {
            Tensor x = random_tensor({b, m}, rng), y = random_tensor({b, m}, rng), w = random_tensor({b, m}, rng);
            record("add", check_gradients([&](Tape* t) { return probe_loss(ops::add(x, y, t), w, t); }, {x, y}));
            record("sub", check_gradients([&](Tape* t) { return probe_loss(ops::sub(x, y, t), w, t); }, {x, y}));
            record("mul", check_gradients([&](Tape* t) { return probe_loss(ops::mul(x, y, t), w, t); }, {x, y}));
            record("sum", check_gradients([&](Tape* t) { return ops::mul(ops::sum(x, t), ops::sum(x, t), t); }, {x}));
            record("mean", check_gradients([&](Tape* t) { return ops::mul(ops::mean(x, t), ops::sum(y, t), t); }, {x, y}));
            record("mse", check_gradients([&](Tape* t) { return ops::mse(x, y, t); }, {x, y}));
            Tensor wl = random_tensor({b}, rng);
            record("sum_last", check_gradients([&](Tape* t) { return probe_loss(ops::sum_last(x, t), wl, t); }, {x}));
            Tensor wr = random_tensor({m, b}, rng);
            record("reshape",
                   check_gradients([&](Tape* t) { return probe_loss(ops::reshape(x, {m, b}, t), wr, t); }, {x}));
        }
        {
            Tensor x = random_tensor({b, n, k}, rng), y = random_tensor({b, n, m}, rng);
            Tensor w = random_tensor({b, n, k}, rng), wc = random_tensor({b, n, k + m}, rng);
            Tensor ws = random_tensor({b, k}, rng);
            record("reverse_time",
                   check_gradients([&](Tape* t) { return probe_loss(ops::reverse_time(x, t), w, t); }, {x}));
            record("concat_last",
                   check_gradients([&](Tape* t) { return probe_loss(ops::concat_last(x, y, t), wc, t); }, {x, y}));
            const std::size_t step = static_cast<std::size_t>(rep) % n;
            record("take_timestep",
                   check_gradients([&](Tape* t) { return probe_loss(ops::take_timestep(x, step, t), ws, t); }, {x}));
            record("mean_time", check_gradients([&](Tape* t) { return probe_loss(ops::mean_time(x, t), ws, t); }, {x}));
        }
        {
            Tensor x = random_tensor({b + 1, m}, rng), y = random_tensor({b, m}, rng);
            Tensor w1 = random_tensor({b, m}, rng), w2 = random_tensor({2 * b + 1, m}, rng);
            record("slice_batch",
                   check_gradients([&](Tape* t) { return probe_loss(ops::slice_batch(x, 1, b + 1, t), w1, t); }, {x}));
            record("concat_batch",
                   check_gradients([&](Tape* t) { return probe_loss(ops::concat_batch({x, y}, t), w2, t); }, {x, y}));
        }
        {
            const std::size_t cin = small(rng), cout = small(rng), width = 1 + rep % 3, dil = 1 + rep % 4;
            const std::size_t len = (width - 1) * dil + 1 + mid(rng);
            DilatedConvParams p;
            p.kernels = random_tensor({cout, cin, width}, rng);
            p.bias = random_tensor({cout}, rng);
            p.dilation = dil;
            p.stride = 1 + rep % 2;
            Tensor x = random_tensor({b, cin, len}, rng);
            Tensor w = random_tensor({b, cout, conv_output_length(len, p.receptive_width(), p.stride)}, rng);
            record("conv1d_dilated", check_gradients([&](Tape* t) { return probe_loss(conv1d_dilated(x, p, t), w, t); },
                                                     {x, p.kernels, p.bias}));
        }
        {
            const std::size_t pool = 1 + rep % 3;
            Tensor x = random_tensor({b, m, pool * k + (pool > 1 ? static_cast<std::size_t>(rep % 2) : 0)}, rng), w = random_tensor({b, m, k}, rng);
            record("max_pool1d", check_gradients([&](Tape* t) { return probe_loss(max_pool1d(x, pool, t), w, t); }, {x}));
        }
        for (Mode mode : {Mode::train, Mode::inference}) {
            const std::size_t T = 1 + static_cast<std::size_t>(rep) % 4;
            Tensor x = random_tensor({b + 2, m, T}, rng), w = random_tensor({b + 2, m, T}, rng);
            auto p = BatchNormParams::make(m);
            p.gamma = random_tensor({m}, rng);
            p.beta = random_tensor({m}, rng);
            p.running_mean = random_tensor({m}, rng);
            p.running_var = random_tensor({m}, rng, 0.5, 2.0);
            record(mode == Mode::train ? "batch_norm(train)" : "batch_norm(inference)",
                   check_gradients([&](Tape* t) { return probe_loss(batch_norm(x, p, mode, t), w, t); },
                                   {x, p.gamma, p.beta}));
        }
        {
            const std::size_t in = small(rng), hid = small(rng), T = 1 + rep % 5;
            Rng prng(1000 + rep);
            auto p = LSTMCellParams::make(in, hid, prng);
            for (Tensor* bt : {&p.b_i, &p.b_f, &p.b_c, &p.b_o})
                for (double& v : bt->data()) v = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
            std::vector<Tensor> params;
            for (Tensor* q : p.all()) params.push_back(*q);
            Tensor x = random_tensor({b, in}, rng), h = random_tensor({b, hid}, rng), c = random_tensor({b, hid}, rng);
            Tensor wh = random_tensor({b, hid}, rng), wc = random_tensor({b, hid}, rng);
            auto with = [&](std::vector<Tensor> extra) {
                extra.insert(extra.end(), params.begin(), params.end());
                return extra;
            };
            record("lstm_step", check_gradients(
                                    [&](Tape* t) {
                                        auto s = lstm_step(x, h, c, p, t);
                                        return ops::add(probe_loss(s.h, wh, t), probe_loss(s.c, wc, t), t);
                                    },
                                    with({x, h, c})));
            Tensor seq = random_tensor({b, T, in}, rng), ws = random_tensor({b, T, hid}, rng);
            record("lstm_sequence",
                   check_gradients([&](Tape* t) { return probe_loss(lstm_sequence(seq, p, t), ws, t); }, with({seq})));
            auto q = LSTMCellParams::make(hid, hid, prng);
            Tensor seq_h = random_tensor({b, T, hid}, rng);
            record("residual_lstm_stack",
                   check_gradients([&](Tape* t) { return probe_loss(residual_lstm_stack(seq_h, {q, q}, t), ws, t); },
                                   {seq_h, q.W_i, q.U_f, q.b_c, q.W_o}));
            auto bwd = LSTMCellParams::make(in, hid, prng);
            Tensor wb = random_tensor({b, T, 2 * hid}, rng);
            record("blstm_sequence",
                   check_gradients([&](Tape* t) { return probe_loss(blstm_sequence(seq, p, bwd, t), wb, t); },
                                   {seq, p.W_c, p.U_o, bwd.W_i, bwd.U_f, bwd.b_o}));
        }
        for (Mode mode : {Mode::train, Mode::inference}) {
            Rng prng(2000 + rep);
            const Activation act = rep % 3 == 0 ? Activation::none : rep % 3 == 1 ? Activation::relu : Activation::sigmoid;
            auto p = FCParams::make(k, n, rep % 2 == 0, act, prng);
            p.bias = random_tensor({n}, rng, -0.3, 0.3);
            if (p.bn) p.bn->beta = random_tensor({n}, rng, -0.3, 0.3);
            Tensor x = random_tensor({b + 2, k}, rng), w = random_tensor({b + 2, n}, rng);
            std::vector<Tensor> wrt{x, p.weight};
            // Under train-mode batch norm the pre-BN bias cancels exactly.
            if (!(p.bn && mode == Mode::train)) wrt.push_back(p.bias);
            if (p.bn) {
                wrt.push_back(p.bn->gamma);
                wrt.push_back(p.bn->beta);
            }
            record("fc_forward", check_gradients([&](Tape* t) { return probe_loss(fc_forward(x, p, mode, t), w, t); }, wrt));
        }
    }
    std::string bad;
    double max_err = 0;
    int min_configs = 1 << 30;
    for (const auto& [name, e] : worst) {
        max_err = std::max(max_err, e);
        min_configs = std::min(min_configs, configs[name]);
        if (!(e < 1e-4)) bad += " " + name + "=" + fmt("%.2e", e);
    }
    const double secs = seconds_since(t0);
    const bool ok = bad.empty() && min_configs >= 20 && secs < 120;
    return {ok ? Outcome::pass : Outcome::fail,
            std::to_string(worst.size()) + " ops/layers, >=" + std::to_string(min_configs) +
                " configs each, worst rel err " + fmt("%.2e", max_err) + ", " + fmt("%.1f", secs) + "s" +
                (bad.empty() ? "" : ", failing:" + bad)};
}

// ---------------------------------------------------------------------------
// 2. LSTM oracle

Outcome lstm_oracle() {
    std::mt19937_64 rng(202);
    double worst = 0;
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t in = 1 + rep % 5, hid = 1 + (rep / 5) % 6, T = 1 + rep % 7;
        Rng prng(3000 + rep);
        auto p = LSTMCellParams::make(in, hid, prng);
        for (Tensor* t : p.all())
            for (double& v : t->data()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
        Tensor x = random_tensor({1, in}, rng), h = random_tensor({1, hid}, rng), c = random_tensor({1, hid}, rng);
        auto got = lstm_step(x, h, c, p);
        auto [hn, cn] = oracle::lstm_step({x.data().begin(), x.data().end()}, {h.data().begin(), h.data().end()},
                                          {c.data().begin(), c.data().end()}, p);
        for (std::size_t j = 0; j < hid; ++j) {
            worst = std::max({worst, std::abs(got.h[j] - hn[j]), std::abs(got.c[j] - cn[j])});
        }
        Tensor seq = random_tensor({1, T, in}, rng);
        Tensor out = lstm_sequence(seq, p);
        std::vector<oracle::Vec> rows;
        for (std::size_t t = 0; t < T; ++t) rows.emplace_back(seq.data().begin() + t * in, seq.data().begin() + (t + 1) * in);
        auto want = oracle::lstm_sequence(rows, p);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < hid; ++j) worst = std::max(worst, std::abs(out[t * hid + j] - want[t][j]));
    }
    return {worst <= 1e-12 ? Outcome::pass : Outcome::fail, "100 cases, max abs diff " + fmt("%.2e", worst)};
}

// ---------------------------------------------------------------------------
// 3. clustering oracle

Outcome clustering_oracle() {
    std::mt19937_64 rng(303);
    int identical = 0, invariant = 0;
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = 2 + static_cast<std::size_t>(rep) % 7;
        DistanceMatrix dm(n);
        std::vector<std::vector<double>> sq(n, std::vector<double>(n, 0.0));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double d = rep % 2 ? std::uniform_real_distribution<double>(0, 10)(rng)
                                         : static_cast<double>(std::uniform_int_distribution<int>(0, 3)(rng));
                dm.set(i, j, d);
                sq[i][j] = sq[j][i] = d;
            }
        auto got = single_linkage_merges(dm);
        auto want = oracle::naive_single_linkage(sq);
        bool same = got.size() == want.size();
        for (std::size_t m = 0; same && m < got.size(); ++m) {
            same = got[m].a == want[m].a && got[m].b == want[m].b && got[m].distance == want[m].distance;
        }
        identical += same;
    }
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 3 + static_cast<std::size_t>(rep) % 10;
        DistanceMatrix dm(n), tr(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double d = std::uniform_real_distribution<double>(0, 4)(rng);
                dm.set(i, j, d);
                tr.set(i, j, std::exp(d) + d * d * d);
            }
        bool same = true;
        for (std::size_t k = 1; k <= n; ++k) {
            same &= single_linkage(dm, StopRule::clusters(k)).labels == single_linkage(tr, StopRule::clusters(k)).labels;
        }
        invariant += same;
    }
    return {identical == 200 && invariant == 50 ? Outcome::pass : Outcome::fail,
            std::to_string(identical) + "/200 merge sequences identical, " + std::to_string(invariant) +
                "/50 monotone-transform invariant"};
}

// ---------------------------------------------------------------------------
// 4. metric suite

std::vector<std::string> dash(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, '-')) out.push_back(tok);
    return out;
}

Outcome metric_suite() {
    const bool f1 = weighted_f1({0, 1, 1, 1}, {0, 0, 1, 1}) == 11.0 / 15.0;
    const bool m21 = many_to_one_accuracy({1, 1, 1, 2, 2}, {0, 0, 1, 1, 1}) == 0.8;
    struct Row {
        const char* truth;
        const char* predicted;
        Assessment expected;
    };
    const Row rows[] = {
        {"A-A-A", "A-A-A", Assessment::correct},   {"A-A-A", "A-B-A", Assessment::incorrect},
        {"A-A-A", "A-T-A", Assessment::incorrect}, {"A-A-A", "A-U-A", Assessment::incorrect},
        {"A-B", "A-B", Assessment::correct},       {"A-B", "A-C-B", Assessment::incorrect},
        {"A-B", "A-T-B", Assessment::incorrect},   {"A-B", "A-U-B", Assessment::incorrect},
        {"A-T-B", "A-B", Assessment::correct},     {"A-T-B", "A-C-B", Assessment::incorrect},
        {"A-T-B", "A-T-B", Assessment::correct},   {"A-T-B", "A-U-B", Assessment::correct},
    };
    int table = 0;
    for (const auto& r : rows) table += assess_segmentation(dash(r.truth), dash(r.predicted)) == r.expected;
    return {f1 && m21 && table == 12 ? Outcome::pass : Outcome::fail,
            std::string("weighted_f1 11/15 ") + (f1 ? "exact" : "WRONG") + ", many-to-one 0.8 " +
                (m21 ? "exact" : "WRONG") + ", assessment table " + std::to_string(table) + "/12 rows"};
}

// ---------------------------------------------------------------------------
// 5. synthetic recognition overfit

BranchConfig paper_branch(std::size_t channels) {
    BranchConfig b;
    b.in_channels = channels;
    return b;
}

Outcome recognition_overfit() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2024);
    SynthCorpusSpec corpus;
    corpus.streams = 4;
    corpus.segments_per_stream = 6;
    corpus.min_segment = 100;
    corpus.max_segment = 200;
    std::vector<Segment> train;
    for (const auto& s : synth_corpus(corpus, rng, "train")) {
        auto r = truth_segments(s, 64);
        train.insert(train.end(), r.segments.begin(), r.segments.end());
    }
    Rng mrng(7);
    auto model = RecognitionModel::make(paper_branch(3), mrng);
    RecTrainOptions o;
    o.max_steps = 1000;
    o.pairs = 200;
    o.batch = 16;
    o.crop_length = 64;
    o.learning_rate = 1e-3;
    auto tr = train_recognition(model, train, o, rng);

    // Held out: 20 fresh single-activity segments per class, lengths 64..160.
    std::vector<Tensor> held;
    std::vector<int> truth;
    std::uniform_int_distribution<std::size_t> len(64, 160);
    for (std::size_t c = 0; c < 3; ++c)
        for (int i = 0; i < 20; ++i) {
            SynthSpec spec;
            spec.channels = 3;
            spec.activities = standard_synth_activities();
            spec.noise_sigma = corpus.noise_sigma;
            spec.segments = {{c, len(rng) + spec.ramp}};
            held.push_back(synth_stream(spec, rng).frames);
            truth.push_back(static_cast<int>(c));
        }
    auto emb = embed_segments(model, held);
    auto clusters = single_linkage(pairwise_distances(emb), StopRule::clusters(3));
    const double acc = many_to_one_accuracy(clusters.labels, truth);
    const double secs = seconds_since(t0);
    const bool ok = tr.steps <= 1000 && tr.pool_mse < 0.05 && acc >= 0.95 && secs < 600;
    return {ok ? Outcome::pass : Outcome::fail,
            std::to_string(tr.steps) + " steps, training MSE " + fmt("%.4f", tr.pool_mse) +
                ", held-out many-to-one " + fmt("%.3f", acc) + " on 60 segments, " + fmt("%.1f", secs) + "s"};
}

// ---------------------------------------------------------------------------
// 6. synthetic segmentation

Outcome synthetic_segmentation() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(99);
    SynthCorpusSpec corpus;  // 4 segments of 200..300 frames per stream
    corpus.streams = 40;
    auto train = synth_corpus(corpus, rng, "train");
    corpus.streams = 10;
    auto test = synth_corpus(corpus, rng, "test");

    BranchConfig b = paper_branch(3);
    b.conv_channels = {32, 32, 32, 32};
    b.lstm_hidden = {32, 32};
    SegmentationConfig cfg;
    cfg.head_hidden = {64, 32};
    Rng mrng(5);
    auto model = SegmentationModel::make(b, cfg, mrng);
    SegTrainOptions o;
    o.steps = 4000;
    o.batch = 32;
    o.learning_rate = 2e-3;
    train_segmentation(model, train, o, rng);

    int good = 0;
    std::size_t missed = 0, far = 0;
    for (const auto& s : test) {
        auto regions = detect_boundaries(model, s);
        bool ok = true;
        for (double c : s.boundary_centers) {
            bool hit = false;
            for (const auto& r : regions) hit |= static_cast<double>(r.start_frame) <= c && c <= static_cast<double>(r.end_frame);
            missed += !hit;
            ok &= hit;
        }
        for (const auto& r : regions) {
            const double mid = 0.5 * static_cast<double>(r.start_frame + r.end_frame);
            if (nearest_boundary_distance(s.boundary_centers, mid) > 2 * cfg.gg_alpha) {
                ++far;
                ok = false;
            }
        }
        good += ok;
    }
    const double secs = seconds_since(t0);
    return {good >= 9 && secs < 600 ? Outcome::pass : Outcome::fail,
            std::to_string(good) + "/10 streams clean (" + std::to_string(missed) + " missed centers, " +
                std::to_string(far) + " far detections), " + fmt("%.1f", secs) + "s"};
}

// ---------------------------------------------------------------------------
// 7. similarity contract

Outcome similarity_contract() {
    std::mt19937_64 rng(707);
    std::uniform_real_distribution<double> u(-2, 2);
    auto draw = [&] {
        Tensor v(Shape{16});
        for (double& x : v.data()) x = u(rng);
        return Embedding{v, ""};
    };
    bool self = true, sym = true;
    double worst_slack = -1e300;
    for (int rep = 0; rep < 1000; ++rep) {
        auto a = draw(), b = draw(), c = draw();
        self &= similarity(a, a) == 1.0;
        const double ab = similarity(a, b), ba = similarity(b, a);
        sym &= std::memcmp(&ab, &ba, sizeof ab) == 0;
        const double dab = -std::log(ab), dbc = -std::log(similarity(b, c)), dac = -std::log(similarity(a, c));
        worst_slack = std::max(worst_slack, dac - dab - dbc);
    }
    return {self && sym && worst_slack <= 1e-9 ? Outcome::pass : Outcome::fail,
            std::string("D(a,a)=1 ") + (self ? "exact" : "VIOLATED") + ", symmetry " + (sym ? "bitwise" : "VIOLATED") +
                ", max triangle excess " + fmt("%.2e", worst_slack) + " over 1000 triples"};
}

// ---------------------------------------------------------------------------
// 8. determinism of the full synthetic pipeline

std::pair<std::string, std::string> tiny_pipeline(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    SynthCorpusSpec corpus;
    corpus.streams = 6;
    auto train = synth_corpus(corpus, rng, "train");
    corpus.streams = 3;
    auto test = synth_corpus(corpus, rng, "test");
    auto stats = compute_norm_stats(train);
    for (auto& s : train) s = normalize(s, stats);
    for (auto& s : test) s = normalize(s, stats);

    BranchConfig b = paper_branch(3);
    b.conv_channels = {8, 8, 8, 8};
    b.lstm_hidden = {8, 8};
    SegmentationConfig cfg;
    cfg.head_hidden = {16, 8};
    Rng mrng(seed + 1);
    auto seg = SegmentationModel::make(b, cfg, mrng);
    auto rec = RecognitionModel::make(b, mrng);
    SegTrainOptions so;
    so.steps = 60;
    so.batch = 8;
    train_segmentation(seg, train, so, rng);
    std::vector<Segment> segs;
    for (const auto& s : train) {
        auto r = truth_segments(s, rec.min_length());
        segs.insert(segs.end(), r.segments.begin(), r.segments.end());
    }
    RecTrainOptions ro;
    ro.max_steps = 40;
    ro.pairs = 64;
    ro.batch = 8;
    train_recognition(rec, segs, ro, rng);

    EvaluationOptions eo;
    eo.k = 3;
    auto report = evaluate_pipeline(test, &seg, rec, eo);
    std::ostringstream e, a;
    write_embeddings_csv(e, report.embeddings);
    std::vector<std::string> ids;
    for (const auto& x : report.embeddings) ids.push_back(x.source_id);
    write_assignments_csv(a, ids, report.segment_clusters);
    return {e.str(), a.str()};
}

Outcome determinism() {
    auto first = tiny_pipeline(4242), second = tiny_pipeline(4242);
    const bool ok = first == second && !first.first.empty();
    std::size_t rows = 0;
    for (char ch : first.second) rows += ch == '\n';
    return {ok ? Outcome::pass : Outcome::fail,
            std::string("embedding CSV ") + (first.first == second.first ? "identical" : "DIFFERS") +
                ", assignment CSV " + (first.second == second.second ? "identical" : "DIFFERS") + " (" +
                std::to_string(rows - 1) + " segments)"};
}

// ---------------------------------------------------------------------------
// 9. real-data smoke on WISDM

Outcome wisdm_smoke() {
    const char* path = std::getenv("WISDM_PATH");
    if (path == nullptr || *path == '\0') return {Outcome::skip, "WISDM_PATH not set"};
    const auto t0 = std::chrono::steady_clock::now();
    try {
        auto streams = load_wisdm(path);
        std::vector<int> subjects;
        for (const auto& s : streams) subjects.push_back(s.subject);
        auto splits = assign_splits("wisdm", subjects, 1);
        std::vector<SensorStream> train, test;
        for (const auto& s : streams) (splits.at(s.subject) == Split::train ? train : test).push_back(s);
        const auto stats = compute_norm_stats(train);
        auto prep = [&](std::vector<SensorStream>& v, std::size_t keep, std::size_t max_len) {
            std::vector<SensorStream> out;
            for (auto& s : v) {
                if (s.length() < 400) continue;
                SensorStream n = normalize(s, stats);
                if (n.length() > max_len) {
                    n.frames = n.window(0, max_len);
                    n.labels.resize(max_len);
                    n.boundary_centers = label_boundary_centers(n.labels);
                }
                out.push_back(std::move(n));
                if (out.size() == keep) break;
            }
            v = std::move(out);
        };
        prep(train, 40, 20000);
        prep(test, 3, 3000);
        if (train.empty() || test.empty()) return {Outcome::fail, "no usable WISDM streams"};

        BranchConfig b = paper_branch(3);
        b.conv_channels = {32, 32, 32, 32};
        b.lstm_hidden = {32, 32};
        SegmentationConfig cfg;
        cfg.head_hidden = {64, 32};
        Rng mrng(9);
        std::mt19937_64 rng(9);
        auto seg = SegmentationModel::make(b, cfg, mrng);
        auto rec = RecognitionModel::make(b, mrng);
        SegTrainOptions so;
        so.time_budget_s = 100;
        so.steps = 1000000;
        train_segmentation(seg, train, so, rng);
        std::vector<Segment> segs;
        for (const auto& s : train) {
            auto r = truth_segments(s, 64);
            segs.insert(segs.end(), r.segments.begin(), r.segments.end());
        }
        RecTrainOptions ro;
        ro.time_budget_s = 100;
        ro.max_steps = 1000000;
        ro.pairs = 2000;
        ro.check_every = 0;
        train_recognition(rec, segs, ro, rng);
        EvaluationOptions eo;
        eo.k = 6;
        auto report = evaluate_pipeline(test, &seg, rec, eo);
        std::ostringstream os;
        write_report(os, report);
        std::size_t keys = 0;
        for (char ch : os.str()) keys += ch == '\n';
        const double secs = seconds_since(t0);
        return {keys == 10 && secs < 330 ? Outcome::pass : Outcome::fail,
                std::to_string(streams.size()) + " streams loaded, report with " + std::to_string(keys) +
                    " keys, accuracy " + fmt("%.3f", report.accuracy) + ", " + fmt("%.1f", secs) + "s"};
    } catch (const std::exception& e) {
        return {Outcome::fail, e.what()};
    }
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"gradient suite", gradient_suite},
        {"LSTM oracle", lstm_oracle},
        {"clustering oracle", clustering_oracle},
        {"metric suite", metric_suite},
        {"synthetic recognition overfit", recognition_overfit},
        {"synthetic segmentation", synthetic_segmentation},
        {"similarity contract", similarity_contract},
        {"determinism", determinism},
        {"WISDM smoke", wisdm_smoke},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {Outcome::fail, std::string("exception: ") + e.what()};
        }
        const char* tag = o.status == Outcome::pass ? "PASS" : o.status == Outcome::fail ? "FAIL" : "SKIP";
        std::printf("[%s] %d. %s: %s\n", tag, id, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
        failures += o.status == Outcome::fail;
    }
    return failures == 0 ? 0 : 1;
}
