#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "siamhar/recognition.hpp"
#include "support.hpp"

using namespace siamhar;
using siamhar::test::random_tensor;

namespace {

Embedding emb(std::vector<double> v) {
    const std::size_t n = v.size();
    return Embedding{Tensor(Shape{n}, std::move(v)), ""};
}

BranchConfig tiny_branch(std::size_t channels = 2) {
    BranchConfig cfg;
    cfg.in_channels = channels;
    cfg.conv_channels = {4, 4, 4, 4};
    cfg.lstm_hidden = {3, 3};
    return cfg;
}

std::vector<LabeledWindow> corpus(std::size_t per_class, std::size_t classes, std::mt19937_64& rng) {
    std::vector<LabeledWindow> out;
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t i = 0; i < per_class; ++i)
            out.push_back({random_tensor({2, 60}, rng), static_cast<int>(c)});
    return out;
}

}  // namespace

TEST(Similarity, AnalyticValues) {
    EXPECT_EQ(similarity(emb({0.3, -1.0}), emb({0.3, -1.0})), 1.0);
    EXPECT_NEAR(similarity(emb({1, 0}), emb({0, 1})), std::exp(-2.0), 1e-15);
    EXPECT_NEAR(similarity(emb({1, 0}), emb({0, 1})), 0.13534, 1e-5);
    EXPECT_NEAR(similarity(emb({std::log(2.0), 0}), emb({0, 0})), 0.5, 1e-15);
}

TEST(Similarity, DimensionMismatch) { EXPECT_THROW(similarity(emb({1, 2}), emb({1, 2, 3})), DimensionError); }

TEST(Similarity, SymmetricSelfOneAndLogTriangle) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> a(6), b(6), c(6);
        for (int i = 0; i < 6; ++i) {
            a[i] = u(rng);
            b[i] = u(rng);
            c[i] = u(rng);
        }
        const Embedding ea = emb(a), eb = emb(b), ec = emb(c);
        EXPECT_EQ(similarity(ea, eb), similarity(eb, ea));
        EXPECT_EQ(similarity(ea, ea), 1.0);
        const double dab = -std::log(similarity(ea, eb)), dbc = -std::log(similarity(eb, ec)),
                     dac = -std::log(similarity(ea, ec));
        EXPECT_LE(dac, dab + dbc + 1e-12);
    }
}

TEST(SamplePairs, AllPositive) {
    std::mt19937_64 rng(2);
    auto pairs = sample_pairs(corpus(4, 3, rng), 40, 1.0, rng);
    ASSERT_EQ(pairs.size(), 40u);
    for (const auto& p : pairs) EXPECT_EQ(p.y, 1.0);
}

TEST(SamplePairs, ExactPositiveCountAndCorrectLabels) {
    std::mt19937_64 rng(3);
    auto windows = corpus(5, 3, rng);
    auto pairs = sample_pairs(windows, 100, 0.5, rng);
    std::size_t pos = 0;
    auto group_of = [&](const Tensor& w) {
        for (const auto& lw : windows)
            if (lw.window.same_storage(w)) return lw.group;
        return -99;
    };
    for (const auto& p : pairs) {
        pos += p.y == 1.0;
        const int ga = group_of(p.x_A), gb = group_of(p.x_B);
        EXPECT_EQ(p.y == 1.0, ga == gb);
        if (p.y == 1.0) {
            EXPECT_FALSE(p.x_A.same_storage(p.x_B));
        }
    }
    EXPECT_EQ(pos, 50u);
}

TEST(SamplePairs, DeterministicUnderSeed) {
    std::mt19937_64 c(4);
    auto windows = corpus(4, 2, c);
    std::mt19937_64 r1(9), r2(9);
    auto a = sample_pairs(windows, 30, 0.3, r1);
    auto b = sample_pairs(windows, 30, 0.3, r2);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_TRUE(a[i].x_A.same_storage(b[i].x_A));
        EXPECT_TRUE(a[i].x_B.same_storage(b[i].x_B));
        EXPECT_EQ(a[i].y, b[i].y);
    }
}

TEST(SamplePairs, SingleClassNeedsAllPositive) {
    std::mt19937_64 rng(5);
    auto windows = corpus(5, 1, rng);
    EXPECT_THROW(sample_pairs(windows, 10, 0.5, rng), DataError);
    EXPECT_NO_THROW(sample_pairs(windows, 10, 1.0, rng));
}

TEST(CropSegments, NonOverlappingCrops) {
    std::mt19937_64 rng(6);
    Segment s{0, 250, random_tensor({2, 250}, rng), 2};
    auto crops = crop_segments({s}, 96);
    ASSERT_EQ(crops.size(), 2u);
    EXPECT_EQ(crops[1].group, 2);
    EXPECT_EQ(crops[1].window[0], s.window[96]);
    EXPECT_EQ(crops[1].window[96 + 5], s.window[250 + 96 + 5]);
}

TEST(RecognitionModel, SimilarityBatchMatchesEmbeddings) {
    Rng rng(7);
    auto model = RecognitionModel::make(tiny_branch(), rng);
    Tensor a = random_tensor({3, 2, 60}, rng), b = random_tensor({3, 2, 60}, rng);
    Tensor d = model.similarity_batch(a, b, Mode::inference);
    for (std::size_t i = 0; i < 3; ++i) {
        Tensor wa(Shape{2, 60}), wb(Shape{2, 60});
        std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(i * 120), 120, wa.data().begin());
        std::copy_n(b.data().begin() + static_cast<std::ptrdiff_t>(i * 120), 120, wb.data().begin());
        EXPECT_NEAR(d[i], similarity(model.embed(wa), model.embed(wb)), 1e-12);
    }
}

TEST(RecTrainStep, IdenticalPositivePairsHaveZeroLoss) {
    Rng rng(8);
    auto model = RecognitionModel::make(tiny_branch(), rng);
    std::vector<PairSample> batch;
    for (int i = 0; i < 4; ++i) {
        Tensor w = random_tensor({2, 64}, rng);
        batch.push_back({w, w, 1.0});
    }
    Adam opt;
    EXPECT_EQ(rec_train_step(model, batch, opt), 0.0);
}

TEST(RecTrainStep, LossStaysInUnitIntervalAndFalls) {
    Rng rng(9);
    auto model = RecognitionModel::make(tiny_branch(), rng);
    std::mt19937_64 prng(10);
    auto windows = corpus(4, 2, prng);
    auto pairs = sample_pairs(windows, 8, 0.5, prng);
    Adam opt(AdamOptions{.learning_rate = 1e-2});
    const double first = rec_train_step(model, pairs, opt);
    double last = first;
    for (int i = 0; i < 40; ++i) {
        last = rec_train_step(model, pairs, opt);
        EXPECT_GE(last, 0.0);
        EXPECT_LE(last, 1.0);
    }
    EXPECT_LT(last, first);
}

TEST(RecTrainStep, GradientsMatchFiniteDifferences) {
    Rng rng(11);
    auto model = RecognitionModel::make(tiny_branch(), rng);
    Tensor a = random_tensor({2, 2, 60}, rng), b = random_tensor({2, 2, 60}, rng);
    Tensor y(Shape{2}, std::vector<double>{1.0, 0.0});
    auto params = model.parameters();
    std::uniform_real_distribution<double> offset(-0.3, 0.3);
    std::vector<Tensor> wrt;
    for (auto& p : params) {
        if (p.name.ends_with("bias") || p.name.ends_with("beta")) {
            for (double& v : p.tensor.data()) v = offset(rng);
        }
        if (!(p.name.starts_with("branch.conv") && p.name.ends_with(".bias"))) wrt.push_back(p.tensor);
    }
    auto result = siamhar::test::check_gradients(
        [&](Tape* tape) { return ops::mse(model.similarity_batch(a, b, Mode::train, tape), y, tape); }, wrt);
    EXPECT_LT(result.worst_relative_error, 1e-4) << result.worst_tensor;
}

TEST(EmbedSegments, EmptyDuplicateAndCount) {
    Rng rng(12);
    auto model = RecognitionModel::make(tiny_branch(), rng);
    EXPECT_TRUE(embed_segments(model, {}).empty());
    Tensor w = random_tensor({2, 70}, rng);
    auto dup = embed_segments(model, {w, w.clone()});
    for (std::size_t k = 0; k < dup[0].dim(); ++k) EXPECT_EQ(dup[0].vector[k], dup[1].vector[k]);
    std::vector<Tensor> many;
    std::uniform_int_distribution<std::size_t> len(58, 90);
    for (int i = 0; i < 100; ++i) many.push_back(random_tensor({2, len(rng)}, rng));
    auto out = embed_segments(model, many);
    ASSERT_EQ(out.size(), 100u);
    EXPECT_EQ(out[37].source_id, "37");
    for (const auto& e : out) EXPECT_EQ(e.dim(), 6u);
}

TEST(EmbeddingCsv, FullPrecisionRows) {
    std::ostringstream os;
    write_embeddings_csv(os, {Embedding{Tensor(Shape{2}, std::vector<double>{0.1, -2.0}), "s:0"}});
    EXPECT_EQ(os.str(), "segment_id,v_1,v_2\ns:0,0.10000000000000001,-2\n");
}
