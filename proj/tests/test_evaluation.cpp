#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "siamhar/evaluation.hpp"

using namespace siamhar;

TEST(ManyToOne, PerfectClustersScoreOne) {
    EXPECT_EQ(many_to_one_accuracy({2, 2, 0, 1, 1}, {0, 0, 1, 2, 2}), 1.0);
}

TEST(ManyToOne, MajorityMappingHandExample) {
    // c1 = [A, A, B], c2 = [B, B]
    EXPECT_DOUBLE_EQ(many_to_one_accuracy({1, 1, 1, 2, 2}, {0, 0, 1, 1, 1}), 0.8);
}

TEST(ManyToOne, SingleClusterGivesLargestClassFrequency) {
    EXPECT_DOUBLE_EQ(many_to_one_accuracy({0, 0, 0, 0, 0, 0}, {0, 1, 1, 2, 1, 0}), 0.5);
}

TEST(ManyToOne, TieGoesToSmallestClassId) {
    auto m = majority_mapping({0, 0, 0, 0}, {3, 1, 3, 1});
    EXPECT_EQ(m.at(0), 1);
}

TEST(ManyToOne, UnassignedCountsAsWrong) {
    EXPECT_DOUBLE_EQ(many_to_one_accuracy({0, 0, kUnassigned, 1}, {0, 0, 0, 1}), 0.75);
}

TEST(ManyToOne, LengthMismatch) { EXPECT_THROW(many_to_one_accuracy({0, 1}, {0}), DimensionError); }

TEST(ManyToOne, PermutationInvarianceAndRefinement) {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> cls(0, 3), clu(0, 5);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<int> truth(80), clusters(80);
        for (auto& t : truth) t = cls(rng);
        for (auto& c : clusters) c = clu(rng);
        const double acc = many_to_one_accuracy(clusters, truth);
        std::vector<int> perm{0, 1, 2, 3, 4, 5};
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<int> permuted;
        for (int c : clusters) permuted.push_back(perm[static_cast<std::size_t>(c)]);
        EXPECT_DOUBLE_EQ(many_to_one_accuracy(permuted, truth), acc);
        // Split every cluster by element parity.
        std::vector<int> split;
        for (std::size_t i = 0; i < clusters.size(); ++i) split.push_back(clusters[i] * 2 + static_cast<int>(i % 2));
        EXPECT_GE(many_to_one_accuracy(split, truth), acc);
        EXPECT_GE(acc, 0.0);
        EXPECT_LE(acc, 1.0);
    }
}

TEST(WeightedF1, PerfectPrediction) { EXPECT_DOUBLE_EQ(weighted_f1({0, 1, 2, 1}, {0, 1, 2, 1}), 1.0); }

TEST(WeightedF1, BinaryHandComputation) {
    // truth [A,A,B,B], pred [A,B,B,B]
    EXPECT_EQ(weighted_f1({0, 1, 1, 1}, {0, 0, 1, 1}), 11.0 / 15.0);
}

TEST(WeightedF1, SingleClassEqualsPlainF1) {
    // One true class; predictions partly unassigned.
    const std::vector<int> truth{0, 0, 0, 0}, pred{0, 0, kUnassigned, 0};
    const double p = 1.0, r = 0.75;
    EXPECT_NEAR(weighted_f1(pred, truth), 2 * p * r / (p + r), 1e-15);
}

TEST(WeightedF1, AbsentClassAndBounds) {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> cls(0, 4);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<int> truth(40), pred(40);
        for (auto& t : truth) t = cls(rng);
        for (auto& p : pred) p = cls(rng);
        const double f = weighted_f1(pred, truth);
        EXPECT_GE(f, 0.0);
        EXPECT_LE(f, 1.0 + 1e-12);
    }
    // A class that only appears in predictions carries N_i = 0.
    EXPECT_NEAR(weighted_f1({0, 7}, {0, 0}), 2.0 * (1.0 * 0.5) / 1.5, 1e-15);
    EXPECT_THROW(weighted_f1({0}, {0, 1}), DimensionError);
}

TEST(ConfusionCsv, Layout) {
    std::ostringstream os;
    write_confusion_csv(os, {0, 1, 1, kUnassigned}, {0, 0, 1, 1}, {"walk", "sit"});
    EXPECT_EQ(os.str(), "true\\predicted,walk,sit,unassigned\nwalk,1,1,0\nsit,0,1,1\n");
}

namespace {

SensorStream labeled_stream(std::vector<int> labels, std::size_t channels = 1) {
    SensorStream s;
    s.id = "s";
    s.frames = Tensor(Shape{channels, labels.size()});
    s.labels = std::move(labels);
    s.legend = {"A", "B", "C"};
    s.boundary_centers = label_boundary_centers(s.labels);
    return s;
}

}  // namespace

TEST(ScoreAssignments, TruthBoundariesAndPerfectClusteringScoreOne) {
    std::vector<int> labels;
    for (int c : {0, 1, 2, 0}) {
        labels.insert(labels.end(), 20, c);
        labels.insert(labels.end(), 3, kTransition);
    }
    std::vector<SensorStream> streams{labeled_stream(labels)};
    EvaluationReport r;
    r.streams = 1;
    StreamSegmentation ss;
    ss.regions = truth_regions(streams[0]);
    ss.segments = slice_segments(streams[0], ss.regions, 1).segments;
    ASSERT_EQ(ss.segments.size(), 4u);
    r.per_stream.push_back(ss);
    r.segment_clusters = {5, 3, 4, 5};
    score_assignments(streams, r);
    EXPECT_EQ(r.accuracy, 1.0);
    EXPECT_EQ(r.weighted_f1, 1.0);
    EXPECT_EQ(r.assessment_correct, 1u);
    EXPECT_EQ(r.frames_scored, 80u);
}

TEST(ScoreAssignments, WrongClusterFailsAssessment) {
    std::vector<int> labels(30, 0);
    labels.insert(labels.end(), 4, kTransition);
    labels.insert(labels.end(), 30, 1);
    labels.insert(labels.end(), 4, kTransition);
    labels.insert(labels.end(), 30, 0);
    std::vector<SensorStream> streams{labeled_stream(labels)};
    EvaluationReport r;
    StreamSegmentation ss;
    ss.regions = truth_regions(streams[0]);
    ss.segments = slice_segments(streams[0], ss.regions, 1).segments;
    r.per_stream.push_back(ss);
    r.segment_clusters = {0, 0, 0};
    score_assignments(streams, r);
    EXPECT_NEAR(r.accuracy, 60.0 / 90.0, 1e-15);
    EXPECT_EQ(r.assessment_correct, 0u);
}

TEST(Report, StableSchema) {
    EvaluationReport a, b;
    b.accuracy = 0.5;
    b.segments = 9;
    std::ostringstream oa, ob;
    write_report(oa, a);
    write_report(ob, b);
    auto keys = [](const std::string& s) {
        std::vector<std::string> k;
        std::istringstream is(s);
        std::string line;
        while (std::getline(is, line)) k.push_back(line.substr(0, line.find(':')));
        return k;
    };
    EXPECT_EQ(keys(oa.str()), keys(ob.str()));
    EXPECT_EQ(keys(oa.str()).size(), 10u);
    EXPECT_NE(ob.str().find("accuracy: 0.500000\n"), std::string::npos);
}
