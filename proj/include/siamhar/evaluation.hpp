#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "clustering.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "recognition.hpp"
#include "segmentation.hpp"

namespace siamhar {

inline constexpr int kUnassigned = -1;

/// Majority true class per cluster; ties go to the smallest class id.
inline std::map<int, int> majority_mapping(const std::vector<int>& cluster_labels, const std::vector<int>& true_labels) {
    if (cluster_labels.size() != true_labels.size()) {
        throw DimensionError("many_to_one: " + std::to_string(cluster_labels.size()) + " cluster labels for " +
                             std::to_string(true_labels.size()) + " true labels");
    }
    std::map<int, std::map<int, std::size_t>> counts;
    for (std::size_t i = 0; i < cluster_labels.size(); ++i) {
        if (cluster_labels[i] != kUnassigned) ++counts[cluster_labels[i]][true_labels[i]];
    }
    std::map<int, int> mapping;
    for (const auto& [cluster, per_class] : counts) {
        int best = 0;
        std::size_t best_n = 0;
        for (const auto& [cls, n] : per_class) {
            if (n > best_n) {
                best = cls;
                best_n = n;
            }
        }
        mapping[cluster] = best;
    }
    return mapping;
}

inline std::vector<int> apply_mapping(const std::vector<int>& cluster_labels, const std::map<int, int>& mapping) {
    std::vector<int> out;
    out.reserve(cluster_labels.size());
    for (int c : cluster_labels) {
        auto it = mapping.find(c);
        out.push_back(it == mapping.end() ? kUnassigned : it->second);
    }
    return out;
}

/// Relabel each cluster with its majority class and score plain accuracy.
/// Elements with cluster label kUnassigned always count as wrong.
inline double many_to_one_accuracy(const std::vector<int>& cluster_labels, const std::vector<int>& true_labels) {
    if (true_labels.empty()) throw ContractError("many_to_one_accuracy: no elements");
    const std::vector<int> pred = apply_mapping(cluster_labels, majority_mapping(cluster_labels, true_labels));
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] != kUnassigned && pred[i] == true_labels[i];
    return static_cast<double>(hit) / static_cast<double>(pred.size());
}

struct ClassCounts {
    std::size_t tp = 0, fp = 0, fn = 0, n = 0;
};

struct ConfusionCounts {
    std::map<int, ClassCounts> per_class;
    std::map<std::pair<int, int>, std::size_t> matrix;  // (true, predicted) -> count
    std::size_t total = 0;

    static ConfusionCounts from(const std::vector<int>& pred, const std::vector<int>& truth) {
        if (pred.size() != truth.size()) {
            throw DimensionError("confusion: " + std::to_string(pred.size()) + " predictions for " +
                                 std::to_string(truth.size()) + " labels");
        }
        ConfusionCounts c;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            ++c.total;
            ++c.matrix[{truth[i], pred[i]}];
            ++c.per_class[truth[i]].n;
            if (pred[i] == truth[i]) {
                ++c.per_class[truth[i]].tp;
            } else {
                ++c.per_class[truth[i]].fn;
                if (pred[i] != kUnassigned) ++c.per_class[pred[i]].fp;
            }
        }
        return c;
    }
};

/// 2 Σ_i (N_i/N) · P_i R_i / (P_i + R_i); a class with P_i + R_i = 0 adds 0.
/// Accumulated in extended precision so small hand-checkable cases round to
/// the nearest double.
inline double weighted_f1(const std::vector<int>& pred_labels, const std::vector<int>& true_labels) {
    const ConfusionCounts c = ConfusionCounts::from(pred_labels, true_labels);
    if (c.total == 0) return 0.0;
    long double f = 0.0L;
    for (const auto& [cls, k] : c.per_class) {
        if (k.n == 0) continue;
        const long double p = k.tp + k.fp == 0 ? 0.0L : static_cast<long double>(k.tp) / static_cast<long double>(k.tp + k.fp);
        const long double r = static_cast<long double>(k.tp) / static_cast<long double>(k.tp + k.fn);
        if (p + r == 0) continue;
        f += static_cast<long double>(k.n) / static_cast<long double>(c.total) * p * r / (p + r);
    }
    return static_cast<double>(2.0L * f);
}

/// Rows are true classes, columns predicted classes; the last column counts
/// frames that received no cluster.
inline void write_confusion_csv(std::ostream& os, const std::vector<int>& pred, const std::vector<int>& truth,
                                const std::vector<std::string>& legend) {
    const ConfusionCounts c = ConfusionCounts::from(pred, truth);
    std::set<int> classes;
    for (int t : truth) classes.insert(t);
    for (int p : pred)
        if (p != kUnassigned) classes.insert(p);
    auto name = [&](int cls) {
        return cls >= 0 && static_cast<std::size_t>(cls) < legend.size() ? legend[static_cast<std::size_t>(cls)]
                                                                          : std::to_string(cls);
    };
    os << "true\\predicted";
    for (int p : classes) os << ',' << name(p);
    os << ",unassigned\n";
    for (int t : classes) {
        os << name(t);
        for (int p : classes) {
            auto it = c.matrix.find({t, p});
            os << ',' << (it == c.matrix.end() ? 0 : it->second);
        }
        auto it = c.matrix.find({t, kUnassigned});
        os << ',' << (it == c.matrix.end() ? 0 : it->second) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Pipeline

/// Segments of one stream with the cluster each one was assigned.
struct StreamSegmentation {
    std::vector<BoundaryRegion> regions;
    std::vector<Segment> segments;
    std::size_t dropped = 0;
};

struct FrameLabels {
    std::vector<int> cluster;  // per scored frame
    std::vector<int> truth;
};

/// Frame-level cluster labels for frames whose truth is an activity. Frames
/// in boundary regions or dropped segments stay kUnassigned.
inline FrameLabels frame_labels(const std::vector<SensorStream>& streams,
                                const std::vector<StreamSegmentation>& segs, const std::vector<int>& segment_clusters) {
    FrameLabels out;
    std::size_t next = 0;
    for (std::size_t s = 0; s < streams.size(); ++s) {
        std::vector<int> per_frame(streams[s].length(), kUnassigned);
        for (const auto& seg : segs[s].segments) {
            if (next >= segment_clusters.size()) throw DimensionError("frame_labels: too few segment clusters");
            for (std::size_t t = seg.begin; t < seg.end; ++t) per_frame[t] = segment_clusters[next];
            ++next;
        }
        for (std::size_t t = 0; t < streams[s].length(); ++t) {
            if (!is_activity(streams[s].labels[t])) continue;
            out.cluster.push_back(per_frame[t]);
            out.truth.push_back(streams[s].labels[t]);
        }
    }
    if (next != segment_clusters.size()) throw DimensionError("frame_labels: too many segment clusters");
    return out;
}

/// Predicted per-frame label sequence for the error-assessment table:
/// boundary frames are T, unclustered frames U, the rest their mapped class.
inline std::vector<int> predicted_label_sequence(const SensorStream& stream, const StreamSegmentation& seg,
                                                 const std::vector<int>& mapped_segment_classes, std::size_t offset) {
    std::vector<int> out(stream.length(), kUnknown);
    for (const auto& r : seg.regions)
        for (std::size_t t = r.start_frame; t <= r.end_frame; ++t) out[t] = kTransition;
    for (std::size_t i = 0; i < seg.segments.size(); ++i) {
        const int cls = mapped_segment_classes[offset + i];
        for (std::size_t t = seg.segments[i].begin; t < seg.segments[i].end; ++t) out[t] = cls < 0 ? kUnknown : cls;
    }
    return out;
}

struct EvaluationOptions {
    std::optional<std::size_t> k;  // clusters; largest-gap cut when unset
    bool truth_boundaries = false;  // slice at labeled T/U runs instead of detecting
};

struct EvaluationReport {
    std::size_t streams = 0;
    std::size_t frames_scored = 0;
    std::size_t boundary_regions = 0;
    std::size_t segments = 0;
    std::size_t segments_dropped = 0;
    std::size_t clusters = 0;
    double accuracy = 0.0;
    double weighted_f1 = 0.0;
    std::size_t assessment_correct = 0;

    // Kept for the CSV outputs.
    std::vector<Embedding> embeddings;
    std::vector<int> segment_clusters;
    std::vector<StreamSegmentation> per_stream;
    std::vector<int> frame_pred;
    std::vector<int> frame_truth;
};

inline void write_report(std::ostream& os, const EvaluationReport& r) {
    char buf[64];
    os << "streams: " << r.streams << '\n';
    os << "frames_scored: " << r.frames_scored << '\n';
    os << "boundary_regions: " << r.boundary_regions << '\n';
    os << "segments: " << r.segments << '\n';
    os << "segments_dropped: " << r.segments_dropped << '\n';
    os << "clusters: " << r.clusters << '\n';
    std::snprintf(buf, sizeof buf, "%.6f", r.accuracy);
    os << "accuracy: " << buf << '\n';
    std::snprintf(buf, sizeof buf, "%.6f", r.weighted_f1);
    os << "weighted_f1: " << buf << '\n';
    os << "assessment_correct: " << r.assessment_correct << '\n';
    os << "assessment_total: " << r.streams << '\n';
}

/// Scores already-clustered segments against the streams' ground truth.
inline void score_assignments(const std::vector<SensorStream>& streams, EvaluationReport& r) {
    FrameLabels fl = frame_labels(streams, r.per_stream, r.segment_clusters);
    if (fl.truth.empty()) throw DataError("evaluate: no frame carries an activity label");
    const auto mapping = majority_mapping(fl.cluster, fl.truth);
    r.frame_pred = apply_mapping(fl.cluster, mapping);
    r.frame_truth = fl.truth;
    r.frames_scored = fl.truth.size();
    r.accuracy = many_to_one_accuracy(fl.cluster, fl.truth);
    r.weighted_f1 = weighted_f1(r.frame_pred, r.frame_truth);
    const std::vector<int> mapped_segments = apply_mapping(r.segment_clusters, mapping);
    r.assessment_correct = 0;
    std::size_t offset = 0;
    for (std::size_t s = 0; s < streams.size(); ++s) {
        const auto pred = predicted_label_sequence(streams[s], r.per_stream[s], mapped_segments, offset);
        r.assessment_correct += assess_segmentation(streams[s].labels, pred) == Assessment::correct;
        offset += r.per_stream[s].segments.size();
    }
}

/// detect → slice → embed → cluster → score.
inline EvaluationReport evaluate_pipeline(const std::vector<SensorStream>& streams, SegmentationModel* seg_model,
                                          RecognitionModel& rec_model, const EvaluationOptions& opts) {
    if (streams.empty()) throw ContractError("evaluate_pipeline: no streams");
    if (!opts.truth_boundaries && seg_model == nullptr) {
        throw ContractError("evaluate_pipeline: detected boundaries need a segmentation model");
    }
    EvaluationReport r;
    r.streams = streams.size();
    std::vector<Tensor> windows;
    std::vector<std::string> ids;
    for (const auto& s : streams) {
        StreamSegmentation ss;
        ss.regions = opts.truth_boundaries ? truth_regions(s) : detect_boundaries(*seg_model, s);
        SliceResult sl = slice_segments(s, ss.regions, rec_model.min_length());
        ss.segments = std::move(sl.segments);
        ss.dropped = sl.dropped;
        for (std::size_t i = 0; i < ss.segments.size(); ++i) {
            windows.push_back(ss.segments[i].window);
            ids.push_back(s.id + ":" + std::to_string(i));
        }
        r.boundary_regions += ss.regions.size();
        r.segments += ss.segments.size();
        r.segments_dropped += ss.dropped;
        r.per_stream.push_back(std::move(ss));
    }
    if (windows.empty()) throw DataError("evaluate_pipeline: no segment is long enough to embed");
    r.embeddings = embed_segments(rec_model, windows, ids);
    if (windows.size() == 1) {
        r.segment_clusters = {0};
        r.clusters = 1;
    } else {
        StopRule stop = opts.k ? StopRule::clusters(std::min(*opts.k, windows.size())) : StopRule::largest_gap();
        ClusterAssignment ca = single_linkage(pairwise_distances(r.embeddings), stop);
        r.segment_clusters = ca.labels;
        r.clusters = ca.k;
    }
    score_assignments(streams, r);
    return r;
}

}  // namespace siamhar
