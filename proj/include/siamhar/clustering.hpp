#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "branch.hpp"
#include "errors.hpp"
#include "recognition.hpp"

namespace siamhar {

/// Condensed upper triangle of a symmetric distance matrix.
class DistanceMatrix {
public:
    explicit DistanceMatrix(std::size_t n) : n_(n), d_(n * (n - (n > 0 ? 1 : 0)) / 2, 0.0) {}

    std::size_t size() const { return n_; }

    double at(std::size_t i, std::size_t j) const {
        if (i == j) return 0.0;
        return d_[index(std::min(i, j), std::max(i, j))];
    }

    void set(std::size_t i, std::size_t j, double v) {
        if (i == j) throw ContractError("DistanceMatrix: diagonal is fixed at zero");
        if (!(v >= 0) || !std::isfinite(v)) throw ContractError("DistanceMatrix: distances must be finite and >= 0");
        d_[index(std::min(i, j), std::max(i, j))] = v;
    }

    static DistanceMatrix from_square(const std::vector<std::vector<double>>& m) {
        DistanceMatrix dm(m.size());
        for (std::size_t i = 0; i < m.size(); ++i) {
            if (m[i].size() != m.size()) throw DimensionError("DistanceMatrix: matrix is not square");
            for (std::size_t j = i + 1; j < m.size(); ++j) dm.set(i, j, m[i][j]);
        }
        return dm;
    }

private:
    std::size_t index(std::size_t i, std::size_t j) const { return i * n_ - i * (i + 1) / 2 + (j - i - 1); }

    std::size_t n_;
    std::vector<double> d_;
};

/// L1 distances between embeddings, i.e. −ln of their similarity.
inline DistanceMatrix pairwise_distances(const std::vector<Embedding>& embeddings) {
    if (embeddings.size() < 2) throw ContractError("pairwise_distances: need at least 2 embeddings");
    DistanceMatrix dm(embeddings.size());
    for (std::size_t i = 0; i < embeddings.size(); ++i)
        for (std::size_t j = i + 1; j < embeddings.size(); ++j) dm.set(i, j, l1_distance(embeddings[i].vector, embeddings[j].vector));
    return dm;
}

/// Stop after `k` clusters remain, or before the first merge above
/// `threshold`. With neither set the dendrogram is cut at the largest gap
/// between consecutive merge distances (the first merge is measured from 0).
struct StopRule {
    std::optional<std::size_t> k;
    std::optional<double> threshold;

    static StopRule clusters(std::size_t k) { return StopRule{k, std::nullopt}; }
    static StopRule distance(double t) { return StopRule{std::nullopt, t}; }
    static StopRule largest_gap() { return StopRule{}; }
};

struct Merge {
    std::size_t a = 0;  // id (smallest member) of the cluster with the smaller id
    std::size_t b = 0;
    double distance = 0.0;
};

struct ClusterAssignment {
    std::vector<int> labels;  // 0..k−1, numbered by each cluster's smallest member
    std::size_t k = 0;
    std::vector<Merge> merges;  // the merges that were applied, in order
};

/// Full single-linkage merge sequence. Equal distances are resolved by
/// merging the pair with the lexicographically smallest (min id, max id),
/// where a cluster's id is its smallest member.
inline std::vector<Merge> single_linkage_merges(const DistanceMatrix& dm) {
    const std::size_t n = dm.size();
    std::vector<std::tuple<double, std::size_t, std::size_t>> edges;
    edges.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) edges.emplace_back(dm.at(i, j), i, j);
    std::sort(edges.begin(), edges.end());

    std::vector<std::size_t> parent(n), min_id(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::iota(min_id.begin(), min_id.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };

    std::vector<Merge> merges;
    std::size_t g = 0;
    while (g < edges.size() && merges.size() + 1 < n) {
        std::size_t h = g;
        while (h < edges.size() && std::get<0>(edges[h]) == std::get<0>(edges[g])) ++h;
        const double dist = std::get<0>(edges[g]);
        if (h - g == 1) {
            const std::size_t ra = find(std::get<1>(edges[g])), rb = find(std::get<2>(edges[g]));
            if (ra != rb) {
                merges.push_back({std::min(min_id[ra], min_id[rb]), std::max(min_id[ra], min_id[rb]), dist});
                parent[rb] = ra;
                min_id[ra] = std::min(min_id[ra], min_id[rb]);
            }
        } else {
            // Several edges share this distance: merge in (min id, max id) order,
            // re-evaluating ids after every merge.
            while (true) {
                bool found = false;
                std::pair<std::size_t, std::size_t> best{n, n};
                std::size_t best_ra = 0, best_rb = 0;
                for (std::size_t e = g; e < h; ++e) {
                    const std::size_t ra = find(std::get<1>(edges[e])), rb = find(std::get<2>(edges[e]));
                    if (ra == rb) continue;
                    const std::pair<std::size_t, std::size_t> key{std::min(min_id[ra], min_id[rb]),
                                                                  std::max(min_id[ra], min_id[rb])};
                    if (!found || key < best) {
                        best = key;
                        best_ra = ra;
                        best_rb = rb;
                        found = true;
                    }
                }
                if (!found) break;
                merges.push_back({best.first, best.second, dist});
                parent[best_rb] = best_ra;
                min_id[best_ra] = best.first;
            }
        }
        g = h;
    }
    return merges;
}

/// Number of merges to keep under the stop rule, given the full sequence.
inline std::size_t merges_to_apply(const std::vector<Merge>& merges, std::size_t n, const StopRule& stop) {
    if (stop.k) {
        if (*stop.k < 1 || *stop.k > n) {
            throw ContractError("single_linkage: k=" + std::to_string(*stop.k) + " outside 1.." + std::to_string(n));
        }
        return n - *stop.k;
    }
    if (stop.threshold) {
        std::size_t m = 0;
        while (m < merges.size() && merges[m].distance <= *stop.threshold) ++m;
        return m;
    }
    if (merges.empty()) return 0;
    std::size_t cut = 0;
    double best_gap = -1.0, prev = 0.0;
    for (std::size_t m = 0; m < merges.size(); ++m) {
        const double gap = merges[m].distance - prev;
        if (gap > best_gap) {
            best_gap = gap;
            cut = m;
        }
        prev = merges[m].distance;
    }
    return cut;
}

inline ClusterAssignment single_linkage(const DistanceMatrix& dm, const StopRule& stop = StopRule::largest_gap()) {
    const std::size_t n = dm.size();
    if (n == 0) throw ContractError("single_linkage: empty distance matrix");
    std::vector<Merge> all = single_linkage_merges(dm);
    const std::size_t keep = merges_to_apply(all, n, stop);

    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    ClusterAssignment out;
    for (std::size_t m = 0; m < keep; ++m) {
        parent[find(all[m].b)] = find(all[m].a);
        out.merges.push_back(all[m]);
    }
    out.labels.assign(n, -1);
    std::vector<int> root_label(n, -1);
    int next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = find(i);
        if (root_label[r] < 0) root_label[r] = next++;
        out.labels[i] = root_label[r];
    }
    out.k = static_cast<std::size_t>(next);
    return out;
}

inline void write_assignments_csv(std::ostream& os, const std::vector<std::string>& segment_ids,
                                  const std::vector<int>& labels) {
    if (segment_ids.size() != labels.size()) throw DimensionError("write_assignments_csv: ids and labels differ");
    os << "segment_id,cluster_id\n";
    for (std::size_t i = 0; i < labels.size(); ++i) os << segment_ids[i] << ',' << labels[i] << '\n';
}

}  // namespace siamhar
