#pragma once

#include <algorithm>
#include <limits>
#include <span>
#include <numeric>
#include <vector>

#include "riconv/point_cloud.hpp"

namespace riconv {

namespace detail {

// Geometric argmax: prefer larger key; on exact key ties prefer the
// lexicographically smaller coordinate triple, then the smaller index.
// Keeping the tie rule geometric makes FPS permutation-equivariant.
struct FarthestPick {
    double key = -std::numeric_limits<double>::infinity();
    size_t index = size_t(-1);
    Vec3 coords;

    void offer(double k, size_t i, const Vec3& p) {
        if (k > key) {
            key = k; index = i; coords = p;
        } else if (k == key && index != size_t(-1)) {
            if (lex_less(p, coords) || (p == coords && i < index)) {
                index = i; coords = p;
            }
        }
    }
};

}  // namespace detail

/// Farthest point sampling. The seed point is the point farthest from the
/// cloud centroid; every later pick maximizes the minimum distance to the
/// already-selected set. Fully deterministic, including tie handling.
inline IndexSet farthest_point_sample(const PointCloud& cloud, size_t k) {
    const size_t n = cloud.size();
    if (k < 1 || k > n) throw std::out_of_range("farthest_point_sample: k out of range");

    Vec3 centroid = permutation_invariant_centroid(cloud.points);

    detail::FarthestPick seed;
    for (size_t i = 0; i < n; ++i) seed.offer(norm_sq(cloud.points[i] - centroid), i, cloud.points[i]);

    IndexSet selected;
    selected.reserve(k);
    selected.push_back(seed.index);

    std::vector<double> min_dist(n);
    std::vector<char> taken(n, 0);
    taken[seed.index] = 1;
    for (size_t i = 0; i < n; ++i) min_dist[i] = norm_sq(cloud.points[i] - cloud.points[seed.index]);

    while (selected.size() < k) {
        detail::FarthestPick pick;
        for (size_t i = 0; i < n; ++i)
            if (!taken[i]) pick.offer(min_dist[i], i, cloud.points[i]);
        selected.push_back(pick.index);
        taken[pick.index] = 1;
        for (size_t i = 0; i < n; ++i)
            min_dist[i] = std::min(min_dist[i], norm_sq(cloud.points[i] - cloud.points[pick.index]));
    }
    return selected;
}

/// Scratch space for repeated neighbor queries against same-size clouds;
/// avoids reallocating the distance table per query.
using KnnScratch = std::vector<std::pair<double, size_t>>;

inline void knn_points_into(std::span<const Vec3> pts, const Vec3& q, size_t k,
                            KnnScratch& scratch, IndexSet& out) {
    const size_t n = pts.size();
    if (k < 1 || k > n) throw std::out_of_range("knn: k out of range");
    // bounded max-heap of (distance, index) pairs: keeps the k smallest
    // under the exact lexicographic tie rule
    scratch.clear();
    scratch.reserve(k);
    for (size_t i = 0; i < k; ++i) scratch.emplace_back(norm_sq(pts[i] - q), i);
    std::make_heap(scratch.begin(), scratch.end());
    for (size_t i = k; i < n; ++i) {
        std::pair<double, size_t> cand{norm_sq(pts[i] - q), i};
        if (cand < scratch.front()) {
            std::pop_heap(scratch.begin(), scratch.end());
            scratch.back() = cand;
            std::push_heap(scratch.begin(), scratch.end());
        }
    }
    std::sort(scratch.begin(), scratch.end());
    out.resize(k);
    for (size_t i = 0; i < k; ++i) out[i] = scratch[i].second;
}

/// Exact k nearest neighbors of cloud.points[query] (the query itself is
/// eligible). Ascending distance, ties broken by smaller index.
inline IndexSet knn(const PointCloud& cloud, size_t query, size_t k) {
    if (query >= cloud.size()) throw std::out_of_range("knn: query index out of range");
    KnnScratch scratch;
    IndexSet out;
    knn_points_into(cloud.points, cloud.points[query], k, scratch, out);
    return out;
}

/// knn against an explicit point list with an arbitrary query position.
inline IndexSet knn_points(const std::vector<Vec3>& pts, const Vec3& q, size_t k) {
    KnnScratch scratch;
    IndexSet out;
    knn_points_into(pts, q, k, scratch, out);
    return out;
}

/// Gather a subset cloud (points, normals, label preserved).
inline PointCloud gather(const PointCloud& cloud, const IndexSet& idx) {
    PointCloud out;
    out.label = cloud.label;
    out.points.reserve(idx.size());
    for (size_t i : idx) {
        if (i >= cloud.size()) throw std::out_of_range("gather: index out of range");
        out.points.push_back(cloud.points[i]);
    }
    if (cloud.has_normals()) {
        out.normals.reserve(idx.size());
        for (size_t i : idx) out.normals.push_back(cloud.normals[i]);
    }
    return out;
}

}  // namespace riconv
