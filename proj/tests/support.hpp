// Shared fixtures for the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "gpmd/metric_hst.hpp"
#include "gpmd/rng.hpp"

namespace testsupport {

using gpmd::HstTree;
using gpmd::HstVertex;
using gpmd::Rng;
using gpmd::VertexId;

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * gpmd::uniform01(rng); }

inline std::size_t uniform_int(Rng& rng, std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

/// Complete binary tree of the given depth; edges at depth k weigh top / tau^(k-1). Leaves hold
/// points 0..2^depth-1 left to right.
inline HstTree binary_tree(int depth, double tau, double top) {
    std::vector<HstVertex> v(1);
    std::vector<VertexId> layer{0};
    int next_point = 0;
    double w = top;
    for (int d = 1; d <= depth; ++d) {
        std::vector<VertexId> next;
        for (VertexId p : layer) {
            for (int c = 0; c < 2; ++c) {
                const auto id = static_cast<VertexId>(v.size());
                HstVertex child;
                child.parent = p;
                child.weight = w;
                if (d == depth) child.point = next_point++;
                v.push_back(child);
                v[static_cast<std::size_t>(p)].children.push_back(id);
                next.push_back(id);
            }
        }
        layer = std::move(next);
        w /= tau;
    }
    return HstTree(std::move(v), 0, tau);
}

/// Random tau-HST over n points: recursive random partitions with 1 to 4 children per vertex
/// (single-child chains included) and weights shrinking by at least tau per level.
inline HstTree random_tree(Rng& rng, std::size_t n, double tau) {
    std::vector<HstVertex> v(1);
    std::vector<int> pts(n);
    std::iota(pts.begin(), pts.end(), 0);
    std::shuffle(pts.begin(), pts.end(), rng);
    std::function<void(VertexId, std::vector<int>, double, int)> grow = [&](VertexId parent, std::vector<int> set,
                                                                           double w, int depth) {
        const auto id = static_cast<VertexId>(v.size());
        HstVertex node;
        node.parent = parent;
        node.weight = w;
        v.push_back(node);
        v[static_cast<std::size_t>(parent)].children.push_back(id);
        if (set.size() == 1 && (depth > 6 || gpmd::uniform01(rng) < 0.8)) {
            v[static_cast<std::size_t>(id)].point = set[0];
            return;
        }
        std::size_t k = set.size() == 1 ? 1 : uniform_int(rng, 1, std::min<std::size_t>(4, set.size()));
        if (k == 1 && set.size() > 1 && gpmd::uniform01(rng) < 0.7) k = 2;
        std::vector<std::vector<int>> parts(k);
        for (std::size_t i = 0; i < k; ++i) parts[i].push_back(set[i]);
        for (std::size_t i = k; i < set.size(); ++i) parts[uniform_int(rng, 0, k - 1)].push_back(set[i]);
        for (auto& p : parts) grow(id, std::move(p), w / tau * uniform(rng, 0.3, 1.0), depth + 1);
    };
    if (n == 1) {
        v[0].point = 0;
        return HstTree(std::move(v), 0, tau);
    }
    const std::size_t k = uniform_int(rng, 2, std::min<std::size_t>(4, n));
    std::vector<std::vector<int>> parts(k);
    for (std::size_t i = 0; i < k; ++i) parts[i].push_back(pts[i]);
    for (std::size_t i = k; i < n; ++i) parts[uniform_int(rng, 0, k - 1)].push_back(pts[i]);
    for (auto& p : parts) grow(0, std::move(p), uniform(rng, 1.0, 10.0), 1);
    return HstTree(std::move(v), 0, tau);
}

/// Random probability vector; each entry is zeroed with probability `zero_p` (at least one
/// entry stays positive).
inline std::vector<double> random_distribution(Rng& rng, std::size_t n, double zero_p = 0.3) {
    std::vector<double> p(n);
    double s = 0.0;
    for (auto& x : p) {
        x = gpmd::uniform01(rng) < zero_p ? 0.0 : -std::log(1.0 - gpmd::uniform01(rng));
        s += x;
    }
    if (s == 0.0) {
        p[uniform_int(rng, 0, n - 1)] = 1.0;
        s = 1.0;
    }
    for (auto& x : p) x /= s;
    return p;
}

} // namespace testsupport
