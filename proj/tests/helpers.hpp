#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "eslr/mesh.hpp"
#include "eslr/rng.hpp"
#include "eslr/tensor.hpp"

namespace eslr::test {

inline Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::matrix(rows, cols);
    for (auto& x : t.data()) x = rng.uniform(lo, hi);
    return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

/// Grid with every vertex displaced by up to `amp` in each axis.
inline Positions jitter(const Positions& p, double amp, Rng& rng) {
    Positions out = p;
    for (auto& v : out) {
        v.x += rng.uniform(-amp, amp);
        v.y += rng.uniform(-amp, amp);
        v.z += rng.uniform(-amp, amp);
    }
    return out;
}

/// Path graph 0-1-...-(n-1) with no triangles.
inline Topology chain_topology(std::size_t n) {
    Topology t;
    t.adjacency.resize(n);
    for (std::uint32_t i = 0; i + 1 < n; ++i) {
        t.mesh_edges.push_back({i, i + 1});
        t.adjacency[i].push_back(i + 1);
        t.adjacency[i + 1].push_back(i);
    }
    for (auto& a : t.adjacency) std::sort(a.begin(), a.end());
    return t;
}

}  // namespace eslr::test
