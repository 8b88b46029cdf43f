#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "eslr/mesh.hpp"

namespace eslr {

/// Dense symmetric n x n matrix, row-major. Memory is n*n*8 bytes.
struct DistanceMatrix {
    std::size_t n = 0;
    std::vector<double> d;

    double operator()(std::size_t i, std::size_t j) const { return d[i * n + j]; }
    double& operator()(std::size_t i, std::size_t j) { return d[i * n + j]; }
};

struct GeodesicEmbedding {
    std::size_t n = 0;
    std::size_t k = 0;
    /// n x k, row-major.
    std::vector<double> coords;
    double final_stress = 0.0;
    std::size_t iterations = 0;
    /// Stress after initialization followed by one entry per iteration.
    std::vector<double> stress_history;
};

/// Shortest paths over mesh edges weighted by rest length, one Dijkstra run
/// per source. Throws ValidationError on a disconnected mesh, naming the
/// smallest component that vertex 0 cannot reach.
DistanceMatrix geodesic_distances(const Topology& topo, const RestState& rest);

/// Sum over ordered pairs i != j of (d_ij - |x_i - x_j|)^2.
double stress(const std::vector<double>& coords, std::size_t k, const DistanceMatrix& dist);

enum class MdsInit { classical, random };

struct MdsOptions {
    std::size_t k = 8;
    std::size_t max_iters = 500;
    double tol = 1e-9;
    std::uint64_t seed = 0;
    MdsInit init = MdsInit::classical;
};

/// Torgerson classical scaling; dimensions with non-positive eigenvalue are
/// returned as zero columns.
std::vector<double> classical_scaling(const DistanceMatrix& dist, std::size_t k);

/// SMACOF stress majorization with unit weights. Throws ValidationError if
/// k is zero or exceeds n, and std::logic_error if stress ever increases.
GeodesicEmbedding mds_embed(const DistanceMatrix& dist, const MdsOptions& opts);

/// Zero-mean, unit-variance columns (columns with zero variance are only
/// centered).
GeodesicEmbedding standardized(const GeodesicEmbedding& embed);

struct GeoFile {
    GeodesicEmbedding embedding;
    /// Present only when written with distances retained.
    std::vector<double> distances;
};

/// Layout: "ESLR-GEO1", u64 n, u64 k, n*k f64 coords, u8 has_distances,
/// then n*n f64 distances when the flag is set. All little-endian.
void write_geo_file(const std::string& path, const GeodesicEmbedding& embed, const DistanceMatrix* distances);
GeoFile read_geo_file(const std::string& path);

}  // namespace eslr
