#include "eslr/geodesic.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <queue>
#include <random>
#include <stdexcept>

#include "eslr/binary_io.hpp"
#include "eslr/error.hpp"
#include "eslr/rng.hpp"

namespace eslr {

namespace {

constexpr char kGeoMagic[] = "ESLR-GEO1";
constexpr std::size_t kGeoMagicLen = sizeof(kGeoMagic) - 1;

struct WeightedArc {
    std::uint32_t to;
    double w;
};

std::vector<std::vector<WeightedArc>> weighted_adjacency(const Topology& topo, const RestState& rest) {
    std::vector<std::vector<WeightedArc>> adj(topo.adjacency.size());
    for (std::size_t e = 0; e < topo.mesh_edges.size(); ++e) {
        const auto [a, b] = topo.mesh_edges[e];
        adj[a].push_back({b, rest.edge_rest_lengths[e]});
        adj[b].push_back({a, rest.edge_rest_lengths[e]});
    }
    return adj;
}

void check_connected(const Topology& topo) {
    const std::size_t n = topo.adjacency.size();
    std::vector<std::int64_t> comp(n, -1);
    std::vector<std::size_t> sizes;
    std::vector<std::uint32_t> min_vertex;
    for (std::uint32_t s = 0; s < n; ++s) {
        if (comp[s] >= 0) continue;
        const auto c = static_cast<std::int64_t>(sizes.size());
        sizes.push_back(0);
        min_vertex.push_back(s);
        std::vector<std::uint32_t> stack{s};
        comp[s] = c;
        while (!stack.empty()) {
            auto v = stack.back();
            stack.pop_back();
            ++sizes.back();
            for (auto w : topo.adjacency[v]) {
                if (comp[w] < 0) {
                    comp[w] = c;
                    stack.push_back(w);
                }
            }
        }
    }
    if (sizes.size() <= 1) return;
    std::size_t smallest = 1;
    for (std::size_t c = 2; c < sizes.size(); ++c) {
        if (sizes[c] < sizes[smallest]) smallest = c;
    }
    throw ValidationError("mesh is disconnected (" + std::to_string(sizes.size()) +
                          " components); smallest unreachable component has " +
                          std::to_string(sizes[smallest]) + " vertices starting at vertex " +
                          std::to_string(min_vertex[smallest]));
}

}  // namespace

DistanceMatrix geodesic_distances(const Topology& topo, const RestState& rest) {
    check_connected(topo);
    const std::size_t n = topo.adjacency.size();
    const auto adj = weighted_adjacency(topo, rest);
    DistanceMatrix dm{n, std::vector<double>(n * n, std::numeric_limits<double>::infinity())};

    using Entry = std::pair<double, std::uint32_t>;
    for (std::uint32_t src = 0; src < n; ++src) {
        double* row = dm.d.data() + static_cast<std::size_t>(src) * n;
        std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
        row[src] = 0.0;
        heap.emplace(0.0, src);
        while (!heap.empty()) {
            auto [dist, v] = heap.top();
            heap.pop();
            if (dist > row[v]) continue;
            for (const auto& arc : adj[v]) {
                const double cand = dist + arc.w;
                if (cand < row[arc.to]) {
                    row[arc.to] = cand;
                    heap.emplace(cand, arc.to);
                }
            }
        }
    }
    // Floating-point path sums can differ by direction; keep the matrix exactly symmetric.
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = std::min(dm(i, j), dm(j, i));
            dm(i, j) = v;
            dm(j, i) = v;
        }
    }
    return dm;
}

double stress(const std::vector<double>& coords, std::size_t k, const DistanceMatrix& dist) {
    const std::size_t n = dist.n;
    if (coords.size() != n * k) throw ShapeError("stress: coords size does not match n*k");
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            double e2 = 0.0;
            for (std::size_t c = 0; c < k; ++c) {
                const double diff = coords[i * k + c] - coords[j * k + c];
                e2 += diff * diff;
            }
            const double r = dist(i, j) - std::sqrt(e2);
            s += r * r;
        }
    }
    return s;
}

std::vector<double> classical_scaling(const DistanceMatrix& dist, std::size_t k) {
    const auto n = static_cast<Eigen::Index>(dist.n);
    Eigen::MatrixXd b(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double d = dist(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
            b(i, j) = -0.5 * d * d;
        }
    }
    const Eigen::VectorXd row_mean = b.rowwise().mean();
    const double total_mean = row_mean.mean();
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) b(i, j) += total_mean - row_mean(i) - row_mean(j);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(b);
    // eigenvalues ascending
    std::vector<double> coords(dist.n * k, 0.0);
    for (std::size_t c = 0; c < k && static_cast<Eigen::Index>(c) < n; ++c) {
        const Eigen::Index col = n - 1 - static_cast<Eigen::Index>(c);
        const double lambda = eig.eigenvalues()(col);
        if (!(lambda > 0.0)) continue;
        Eigen::VectorXd v = eig.eigenvectors().col(col);
        // fix the sign so results do not depend on solver internals
        Eigen::Index pivot = 0;
        v.cwiseAbs().maxCoeff(&pivot);
        if (v(pivot) < 0.0) v = -v;
        const double scale = std::sqrt(lambda);
        for (Eigen::Index i = 0; i < n; ++i) coords[static_cast<std::size_t>(i) * k + c] = v(i) * scale;
    }
    return coords;
}

GeodesicEmbedding mds_embed(const DistanceMatrix& dist, const MdsOptions& opts) {
    const std::size_t n = dist.n;
    const std::size_t k = opts.k;
    if (k == 0) throw ValidationError("embedding dimension must be at least 1");
    if (k > n) {
        throw ValidationError("embedding dimension " + std::to_string(k) + " exceeds vertex count " +
                              std::to_string(n));
    }
    if (opts.max_iters == 0) throw ValidationError("max_iters must be at least 1");
    if (!(opts.tol > 0.0)) throw ValidationError("tol must be positive");

    double max_d = 0.0;
    double sum_sq = 0.0;
    for (double d : dist.d) {
        max_d = std::max(max_d, d);
        sum_sq += d * d;
    }

    Rng rng(opts.seed);
    std::vector<double> x;
    if (opts.init == MdsInit::classical) {
        x = classical_scaling(dist, k);
        // degenerate directions get a small seeded spread so SMACOF can move them
        for (std::size_t c = 0; c < k; ++c) {
            bool zero = true;
            for (std::size_t i = 0; i < n && zero; ++i) zero = x[i * k + c] == 0.0;
            if (!zero) continue;
            for (std::size_t i = 0; i < n; ++i) x[i * k + c] = 1e-3 * max_d * (rng.uniform() - 0.5);
        }
    } else {
        x.resize(n * k);
        for (auto& v : x) v = max_d * rng.uniform();
    }

    GeodesicEmbedding out;
    out.n = n;
    out.k = k;
    double current = stress(x, k, dist);
    out.stress_history.push_back(current);
    const double slack = 1e-13 * std::max(sum_sq, 1.0);

    std::vector<double> next(n * k);
    const double inv_n = 1.0 / static_cast<double>(n);
    std::size_t it = 0;
    while (it < opts.max_iters && current > 0.0) {
        ++it;
        // Guttman transform: x_i <- (1/n) sum_j (d_ij / |x_i - x_j|) (x_i - x_j)
        for (std::size_t i = 0; i < n; ++i) {
            double* xi_new = next.data() + i * k;
            std::fill(xi_new, xi_new + k, 0.0);
            const double* xi = x.data() + i * k;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double* xj = x.data() + j * k;
                double e2 = 0.0;
                for (std::size_t c = 0; c < k; ++c) e2 += (xi[c] - xj[c]) * (xi[c] - xj[c]);
                if (e2 == 0.0) continue;
                const double ratio = dist(i, j) / std::sqrt(e2);
                for (std::size_t c = 0; c < k; ++c) xi_new[c] += ratio * (xi[c] - xj[c]);
            }
            for (std::size_t c = 0; c < k; ++c) xi_new[c] *= inv_n;
        }
        const double updated = stress(next, k, dist);
        if (updated > current + slack) {
            throw std::logic_error("SMACOF stress increased at iteration " + std::to_string(it));
        }
        out.stress_history.push_back(updated);
        x.swap(next);
        const double decrease = current - updated;
        current = updated;
        if (decrease <= opts.tol * std::max(current + decrease, std::numeric_limits<double>::min())) break;
    }
    out.coords = std::move(x);
    out.final_stress = current;
    out.iterations = it;
    return out;
}

GeodesicEmbedding standardized(const GeodesicEmbedding& embed) {
    GeodesicEmbedding out = embed;
    const std::size_t n = embed.n;
    const std::size_t k = embed.k;
    for (std::size_t c = 0; c < k; ++c) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += embed.coords[i * k + c];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = embed.coords[i * k + c] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double inv_std = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
        for (std::size_t i = 0; i < n; ++i) out.coords[i * k + c] = (embed.coords[i * k + c] - mean) * inv_std;
    }
    return out;
}

void write_geo_file(const std::string& path, const GeodesicEmbedding& embed, const DistanceMatrix* distances) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out.write(kGeoMagic, static_cast<std::streamsize>(kGeoMagicLen));
    binio::put<std::uint64_t>(out, embed.n);
    binio::put<std::uint64_t>(out, embed.k);
    binio::put_f64s(out, embed.coords);
    binio::put<std::uint8_t>(out, distances != nullptr ? 1 : 0);
    if (distances != nullptr) binio::put_f64s(out, distances->d);
    if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

GeoFile read_geo_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("embedding file '" + path + "' not found; run `preprocess` first");
    char magic[kGeoMagicLen];
    in.read(magic, static_cast<std::streamsize>(kGeoMagicLen));
    if (!in || std::string(magic, kGeoMagicLen) != kGeoMagic) {
        throw ValidationError("'" + path + "' is not an ESLR-GEO1 embedding file");
    }
    GeoFile f;
    f.embedding.n = binio::get<std::uint64_t>(in, "vertex count");
    f.embedding.k = binio::get<std::uint64_t>(in, "embedding dimension");
    if (f.embedding.n == 0 || f.embedding.k == 0 || f.embedding.k > f.embedding.n || f.embedding.n > (1u << 24)) {
        throw ValidationError("'" + path + "' has an implausible header (n=" + std::to_string(f.embedding.n) +
                              ", k=" + std::to_string(f.embedding.k) + ")");
    }
    f.embedding.coords = binio::get_f64s(in, f.embedding.n * f.embedding.k, "embedding");
    const auto has_dist = binio::get<std::uint8_t>(in, "distance flag");
    if (has_dist != 0) f.distances = binio::get_f64s(in, f.embedding.n * f.embedding.n, "distances");
    return f;
}

}  // namespace eslr
