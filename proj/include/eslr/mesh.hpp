#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "eslr/vec3.hpp"

namespace eslr {

enum class MeshKind { garment, body };

using Triangle = std::array<std::uint32_t, 3>;
using EdgeIndex = std::pair<std::uint32_t, std::uint32_t>;

struct Mesh {
    Positions vertices;
    std::vector<Triangle> triangles;
    MeshKind kind = MeshKind::garment;

    std::size_t vertex_count() const { return vertices.size(); }
};

/// Interior edge shared by exactly two triangles. `opposite` holds the vertex
/// of the first and second triangle that is not on the edge.
struct DihedralPair {
    EdgeIndex edge;
    std::array<std::uint32_t, 2> opposite;
};

struct Topology {
    /// Unordered pairs stored as (low, high), sorted ascending.
    std::vector<EdgeIndex> mesh_edges;
    /// Sorted neighbor list per vertex.
    std::vector<std::vector<std::uint32_t>> adjacency;
    std::vector<DihedralPair> dihedral_pairs;
    /// Edges shared by more than two triangles (excluded from bending).
    std::size_t non_manifold_edges = 0;
};

struct RestState {
    std::vector<double> edge_rest_lengths;
    std::vector<double> vertex_masses;
    /// One entry per `Topology::dihedral_pairs` element, in [0, 2*pi).
    std::vector<double> rest_dihedral_angles;
};

struct WorldEdgeSet {
    /// (garment vertex, body vertex), sorted ascending, no duplicates.
    std::vector<EdgeIndex> pairs;
    double radius = 0.0;
};

/// Throws ValidationError when indices are out of range, a triangle has zero
/// area or there are fewer than three vertices.
void validate_mesh(const Mesh& mesh);

/// Reads `v` and `f` records. Faces with more than three corners are fan
/// triangulated; `vt`/`vn` records and `i/j/k` index suffixes are ignored.
Mesh parse_obj(std::string_view text, MeshKind kind = MeshKind::garment);
Mesh load_obj(const std::string& path, MeshKind kind = MeshKind::garment);
std::string serialize_obj(const Positions& vertices, const std::vector<Triangle>& triangles);
void save_obj(const std::string& path, const Positions& vertices, const std::vector<Triangle>& triangles);

Topology build_topology(const Mesh& mesh);

RestState compute_rest_quantities(const Mesh& mesh, const Topology& topo, double density);

/// Signed dihedral angle at `pair` in [0, 2*pi); a flat configuration is pi.
double dihedral_angle(const Positions& pos, const DihedralPair& pair);

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);

/// Area-weighted vertex normals (unit length; zero for isolated vertices).
Positions vertex_normals(const Positions& pos, const std::vector<Triangle>& triangles);

double mean_edge_length(const Topology& topo, const RestState& rest);

/// All (garment, body) pairs with Euclidean distance <= radius, found with a
/// uniform hash grid of cell size `radius`.
WorldEdgeSet build_world_edges(const Positions& garment_pos, const Positions& body_pos, double radius);

/// Regular cloth grid in the xz-plane (y = 0), centered at the origin, with
/// `nx` by `nz` vertices spanning `size_x` by `size_z` meters.
Mesh make_grid(std::size_t nx, std::size_t nz, double size_x, double size_z);

/// Resolves "grid:N", "grid:NxM" or "grid:NxM:SIZE" to a synthetic grid and
/// anything else to an OBJ path.
Mesh load_garment(const std::string& spec);

Mesh make_icosphere(const Vec3& center, double radius, int subdivisions);

/// Capsule with its axis along z, centered at `center`.
Mesh make_capsule(const Vec3& center, double radius, double half_length, int rings, int segments);

}  // namespace eslr
