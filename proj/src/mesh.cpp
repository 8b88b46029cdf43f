#include "eslr/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include "eslr/error.hpp"

namespace eslr {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

bool parse_double(std::string_view tok, double& out) {
    const char* end = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(tok.data(), end, out);
    return ec == std::errc() && ptr == end && std::isfinite(out);
}

bool parse_long(std::string_view tok, long& out) {
    const char* end = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(tok.data(), end, out);
    return ec == std::errc() && ptr == end;
}

}  // namespace

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
    return 0.5 * norm(cross(b - a, c - a));
}

void validate_mesh(const Mesh& mesh) {
    if (mesh.vertices.size() < 3) {
        throw ValidationError("mesh has " + std::to_string(mesh.vertices.size()) +
                              " vertices, at least 3 required");
    }
    const auto n = mesh.vertices.size();
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        for (auto v : tri) {
            if (v >= n) {
                throw ValidationError("triangle " + std::to_string(t) + " references vertex " +
                                      std::to_string(v) + " but the mesh has " + std::to_string(n));
            }
        }
        if (!(triangle_area(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]) > 0.0)) {
            throw ValidationError("triangle " + std::to_string(t) + " has zero area at rest");
        }
    }
}

Mesh parse_obj(std::string_view text, MeshKind kind) {
    Mesh mesh;
    mesh.kind = kind;
    struct PendingFace {
        std::vector<long> corners;
        std::size_t line;
        long seen;  // vertices defined before this face; negative indices count back from here
    };
    std::vector<PendingFace> faces;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;

        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        auto tok = split_ws(line);
        if (tok.empty()) continue;

        if (tok[0] == "v") {
            if (tok.size() < 4 || tok.size() > 5) throw ParseError(line_no, "vertex needs 3 coordinates");
            Vec3 p;
            for (int c = 0; c < 3; ++c) {
                if (!parse_double(tok[c + 1], p[c])) {
                    throw ParseError(line_no, "bad coordinate '" + std::string(tok[c + 1]) + "'");
                }
            }
            mesh.vertices.push_back(p);
        } else if (tok[0] == "f") {
            if (tok.size() < 4) throw ParseError(line_no, "face needs at least 3 vertices");
            PendingFace face{{}, line_no, static_cast<long>(mesh.vertices.size())};
            for (std::size_t c = 1; c < tok.size(); ++c) {
                auto idx_tok = tok[c].substr(0, tok[c].find('/'));
                long idx = 0;
                if (!parse_long(idx_tok, idx) || idx == 0) {
                    throw ParseError(line_no, "bad face index '" + std::string(tok[c]) + "'");
                }
                face.corners.push_back(idx);
            }
            faces.push_back(std::move(face));
        }
        // vt, vn, o, g, s, usemtl, mtllib and anything else: geometry only
        if (nl == text.size()) break;
    }

    const long n = static_cast<long>(mesh.vertices.size());
    for (const auto& face : faces) {
        std::vector<std::uint32_t> idx;
        for (long c : face.corners) {
            const long zero_based = c > 0 ? c - 1 : face.seen + c;
            if (zero_based < 0 || zero_based >= n) {
                throw ValidationError("line " + std::to_string(face.line) + ": vertex index " +
                                      std::to_string(c) + " out of range (" + std::to_string(n) +
                                      " vertices)");
            }
            idx.push_back(static_cast<std::uint32_t>(zero_based));
        }
        for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
            mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
        }
    }
    validate_mesh(mesh);
    return mesh;
}

Mesh load_obj(const std::string& path, MeshKind kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open mesh file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_obj(ss.str(), kind);
}

std::string serialize_obj(const Positions& vertices, const std::vector<Triangle>& triangles) {
    std::ostringstream out;
    out << std::setprecision(17);
    for (const auto& v : vertices) out << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
    for (const auto& t : triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
    return out.str();
}

void save_obj(const std::string& path, const Positions& vertices, const std::vector<Triangle>& triangles) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << serialize_obj(vertices, triangles);
}

Topology build_topology(const Mesh& mesh) {
    struct Incidence {
        EdgeIndex edge;
        std::uint32_t opposite;
    };
    std::vector<Incidence> inc;
    inc.reserve(mesh.triangles.size() * 3);
    for (const auto& tri : mesh.triangles) {
        for (int k = 0; k < 3; ++k) {
            std::uint32_t a = tri[k];
            std::uint32_t b = tri[(k + 1) % 3];
            inc.push_back({{std::min(a, b), std::max(a, b)}, tri[(k + 2) % 3]});
        }
    }
    // stable sort keeps triangle order within an edge group
    std::stable_sort(inc.begin(), inc.end(),
                     [](const Incidence& l, const Incidence& r) { return l.edge < r.edge; });

    Topology topo;
    topo.adjacency.resize(mesh.vertices.size());
    for (std::size_t i = 0; i < inc.size();) {
        std::size_t j = i;
        while (j < inc.size() && inc[j].edge == inc[i].edge) ++j;
        const auto edge = inc[i].edge;
        topo.mesh_edges.push_back(edge);
        topo.adjacency[edge.first].push_back(edge.second);
        topo.adjacency[edge.second].push_back(edge.first);
        const std::size_t share = j - i;
        if (share == 2) {
            topo.dihedral_pairs.push_back({edge, {inc[i].opposite, inc[i + 1].opposite}});
        } else if (share > 2) {
            ++topo.non_manifold_edges;
        }
        i = j;
    }
    for (auto& nb : topo.adjacency) std::sort(nb.begin(), nb.end());
    return topo;
}

double dihedral_angle(const Positions& pos, const DihedralPair& pair) {
    const Vec3& a = pos[pair.edge.first];
    const Vec3& b = pos[pair.edge.second];
    const Vec3& c = pos[pair.opposite[0]];
    const Vec3& d = pos[pair.opposite[1]];
    const Vec3 e = b - a;
    const Vec3 n1 = cross(e, c - a);
    const Vec3 n2 = cross(d - a, e);
    const double en = norm(e);
    const double sin_part = en > 0.0 ? dot(cross(n1, n2), e) / en : 0.0;
    const double phi = std::atan2(sin_part, dot(n1, n2));
    double theta = std::numbers::pi - phi;
    if (theta >= 2.0 * std::numbers::pi) theta -= 2.0 * std::numbers::pi;
    return theta;
}

RestState compute_rest_quantities(const Mesh& mesh, const Topology& topo, double density) {
    if (!(density > 0.0)) throw ValidationError("density must be positive");
    RestState rest;
    rest.edge_rest_lengths.reserve(topo.mesh_edges.size());
    for (const auto& [a, b] : topo.mesh_edges) {
        rest.edge_rest_lengths.push_back(norm(mesh.vertices[a] - mesh.vertices[b]));
    }
    rest.vertex_masses.assign(mesh.vertices.size(), 0.0);
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        const double area = triangle_area(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
        if (!(area > 0.0)) throw ValidationError("triangle " + std::to_string(t) + " has zero area at rest");
        for (auto v : tri) rest.vertex_masses[v] += density * area / 3.0;
    }
    for (std::size_t v = 0; v < rest.vertex_masses.size(); ++v) {
        if (!(rest.vertex_masses[v] > 0.0)) {
            throw ValidationError("vertex " + std::to_string(v) + " belongs to no triangle");
        }
    }
    rest.rest_dihedral_angles.reserve(topo.dihedral_pairs.size());
    for (const auto& pair : topo.dihedral_pairs) {
        rest.rest_dihedral_angles.push_back(dihedral_angle(mesh.vertices, pair));
    }
    return rest;
}

Positions vertex_normals(const Positions& pos, const std::vector<Triangle>& triangles) {
    Positions n(pos.size());
    for (const auto& tri : triangles) {
        // cross product length is twice the area: area weighting for free
        const Vec3 fn = cross(pos[tri[1]] - pos[tri[0]], pos[tri[2]] - pos[tri[0]]);
        for (auto v : tri) n[v] += fn;
    }
    for (auto& v : n) {
        const double len = norm(v);
        if (len > 0.0) v *= 1.0 / len;
    }
    return n;
}

double mean_edge_length(const Topology& topo, const RestState& rest) {
    if (topo.mesh_edges.empty()) return 0.0;
    double s = 0.0;
    for (double l : rest.edge_rest_lengths) s += l;
    return s / static_cast<double>(rest.edge_rest_lengths.size());
}

namespace {

struct CellKey {
    std::int64_t x, y, z;
    bool operator==(const CellKey&) const = default;
};

struct CellKeyHash {
    std::size_t operator()(const CellKey& k) const {
        std::uint64_t h = static_cast<std::uint64_t>(k.x) * 73856093ULL;
        h ^= static_cast<std::uint64_t>(k.y) * 19349663ULL;
        h ^= static_cast<std::uint64_t>(k.z) * 83492791ULL;
        return static_cast<std::size_t>(h);
    }
};

CellKey cell_of(const Vec3& p, double inv_cell) {
    return {static_cast<std::int64_t>(std::floor(p.x * inv_cell)),
            static_cast<std::int64_t>(std::floor(p.y * inv_cell)),
            static_cast<std::int64_t>(std::floor(p.z * inv_cell))};
}

}  // namespace

WorldEdgeSet build_world_edges(const Positions& garment_pos, const Positions& body_pos, double radius) {
    if (!(radius > 0.0)) throw ValidationError("world-edge radius must be positive");
    WorldEdgeSet out;
    out.radius = radius;
    const double inv_cell = 1.0 / radius;
    const double r2 = radius * radius;

    std::unordered_map<CellKey, std::vector<std::uint32_t>, CellKeyHash> grid;
    grid.reserve(body_pos.size());
    for (std::uint32_t b = 0; b < body_pos.size(); ++b) grid[cell_of(body_pos[b], inv_cell)].push_back(b);

    for (std::uint32_t g = 0; g < garment_pos.size(); ++g) {
        const auto c = cell_of(garment_pos[g], inv_cell);
        const std::size_t first = out.pairs.size();
        for (std::int64_t dx = -1; dx <= 1; ++dx) {
            for (std::int64_t dy = -1; dy <= 1; ++dy) {
                for (std::int64_t dz = -1; dz <= 1; ++dz) {
                    auto it = grid.find({c.x + dx, c.y + dy, c.z + dz});
                    if (it == grid.end()) continue;
                    for (auto b : it->second) {
                        if (squared_norm(garment_pos[g] - body_pos[b]) <= r2) out.pairs.emplace_back(g, b);
                    }
                }
            }
        }
        std::sort(out.pairs.begin() + static_cast<std::ptrdiff_t>(first), out.pairs.end());
    }
    return out;
}

Mesh make_grid(std::size_t nx, std::size_t nz, double size_x, double size_z) {
    if (nx < 2 || nz < 2) throw ValidationError("grid needs at least 2x2 vertices");
    Mesh m;
    m.kind = MeshKind::garment;
    const double dx = size_x / static_cast<double>(nx - 1);
    const double dz = size_z / static_cast<double>(nz - 1);
    for (std::size_t j = 0; j < nz; ++j) {
        for (std::size_t i = 0; i < nx; ++i) {
            m.vertices.push_back({static_cast<double>(i) * dx - 0.5 * size_x, 0.0,
                                  static_cast<double>(j) * dz - 0.5 * size_z});
        }
    }
    auto id = [nx](std::size_t i, std::size_t j) { return static_cast<std::uint32_t>(j * nx + i); };
    for (std::size_t j = 0; j + 1 < nz; ++j) {
        for (std::size_t i = 0; i + 1 < nx; ++i) {
            // both triangles face +y
            m.triangles.push_back({id(i, j), id(i, j + 1), id(i + 1, j + 1)});
            m.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i + 1, j)});
        }
    }
    return m;
}

Mesh load_garment(const std::string& spec) {
    constexpr std::string_view prefix = "grid:";
    if (!spec.starts_with(prefix)) return load_obj(spec, MeshKind::garment);
    std::string body = spec.substr(prefix.size());
    double size = 1.0;
    if (auto colon = body.find(':'); colon != std::string::npos) {
        if (!parse_double(std::string_view(body).substr(colon + 1), size) || !(size > 0.0)) {
            throw ValidationError("bad grid size in '" + spec + "'");
        }
        body = body.substr(0, colon);
    }
    long nx = 0;
    long nz = 0;
    if (auto x = body.find('x'); x != std::string::npos) {
        if (!parse_long(std::string_view(body).substr(0, x), nx) ||
            !parse_long(std::string_view(body).substr(x + 1), nz)) {
            throw ValidationError("bad grid resolution in '" + spec + "'");
        }
    } else {
        if (!parse_long(body, nx)) throw ValidationError("bad grid resolution in '" + spec + "'");
        nz = nx;
    }
    if (nx < 2 || nz < 2) throw ValidationError("grid needs at least 2x2 vertices: '" + spec + "'");
    const double size_z = size * static_cast<double>(nz - 1) / static_cast<double>(nx - 1);
    return make_grid(static_cast<std::size_t>(nx), static_cast<std::size_t>(nz), size, size_z);
}

Mesh make_icosphere(const Vec3& center, double radius, int subdivisions) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    Positions unit = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& p : unit) p *= 1.0 / norm(p);
    std::vector<Triangle> tris = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                  {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                  {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                  {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::map<EdgeIndex, std::uint32_t> midpoint;
        auto mid = [&](std::uint32_t a, std::uint32_t b) {
            EdgeIndex key{std::min(a, b), std::max(a, b)};
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            Vec3 p = (unit[a] + unit[b]) * 0.5;
            p *= 1.0 / norm(p);
            unit.push_back(p);
            auto id = static_cast<std::uint32_t>(unit.size() - 1);
            midpoint.emplace(key, id);
            return id;
        };
        std::vector<Triangle> next;
        next.reserve(tris.size() * 4);
        for (const auto& tri : tris) {
            auto ab = mid(tri[0], tri[1]);
            auto bc = mid(tri[1], tri[2]);
            auto ca = mid(tri[2], tri[0]);
            next.push_back({tri[0], ab, ca});
            next.push_back({tri[1], bc, ab});
            next.push_back({tri[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        tris = std::move(next);
    }
    Mesh m;
    m.kind = MeshKind::body;
    for (const auto& p : unit) m.vertices.push_back(center + p * radius);
    m.triangles = std::move(tris);
    return m;
}

Mesh make_capsule(const Vec3& center, double radius, double half_length, int rings, int segments) {
    if (rings < 1 || segments < 3) throw ValidationError("capsule needs rings >= 1 and segments >= 3");
    Mesh m;
    m.kind = MeshKind::body;
    // latitude rows: north pole, `rings` rows on the +z cap (last at the
    // equator), `rings` rows on the -z cap (first at the equator), south pole
    m.vertices.push_back(center + Vec3{0, 0, half_length + radius});
    std::vector<std::pair<double, double>> rows;  // (polar angle, z offset)
    for (int r = 1; r <= rings; ++r) rows.emplace_back(0.5 * std::numbers::pi * r / rings, half_length);
    for (int r = 0; r < rings; ++r) {
        rows.emplace_back(0.5 * std::numbers::pi + 0.5 * std::numbers::pi * r / rings, -half_length);
    }
    for (const auto& [phi, zoff] : rows) {
        for (int s = 0; s < segments; ++s) {
            const double th = 2.0 * std::numbers::pi * s / segments;
            m.vertices.push_back(center + Vec3{radius * std::sin(phi) * std::cos(th),
                                               radius * std::sin(phi) * std::sin(th),
                                               zoff + radius * std::cos(phi)});
        }
    }
    m.vertices.push_back(center + Vec3{0, 0, -half_length - radius});
    const auto south = static_cast<std::uint32_t>(m.vertices.size() - 1);
    const auto seg = static_cast<std::uint32_t>(segments);
    auto row_id = [seg](std::size_t row, std::uint32_t s) {
        return static_cast<std::uint32_t>(1 + row * seg + (s % seg));
    };
    for (std::uint32_t s = 0; s < seg; ++s) m.triangles.push_back({0, row_id(0, s), row_id(0, s + 1)});
    for (std::size_t r = 0; r + 1 < rows.size(); ++r) {
        for (std::uint32_t s = 0; s < seg; ++s) {
            m.triangles.push_back({row_id(r, s), row_id(r + 1, s), row_id(r + 1, s + 1)});
            m.triangles.push_back({row_id(r, s), row_id(r + 1, s + 1), row_id(r, s + 1)});
        }
    }
    const std::size_t last = rows.size() - 1;
    for (std::uint32_t s = 0; s < seg; ++s) m.triangles.push_back({south, row_id(last, s + 1), row_id(last, s)});
    return m;
}

}  // namespace eslr
