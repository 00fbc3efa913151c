#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "errors.hpp"
#include "vec3.hpp"

namespace psurf {

using Face = std::array<int, 3>;

/// Neighbor slot value for an edge without an adjacent face.
inline constexpr int kFreeEdge = -1;

/// Oriented triangle mesh of one surface.
///
/// Local edge e of face f runs from faces[f][e] to faces[f][(e+1)%3];
/// neighbors[f][e] is the face across that edge or kFreeEdge. For a closed,
/// consistently oriented mesh the neighbor traverses the same edge in the
/// opposite direction. Face normals follow the right-hand rule over the stored
/// vertex order and point from the minus region into the plus region.
struct SurfaceMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<std::array<int, 3>> neighbors;
  int surface_id = 1;

  std::size_t num_vertices() const { return vertices.size(); }
  std::size_t num_faces() const { return faces.size(); }
  friend bool operator==(const SurfaceMesh&, const SurfaceMesh&) = default;
};

/// Region labels on the two sides of a surface: the normal points from
/// `minus` (inside) to `plus` (outside).
struct RegionPair {
  int plus = 1;
  int minus = 2;
  friend bool operator==(const RegionPair&, const RegionPair&) = default;
};

/// All evolving surfaces plus the region map i -> (k+(i), k-(i)).
struct SurfaceSet {
  std::vector<SurfaceMesh> meshes;
  std::vector<RegionPair> regions;
  int num_regions = 2;

  std::size_t size() const { return meshes.size(); }
  std::size_t total_vertices() const {
    std::size_t n = 0;
    for (const auto& m : meshes) n += m.num_vertices();
    return n;
  }
  int next_surface_id() const {
    int id = 0;
    for (const auto& m : meshes) id = std::max(id, m.surface_id);
    return id + 1;
  }
  void add(SurfaceMesh mesh, RegionPair r) {
    meshes.push_back(std::move(mesh));
    regions.push_back(r);
  }
  friend bool operator==(const SurfaceSet&, const SurfaceSet&) = default;

  /// Throws ParameterError when ids repeat or region labels are out of range.
  void validate() const {
    if (regions.size() != meshes.size()) throw ParameterError("one region pair per surface required");
    std::set<int> ids;
    for (std::size_t i = 0; i < meshes.size(); ++i) {
      if (!ids.insert(meshes[i].surface_id).second)
        throw ParameterError("duplicate surface id " + std::to_string(meshes[i].surface_id));
      const auto& r = regions[i];
      if (r.plus < 1 || r.plus > num_regions || r.minus < 1 || r.minus > num_regions ||
          r.plus == r.minus)
        throw ParameterError("invalid region pair for surface " +
                             std::to_string(meshes[i].surface_id));
    }
  }
};

// ---------------------------------------------------------------------------
// Adjacency

struct AdjacencyReport {
  int free_edges = 0;
  int nonmanifold_edges = 0;
  int misoriented_edges = 0;
};

/// Rebuilds face->face neighbor triples from the face list. Edges shared by
/// more than two faces, or by two faces with the same direction, are left free
/// and counted in the report.
inline AdjacencyReport build_adjacency(SurfaceMesh& m) {
  struct HalfEdge {
    int lo, hi, face, edge;
    bool forward;
  };
  std::vector<HalfEdge> hes;
  hes.reserve(m.faces.size() * 3);
  for (int f = 0; f < static_cast<int>(m.faces.size()); ++f)
    for (int e = 0; e < 3; ++e) {
      const int a = m.faces[f][e], b = m.faces[f][(e + 1) % 3];
      hes.push_back({std::min(a, b), std::max(a, b), f, e, a < b});
    }
  std::sort(hes.begin(), hes.end(), [](const HalfEdge& x, const HalfEdge& y) {
    return std::tie(x.lo, x.hi, x.face, x.edge) < std::tie(y.lo, y.hi, y.face, y.edge);
  });
  m.neighbors.assign(m.faces.size(), {kFreeEdge, kFreeEdge, kFreeEdge});
  AdjacencyReport rep;
  for (std::size_t s = 0; s < hes.size();) {
    std::size_t t = s;
    while (t < hes.size() && hes[t].lo == hes[s].lo && hes[t].hi == hes[s].hi) ++t;
    const std::size_t count = t - s;
    if (count == 1) {
      ++rep.free_edges;
    } else if (count == 2) {
      const auto& x = hes[s];
      const auto& y = hes[s + 1];
      if (x.forward != y.forward) {
        m.neighbors[x.face][x.edge] = y.face;
        m.neighbors[y.face][y.edge] = x.face;
      } else {
        ++rep.misoriented_edges;
      }
    } else {
      ++rep.nonmanifold_edges;
    }
    s = t;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Geometry

struct AreaNormal {
  double area = 0.0;
  Vec3 normal;
};

inline Box bounding_box(const SurfaceMesh& m) {
  if (m.vertices.empty()) return {};
  Box b{m.vertices.front(), m.vertices.front()};
  for (const auto& p : m.vertices) b.expand(p);
  return b;
}

/// Area below which a face counts as degenerate: 1e-12 * (bbox diagonal)^2.
inline double degenerate_area_threshold(const SurfaceMesh& m) {
  return 1e-12 * squared_norm(bounding_box(m).extent());
}

/// Area-weighted normal (q2-q1)x(q3-q1)/2 of face f without normalization.
inline Vec3 face_area_vector(const SurfaceMesh& m, int f) {
  const auto& t = m.faces[f];
  const Vec3& a = m.vertices[t[0]];
  return 0.5 * cross(m.vertices[t[1]] - a, m.vertices[t[2]] - a);
}

inline double face_area(const SurfaceMesh& m, int f) { return norm(face_area_vector(m, f)); }

/// Area and unit normal of face f; throws DegenerateFaceError for collinear vertices.
inline AreaNormal face_area_normal(const SurfaceMesh& m, int f) {
  const Vec3 w = face_area_vector(m, f);
  const double area = norm(w);
  if (!(area > degenerate_area_threshold(m)) || area == 0.0)
    throw DegenerateFaceError("face " + std::to_string(f) + " of surface " +
                              std::to_string(m.surface_id) + " is degenerate");
  return {area, w / area};
}

/// Interior angles of face f in degrees, ordered by vertex.
inline std::array<double, 3> face_angles(const SurfaceMesh& m, int f) {
  const auto& t = m.faces[f];
  std::array<double, 3> out{};
  for (int c = 0; c < 3; ++c) {
    const Vec3& p = m.vertices[t[c]];
    out[c] = angle_deg(m.vertices[t[(c + 1) % 3]] - p, m.vertices[t[(c + 2) % 3]] - p);
  }
  return out;
}

inline double surface_area(const SurfaceMesh& m) {
  double a = 0.0;
  for (int f = 0; f < static_cast<int>(m.faces.size()); ++f) a += face_area(m, f);
  return a;
}

/// Per-vertex star areas |Lambda_v| and weighted normals
/// omega_v = (1/|Lambda_v|) sum_{f ni v} |f| nu_f, computed in one pass over faces.
struct VertexGeometry {
  std::vector<double> star_area;
  std::vector<Vec3> omega;
};

inline VertexGeometry vertex_geometry(const SurfaceMesh& m) {
  VertexGeometry g;
  g.star_area.assign(m.vertices.size(), 0.0);
  g.omega.assign(m.vertices.size(), Vec3{});
  for (int f = 0; f < static_cast<int>(m.faces.size()); ++f) {
    const Vec3 w = face_area_vector(m, f);  // |f| nu_f
    const double a = norm(w);
    for (int v : m.faces[f]) {
      g.star_area[v] += a;
      g.omega[v] += w;
    }
  }
  for (std::size_t v = 0; v < m.vertices.size(); ++v)
    if (g.star_area[v] > 0.0) g.omega[v] /= g.star_area[v];
  return g;
}

/// omega_v for a single vertex. Throws TopologyError for an isolated vertex.
inline Vec3 weighted_vertex_normal(const SurfaceMesh& m, int v) {
  Vec3 sum;
  double star = 0.0;
  for (int f = 0; f < static_cast<int>(m.faces.size()); ++f) {
    const auto& t = m.faces[f];
    if (t[0] != v && t[1] != v && t[2] != v) continue;
    const Vec3 w = face_area_vector(m, f);
    sum += w;
    star += norm(w);
  }
  if (star == 0.0) throw TopologyError("vertex " + std::to_string(v) + " belongs to no face");
  return sum / star;
}

/// omega_v / |omega_v|; empty when omega_v vanishes.
inline std::optional<Vec3> unit_vertex_normal(const SurfaceMesh& m, int v) {
  const Vec3 w = weighted_vertex_normal(m, v);
  const double n = norm(w);
  if (n == 0.0) return std::nullopt;
  return w / n;
}

// ---------------------------------------------------------------------------
// Topology

struct TopologyStats {
  int vertices = 0;  // referenced vertices only
  int edges = 0;
  int faces = 0;
  int euler = 0;
  int boundary_edges = 0;
  int components = 0;
  bool closed = false;

  /// (2 - chi)/2 per component sum; meaningful for closed meshes.
  int genus() const { return (2 * components - euler) / 2; }
};

inline int count_components(const SurfaceMesh& m) {
  std::vector<int> parent(m.vertices.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<char> used(m.vertices.size(), 0);
  for (const auto& t : m.faces) {
    for (int v : t) used[v] = 1;
    parent[find(t[1])] = find(t[0]);
    parent[find(t[2])] = find(t[0]);
  }
  int n = 0;
  for (std::size_t v = 0; v < m.vertices.size(); ++v)
    if (used[v] && find(static_cast<int>(v)) == static_cast<int>(v)) ++n;
  return n;
}

inline TopologyStats topology_stats(const SurfaceMesh& m) {
  TopologyStats s;
  std::vector<char> used(m.vertices.size(), 0);
  std::vector<std::pair<int, int>> edges;
  edges.reserve(m.faces.size() * 3);
  for (const auto& t : m.faces)
    for (int e = 0; e < 3; ++e) {
      used[t[e]] = 1;
      const int a = t[e], b = t[(e + 1) % 3];
      edges.emplace_back(std::min(a, b), std::max(a, b));
    }
  std::sort(edges.begin(), edges.end());
  for (std::size_t i = 0; i < edges.size();) {
    std::size_t j = i;
    while (j < edges.size() && edges[j] == edges[i]) ++j;
    ++s.edges;
    if (j - i == 1) ++s.boundary_edges;
    i = j;
  }
  s.vertices = static_cast<int>(std::count(used.begin(), used.end(), 1));
  s.faces = static_cast<int>(m.faces.size());
  s.euler = s.vertices - s.edges + s.faces;
  s.components = count_components(m);
  s.closed = s.boundary_edges == 0 && !m.faces.empty();
  return s;
}

inline int euler_characteristic(const SurfaceMesh& m) { return topology_stats(m).euler; }

struct ManifoldCheck {
  bool ok = true;
  std::string message;
};

/// Closed, consistently oriented 2-manifold check: every undirected edge is
/// used by exactly two faces in opposite directions, every vertex link is a
/// single cycle, no face repeats a vertex, and the stored neighbor relation is
/// symmetric and matches the faces.
inline ManifoldCheck check_closed_manifold(const SurfaceMesh& m) {
  auto fail = [](std::string msg) { return ManifoldCheck{false, std::move(msg)}; };
  if (m.faces.empty()) return fail("mesh has no faces");
  const int nv = static_cast<int>(m.vertices.size());
  for (std::size_t f = 0; f < m.faces.size(); ++f) {
    const auto& t = m.faces[f];
    for (int v : t)
      if (v < 0 || v >= nv) return fail("face " + std::to_string(f) + " has out-of-range vertex");
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
      return fail("face " + std::to_string(f) + " repeats a vertex");
  }
  std::map<std::pair<int, int>, int> directed;
  for (const auto& t : m.faces)
    for (int e = 0; e < 3; ++e)
      if (++directed[{t[e], t[(e + 1) % 3]}] > 1)
        return fail("directed edge used twice (orientation or non-manifold)");
  for (const auto& [edge, count] : directed)
    if (!directed.count({edge.second, edge.first}))
      return fail("edge " + std::to_string(edge.first) + "-" + std::to_string(edge.second) +
                  " has no opposite half-edge");
  // Vertex links: at vertex a in face (a,b,c) the wedge maps b -> c.
  std::vector<std::vector<std::pair<int, int>>> wedges(nv);
  for (const auto& t : m.faces)
    for (int c = 0; c < 3; ++c) wedges[t[c]].emplace_back(t[(c + 1) % 3], t[(c + 2) % 3]);
  for (int v = 0; v < nv; ++v) {
    const auto& w = wedges[v];
    if (w.empty()) continue;
    std::map<int, int> next;
    for (const auto& [b, c] : w) next[b] = c;
    int cur = w.front().first;
    std::size_t steps = 0;
    do {
      auto it = next.find(cur);
      if (it == next.end()) return fail("vertex " + std::to_string(v) + " has an open link");
      cur = it->second;
      ++steps;
    } while (cur != w.front().first && steps <= w.size());
    if (steps != w.size())
      return fail("vertex " + std::to_string(v) + " is non-manifold (link has several cycles)");
  }
  if (m.neighbors.size() != m.faces.size()) return fail("neighbor table size mismatch");
  for (std::size_t f = 0; f < m.faces.size(); ++f)
    for (int e = 0; e < 3; ++e) {
      const int g = m.neighbors[f][e];
      if (g < 0 || g >= static_cast<int>(m.faces.size()))
        return fail("face " + std::to_string(f) + " has a free edge");
      const int a = m.faces[f][e], b = m.faces[f][(e + 1) % 3];
      bool found = false;
      for (int k = 0; k < 3; ++k)
        if (m.faces[g][k] == b && m.faces[g][(k + 1) % 3] == a && m.neighbors[g][k] == static_cast<int>(f))
          found = true;
      if (!found) return fail("neighbor relation asymmetric at face " + std::to_string(f));
    }
  return {};
}

/// Signed volume (1/6) sum_f det(q1,q2,q3); positive for outward orientation.
inline double signed_volume(const SurfaceMesh& m) {
  double v = 0.0;
  for (const auto& t : m.faces)
    v += dot(m.vertices[t[0]], cross(m.vertices[t[1]], m.vertices[t[2]]));
  return v / 6.0;
}

struct VolumeArea {
  double volume = 0.0;
  double area = 0.0;
};

/// Enclosed volume (divergence theorem) and total area of a closed mesh.
inline VolumeArea enclosed_volume_and_area(const SurfaceMesh& m) {
  if (!topology_stats(m).closed) throw TopologyError("volume requires a closed mesh");
  return {std::abs(signed_volume(m)), surface_area(m)};
}

/// Sum over faces of |f| nu_f; vanishes for a closed mesh.
inline Vec3 total_area_vector(const SurfaceMesh& m) {
  Vec3 s;
  for (int f = 0; f < static_cast<int>(m.faces.size()); ++f) s += face_area_vector(m, f);
  return s;
}

inline void flip_orientation(SurfaceMesh& m) {
  for (auto& t : m.faces) std::swap(t[1], t[2]);
  build_adjacency(m);
}

/// Drops unreferenced vertices and renumbers faces accordingly.
inline void compact_vertices(SurfaceMesh& m) {
  std::vector<int> remap(m.vertices.size(), -1);
  std::vector<Vec3> kept;
  kept.reserve(m.vertices.size());
  for (auto& t : m.faces)
    for (int& v : t) {
      if (remap[v] < 0) {
        remap[v] = static_cast<int>(kept.size());
        kept.push_back(m.vertices[v]);
      }
      v = remap[v];
    }
  m.vertices = std::move(kept);
}

// ---------------------------------------------------------------------------
// Export / import

/// Wavefront OBJ with one `o surface_<id>` object per mesh, 1-based indices.
inline void write_obj(std::ostream& out, const SurfaceSet& s) {
  out << std::setprecision(17);
  std::size_t offset = 1;
  for (const auto& m : s.meshes) {
    out << "o surface_" << m.surface_id << '\n';
    for (const auto& p : m.vertices) out << "v " << p.x << ' ' << p.y << ' ' << p.z << '\n';
    for (const auto& t : m.faces)
      out << "f " << t[0] + offset << ' ' << t[1] + offset << ' ' << t[2] + offset << '\n';
    offset += m.vertices.size();
  }
}

inline void export_obj(const SurfaceSet& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_obj(out, s);
  if (!out) throw Error("write failed for " + path.string());
}

/// Reads OBJ objects/groups back into meshes (positions and triangles only).
/// Vertex indices are global in OBJ; each object keeps the vertices it uses.
inline std::vector<SurfaceMesh> import_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(LoadError::Kind::MissingFile, "missing mesh file " + path.string());
  std::vector<Vec3> positions;
  std::vector<std::vector<Face>> groups(1);
  std::vector<int> ids{1};
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Vec3 p;
      ls >> p.x >> p.y >> p.z;
      positions.push_back(p);
    } else if (tag == "o" || tag == "g") {
      std::string name;
      ls >> name;
      int id = static_cast<int>(groups.size());
      if (auto pos = name.rfind('_'); pos != std::string::npos) {
        try {
          id = std::stoi(name.substr(pos + 1));
        } catch (...) {
        }
      }
      if (groups.back().empty()) {
        ids.back() = id;
      } else {
        groups.emplace_back();
        ids.push_back(id);
      }
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        const int v = std::stoi(tok.substr(0, tok.find('/')));
        idx.push_back(v > 0 ? v - 1 : static_cast<int>(positions.size()) + v);
      }
      for (std::size_t k = 1; k + 1 < idx.size(); ++k)
        groups.back().push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  std::vector<SurfaceMesh> out;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) continue;
    SurfaceMesh m;
    m.surface_id = ids[g];
    // Keep the used vertices in file order so indices survive a round trip.
    std::map<int, int> local;
    for (const auto& t : groups[g])
      for (int v : t) {
        if (v < 0 || v >= static_cast<int>(positions.size()))
          throw LoadError(LoadError::Kind::BadHeader, "face index out of range in " + path.string());
        local.emplace(v, 0);
      }
    for (auto& [global, idx] : local) {
      idx = static_cast<int>(m.vertices.size());
      m.vertices.push_back(positions[global]);
    }
    for (auto t : groups[g]) {
      for (int& v : t) v = local.at(v);
      m.faces.push_back(t);
    }
    build_adjacency(m);
    out.push_back(std::move(m));
  }
  return out;
}

/// Binary STL (80-byte header, little-endian) of all surfaces.
inline void export_stl(const SurfaceSet& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  char header[80] = "psurf binary STL";
  out.write(header, 80);
  std::uint32_t count = 0;
  for (const auto& m : s.meshes) count += static_cast<std::uint32_t>(m.faces.size());
  auto put_u32 = [&](std::uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
  };
  auto put_f32 = [&](double x) { put_u32(std::bit_cast<std::uint32_t>(static_cast<float>(x))); };
  put_u32(count);
  for (const auto& m : s.meshes)
    for (int f = 0; f < static_cast<int>(m.faces.size()); ++f) {
      const Vec3 n = normalized(face_area_vector(m, f));
      put_f32(n.x), put_f32(n.y), put_f32(n.z);
      for (int v : m.faces[f]) {
        const Vec3& p = m.vertices[v];
        put_f32(p.x), put_f32(p.y), put_f32(p.z);
      }
      out.write("\0\0", 2);
    }
}

}  // namespace psurf
