#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "hungarian.hpp"
#include "trimesh.hpp"
#include "vec3.hpp"

namespace psurf {

// ---------------------------------------------------------------------------
// Parameters and the background grid

struct DetectionParams {
  double a = 0.025;        // cube edge length
  int n_detect = 10;       // node-count trigger
  double thr1 = 30.0;      // degrees: "same direction"
  double thr2 = 150.0;     // degrees: "opposite direction"
  double thr3 = 40.0;      // degrees: outlier cone around both group averages
  double outlier_fraction = 0.05;
  double split_fraction = 1.0 / 3.0;
  int max_restarts = 10;

  void validate() const {
    if (!(a > 0.0)) throw ParameterError("detection grid size a must be positive");
    if (n_detect < 2) throw ParameterError("N_detect must be at least 2");
    if (!(0.0 < thr1 && thr1 < thr3 && thr3 < thr2 && thr2 < 180.0))
      throw ParameterError("detection angles must satisfy 0 < thr1 < thr3 < thr2 < 180");
    if (!(outlier_fraction >= 0.0 && outlier_fraction < 0.5))
      throw ParameterError("outlier_fraction must lie in [0, 0.5)");
    if (!(split_fraction > 0.0 && split_fraction < 1.0))
      throw ParameterError("split_fraction must lie in (0, 1)");
    if (max_restarts < 1) throw ParameterError("max_restarts must be at least 1");
  }
};

/// A vertex of a SurfaceSet: (position of its mesh in the set, local index).
struct NodeRef {
  int mesh = 0;
  int vertex = 0;
  friend auto operator<=>(const NodeRef&, const NodeRef&) = default;
};

using CubeIndex = std::array<int, 3>;

/// Uniform cube hash over a box. Only occupied cubes are stored.
class BackgroundGrid {
 public:
  BackgroundGrid(double a, const Box& box) : a_(a), box_(box) {
    if (!(a > 0.0)) throw ParameterError("detection grid size a must be positive");
    const Vec3 e = box.extent();
    for (int d = 0; d < 3; ++d) dims_[d] = std::max(1, static_cast<int>(std::ceil(e[d] / a - 1e-9)));
  }

  double cube_size() const { return a_; }
  const Box& box() const { return box_; }
  const CubeIndex& dims() const { return dims_; }

  CubeIndex cube_of(const Vec3& p) const {
    CubeIndex c;
    for (int d = 0; d < 3; ++d)
      c[d] = std::clamp(static_cast<int>(std::floor((p[d] - box_.lo[d]) / a_)), 0, dims_[d] - 1);
    return c;
  }
  std::int64_t key(const CubeIndex& c) const {
    return c[0] + static_cast<std::int64_t>(dims_[0]) * (c[1] + static_cast<std::int64_t>(dims_[1]) * c[2]);
  }
  CubeIndex unkey(std::int64_t k) const {
    const int i = static_cast<int>(k % dims_[0]);
    k /= dims_[0];
    return {i, static_cast<int>(k % dims_[1]), static_cast<int>(k / dims_[1])};
  }
  Box cube_box(const CubeIndex& c) const {
    Vec3 lo = box_.lo;
    for (int d = 0; d < 3; ++d) lo[d] += c[d] * a_;
    return {lo, lo + Vec3{a_, a_, a_}};
  }

  /// Appends a node and returns the cube's list after insertion.
  std::vector<int>& insert(const Vec3& p, int node) {
    auto& list = cells_[key(cube_of(p))];
    list.push_back(node);
    return list;
  }
  const std::vector<int>* find(const CubeIndex& c) const {
    for (int d = 0; d < 3; ++d)
      if (c[d] < 0 || c[d] >= dims_[d]) return nullptr;
    const auto it = cells_.find(key(c));
    return it == cells_.end() ? nullptr : &it->second;
  }
  const std::unordered_map<std::int64_t, std::vector<int>>& cells() const { return cells_; }
  std::size_t registered_nodes() const {
    std::size_t n = 0;
    for (const auto& [k, v] : cells_) n += v.size();
    return n;
  }

 private:
  double a_;
  Box box_;
  CubeIndex dims_{1, 1, 1};
  std::unordered_map<std::int64_t, std::vector<int>> cells_;
};

/// Result of one detection pass. Nodes are numbered globally in set order.
struct Detection {
  BackgroundGrid grid;
  std::vector<NodeRef> nodes;
  std::vector<int> surface_ids;       // per node
  std::vector<Vec3> normals;          // unit weighted normals (zero if undefined)
  std::vector<CubeIndex> flagged;     // descending node count, then ascending key
};

/// Registers every vertex in the background grid and flags cubes that hold more
/// than N_detect nodes, nodes of two surfaces, or two nearly opposite normals.
/// `domain` is grown to contain all vertices.
inline Detection detect(const SurfaceSet& s, const DetectionParams& p, Box domain) {
  if (!(p.a > 0.0)) throw ParameterError("detection grid size a must be positive");
  for (const auto& m : s.meshes)
    for (const auto& v : m.vertices) domain.expand(v);
  Detection d{BackgroundGrid(p.a, domain), {}, {}, {}, {}};
  const std::size_t n = s.total_vertices();
  d.nodes.reserve(n);
  d.surface_ids.reserve(n);
  d.normals.reserve(n);
  for (int mi = 0; mi < static_cast<int>(s.meshes.size()); ++mi) {
    const auto& m = s.meshes[mi];
    const VertexGeometry g = vertex_geometry(m);
    for (int v = 0; v < static_cast<int>(m.vertices.size()); ++v) {
      d.nodes.push_back({mi, v});
      d.surface_ids.push_back(m.surface_id);
      d.normals.push_back(normalized(g.omega[v]));
    }
  }
  const double cos_thr2 = std::cos(p.thr2 * std::numbers::pi / 180.0);
  std::unordered_map<std::int64_t, char> flag;
  for (int j = 0; j < static_cast<int>(n); ++j) {
    const Vec3& x = s.meshes[d.nodes[j].mesh].vertices[d.nodes[j].vertex];
    auto& list = d.grid.insert(x, j);
    const std::int64_t k = d.grid.key(d.grid.cube_of(x));
    char& f = flag[k];
    if (f) continue;
    if (static_cast<int>(list.size()) > p.n_detect) {
      f = 1;
      continue;
    }
    for (std::size_t q = 0; q + 1 < list.size(); ++q) {
      const int o = list[q];
      if (d.surface_ids[o] != d.surface_ids[j] ||
          (squared_norm(d.normals[o]) > 0.0 && squared_norm(d.normals[j]) > 0.0 &&
           dot(d.normals[o], d.normals[j]) < cos_thr2)) {
        f = 1;
        break;
      }
    }
  }
  std::vector<std::pair<std::size_t, std::int64_t>> order;
  for (const auto& [k, f] : flag)
    if (f) order.emplace_back(d.grid.cells().at(k).size(), k);
  std::sort(order.begin(), order.end(), [](const auto& x, const auto& y) {
    return x.first != y.first ? x.first > y.first : x.second < y.second;
  });
  for (const auto& [count, k] : order) d.flagged.push_back(d.grid.unkey(k));
  return d;
}

// ---------------------------------------------------------------------------
// Classification

enum class TopoKind { None, Split, Merge, GenusIncrease, GenusDecrease };

inline const char* to_string(TopoKind k) {
  switch (k) {
    case TopoKind::Split: return "split";
    case TopoKind::Merge: return "merge";
    case TopoKind::GenusIncrease: return "genus_increase";
    case TopoKind::GenusDecrease: return "genus_decrease";
    default: return "none";
  }
}

struct TopoEvent {
  TopoKind kind = TopoKind::None;
  CubeIndex cube{0, 0, 0};
  std::int64_t cube_key = 0;
  std::vector<NodeRef> nodes;  // S: the cube's nodes first, then its neighbors'
  std::vector<int> surface_ids;  // distinct ids in S, ascending
  Vec3 n1, n2;
  int group1 = 0, group2 = 0, n0 = 0;
};

/// Nodes of the cube followed by those of its (up to 26) neighbors, each part
/// in ascending node order.
inline std::vector<int> gather_neighborhood(const Detection& d, const CubeIndex& c) {
  std::vector<int> out;
  if (const auto* own = d.grid.find(c)) out = *own;
  std::sort(out.begin(), out.end());
  std::vector<int> rest;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx)
        if (dx != 0 || dy != 0 || dz != 0)
          if (const auto* list = d.grid.find({c[0] + dx, c[1] + dy, c[2] + dz}))
            rest.insert(rest.end(), list->begin(), list->end());
  std::sort(rest.begin(), rest.end());
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

/// Two-group growth on weighted normals around cube `c`.
inline TopoEvent classify(const Detection& d, const CubeIndex& c, const SurfaceSet& s,
                          const DetectionParams& p) {
  TopoEvent ev;
  ev.cube = c;
  ev.cube_key = d.grid.key(c);
  std::vector<int> S;
  for (int j : gather_neighborhood(d, c))
    if (squared_norm(d.normals[j]) > 0.0) S.push_back(j);
  std::set<int> ids;
  for (int j : S) {
    ev.nodes.push_back(d.nodes[j]);
    ids.insert(d.surface_ids[j]);
  }
  ev.surface_ids.assign(ids.begin(), ids.end());
  const int nc = static_cast<int>(S.size());
  if (nc < 2) return ev;

  const double deg = std::numbers::pi / 180.0;
  const double c1 = std::cos(p.thr1 * deg), c2 = std::cos(p.thr2 * deg), c3 = std::cos(p.thr3 * deg);
  const double min_group = p.outlier_fraction * nc;
  const int restarts = std::min(nc, p.max_restarts);

  for (int seed = 0; seed < restarts; ++seed) {
    const Vec3& a = d.normals[S[seed]];
    std::vector<char> group(S.size(), 0);
    Vec3 sum1, sum2;
    int rep2 = -1, g1 = 0, g2 = 0;
    for (std::size_t q = 0; q < S.size(); ++q) {
      const int j = S[q];
      const double ca = dot(d.normals[j], a);
      if (ca > c1) {
        group[q] = 1;
      } else if (ca < c2 && (rep2 < 0 || dot(d.normals[j], d.normals[rep2]) > c1)) {
        if (rep2 < 0) rep2 = j;
        group[q] = 2;
      }
      if (group[q] == 1) sum1 += d.normals[j], ++g1;
      if (group[q] == 2) sum2 += d.normals[j], ++g2;
    }
    if (rep2 < 0) continue;
    const Vec3 n1 = normalized(sum1), n2 = normalized(sum2);
    int n0 = 0;
    for (std::size_t q = 0; q < S.size(); ++q) {
      const double d1 = dot(d.normals[S[q]], n1), d2 = dot(d.normals[S[q]], n2);
      if (group[q] == 0) {
        if (d1 > c1) ++g1;
        else if (d2 > c1) ++g2;
      }
      if (d1 < c3 && d2 < c3) ++n0;
    }
    if (g1 == 0 || g2 == 0 || g1 < min_group || g2 < min_group) continue;
    ev.n1 = n1;
    ev.n2 = n2;
    ev.group1 = g1;
    ev.group2 = g2;
    ev.n0 = n0;
    if (n0 > p.split_fraction * nc) {
      // Pinch of one surface. On a sphere any cut separates, so genus 0
      // means split; otherwise the component count after deletion decides.
      if (ids.size() != 1) return ev;
      const auto& m = s.meshes[ev.nodes.front().mesh];
      const TopologyStats st = topology_stats(m);
      ev.kind = st.genus() > 0 ? TopoKind::GenusDecrease : TopoKind::Split;
    } else if (ids.size() == 2) {
      ev.kind = TopoKind::Merge;
    } else if (ids.size() == 1) {
      ev.kind = TopoKind::GenusIncrease;
    }
    return ev;
  }
  return ev;
}

// ---------------------------------------------------------------------------
// Surgery helpers

namespace detail {

/// Removes faces touching `doomed` vertices, then faces with two or three free
/// edges and faces around a vertex where the boundary passes more than once,
/// until none remain. Vertices are kept (not compacted).
inline SurfaceMesh carve(const SurfaceMesh& m, const std::vector<char>& doomed) {
  SurfaceMesh r;
  r.vertices = m.vertices;
  r.surface_id = m.surface_id;
  for (const auto& t : m.faces)
    if (!doomed[t[0]] && !doomed[t[1]] && !doomed[t[2]]) r.faces.push_back(t);
  for (;;) {
    build_adjacency(r);
    std::vector<int> out_free(r.vertices.size(), 0);
    for (std::size_t f = 0; f < r.faces.size(); ++f)
      for (int e = 0; e < 3; ++e)
        if (r.neighbors[f][e] == kFreeEdge) ++out_free[r.faces[f][e]];
    std::vector<Face> keep;
    keep.reserve(r.faces.size());
    for (std::size_t f = 0; f < r.faces.size(); ++f) {
      const int free = static_cast<int>(std::count(r.neighbors[f].begin(), r.neighbors[f].end(), kFreeEdge));
      const auto& t = r.faces[f];
      const bool pinched = out_free[t[0]] > 1 || out_free[t[1]] > 1 || out_free[t[2]] > 1;
      if (free < 2 && !pinched) keep.push_back(t);
    }
    if (keep.size() == r.faces.size()) return r;
    r.faces = std::move(keep);
  }
}

/// Face components through the neighbor relation; returns the component id per face.
inline std::vector<int> face_components(const SurfaceMesh& m, int& count) {
  std::vector<int> comp(m.faces.size(), -1);
  count = 0;
  for (std::size_t f0 = 0; f0 < m.faces.size(); ++f0) {
    if (comp[f0] >= 0) continue;
    std::vector<int> stack{static_cast<int>(f0)};
    comp[f0] = count;
    while (!stack.empty()) {
      const int f = stack.back();
      stack.pop_back();
      for (int g : m.neighbors[f])
        if (g != kFreeEdge && comp[g] < 0) {
          comp[g] = count;
          stack.push_back(g);
        }
    }
    ++count;
  }
  return comp;
}

/// Drops the smallest face components while more than `expected` remain and
/// the smallest holds under a quarter of the faces. A ring-shaped contact
/// leaves a disc of each sheet standing inside it; those discs bound a pocket
/// that is being squeezed out anyway and would add extra boundary loops.
inline void drop_islands(SurfaceMesh& m, int expected) {
  for (;;) {
    build_adjacency(m);
    int n = 0;
    const std::vector<int> comp = face_components(m, n);
    if (n <= expected) return;
    std::vector<int> size(n, 0);
    for (int c : comp) ++size[c];
    const int smallest = static_cast<int>(std::min_element(size.begin(), size.end()) - size.begin());
    if (4 * size[smallest] >= static_cast<int>(m.faces.size())) return;
    std::vector<Face> keep;
    for (std::size_t f = 0; f < m.faces.size(); ++f)
      if (comp[f] != smallest) keep.push_back(m.faces[f]);
    m.faces = std::move(keep);
    m = carve(m, std::vector<char>(m.vertices.size(), 0));
  }
}

/// Boundary loops as vertex cycles u0 -> u1 -> ... following the free half-edges.
/// Empty optional when a vertex carries two outgoing free edges (self-touching loop).
inline std::optional<std::vector<std::vector<int>>> boundary_loops(const SurfaceMesh& m) {
  std::map<int, int> next;
  for (std::size_t f = 0; f < m.faces.size(); ++f)
    for (int e = 0; e < 3; ++e)
      if (m.neighbors[f][e] == kFreeEdge)
        if (!next.emplace(m.faces[f][e], m.faces[f][(e + 1) % 3]).second) return std::nullopt;
  std::vector<std::vector<int>> loops;
  std::set<int> seen;
  for (const auto& [start, unused] : next) {
    if (seen.count(start)) continue;
    std::vector<int> loop;
    int v = start;
    do {
      if (!seen.insert(v).second) return std::nullopt;
      loop.push_back(v);
      const auto it = next.find(v);
      if (it == next.end()) return std::nullopt;
      v = it->second;
    } while (v != start);
    loops.push_back(std::move(loop));
  }
  return loops;
}

inline int total_euler(const SurfaceSet& s) {
  int chi = 0;
  for (const auto& m : s.meshes) chi += euler_characteristic(m);
  return chi;
}

/// Closes a boundary loop with a fan to a fresh vertex at `center`, then halves
/// the fan valence with the 2-to-4 rewrite until it is at most `max_valence`.
/// The event point, pulled towards the loop when it lies further from the
/// loop centroid than the mean loop radius (a tiny loop would grow a spike).
inline Vec3 cap_center(const SurfaceMesh& m, const std::vector<int>& loop, const Vec3& pE) {
  Vec3 cen;
  for (int v : loop) cen += m.vertices[v];
  cen /= static_cast<double>(loop.size());
  double rho = 0.0;
  for (int v : loop) rho += distance(m.vertices[v], cen);
  rho /= static_cast<double>(loop.size());
  const double d = distance(pE, cen);
  return d > rho ? cen + (rho / d) * (pE - cen) : pE;
}

inline void close_loop(SurfaceMesh& m, const std::vector<int>& loop, const Vec3& pE, int max_valence = 8) {
  const int c = static_cast<int>(m.vertices.size());
  m.vertices.push_back(cap_center(m, loop, pE));
  std::vector<int> ring = loop;  // fan faces are (c, ring[i+1], ring[i])
  while (static_cast<int>(ring.size()) > max_valence) {
    const int L = static_cast<int>(ring.size());
    std::vector<int> next;
    int i = 0;
    for (; i + 1 < L; i += 2) {
      const int x0 = ring[i], x1 = ring[i + 1], x2 = ring[(i + 2) % L];
      const int q = static_cast<int>(m.vertices.size());
      m.vertices.push_back((m.vertices[x0] + m.vertices[x1] + m.vertices[x2]) / 3.0);
      m.faces.push_back({q, x1, x0});
      m.faces.push_back({q, x2, x1});
      m.faces.push_back({q, x0, x2});
      next.push_back(x0);
    }
    if (i < L) next.push_back(ring[i]);
    ring = std::move(next);
  }
  const int L = static_cast<int>(ring.size());
  for (int i = 0; i < L; ++i) m.faces.push_back({c, ring[(i + 1) % L], ring[i]});
}

inline std::vector<char> doomed_mask(const SurfaceSet& s, const TopoEvent& e, int mesh, int offset,
                                     std::vector<char> mask) {
  for (const auto& n : e.nodes)
    if (n.mesh == mesh) mask[offset + n.vertex] = 1;
  return mask;
}

inline void finish_mesh(SurfaceMesh& m, const char* what) {
  compact_vertices(m);
  const auto rep = build_adjacency(m);
  (void)rep;
  const ManifoldCheck mc = check_closed_manifold(m);
  if (!mc.ok) throw SurgeryAbort(std::string(what) + ": result is not a closed manifold (" + mc.message + ")");
}

}  // namespace detail

struct SurgeryResult {
  SurfaceSet set;
  TopoKind kind = TopoKind::None;  // executed kind (may differ from the classified one)
  int chi_before = 0;
  int chi_after = 0;
  std::string note;
};

/// Cuts the pinched region S out of one surface and closes the holes with one
/// fresh vertex each at the mean of S. Two remaining components give a split,
/// one gives a genus decrease. Throws SurgeryAbort (input untouched) otherwise.
inline SurgeryResult split_or_genus_decrease(const SurfaceSet& s, const TopoEvent& e) {
  if (e.nodes.empty()) throw SurgeryAbort("split: empty node set");
  const int mi = e.nodes.front().mesh;
  for (const auto& n : e.nodes)
    if (n.mesh != mi) throw SurgeryAbort("split: node set spans more than one surface");
  const SurfaceMesh& src = s.meshes[mi];
  if (!check_closed_manifold(src).ok) throw SurgeryAbort("split: input surface is not closed");

  Vec3 pE;
  for (const auto& n : e.nodes) pE += src.vertices[n.vertex];
  pE /= static_cast<double>(e.nodes.size());

  SurfaceMesh cut = detail::carve(src, detail::doomed_mask(s, e, mi, 0, std::vector<char>(src.vertices.size(), 0)));
  int ncomp = 0;
  const std::vector<int> comp = detail::face_components(cut, ncomp);
  if (ncomp != 1 && ncomp != 2)
    throw SurgeryAbort("split: " + std::to_string(ncomp) + " components remain after deletion");
  const auto loops = detail::boundary_loops(cut);
  if (!loops) throw SurgeryAbort("split: boundary loop touches itself");
  if (loops->size() != 2)
    throw SurgeryAbort("split: expected two boundary loops, found " + std::to_string(loops->size()));
  for (const auto& l : *loops)
    if (l.size() < 3) throw SurgeryAbort("split: boundary loop shorter than three edges");

  SurgeryResult res;
  res.chi_before = detail::total_euler(s);
  res.kind = ncomp == 2 ? TopoKind::Split : TopoKind::GenusDecrease;
  if (res.kind != e.kind)
    res.note = std::string("classified as ") + to_string(e.kind) + ", component count gives " + to_string(res.kind);

  // Which component each vertex belongs to (faces of one loop share one component).
  std::vector<int> vcomp(cut.vertices.size(), -1);
  for (std::size_t f = 0; f < cut.faces.size(); ++f)
    for (int v : cut.faces[f]) vcomp[v] = comp[f];

  SurgeryResult out = res;
  out.set = s;
  if (res.kind == TopoKind::GenusDecrease) {
    SurfaceMesh m = cut;
    for (const auto& l : *loops) detail::close_loop(m, l, pE);
    detail::finish_mesh(m, "genus decrease");
    out.set.meshes[mi] = std::move(m);
    out.chi_after = detail::total_euler(out.set);
    if (out.chi_after != out.chi_before + 2) throw SurgeryAbort("genus decrease: Euler ledger mismatch");
    return out;
  }

  if (vcomp[(*loops)[0][0]] == vcomp[(*loops)[1][0]])
    throw SurgeryAbort("split: both boundary loops lie on one component");
  std::array<SurfaceMesh, 2> parts;
  for (int k = 0; k < 2; ++k) {
    parts[k].vertices = cut.vertices;
    for (std::size_t f = 0; f < cut.faces.size(); ++f)
      if (comp[f] == k) parts[k].faces.push_back(cut.faces[f]);
  }
  for (const auto& l : *loops) detail::close_loop(parts[vcomp[l[0]]], l, pE);
  for (auto& part : parts) detail::finish_mesh(part, "split");
  // The component holding the first face with a free edge takes the new id.
  int moved = 0;
  for (std::size_t f = 0; f < cut.faces.size(); ++f)
    if (std::count(cut.neighbors[f].begin(), cut.neighbors[f].end(), kFreeEdge) > 0) {
      moved = comp[f];
      break;
    }
  parts[1 - moved].surface_id = src.surface_id;
  parts[moved].surface_id = s.next_surface_id();
  out.set.meshes[mi] = std::move(parts[1 - moved]);
  out.set.add(std::move(parts[moved]), s.regions[mi]);
  out.chi_after = detail::total_euler(out.set);
  if (out.chi_after != out.chi_before + 2) throw SurgeryAbort("split: Euler ledger mismatch");
  return out;
}

namespace detail {

/// Bisects free edge u -> v of the face that owns it; returns the new vertex.
inline int bisect_free_edge(SurfaceMesh& m, int u, int v) {
  for (std::size_t f = 0; f < m.faces.size(); ++f)
    for (int e = 0; e < 3; ++e)
      if (m.faces[f][e] == u && m.faces[f][(e + 1) % 3] == v) {
        const int w = m.faces[f][(e + 2) % 3];
        const int q = static_cast<int>(m.vertices.size());
        m.vertices.push_back((m.vertices[u] + m.vertices[v]) / 2.0);
        m.faces[f] = {u, q, w};
        m.faces.push_back({q, v, w});
        return q;
      }
  throw SurgeryAbort("merge: free edge not found");
}

/// Grows `loop` (a boundary cycle of m) to `target` vertices by bisecting its longest edges.
inline void equalize_loop(SurfaceMesh& m, std::vector<int>& loop, std::size_t target) {
  while (loop.size() < target) {
    std::size_t best = 0;
    double len = -1.0;
    for (std::size_t i = 0; i < loop.size(); ++i) {
      const double l = distance(m.vertices[loop[i]], m.vertices[loop[(i + 1) % loop.size()]]);
      if (l > len) {
        len = l;
        best = i;
      }
    }
    const int q = bisect_free_edge(m, loop[best], loop[(best + 1) % loop.size()]);
    loop.insert(loop.begin() + static_cast<std::ptrdiff_t>(best) + 1, q);
  }
}

}  // namespace detail

struct SeamMatch {
  std::vector<int> partner;  // loop-1 position -> loop-2 position
  bool hungarian_was_cyclic = true;
  double cost = 0.0;
};

/// Matches two equally long loops (the second already reversed) by the
/// Hungarian method on Euclidean distance. A result that is not a cyclic shift
/// would cross the seam; the cheapest cyclic shift replaces it.
inline SeamMatch match_loops(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  const std::size_t n = a.size();
  if (n == 0 || b.size() != n) throw SurgeryAbort("merge: loops differ in length after equalization");
  std::vector<std::vector<double>> cost(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) cost[i][j] = distance(a[i], b[j]);
  const Assignment h = hungarian_match(cost);
  SeamMatch out;
  out.partner.assign(n, -1);
  for (const auto& [i, j] : h.pairs) out.partner[i] = j;
  const int shift = out.partner[0];
  for (std::size_t i = 0; i < n; ++i)
    if (out.partner[i] != static_cast<int>((i + shift) % n)) out.hungarian_was_cyclic = false;
  if (out.hungarian_was_cyclic) {
    out.cost = h.cost;
    return out;
  }
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_s = 0;
  for (std::size_t sh = 0; sh < n; ++sh) {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += cost[i][(i + sh) % n];
    if (c < best) {
      best = c;
      best_s = sh;
    }
  }
  for (std::size_t i = 0; i < n; ++i) out.partner[i] = static_cast<int>((i + best_s) % n);
  out.cost = best;
  return out;
}

struct SewResult {
  SeamMatch match;
  int bisections = 0;
  int fused = 0;
};

/// Sews boundary loop `l1` of `m` to loop `l2` (both as returned by boundary
/// traversal). The shorter loop is first grown by free-edge bisection, loop 2 is
/// reversed so seam edges meet in opposite directions, matched pairs move to
/// their midpoint and loop-2 vertices are replaced by their partners. The mesh
/// keeps the orphaned vertices; callers compact afterwards.
inline SewResult sew_loops(SurfaceMesh& m, std::vector<int> l1, std::vector<int> l2) {
  SewResult out;
  const std::size_t target = std::max(l1.size(), l2.size());
  if (target > 4 * std::min(l1.size(), l2.size()) + 64)
    throw SurgeryAbort("merge: loop lengths too different to equalize");
  out.bisections = static_cast<int>(2 * target - l1.size() - l2.size());
  detail::equalize_loop(m, l1, target);
  detail::equalize_loop(m, l2, target);
  std::reverse(l2.begin(), l2.end());
  std::vector<Vec3> p1, p2;
  for (int v : l1) p1.push_back(m.vertices[v]);
  for (int v : l2) p2.push_back(m.vertices[v]);
  out.match = match_loops(p1, p2);
  std::vector<int> remap(m.vertices.size());
  for (std::size_t v = 0; v < remap.size(); ++v) remap[v] = static_cast<int>(v);
  for (std::size_t i = 0; i < l1.size(); ++i) {
    const int u = l1[i], w = l2[out.match.partner[i]];
    m.vertices[u] = (m.vertices[u] + m.vertices[w]) / 2.0;
    remap[w] = u;
  }
  out.fused = static_cast<int>(l1.size());
  for (auto& t : m.faces)
    for (int& v : t) v = remap[v];
  for (const auto& t : m.faces)
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) throw SurgeryAbort("merge: fused face collapsed");
  return out;
}

/// Opens a hole on each of two facing sheets and sews the two loops together.
/// Two surface ids give a merge (the later surface is absorbed); one id gives a
/// genus increase. Throws SurgeryAbort (input untouched) on any inconsistency.
inline SurgeryResult merge_or_genus_increase(const SurfaceSet& s, const TopoEvent& e) {
  std::vector<int> mesh_ids;
  for (const auto& n : e.nodes)
    if (std::find(mesh_ids.begin(), mesh_ids.end(), n.mesh) == mesh_ids.end()) mesh_ids.push_back(n.mesh);
  std::sort(mesh_ids.begin(), mesh_ids.end());
  if (mesh_ids.empty() || mesh_ids.size() > 2) throw SurgeryAbort("merge: node set must span one or two surfaces");
  const bool merging = mesh_ids.size() == 2;
  if (merging && !(s.regions[mesh_ids[0]] == s.regions[mesh_ids[1]]))
    throw SurgeryAbort("merge: surfaces separate different region pairs");
  for (int mi : mesh_ids)
    if (!check_closed_manifold(s.meshes[mi]).ok) throw SurgeryAbort("merge: input surface is not closed");

  // Concatenate the involved meshes.
  SurfaceMesh joint;
  joint.surface_id = s.meshes[mesh_ids[0]].surface_id;
  std::vector<char> doomed;
  std::vector<int> owner;  // which input mesh each joint vertex came from
  for (std::size_t k = 0; k < mesh_ids.size(); ++k) {
    const auto& m = s.meshes[mesh_ids[k]];
    const int off = static_cast<int>(joint.vertices.size());
    joint.vertices.insert(joint.vertices.end(), m.vertices.begin(), m.vertices.end());
    for (const auto& t : m.faces) joint.faces.push_back({t[0] + off, t[1] + off, t[2] + off});
    doomed.resize(joint.vertices.size(), 0);
    owner.resize(joint.vertices.size(), static_cast<int>(k));
    doomed = detail::doomed_mask(s, e, mesh_ids[k], off, std::move(doomed));
  }
  SurfaceMesh cut = detail::carve(joint, doomed);
  detail::drop_islands(cut, static_cast<int>(mesh_ids.size()));
  auto loops = detail::boundary_loops(cut);
  if (!loops) throw SurgeryAbort("merge: boundary loop touches itself");
  if (loops->size() != 2)
    throw SurgeryAbort("merge: expected two boundary loops, found " + std::to_string(loops->size()));
  auto l1 = (*loops)[0], l2 = (*loops)[1];
  if (l1.size() < 3 || l2.size() < 3) throw SurgeryAbort("merge: boundary loop shorter than three edges");
  if (merging && owner[l1[0]] == owner[l2[0]]) throw SurgeryAbort("merge: both loops lie on one surface");
  int ncomp = 0;
  detail::face_components(cut, ncomp);
  if (ncomp != static_cast<int>(mesh_ids.size()))
    throw SurgeryAbort("merge: unexpected component count " + std::to_string(ncomp));

  const SewResult sew = sew_loops(cut, l1, l2);
  SurgeryResult out;
  out.chi_before = detail::total_euler(s);
  out.kind = merging ? TopoKind::Merge : TopoKind::GenusIncrease;
  if (out.kind != e.kind && e.kind != TopoKind::None)
    out.note = std::string("classified as ") + to_string(e.kind) + ", executed " + to_string(out.kind);
  if (!sew.match.hungarian_was_cyclic) {
    if (!out.note.empty()) out.note += "; ";
    out.note += "hungarian matching crossed the seam, used best cyclic shift";
  }
  detail::finish_mesh(cut, merging ? "merge" : "genus increase");
  out.set = s;
  out.set.meshes[mesh_ids[0]] = std::move(cut);
  if (merging) {
    out.set.meshes.erase(out.set.meshes.begin() + mesh_ids[1]);
    out.set.regions.erase(out.set.regions.begin() + mesh_ids[1]);
  }
  out.chi_after = detail::total_euler(out.set);
  if (out.chi_after != out.chi_before - 2) throw SurgeryAbort("merge: Euler ledger mismatch");
  return out;
}

/// Dispatches on the classified kind.
inline SurgeryResult execute_event(const SurfaceSet& s, const TopoEvent& e) {
  switch (e.kind) {
    case TopoKind::Split:
    case TopoKind::GenusDecrease: return split_or_genus_decrease(s, e);
    case TopoKind::Merge:
    case TopoKind::GenusIncrease: return merge_or_genus_increase(s, e);
    default: throw SurgeryAbort("no topology change to execute");
  }
}

// ---------------------------------------------------------------------------
// Per-step topology pass

struct EventRecord {
  int step = 0;
  TopoKind kind = TopoKind::None;
  std::int64_t cube = 0;
  int nodes = 0;
  int chi_before = 0;
  int chi_after = 0;
  bool aborted = false;
  std::string note;
  Box region;  // bounding box of the affected nodes
};

/// One structured log line per event.
inline std::string format_event(const EventRecord& r) {
  std::ostringstream os;
  os << "step=" << r.step << " kind=" << to_string(r.kind) << " cube=" << r.cube << " nodes=" << r.nodes
     << " chi_before=" << r.chi_before << " chi_after=" << r.chi_after;
  if (r.aborted) os << " aborted=1";
  if (!r.note.empty()) os << " note=\"" << r.note << '"';
  return os.str();
}

struct TopologyPassOptions {
  int max_events = 8;           // surgeries per call
  double exclusion_margin = 2;  // in cubes, added around every handled region
  std::vector<Box> exclusion;   // regions that are skipped from the start
};

/// Flagged cubes connected to `seed` (26-neighborhood) that classify to the
/// same kind on the same surfaces, with the union of their node sets.
struct ContactCluster {
  TopoEvent event;
  Box box;
  int cubes = 0;
};

template <class Skip>
ContactCluster contact_cluster(const Detection& d, const TopoEvent& seed, const SurfaceSet& s,
                               const DetectionParams& p, Skip&& skip) {
  std::set<std::int64_t> flagged;
  for (const auto& c : d.flagged) flagged.insert(d.grid.key(c));
  std::set<std::int64_t> seen{seed.cube_key};
  std::vector<CubeIndex> todo{seed.cube};
  ContactCluster out;
  out.event = seed;
  out.event.nodes.clear();
  out.box = d.grid.cube_box(seed.cube);
  std::set<std::pair<int, int>> have;
  while (!todo.empty()) {
    const CubeIndex c = todo.back();
    todo.pop_back();
    const TopoEvent ev = c == seed.cube ? seed : classify(d, c, s, p);
    if (ev.kind != seed.kind || ev.surface_ids != seed.surface_ids) continue;
    for (const auto& n : ev.nodes)
      if (have.insert({n.mesh, n.vertex}).second) out.event.nodes.push_back(n);
    ++out.cubes;
    const Box cb = d.grid.cube_box(c);
    out.box.expand(cb.lo);
    out.box.expand(cb.hi);
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const CubeIndex nb{c[0] + dx, c[1] + dy, c[2] + dz};
          if (nb[0] < 0 || nb[1] < 0 || nb[2] < 0 || nb[0] >= d.grid.dims()[0] || nb[1] >= d.grid.dims()[1] ||
              nb[2] >= d.grid.dims()[2])
            continue;
          const auto k = d.grid.key(nb);
          if (!flagged.count(k) || !seen.insert(k).second || skip(nb)) continue;
          todo.push_back(nb);
        }
  }
  return out;
}

inline Box event_region(const SurfaceSet& s, const TopoEvent& e) {
  Box b{s.meshes[e.nodes.front().mesh].vertices[e.nodes.front().vertex], {}};
  b.hi = b.lo;
  for (const auto& n : e.nodes) b.expand(s.meshes[n.mesh].vertices[n.vertex]);
  return b;
}

/// Detect, classify and execute topology changes on `s` in place. After each
/// surgery the set is re-detected. The handled region (executed or aborted),
/// together with every flagged cube connected to it that reports the same
/// change, is skipped for the rest of the call and returned in
/// EventRecord::region. Merges and genus increases cut out the whole connected
/// contact when that succeeds, so two sheets touching over a wide area get one
/// wide tube instead of a row of small ones.
inline std::vector<EventRecord> topology_pass(SurfaceSet& s, const DetectionParams& p, const Box& domain,
                                              int step, const TopologyPassOptions& opt = {}) {
  std::vector<EventRecord> log;
  std::vector<Box> zones = opt.exclusion;
  const double margin = opt.exclusion_margin * p.a;
  auto excluded = [&](const Box& cube) {
    for (const auto& z : zones) {
      bool overlap = true;
      for (int d = 0; d < 3; ++d)
        if (cube.hi[d] < z.lo[d] - margin || cube.lo[d] > z.hi[d] + margin) overlap = false;
      if (overlap) return true;
    }
    return false;
  };
  int executed = 0;
  while (executed < opt.max_events) {
    const Detection d = detect(s, p, domain);
    bool changed = false;
    for (const auto& c : d.flagged) {
      if (excluded(d.grid.cube_box(c))) continue;
      const TopoEvent single = classify(d, c, s, p);
      if (single.kind == TopoKind::None) continue;
      const ContactCluster cl =
          contact_cluster(d, single, s, p, [&](const CubeIndex& q) { return excluded(d.grid.cube_box(q)); });
      // A wide contact is opened over its whole extent at once; the single
      // cube is the fallback.
      std::vector<const TopoEvent*> attempts;
      const bool opening = single.kind == TopoKind::Merge || single.kind == TopoKind::GenusIncrease;
      if (opening && cl.cubes > 1) attempts.push_back(&cl.event);
      attempts.push_back(&single);
      EventRecord rec;
      rec.step = step;
      rec.kind = single.kind;
      rec.cube = single.cube_key;
      rec.region = event_region(s, cl.event);
      rec.region.expand(cl.box.lo);
      rec.region.expand(cl.box.hi);
      std::string notes;
      if (cl.cubes > 1) notes = std::to_string(cl.cubes) + " connected cubes";
      for (const TopoEvent* ev : attempts) {
        rec.nodes = static_cast<int>(ev->nodes.size());
        try {
          SurgeryResult r = execute_event(s, *ev);
          rec.kind = r.kind;
          rec.chi_before = r.chi_before;
          rec.chi_after = r.chi_after;
          if (attempts.size() > 1 && ev == &single) notes += ", opened at one cube";
          rec.note = r.note + (r.note.empty() || notes.empty() ? "" : "; ") + notes;
          s = std::move(r.set);
          changed = true;
          break;
        } catch (const SurgeryAbort& ex) {
          if (ev != attempts.back()) {
            notes += std::string(notes.empty() ? "" : ", ") + "whole contact failed (" + ex.what() + ")";
            continue;
          }
          rec.aborted = true;
          rec.chi_before = rec.chi_after = detail::total_euler(s);
          rec.note = ex.what() + (notes.empty() ? std::string() : "; " + notes);
        }
      }
      zones.push_back(rec.region);
      log.push_back(rec);
      if (changed) {
        ++executed;
        break;
      }
    }
    if (!changed) break;
  }
  return log;
}

}  // namespace psurf
