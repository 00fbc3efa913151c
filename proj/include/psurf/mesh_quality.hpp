#pragma once

#include <algorithm>
#include <array>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "errors.hpp"
#include "trimesh.hpp"

namespace psurf {

struct QualityParams {
  double a_desired = 0.001;
  double refine_factor = 2.0;
  double max_angle = 160.0;
  double min_angle = 2.0;
  double min_area_fraction = 0.01;
  int max_passes = 20;

  void validate() const {
    if (!(a_desired > 0.0)) throw ParameterError("A_desired must be positive");
    if (!(refine_factor > 1.0)) throw ParameterError("refine factor must exceed 1");
    if (!(min_angle > 0.0 && min_angle < 60.0 && max_angle > 60.0 && max_angle < 180.0))
      throw ParameterError("quality angles must satisfy 0 < min_angle < 60 < max_angle < 180");
    if (!(min_area_fraction >= 0.0 && min_area_fraction < 1.0))
      throw ParameterError("min_area_fraction must lie in [0, 1)");
    if (max_passes < 1) throw ParameterError("max_passes must be at least 1");
  }
};

struct QualityReport {
  int bisections = 0;       // edges split (each touches two faces)
  int small_collapses = 0;  // small-area faces removed with three neighbors
  int sliver_collapses = 0; // thin faces removed with one neighbor
  int flips = 0;            // caps resolved by flipping their longest edge
  int valence3_removals = 0; // valence-3 vertices with a bad star removed
  int skipped = 0;          // deletions rejected by the safety checks
  int passes = 0;
  std::vector<std::string> warnings;

  bool changed() const { return bisections + small_collapses + sliver_collapses + flips + valence3_removals > 0; }
};

namespace detail {

inline int largest_edge(const SurfaceMesh& m, int f) {
  int best = 0;
  double len = -1.0;
  for (int e = 0; e < 3; ++e) {
    const double l = squared_norm(m.vertices[m.faces[f][(e + 1) % 3]] - m.vertices[m.faces[f][e]]);
    if (l > len) {  // strict: ties keep the lowest edge index
      len = l;
      best = e;
    }
  }
  return best;
}

inline double max_face_angle(const SurfaceMesh& m, int f) {
  const auto a = face_angles(m, f);
  return std::max({a[0], a[1], a[2]});
}

inline double max_angle_of(const std::array<Vec3, 3>& x) {
  double best = 0.0;
  for (int k = 0; k < 3; ++k) best = std::max(best, angle_deg(x[(k + 1) % 3] - x[k], x[(k + 2) % 3] - x[k]));
  return best;
}

inline Vec3 area_vector_of(const Vec3& a, const Vec3& b, const Vec3& c) { return 0.5 * cross(b - a, c - a); }

/// Cap (a,b,c) with longest edge ab and neighbor (b,a,d): true when replacing
/// both faces by (c,a,d), (c,d,b) lowers the worst angle without folding.
inline bool flip_improves(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  const Vec3 before = area_vector_of(a, b, c) + area_vector_of(b, a, d);
  const Vec3 n1 = area_vector_of(c, a, d), n2 = area_vector_of(c, d, b);
  if (!(dot(n1, before) > 0.0 && dot(n2, before) > 0.0 && dot(n1, n2) > 0.0)) return false;
  const double worst = std::max(max_angle_of({a, b, c}), max_angle_of({b, a, d}));
  return std::max(max_angle_of({c, a, d}), max_angle_of({c, d, b})) < worst;
}

inline double min_face_angle(const SurfaceMesh& m, int f) {
  const auto a = face_angles(m, f);
  return std::min({a[0], a[1], a[2]});
}

}  // namespace detail

/// Bisects oversized or obtuse faces at their largest edge together with the
/// neighbor across that edge, so no hanging nodes appear. Repeats until no face
/// qualifies or `max_passes` is reached (then a warning is recorded).
inline SurfaceMesh refine_pass(SurfaceMesh m, const QualityParams& p, QualityReport* report = nullptr) {
  p.validate();
  QualityReport local;
  QualityReport& rep = report ? *report : local;
  if (m.neighbors.size() != m.faces.size()) build_adjacency(m);
  const double area_limit = p.refine_factor * p.a_desired;
  for (int pass = 0;; ++pass) {
    std::vector<std::pair<double, int>> cand;
    for (int f = 0; f < static_cast<int>(m.faces.size()); ++f) {
      const double a = face_area(m, f);
      if (a > area_limit || detail::max_face_angle(m, f) > p.max_angle) cand.emplace_back(-a, f);
    }
    if (cand.empty()) break;
    if (pass == p.max_passes) {
      rep.warnings.push_back("refinement stopped after " + std::to_string(p.max_passes) + " passes with " +
                             std::to_string(cand.size()) + " faces still qualifying");
      break;
    }
    ++rep.passes;
    std::sort(cand.begin(), cand.end());
    std::vector<char> touched(m.faces.size(), 0);
    std::set<std::pair<int, int>> edges;
    for (const auto& t : m.faces)
      for (int k = 0; k < 3; ++k) edges.insert(std::minmax(t[k], t[(k + 1) % 3]));
    int done = 0;
    for (const auto& [neg_area, f] : cand) {
      if (touched[f]) continue;
      const int e = detail::largest_edge(m, f);
      const int g = m.neighbors[f][e];
      if (g == kFreeEdge || touched[g]) continue;
      const int a = m.faces[f][e], b = m.faces[f][(e + 1) % 3], c = m.faces[f][(e + 2) % 3];
      int eg = 0;
      while (!(m.faces[g][eg] == b && m.faces[g][(eg + 1) % 3] == a)) ++eg;
      const int d = m.faces[g][(eg + 2) % 3];
      const Vec3 mid = (m.vertices[a] + m.vertices[b]) / 2.0;
      if (-neg_area <= area_limit) {
        // Angle-only candidate: bisect only if the worst angle goes down,
        // otherwise a cap keeps spawning new caps.
        const double worst = detail::max_face_angle(m, f);
        double after = 0.0;
        for (const auto& t : {std::array<Vec3, 3>{m.vertices[a], mid, m.vertices[c]},
                              std::array<Vec3, 3>{mid, m.vertices[b], m.vertices[c]},
                              std::array<Vec3, 3>{m.vertices[b], mid, m.vertices[d]},
                              std::array<Vec3, 3>{mid, m.vertices[a], m.vertices[d]}})
          after = std::max(after, detail::max_angle_of(t));
        if (!(after < worst)) {
          const auto cd = std::minmax(c, d);
          if (!edges.count(cd) &&
              detail::flip_improves(m.vertices[a], m.vertices[b], m.vertices[c], m.vertices[d])) {
            m.faces[f] = {c, a, d};
            m.faces[g] = {c, d, b};
            edges.erase(std::minmax(a, b));
            edges.insert(cd);
            touched[f] = touched[g] = 1;
            ++rep.flips;
            ++done;
          } else {
            ++rep.skipped;
          }
          continue;
        }
      }
      const int q = static_cast<int>(m.vertices.size());
      m.vertices.push_back(mid);
      m.faces[f] = {a, q, c};
      m.faces.push_back({q, b, c});
      m.faces[g] = {b, q, d};
      m.faces.push_back({q, a, d});
      touched[f] = touched[g] = 1;
      ++rep.bisections;
      ++done;
    }
    build_adjacency(m);
    if (done == 0) break;
  }
  return m;
}

namespace detail {

/// Closed mesh with vertex->face incidence supporting undoable edge collapses.
/// Incidence lists only grow; entries are filtered by liveness and membership.
class CollapseEditor {
 public:
  explicit CollapseEditor(SurfaceMesh& m)
      : m_(m), alive_(m.faces.size(), 1), alive_count_(static_cast<int>(m.faces.size())), vf_(m.vertices.size()) {
    for (int f = 0; f < static_cast<int>(m.faces.size()); ++f)
      for (int v : m.faces[f]) vf_[v].push_back(f);
  }

  bool alive(int f) const { return alive_[f]; }
  int alive_faces() const { return alive_count_; }
  const char* last_failure() const { return last_failure_; }

  std::vector<int> faces_of(int v) const {
    std::vector<int> out;
    for (int f : vf_[v])
      if (alive_[f] && has(f, v) && std::find(out.begin(), out.end(), f) == out.end()) out.push_back(f);
    return out;
  }

  /// Merges v into u and moves u to `target`. Returns false (mesh untouched)
  /// when the link condition fails or a surviving face would flip or vanish.
  bool collapse(int u, int v, const Vec3& target) {
    last_failure_ = "";
    const auto fu = faces_of(u), fv = faces_of(v);
    std::vector<int> nu, nv, shared;
    for (int f : fu)
      for (int w : m_.faces[f])
        if (w != u) nu.push_back(w);
    for (int f : fv)
      for (int w : m_.faces[f])
        if (w != v) nv.push_back(w);
    std::sort(nu.begin(), nu.end());
    nu.erase(std::unique(nu.begin(), nu.end()), nu.end());
    std::sort(nv.begin(), nv.end());
    nv.erase(std::unique(nv.begin(), nv.end()), nv.end());
    std::set_intersection(nu.begin(), nu.end(), nv.begin(), nv.end(), std::back_inserter(shared));
    std::vector<int> doomed;
    for (int f : fu)
      if (has(f, v)) doomed.push_back(f);
    if (doomed.size() != 2 || shared.size() != 2) return fail("link condition");
    if (alive_faces() <= 4) return fail("too few faces");
    // Orientation safety for every face that survives and moves. Normals of
    // near-degenerate faces are noise, so those are judged against the
    // area-weighted normal of the whole star instead.
    Vec3 star;
    double star_area = 0.0;
    for (int f : fu) star += face_area_vector(m_, f);
    for (int f : fv)
      if (!has(f, u)) star += face_area_vector(m_, f);
    for (int f : fu) star_area += face_area(m_, f);
    for (int f : fv)
      if (!has(f, u)) star_area += face_area(m_, f);
    const double mean_area = star_area / static_cast<double>(fu.size() + fv.size() - 2);
    auto check = [&](int f, int moved) {
      Face t = m_.faces[f];
      const Vec3 before = face_area_vector(m_, f);
      std::array<Vec3, 3> x;
      for (int k = 0; k < 3; ++k) x[k] = (t[k] == moved) ? target : m_.vertices[t[k]];
      const Vec3 after = 0.5 * cross(x[1] - x[0], x[2] - x[0]);
      if (norm(before) > 0.1 * mean_area) return dot(before, after) > 0.0 && norm(after) > 1e-3 * norm(before);
      return dot(star, after) > 0.0;
    };
    for (int f : fu)
      if (!has(f, v) && !check(f, u)) return fail("face would fold");
    for (int f : fv)
      if (!has(f, u) && !check(f, v)) return fail("face would fold");
    for (int f : doomed) alive_[f] = 0;
    alive_count_ -= 2;
    for (int f : fv) {
      if (!alive_[f]) continue;
      for (int& w : m_.faces[f])
        if (w == v) w = u;
      vf_[u].push_back(f);
    }
    m_.vertices[u] = target;
    return true;
  }

  /// Flips edge e of face f (its longest edge for a cap). Returns false when
  /// the edge has no single partner, the new edge already exists, or the flip
  /// would not lower the worst angle.
  bool flip(int f, int e) {
    last_failure_ = "";
    const Face t = m_.faces[f];
    const int a = t[e], b = t[(e + 1) % 3], c = t[(e + 2) % 3];
    int g = -1;
    for (int h : faces_of(a))
      if (h != f && has(h, b)) {
        if (g >= 0) return fail("non-manifold edge");
        g = h;
      }
    if (g < 0) return fail("free edge");
    const Face tg = m_.faces[g];
    int d = -1;
    for (int k = 0; k < 3; ++k)
      if (tg[k] == b && tg[(k + 1) % 3] == a) d = tg[(k + 2) % 3];
    if (d < 0 || d == c) return fail("bad partner face");
    for (int h : faces_of(c))
      if (has(h, d)) return fail("flipped edge exists");
    if (!flip_improves(m_.vertices[a], m_.vertices[b], m_.vertices[c], m_.vertices[d])) return fail("flip does not help");
    m_.faces[f] = {c, a, d};
    m_.faces[g] = {c, d, b};
    vf_[c].push_back(g);
    vf_[d].push_back(f);
    return true;
  }

  /// Writes the surviving faces back, drops orphaned vertices and rebuilds adjacency.
  void finish() {
    std::vector<Face> kept;
    for (std::size_t f = 0; f < m_.faces.size(); ++f)
      if (alive_[f]) kept.push_back(m_.faces[f]);
    m_.faces = std::move(kept);
    compact_vertices(m_);
    build_adjacency(m_);
  }

  struct Snapshot {
    std::vector<Face> faces;
    std::vector<char> alive;
    std::vector<Vec3> vertices;
    int alive_count;
  };
  Snapshot snapshot() const { return {m_.faces, alive_, m_.vertices, alive_count_}; }
  void restore(Snapshot s) {
    alive_count_ = s.alive_count;
    m_.faces = std::move(s.faces);
    alive_ = std::move(s.alive);
    m_.vertices = std::move(s.vertices);
  }

 private:
  bool fail(const char* why) {
    last_failure_ = why;
    return false;
  }
  bool has(int f, int v) const {
    const auto& t = m_.faces[f];
    return t[0] == v || t[1] == v || t[2] == v;
  }

  SurfaceMesh& m_;
  std::vector<char> alive_;
  int alive_count_;
  std::vector<std::vector<int>> vf_;
  const char* last_failure_ = "";
};

}  // namespace detail

/// Removes faces whose area is below min_area_fraction * A_desired (collapsed
/// with their three neighbors to the face centroid) and faces with an angle
/// below min_angle (shortest edge collapsed, one neighbor removed; caps get
/// their longest edge flipped). A small face that is also thin counts as thin. Deletions
/// that would break the manifold or flip a face are skipped and counted.
inline SurfaceMesh delete_pass(SurfaceMesh m, const QualityParams& p, QualityReport* report = nullptr) {
  p.validate();
  QualityReport local;
  QualityReport& rep = report ? *report : local;
  const double small = p.min_area_fraction * p.a_desired;
  std::vector<std::pair<double, int>> tiny, thin;
  for (int f = 0; f < static_cast<int>(m.faces.size()); ++f) {
    const double a = face_area(m, f), ang = detail::min_face_angle(m, f);
    if (ang < p.min_angle)
      thin.emplace_back(ang, f);
    else if (a < small)
      tiny.emplace_back(a, f);
  }
  if (tiny.empty() && thin.empty()) return m;
  std::sort(tiny.begin(), tiny.end());
  std::sort(thin.begin(), thin.end());
  detail::CollapseEditor ed(m);
  std::vector<std::pair<int, std::string>> failed;
  auto bad = [&](int f) { return face_area(m, f) < small || detail::min_face_angle(m, f) < p.min_angle; };
  // A valence-3 vertex with a bad star is dropped: its three faces become one.
  // Each removal can expose another one, so this runs to a fixed point.
  auto drop_valence3 = [&](const std::vector<int>& seeds) {
    std::vector<int> work = seeds;
    while (!work.empty()) {
      const int v = work.back();
      work.pop_back();
      const auto fv = ed.faces_of(v);
      if (fv.size() != 3 || std::none_of(fv.begin(), fv.end(), bad)) continue;
      std::vector<int> ring;
      for (int f : fv)
        for (int w : m.faces[f])
          if (w != v && std::find(ring.begin(), ring.end(), w) == ring.end()) ring.push_back(w);
      for (int u : ring)
        if (ed.collapse(u, v, m.vertices[u])) {
          ++rep.valence3_removals;
          for (int w : ring) work.push_back(w);
          break;
        }
    }
  };
  std::vector<int> suspects;
  for (const auto& list : {tiny, thin})
    for (const auto& [key, f] : list)
      for (int v : m.faces[f]) suspects.push_back(v);
  drop_valence3(suspects);
  for (const auto& [area, f] : tiny) {
    if (!ed.alive(f) || face_area(m, f) >= small || detail::min_face_angle(m, f) < p.min_angle) continue;
    const Face t = m.faces[f];
    const Vec3 c = (m.vertices[t[0]] + m.vertices[t[1]] + m.vertices[t[2]]) / 3.0;
    auto snap = ed.snapshot();
    if (ed.collapse(t[0], t[1], c) && ed.collapse(t[0], t[2], c)) {
      ++rep.small_collapses;
    } else {
      const std::string why = ed.last_failure();
      ed.restore(std::move(snap));
      failed.push_back({f, why});
    }
  }
  for (const auto& [ang, f] : thin) {
    if (!ed.alive(f) || detail::min_face_angle(m, f) >= p.min_angle) continue;
    const Face t = m.faces[f];
    int e = 0;
    double len = 1e300;
    for (int k = 0; k < 3; ++k) {
      const double l = squared_norm(m.vertices[t[(k + 1) % 3]] - m.vertices[t[k]]);
      if (l < len) {
        len = l;
        e = k;
      }
    }
    const int u = t[e], v = t[(e + 1) % 3];
    // A cap has no short edge; collapsing one of its edges would drag a long
    // edge across the surface, so its longest edge is flipped instead.
    const double middle = std::min(norm(m.vertices[t[(e + 2) % 3]] - m.vertices[v]),
                                   norm(m.vertices[u] - m.vertices[t[(e + 2) % 3]]));
    const bool cap = detail::max_face_angle(m, f) > 90.0 && 2.0 * std::sqrt(len) > middle;
    std::string why;
    auto note = [&] { why += std::string(why.empty() ? "" : ", ") + ed.last_failure(); };
    if (cap && ed.flip(f, detail::largest_edge(m, f))) {
      ++rep.flips;
    } else if (note(), ed.collapse(u, v, (m.vertices[u] + m.vertices[v]) / 2.0)) {
      ++rep.sliver_collapses;
    } else if (note(), !cap && ed.flip(f, detail::largest_edge(m, f))) {
      ++rep.flips;
    } else {
      if (!cap) note();
      failed.push_back({f, why});
    }
  }
  drop_valence3(suspects);
  for (const auto& [f, why] : failed) {
    if (!ed.alive(f) || !bad(f)) continue;
    ++rep.skipped;
    rep.warnings.push_back("skipped deletion of face " + std::to_string(f) + " (" + why + ")");
  }
  ed.finish();
  return m;
}

}  // namespace psurf
