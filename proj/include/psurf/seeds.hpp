#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "trimesh.hpp"
#include "vec3.hpp"

namespace psurf {

// Seed shapes are generated with outward orientation (positive signed volume)
// and a maximum edge length controlled by `resolution`.

namespace detail {

inline void orient_outward(SurfaceMesh& m) {
  if (signed_volume(m) < 0.0)
    for (auto& t : m.faces) std::swap(t[1], t[2]);
  build_adjacency(m);
}

inline double max_edge_length(const SurfaceMesh& m) {
  double e = 0.0;
  for (const auto& t : m.faces)
    for (int k = 0; k < 3; ++k)
      e = std::max(e, distance(m.vertices[t[k]], m.vertices[t[(k + 1) % 3]]));
  return e;
}

/// Two unit vectors completing `axis` to a right-handed orthonormal frame.
inline std::pair<Vec3, Vec3> orthonormal_frame(const Vec3& axis) {
  const Vec3 d = normalized(axis);
  const Vec3 helper = std::abs(d.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  const Vec3 e1 = normalized(cross(d, helper));
  return {e1, cross(d, e1)};
}

}  // namespace detail

inline double max_edge_length(const SurfaceMesh& m) { return detail::max_edge_length(m); }

/// Icosahedron subdivided and projected onto the sphere; `level` subdivisions.
inline SurfaceMesh make_icosphere_level(const Vec3& center, double radius, int level) {
  if (!(radius > 0.0)) throw ParameterError("sphere radius must be positive");
  if (level < 0) throw ParameterError("subdivision level must be non-negative");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p = normalized(p);
  std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                         {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                         {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                         {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back(normalized(0.5 * (v[a] + v[b])));
      const int id = static_cast<int>(v.size()) - 1;
      mid.emplace(key, id);
      return id;
    };
    std::vector<Face> next;
    next.reserve(f.size() * 4);
    for (const auto& tri : f) {
      const int a = midpoint(tri[0], tri[1]);
      const int b = midpoint(tri[1], tri[2]);
      const int c = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  SurfaceMesh m;
  m.vertices.reserve(v.size());
  for (const auto& p : v) m.vertices.push_back(center + radius * p);
  m.faces = std::move(f);
  detail::orient_outward(m);
  return m;
}

/// Icosphere with the smallest subdivision level whose longest edge is below `resolution`.
inline SurfaceMesh make_icosphere(const Vec3& center, double radius, double resolution) {
  if (!(resolution > 0.0)) throw ParameterError("resolution must be positive");
  for (int level = 0; level <= 9; ++level) {
    SurfaceMesh m = make_icosphere_level(center, radius, level);
    if (detail::max_edge_length(m) < resolution || level == 9) return m;
  }
  throw ParameterError("unreachable");
}

/// Closed surface of revolution around `axis` through `center`. The profile is
/// a polyline of (axial, radial) pairs that starts and ends on the axis
/// (radial = 0) and is positive in between. It is resampled uniformly in arc
/// length so that no edge exceeds `resolution`.
inline SurfaceMesh make_revolution(const Vec3& center, const Vec3& axis,
                                   const std::vector<std::pair<double, double>>& profile,
                                   double resolution) {
  if (!(resolution > 0.0)) throw ParameterError("resolution must be positive");
  if (profile.size() < 3) throw ParameterError("profile needs at least three points");
  if (profile.front().second != 0.0 || profile.back().second != 0.0)
    throw ParameterError("profile must start and end on the axis");
  std::vector<double> arc(profile.size(), 0.0);
  double rho_max = 0.0;
  for (std::size_t i = 1; i < profile.size(); ++i) {
    const double ds = profile[i].first - profile[i - 1].first;
    const double dr = profile[i].second - profile[i - 1].second;
    arc[i] = arc[i - 1] + std::hypot(ds, dr);
    rho_max = std::max(rho_max, profile[i].second);
  }
  if (!(rho_max > 0.0)) throw ParameterError("profile has zero radius");
  const int n_seg = std::max(4, static_cast<int>(std::ceil(arc.back() / resolution)));
  std::vector<std::pair<double, double>> rings;  // interior samples only
  std::size_t seg = 1;
  for (int k = 1; k < n_seg; ++k) {
    const double s = arc.back() * k / n_seg;
    while (seg + 1 < arc.size() && arc[seg] < s) ++seg;
    const double w = (s - arc[seg - 1]) / std::max(arc[seg] - arc[seg - 1], 1e-300);
    const double a = (1 - w) * profile[seg - 1].first + w * profile[seg].first;
    const double r = (1 - w) * profile[seg - 1].second + w * profile[seg].second;
    if (!(r > 0.0)) throw ParameterError("profile touches the axis away from its ends");
    rings.emplace_back(a, r);
  }
  const Vec3 d = normalized(axis);
  const auto [e1, e2] = detail::orthonormal_frame(d);
  SurfaceMesh m;
  m.vertices.push_back(center + profile.front().first * d);
  // Each ring gets its own segment count so triangles near the poles stay
  // well shaped; alternate rings are rotated by half a segment.
  std::vector<int> start, count;
  std::vector<double> offset;
  for (std::size_t k = 0; k < rings.size(); ++k) {
    const int n = std::max(6, static_cast<int>(std::ceil(2.0 * std::numbers::pi * rings[k].second / resolution)));
    start.push_back(static_cast<int>(m.vertices.size()));
    count.push_back(n);
    offset.push_back(0.5 * (k % 2));
    for (int j = 0; j < n; ++j) {
      const double th = 2.0 * std::numbers::pi * (j + offset.back()) / n;
      m.vertices.push_back(center + rings[k].first * d +
                           rings[k].second * (std::cos(th) * e1 + std::sin(th) * e2));
    }
  }
  m.vertices.push_back(center + profile.back().first * d);
  const int south = 0;
  const int north = static_cast<int>(m.vertices.size()) - 1;
  const int nr = static_cast<int>(rings.size());
  auto ring = [&](int k, int j) { return start[k] + j % count[k]; };
  for (int j = 0; j < count[0]; ++j) m.faces.push_back({south, ring(0, j + 1), ring(0, j)});
  for (int k = 0; k + 1 < nr; ++k) {
    // Zip two rings together by advancing whichever next vertex has the smaller angle.
    const int na = count[k], nb = count[k + 1];
    auto ang_a = [&](int i) { return (i + offset[k]) / na; };
    auto ang_b = [&](int j) { return (j + offset[k + 1]) / nb; };
    int i = 0, j = 0;
    while (i < na || j < nb) {
      if (j == nb || (i < na && ang_a(i + 1) < ang_b(j + 1))) {
        m.faces.push_back({ring(k, i), ring(k, i + 1), ring(k + 1, j)});
        ++i;
      } else {
        m.faces.push_back({ring(k, i), ring(k + 1, j + 1), ring(k + 1, j)});
        ++j;
      }
    }
  }
  for (int j = 0; j < count[nr - 1]; ++j)
    m.faces.push_back({north, ring(nr - 1, j), ring(nr - 1, j + 1)});
  detail::orient_outward(m);
  return m;
}

/// Cylinder of length `cylinder_length` closed by hemispherical caps of `radius`.
inline SurfaceMesh make_capsule(const Vec3& center, const Vec3& axis, double radius,
                                double cylinder_length, double resolution) {
  if (!(radius > 0.0) || cylinder_length < 0.0) throw ParameterError("invalid capsule dimensions");
  const double h = 0.5 * cylinder_length;
  const int n = 64;
  std::vector<std::pair<double, double>> prof;
  for (int i = 0; i <= n; ++i) {
    const double phi = std::numbers::pi / 2 * i / n;  // 0 at the pole
    prof.emplace_back(-h - radius * std::cos(phi), radius * std::sin(phi));
  }
  for (int i = 0; i <= n; ++i) {
    const double phi = std::numbers::pi / 2 * i / n;
    prof.emplace_back(h + radius * std::sin(phi), radius * std::cos(phi));
  }
  prof.back().second = 0.0;
  return make_revolution(center, axis, prof, resolution);
}

/// Two balls of `ball_radius` centred at +-`half_distance` along the axis,
/// joined by a cylindrical neck of `neck_radius`.
inline SurfaceMesh make_dumbbell(const Vec3& center, const Vec3& axis, double ball_radius,
                                 double half_distance, double neck_radius, double resolution) {
  if (!(ball_radius > 0.0) || !(neck_radius > 0.0) || neck_radius >= ball_radius)
    throw ParameterError("dumbbell needs 0 < neck_radius < ball_radius");
  const double join = std::sqrt(ball_radius * ball_radius - neck_radius * neck_radius);
  if (!(half_distance > join)) throw ParameterError("dumbbell balls overlap past the neck");
  const double phi_join = std::asin(neck_radius / ball_radius);  // angle from axis at the junction
  const int n = 96;
  std::vector<std::pair<double, double>> prof;
  // Left ball from its outer pole to the junction, neck, right ball back to its pole.
  for (int i = 0; i <= n; ++i) {
    const double phi = (std::numbers::pi - phi_join) * i / n;
    prof.emplace_back(-half_distance - ball_radius * std::cos(phi), ball_radius * std::sin(phi));
  }
  for (int i = n; i >= 0; --i) {
    const double phi = (std::numbers::pi - phi_join) * i / n;
    prof.emplace_back(half_distance + ball_radius * std::cos(phi), ball_radius * std::sin(phi));
  }
  prof.front().second = 0.0;
  prof.back().second = 0.0;
  return make_revolution(center, axis, prof, resolution);
}

/// Torus around `axis` with major radius R and minor radius r.
inline SurfaceMesh make_torus(const Vec3& center, const Vec3& axis, double R, double r,
                              double resolution) {
  if (!(r > 0.0) || !(R > r)) throw ParameterError("torus needs R > r > 0");
  if (!(resolution > 0.0)) throw ParameterError("resolution must be positive");
  int nu = std::max(8, static_cast<int>(std::ceil(2.0 * std::numbers::pi * (R + r) / resolution)));
  nu += nu % 2;  // even ring count keeps the staggered pattern periodic
  const int nv = std::max(6, static_cast<int>(std::ceil(2.0 * std::numbers::pi * r / resolution)));
  const Vec3 d = normalized(axis);
  const auto [e1, e2] = detail::orthonormal_frame(d);
  SurfaceMesh m;
  for (int i = 0; i < nu; ++i)
    for (int j = 0; j < nv; ++j) {
      const double u = 2.0 * std::numbers::pi * i / nu;
      const double v = 2.0 * std::numbers::pi * (j + 0.5 * (i % 2)) / nv;
      const Vec3 radial = std::cos(u) * e1 + std::sin(u) * e2;
      m.vertices.push_back(center + (R + r * std::cos(v)) * radial + r * std::sin(v) * d);
    }
  auto id = [&](int i, int j) { return ((i % nu + nu) % nu) * nv + ((j % nv) + nv) % nv; };
  for (int i = 0; i < nu; ++i)
    for (int j = 0; j < nv; ++j) {
      if (i % 2 == 0) {
        m.faces.push_back({id(i, j), id(i + 1, j), id(i, j + 1)});
        m.faces.push_back({id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
      } else {
        m.faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
        m.faces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
      }
    }
  detail::orient_outward(m);
  return m;
}

enum class SeedShape { Sphere, Capsule, Torus, Dumbbell };

inline SeedShape parse_seed_shape(const std::string& s) {
  if (s == "sphere") return SeedShape::Sphere;
  if (s == "capsule" || s == "cylinder") return SeedShape::Capsule;
  if (s == "torus") return SeedShape::Torus;
  if (s == "dumbbell") return SeedShape::Dumbbell;
  throw ParameterError("unknown seed shape '" + s + "'");
}

struct SeedSpec {
  SeedShape shape = SeedShape::Sphere;
  Vec3 center;
  Vec3 axis{0, 0, 1};
  double radius = 1.0;  // sphere, capsule, dumbbell ball; minor radius for torus
  double length = 1.0;  // capsule cylinder length
  double major_radius = 1.0;  // torus
  double half_distance = 1.0;  // dumbbell
  double neck_radius = 0.2;  // dumbbell
  double resolution = 0.1;
};

inline SurfaceMesh make_seed(const SeedSpec& s) {
  switch (s.shape) {
    case SeedShape::Sphere: return make_icosphere(s.center, s.radius, s.resolution);
    case SeedShape::Capsule: return make_capsule(s.center, s.axis, s.radius, s.length, s.resolution);
    case SeedShape::Torus: return make_torus(s.center, s.axis, s.major_radius, s.radius, s.resolution);
    case SeedShape::Dumbbell:
      return make_dumbbell(s.center, s.axis, s.radius, s.half_distance, s.neck_radius, s.resolution);
  }
  throw ParameterError("unknown seed shape");
}

}  // namespace psurf
