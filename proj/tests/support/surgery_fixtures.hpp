#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <psurf/seeds.hpp>
#include <psurf/topo_engine.hpp>
#include <psurf/trimesh.hpp>

namespace psurf::testing {

/// A constructed configuration that should trigger exactly one topology change.
struct SurgeryFixture {
  std::string name;
  SurfaceSet set;
  DetectionParams params;
  Box domain;
  TopoKind expected = TopoKind::None;
};

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    const Vec3 v{n(rng), n(rng), n(rng)};
    if (norm(v) > 1e-3) return normalized(v);
  }
}

inline Box fixture_domain() { return {{-2, -2, -2}, {2, 2, 2}}; }

inline SurfaceSet single_surface(SurfaceMesh m) {
  SurfaceSet s;
  m.surface_id = 1;
  s.add(std::move(m), {1, 2});
  return s;
}

/// Dumbbell whose neck is thinner than one grid cube: splits into two balls.
inline SurgeryFixture dumbbell_fixture(int variant) {
  std::mt19937_64 rng(1000 + variant);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vec3 axis = random_unit(rng);
  const Vec3 center{0.1 * (u(rng) - 0.5), 0.1 * (u(rng) - 0.5), 0.1 * (u(rng) - 0.5)};
  const double R = 0.4 + 0.1 * u(rng);
  const double neck = 0.006 + 0.006 * u(rng);
  SurgeryFixture f;
  f.name = "dumbbell_" + std::to_string(variant);
  f.set = single_surface(make_dumbbell(center, axis, R, R + 0.1, neck, 0.05));
  f.params.a = 0.06;
  f.params.n_detect = 6;
  f.domain = fixture_domain();
  f.expected = TopoKind::Split;
  return f;
}

/// Two spheres separated by a gap much smaller than a grid cube: merge.
inline SurgeryFixture twin_sphere_fixture(int variant) {
  std::mt19937_64 rng(2000 + variant);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vec3 dir = random_unit(rng);
  const double r = 0.35 + 0.15 * u(rng);
  const double gap = 0.005 + 0.01 * u(rng);
  const Vec3 c{0.1 * (u(rng) - 0.5), 0.1 * (u(rng) - 0.5), 0.1 * (u(rng) - 0.5)};
  SurgeryFixture f;
  f.name = "twin_spheres_" + std::to_string(variant);
  SurfaceMesh a = make_icosphere(c - (r + gap / 2) * dir, r, 0.06);
  SurfaceMesh b = make_icosphere(c + (r + gap / 2) * dir, r, 0.06);
  a.surface_id = 1;
  b.surface_id = 2;
  f.set.add(std::move(a), {1, 2});
  f.set.add(std::move(b), {1, 2});
  f.params.a = 0.05;
  f.params.n_detect = 12;
  f.domain = fixture_domain();
  f.expected = TopoKind::Merge;
  return f;
}

/// Biconcave disk whose two dimples almost touch on the axis: genus increase.
inline SurfaceMesh dimpled_disk(const Vec3& center, const Vec3& axis, double rim_distance, double half_thickness,
                                double center_gap, double resolution) {
  const double h0 = center_gap / 2, H = half_thickness, rho1 = rim_distance;
  std::vector<std::pair<double, double>> prof;
  const int n = 48;
  for (int i = 0; i <= n; ++i) {
    const double rho = rho1 * i / n;
    prof.emplace_back(-(h0 + (H - h0) * (rho / rho1) * (rho / rho1)), rho);
  }
  for (int i = 1; i < n; ++i) {
    const double phi = -std::numbers::pi / 2 + std::numbers::pi * i / n;
    prof.emplace_back(H * std::sin(phi), rho1 + H * std::cos(phi));
  }
  for (int i = n; i >= 0; --i) {
    const double rho = rho1 * i / n;
    prof.emplace_back(h0 + (H - h0) * (rho / rho1) * (rho / rho1), rho);
  }
  prof.front().second = 0.0;
  prof.back().second = 0.0;
  return make_revolution(center, axis, prof, resolution);
}

inline SurgeryFixture dimpled_disk_fixture(int variant) {
  std::mt19937_64 rng(3000 + variant);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vec3 axis = random_unit(rng);
  const Vec3 c{0.1 * (u(rng) - 0.5), 0.1 * (u(rng) - 0.5), 0.1 * (u(rng) - 0.5)};
  SurgeryFixture f;
  f.name = "dimpled_disk_" + std::to_string(variant);
  f.set = single_surface(dimpled_disk(c, axis, 0.5 + 0.1 * u(rng), 0.2, 0.01 + 0.01 * u(rng), 0.05));
  f.params.a = 0.05;
  f.params.n_detect = 12;
  f.domain = fixture_domain();
  f.expected = TopoKind::GenusIncrease;
  return f;
}

/// Disk whose two faces run parallel at a tiny gap over most of the radius.
/// With `ring` set the faces bulge apart around the axis, so they only touch
/// on an annulus.
inline SurgeryFixture wide_contact_fixture(int variant, bool ring) {
  std::mt19937_64 rng(5000 + variant);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vec3 axis = random_unit(rng);
  const Vec3 c{0.1 * (u(rng) - 0.5), 0.1 * (u(rng) - 0.5), 0.1 * (u(rng) - 0.5)};
  const double rho1 = 0.6, H = 0.2, g = 0.01 + 0.005 * u(rng);
  auto half = [&](double rho) {
    double h = g / 2 + (H - g / 2) * std::pow(rho / rho1, 8);
    if (ring) h += 0.08 * std::exp(-(rho / 0.12) * (rho / 0.12));
    return h;
  };
  std::vector<std::pair<double, double>> prof;
  const int n = 60;
  for (int i = 0; i <= n; ++i) prof.emplace_back(-half(rho1 * i / n), rho1 * i / n);
  for (int i = 1; i < n / 2; ++i) {
    const double phi = -std::numbers::pi / 2 + std::numbers::pi * i / (n / 2);
    prof.emplace_back(H * std::sin(phi), rho1 + H * std::cos(phi));
  }
  for (int i = n; i >= 0; --i) prof.emplace_back(half(rho1 * i / n), rho1 * i / n);
  SurgeryFixture f;
  f.name = std::string(ring ? "ring_contact_" : "flat_contact_") + std::to_string(variant);
  f.set = single_surface(make_revolution(c, axis, prof, 0.04));
  f.params.a = 0.05;
  f.params.n_detect = 8;
  f.domain = fixture_domain();
  f.expected = TopoKind::GenusIncrease;
  return f;
}

/// Torus whose hole is narrower than a grid cube: the hole pinches shut.
inline SurgeryFixture thin_torus_fixture(int variant) {
  std::mt19937_64 rng(4000 + variant);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vec3 axis = random_unit(rng);
  const Vec3 c{0.1 * (u(rng) - 0.5), 0.1 * (u(rng) - 0.5), 0.1 * (u(rng) - 0.5)};
  const double r = 0.4 + 0.05 * u(rng);
  const double hole = 0.02 + 0.01 * u(rng);
  SurgeryFixture f;
  f.name = "thin_torus_" + std::to_string(variant);
  f.set = single_surface(make_torus(c, axis, r + hole, r, 0.05));
  f.params.a = 0.06;
  f.params.n_detect = 10;
  f.domain = fixture_domain();
  f.expected = TopoKind::GenusDecrease;
  return f;
}

inline std::vector<SurgeryFixture> all_surgery_fixtures(int per_kind = 25) {
  std::vector<SurgeryFixture> out;
  for (int i = 0; i < per_kind; ++i) out.push_back(dumbbell_fixture(i));
  for (int i = 0; i < per_kind; ++i) out.push_back(twin_sphere_fixture(i));
  for (int i = 0; i < per_kind; ++i) out.push_back(dimpled_disk_fixture(i));
  for (int i = 0; i < per_kind; ++i) out.push_back(thin_torus_fixture(i));
  return out;
}

}  // namespace psurf::testing
