#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <psurf/trimesh.hpp>

namespace psurf::testing {

/// Fresh scratch directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("psurf_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline SurfaceMesh unit_cube_mesh() {
  SurfaceMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  m.faces = {{0, 2, 1}, {0, 3, 2}, {4, 5, 6}, {4, 6, 7}, {0, 1, 5}, {0, 5, 4},
             {1, 2, 6}, {1, 6, 5}, {2, 3, 7}, {2, 7, 6}, {3, 0, 4}, {3, 4, 7}};
  build_adjacency(m);
  return m;
}

inline SurfaceMesh octahedron_mesh(double s = 1.0) {
  SurfaceMesh m;
  m.vertices = {{s, 0, 0}, {-s, 0, 0}, {0, s, 0}, {0, -s, 0}, {0, 0, s}, {0, 0, -s}};
  m.faces = {{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4},
             {2, 0, 5}, {1, 2, 5}, {3, 1, 5}, {0, 3, 5}};
  build_adjacency(m);
  return m;
}

/// Rotation matrix rows applied to a point.
struct Rotation {
  Vec3 r0, r1, r2;
  Vec3 operator()(const Vec3& p) const { return {dot(r0, p), dot(r1, p), dot(r2, p)}; }
};

inline Rotation random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const Vec3 a = normalized({n(rng), n(rng), n(rng)});
  Vec3 b{n(rng), n(rng), n(rng)};
  b = normalized(b - dot(a, b) * a);
  return {a, b, cross(a, b)};
}

}  // namespace psurf::testing

namespace psurf::testing {

/// Generalized winding number of a closed mesh around p (solid-angle sum).
inline double winding_number(const SurfaceMesh& m, const Vec3& p) {
  double total = 0.0;
  for (const auto& t : m.faces) {
    const Vec3 a = m.vertices[t[0]] - p, b = m.vertices[t[1]] - p, c = m.vertices[t[2]] - p;
    const double la = norm(a), lb = norm(b), lc = norm(c);
    const double num = dot(a, cross(b, c));
    const double den = la * lb * lc + dot(a, b) * lc + dot(b, c) * la + dot(c, a) * lb;
    total += 2.0 * std::atan2(num, den);
  }
  return total / (4.0 * 3.14159265358979323846);
}

}  // namespace psurf::testing
