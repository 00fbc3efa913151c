#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "vec3.hpp"

namespace psurf {

struct VoxelIndex {
  int i = 0;
  int j = 0;
  int k = 0;
  friend bool operator==(const VoxelIndex&, const VoxelIndex&) = default;
};

/// Scalar volumetric image. Voxel (i,j,k) covers the closed cell
/// [origin + (i,j,k)*spacing, origin + (i+1,j+1,k+1)*spacing]; data is x-fastest.
/// Immutable after construction.
class VoxelGrid {
 public:
  VoxelGrid(std::array<int, 3> dims, Vec3 origin, Vec3 spacing, std::vector<float> data)
      : dims_(dims), origin_(origin), spacing_(spacing), data_(std::move(data)) {
    for (int d = 0; d < 3; ++d) {
      if (dims_[d] <= 0) throw ParameterError("voxel grid dims must be positive");
      if (!(spacing_[d] > 0.0) || !std::isfinite(spacing_[d]))
        throw LoadError(LoadError::Kind::BadSpacing, "voxel spacing must be positive");
    }
    if (data_.size() != size())
      throw LoadError(LoadError::Kind::SizeMismatch,
                      "voxel payload has " + std::to_string(data_.size()) + " values, expected " +
                          std::to_string(size()));
    for (float v : data_)
      if (!std::isfinite(v)) throw LoadError(LoadError::Kind::NonFinite, "non-finite intensity");
  }

  const std::array<int, 3>& dims() const { return dims_; }
  const Vec3& origin() const { return origin_; }
  const Vec3& spacing() const { return spacing_; }
  const std::vector<float>& data() const { return data_; }
  std::size_t size() const {
    return static_cast<std::size_t>(dims_[0]) * static_cast<std::size_t>(dims_[1]) *
           static_cast<std::size_t>(dims_[2]);
  }

  std::size_t linear(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * dims_[1] + j) * dims_[0] + i;
  }
  std::size_t linear(const VoxelIndex& v) const { return linear(v.i, v.j, v.k); }
  float at(int i, int j, int k) const { return data_[linear(i, j, k)]; }
  float at(const VoxelIndex& v) const { return data_[linear(v)]; }

  Vec3 voxel_center(const VoxelIndex& v) const {
    return {origin_.x + (v.i + 0.5) * spacing_.x, origin_.y + (v.j + 0.5) * spacing_.y,
            origin_.z + (v.k + 0.5) * spacing_.z};
  }
  double voxel_volume() const { return spacing_.x * spacing_.y * spacing_.z; }

  Box bounds() const {
    return {origin_, {origin_.x + dims_[0] * spacing_.x, origin_.y + dims_[1] * spacing_.y,
                      origin_.z + dims_[2] * spacing_.z}};
  }

  /// Voxel whose closed cell contains p; shared faces resolve to the lower index.
  std::optional<VoxelIndex> world_to_voxel(const Vec3& p) const {
    std::array<int, 3> idx{};
    for (int d = 0; d < 3; ++d) {
      const double t = (p[d] - origin_[d]) / spacing_[d];
      if (!(t >= 0.0) || t > dims_[d]) return std::nullopt;
      idx[d] = t == 0.0 ? 0 : static_cast<int>(std::ceil(t)) - 1;
    }
    return VoxelIndex{idx[0], idx[1], idx[2]};
  }

  /// Like world_to_voxel but points outside the grid snap to the nearest boundary voxel.
  VoxelIndex nearest_voxel(const Vec3& p) const {
    if (auto v = world_to_voxel(bounds().clamp(p))) return *v;
    return {0, 0, 0};
  }

  /// Piecewise-constant intensity lookup.
  double sample(const Vec3& p) const { return at(nearest_voxel(p)); }

 private:
  std::array<int, 3> dims_;
  Vec3 origin_;
  Vec3 spacing_;
  std::vector<float> data_;
};

namespace detail {

inline std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

}  // namespace detail

/// Writes `<header_path>` (JSON) and a sibling raw payload named after it with
/// extension `.raw`.
inline void save_raw(const VoxelGrid& g, const std::filesystem::path& header_path) {
  std::filesystem::path payload = header_path;
  payload.replace_extension(".raw");
  nlohmann::json h;
  h["dims"] = g.dims();
  h["spacing"] = {g.spacing().x, g.spacing().y, g.spacing().z};
  h["origin"] = {g.origin().x, g.origin().y, g.origin().z};
  h["dtype"] = "f32";
  h["data"] = payload.filename().string();
  {
    std::ofstream out(header_path);
    if (!out) throw Error("cannot write " + header_path.string());
    out << h.dump(2) << '\n';
  }
  std::ofstream out(payload, std::ios::binary);
  if (!out) throw Error("cannot write " + payload.string());
  std::vector<std::uint32_t> words(g.size());
  for (std::size_t n = 0; n < g.size(); ++n)
    words[n] = detail::to_little_endian(std::bit_cast<std::uint32_t>(g.data()[n]));
  out.write(reinterpret_cast<const char*>(words.data()),
            static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
}

inline VoxelGrid load_raw(const std::filesystem::path& header_path) {
  using Kind = LoadError::Kind;
  std::ifstream in(header_path);
  if (!in) throw LoadError(Kind::MissingFile, "missing image header " + header_path.string());
  nlohmann::json h;
  std::array<int, 3> dims{};
  Vec3 spacing, origin;
  std::string data_name;
  try {
    in >> h;
    dims = h.at("dims").get<std::array<int, 3>>();
    const auto s = h.at("spacing").get<std::array<double, 3>>();
    const auto o = h.value("origin", std::array<double, 3>{0.0, 0.0, 0.0});
    spacing = {s[0], s[1], s[2]};
    origin = {o[0], o[1], o[2]};
    if (h.value("dtype", std::string("f32")) != "f32")
      throw LoadError(Kind::BadHeader, "unsupported dtype " + h.at("dtype").get<std::string>());
    data_name = h.at("data").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(Kind::BadHeader, std::string("malformed image header: ") + e.what());
  }
  for (int d = 0; d < 3; ++d)
    if (!(spacing[d] > 0.0)) throw LoadError(Kind::BadSpacing, "voxel spacing must be positive");
  if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
    throw LoadError(Kind::BadHeader, "dims must be positive");

  const auto payload = header_path.parent_path() / data_name;
  std::ifstream raw(payload, std::ios::binary | std::ios::ate);
  if (!raw) throw LoadError(Kind::MissingFile, "missing image payload " + payload.string());
  const auto bytes = static_cast<std::size_t>(raw.tellg());
  const std::size_t expected =
      static_cast<std::size_t>(dims[0]) * dims[1] * dims[2] * sizeof(float);
  if (bytes != expected)
    throw LoadError(Kind::SizeMismatch, "payload " + payload.string() + " has " +
                                            std::to_string(bytes) + " bytes, expected " +
                                            std::to_string(expected));
  raw.seekg(0);
  std::vector<std::uint32_t> words(expected / sizeof(float));
  raw.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(expected));
  std::vector<float> data(words.size());
  for (std::size_t n = 0; n < words.size(); ++n)
    data[n] = std::bit_cast<float>(detail::to_little_endian(words[n]));
  return VoxelGrid(dims, origin, spacing, std::move(data));
}

// ---------------------------------------------------------------------------
// Synthetic binary phantoms: intensity 0 inside the object, 1 outside.

enum class PhantomKind { TwoBalls, OneBall, Torus, CustomBall, CustomTorus };

struct PhantomSpec {
  PhantomKind kind = PhantomKind::TwoBalls;
  Vec3 center{};
  double radius = 0.8;       // ball radius
  double major_radius = 1.2;  // torus R
  double minor_radius = 0.4;  // torus r

  static PhantomSpec two_balls() { return {PhantomKind::TwoBalls, {}, 0.8, 1.2, 0.4}; }
  static PhantomSpec one_ball(double r = 0.6) { return {PhantomKind::OneBall, {}, r, 1.2, 0.4}; }
  static PhantomSpec torus() { return {PhantomKind::Torus, {}, 0.8, 1.2, 0.4}; }
  static PhantomSpec custom_ball(Vec3 c, double r) { return {PhantomKind::CustomBall, c, r, 1.2, 0.4}; }
  static PhantomSpec custom_torus(double R, double r) {
    return {PhantomKind::CustomTorus, {}, 0.8, R, r};
  }

  /// True when p belongs to the object (intensity 0).
  bool inside(const Vec3& p) const {
    switch (kind) {
      case PhantomKind::TwoBalls:
        return distance(p, {-1.2, 0.0, 0.0}) <= 0.8 || distance(p, {1.2, 0.0, 0.0}) <= 0.8;
      case PhantomKind::OneBall:
      case PhantomKind::CustomBall:
        return distance(p, center) <= radius;
      case PhantomKind::Torus:
      case PhantomKind::CustomTorus: {
        const Vec3 q = p - center;
        const double ring = std::sqrt(q.x * q.x + q.y * q.y) - major_radius;
        return ring * ring + q.z * q.z <= minor_radius * minor_radius;
      }
    }
    return false;
  }

  /// Default image domain used by the reference experiments.
  Box default_domain() const {
    switch (kind) {
      case PhantomKind::TwoBalls:
        return {{-2.5, -1.5, -1.5}, {2.5, 1.5, 1.5}};
      case PhantomKind::OneBall:
        return {{-1.2, -0.8, -0.8}, {1.2, 0.8, 0.8}};
      case PhantomKind::Torus:
        return {{-2.0, -2.0, -2.0}, {2.0, 2.0, 2.0}};
      case PhantomKind::CustomBall: {
        const double h = 1.5 * radius;
        return {center - Vec3{h, h, h}, center + Vec3{h, h, h}};
      }
      case PhantomKind::CustomTorus: {
        const double h = 1.3 * (major_radius + minor_radius);
        const double v = 2.0 * minor_radius + 0.5;
        return {center - Vec3{h, h, v}, center + Vec3{h, h, v}};
      }
    }
    return {};
  }
};

inline std::optional<PhantomKind> parse_phantom_kind(const std::string& s) {
  if (s == "two_balls") return PhantomKind::TwoBalls;
  if (s == "one_ball") return PhantomKind::OneBall;
  if (s == "torus") return PhantomKind::Torus;
  if (s == "custom-ball" || s == "custom_ball" || s == "ball") return PhantomKind::CustomBall;
  if (s == "custom-torus" || s == "custom_torus") return PhantomKind::CustomTorus;
  return std::nullopt;
}

/// Samples the phantom at voxel centers of a dims-sized grid covering `domain`.
inline VoxelGrid make_phantom(const PhantomSpec& spec, std::array<int, 3> dims, const Box& domain) {
  const Vec3 ext = domain.extent();
  for (int d = 0; d < 3; ++d) {
    if (dims[d] < 2) throw ParameterError("phantom dims must be >= 2 per axis");
    if (!(ext[d] > 0.0)) throw ParameterError("phantom domain has zero extent");
  }
  const Vec3 spacing{ext.x / dims[0], ext.y / dims[1], ext.z / dims[2]};
  std::vector<float> data(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);
  std::size_t n = 0;
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      for (int i = 0; i < dims[0]; ++i, ++n) {
        const Vec3 c{domain.lo.x + (i + 0.5) * spacing.x, domain.lo.y + (j + 0.5) * spacing.y,
                     domain.lo.z + (k + 0.5) * spacing.z};
        data[n] = spec.inside(c) ? 0.0f : 1.0f;
      }
  return VoxelGrid(dims, domain.lo, spacing, std::move(data));
}

}  // namespace psurf
