#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <tuple>
#include <vector>

#include "errors.hpp"
#include "trimesh.hpp"
#include "vec3.hpp"
#include "voxel_image.hpp"

namespace psurf {

/// Voxel-to-region labeling with per-region counts n_k, intensity sums C_k and
/// means c_k = C_k / n_k. Region k is stored at index k-1; labels are 1-based.
struct RegionState {
  std::vector<int> labels;
  std::vector<long long> counts;
  std::vector<double> sums;
  std::vector<double> means;  // NaN for empty regions
  std::vector<std::string> warnings;

  int num_regions() const { return static_cast<int>(counts.size()); }
  long long count(int region) const { return counts[region - 1]; }
  double mean(int region) const { return means[region - 1]; }
};

struct LabelOptions {
  /// Strict mode rejects crossing sequences that contradict the region map.
  /// Lenient mode tolerates overlapping surfaces (a transient state right
  /// before a merge) by tracking the innermost entered surface.
  bool strict = true;
};

namespace detail {

struct Crossing {
  double x;
  int surface;   // index into SurfaceSet::meshes
  bool exiting;  // ray passes from the minus side to the plus side
};

/// Sign of the edge function of (a,b) at p perturbed to p + (eps, eps^2).
/// Evaluated with the endpoints in lexicographic order so that the two faces
/// sharing an edge see bitwise-identical values; never returns zero for a
/// non-degenerate edge.
inline int perturbed_edge_sign(double ay, double az, double by, double bz, double py, double pz) {
  bool swapped = false;
  if (std::tie(by, bz) < std::tie(ay, az)) {
    std::swap(ay, by);
    std::swap(az, bz);
    swapped = true;
  }
  const double v = (by - ay) * (pz - az) - (bz - az) * (py - ay);
  int s;
  if (v > 0.0) s = 1;
  else if (v < 0.0) s = -1;
  else if (bz != az) s = bz > az ? -1 : 1;
  else s = by > ay ? 1 : (by < ay ? -1 : 0);
  return swapped ? -s : s;
}

/// Region-walk state for one column.
class ColumnWalker {
 public:
  ColumnWalker(const SurfaceSet& s, int background, bool strict)
      : s_(s), current_(background), background_(background), strict_(strict) {}

  int region() const { return current_; }

  void cross(const Crossing& c) {
    const RegionPair& r = s_.regions[c.surface];
    if (!c.exiting) {
      if (strict_ && current_ != r.plus)
        throw TopologyError("ray enters surface " + std::to_string(s_.meshes[c.surface].surface_id) +
                            " from region " + std::to_string(current_) + " but its outer region is " +
                            std::to_string(r.plus));
      if (strict_ || ++winding(c.surface) > 0) {
        stack_.push_back(c.surface);
        current_ = r.minus;
      }
      return;
    }
    if (strict_) {
      if (stack_.empty() || stack_.back() != c.surface || current_ != r.minus)
        throw TopologyError("ray exits surface " + std::to_string(s_.meshes[c.surface].surface_id) +
                            " inconsistently with the region map");
      stack_.pop_back();
      current_ = r.plus;
      return;
    }
    // Lenient: winding count per surface. A fold (exit, exit, enter) takes the
    // count negative instead of leaving the ray stuck inside.
    const bool found = --winding(c.surface) >= 0;
    if (found) {
      const auto it = std::find(stack_.rbegin(), stack_.rend(), c.surface);
      stack_.erase(std::next(it).base());
    }
    current_ = !stack_.empty() ? s_.regions[stack_.back()].minus : (found ? r.plus : background_);
  }

 private:
  const SurfaceSet& s_;
  int current_;
  int background_;
  bool strict_;
  std::vector<int> stack_;
  std::vector<int> winding_;

  int& winding(int surface) {
    if (winding_.size() <= static_cast<std::size_t>(surface)) winding_.resize(surface + 1, 0);
    return winding_[surface];
  }
};

/// Ray crossings of every column (j,k) of voxel centers with all surfaces,
/// sorted by x. Columns are indexed j + k*Ny.
inline std::vector<std::vector<Crossing>> column_crossings(const VoxelGrid& g, const SurfaceSet& s) {
  const auto& dims = g.dims();
  const Vec3 o = g.origin(), h = g.spacing();
  std::vector<std::vector<Crossing>> cols(static_cast<std::size_t>(dims[1]) * dims[2]);
  for (int si = 0; si < static_cast<int>(s.meshes.size()); ++si) {
    const SurfaceMesh& m = s.meshes[si];
    for (const auto& t : m.faces) {
      const Vec3& a = m.vertices[t[0]];
      const Vec3& b = m.vertices[t[1]];
      const Vec3& c = m.vertices[t[2]];
      const double nx = (b.y - a.y) * (c.z - a.z) - (b.z - a.z) * (c.y - a.y);
      if (nx == 0.0) continue;  // projection has zero area
      const double ylo = std::min({a.y, b.y, c.y}), yhi = std::max({a.y, b.y, c.y});
      const double zlo = std::min({a.z, b.z, c.z}), zhi = std::max({a.z, b.z, c.z});
      // One extra column each side; the exact predicate decides membership.
      const int j0 = std::max(0, static_cast<int>(std::floor((ylo - o.y) / h.y - 0.5)));
      const int j1 = std::min(dims[1] - 1, static_cast<int>(std::ceil((yhi - o.y) / h.y - 0.5)));
      const int k0 = std::max(0, static_cast<int>(std::floor((zlo - o.z) / h.z - 0.5)));
      const int k1 = std::min(dims[2] - 1, static_cast<int>(std::ceil((zhi - o.z) / h.z - 0.5)));
      for (int k = k0; k <= k1; ++k) {
        const double pz = o.z + (k + 0.5) * h.z;
        for (int j = j0; j <= j1; ++j) {
          const double py = o.y + (j + 0.5) * h.y;
          const int s0 = perturbed_edge_sign(a.y, a.z, b.y, b.z, py, pz);
          const int s1 = perturbed_edge_sign(b.y, b.z, c.y, c.z, py, pz);
          const int s2 = perturbed_edge_sign(c.y, c.z, a.y, a.z, py, pz);
          if (s0 == 0 || s0 != s1 || s1 != s2) continue;
          // Barycentric weights from the projected sub-triangle areas.
          const double wa = (b.y - py) * (c.z - pz) - (b.z - pz) * (c.y - py);
          const double wb = (c.y - py) * (a.z - pz) - (c.z - pz) * (a.y - py);
          const double x = (wa * a.x + wb * b.x + (nx - wa - wb) * c.x) / nx;
          cols[static_cast<std::size_t>(k) * dims[1] + j].push_back({x, si, nx > 0.0});
        }
      }
    }
  }
  for (auto& c : cols)
    std::sort(c.begin(), c.end(), [](const Crossing& p, const Crossing& q) {
      return std::tie(p.x, p.surface, p.exiting) < std::tie(q.x, q.surface, q.exiting);
    });
  return cols;
}

/// Region outside every surface: the outer region of the first surface hit by
/// any ray, checked for agreement across columns.
inline int background_region(const SurfaceSet& s, const std::vector<std::vector<Crossing>>& cols, bool strict) {
  int bg = -1;
  for (const auto& c : cols) {
    if (c.empty()) continue;
    if (c.front().exiting) {
      if (strict) throw TopologyError("ray exits a surface before entering one (orientation reversed?)");
      continue;
    }
    const int r = s.regions[c.front().surface].plus;
    if (bg < 0) {
      bg = r;
      if (!strict) break;
    } else if (bg != r) {
      throw TopologyError("inconsistent background region: " + std::to_string(bg) + " vs " + std::to_string(r));
    }
  }
  if (bg < 0) bg = s.regions.empty() ? 1 : s.regions.front().plus;
  return bg;
}

/// Labels the voxels of column (j,k) for which `want(i)` holds by walking its crossings.
template <class Want, class Emit>
void walk_column(const VoxelGrid& g, const SurfaceSet& s, const std::vector<Crossing>& cr, int background,
                 bool strict, Want&& want, Emit&& emit) {
  const int nx = g.dims()[0];
  const double ox = g.origin().x, hx = g.spacing().x;
  ColumnWalker w(s, background, strict);
  std::size_t p = 0;
  for (int i = 0; i < nx; ++i) {
    const double xc = ox + (i + 0.5) * hx;
    while (p < cr.size() && cr[p].x < xc) w.cross(cr[p++]);
    int label = w.region();
    if (p < cr.size() && cr[p].x == xc) {
      // Center lies on a surface: take the lower of the two adjacent labels.
      ColumnWalker probe = w;
      std::size_t q = p;
      while (q < cr.size() && cr[q].x == xc) probe.cross(cr[q++]);
      label = std::min(label, probe.region());
    }
    if (want(i)) emit(i, label);
  }
  while (p < cr.size()) w.cross(cr[p++]);
  if (strict && w.region() != background)
    throw TopologyError("ray leaves the domain inside region " + std::to_string(w.region()));
}

inline void recompute_means(RegionState& r) {
  r.means.assign(r.counts.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < r.counts.size(); ++k)
    if (r.counts[k] > 0) r.means[k] = r.sums[k] / static_cast<double>(r.counts[k]);
}

}  // namespace detail

/// Labels every voxel by the region containing its center and accumulates
/// counts and sums in linear voxel order.
inline RegionState init_regions(const VoxelGrid& g, const SurfaceSet& s, const LabelOptions& opt = {}) {
  if (s.num_regions < 1) throw ParameterError("need at least one region");
  const auto cols = detail::column_crossings(g, s);
  const int bg = detail::background_region(s, cols, opt.strict);
  const auto& dims = g.dims();
  RegionState r;
  r.labels.assign(g.size(), 0);
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      detail::walk_column(g, s, cols[static_cast<std::size_t>(k) * dims[1] + j], bg, opt.strict,
                          [](int) { return true; },
                          [&](int i, int label) { r.labels[g.linear(i, j, k)] = label; });
  r.counts.assign(s.num_regions, 0);
  r.sums.assign(s.num_regions, 0.0);
  const auto& data = g.data();
  for (std::size_t v = 0; v < data.size(); ++v) {
    const int l = r.labels[v];
    if (l < 1 || l > s.num_regions) throw TopologyError("voxel label " + std::to_string(l) + " out of range");
    ++r.counts[l - 1];
    r.sums[l - 1] += data[v];
  }
  detail::recompute_means(r);
  return r;
}

/// Voxels within `band_width` voxels of any face bounding box.
inline std::vector<char> band_mask(const VoxelGrid& g, const SurfaceSet& s, int band_width) {
  const auto& dims = g.dims();
  const Vec3 o = g.origin(), h = g.spacing();
  std::vector<char> mask(g.size(), 0);
  for (const auto& m : s.meshes)
    for (const auto& t : m.faces) {
      Box b{m.vertices[t[0]], m.vertices[t[0]]};
      b.expand(m.vertices[t[1]]);
      b.expand(m.vertices[t[2]]);
      int lo[3], hi[3];
      for (int d = 0; d < 3; ++d) {
        lo[d] = std::max(0, static_cast<int>(std::floor((b.lo[d] - o[d]) / h[d])) - band_width);
        hi[d] = std::min(dims[d] - 1, static_cast<int>(std::floor((b.hi[d] - o[d]) / h[d])) + band_width);
      }
      for (int k = lo[2]; k <= hi[2]; ++k)
        for (int j = lo[1]; j <= hi[1]; ++j)
          for (int i = lo[0]; i <= hi[0]; ++i) mask[g.linear(i, j, k)] = 1;
    }
  return mask;
}

/// Re-tests only voxels in the band around the current surfaces and applies
/// n_k += 1, n_l -= 1, C_k += u0, C_l -= u0 for every flipped voxel; means are
/// recomputed once at the end. A flip on the band boundary means the surfaces
/// moved too far, and the state is rebuilt by init_regions with a warning.
inline RegionState update_regions_incremental(const RegionState& prev, const VoxelGrid& g, const SurfaceSet& s,
                                              int band_width = 3, const LabelOptions& opt = {}) {
  if (band_width < 1) throw ParameterError("band width must be at least one voxel");
  if (prev.labels.size() != g.size() || prev.num_regions() != s.num_regions) return init_regions(g, s, opt);
  const auto mask = band_mask(g, s, band_width);
  const auto cols = detail::column_crossings(g, s);
  const int bg = detail::background_region(s, cols, opt.strict);
  const auto& dims = g.dims();
  RegionState r = prev;
  r.warnings.clear();
  bool boundary_flip = false;
  auto on_band_boundary = [&](int i, int j, int k) {
    const int nb[6][3] = {{i - 1, j, k}, {i + 1, j, k}, {i, j - 1, k}, {i, j + 1, k}, {i, j, k - 1}, {i, j, k + 1}};
    for (const auto& n : nb) {
      if (n[0] < 0 || n[1] < 0 || n[2] < 0 || n[0] >= dims[0] || n[1] >= dims[1] || n[2] >= dims[2]) continue;
      if (!mask[g.linear(n[0], n[1], n[2])]) return true;
    }
    return false;
  };
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      detail::walk_column(
          g, s, cols[static_cast<std::size_t>(k) * dims[1] + j], bg, opt.strict,
          [&](int i) { return mask[g.linear(i, j, k)] != 0; },
          [&](int i, int label) {
            const std::size_t v = g.linear(i, j, k);
            const int old = r.labels[v];
            if (old == label) return;
            if (on_band_boundary(i, j, k)) boundary_flip = true;
            const double u = g.data()[v];
            ++r.counts[label - 1];
            --r.counts[old - 1];
            r.sums[label - 1] += u;
            r.sums[old - 1] -= u;
            r.labels[v] = label;
          });
  if (boundary_flip) {
    RegionState full = init_regions(g, s, opt);
    full.warnings.push_back("voxel flipped on the band boundary; band width " + std::to_string(band_width) +
                            " too small, regions recomputed from scratch");
    return full;
  }
  detail::recompute_means(r);
  return r;
}

/// F = lambda [(u0(q) - c_{k+})^2 - (u0(q) - c_{k-})^2] per vertex, global numbering.
inline std::vector<double> nodal_force(const VoxelGrid& g, const RegionState& r, const SurfaceSet& s, double lambda) {
  std::vector<double> F;
  F.reserve(s.total_vertices());
  for (std::size_t i = 0; i < s.meshes.size(); ++i) {
    const RegionPair& rp = s.regions[i];
    for (int k : {rp.plus, rp.minus})
      if (k < 1 || k > r.num_regions() || r.count(k) == 0)
        throw EmptyRegionError(k, "region " + std::to_string(k) + " is empty; its mean is undefined");
    const double cp = r.mean(rp.plus), cm = r.mean(rp.minus);
    for (const auto& q : s.meshes[i].vertices) {
      const double u = g.sample(q);
      F.push_back(lambda * ((u - cp) * (u - cp) - (u - cm) * (u - cm)));
    }
  }
  return F;
}

/// sum_k sum_{v in k} (u0 - c_k)^2 times the voxel volume (empty regions contribute nothing).
inline double fidelity(const VoxelGrid& g, const RegionState& r, const std::vector<double>* means = nullptr) {
  const auto& c = means ? *means : r.means;
  double e = 0.0;
  const auto& data = g.data();
  for (std::size_t v = 0; v < data.size(); ++v) {
    const double d = data[v] - c[r.labels[v] - 1];
    if (std::isfinite(d)) e += d * d;
  }
  return e * g.voxel_volume();
}

}  // namespace psurf
