#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "evolution.hpp"
#include "seeds.hpp"
#include "trimesh.hpp"

namespace psurf {

/// Seed surface plus the regions on either side of it.
struct SeedEntry {
  SeedSpec spec;
  RegionPair regions{1, 2};
};

struct SegmentConfig {
  RunConfig run;
  std::vector<SeedEntry> seeds;
  int num_regions = 2;
  std::string image;  // optional default image path, relative to the config file

  SurfaceSet build_surfaces() const {
    SurfaceSet s;
    s.num_regions = num_regions;
    int id = 1;
    for (const auto& e : seeds) {
      SurfaceMesh m = make_seed(e.spec);
      m.surface_id = id++;
      s.add(std::move(m), e.regions);
    }
    s.validate();
    return s;
  }
};

/// Schema problem in a configuration document.
class ConfigError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

namespace detail {

using nlohmann::json;

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

inline void read_vec(const json& j, const char* key, Vec3& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_array() || it->size() != 3) throw ConfigError(where + "." + key + " must be an array of 3 numbers");
  for (int d = 0; d < 3; ++d) {
    if (!(*it)[d].is_number()) throw ConfigError(where + "." + key + " must be an array of 3 numbers");
    out[d] = (*it)[d].get<double>();
  }
}

inline SeedEntry parse_seed(const json& j, const std::string& where) {
  check_keys(j, where, {"shape", "center", "axis", "radius", "length", "major_radius", "half_distance",
                        "neck_radius", "resolution", "regions"});
  SeedEntry e;
  std::string shape = "sphere";
  read(j, "shape", shape, where);
  try {
    e.spec.shape = parse_seed_shape(shape);
  } catch (const ParameterError& ex) {
    throw ConfigError(where + ": " + ex.what());
  }
  read_vec(j, "center", e.spec.center, where);
  read_vec(j, "axis", e.spec.axis, where);
  read(j, "radius", e.spec.radius, where);
  read(j, "length", e.spec.length, where);
  read(j, "major_radius", e.spec.major_radius, where);
  read(j, "half_distance", e.spec.half_distance, where);
  read(j, "neck_radius", e.spec.neck_radius, where);
  read(j, "resolution", e.spec.resolution, where);
  if (auto it = j.find("regions"); it != j.end()) {
    if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number_integer() || !(*it)[1].is_number_integer())
      throw ConfigError(where + ".regions must be [plus, minus]");
    e.regions = {(*it)[0].get<int>(), (*it)[1].get<int>()};
  }
  if (!(e.spec.radius > 0.0) || !(e.spec.resolution > 0.0)) throw ConfigError(where + ": radius and resolution must be positive");
  return e;
}

}  // namespace detail

/// Parses a segmentation config. Unknown keys and wrong types are errors;
/// missing keys keep the defaults.
inline SegmentConfig parse_config(const nlohmann::json& j) {
  using detail::read;
  detail::check_keys(j, "config", {"sigma", "lambda", "tau0", "control", "topology", "detection", "quality",
                                   "band_width", "lenient_labels", "max_steps", "stop", "cooldown_steps",
                                   "seeds", "num_regions", "image", "description", "vanish_area"});
  SegmentConfig c;
  RunConfig& r = c.run;
  read(j, "sigma", r.sigma, "config");
  read(j, "lambda", r.lambda, "config");
  read(j, "tau0", r.tau0, "config");
  read(j, "band_width", r.band_width, "config");
  read(j, "lenient_labels", r.lenient_labels, "config");
  read(j, "max_steps", r.max_steps, "config");
  read(j, "cooldown_steps", r.cooldown_steps, "config");
  read(j, "vanish_area", r.vanish_area, "config");
  read(j, "num_regions", c.num_regions, "config");
  read(j, "image", c.image, "config");
  if (auto it = j.find("control"); it != j.end()) {
    detail::check_keys(*it, "control", {"dxn_min", "dxn_max", "lambda_t", "tau_min", "tau_max"});
    read(*it, "dxn_min", r.dxn_min, "control");
    read(*it, "dxn_max", r.dxn_max, "control");
    read(*it, "lambda_t", r.lambda_t, "control");
    read(*it, "tau_min", r.tau_min, "control");
    read(*it, "tau_max", r.tau_max, "control");
  }
  if (auto it = j.find("topology"); it != j.end()) {
    if (!it->is_boolean()) throw ConfigError("config.topology must be a boolean");
    r.topology = it->get<bool>();
  }
  if (auto it = j.find("detection"); it != j.end()) {
    detail::check_keys(*it, "detection", {"a", "n_detect", "thr1", "thr2", "thr3", "outlier_fraction",
                                          "split_fraction", "max_restarts", "adaptive"});
    DetectionParams& d = r.detection;
    read(*it, "a", d.a, "detection");
    read(*it, "n_detect", d.n_detect, "detection");
    read(*it, "thr1", d.thr1, "detection");
    read(*it, "thr2", d.thr2, "detection");
    read(*it, "thr3", d.thr3, "detection");
    read(*it, "outlier_fraction", d.outlier_fraction, "detection");
    read(*it, "split_fraction", d.split_fraction, "detection");
    read(*it, "max_restarts", d.max_restarts, "detection");
    read(*it, "adaptive", r.adaptive_grid, "detection");
  }
  if (auto it = j.find("quality"); it != j.end()) {
    detail::check_keys(*it, "quality", {"a_desired", "refine_factor", "max_angle", "min_angle",
                                        "min_area_fraction", "max_passes", "refine", "delete"});
    QualityParams& q = r.quality;
    read(*it, "a_desired", q.a_desired, "quality");
    read(*it, "refine_factor", q.refine_factor, "quality");
    read(*it, "max_angle", q.max_angle, "quality");
    read(*it, "min_angle", q.min_angle, "quality");
    read(*it, "min_area_fraction", q.min_area_fraction, "quality");
    read(*it, "max_passes", q.max_passes, "quality");
    read(*it, "refine", r.refine, "quality");
    read(*it, "delete", r.remove_degenerate, "quality");
  }
  if (auto it = j.find("stop"); it != j.end()) {
    detail::check_keys(*it, "stop", {"eps", "quiet_steps"});
    read(*it, "eps", r.eps_stop, "stop");
    read(*it, "quiet_steps", r.quiet_steps, "stop");
  }
  auto seeds = j.find("seeds");
  if (seeds == j.end() || !seeds->is_array() || seeds->empty()) throw ConfigError("config.seeds must be a non-empty array");
  for (std::size_t i = 0; i < seeds->size(); ++i)
    c.seeds.push_back(detail::parse_seed((*seeds)[i], "seeds[" + std::to_string(i) + "]"));
  try {
    r.validate();
    (void)c.build_surfaces();
  } catch (const ConfigError&) {
    throw;
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline SegmentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  SegmentConfig c = parse_config(j);
  if (!c.image.empty() && std::filesystem::path(c.image).is_relative())
    c.image = (path.parent_path() / c.image).string();
  return c;
}

}  // namespace psurf
