#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "fem_solver.hpp"
#include "mesh_quality.hpp"
#include "region_model.hpp"
#include "topo_engine.hpp"
#include "trimesh.hpp"
#include "voxel_image.hpp"

namespace psurf {

struct RunConfig {
  double sigma = 1.0;
  double lambda = 100.0;
  double tau0 = 1e-4;
  double dxn_min = 0.003;
  double dxn_max = 0.05;
  int lambda_t = 10;
  double tau_min = 0.0;  // 0: 1e-9 * tau0
  double tau_max = 0.0;  // 0: 1e3 * tau0

  bool topology = true;
  DetectionParams detection;
  bool adaptive_grid = false;  // a = max(a, 2 max|dXn|)
  int cooldown_steps = 3;      // steps during which a surgery site stays excluded

  bool refine = true;
  bool remove_degenerate = true;
  QualityParams quality;

  double vanish_area = 0.0;  // surfaces with less area are dropped; 0: (2 a)^2

  int band_width = 3;
  bool lenient_labels = true;
  int max_steps = 100;
  double eps_stop = 0.0;  // 0: dxn_min
  int quiet_steps = 10;

  TimeStepControl control() const {
    TimeStepControl c = TimeStepControl::with_bounds(tau0, dxn_min, dxn_max, lambda_t);
    if (tau_min > 0.0) c.tau_min = tau_min;
    if (tau_max > 0.0) c.tau_max = tau_max;
    return c;
  }
  double stop_threshold() const { return eps_stop > 0.0 ? eps_stop : dxn_min; }
  double vanish_threshold() const { return vanish_area > 0.0 ? vanish_area : 4.0 * detection.a * detection.a; }

  void validate() const {
    if (!(sigma > 0.0)) throw ParameterError("sigma must be positive");
    if (!(lambda >= 0.0)) throw ParameterError("lambda must be non-negative");
    if (!(tau0 > 0.0)) throw ParameterError("tau0 must be positive");
    if (max_steps < 0) throw ParameterError("max_steps must be non-negative");
    if (band_width < 1) throw ParameterError("band_width must be at least 1");
    if (quiet_steps < 1) throw ParameterError("quiet_steps must be at least 1");
    if (cooldown_steps < 0) throw ParameterError("cooldown_steps must be non-negative");
    control().validate();
    if (topology) detection.validate();
    if (refine || remove_degenerate) quality.validate();
  }
};

struct StepRecord {
  int step = 0;
  double tau = 0.0;
  double dxn = 0.0;
  double energy = 0.0;
  int cg_iterations = 0;
  int solves = 0;
  int vertices = 0;
  int surfaces = 0;
};

struct SurfaceMetrics {
  int surface_id = 0;
  int vertices = 0;
  int edges = 0;
  int faces = 0;
  int euler = 0;
  int genus = 0;
  bool closed = false;
  double area = 0.0;
  double volume = 0.0;
  Vec3 centroid;
};

struct VanishedSurface {
  int step = 0;
  int surface_id = 0;
  double area = 0.0;
};

struct RunReport {
  std::vector<StepRecord> steps;
  std::vector<EventRecord> events;
  std::vector<VanishedSurface> vanished;
  std::vector<std::string> warnings;
  std::vector<SurfaceMetrics> surfaces;
  double final_energy = 0.0;
  int steps_taken = 0;
  std::string stop_reason;
  std::string error;

  int executed(TopoKind k) const {
    int n = 0;
    for (const auto& e : events)
      if (!e.aborted && e.kind == k) ++n;
    return n;
  }
  int executed_events() const {
    int n = 0;
    for (const auto& e : events)
      if (!e.aborted) ++n;
    return n;
  }
};

struct RunResult {
  SurfaceSet surfaces;
  RunReport report;
};

/// A run stopped on an error; `partial` holds the last consistent state.
class RunAborted : public Error {
 public:
  RunAborted(const std::string& what, RunResult partial, bool numerical)
      : Error(what), partial_(std::move(partial)), numerical_(numerical) {}
  const RunResult& partial() const noexcept { return partial_; }
  bool numerical() const noexcept { return numerical_; }

 private:
  RunResult partial_;
  bool numerical_;
};

inline SurfaceMetrics surface_metrics(const SurfaceMesh& m) {
  SurfaceMetrics out;
  const TopologyStats st = topology_stats(m);
  out.surface_id = m.surface_id;
  out.vertices = st.vertices;
  out.edges = st.edges;
  out.faces = st.faces;
  out.euler = st.euler;
  out.genus = st.genus();
  out.closed = st.closed;
  out.area = surface_area(m);
  out.volume = signed_volume(m);
  for (const auto& v : m.vertices) out.centroid += v;
  if (!m.vertices.empty()) out.centroid /= static_cast<double>(m.vertices.size());
  return out;
}

/// sigma |Gamma| + lambda sum_k sum_{voxels in k} (u0 - c_k)^2 |voxel|.
inline double energy(const VoxelGrid& g, const RegionState& r, const SurfaceSet& s, double sigma, double lambda,
                     const std::vector<double>* means = nullptr) {
  double area = 0.0;
  for (const auto& m : s.meshes) area += surface_area(m);
  return sigma * area + (lambda > 0.0 ? lambda * fidelity(g, r, means) : 0.0);
}

namespace detail {

inline void quality_sweep(SurfaceSet& s, const RunConfig& cfg, RunReport& rep, int step) {
  for (auto& m : s.meshes) {
    QualityReport q;
    if (cfg.remove_degenerate) m = delete_pass(std::move(m), cfg.quality, &q);
    if (cfg.refine) m = refine_pass(std::move(m), cfg.quality, &q);
    for (const auto& w : q.warnings) rep.warnings.push_back("step " + std::to_string(step) + ": " + w);
    const ManifoldCheck mc = check_closed_manifold(m);
    if (!mc.ok) throw TopologyError("mesh quality pass broke surface " + std::to_string(m.surface_id) + ": " + mc.message);
  }
}

/// Drops surfaces that shrank below the vanishing area; at least one surface is kept.
inline void drop_vanished(SurfaceSet& s, double threshold, RunReport& rep, int step) {
  for (std::size_t i = s.size(); i-- > 0 && s.size() > 1;) {
    const double area = surface_area(s.meshes[i]);
    if (area >= threshold) continue;
    rep.vanished.push_back({step, s.meshes[i].surface_id, area});
    rep.warnings.push_back("step " + std::to_string(step) + ": surface " + std::to_string(s.meshes[i].surface_id) +
                           " vanished (area " + std::to_string(area) + ")");
    s.meshes.erase(s.meshes.begin() + static_cast<std::ptrdiff_t>(i));
    s.regions.erase(s.regions.begin() + static_cast<std::ptrdiff_t>(i));
  }
}

}  // namespace detail

/// Called after every completed step with the step record and the current surfaces.
using StepObserver = std::function<void(const StepRecord&, const SurfaceSet&)>;

/// Runs the segmentation loop: regions, controlled solve, move, topology
/// changes, mesh quality. Stops after max_steps or once max |dX_n| stayed
/// below the stop threshold for quiet_steps consecutive steps.
inline RunResult run(const VoxelGrid& g, SurfaceSet s, const RunConfig& cfg, const StepObserver& observer = {}) {
  cfg.validate();
  s.validate();
  for (const auto& m : s.meshes) {
    const ManifoldCheck mc = check_closed_manifold(m);
    if (!mc.ok) throw ParameterError("initial surface " + std::to_string(m.surface_id) + " is not closed: " + mc.message);
  }
  const Box omega = g.bounds();
  const LabelOptions labels{!cfg.lenient_labels};
  const TimeStepControl control = cfg.control();

  RunResult res;
  RunReport& rep = res.report;
  res.surfaces = s;
  RegionState regions;
  double tau = cfg.tau0;
  int quiet = 0;
  bool last_surgery = false;
  struct Zone {
    Box box;
    int until;
  };
  std::vector<Zone> zones;
  bool relabel = false;

  auto finish = [&](RunResult& r) {
    r.report.surfaces.clear();
    for (const auto& m : r.surfaces.meshes) r.report.surfaces.push_back(surface_metrics(m));
  };

  int step = 0;
  try {
    for (; step < cfg.max_steps; ++step) {
      // Surgery and dropped surfaces move the interface by more than the band
      // covers, so the labels are rebuilt from scratch after them.
      regions = step == 0 || relabel ? init_regions(g, s, labels)
                                     : update_regions_incremental(regions, g, s, cfg.band_width, labels);
      relabel = false;
      for (const auto& w : regions.warnings) rep.warnings.push_back("step " + std::to_string(step) + ": " + w);
      StepRecord rec;
      rec.step = step;
      rec.energy = energy(g, regions, s, cfg.sigma, cfg.lambda);
      rec.vertices = static_cast<int>(s.total_vertices());
      rec.surfaces = static_cast<int>(s.size());
      if (!rep.steps.empty() && !last_surgery) {
        const double prev = rep.steps.back().energy;
        if (rec.energy > prev + 1e-3 * std::abs(prev))
          rep.warnings.push_back("step " + std::to_string(step) + ": energy increased from " + std::to_string(prev) +
                                 " to " + std::to_string(rec.energy));
      }

      const std::vector<double> F = nodal_force(g, regions, s, cfg.lambda);
      StepSystem sys = assemble(s, F, cfg.sigma, tau);
      std::vector<Vec3> X = gather_positions(s);
      const auto sol = solve_step_with_control(sys, X, control, tau);
      rec.tau = sol.tau;
      rec.dxn = sol.solution.dxn;
      rec.cg_iterations = sol.solution.cg.iterations;
      rec.solves = static_cast<int>(sol.tau_trace.size());
      tau = sol.tau;

      int clamped = 0;
      for (std::size_t k = 0; k < X.size(); ++k) {
        const Vec3 moved = X[k] + sol.solution.dX[k];
        X[k] = omega.clamp(moved);
        if (!(X[k] == moved)) ++clamped;
      }
      if (clamped > 0)
        rep.warnings.push_back("step " + std::to_string(step) + ": " + std::to_string(clamped) +
                               " vertices clamped to the image domain");
      scatter_positions(s, X);

      bool surgery = false;
      if (cfg.topology) {
        DetectionParams dp = cfg.detection;
        if (cfg.adaptive_grid) dp.a = std::max(dp.a, 2.0 * sol.solution.dxn);
        TopologyPassOptions opt;
        std::erase_if(zones, [&](const Zone& z) { return z.until < step; });
        for (const auto& z : zones) opt.exclusion.push_back(z.box);
        for (auto& ev : topology_pass(s, dp, omega, step, opt)) {
          if (!ev.aborted) {
            surgery = true;
            zones.push_back({ev.region, step + cfg.cooldown_steps});
          }
          rep.events.push_back(std::move(ev));
        }
      }
      if (cfg.refine || cfg.remove_degenerate) detail::quality_sweep(s, cfg, rep, step);
      const std::size_t before_drop = s.size();
      detail::drop_vanished(s, cfg.vanish_threshold(), rep, step);
      relabel = surgery || s.size() != before_drop;

      rep.steps.push_back(rec);
      rep.steps_taken = step + 1;
      if (observer) observer(rec, s);
      res.surfaces = s;
      last_surgery = surgery;
      if (surgery) {
        tau = std::max(tau / cfg.lambda_t, control.tau_min);
        quiet = 0;
      } else {
        quiet = rec.dxn < cfg.stop_threshold() ? quiet + 1 : 0;
      }
      if (quiet >= cfg.quiet_steps) {
        rep.stop_reason = "converged";
        ++step;
        break;
      }
    }
    if (rep.stop_reason.empty()) rep.stop_reason = "max_steps";
    // Energy of the final state.
    const RegionState last = rep.steps_taken == 0 || relabel ? init_regions(g, res.surfaces, labels)
                                                   : update_regions_incremental(regions, g, res.surfaces,
                                                                                cfg.band_width, labels);
    rep.final_energy = energy(g, last, res.surfaces, cfg.sigma, cfg.lambda);
  } catch (const Error& e) {
    const bool numerical = dynamic_cast<const NumericalError*>(&e) != nullptr ||
                           dynamic_cast<const AssumptionError*>(&e) != nullptr ||
                           dynamic_cast<const EmptyRegionError*>(&e) != nullptr ||
                           dynamic_cast<const TopologyError*>(&e) != nullptr;
    rep.stop_reason = "error";
    rep.error = "step " + std::to_string(step) + ": " + e.what();
    finish(res);
    const std::string msg = rep.error;
    throw RunAborted(msg, std::move(res), numerical);
  }
  finish(res);
  return res;
}

// ---------------------------------------------------------------------------
// JSON report

inline nlohmann::json to_json(const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); }

inline nlohmann::json to_json(const SurfaceMetrics& m) {
  return {{"surface_id", m.surface_id}, {"vertices", m.vertices}, {"edges", m.edges},
          {"faces", m.faces},           {"euler", m.euler},       {"genus", m.genus},
          {"closed", m.closed},         {"area", m.area},         {"volume", m.volume},
          {"centroid", to_json(m.centroid)}};
}

inline nlohmann::json to_json(const EventRecord& e) {
  nlohmann::json j = {{"step", e.step},
                      {"kind", to_string(e.kind)},
                      {"cube", e.cube},
                      {"nodes", e.nodes},
                      {"chi_before", e.chi_before},
                      {"chi_after", e.chi_after},
                      {"aborted", e.aborted},
                      {"log", format_event(e)}};
  if (!e.note.empty()) j["note"] = e.note;
  return j;
}

inline nlohmann::json to_json(const RunReport& r) {
  nlohmann::json steps = nlohmann::json::array(), tau = nlohmann::json::array(), dxn = nlohmann::json::array(),
                 en = nlohmann::json::array(), events = nlohmann::json::array(), surf = nlohmann::json::array();
  for (const auto& s : r.steps) {
    steps.push_back({{"step", s.step},
                     {"tau", s.tau},
                     {"dxn", s.dxn},
                     {"energy", s.energy},
                     {"cg_iterations", s.cg_iterations},
                     {"solves", s.solves},
                     {"vertices", s.vertices},
                     {"surfaces", s.surfaces}});
    tau.push_back(s.tau);
    dxn.push_back(s.dxn);
    en.push_back(s.energy);
  }
  for (const auto& e : r.events) events.push_back(to_json(e));
  for (const auto& m : r.surfaces) surf.push_back(to_json(m));
  nlohmann::json vanished = nlohmann::json::array();
  for (const auto& v : r.vanished) vanished.push_back({{"step", v.step}, {"surface_id", v.surface_id}, {"area", v.area}});
  nlohmann::json j = {{"steps_taken", r.steps_taken},
                      {"stop_reason", r.stop_reason},
                      {"tau_history", tau},
                      {"dxn_history", dxn},
                      {"energy_history", en},
                      {"final_energy", r.final_energy},
                      {"events", events},
                      {"vanished", vanished},
                      {"final", {{"surfaces", surf}}},
                      {"warnings", r.warnings},
                      {"steps", steps}};
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

}  // namespace psurf
