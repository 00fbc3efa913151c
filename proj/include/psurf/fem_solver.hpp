#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "sparse.hpp"
#include "trimesh.hpp"
#include "vec3.hpp"

namespace psurf {

/// Linear system of one time step for all surfaces, in the global vertex
/// numbering obtained by concatenating the meshes of a SurfaceSet.
///
/// The vector stiffness matrix is I_3 (x) A, so only the scalar A is stored.
/// Vector unknowns are interleaved per vertex: entry 3k+d is coordinate d of vertex k.
struct StepSystem {
  std::vector<int> offsets;      // first global vertex of each mesh, plus the total
  std::vector<double> M_diag;    // |Lambda_k| / 3
  std::vector<Vec3> omega;       // weighted vertex normals
  std::vector<Vec3> N_blocks;    // M_kk * omega_k
  CsrMatrix A;                   // scalar stiffness, N x N
  std::vector<double> F;         // nodal force
  std::vector<double> b;         // lumped load M_kk * F_k
  double sigma = 1.0;
  double tau = 1e-3;

  int num_vertices() const { return static_cast<int>(M_diag.size()); }
};

/// All vertex positions in global numbering.
inline std::vector<Vec3> gather_positions(const SurfaceSet& s) {
  std::vector<Vec3> x;
  x.reserve(s.total_vertices());
  for (const auto& m : s.meshes) x.insert(x.end(), m.vertices.begin(), m.vertices.end());
  return x;
}

/// Writes global positions back into the meshes.
inline void scatter_positions(SurfaceSet& s, const std::vector<Vec3>& x) {
  std::size_t k = 0;
  for (auto& m : s.meshes)
    for (auto& p : m.vertices) p = x[k++];
}

/// Throws AssumptionError naming the surface when a face has (numerically) zero
/// area or the weighted vertex normals do not span three dimensions.
inline void check_assumption_a(const SurfaceMesh& m, const VertexGeometry& g) {
  const double thr = degenerate_area_threshold(m);
  for (int f = 0; f < static_cast<int>(m.num_faces()); ++f)
    if (!(face_area(m, f) > thr))
      throw AssumptionError(m.surface_id, "face " + std::to_string(f) + " of surface " +
                                              std::to_string(m.surface_id) + " has zero area");
  Eigen::Matrix3d G = Eigen::Matrix3d::Zero();
  for (const auto& w : g.omega) {
    const Eigen::Vector3d e(w.x, w.y, w.z);
    G += e * e.transpose();
  }
  const Eigen::Vector3d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(G).eigenvalues();
  if (!(ev.minCoeff() > 1e-10 * std::max(G.trace(), 1e-300)))
    throw AssumptionError(m.surface_id, "weighted normals of surface " + std::to_string(m.surface_id) +
                                            " do not span three dimensions");
}

/// Assembles masses, normal coupling, stiffness and load. `F` is the nodal
/// force in global numbering.
inline StepSystem assemble(const SurfaceSet& s, const std::vector<double>& F, double sigma, double tau) {
  if (!(sigma > 0.0) || !(tau > 0.0)) throw ParameterError("sigma and tau must be positive");
  const std::size_t n = s.total_vertices();
  if (F.size() != n) throw ParameterError("force vector size does not match vertex count");
  StepSystem sys;
  sys.sigma = sigma;
  sys.tau = tau;
  sys.F = F;
  sys.M_diag.reserve(n);
  sys.omega.reserve(n);
  std::vector<Triplet> trip;
  int off = 0;
  for (const auto& m : s.meshes) {
    sys.offsets.push_back(off);
    const VertexGeometry g = vertex_geometry(m);
    check_assumption_a(m, g);
    for (std::size_t v = 0; v < m.num_vertices(); ++v) {
      sys.M_diag.push_back(g.star_area[v] / 3.0);
      sys.omega.push_back(g.omega[v]);
    }
    trip.reserve(trip.size() + 9 * m.num_faces());
    for (const auto& t : m.faces) {
      // Edge opposite local vertex i, and the gradient products e_i.e_j / (4|f|).
      const Vec3 e[3] = {m.vertices[t[2]] - m.vertices[t[1]], m.vertices[t[0]] - m.vertices[t[2]],
                         m.vertices[t[1]] - m.vertices[t[0]]};
      const double area = 0.5 * norm(cross(e[1], e[2]));
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          trip.push_back({off + t[i], off + t[j], dot(e[i], e[j]) / (4.0 * area)});
    }
    off += static_cast<int>(m.num_vertices());
  }
  sys.offsets.push_back(off);
  sys.A = CsrMatrix::from_triplets(static_cast<int>(n), std::move(trip));
  sys.N_blocks.resize(n);
  sys.b.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    sys.N_blocks[k] = sys.M_diag[k] * sys.omega[k];
    sys.b[k] = sys.M_diag[k] * F[k];
  }
  return sys;
}

/// y = S x with S = (1/(sigma tau)) N M^{-1} N^T + I_3 (x) A, vectors interleaved.
inline void apply_schur(const StepSystem& sys, const std::vector<double>& x, std::vector<double>& y) {
  const int n = sys.num_vertices();
  y.assign(3 * static_cast<std::size_t>(n), 0.0);
  const auto& rp = sys.A.row_ptr();
  const auto& ci = sys.A.cols();
  const auto& va = sys.A.values();
  const double inv_st = 1.0 / (sys.sigma * sys.tau);
  for (int k = 0; k < n; ++k) {
    double y0 = 0.0, y1 = 0.0, y2 = 0.0;
    for (int p = rp[k]; p < rp[k + 1]; ++p) {
      const std::size_t l = 3 * static_cast<std::size_t>(ci[p]);
      y0 += va[p] * x[l];
      y1 += va[p] * x[l + 1];
      y2 += va[p] * x[l + 2];
    }
    const Vec3& w = sys.omega[k];
    const std::size_t kk = 3 * static_cast<std::size_t>(k);
    const double c = inv_st * sys.M_diag[k] * (w.x * x[kk] + w.y * x[kk + 1] + w.z * x[kk + 2]);
    y[kk] = y0 + c * w.x;
    y[kk + 1] = y1 + c * w.y;
    y[kk + 2] = y2 + c * w.z;
  }
}

/// Explicit 3N x 3N Schur matrix, for checks and matrix dumps.
inline CsrMatrix schur_matrix(const StepSystem& sys) {
  const int n = sys.num_vertices();
  std::vector<Triplet> t;
  const auto& rp = sys.A.row_ptr();
  const auto& ci = sys.A.cols();
  const auto& va = sys.A.values();
  const double inv_st = 1.0 / (sys.sigma * sys.tau);
  for (int k = 0; k < n; ++k) {
    for (int p = rp[k]; p < rp[k + 1]; ++p)
      for (int d = 0; d < 3; ++d) t.push_back({3 * k + d, 3 * ci[p] + d, va[p]});
    const Vec3& w = sys.omega[k];
    for (int d = 0; d < 3; ++d)
      for (int e = 0; e < 3; ++e) t.push_back({3 * k + d, 3 * k + e, inv_st * sys.M_diag[k] * w[d] * w[e]});
  }
  return CsrMatrix::from_triplets(3 * n, std::move(t));
}

/// Right-hand side -(I_3 (x) A) X + (1/sigma) N M^{-1} b.
inline std::vector<double> schur_rhs(const StepSystem& sys, const std::vector<Vec3>& X) {
  const int n = sys.num_vertices();
  std::vector<double> r(3 * static_cast<std::size_t>(n), 0.0);
  const auto& rp = sys.A.row_ptr();
  const auto& ci = sys.A.cols();
  const auto& va = sys.A.values();
  for (int k = 0; k < n; ++k) {
    Vec3 ax;
    for (int p = rp[k]; p < rp[k + 1]; ++p) ax += va[p] * X[ci[p]];
    const Vec3 v = -ax + (sys.M_diag[k] * sys.F[k] / sys.sigma) * sys.omega[k];
    for (int d = 0; d < 3; ++d) r[3 * k + d] = v[d];
  }
  return r;
}

/// Inverse of the 3x3 diagonal blocks a_kk I + c_k w w^T applied per vertex.
inline std::function<void(const std::vector<double>&, std::vector<double>&)> block_jacobi(
    const StepSystem& sys) {
  const int n = sys.num_vertices();
  std::vector<double> a(n), c(n);
  const double inv_st = 1.0 / (sys.sigma * sys.tau);
  for (int k = 0; k < n; ++k) {
    a[k] = sys.A.coeff(k, k);
    c[k] = inv_st * sys.M_diag[k];
  }
  return [a = std::move(a), c = std::move(c), &sys](const std::vector<double>& r, std::vector<double>& z) {
    const std::size_t n = a.size();
    z.resize(3 * n);
    for (std::size_t k = 0; k < n; ++k) {
      const Vec3& w = sys.omega[k];
      const double r0 = r[3 * k], r1 = r[3 * k + 1], r2 = r[3 * k + 2];
      // Sherman-Morrison: (aI + c w w^T)^{-1} = (I - c w w^T / (a + c |w|^2)) / a.
      const double s = c[k] * (w.x * r0 + w.y * r1 + w.z * r2) / (a[k] + c[k] * squared_norm(w));
      z[3 * k] = (r0 - s * w.x) / a[k];
      z[3 * k + 1] = (r1 - s * w.y) / a[k];
      z[3 * k + 2] = (r2 - s * w.z) / a[k];
    }
  };
}

enum class SolveMethod { ConjugateGradient, DenseCholesky };

struct SolveOptions {
  SolveMethod method = SolveMethod::ConjugateGradient;
  CgOptions cg;
  const std::vector<Vec3>* initial_guess = nullptr;  // warm start for CG
};

struct StepSolution {
  std::vector<Vec3> dX;
  std::vector<double> kappa;
  double dxn = 0.0;  // max_k |dX_k . omega_k|
  CgResult cg;
};

inline double normal_displacement(const StepSystem& sys, const std::vector<Vec3>& dX) {
  double m = 0.0;
  for (std::size_t k = 0; k < dX.size(); ++k) m = std::max(m, std::abs(dot(dX[k], sys.omega[k])));
  return m;
}

/// Dense solves are limited to small systems; they serve as the test oracle.
inline constexpr int kDenseVertexLimit = 500;

/// Solves the Schur system for dX and recovers kappa = (1/sigma)((1/tau) w.dX - F).
inline StepSolution solve_step(const StepSystem& sys, const std::vector<Vec3>& X, const SolveOptions& opt = {}) {
  const int n = sys.num_vertices();
  if (static_cast<int>(X.size()) != n) throw ParameterError("position vector size does not match system");
  if (!(sys.tau > 0.0) || !(sys.sigma > 0.0)) throw ParameterError("sigma and tau must be positive");
  const std::vector<double> rhs = schur_rhs(sys, X);
  std::vector<double> x(3 * static_cast<std::size_t>(n), 0.0);
  StepSolution sol;
  if (opt.method == SolveMethod::DenseCholesky) {
    if (n >= kDenseVertexLimit) throw ParameterError("dense solve is limited to fewer than 500 vertices");
    x = dense_cholesky_solve(schur_matrix(sys).to_dense(), rhs);
    sol.cg.converged = true;
  } else {
    if (opt.initial_guess && static_cast<int>(opt.initial_guess->size()) == n)
      for (int k = 0; k < n; ++k)
        for (int d = 0; d < 3; ++d) x[3 * k + d] = (*opt.initial_guess)[k][d];
    auto op = [&sys](const std::vector<double>& in, std::vector<double>& out) { apply_schur(sys, in, out); };
    sol.cg = pcg(op, block_jacobi(sys), rhs, x, opt.cg);
  }
  sol.dX.resize(n);
  sol.kappa.resize(n);
  for (int k = 0; k < n; ++k) {
    sol.dX[k] = {x[3 * k], x[3 * k + 1], x[3 * k + 2]};
    sol.kappa[k] = (dot(sys.omega[k], sol.dX[k]) / sys.tau - sys.F[k]) / sys.sigma;
  }
  sol.dxn = normal_displacement(sys, sol.dX);
  return sol;
}

// ---------------------------------------------------------------------------
// Time-step control

struct TimeStepControl {
  double dxn_min = 0.003;
  double dxn_max = 0.05;
  int lambda_t = 10;
  double tau_min = 0.0;
  double tau_max = 0.0;

  /// Bounds default to [1e-9, 1e3] times the initial step.
  static TimeStepControl with_bounds(double tau0, double dxn_min, double dxn_max, int lambda_t) {
    return {dxn_min, dxn_max, lambda_t, 1e-9 * tau0, 1e3 * tau0};
  }

  void validate() const {
    if (!(dxn_min > 0.0) || !(dxn_min < dxn_max)) throw ParameterError("need 0 < dxn_min < dxn_max");
    if (lambda_t < 2) throw ParameterError("lambda_t must be an integer >= 2");
    if (!(tau_min > 0.0) || !(tau_min < tau_max)) throw ParameterError("need 0 < tau_min < tau_max");
  }
};

template <class Solution>
struct ControlledSolution {
  Solution solution;
  double tau = 0.0;
  std::vector<double> tau_trace;  // every step size tried, in order
  std::vector<double> dxn_trace;
};

/// Repeats `solve(tau)` adjusting tau by lambda_t until dxn lies within
/// [dxn_min, dxn_max]. Once tau has moved in one direction, a jump past the
/// opposite bound ends the search instead of reversing: after a decrease a
/// too-small dxn is accepted, after an increase a too-large dxn reverts to the
/// previous (smaller) solution. Reaching tau_max accepts the current solution;
/// falling below tau_min throws StagnationError.
template <class SolveFn>
auto solve_with_control(SolveFn&& solve, double tau, const TimeStepControl& c)
    -> ControlledSolution<decltype(solve(tau))> {
  using Solution = decltype(solve(tau));
  c.validate();
  if (!(tau > 0.0)) throw ParameterError("time step must be positive");
  ControlledSolution<Solution> out;
  bool decreased = false;
  std::optional<std::pair<Solution, double>> fallback;
  for (;;) {
    out.tau_trace.push_back(tau);
    Solution sol = solve(tau);
    const double dxn = sol.dxn;
    out.dxn_trace.push_back(dxn);
    if (dxn > c.dxn_max) {
      if (fallback) {
        out.solution = std::move(fallback->first);
        out.tau = fallback->second;
        return out;
      }
      const double next = tau / c.lambda_t;
      if (next < c.tau_min)
        throw StagnationError("time step fell below tau_min without reaching dxn <= dxn_max", dxn);
      tau = next;
      decreased = true;
      continue;
    }
    if (dxn < c.dxn_min && !decreased) {
      const double next = tau * c.lambda_t;
      if (next <= c.tau_max) {
        fallback.emplace(std::move(sol), tau);
        tau = next;
        continue;
      }
    }
    out.solution = std::move(sol);
    out.tau = tau;
    return out;
  }
}

/// Controlled solve of an assembled system: only tau changes between retries,
/// and each retry warm-starts from the previous displacement.
inline ControlledSolution<StepSolution> solve_step_with_control(StepSystem& sys, const std::vector<Vec3>& X,
                                                                const TimeStepControl& c, double tau0,
                                                                SolveOptions opt = {}) {
  std::vector<Vec3> guess;
  auto solve = [&](double tau) {
    sys.tau = tau;
    SolveOptions o = opt;
    if (!guess.empty()) o.initial_guess = &guess;
    StepSolution s = solve_step(sys, X, o);
    guess = s.dX;
    return s;
  };
  auto res = solve_with_control(solve, tau0, c);
  sys.tau = res.tau;
  return res;
}

}  // namespace psurf
