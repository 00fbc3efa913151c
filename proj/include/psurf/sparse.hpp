#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace psurf {

struct Triplet {
  int row;
  int col;
  double value;
};

/// Compressed sparse row matrix with unique, column-sorted entries per row.
class CsrMatrix {
 public:
  CsrMatrix() = default;

  /// Builds an n x n matrix; duplicate (row, col) entries are summed.
  static CsrMatrix from_triplets(int n, std::vector<Triplet> t) {
    std::sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
      return std::tie(a.row, a.col) < std::tie(b.row, b.col);
    });
    CsrMatrix m;
    m.n_ = n;
    m.row_ptr_.assign(n + 1, 0);
    for (std::size_t i = 0; i < t.size();) {
      if (t[i].row < 0 || t[i].row >= n || t[i].col < 0 || t[i].col >= n)
        throw ParameterError("triplet index out of range");
      double v = 0.0;
      std::size_t j = i;
      for (; j < t.size() && t[j].row == t[i].row && t[j].col == t[i].col; ++j) v += t[j].value;
      m.cols_.push_back(t[i].col);
      m.vals_.push_back(v);
      ++m.row_ptr_[t[i].row + 1];
      i = j;
    }
    for (int r = 0; r < n; ++r) m.row_ptr_[r + 1] += m.row_ptr_[r];
    return m;
  }

  int rows() const { return n_; }
  std::size_t nonzeros() const { return vals_.size(); }
  const std::vector<int>& row_ptr() const { return row_ptr_; }
  const std::vector<int>& cols() const { return cols_; }
  const std::vector<double>& values() const { return vals_; }

  double coeff(int r, int c) const {
    const auto b = cols_.begin() + row_ptr_[r], e = cols_.begin() + row_ptr_[r + 1];
    const auto it = std::lower_bound(b, e, c);
    return (it != e && *it == c) ? vals_[it - cols_.begin()] : 0.0;
  }

  void multiply(const std::vector<double>& x, std::vector<double>& y) const {
    y.assign(n_, 0.0);
    for (int r = 0; r < n_; ++r) {
      double s = 0.0;
      for (int p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) s += vals_[p] * x[cols_[p]];
      y[r] = s;
    }
  }

  std::vector<double> operator*(const std::vector<double>& x) const {
    std::vector<double> y;
    multiply(x, y);
    return y;
  }

  Eigen::MatrixXd to_dense() const {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n_, n_);
    for (int r = 0; r < n_; ++r)
      for (int p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) d(r, cols_[p]) = vals_[p];
    return d;
  }

  /// Max |a_ij - a_ji| relative to max |a_ij|.
  double asymmetry() const {
    double diff = 0.0, scale = 0.0;
    for (int r = 0; r < n_; ++r)
      for (int p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) {
        scale = std::max(scale, std::abs(vals_[p]));
        diff = std::max(diff, std::abs(vals_[p] - coeff(cols_[p], r)));
      }
    return scale > 0.0 ? diff / scale : 0.0;
  }

  bool is_symmetric(double rel_tol = 1e-12) const { return asymmetry() <= rel_tol; }

  /// MatrixMarket coordinate format, 1-based, general storage.
  void write_matrix_market(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "%%MatrixMarket matrix coordinate real general\n";
    out << n_ << ' ' << n_ << ' ' << nonzeros() << '\n' << std::setprecision(17);
    for (int r = 0; r < n_; ++r)
      for (int p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p)
        out << r + 1 << ' ' << cols_[p] + 1 << ' ' << vals_[p] << '\n';
  }

 private:
  int n_ = 0;
  std::vector<int> row_ptr_{0};
  std::vector<int> cols_;
  std::vector<double> vals_;
};

struct CgResult {
  int iterations = 0;
  double residual_norm = 0.0;
  double rhs_norm = 0.0;
  bool converged = false;
};

struct CgOptions {
  double rtol = 1e-10;
  int max_iterations = -1;  // -1: 10 * dimension
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Preconditioned conjugate gradients for S x = b. `apply(x, y)` sets y = S x and
/// `precondition(r, z)` sets z = P^{-1} r. `x` holds the initial guess on entry.
/// Throws NumericalError when a non-positive curvature p'Sp <= 0 shows up or the
/// iteration cap is reached.
template <class Apply, class Precondition>
CgResult pcg(Apply&& apply, Precondition&& precondition, const std::vector<double>& b,
             std::vector<double>& x, const CgOptions& opt = {}) {
  const std::size_t n = b.size();
  if (x.size() != n) x.assign(n, 0.0);
  CgResult res;
  res.rhs_norm = std::sqrt(dot(b, b));
  const int max_it = opt.max_iterations >= 0 ? opt.max_iterations : static_cast<int>(10 * n);
  if (res.rhs_norm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    res.converged = true;
    return res;
  }
  const double target = opt.rtol * res.rhs_norm;
  std::vector<double> r(n), z(n), p(n), q(n);
  apply(x, q);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - q[i];
  res.residual_norm = std::sqrt(dot(r, r));
  if (res.residual_norm <= target) {
    res.converged = true;
    return res;
  }
  precondition(r, z);
  p = z;
  double rz = dot(r, z);
  for (int it = 1; it <= max_it; ++it) {
    apply(p, q);
    const double pq = dot(p, q);
    if (!(pq > 0.0))
      throw NumericalError("system matrix is not positive definite (p'Sp = " + std::to_string(pq) +
                               "); assumption (A) is likely violated",
                           res.residual_norm);
    const double alpha = rz / pq;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * q[i];
    }
    res.iterations = it;
    res.residual_norm = std::sqrt(dot(r, r));
    if (res.residual_norm <= target) {
      res.converged = true;
      return res;
    }
    precondition(r, z);
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  throw NumericalError("conjugate gradients did not converge in " + std::to_string(max_it) +
                           " iterations (relative residual " +
                           std::to_string(res.residual_norm / res.rhs_norm) + ")",
                       res.residual_norm);
}

/// Dense Cholesky solve; throws NumericalError when S is not positive definite.
inline std::vector<double> dense_cholesky_solve(const Eigen::MatrixXd& S, const std::vector<double>& b) {
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) throw NumericalError("dense Cholesky failed: matrix not SPD", 0.0);
  const Eigen::VectorXd x = llt.solve(Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size())));
  return {x.data(), x.data() + x.size()};
}

}  // namespace psurf
