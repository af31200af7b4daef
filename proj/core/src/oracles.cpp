#include "gdalab/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gdalab/errors.hpp"

namespace gdalab::oracles {

FiniteDiffResult finite_diff_jacobian(const SmoothMap& f, const Vector& theta,
                                      const FiniteDiffConfig& cfg,
                                      const KinkPredicate& near_kink) {
  if (!(cfg.h > 0.0)) throw ConfigError("finite-difference step must be > 0");
  if (!(cfg.guard_factor > 0.0)) throw ConfigError("kink guard factor must be > 0");
  const Eigen::Index p = theta.size();
  FiniteDiffResult out;
  out.J.resize(f.output_dim(), p);
  out.reliable.setConstant(p, true);
  Vector probe = theta;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double hj = cfg.h * std::max(1.0, std::abs(theta(j)));
    probe(j) = theta(j) + hj;
    const Vector plus = f.evaluate(probe);
    probe(j) = theta(j) - hj;
    const Vector minus = f.evaluate(probe);
    probe(j) = theta(j);
    // Divide by the realised step so that rounding in theta +- h cancels.
    out.J.col(j) = (plus - minus) / ((theta(j) + hj) - (theta(j) - hj));
    if (near_kink && near_kink(j, hj)) out.reliable(j) = false;
  }
  return out;
}

KinkPredicate relu_kink_predicate(const Matrix& Z, const Vector& theta, int k, int d,
                                  double guard_factor) {
  if (theta.size() != static_cast<Eigen::Index>(k) * d || Z.cols() != d) {
    throw DimensionError("kink predicate: theta must be k*d and Z must have d columns");
  }
  // margin(l) = min_i |w_l^T z_i| / ||z_i||.
  Vector margin = Vector::Constant(k, std::numeric_limits<double>::infinity());
  const Vector znorm = Z.rowwise().norm();
  for (int l = 0; l < k; ++l) {
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
      if (znorm(i) == 0.0) continue;
      double pre = 0.0;
      for (int j = 0; j < d; ++j) pre += theta(static_cast<Eigen::Index>(l) * d + j) * Z(i, j);
      margin(l) = std::min(margin(l), std::abs(pre) / znorm(i));
    }
  }
  return [margin, d, guard_factor](Eigen::Index j, double hj) {
    return margin(j / d) < guard_factor * hj;
  };
}

std::vector<std::complex<double>> numeric_eigs(const Matrix& A) {
  if (A.rows() != A.cols()) throw DimensionError("numeric_eigs needs a square matrix");
  if (!A.allFinite()) throw NumericError("numeric_eigs: matrix has non-finite entries");
  std::vector<std::complex<double>> out;
  if (A.rows() == 0) return out;
  Eigen::EigenSolver<Matrix> solver(A, false);
  if (solver.info() != Eigen::Success) throw NumericError("eigenvalue iteration did not converge");
  const auto& ev = solver.eigenvalues();
  out.assign(ev.data(), ev.data() + ev.size());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (std::abs(a) != std::abs(b)) return std::abs(a) > std::abs(b);
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
  });
  return out;
}

double eigenvector_condition_2x2(const Eigen::Matrix2d& C) {
  Eigen::EigenSolver<Eigen::Matrix2d> solver(C, true);
  if (solver.info() != Eigen::Success) throw NumericError("2x2 eigen-decomposition failed");
  const auto vecs = solver.eigenvectors();
  if (vecs.imag().norm() != 0.0) throw NumericError("eigenvalues are complex");
  Eigen::Matrix2d V = vecs.real();
  for (int c = 0; c < 2; ++c) {
    if (V(1, c) == 0.0) throw NumericError("eigenvector has a zero second component");
    V.col(c) /= V(1, c);
  }
  Eigen::JacobiSVD<Eigen::Matrix2d> svd(V);
  const auto& s = svd.singularValues();
  if (s(1) == 0.0) throw NumericError("eigenvector matrix is singular");
  return s(0) / s(1);
}

Matrix average_jacobian(const SmoothMap& f, const Vector& theta_a, const Vector& theta_b,
                        int quad_points) {
  if (quad_points < 1) throw ConfigError("quadrature needs at least one point");
  if (theta_a.size() != theta_b.size()) throw DimensionError("segment endpoints differ in size");
  const Vector step = theta_b - theta_a;
  if (step.isZero(0.0)) return f.jacobian(theta_a);
  Matrix sum = Matrix::Zero(f.output_dim(), f.param_count());
  for (int q = 0; q < quad_points; ++q) {
    const double s = (q + 0.5) / quad_points;
    sum += f.jacobian(theta_a + s * step);
  }
  return sum / static_cast<double>(quad_points);
}

double average_jacobian_residual(const SmoothMap& f, const Vector& theta_a,
                                 const Vector& theta_b, int quad_points) {
  const Matrix Jbar = average_jacobian(f, theta_a, theta_b, quad_points);
  return (f.evaluate(theta_b) - f.evaluate(theta_a) - Jbar * (theta_b - theta_a)).norm();
}

}  // namespace gdalab::oracles
