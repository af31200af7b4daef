#pragma once

#include <complex>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "gdalab/smooth_map.hpp"

namespace gdalab::oracles {

// Reference computations used to validate the analytic code paths. Finite
// differences call only SmoothMap::evaluate, and the spectral helpers use
// general dense decompositions rather than the closed forms they check.

struct FiniteDiffConfig {
  double h = 1e-6;  ///< step, scaled by max(1, |theta_j|)
  /// Kink guard: see relu_kink_predicate.
  double guard_factor = 10.0;
};

/// For ReLU-type maps, reports whether coordinate j sits close enough to an
/// activation kink that central differences with step h_j are unreliable.
using KinkPredicate = std::function<bool(Eigen::Index j, double h_j)>;

struct FiniteDiffResult {
  Matrix J;                                    ///< m x p
  Eigen::Matrix<bool, Eigen::Dynamic, 1> reliable;  ///< per column
};

/// Central differences (f(theta + h e_j) - f(theta - h e_j)) / 2h per
/// coordinate. Without a predicate every column is marked reliable.
FiniteDiffResult finite_diff_jacobian(const SmoothMap& f, const Vector& theta,
                                      const FiniteDiffConfig& cfg = {},
                                      const KinkPredicate& near_kink = nullptr);

/// Kink predicate for the one-hidden-layer generator with row-stacked
/// theta = vec(W): coordinate (l, j) is unreliable when |w_l^T z_i| <
/// guard_factor * h_j * ||z_i|| for some sample i.
KinkPredicate relu_kink_predicate(const Matrix& Z, const Vector& theta, int k, int d,
                                  double guard_factor = 10.0);

/// All eigenvalues of a square matrix, sorted by modulus (descending), ties
/// broken by real part then imaginary part. Throws NumericError on failure.
std::vector<std::complex<double>> numeric_eigs(const Matrix& A);

/// Condition number ||V|| ||V^{-1}|| of the eigenvector matrix of a 2 x 2
/// matrix with distinct real eigenvalues, columns scaled so that their second
/// component equals 1. Throws NumericError when the eigenvalues are complex.
double eigenvector_condition_2x2(const Eigen::Matrix2d& C);

/// Midpoint rule for  int_0^1 J(theta_a + s (theta_b - theta_a)) ds  with Q
/// nodes.
Matrix average_jacobian(const SmoothMap& f, const Vector& theta_a, const Vector& theta_b,
                        int quad_points = 1024);

/// ||f(theta_b) - f(theta_a) - Jbar (theta_b - theta_a)|| with Jbar from
/// average_jacobian.
double average_jacobian_residual(const SmoothMap& f, const Vector& theta_a,
                                 const Vector& theta_b, int quad_points);

}  // namespace gdalab::oracles
