#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gdalab/dynamics.hpp"
#include "gdalab/smooth_map.hpp"

namespace gdalab {

// Linear-systems view of GDA around theta0. With z = [r; d] the linearised
// iteration is z_{t+1} = A z_t for
//
//   A = [ I        -eta J0 J0^T ]
//       [ mu I     (1 - mu) I   ]
//
// Diagonalising J0 J0^T splits A into 2 x 2 companion blocks, one per
// singular value of J0.

struct TransitionMatrix {
  Matrix A;  ///< 2m x 2m

  Eigen::Index state_dim() const { return A.rows(); }
};

TransitionMatrix transition_matrix(const Matrix& J0, double eta, double mu);

/// Same matrix, built from J0 J0^T directly.
TransitionMatrix transition_matrix_from_gram(const Matrix& gram, double eta, double mu);

struct CompanionBlock {
  Eigen::Matrix2d C;  ///< [[1, -eta sigma^2], [mu, 1 - mu]]
  double sigma = 0.0;
};

CompanionBlock companion_block(double sigma, double eta, double mu);

/// The m singular values of an m x p matrix from its Gram matrix, descending.
/// Tiny negative eigenvalues caused by rounding are clamped to zero.
Vector singular_values_from_gram(const Matrix& gram);

/// rho(A) from the singular values of J0. Handles both the real regime
/// (mu^2/4 >= mu eta s) and the complex one, where both eigenvalues of the
/// block have modulus sqrt((1 - mu) + mu eta s).
double spectral_radius_closed_form(const Vector& singular_values, double eta, double mu);

/// kappa(x) = (3 - 2x + sqrt((1 + 2x)^2 + 4)) / (2 sqrt(1 - 4x)), the
/// condition number of the eigenvector matrix of a companion block with
/// x = eta sigma^2 / mu. Throws DomainError unless 0 <= x < 1/4.
double kappa(double x);

/// gamma = max_i kappa(eta sigma_i^2 / mu).
double stability_constant(const Vector& singular_values, double eta, double mu);

// Result of checking the meta-theorem hypotheses on a concrete run.
//
// beta_hat and eps_hat are maxima over a finite probe set, so they are lower
// bounds on the suprema the theory needs; every flag below is therefore an
// empirical check.
//
// Two probe sets are evaluated. The path scope uses the parameter snapshots
// of the trajectory (theta0 included). The ball scope adds uniform samples
// from the Euclidean ball of radius R_path around theta0.
struct ProbeScope {
  double beta_hat = 0.0;  ///< max ||J(theta)||
  double eps_hat = 0.0;   ///< max ||J(theta) - J0||
  double R = 0.0;
  int probes = 0;
  bool ratio_ok = false;   ///< mu / eta >= 8 beta_hat^2
  bool sep_ok = false;     ///< 4 gamma beta_hat eps_hat <= alpha^2
  bool radius_ok = false;  ///< max_t ||theta_t - theta0|| <= R / 2

  bool all_ok() const { return ratio_ok && sep_ok && radius_ok; }
};

struct SpectralReport {
  double eta = 0.0;
  double mu = 0.0;
  double alpha = 0.0;   ///< sigma_min(J0)
  double beta0 = 0.0;   ///< sigma_max(J0)
  double gamma = 0.0;   ///< +inf when eta sigma^2 / mu >= 1/4 for some block
  double rho = 0.0;     ///< spectral radius of A
  double z0_norm = 0.0;
  double pinv_z0_norm = 0.0;  ///< ||[J0^+ r0; J0^+ d0]||
  double max_drift = 0.0;     ///< max_t ||theta_t - theta0|| over the logged records

  ProbeScope path;
  ProbeScope ball;

  // The headline quantities are those of the path scope.
  double beta_hat() const { return path.beta_hat; }
  double eps_hat() const { return path.eps_hat; }
  double R() const { return path.R; }
  bool certified() const { return path.all_ok(); }
};

struct CertifyOptions {
  int ball_samples = 64;
  std::uint64_t seed = 0;
  double pinv_cutoff = 1e-12;  ///< relative to sigma_max, for J0^+
};

/// R = 2 gamma (beta^2/alpha^2) ||[J0^+ r0; J0^+ d0]|| + 18 eps beta^2 gamma^2 / alpha^4 ||z0||.
double theorem_radius(double alpha, double beta, double eps, double gamma, double pinv_z0_norm,
                      double z0_norm);

/// ||[J0^+ r0; J0^+ d0]|| from J0 J0^T, dropping eigenvalues below
/// (cutoff * sigma_max)^2.
double pinv_block_norm(const Matrix& gram0, const Vector& r0, const Vector& d0,
                       double cutoff = 1e-12);

/// Evaluates the certificate for a run of `f` from (theta0 = traj snapshot
/// at t = 0, d0). The trajectory must carry snapshots (RunOptions::
/// snapshot_stride > 0); its records supply the drift. Throws
/// DegenerateJacobianError when sigma_min(J0) vanishes.
SpectralReport certify(const SmoothMap& f, const Vector& y, const GanState& init,
                       const Trajectory& traj, const StepSchedule& sched,
                       const CertifyOptions& options = {});

struct Envelopes {
  double state_bound = 0.0;          ///< gamma (1 - eta alpha^2/2)^t ||z0||
  double gap_bound = 0.0;            ///< 2 eta gamma^2 beta eps t (1 - eta alpha^2/2)^(t-1) ||z0||
  double uniform_gap_bound = 0.0;    ///< 4 gamma^2 beta eps / (e 15 ln(16/15) alpha^2) ||z0||
  double param_gap_bound = 0.0;      ///< 9 eps beta^2 gamma^2 / alpha^4 ||z0||
  double drift_bound = 0.0;          ///< R / 2
  double linear_state_bound = 0.0;   ///< gamma (1 - eta alpha^2)^t ||z0||
};

/// e * 15 * ln(16/15).
double uniform_gap_constant();

/// Bounds at iteration t from the headline (path-scope) quantities.
Envelopes predicted_envelopes(const SpectralReport& report, double z0_norm, long t);

/// Same, from an explicit (beta, eps, R) triple, e.g. the ball scope.
Envelopes predicted_envelopes(const SpectralReport& report, const ProbeScope& scope,
                              double z0_norm, long t);

}  // namespace gdalab
