#include "gdalab/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "gdalab/errors.hpp"
#include "gdalab/parallel.hpp"
#include "gdalab/rng.hpp"

namespace gdalab {
namespace {

void check_steps(double eta, double mu) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("eta must be a finite value > 0");
  if (!(mu > 0.0 && mu <= 1.0)) throw ConfigError("mu must lie in (0, 1]");
}

struct ProbeValue {
  double norm = 0.0;
  double diff_norm = 0.0;
};

ProbeValue probe(const SmoothMap& f, const Vector& theta, const Vector& theta0) {
  return {operator_norm_from_gram(f.jacobian_gram(theta)),
          operator_norm_from_gram(f.jacobian_difference_gram(theta, theta0))};
}

Vector uniform_ball_point(const Vector& center, double radius, std::uint64_t seed) {
  Rng rng(seed);
  Vector dir(center.size());
  for (Eigen::Index i = 0; i < dir.size(); ++i) dir(i) = rng.normal();
  const double scale =
      radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(center.size())) / dir.norm();
  return center + scale * dir;
}

void evaluate_flags(ProbeScope& scope, const SpectralReport& report) {
  scope.R = theorem_radius(report.alpha, scope.beta_hat, scope.eps_hat, report.gamma,
                           report.pinv_z0_norm, report.z0_norm);
  scope.ratio_ok = report.mu / report.eta >= 8.0 * scope.beta_hat * scope.beta_hat;
  scope.sep_ok = 4.0 * report.gamma * scope.beta_hat * scope.eps_hat <=
                 report.alpha * report.alpha;
  scope.radius_ok = report.max_drift <= 0.5 * scope.R;
}

}  // namespace

TransitionMatrix transition_matrix(const Matrix& J0, double eta, double mu) {
  return transition_matrix_from_gram(J0 * J0.transpose(), eta, mu);
}

TransitionMatrix transition_matrix_from_gram(const Matrix& gram, double eta, double mu) {
  check_steps(eta, mu);
  if (gram.rows() != gram.cols()) throw DimensionError("Gram matrix must be square");
  const Eigen::Index m = gram.rows();
  TransitionMatrix out{Matrix::Zero(2 * m, 2 * m)};
  out.A.topLeftCorner(m, m).setIdentity();
  out.A.topRightCorner(m, m) = -eta * gram;
  out.A.bottomLeftCorner(m, m) = mu * Matrix::Identity(m, m);
  out.A.bottomRightCorner(m, m) = (1.0 - mu) * Matrix::Identity(m, m);
  return out;
}

CompanionBlock companion_block(double sigma, double eta, double mu) {
  check_steps(eta, mu);
  CompanionBlock block;
  block.sigma = sigma;
  block.C << 1.0, -eta * sigma * sigma, mu, 1.0 - mu;
  return block;
}

Vector singular_values_from_gram(const Matrix& gram) {
  if (gram.rows() != gram.cols()) throw DimensionError("Gram matrix must be square");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericError("eigen-decomposition of J J^T failed");
  const Vector ev = eig.eigenvalues().reverse();
  return ev.cwiseMax(0.0).cwiseSqrt();
}

double spectral_radius_closed_form(const Vector& singular_values, double eta, double mu) {
  check_steps(eta, mu);
  double rho = 0.0;
  for (Eigen::Index i = 0; i < singular_values.size(); ++i) {
    const double s = singular_values(i) * singular_values(i);
    const double disc = 0.25 * mu * mu - mu * eta * s;
    double modulus;
    if (disc >= 0.0) {
      const double root = std::sqrt(disc);
      modulus = std::max(std::abs(1.0 - 0.5 * mu + root), std::abs(1.0 - 0.5 * mu - root));
    } else {
      modulus = std::sqrt((1.0 - mu) + mu * eta * s);
    }
    rho = std::max(rho, modulus);
  }
  return rho;
}

double kappa(double x) {
  if (!(x >= 0.0 && x < 0.25)) {
    throw DomainError("kappa(x) needs 0 <= x < 1/4, got x = " + std::to_string(x));
  }
  const double a = 1.0 + 2.0 * x;
  return (3.0 - 2.0 * x + std::sqrt(a * a + 4.0)) / (2.0 * std::sqrt(1.0 - 4.0 * x));
}

double stability_constant(const Vector& singular_values, double eta, double mu) {
  check_steps(eta, mu);
  double gamma = kappa(0.0);
  for (Eigen::Index i = 0; i < singular_values.size(); ++i) {
    const double s = singular_values(i) * singular_values(i);
    gamma = std::max(gamma, kappa(eta * s / mu));
  }
  return gamma;
}

double theorem_radius(double alpha, double beta, double eps, double gamma, double pinv_z0_norm,
                      double z0_norm) {
  const double a2 = alpha * alpha;
  const double b2 = beta * beta;
  const double second = eps == 0.0 ? 0.0 : 18.0 * eps * b2 * gamma * gamma / (a2 * a2) * z0_norm;
  return 2.0 * gamma * (b2 / a2) * pinv_z0_norm + second;
}

double pinv_block_norm(const Matrix& gram0, const Vector& r0, const Vector& d0, double cutoff) {
  if (r0.size() != gram0.rows() || d0.size() != gram0.rows()) {
    throw DimensionError("r0 and d0 must have length m");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram0);
  if (eig.info() != Eigen::Success) throw NumericError("eigen-decomposition of J0 J0^T failed");
  const Vector& lambda = eig.eigenvalues();
  const double floor = cutoff * cutoff * std::max(lambda.maxCoeff(), 0.0);
  // ||J0^+ v||^2 = sum_i (u_i^T v)^2 / lambda_i over the retained eigenpairs.
  const Vector pr = eig.eigenvectors().transpose() * r0;
  const Vector pd = eig.eigenvectors().transpose() * d0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) > floor && lambda(i) > 0.0) total += (pr(i) * pr(i) + pd(i) * pd(i)) / lambda(i);
  }
  return std::sqrt(total);
}

SpectralReport certify(const SmoothMap& f, const Vector& y, const GanState& init,
                       const Trajectory& traj, const StepSchedule& sched,
                       const CertifyOptions& options) {
  check_steps(sched.eta, sched.mu);
  if (options.ball_samples < 0) throw ConfigError("ball_samples must be >= 0");
  if (traj.snapshots.empty() || traj.snapshots.front().t != 0) {
    throw ConfigError("certify needs a trajectory with parameter snapshots starting at t = 0");
  }
  const Vector& theta0 = init.theta;
  if ((traj.snapshots.front().theta - theta0).norm() != 0.0) {
    throw ConfigError("trajectory does not start from the given initial state");
  }

  SpectralReport report;
  report.eta = sched.eta;
  report.mu = sched.mu;

  const Matrix gram0 = f.jacobian_gram(theta0);
  const Vector sv = singular_values_from_gram(gram0);
  report.beta0 = sv(0);
  report.alpha = sv(sv.size() - 1);
  if (!(report.alpha > options.pinv_cutoff * report.beta0)) {
    throw DegenerateJacobianError("sigma_min(J0) is zero; the lower singular value bound fails");
  }
  try {
    report.gamma = stability_constant(sv, sched.eta, sched.mu);
  } catch (const DomainError&) {
    report.gamma = std::numeric_limits<double>::infinity();
  }
  report.rho = spectral_radius_closed_form(sv, sched.eta, sched.mu);

  const Vector r0 = f.evaluate(theta0) - y;
  report.z0_norm = std::sqrt(r0.squaredNorm() + init.dvec.squaredNorm());
  report.pinv_z0_norm = pinv_block_norm(gram0, r0, init.dvec, options.pinv_cutoff);
  for (const auto& rec : traj.records) report.max_drift = std::max(report.max_drift, rec.drift);

  // Path scope.
  std::vector<ProbeValue> path(traj.snapshots.size());
  parallel_for(path.size(), [&](std::size_t i) {
    path[i] = probe(f, traj.snapshots[i].theta, theta0);
  });
  for (const auto& p : path) {
    report.path.beta_hat = std::max(report.path.beta_hat, p.norm);
    report.path.eps_hat = std::max(report.path.eps_hat, p.diff_norm);
  }
  report.path.probes = static_cast<int>(path.size());
  evaluate_flags(report.path, report);

  // Ball scope: path probes plus samples in the ball of radius R_path.
  report.ball = report.path;
  const double radius = report.path.R;
  if (options.ball_samples > 0 && std::isfinite(radius)) {
    std::vector<ProbeValue> ball(static_cast<std::size_t>(options.ball_samples));
    parallel_for(ball.size(), [&](std::size_t i) {
      const Vector theta = uniform_ball_point(theta0, radius, Rng::split(options.seed, i));
      ball[i] = probe(f, theta, theta0);
    });
    for (const auto& p : ball) {
      report.ball.beta_hat = std::max(report.ball.beta_hat, p.norm);
      report.ball.eps_hat = std::max(report.ball.eps_hat, p.diff_norm);
    }
    report.ball.probes += options.ball_samples;
  }
  evaluate_flags(report.ball, report);
  return report;
}

double uniform_gap_constant() { return std::numbers::e * 15.0 * std::log(16.0 / 15.0); }

Envelopes predicted_envelopes(const SpectralReport& report, double z0_norm, long t) {
  return predicted_envelopes(report, report.path, z0_norm, t);
}

Envelopes predicted_envelopes(const SpectralReport& report, const ProbeScope& scope,
                              double z0_norm, long t) {
  if (t < 0) throw ConfigError("iteration index must be >= 0");
  const double a2 = report.alpha * report.alpha;
  const double g = report.gamma;
  const double b = scope.beta_hat;
  const double e = scope.eps_hat;
  const double half_rate = 1.0 - 0.5 * report.eta * a2;
  const double td = static_cast<double>(t);

  Envelopes env;
  env.state_bound = g * std::pow(half_rate, td) * z0_norm;
  env.linear_state_bound = g * std::pow(1.0 - report.eta * a2, td) * z0_norm;
  if (e != 0.0) {
    env.gap_bound = t == 0 ? 0.0
                           : 2.0 * report.eta * g * g * b * e * td *
                                 std::pow(half_rate, td - 1.0) * z0_norm;
    env.uniform_gap_bound = 4.0 * g * g * b * e / (uniform_gap_constant() * a2) * z0_norm;
    env.param_gap_bound = 9.0 * e * b * b * g * g / (a2 * a2) * z0_norm;
  }
  env.drift_bound = 0.5 * scope.R;
  return env;
}

}  // namespace gdalab
