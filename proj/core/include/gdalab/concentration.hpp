#pragma once

#include <cstdint>
#include <vector>

#include "gdalab/genmodel.hpp"

namespace gdalab {

// Closed-form expectations and high-probability bounds for the random
// one-hidden-layer generator at initialisation, and Monte-Carlo checks of
// each of them.
//
// Monte-Carlo trials are independent. Trial i draws from the substream
// Rng::split(seed, i) and writes its own slot; means are taken with
// compensated summation in trial order, so results do not depend on the
// number of worker threads.

struct ConcentrationQuery {
  ModelConfig config;
  double delta = 0.5;            ///< deviation parameter of the bound
  double eta_lemma = 1.0 / 3.0;  ///< the extra slack parameter of the sigma_min bound
  int trials = 200;
  std::uint64_t seed = 0;
};

struct BoundCheckResult {
  double formula_value = 0.0;
  double empirical_mean = 0.0;
  double empirical_std_error = 0.0;
  double empirical_max = 0.0;
  double violation_rate = 0.0;  ///< fraction of trials on the wrong side of the bound
  int trials = 0;
  bool pass = false;
};

/// Pass threshold for high-probability bounds: at least this fraction of the
/// trials must satisfy the bound.
inline constexpr double kBoundSatisfactionRate = 0.975;

/// E[D^2] = sigma_z^2 (n d / 2 + n (n-1) / (2 pi)) for one hidden unit,
/// D = ||Z^T relu'(Z w)||.
double expected_d_squared(const ModelConfig& config);

/// sigma_z^2 (d + (n-1)/pi) / (2n), so that E[J J^T] = coefficient * V V^T.
double expected_gram_coefficient(const ModelConfig& config);

struct SigmaMinBound {
  double value = 0.0;
  bool vacuous = false;  ///< the bracket is non-positive; value is then 0
};

/// (sqrt((1-delta)^2 k - (1+delta)^2) - sqrt(m) (1+eta)(1+delta)) sigma_v sigma_z
///   * sqrt((d + (n-1)/pi) / (2n)),   0 <= delta <= 3/2.
SigmaMinBound sigma_min_lower_bound(const ConcentrationQuery& query);

/// (1+delta) sigma_v sigma_z (sqrt(k) + 2 sqrt(m)) sqrt((d + (n-1)/pi) / (2n)),
/// 0 <= delta <= 3/2.
double opnorm_upper_bound(const ConcentrationQuery& query);

/// (1+delta) sigma_v sigma_w sigma_z sqrt(k d m / (2 pi)) + ||xbar||, 0 <= delta <= 3.
double initial_misfit_bound(const ConcentrationQuery& query, double xbar_norm);

/// Single-sample bound on ||J(W; z) - J(W0; z)|| over ||W - W0|| <= R:
///   sigma_v ||z|| (2 sqrt(m) + sqrt(6 x log(k / (3x)))),  x = (2 k R / sigma_w)^(2/3).
/// The logarithm is clamped at zero once 3x exceeds k.
double perturbation_sample_bound(const ModelConfig& config, double radius, double z_norm);

/// Monte Carlo of D^2 with a fresh Z (n x d) and w per trial. Passes when the
/// mean is within 3 standard errors of expected_d_squared.
BoundCheckResult check_expected_d_squared(const ModelConfig& config, int trials,
                                          std::uint64_t seed);

struct GramCheckResult {
  Matrix expected;     ///< coefficient * V V^T
  Matrix mean;         ///< Monte-Carlo mean of J J^T
  Matrix std_error;    ///< entrywise standard errors
  double max_z_score = 0.0;  ///< max |mean - expected| / std_error
  int trials = 0;
  bool pass = false;   ///< every entry within 3 standard errors
};

/// V is drawn once from `seed`; every trial redraws Z and W.
GramCheckResult check_gram_expectation(const ModelConfig& config, int trials, std::uint64_t seed);

/// sigma_min(J(W0)) >= bound over query.trials independently sampled
/// instances. Passes at kBoundSatisfactionRate.
BoundCheckResult check_sigma_min(const ConcentrationQuery& query);

/// ||J(W0)|| <= bound, as above.
BoundCheckResult check_opnorm(const ConcentrationQuery& query);

/// ||f(W0) - xbar|| <= bound with targets x_i ~ N(0, I_m); each trial uses
/// its own ||xbar||.
BoundCheckResult check_initial_misfit(const ConcentrationQuery& query);

struct PerturbationProbeOptions {
  int samples = 32;                                   ///< directions
  std::vector<double> radius_fractions = {0.5, 1.0};  ///< probe radii as fractions of R
  std::uint64_t seed = 0;
};

struct PerturbationReport {
  double radius = 0.0;
  /// ||J(W) - J(W0)|| for the averaged Jacobian against
  /// (1/n) sum_i perturbation_sample_bound(z_i).
  BoundCheckResult averaged;
  /// Largest ratio ||J(W; z_i) - J(W0; z_i)|| / perturbation_sample_bound(z_i)
  /// over all probes and samples.
  double max_sample_ratio = 0.0;
};

/// Samples W = W0 + rho Delta with Delta a Gaussian direction scaled to unit
/// operator norm and rho = fraction * R for every listed fraction.
PerturbationReport perturbation_probe(const ProblemInstance& inst, const ModelConfig& config,
                                      double radius, const PerturbationProbeOptions& options);

/// Probes with the same directions at every radius in `radii` (ascending) and
/// reports, for each radius, maxima over all probes up to and including it.
std::vector<PerturbationReport> nested_perturbation_probe(const ProblemInstance& inst,
                                                          const ModelConfig& config,
                                                          const std::vector<double>& radii,
                                                          const PerturbationProbeOptions& options);

}  // namespace gdalab
