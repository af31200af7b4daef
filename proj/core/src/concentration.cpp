#include "gdalab/concentration.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gdalab/errors.hpp"
#include "gdalab/parallel.hpp"
#include "gdalab/rng.hpp"

namespace gdalab {
namespace {

// Neumaier summation.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

struct MeanAndError {
  double mean = 0.0;
  double std_error = 0.0;
};

MeanAndError mean_and_error(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  CompensatedSum s;
  for (double x : xs) s.add(x);
  const double mean = s.value() / n;
  CompensatedSum ss;
  for (double x : xs) ss.add((x - mean) * (x - mean));
  const double var = xs.size() > 1 ? ss.value() / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

double width_term(const ModelConfig& c) {
  const double n = c.n;
  return std::sqrt((c.d + (n - 1.0) / std::numbers::pi) / (2.0 * n));
}

void check_trials(int trials) {
  if (trials < 1) throw ConfigError("Monte-Carlo trial count must be >= 1");
}

void check_delta(double delta, double upper) {
  if (!(delta >= 0.0 && delta <= upper)) {
    throw ConfigError("delta must lie in [0, " + std::to_string(upper) + "]");
  }
}

Matrix gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = stddev * rng.normal();
  }
  return out;
}

ModelConfig trial_config(const ModelConfig& base, std::uint64_t seed, std::size_t trial) {
  ModelConfig c = base;
  c.seed = Rng::split(seed, trial);
  return c;
}

BoundCheckResult summarize(std::vector<double> values, double bound, bool upper) {
  BoundCheckResult out;
  out.formula_value = bound;
  out.trials = static_cast<int>(values.size());
  const MeanAndError me = mean_and_error(values);
  out.empirical_mean = me.mean;
  out.empirical_std_error = me.std_error;
  out.empirical_max = *std::max_element(values.begin(), values.end());
  const auto violations = std::count_if(values.begin(), values.end(), [&](double v) {
    return upper ? v > bound : v < bound;
  });
  out.violation_rate = static_cast<double>(violations) / static_cast<double>(values.size());
  out.pass = 1.0 - out.violation_rate >= kBoundSatisfactionRate;
  return out;
}

Vector singular_values_desc(const Matrix& gram) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericError("eigen-decomposition failed");
  return eig.eigenvalues().reverse().cwiseMax(0.0).cwiseSqrt();
}

Matrix unit_operator_norm_direction(Rng& rng, Eigen::Index k, Eigen::Index d) {
  Matrix delta = gaussian(rng, k, d, 1.0);
  const double norm = singular_values_desc(delta.transpose() * delta)(0);
  return delta / norm;
}

// Per-sample and averaged Jacobian perturbations at W relative to W0.
struct Perturbation {
  double averaged = 0.0;
  double max_sample_ratio = 0.0;
};

Perturbation measure_perturbation(const ProblemInstance& inst, const Matrix& W,
                                  const Matrix& H0, const Vector& sample_bounds) {
  const Matrix H = inst.Z * W.transpose();
  const int n = inst.n();
  const int k = inst.k();
  const int m = inst.m();
  // ||J(W; z) - J(W0; z)|| = ||z|| * ||V S|| where S is diagonal with
  // relu'(Wz) - relu'(W0 z) in {-1, 0, 1}; the signs do not change the norm.
  Perturbation out;
  for (int i = 0; i < n; ++i) {
    Matrix gram = Matrix::Zero(m, m);
    for (int l = 0; l < k; ++l) {
      if ((H(i, l) >= 0.0) != (H0(i, l) >= 0.0)) {
        gram.selfadjointView<Eigen::Lower>().rankUpdate(inst.V.col(l));
      }
    }
    const double flipped = singular_values_desc(gram.selfadjointView<Eigen::Lower>())(0);
    const double measured = inst.Z.row(i).norm() * flipped;
    if (sample_bounds(i) > 0.0) {
      out.max_sample_ratio = std::max(out.max_sample_ratio, measured / sample_bounds(i));
    }
  }
  const GeneratorParams p{W};
  const GeneratorParams p0{inst.W0};
  out.averaged = operator_norm_from_gram(jacobian_difference_gram(p, p0, inst));
  return out;
}

}  // namespace

double expected_d_squared(const ModelConfig& config) {
  config.validate();
  const double n = config.n;
  const double s2 = config.sigma_z * config.sigma_z;
  return s2 * (n * config.d / 2.0 + n * (n - 1.0) / (2.0 * std::numbers::pi));
}

double expected_gram_coefficient(const ModelConfig& config) {
  config.validate();
  const double w = width_term(config);
  return config.sigma_z * config.sigma_z * w * w;
}

SigmaMinBound sigma_min_lower_bound(const ConcentrationQuery& query) {
  const ModelConfig& c = query.config;
  c.validate();
  check_delta(query.delta, 1.5);
  if (!(query.eta_lemma > 0.0)) throw ConfigError("eta_lemma must be > 0");
  const double lo = 1.0 - query.delta;
  const double hi = 1.0 + query.delta;
  const double radicand = lo * lo * c.k - hi * hi;
  if (!(radicand > 0.0)) return {0.0, true};
  const double bracket = std::sqrt(radicand) - std::sqrt(static_cast<double>(c.m)) *
                                                   (1.0 + query.eta_lemma) * hi;
  if (!(bracket > 0.0)) return {0.0, true};
  return {bracket * c.sigma_v * c.sigma_z * width_term(c), false};
}

double opnorm_upper_bound(const ConcentrationQuery& query) {
  const ModelConfig& c = query.config;
  c.validate();
  check_delta(query.delta, 1.5);
  return (1.0 + query.delta) * c.sigma_v * c.sigma_z *
         (std::sqrt(static_cast<double>(c.k)) + 2.0 * std::sqrt(static_cast<double>(c.m))) *
         width_term(c);
}

double initial_misfit_bound(const ConcentrationQuery& query, double xbar_norm) {
  const ModelConfig& c = query.config;
  c.validate();
  check_delta(query.delta, 3.0);
  if (!(xbar_norm >= 0.0)) throw ConfigError("xbar_norm must be >= 0");
  const double kdm = static_cast<double>(c.k) * c.d * c.m;
  return (1.0 + query.delta) / std::sqrt(2.0 * std::numbers::pi) * c.sigma_v * c.sigma_w *
             c.sigma_z * std::sqrt(kdm) +
         xbar_norm;
}

double perturbation_sample_bound(const ModelConfig& config, double radius, double z_norm) {
  config.validate();
  if (!(radius >= 0.0)) throw ConfigError("radius must be >= 0");
  const double x = std::pow(2.0 * config.k * radius / config.sigma_w, 2.0 / 3.0);
  const double log_term = x > 0.0 ? std::max(0.0, std::log(config.k / (3.0 * x))) : 0.0;
  return config.sigma_v * z_norm *
         (2.0 * std::sqrt(static_cast<double>(config.m)) + std::sqrt(6.0 * x * log_term));
}

BoundCheckResult check_expected_d_squared(const ModelConfig& config, int trials,
                                          std::uint64_t seed) {
  check_trials(trials);
  const double expected = expected_d_squared(config);
  std::vector<double> values(static_cast<std::size_t>(trials));
  parallel_for(values.size(), [&](std::size_t t) {
    Rng rng(Rng::split(seed, t));
    const Matrix Z = gaussian(rng, config.n, config.d, config.sigma_z);
    const Vector w = gaussian(rng, config.d, 1, config.sigma_w);
    const Vector gate = ((Z * w).array() >= 0.0).cast<double>().matrix();
    values[t] = (Z.transpose() * gate).squaredNorm();
  });
  BoundCheckResult out = summarize(values, expected, true);
  out.violation_rate = 0.0;
  out.pass = std::abs(out.empirical_mean - expected) <= 3.0 * out.empirical_std_error;
  return out;
}

GramCheckResult check_gram_expectation(const ModelConfig& config, int trials,
                                       std::uint64_t seed) {
  check_trials(trials);
  config.validate();
  Rng master(seed);
  const Matrix V = gaussian(master, config.m, config.k, config.sigma_v);
  const std::uint64_t trial_seed = master.next_u64();
  const int m = config.m;

  std::vector<Matrix> grams(static_cast<std::size_t>(trials));
  parallel_for(grams.size(), [&](std::size_t t) {
    Rng rng(Rng::split(trial_seed, t));
    Matrix Z = gaussian(rng, config.n, config.d, config.sigma_z);
    Matrix W = gaussian(rng, config.k, config.d, config.sigma_w);
    const ProblemInstance inst = ProblemInstance::from_parts(
        std::move(Z), V, W, Matrix::Zero(config.n, m));
    grams[t] = jacobian_gram(GeneratorParams{W}, inst);
  });

  GramCheckResult out;
  out.trials = trials;
  out.expected = expected_gram_coefficient(config) * V * V.transpose();
  out.mean.resize(m, m);
  out.std_error.resize(m, m);
  std::vector<double> entry(grams.size());
  out.pass = true;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      for (std::size_t t = 0; t < grams.size(); ++t) entry[t] = grams[t](i, j);
      const MeanAndError me = mean_and_error(entry);
      out.mean(i, j) = me.mean;
      out.std_error(i, j) = me.std_error;
      const double gap = std::abs(me.mean - out.expected(i, j));
      const double z = me.std_error > 0.0 ? gap / me.std_error : (gap == 0.0 ? 0.0 : INFINITY);
      out.max_z_score = std::max(out.max_z_score, z);
      if (!(z <= 3.0)) out.pass = false;
    }
  }
  return out;
}

BoundCheckResult check_sigma_min(const ConcentrationQuery& query) {
  check_trials(query.trials);
  const SigmaMinBound bound = sigma_min_lower_bound(query);
  std::vector<double> values(static_cast<std::size_t>(query.trials));
  parallel_for(values.size(), [&](std::size_t t) {
    const ProblemInstance inst = sample_problem(trial_config(query.config, query.seed, t));
    const Vector sv = singular_values_desc(jacobian_gram(GeneratorParams{inst.W0}, inst));
    values[t] = sv(sv.size() - 1);
  });
  return summarize(std::move(values), bound.value, false);
}

BoundCheckResult check_opnorm(const ConcentrationQuery& query) {
  check_trials(query.trials);
  const double bound = opnorm_upper_bound(query);
  std::vector<double> values(static_cast<std::size_t>(query.trials));
  parallel_for(values.size(), [&](std::size_t t) {
    const ProblemInstance inst = sample_problem(trial_config(query.config, query.seed, t));
    values[t] = operator_norm_from_gram(jacobian_gram(GeneratorParams{inst.W0}, inst));
  });
  return summarize(std::move(values), bound, true);
}

BoundCheckResult check_initial_misfit(const ConcentrationQuery& query) {
  check_trials(query.trials);
  const double base = initial_misfit_bound(query, 0.0);
  const TargetSampler targets = gaussian_targets(Vector::Zero(query.config.m));
  std::vector<double> values(static_cast<std::size_t>(query.trials));
  std::vector<double> slack(values.size());
  parallel_for(values.size(), [&](std::size_t t) {
    const ProblemInstance inst =
        sample_problem(trial_config(query.config, query.seed, t), targets);
    values[t] = residual(GeneratorParams{inst.W0}, inst).norm();
    slack[t] = base + inst.xbar.norm() - values[t];
  });
  BoundCheckResult out = summarize(values, base, true);
  const auto violations = std::count_if(slack.begin(), slack.end(), [](double s) { return s < 0; });
  out.violation_rate = static_cast<double>(violations) / static_cast<double>(slack.size());
  out.pass = 1.0 - out.violation_rate >= kBoundSatisfactionRate;
  return out;
}

std::vector<PerturbationReport> nested_perturbation_probe(const ProblemInstance& inst,
                                                          const ModelConfig& config,
                                                          const std::vector<double>& radii,
                                                          const PerturbationProbeOptions& options) {
  config.validate();
  if (options.samples < 1) throw ConfigError("perturbation probe needs at least one sample");
  if (radii.empty()) throw ConfigError("perturbation probe needs at least one radius");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] >= 0.0) || (i > 0 && radii[i] < radii[i - 1])) {
      throw ConfigError("probe radii must be non-negative and ascending");
    }
  }
  for (double f : options.radius_fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("radius fractions must lie in (0, 1]");
  }
  if (inst.k() != config.k || inst.m() != config.m || inst.d() != config.d) {
    throw DimensionError("instance does not match the model configuration");
  }

  const Matrix H0 = inst.Z * inst.W0.transpose();
  const std::size_t samples = static_cast<std::size_t>(options.samples);
  std::vector<Matrix> directions(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    Rng rng(Rng::split(options.seed, s));
    directions[s] = unit_operator_norm_direction(rng, inst.k(), inst.d());
  }

  std::vector<PerturbationReport> out;
  std::vector<double> averaged_all;
  double running_ratio = 0.0;
  for (double radius : radii) {
    Vector sample_bounds(inst.n());
    for (int i = 0; i < inst.n(); ++i) {
      sample_bounds(i) = perturbation_sample_bound(config, radius, inst.Z.row(i).norm());
    }
    const double averaged_bound = sample_bounds.mean();

    const std::size_t per_radius = samples * options.radius_fractions.size();
    std::vector<Perturbation> probes(per_radius);
    parallel_for(per_radius, [&](std::size_t idx) {
      const std::size_t s = idx / options.radius_fractions.size();
      const double rho = radius * options.radius_fractions[idx % options.radius_fractions.size()];
      probes[idx] = measure_perturbation(inst, inst.W0 + rho * directions[s], H0, sample_bounds);
    });
    for (const auto& p : probes) {
      averaged_all.push_back(p.averaged);
      running_ratio = std::max(running_ratio, p.max_sample_ratio);
    }

    PerturbationReport report;
    report.radius = radius;
    report.averaged = summarize(averaged_all, averaged_bound, true);
    report.averaged.pass = report.averaged.empirical_max <= averaged_bound;
    report.max_sample_ratio = running_ratio;
    out.push_back(report);
  }
  return out;
}

PerturbationReport perturbation_probe(const ProblemInstance& inst, const ModelConfig& config,
                                      double radius, const PerturbationProbeOptions& options) {
  return nested_perturbation_probe(inst, config, {radius}, options).front();
}

}  // namespace gdalab
