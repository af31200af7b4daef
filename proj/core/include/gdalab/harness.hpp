#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gdalab/concentration.hpp"
#include "gdalab/dynamics.hpp"
#include "gdalab/genmodel.hpp"
#include "gdalab/parallel.hpp"
#include "gdalab/stability.hpp"

namespace gdalab {

// Experiment orchestration: JSON configuration, single runs, k-sweeps,
// certificate runs and the CSV / JSON result files. The file formats are
// described in docs/formats.md.

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kReportSchemaVersion = 1;

inline constexpr const char* kTrajectoryCsvHeader =
    "t,residual_norm,d_norm,z_norm,w_drift_fro,lin_gap,wallclock_ns";
inline constexpr const char* kSweepCsvHeader =
    "method,k,seed,final_mse,final_residual_norm,iters,diverged";
inline constexpr const char* kEnvelopeCsvHeader =
    "t,z_norm,state_bound,lin_z_norm,lin_state_bound,lin_gap,gap_bound,uniform_gap_bound,"
    "param_gap,param_gap_bound,drift,drift_bound";

enum class StepRule {
  kExplicit,  ///< eta and mu as given
  kTheorem1,  ///< GDA step sizes from eta_bar and mu
  kTheorem2,  ///< gradient-descent step size from eta_bar
  kAuto,      ///< kTheorem2 for gd_closed_form, kTheorem1 otherwise
};

std::string to_string(StepRule rule);
StepRule step_rule_from_string(const std::string& name);

struct ScheduleSpec {
  StepRule rule = StepRule::kAuto;
  double eta = 0.0;  ///< used by kExplicit only
  double mu = 1.0;
  double eta_bar = 1.0;
  int d_iter = 5;
  long T = 20000;
  double tol = 1e-8;
};

/// Concrete step sizes for `method` on a model of the given shape.
StepSchedule resolve_schedule(const ScheduleSpec& spec, const ModelConfig& model, Method method);

struct TargetSpec {
  /// Without a mean, mu_target ~ N(0, I_m) is drawn from the instance stream
  /// (single runs) or from the master seed (sweeps).
  std::optional<Vector> mean;
};

struct RunSettings {
  long stride = 1;
  bool linearized_twin = false;
  bool wallclock = false;
};

struct SweepSettings {
  std::vector<int> k_list = {4, 8, 16, 32, 64, 128, 256, 512, 1024};
  int repeats = 5;
  std::vector<Method> methods = {Method::kGda, Method::kGdClosedForm, Method::kMultiAscent};
  std::uint64_t master_seed = 0;
};

struct CertifySettings {
  int ball_samples = 64;
  std::uint64_t probe_seed = 0;
  long snapshot_stride = 100;
};

struct ConcentrationSettings {
  double delta = 0.5;             ///< sigma_min and operator-norm bounds
  double misfit_delta = 1.0 / 3.0;
  double eta_lemma = 1.0 / 3.0;
  int trials = 200;
  int expectation_trials = 100000;
  int gram_trials = 10000;
  double radius_scale = 0.01;     ///< probe radius c sigma_w sqrt(k) / (d log d)^(3/2)
  int probe_samples = 32;
  std::uint64_t seed = 0;
};

struct OutputPaths {
  std::string trajectory;
  std::string sweep;
  std::string report;
  std::string envelopes;
};

struct ExperimentConfig {
  ModelConfig model;
  TargetSpec target;
  Method method = Method::kGda;
  ScheduleSpec schedule;
  RunSettings run;
  SweepSettings sweep;
  CertifySettings certify;
  ConcentrationSettings concentration;
  OutputPaths outputs;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// Parses a configuration document. Unknown keys, wrong types and a missing or
/// unsupported schema_version raise ConfigError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical JSON form; parse_config(config_to_json(c)) reproduces c.
std::string config_to_json(const ExperimentConfig& config);

/// Builds the problem instance a single run or certificate uses.
ProblemInstance make_instance(const ExperimentConfig& config);

struct RunResult {
  StepSchedule schedule;
  Trajectory trajectory;
};

/// Samples the instance and runs config.method. Throws TrajectoryDivergence.
RunResult run_experiment(const ExperimentConfig& config);

/// wallclock_ns is left empty unless `with_wallclock` is set, so that
/// repeated runs produce identical files.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj, bool with_wallclock = false);

struct SweepRow {
  Method method = Method::kGda;
  int k = 0;
  std::uint64_t seed = 0;
  int repeat = 0;
  double final_mse = 0.0;  ///< ||f(W_T) - xbar||^2
  double final_residual_norm = 0.0;
  long iters = 0;
  bool diverged = false;
};

struct SweepResult {
  std::vector<SweepRow> rows;
};

/// master_seed ^ stable_hash("<method>/<k>/<repeat>").
std::uint64_t cell_seed(std::uint64_t master_seed, Method method, int k, int repeat);

/// Runs every (method, k, repeat) cell on `workers` threads. Rows come back
/// in canonical order (method name, k, seed).
SweepResult sweep_k(const ExperimentConfig& config, std::size_t workers = worker_count());

void canonical_sort(std::vector<SweepRow>& rows);
void write_sweep_csv(std::ostream& out, const SweepResult& result);
/// Reads a sweep CSV written by write_sweep_csv (repeat indices are not
/// stored and come back as 0).
SweepResult read_sweep_csv(std::istream& in);

struct MedianPoint {
  int k = 0;
  double median_final_mse = 0.0;
};

/// Median final MSE per k for one method, ascending in k.
std::vector<MedianPoint> median_by_k(const SweepResult& result, Method method);

struct EnvelopeRow {
  long t = 0;
  double z_norm = 0.0;
  double state_bound = 0.0;
  double lin_z_norm = 0.0;
  double lin_state_bound = 0.0;
  double lin_gap = 0.0;
  double gap_bound = 0.0;
  double uniform_gap_bound = 0.0;
  double param_gap = 0.0;
  double param_gap_bound = 0.0;
  double drift = 0.0;
  double drift_bound = 0.0;
};

struct EnvelopeSummary {
  bool state_ok = true;         ///< ||z_t|| <= gamma (1 - eta alpha^2/2)^t ||z0||
  bool linear_state_ok = true;  ///< ||z~_t|| <= gamma (1 - eta alpha^2)^t ||z0||
  bool gap_ok = true;           ///< both forms of the ||z_t - z~_t|| bound
  bool param_gap_ok = true;     ///< ||theta_t - theta~_t|| bound
  bool drift_ok = true;         ///< ||theta_t - theta0|| <= R / 2

  bool all_ok() const { return state_ok && linear_state_ok && gap_ok && param_gap_ok && drift_ok; }
};

struct CertifyResult {
  SpectralReport report;
  Trajectory trajectory;
  std::vector<EnvelopeRow> envelopes;
  EnvelopeSummary summary;
};

/// Runs GDA with its linearised twin from `init`, certifies the run and
/// compares every logged iterate with the predicted envelopes. Throws
/// TrajectoryDivergence or DegenerateJacobianError.
CertifyResult certify_run(const SmoothMap& f, const Vector& y, const GanState& init,
                          const StepSchedule& sched, const RunSettings& run,
                          const CertifySettings& settings);

/// Same on the GAN instance described by `config` (method is forced to gda).
CertifyResult certify_run(const ExperimentConfig& config);

/// Envelope rows for an existing certified trajectory.
std::vector<EnvelopeRow> envelope_table(const SpectralReport& report, const Trajectory& traj);
EnvelopeSummary summarize_envelopes(const std::vector<EnvelopeRow>& rows);

void write_envelope_csv(std::ostream& out, const std::vector<EnvelopeRow>& rows);

/// JSON certificate report: spectral quantities, flags, envelope summary and
/// the configuration that produced them.
std::string certify_report_json(const CertifyResult& result, const ExperimentConfig* config);
std::string spectral_report_to_json(const SpectralReport& report);
SpectralReport spectral_report_from_json(const std::string& json_text);

/// Runs every concentration check at the configured model and returns the
/// JSON report.
struct ConcentrationSuite {
  BoundCheckResult d_squared;
  GramCheckResult gram;
  BoundCheckResult sigma_min;
  SigmaMinBound sigma_min_bound;
  BoundCheckResult opnorm;
  BoundCheckResult initial_misfit;
  PerturbationReport perturbation;

  bool all_pass() const;
};

ConcentrationSuite run_concentration_suite(const ExperimentConfig& config);
std::string concentration_report_json(const ConcentrationSuite& suite);

struct OracleCheck {
  double max_rel_error = 0.0;  ///< over reliable columns, relative to ||J||_max
  long reliable_columns = 0;
  long total_columns = 0;
  double gram_rel_error = 0.0;
  double quadrature_residual = 0.0;  ///< relative fundamental-theorem residual
  bool pass = false;
};

/// Finite-difference and Gram checks of the analytic Jacobian on the
/// configured instance.
OracleCheck run_oracle_check(const ExperimentConfig& config);
std::string oracle_check_json(const OracleCheck& check);

/// Standalone matplotlib script for a sweep CSV and optional trajectory CSV.
/// Throws ConfigError if a listed file does not exist. Deterministic in its
/// inputs.
std::string emit_plot_script(const std::filesystem::path& sweep_csv,
                             const std::vector<std::filesystem::path>& trajectory_csvs);

}  // namespace gdalab
