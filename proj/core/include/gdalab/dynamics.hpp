#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gdalab/genmodel.hpp"
#include "gdalab/smooth_map.hpp"

namespace gdalab {

// Optimisers for  min_theta max_d  h(theta, d) = <d, f(theta) - y> - ||d||^2/2.
//
// GDA in this form reads
//   d_{t+1}     = (1 - mu) d_t + mu r_t,        r_t = f(theta_t) - y
//   theta_{t+1} = theta_t - eta J(theta_t)^T d_t
// with both right-hand sides evaluated at the pre-step state. The original
// GAN objective L(W, d) maps onto h through d -> -d (see gda_step_minmax_form).

struct StepSchedule {
  double eta = 1e-3;    ///< generator step, > 0
  double mu = 1.0;      ///< discriminator step, in (0, 1]
  double eta_bar = 1.0; ///< normalised step used by the theorem step rules, in (0, 1]
  int d_iter = 1;       ///< ascent steps per generator step (multi-ascent only)
  long T = 20000;       ///< iteration cap
  double tol = 1e-8;    ///< stop once ||r_t|| <= tol

  void validate() const;
};

struct GanState {
  Vector theta;
  Vector dvec;
  long t = 0;
};

enum class Method { kGda, kGdClosedForm, kMultiAscent };

std::string to_string(Method method);
Method method_from_string(const std::string& name);

/// Raised when an update produces a non-finite value. Carries the last state
/// whose entries were all finite.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, GanState last_finite)
      : std::runtime_error(what), last_finite_(std::move(last_finite)) {}
  const GanState& last_finite_state() const { return last_finite_; }

 private:
  GanState last_finite_;
};

/// One simultaneous GDA step.
GanState gda_step(const GanState& state, const SmoothMap& f, const Vector& y,
                  const StepSchedule& sched);

/// GDA on the original objective L(W, d) of the GAN instance, using the raw
/// gradients of L. Produces the same W sequence as gda_step with d negated.
GanState gda_step_minmax_form(const GanState& state, const ProblemInstance& inst,
                              const StepSchedule& sched);

/// Gradient step on (1/2)||f(theta) - y||^2: theta - eta J^T r.
Vector gd_closed_form_step(const Vector& theta, const SmoothMap& f, const Vector& y, double eta);

/// d_iter ascent steps with theta frozen, then one generator step using the
/// updated d (sequential ordering).
GanState multi_ascent_step(const GanState& state, const SmoothMap& f, const Vector& y,
                           const StepSchedule& sched);

// Data shared by every linearised iterate: the expansion point and its
// Jacobian.
struct LinearizationPoint {
  Vector theta0;
  Vector f0;
  Matrix J0;
  Vector y;

  static std::shared_ptr<const LinearizationPoint> at(const SmoothMap& f, const Vector& theta0,
                                                      const Vector& y);
};

struct LinearizedState {
  Vector theta_tilde;
  Vector dvec_tilde;
  std::shared_ptr<const LinearizationPoint> base;
  long t = 0;

  /// r~ = f(theta0) + J0 (theta~ - theta0) - y.
  Vector residual() const;
  static LinearizedState start(std::shared_ptr<const LinearizationPoint> base, Vector d0);
};

LinearizedState linearized_gda_step(const LinearizedState& state, const StepSchedule& sched);

struct TrajectoryRecord {
  long t = 0;
  double residual_norm = 0.0;
  double d_norm = 0.0;
  double z_norm = 0.0;
  double drift = 0.0;  ///< ||theta_t - theta_0||
  std::optional<double> lin_gap;    ///< ||z_t - z~_t||
  std::optional<double> param_gap;  ///< ||theta_t - theta~_t||
  std::optional<double> lin_state_norm;  ///< ||z~_t||
  std::int64_t wallclock_ns = 0;
};

struct Snapshot {
  long t = 0;
  Vector theta;
};

struct RunOptions {
  Method method = Method::kGda;
  bool linearized_twin = false;  ///< co-run the linearised system (GDA only)
  long stride = 1;               ///< record every stride-th iteration (the last one always)
  long snapshot_stride = 0;      ///< keep theta every this many iterations; 0 disables
  bool wallclock = false;        ///< fill wallclock_ns
};

struct Trajectory {
  std::vector<TrajectoryRecord> records;
  std::vector<Snapshot> snapshots;
  GanState final_state;
  long iterations = 0;
  bool converged = false;  ///< stopped on the residual tolerance
  bool diverged = false;
  double initial_residual_norm = 0.0;
  double initial_d_norm = 0.0;
};

class TrajectoryDivergence : public DivergenceError {
 public:
  TrajectoryDivergence(const DivergenceError& cause, Trajectory partial)
      : DivergenceError(cause), partial_(std::move(partial)) {}
  const Trajectory& partial() const { return partial_; }

 private:
  Trajectory partial_;
};

/// Runs `options.method` from `init` for sched.T iterations or until
/// ||r_t|| <= sched.tol. Deterministic. Throws TrajectoryDivergence carrying
/// the records logged so far if an iterate becomes non-finite.
Trajectory run_trajectory(const SmoothMap& f, const Vector& y, const GanState& init,
                          const StepSchedule& sched, const RunOptions& options);

/// Starting state (W0, d = 0) for a GAN instance.
GanState initial_state(const ProblemInstance& inst);

struct GdaStepSizes {
  double eta;
  double mu;
};

/// eta = eta_bar mu / (324 k ((d + (n-1)/pi)/n) sigma_v^2 sigma_z^2).
GdaStepSizes theorem1_step_sizes(const ModelConfig& config, double eta_bar, double mu);

/// eta = 2 eta_bar / (243 k ((d + (n-1)/pi)/n) sigma_v^2 sigma_z^2).
double theorem2_step_size(const ModelConfig& config, double eta_bar);

}  // namespace gdalab
