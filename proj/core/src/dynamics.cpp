#include "gdalab/dynamics.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <utility>

#include "gdalab/errors.hpp"

namespace gdalab {
namespace {

bool finite(const GanState& s) { return s.theta.allFinite() && s.dvec.allFinite(); }

void ensure_finite(const GanState& next, const GanState& prev) {
  if (!finite(next)) {
    throw DivergenceError("non-finite iterate at t=" + std::to_string(next.t), prev);
  }
}

// Simultaneous update given r_t and J(theta_t)^T d_t.
GanState gda_update(const GanState& s, const Vector& r, const Vector& jt_d,
                    const StepSchedule& sched) {
  GanState next;
  next.dvec = (1.0 - sched.mu) * s.dvec + sched.mu * r;
  next.theta = s.theta - sched.eta * jt_d;
  next.t = s.t + 1;
  return next;
}

Vector ascend(Vector d, const Vector& r, const StepSchedule& sched) {
  for (int i = 0; i < sched.d_iter; ++i) d = (1.0 - sched.mu) * d + sched.mu * r;
  return d;
}

// r~ = (f0 - y) + J0 (theta~ - theta0), with caller-owned buffers.
void linearized_residual_into(const LinearizedState& s, Vector& delta, Vector& r) {
  delta.resize(s.theta_tilde.size());
  delta.noalias() = s.theta_tilde - s.base->theta0;
  r.resize(s.base->f0.size());
  r.noalias() = s.base->f0 - s.base->y;
  r.noalias() += s.base->J0 * delta;
}

// One linearised GDA step in place, given r~ at the current state.
void advance_linearized(LinearizedState& s, const Vector& r_tilde, const StepSchedule& sched) {
  s.theta_tilde.noalias() -= sched.eta * (s.base->J0.transpose() * s.dvec_tilde);
  s.dvec_tilde = (1.0 - sched.mu) * s.dvec_tilde + sched.mu * r_tilde;
  s.t += 1;
}

double width_factor(const ModelConfig& c) {
  c.validate();
  const double n = c.n;
  return c.k * ((c.d + (n - 1.0) / std::numbers::pi) / n) * c.sigma_v * c.sigma_v *
         c.sigma_z * c.sigma_z;
}

}  // namespace

void StepSchedule::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("eta must be a finite value > 0");
  if (!(mu > 0.0 && mu <= 1.0)) throw ConfigError("mu must lie in (0, 1]");
  if (!(eta_bar > 0.0 && eta_bar <= 1.0)) throw ConfigError("eta_bar must lie in (0, 1]");
  if (d_iter < 1) throw ConfigError("d_iter must be >= 1");
  if (T < 0) throw ConfigError("T must be >= 0");
  if (!(tol >= 0.0)) throw ConfigError("tol must be >= 0");
}

std::string to_string(Method method) {
  switch (method) {
    case Method::kGda: return "gda";
    case Method::kGdClosedForm: return "gd_closed_form";
    case Method::kMultiAscent: return "multi_ascent";
  }
  return "unknown";
}

Method method_from_string(const std::string& name) {
  if (name == "gda") return Method::kGda;
  if (name == "gd_closed_form") return Method::kGdClosedForm;
  if (name == "multi_ascent") return Method::kMultiAscent;
  throw ConfigError("unknown method '" + name + "' (expected gda, gd_closed_form, multi_ascent)");
}

GanState gda_step(const GanState& state, const SmoothMap& f, const Vector& y,
                  const StepSchedule& sched) {
  Vector value, jt_d;
  f.value_and_vjp(state.theta, state.dvec, value, jt_d);
  GanState next = gda_update(state, value - y, jt_d, sched);
  ensure_finite(next, state);
  return next;
}

GanState gda_step_minmax_form(const GanState& state, const ProblemInstance& inst,
                              const StepSchedule& sched) {
  const GeneratorParams params = GeneratorParams::unflatten(state.theta, inst.k(), inst.d());
  const MinmaxGradients g = minmax_gradients(params, state.dvec, inst);
  GanState next;
  next.dvec = state.dvec + sched.mu * g.grad_d;
  next.theta = GeneratorParams{params.W - sched.eta * g.grad_W}.flatten();
  next.t = state.t + 1;
  ensure_finite(next, state);
  return next;
}

Vector gd_closed_form_step(const Vector& theta, const SmoothMap& f, const Vector& y, double eta) {
  Vector value, grad;
  f.value_and_residual_vjp(theta, y, value, grad);
  Vector next = theta - eta * grad;
  if (!next.allFinite()) {
    throw DivergenceError("non-finite generator step", GanState{theta, value - y, 0});
  }
  return next;
}

GanState multi_ascent_step(const GanState& state, const SmoothMap& f, const Vector& y,
                           const StepSchedule& sched) {
  const Vector r = f.evaluate(state.theta) - y;
  GanState next;
  next.dvec = ascend(state.dvec, r, sched);
  next.theta = state.theta - sched.eta * f.jacobian_transpose_times(state.theta, next.dvec);
  next.t = state.t + 1;
  ensure_finite(next, state);
  return next;
}

std::shared_ptr<const LinearizationPoint> LinearizationPoint::at(const SmoothMap& f,
                                                                 const Vector& theta0,
                                                                 const Vector& y) {
  auto point = std::make_shared<LinearizationPoint>();
  point->theta0 = theta0;
  point->f0 = f.evaluate(theta0);
  point->J0 = f.jacobian(theta0);
  point->y = y;
  return point;
}

Vector LinearizedState::residual() const {
  Vector delta;
  Vector r;
  linearized_residual_into(*this, delta, r);
  return r;
}

LinearizedState LinearizedState::start(std::shared_ptr<const LinearizationPoint> base, Vector d0) {
  LinearizedState s;
  s.theta_tilde = base->theta0;
  s.dvec_tilde = std::move(d0);
  s.base = std::move(base);
  return s;
}

LinearizedState linearized_gda_step(const LinearizedState& state, const StepSchedule& sched) {
  LinearizedState next = state;
  Vector delta;
  Vector r;
  linearized_residual_into(state, delta, r);
  advance_linearized(next, r, sched);
  return next;
}

GanState initial_state(const ProblemInstance& inst) {
  return {GeneratorParams{inst.W0}.flatten(), Vector::Zero(inst.m()), 0};
}

Trajectory run_trajectory(const SmoothMap& f, const Vector& y, const GanState& init,
                          const StepSchedule& sched, const RunOptions& options) {
  sched.validate();
  if (options.stride < 1) throw ConfigError("record stride must be >= 1");
  if (options.snapshot_stride < 0) throw ConfigError("snapshot stride must be >= 0");
  if (options.linearized_twin && options.method != Method::kGda) {
    throw ConfigError("the linearized twin is only defined for simultaneous GDA");
  }
  if (init.theta.size() != f.param_count() || init.dvec.size() != f.output_dim() ||
      y.size() != f.output_dim()) {
    throw DimensionError("initial state does not match the map dimensions");
  }

  const auto clock_start = std::chrono::steady_clock::now();
  Trajectory traj;
  GanState state = init;
  state.t = 0;

  std::optional<LinearizedState> twin;
  if (options.linearized_twin) {
    twin = LinearizedState::start(LinearizationPoint::at(f, init.theta, y), init.dvec);
  }

  Vector value, vjp;
  GanState next;
  Vector twin_delta, r_tilde;
  auto record = [&](const Vector& r, const Vector& dvec) {
    TrajectoryRecord rec;
    rec.t = state.t;
    rec.residual_norm = r.norm();
    rec.d_norm = dvec.norm();
    rec.z_norm = std::hypot(rec.residual_norm, rec.d_norm);
    rec.drift = (state.theta - init.theta).norm();
    if (twin) {
      rec.lin_gap = std::sqrt((r - r_tilde).squaredNorm() + (dvec - twin->dvec_tilde).squaredNorm());
      rec.param_gap = (state.theta - twin->theta_tilde).norm();
      rec.lin_state_norm = std::sqrt(r_tilde.squaredNorm() + twin->dvec_tilde.squaredNorm());
    }
    if (options.wallclock) {
      rec.wallclock_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                             std::chrono::steady_clock::now() - clock_start)
                             .count();
    }
    traj.records.push_back(rec);
  };

  try {
    for (;;) {
      // r_t at the current iterate, plus whatever gradient the method needs.
      Vector r;
      switch (options.method) {
        case Method::kGda:
          f.value_and_vjp(state.theta, state.dvec, value, vjp);
          r = value - y;
          break;
        case Method::kGdClosedForm:
          f.value_and_residual_vjp(state.theta, y, value, vjp);
          r = value - y;
          state.dvec = r;  // the optimal discriminator for the current theta
          break;
        case Method::kMultiAscent:
          r = f.evaluate(state.theta) - y;
          break;
      }
      if (!r.allFinite()) throw DivergenceError("non-finite residual", state);
      if (twin) linearized_residual_into(*twin, twin_delta, r_tilde);
      if (state.t == 0) {
        traj.initial_residual_norm = r.norm();
        traj.initial_d_norm = init.dvec.norm();
      }

      const bool converged = r.norm() <= sched.tol;
      const bool capped = state.t >= sched.T;
      if (options.snapshot_stride > 0 &&
          (state.t % options.snapshot_stride == 0 || converged || capped)) {
        traj.snapshots.push_back({state.t, state.theta});
      }
      if (state.t % options.stride == 0 || converged || capped) record(r, state.dvec);
      if (converged || capped) {
        traj.converged = converged;
        break;
      }

      // Write the step into `next`, whose buffers are reused across
      // iterations, then swap.
      next.dvec.resize(state.dvec.size());
      next.theta.resize(state.theta.size());
      switch (options.method) {
        case Method::kGda:
          next.dvec.noalias() = (1.0 - sched.mu) * state.dvec + sched.mu * r;
          next.theta.noalias() = state.theta - sched.eta * vjp;
          break;
        case Method::kGdClosedForm:
          next.dvec = r;
          next.theta.noalias() = state.theta - sched.eta * vjp;
          break;
        case Method::kMultiAscent:
          next.dvec = ascend(state.dvec, r, sched);
          next.theta.noalias() =
              state.theta - sched.eta * f.jacobian_transpose_times(state.theta, next.dvec);
          break;
      }
      next.t = state.t + 1;
      ensure_finite(next, state);
      if (twin) advance_linearized(*twin, r_tilde, sched);
      std::swap(state, next);
    }
  } catch (const DivergenceError& e) {
    traj.diverged = true;
    traj.final_state = e.last_finite_state();
    traj.iterations = e.last_finite_state().t;
    throw TrajectoryDivergence(e, std::move(traj));
  }
  traj.final_state = state;
  traj.iterations = state.t;
  return traj;
}

GdaStepSizes theorem1_step_sizes(const ModelConfig& config, double eta_bar, double mu) {
  if (!(eta_bar > 0.0 && eta_bar <= 1.0)) throw ConfigError("eta_bar must lie in (0, 1]");
  if (!(mu > 0.0 && mu <= 1.0)) throw ConfigError("mu must lie in (0, 1]");
  return {eta_bar * mu / (324.0 * width_factor(config)), mu};
}

double theorem2_step_size(const ModelConfig& config, double eta_bar) {
  if (!(eta_bar > 0.0 && eta_bar <= 1.0)) throw ConfigError("eta_bar must lie in (0, 1]");
  return 2.0 * eta_bar / (243.0 * width_factor(config));
}

}  // namespace gdalab
