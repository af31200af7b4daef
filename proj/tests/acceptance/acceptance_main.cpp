#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>

#include "gdalab/concentration.hpp"
#include "gdalab/dynamics.hpp"
#include "gdalab/errors.hpp"
#include "gdalab/genmodel.hpp"
#include "gdalab/harness.hpp"
#include "gdalab/oracles.hpp"
#include "gdalab/parallel.hpp"
#include "gdalab/rng.hpp"
#include "gdalab/stability.hpp"

namespace fs = std::filesystem;

namespace gdalab::acceptance {
namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string title;
  std::function<Outcome()> run;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double x, int digits = 4) {
  std::ostringstream ss;
  ss << std::setprecision(digits) << x;
  return ss.str();
}

int uniform_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.uniform() * (hi - lo + 1));
}

double uniform_real(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

double log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(uniform_real(rng, std::log(lo), std::log(hi)));
}

ModelConfig model(int m, int d, int k, int n, std::uint64_t seed) {
  ModelConfig c;
  c.m = m;
  c.d = d;
  c.k = k;
  c.n = n;
  c.seed = seed;
  return c;
}

void set_threads(std::size_t workers) {
  ::setenv("GDALAB_THREADS", std::to_string(workers).c_str(), 1);
}

void write_file(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  out << body;
}

// Shared state: several criteria reuse the same expensive runs.
struct Context {
  fs::path configs;
  fs::path scratch;
  std::size_t workers = 4;

  std::optional<SweepResult> fig2_sweep;
  std::optional<CertifyResult> large_certify;
  double fig2_seconds = 0.0;

  ExperimentConfig load(const std::string& name) const { return load_config(configs / name); }

  const SweepResult& sweep() {
    if (!fig2_sweep) {
      Stopwatch clock;
      fig2_sweep = sweep_k(load("sweep_fig2.json"), workers);
      fig2_seconds = clock.seconds();
      std::ofstream out(scratch / "sweep_fig2.csv", std::ios::binary);
      write_sweep_csv(out, *fig2_sweep);
    }
    return *fig2_sweep;
  }

  const CertifyResult& certify() {
    if (!large_certify) {
      const ExperimentConfig config = load("certify_k16384.json");
      large_certify = certify_run(config);
      write_file(scratch / "certify_k16384.json", certify_report_json(*large_certify, &config));
      std::ofstream env(scratch / "certify_k16384_envelopes.csv", std::ios::binary);
      write_envelope_csv(env, large_certify->envelopes);
    }
    return *large_certify;
  }
};

Outcome jacobian_oracle(Context&) {
  Stopwatch clock;
  Rng rng(101);
  double worst = 0.0;
  long reliable = 0;
  long total = 0;
  for (int i = 0; i < 20; ++i) {
    ExperimentConfig config;
    config.model = model(uniform_int(rng, 1, 8), uniform_int(rng, 1, 6), uniform_int(rng, 1, 32),
                         uniform_int(rng, 1, 16), 1000 + static_cast<std::uint64_t>(i));
    const OracleCheck check = run_oracle_check(config);
    worst = std::max(worst, check.max_rel_error);
    reliable += check.reliable_columns;
    total += check.total_columns;
  }
  const double secs = clock.seconds();
  return {worst <= 1e-5 && reliable > 0 && secs < 10.0,
          "max rel error " + fmt(worst) + " on " + std::to_string(reliable) + "/" +
              std::to_string(total) + " reliable columns, " + fmt(secs, 3) + " s"};
}

Outcome gram_factorisation(Context&) {
  Rng rng(202);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const ModelConfig c = model(uniform_int(rng, 1, 16), uniform_int(rng, 1, 10),
                                uniform_int(rng, 1, 128), uniform_int(rng, 1, 64),
                                2000 + static_cast<std::uint64_t>(i));
    const ProblemInstance inst = sample_problem(c);
    const GeneratorParams p{inst.W0};
    const Matrix J = jacobian(p, inst).J;
    const Matrix dense = J * J.transpose();
    const Matrix gram = jacobian_gram(p, inst);
    worst = std::max(worst, (gram - dense).norm() / dense.norm());
  }
  return {worst <= 1e-10, "max rel Frobenius error " + fmt(worst) + " over 100 instances"};
}

Outcome expectation_formulas(Context&) {
  Stopwatch clock;
  const BoundCheckResult d2 = check_expected_d_squared(model(1, 3, 1, 4, 0), 100000, 303);
  const GramCheckResult gram = check_gram_expectation(model(4, 3, 64, 4, 0), 10000, 304);
  const double coefficient = expected_gram_coefficient(model(1, 3, 1, 4, 0));
  const double secs = clock.seconds();
  const bool formula = std::abs(d2.formula_value - (6.0 + 6.0 / std::numbers::pi)) <= 1e-12 &&
                       std::abs(coefficient - 0.494366207318921502) <= 1e-12;
  const double z = std::abs(d2.empirical_mean - d2.formula_value) / d2.empirical_std_error;
  return {formula && d2.pass && gram.pass && secs < 60.0,
          "E[D^2] mean " + fmt(d2.empirical_mean, 6) + " vs " + fmt(d2.formula_value, 6) +
              " (" + fmt(z, 3) + " SE), gram max z " + fmt(gram.max_z_score, 3) + ", " +
              fmt(secs, 3) + " s"};
}

// Draws m singular values and (eta, mu) with mu / eta >= ratio * beta^2.
struct SpectrumDraw {
  Vector sigma;
  double eta;
  double mu;
};

SpectrumDraw draw_spectrum(Rng& rng, double ratio) {
  SpectrumDraw s;
  const int m = uniform_int(rng, 1, 8);
  s.sigma.resize(m);
  for (int i = 0; i < m; ++i) s.sigma(i) = log_uniform(rng, 0.05, 20.0);
  std::sort(s.sigma.begin(), s.sigma.end(), std::greater<>());
  s.mu = uniform_real(rng, 0.05, 1.0);
  const double beta = s.sigma(0);
  s.eta = s.mu / (ratio * beta * beta) * uniform_real(rng, 0.01, 1.0);
  return s;
}

Outcome spectral_radius(Context&) {
  Rng rng(404);
  double worst = 0.0;
  double worst_excess = -1.0;
  for (int i = 0; i < 100; ++i) {
    const SpectrumDraw s = draw_spectrum(rng, 4.0);
    const Matrix gram = s.sigma.array().square().matrix().asDiagonal();
    const auto eigs = oracles::numeric_eigs(transition_matrix_from_gram(gram, s.eta, s.mu).A);
    const double closed = spectral_radius_closed_form(s.sigma, s.eta, s.mu);
    const double alpha = s.sigma.minCoeff();
    worst = std::max(worst, std::abs(closed - std::abs(eigs.front())));
    worst_excess = std::max(worst_excess, closed - (1.0 - s.eta * alpha * alpha));
  }
  return {worst <= 1e-8 && worst_excess <= 1e-10,
          "max |rho - rho_dense| " + fmt(worst) + ", max rho - (1 - eta alpha^2) " +
              fmt(worst_excess)};
}

Outcome stability_constant_check(Context&) {
  Rng rng(505);
  double worst = 0.0;
  double largest = 0.0;
  for (int i = 0; i < 100; ++i) {
    const SpectrumDraw s = draw_spectrum(rng, 8.0);
    double numeric = 0.0;
    for (double sigma : s.sigma) {
      numeric = std::max(numeric,
                         oracles::eigenvector_condition_2x2(companion_block(sigma, s.eta, s.mu).C));
    }
    const double gamma = stability_constant(s.sigma, s.eta, s.mu);
    worst = std::max(worst, std::abs(gamma - numeric));
    largest = std::max(largest, gamma);
  }
  return {worst <= 1e-8 && largest < 5.0,
          "max |gamma - oracle| " + fmt(worst) + ", max gamma " + fmt(largest, 6)};
}

Outcome linearized_decay(Context&) {
  Rng rng(606);
  int certified = 0;
  int attempts = 0;
  int violations = 0;
  double worst_ratio = 0.0;
  while (certified < 20) {
    ++attempts;
    const ModelConfig c = model(uniform_int(rng, 2, 6), uniform_int(rng, 2, 6),
                                uniform_int(rng, 64, 256), uniform_int(rng, 8, 32),
                                6000 + static_cast<std::uint64_t>(attempts));
    auto inst = std::make_shared<const ProblemInstance>(sample_problem(c));
    const GeneratorMap f(inst);
    const Vector theta0 = f.initial_theta();
    const Vector sigma = singular_values_from_gram(f.jacobian_gram(theta0));
    const double alpha = sigma.minCoeff();
    const double beta = sigma.maxCoeff();
    StepSchedule sched;
    sched.mu = uniform_real(rng, 0.2, 1.0);
    sched.eta = sched.mu / (8.0 * beta * beta) * uniform_real(rng, 0.5, 1.0);
    sched.T = 2000;
    if (!(alpha > 0.0) || sched.mu / sched.eta < 8.0 * beta * beta) continue;
    ++certified;
    const double gamma = stability_constant(sigma, sched.eta, sched.mu);
    const double rate = 1.0 - sched.eta * alpha * alpha;

    Vector d0 = Vector::Zero(c.m);
    if (certified % 2 == 0) {
      for (int j = 0; j < c.m; ++j) d0(j) = rng.normal();
    }
    auto base = LinearizationPoint::at(f, theta0, inst->xbar);
    LinearizedState state = LinearizedState::start(base, d0);
    auto z_norm = [](const LinearizedState& s) {
      return std::sqrt(s.residual().squaredNorm() + s.dvec_tilde.squaredNorm());
    };
    const double z0 = z_norm(state);
    const double slack = 1e-10 * (1.0 + z0);
    for (long t = 0; t <= sched.T; ++t) {
      const double measured = z_norm(state);
      const double bound = gamma * std::pow(rate, static_cast<double>(t)) * z0;
      if (measured > bound + slack) ++violations;
      if (bound > slack) worst_ratio = std::max(worst_ratio, measured / bound);
      if (t < sched.T) state = linearized_gda_step(state, sched);
    }
  }
  return {violations == 0,
          std::to_string(certified) + " certified instances (" + std::to_string(attempts) +
              " drawn), " + std::to_string(violations) + " violations, max ||z~_t|| / bound above rounding level " +
              fmt(worst_ratio)};
}

Outcome residual_envelopes(Context& ctx) {
  const CertifyResult& cert = ctx.certify();
  const ExperimentConfig config = ctx.load("certify_k16384.json");
  const double eta_bar = config.schedule.eta_bar;
  const double mu = config.schedule.mu;

  const auto& records = cert.trajectory.records;
  const double r0 = records.front().residual_norm;
  long gda_bad = 0;
  double gda_ratio = 0.0;
  for (const auto& rec : records) {
    const double bound = 5.0 * std::pow(1.0 - 1e-5 * eta_bar * mu, rec.t) * r0;
    if (!(rec.residual_norm <= bound)) ++gda_bad;
    gda_ratio = std::max(gda_ratio, rec.residual_norm / bound);
  }

  auto inst = std::make_shared<const ProblemInstance>(make_instance(config));
  const GeneratorMap f(inst);
  ScheduleSpec spec = config.schedule;
  spec.rule = StepRule::kTheorem2;
  const StepSchedule sched = resolve_schedule(spec, config.model, Method::kGdClosedForm);
  RunOptions options;
  options.method = Method::kGdClosedForm;
  const Trajectory gd = run_trajectory(f, inst->xbar, initial_state(*inst), sched, options);
  {
    std::ofstream out(ctx.scratch / "gd_k16384.csv", std::ios::binary);
    write_trajectory_csv(out, gd);
  }
  long gd_bad = 0;
  double gd_ratio = 0.0;
  const double g0 = gd.records.front().residual_norm;
  for (const auto& rec : gd.records) {
    const double bound = std::pow(1.0 - 4e-6 * eta_bar, rec.t) * g0;
    if (!(rec.residual_norm <= bound)) ++gd_bad;
    gd_ratio = std::max(gd_ratio, rec.residual_norm / bound);
  }
  const bool complete = records.back().t == config.schedule.T && gd.records.back().t == sched.T;
  return {gda_bad == 0 && gd_bad == 0 && complete,
          "GDA: " + std::to_string(gda_bad) + " violations over " +
              std::to_string(records.size()) + " iterates, max ratio " + fmt(gda_ratio) +
              "; GD: " + std::to_string(gd_bad) + " violations over " +
              std::to_string(gd.records.size()) + " iterates, max ratio " + fmt(gd_ratio)};
}

Outcome trajectory_tracking(Context& ctx) {
  const CertifyResult& cert = ctx.certify();
  const SpectralReport& rep = cert.report;
  const EnvelopeSummary& s = cert.summary;
  double gap = 0.0;
  double param = 0.0;
  double drift = 0.0;
  for (const auto& row : cert.envelopes) {
    gap = std::max(gap, row.lin_gap / std::min(row.gap_bound, row.uniform_gap_bound));
    param = std::max(param, row.param_gap / row.param_gap_bound);
    drift = std::max(drift, row.drift / row.drift_bound);
  }
  const bool pass = rep.certified() && s.gap_ok && s.param_gap_ok && s.drift_ok;
  return {pass, std::string("certified ") + (rep.certified() ? "yes" : "no") +
                    " (ratio " + (rep.path.ratio_ok ? "ok" : "fails") + ", separation " +
                    (rep.path.sep_ok ? "ok" : "fails") + ", radius " +
                    (rep.path.radius_ok ? "ok" : "fails") + "); max measured/bound: gap " +
                    fmt(gap) + ", parameter gap " + fmt(param) + ", drift " + fmt(drift)};
}

Outcome fig2_sweep(Context& ctx) {
  const SweepResult& sweep = ctx.sweep();
  const ExperimentConfig config = ctx.load("sweep_fig2.json");
  const double floor = config.schedule.tol * config.schedule.tol;
  bool monotone = true;
  std::string detail;
  for (Method method : config.sweep.methods) {
    const auto medians = median_by_k(sweep, method);
    detail += to_string(method) + " [";
    for (std::size_t i = 0; i < medians.size(); ++i) {
      detail += (i ? " " : "") + fmt(medians[i].median_final_mse, 3);
      if (i > 0 && std::max(medians[i].median_final_mse, floor) >
                       std::max(medians[i - 1].median_final_mse, floor)) {
        monotone = false;
      }
    }
    detail += "]; ";
  }
  double gd_worst = 0.0;
  long diverged = 0;
  for (const auto& row : sweep.rows) {
    if (row.method == Method::kGdClosedForm && row.k == 1024) {
      gd_worst = std::max(gd_worst, row.final_mse);
    }
    diverged += row.diverged ? 1 : 0;
  }
  detail += "gd_closed_form max final MSE at k=1024 " + fmt(gd_worst) + ", " +
            std::to_string(diverged) + " diverged, " + fmt(ctx.fig2_seconds, 4) + " s";
  return {monotone && gd_worst < 1e-3 && ctx.fig2_seconds < 15.0 * 60.0, detail};
}

Outcome lazy_training(Context& ctx) {
  ExperimentConfig config = ctx.load("sweep_fig2.json");
  config.schedule.rule = StepRule::kTheorem1;
  const std::vector<int> widths = {64, 256, 1024, 4096};
  const int repeats = config.sweep.repeats;
  std::vector<double> ratio(widths.size() * static_cast<std::size_t>(repeats));
  parallel_for(
      ratio.size(),
      [&](std::size_t i) {
        ModelConfig c = config.model;
        c.k = widths[i / static_cast<std::size_t>(repeats)];
        const int rep = static_cast<int>(i % static_cast<std::size_t>(repeats));
        c.seed = cell_seed(config.sweep.master_seed, Method::kGda, c.k, rep);
        auto inst = std::make_shared<const ProblemInstance>(sample_problem(c));
        const GeneratorMap f(inst);
        const StepSchedule sched = resolve_schedule(config.schedule, c, Method::kGda);
        RunOptions options;
        options.stride = sched.T + 1;
        const GanState init = initial_state(*inst);
        const Trajectory traj = run_trajectory(f, inst->xbar, init, sched, options);
        ratio[i] = (traj.final_state.theta - init.theta).norm() / init.theta.norm();
      },
      ctx.workers);

  std::ostringstream csv;
  csv << "k,repeat,relative_drift\n";
  std::vector<double> medians;
  for (std::size_t w = 0; w < widths.size(); ++w) {
    std::vector<double> cell(ratio.begin() + static_cast<long>(w * repeats),
                             ratio.begin() + static_cast<long>((w + 1) * repeats));
    for (int r = 0; r < repeats; ++r) {
      csv << widths[w] << ',' << r << ',' << std::setprecision(17) << cell[r] << '\n';
    }
    std::sort(cell.begin(), cell.end());
    const std::size_t h = cell.size() / 2;
    medians.push_back(cell.size() % 2 ? cell[h] : 0.5 * (cell[h - 1] + cell[h]));
  }
  write_file(ctx.scratch / "lazy_training.csv", csv.str());
  bool decreasing = true;
  std::string detail = "median ||W_T - W0|| / ||W0||:";
  for (std::size_t w = 0; w < widths.size(); ++w) {
    detail += " k=" + std::to_string(widths[w]) + " " + fmt(medians[w]);
    if (w > 0 && !(medians[w] < medians[w - 1])) decreasing = false;
  }
  return {decreasing, detail};
}

Outcome bound_evaluators(Context& ctx) {
  const ExperimentConfig config = ctx.load("concentration.json");
  const ConcentrationSettings& q = config.concentration;
  ConcentrationQuery query;
  query.config = config.model;
  query.delta = q.delta;
  query.eta_lemma = q.eta_lemma;
  query.trials = q.trials;
  query.seed = q.seed;
  const BoundCheckResult smin = check_sigma_min(query);
  const BoundCheckResult opn = check_opnorm(query);
  query.delta = q.misfit_delta;
  const BoundCheckResult misfit = check_initial_misfit(query);
  auto part = [](const char* name, const BoundCheckResult& r) {
    return std::string(name) + " " + fmt(100.0 * (1.0 - r.violation_rate), 4) + "% hold";
  };
  return {smin.pass && opn.pass && misfit.pass,
          part("sigma_min", smin) + ", " + part("opnorm", opn) + ", " +
              part("initial misfit", misfit) + " (" + std::to_string(q.trials) + " trials each)"};
}

// Each pair is written twice and must match byte for byte.
struct RepeatCheck {
  std::string name;
  std::string first;
  std::string second;
};

Outcome reproducibility(Context& ctx) {
  std::vector<RepeatCheck> checks;

  // Sweep rows from the full multi-threaded sweep against a single-threaded
  // rerun of its k <= 128 cells.
  ExperimentConfig sweep_cfg = ctx.load("sweep_fig2.json");
  std::vector<int> small;
  for (int k : sweep_cfg.sweep.k_list) {
    if (k <= 128) small.push_back(k);
  }
  SweepResult subset;
  for (const auto& row : ctx.sweep().rows) {
    if (row.k <= 128) subset.rows.push_back(row);
  }
  sweep_cfg.sweep.k_list = small;
  const SweepResult rerun = sweep_k(sweep_cfg, 1);
  std::ostringstream a;
  std::ostringstream b;
  write_sweep_csv(a, subset);
  write_sweep_csv(b, rerun);
  checks.push_back({"sweep", a.str(), b.str()});

  ExperimentConfig run_cfg = ctx.load("run_gda.json");
  run_cfg.schedule.T = 2000;
  auto trajectory_csv = [&]() {
    std::ostringstream out;
    write_trajectory_csv(out, run_experiment(run_cfg).trajectory);
    return out.str();
  };
  checks.push_back({"trajectory", trajectory_csv(), trajectory_csv()});

  ExperimentConfig cert_cfg = ctx.load("certify_k16384.json");
  cert_cfg.model.k = 1024;
  cert_cfg.schedule.T = 2000;
  auto certify_files = [&](std::size_t workers) {
    set_threads(workers);
    const CertifyResult r = certify_run(cert_cfg);
    std::ostringstream env;
    write_envelope_csv(env, r.envelopes);
    return certify_report_json(r, &cert_cfg) + env.str();
  };
  checks.push_back({"certify", certify_files(1), certify_files(ctx.workers)});

  ExperimentConfig conc_cfg = ctx.load("concentration.json");
  conc_cfg.concentration.expectation_trials = 20000;
  conc_cfg.concentration.gram_trials = 2000;
  auto concentration_file = [&](std::size_t workers) {
    set_threads(workers);
    return concentration_report_json(run_concentration_suite(conc_cfg));
  };
  checks.push_back({"concentration", concentration_file(1), concentration_file(ctx.workers)});
  set_threads(ctx.workers);

  bool pass = true;
  std::string detail;
  for (const auto& c : checks) {
    const bool same = !c.first.empty() && c.first == c.second;
    pass = pass && same;
    detail += c.name + (same ? " identical" : " DIFFERS") + " (" +
              std::to_string(c.first.size()) + " bytes); ";
    write_file(ctx.scratch / ("repeat_" + c.name + "_a.txt"), c.first);
    write_file(ctx.scratch / ("repeat_" + c.name + "_b.txt"), c.second);
  }
  detail.resize(detail.size() - 2);
  return {pass, detail};
}

}  // namespace
}  // namespace gdalab::acceptance

int main(int argc, char** argv) {
  using namespace gdalab::acceptance;
  CLI::App app{"Acceptance checks for the gdalab library"};
  std::string configs = GDALAB_CONFIG_DIR;
  std::string scratch = "acceptance_results";
  std::vector<int> only;
  std::size_t workers = 4;
  app.add_option("--configs", configs, "Directory holding the experiment configurations");
  app.add_option("--scratch", scratch, "Directory for result files");
  app.add_option("--only", only, "Run only these criteria (1-12)");
  app.add_option("--threads", workers, "Worker threads for the heavy runs")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  Context ctx;
  ctx.configs = configs;
  ctx.scratch = scratch;
  ctx.workers = workers;
  fs::create_directories(ctx.scratch);
  set_threads(workers);

  const std::vector<Criterion> criteria = {
      {1, "Jacobian matches finite differences", [&] { return jacobian_oracle(ctx); }},
      {2, "Gram factorisation", [&] { return gram_factorisation(ctx); }},
      {3, "expectation formulas by Monte Carlo", [&] { return expectation_formulas(ctx); }},
      {4, "spectral radius closed form", [&] { return spectral_radius(ctx); }},
      {5, "stability constant", [&] { return stability_constant_check(ctx); }},
      {6, "linearised decay", [&] { return linearized_decay(ctx); }},
      {7, "GDA and GD residual envelopes at k=16384", [&] { return residual_envelopes(ctx); }},
      {8, "nonlinear run tracks its linearisation", [&] { return trajectory_tracking(ctx); }},
      {9, "final MSE against width sweep", [&] { return fig2_sweep(ctx); }},
      {10, "lazy training drift shrinks with width", [&] { return lazy_training(ctx); }},
      {11, "random-matrix bounds hold empirically", [&] { return bound_evaluators(ctx); }},
      {12, "repeat runs are byte-identical", [&] { return reproducibility(ctx); }},
  };

  const std::set<int> selected(only.begin(), only.end());
  int failures = 0;
  std::ostringstream summary;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Stopwatch clock;
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    std::ostringstream line;
    line << (out.pass ? "PASS" : "FAIL") << " [" << std::setw(2) << c.id << "] " << c.title
         << ": " << out.detail << " (" << std::fixed << std::setprecision(1) << clock.seconds()
         << " s)";
    std::cout << line.str() << std::endl;
    summary << line.str() << '\n';
    failures += out.pass ? 0 : 1;
  }
  write_file(ctx.scratch / "summary.txt", summary.str());
  return failures == 0 ? 0 : 1;
}
