#include "gdalab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <random>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "gdalab/errors.hpp"
#include "test_support.hpp"

namespace gdalab {
namespace {

using testing::ScratchDir;
using testing::read_file;
using testing::write_file;

std::string small_config_json() {
  return R"({
    "schema_version": 1,
    "model": {"m": 4, "d": 3, "k": 32, "n": 16, "seed": 5},
    "method": "gda",
    "schedule": {"rule": "theorem1", "eta_bar": 1.0, "mu": 1.0, "T": 50, "tol": 0},
    "run": {"stride": 10, "linearized_twin": true},
    "sweep": {"k_list": [4, 16], "repeats": 2, "methods": ["gda", "gd_closed_form"],
              "master_seed": 3},
    "certify": {"ball_samples": 4, "snapshot_stride": 10},
    "concentration": {"trials": 20, "expectation_trials": 2000, "gram_trials": 200,
                      "probe_samples": 4, "seed": 9}
  })";
}

ExperimentConfig small_config() { return parse_config(small_config_json()); }

TEST(CsvSchemaTest, GoldenHeaders) {
  EXPECT_STREQ(kTrajectoryCsvHeader, "t,residual_norm,d_norm,z_norm,w_drift_fro,lin_gap,wallclock_ns");
  EXPECT_STREQ(kSweepCsvHeader, "method,k,seed,final_mse,final_residual_norm,iters,diverged");
  EXPECT_STREQ(kEnvelopeCsvHeader,
               "t,z_norm,state_bound,lin_z_norm,lin_state_bound,lin_gap,gap_bound,"
               "uniform_gap_bound,param_gap,param_gap_bound,drift,drift_bound");
  EXPECT_EQ(kConfigSchemaVersion, 1);
  EXPECT_EQ(kReportSchemaVersion, 1);
}

TEST(ParseConfigTest, ReadsEverySection) {
  const ExperimentConfig c = small_config();
  EXPECT_EQ(c.model.m, 4);
  EXPECT_EQ(c.model.k, 32);
  EXPECT_EQ(c.model.seed, 5u);
  EXPECT_EQ(c.method, Method::kGda);
  EXPECT_EQ(c.schedule.rule, StepRule::kTheorem1);
  EXPECT_EQ(c.schedule.T, 50);
  EXPECT_EQ(c.run.stride, 10);
  EXPECT_TRUE(c.run.linearized_twin);
  EXPECT_EQ(c.sweep.k_list, (std::vector<int>{4, 16}));
  EXPECT_EQ(c.sweep.methods.size(), 2u);
  EXPECT_EQ(c.certify.ball_samples, 4);
  EXPECT_EQ(c.concentration.trials, 20);
}

TEST(ParseConfigTest, Defaults) {
  const ExperimentConfig c = parse_config(R"({"schema_version": 1})");
  EXPECT_EQ(c.model.m, 16);
  EXPECT_EQ(c.model.d, 8);
  EXPECT_EQ(c.model.n, 256);
  EXPECT_EQ(c.schedule.T, 20000);
  EXPECT_DOUBLE_EQ(c.schedule.tol, 1e-8);
  EXPECT_EQ(c.sweep.k_list, (std::vector<int>{4, 8, 16, 32, 64, 128, 256, 512, 1024}));
  EXPECT_EQ(c.sweep.repeats, 5);
  EXPECT_EQ(c.schedule.d_iter, 5);
}

TEST(ParseConfigTest, Errors) {
  EXPECT_THROW(parse_config("{"), ConfigError);
  EXPECT_THROW(parse_config("{}"), ConfigError);
  EXPECT_THROW(parse_config(R"({"schema_version": 2})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"schema_version": 1, "bogus": 1})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"schema_version": 1, "model": {"kk": 3}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"schema_version": 1, "model": {"k": "wide"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"schema_version": 1, "model": {"k": 1.5}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"schema_version": 1, "model": {"k": 0}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"schema_version": 1, "method": "adam"})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"schema_version": 1, "schedule": {"mu": 1.5}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"schema_version": 1, "schedule": {"rule": "explicit"}})"),
               ConfigError);
  EXPECT_THROW(parse_config(R"({"schema_version": 1, "sweep": {"k_list": []}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"schema_version": 1, "sweep": {"repeats": 0}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"schema_version": 1, "model": {"m": 2}, "target": {"mean": [1]}})"),
               ConfigError);
  EXPECT_THROW(
      parse_config(R"({"schema_version": 1, "method": "multi_ascent", "run": {"linearized_twin": true}})"),
      ConfigError);
}

TEST(ParseConfigTest, RoundTrip) {
  ExperimentConfig c = small_config();
  Vector mean(4);
  mean << 0.1, -2.0, 1.0 / 3.0, 7.0;
  c.target.mean = mean;
  c.outputs.sweep = "out/sweep.csv";
  const std::string text = config_to_json(c);
  const ExperimentConfig back = parse_config(text);
  EXPECT_EQ(config_to_json(back), text);
  ASSERT_TRUE(back.target.mean.has_value());
  EXPECT_TRUE(*back.target.mean == mean);
  EXPECT_EQ(back.outputs.sweep, "out/sweep.csv");
}

TEST(ParseConfigTest, LoadMissingFile) {
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(ResolveScheduleTest, RulesPickTheRightStep) {
  ExperimentConfig c = small_config();
  c.schedule.rule = StepRule::kAuto;
  EXPECT_DOUBLE_EQ(resolve_schedule(c.schedule, c.model, Method::kGda).eta,
                   theorem1_step_sizes(c.model, 1.0, 1.0).eta);
  EXPECT_DOUBLE_EQ(resolve_schedule(c.schedule, c.model, Method::kGdClosedForm).eta,
                   theorem2_step_size(c.model, 1.0));
  c.schedule.rule = StepRule::kExplicit;
  c.schedule.eta = 0.125;
  EXPECT_EQ(resolve_schedule(c.schedule, c.model, Method::kGda).eta, 0.125);
  for (StepRule r : {StepRule::kExplicit, StepRule::kTheorem1, StepRule::kTheorem2, StepRule::kAuto}) {
    EXPECT_EQ(step_rule_from_string(to_string(r)), r);
  }
}

TEST(TrajectoryCsvTest, ColumnsAndEmptyFields) {
  ExperimentConfig c = small_config();
  c.run.linearized_twin = false;
  const RunResult result = run_experiment(c);
  std::ostringstream out;
  write_trajectory_csv(out, result.trajectory);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kTrajectoryCsvHeader);
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 6);
    EXPECT_EQ(line.substr(line.size() - 2), ",,") << line;
  }
  EXPECT_EQ(rows, 6);  // t = 0, 10, ..., 50
}

TEST(TrajectoryCsvTest, TwinColumnAndDeterminism) {
  const ExperimentConfig c = small_config();
  std::ostringstream a, b;
  write_trajectory_csv(a, run_experiment(c).trajectory);
  write_trajectory_csv(b, run_experiment(c).trajectory);
  EXPECT_EQ(a.str(), b.str());
  std::istringstream in(a.str());
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  EXPECT_EQ(line.substr(line.size() - 3), ",0,");  // no gap at t = 0
}

TEST(SweepTest, CellSeedRule) {
  EXPECT_EQ(cell_seed(3, Method::kGda, 16, 1), 3u ^ stable_hash("gda/16/1"));
  EXPECT_NE(cell_seed(3, Method::kGda, 16, 1), cell_seed(3, Method::kGda, 16, 2));
}

TEST(SweepTest, ZeroIterationsReportInitialResidual) {
  ExperimentConfig c = small_config();
  c.schedule.T = 0;
  c.sweep.k_list = {8};
  c.sweep.repeats = 1;
  c.sweep.methods = {Method::kGdClosedForm};
  const SweepResult result = sweep_k(c, 1);
  ASSERT_EQ(result.rows.size(), 1u);
  const SweepRow& row = result.rows[0];
  EXPECT_EQ(row.iters, 0);
  // Rebuild the cell's instance from the documented seeding rule.
  ModelConfig model = c.model;
  model.k = 8;
  model.seed = cell_seed(c.sweep.master_seed, Method::kGdClosedForm, 8, 0);
  Rng master(c.sweep.master_seed);
  Vector mu(c.model.m);
  for (int j = 0; j < c.model.m; ++j) mu(j) = master.normal();
  const ProblemInstance inst = sample_problem(model, gaussian_targets(mu));
  const double r0 = residual(GeneratorParams{inst.W0}, inst).norm();
  EXPECT_DOUBLE_EQ(row.final_mse, r0 * r0);
  EXPECT_FALSE(row.diverged);
}

TEST(SweepTest, OneRowPerCellInCanonicalOrder) {
  const SweepResult result = sweep_k(small_config(), 2);
  ASSERT_EQ(result.rows.size(), 8u);
  std::vector<SweepRow> sorted = result.rows;
  canonical_sort(sorted);
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    EXPECT_EQ(sorted[i].seed, result.rows[i].seed);
  }
  EXPECT_EQ(result.rows.front().method, Method::kGdClosedForm);  // "gd_closed_form" < "gda"
}

TEST(SweepTest, IndependentOfWorkerCountAndOrder) {
  const ExperimentConfig c = small_config();
  std::ostringstream one, three;
  write_sweep_csv(one, sweep_k(c, 1));
  write_sweep_csv(three, sweep_k(c, 3));
  EXPECT_EQ(one.str(), three.str());

  SweepResult shuffled = sweep_k(c, 1);
  std::mt19937 g(1);
  std::shuffle(shuffled.rows.begin(), shuffled.rows.end(), g);
  canonical_sort(shuffled.rows);
  std::ostringstream again;
  write_sweep_csv(again, shuffled);
  EXPECT_EQ(again.str(), one.str());
}

TEST(SweepTest, DivergenceRecordedInRow) {
  ExperimentConfig c = small_config();
  c.schedule.rule = StepRule::kExplicit;
  c.schedule.eta = 1e8;
  c.schedule.T = 2000;
  c.sweep.methods = {Method::kGdClosedForm};
  c.sweep.k_list = {16};
  c.sweep.repeats = 1;
  const SweepResult result = sweep_k(c, 1);
  ASSERT_EQ(result.rows.size(), 1u);
  EXPECT_TRUE(result.rows[0].diverged);
  EXPECT_LT(result.rows[0].iters, 2000);
}

TEST(SweepTest, CsvRoundTripAndMedians) {
  SweepResult r;
  for (int k : {4, 8}) {
    for (int i = 0; i < 3; ++i) {
      SweepRow row;
      row.method = Method::kMultiAscent;
      row.k = k;
      row.seed = static_cast<std::uint64_t>(10 * k + i);
      row.final_mse = (k == 4 ? 1.0 : 0.1) * (i + 1);
      row.final_residual_norm = std::sqrt(row.final_mse);
      row.iters = 100;
      r.rows.push_back(row);
    }
  }
  std::ostringstream out;
  write_sweep_csv(out, r);
  std::istringstream in(out.str());
  const SweepResult back = read_sweep_csv(in);
  ASSERT_EQ(back.rows.size(), 6u);
  std::ostringstream again;
  write_sweep_csv(again, back);
  EXPECT_EQ(again.str(), out.str());

  const auto medians = median_by_k(back, Method::kMultiAscent);
  ASSERT_EQ(medians.size(), 2u);
  EXPECT_DOUBLE_EQ(medians[0].median_final_mse, 2.0);
  EXPECT_DOUBLE_EQ(medians[1].median_final_mse, 0.2);
  EXPECT_TRUE(median_by_k(back, Method::kGda).empty());

  std::istringstream bad("method,k\n");
  EXPECT_THROW(read_sweep_csv(bad), ConfigError);
}

TEST(CertifyRunTest, AffineMapHasZeroGaps) {
  Rng rng(3);
  const Matrix M = testing::gaussian_matrix(rng, 3, 9);
  const AffineMap f(M, testing::gaussian_vector(rng, 3));
  const Vector y = testing::gaussian_vector(rng, 3);
  const GanState init{testing::gaussian_vector(rng, 9), Vector::Zero(3), 0};
  StepSchedule sched;
  sched.mu = 1.0;
  sched.eta = 0.5 / (8.0 * std::pow(Eigen::JacobiSVD<Matrix>(M).singularValues()(0), 2));
  sched.T = 300;
  sched.tol = 0.0;
  CertifySettings settings;
  settings.ball_samples = 8;
  settings.snapshot_stride = 25;
  const CertifyResult result = certify_run(f, y, init, sched, RunSettings{}, settings);
  EXPECT_TRUE(result.report.certified());
  EXPECT_TRUE(result.summary.all_ok());
  for (const auto& row : result.envelopes) {
    EXPECT_LE(row.lin_gap, 1e-12 * (1.0 + row.z_norm));
    EXPECT_LE(row.param_gap, 1e-12);
    EXPECT_LE(row.z_norm, row.state_bound + 1e-12);
  }
}

TEST(CertifyRunTest, ReportJsonCarriesConfigAndRoundTrips) {
  const ExperimentConfig c = small_config();
  const CertifyResult result = certify_run(c);
  const std::string text = certify_report_json(result, &c);
  const auto doc = nlohmann::json::parse(text);
  EXPECT_EQ(doc.at("schema_version").get<int>(), kReportSchemaVersion);
  EXPECT_EQ(doc.at("certified").get<bool>(), result.report.certified());
  EXPECT_EQ(parse_config(doc.at("config").dump()).model.k, 32);
  const SpectralReport back = spectral_report_from_json(doc.at("spectral").dump());
  EXPECT_EQ(spectral_report_to_json(back), spectral_report_to_json(result.report));
  EXPECT_EQ(back.alpha, result.report.alpha);
}

TEST(EnvelopeTest, MissingTwinFailsTheComparison) {
  EnvelopeRow row;
  row.z_norm = 1.0;
  row.state_bound = 2.0;
  row.lin_z_norm = std::nan("");
  row.lin_gap = std::nan("");
  row.param_gap = std::nan("");
  const EnvelopeSummary s = summarize_envelopes({row});
  EXPECT_TRUE(s.state_ok);
  EXPECT_FALSE(s.gap_ok);
  EXPECT_FALSE(s.all_ok());
}

TEST(EnvelopeTest, CsvLeavesNanCellsEmpty) {
  EnvelopeRow row;
  row.t = 3;
  row.lin_gap = std::nan("");
  std::ostringstream out;
  write_envelope_csv(out, {row});
  EXPECT_NE(out.str().find("\n3,0,0,0,0,,0,"), std::string::npos) << out.str();
}

TEST(ConcentrationSuiteTest, SmallSuiteRunsAndSerialises) {
  ExperimentConfig c = small_config();
  c.model.k = 256;
  const ConcentrationSuite suite = run_concentration_suite(c);
  EXPECT_EQ(suite.sigma_min.trials, 20);
  const auto doc = nlohmann::json::parse(concentration_report_json(suite));
  EXPECT_TRUE(doc.contains("sigma_min"));
  EXPECT_TRUE(doc.contains("perturbation"));
}

TEST(OracleCheckTest, PassesOnDefaultInstance) {
  const OracleCheck check = run_oracle_check(small_config());
  EXPECT_TRUE(check.pass);
  EXPECT_LE(check.max_rel_error, 1e-5);
  EXPECT_LE(check.gram_rel_error, 1e-10);
  EXPECT_GT(check.reliable_columns, 0);
  EXPECT_TRUE(nlohmann::json::parse(oracle_check_json(check)).at("pass").get<bool>());
}

TEST(PlotScriptTest, MissingFileThrows) {
  EXPECT_THROW(emit_plot_script("/nonexistent/sweep.csv", {}), ConfigError);
  ScratchDir dir("plot_missing");
  write_file(dir / "sweep.csv", "");
  EXPECT_THROW(emit_plot_script(dir / "sweep.csv", {dir / "nope.csv"}), ConfigError);
}

TEST(PlotScriptTest, EmptySweepGivesLabelledEmptyAxes) {
  ScratchDir dir("plot_empty");
  write_file(dir / "sweep.csv", "");
  const std::string script = emit_plot_script(dir / "sweep.csv", {});
  EXPECT_NE(script.find("METHODS = []"), std::string::npos);
  EXPECT_NE(script.find("set_xlabel(\"hidden width k\")"), std::string::npos);
  EXPECT_NE(script.find("set_ylabel(\"final MSE\")"), std::string::npos);
}

TEST(PlotScriptTest, ThreeMethodsThreePanelsAndDeterministic) {
  ScratchDir dir("plot_three");
  SweepResult r;
  for (Method m : {Method::kGda, Method::kGdClosedForm, Method::kMultiAscent}) {
    SweepRow row;
    row.method = m;
    row.k = 4;
    row.final_mse = 1.0;
    r.rows.push_back(row);
  }
  std::ostringstream csv;
  write_sweep_csv(csv, r);
  write_file(dir / "sweep.csv", csv.str());
  write_file(dir / "traj.csv", std::string(kTrajectoryCsvHeader) + "\n0,1,0,1,0,,\n");
  const std::string a = emit_plot_script(dir / "sweep.csv", {dir / "traj.csv"});
  const std::string b = emit_plot_script(dir / "sweep.csv", {dir / "traj.csv"});
  EXPECT_EQ(a, b);
  EXPECT_NE(a.find("METHODS = [\"gda\", \"gd_closed_form\", \"multi_ascent\"]"), std::string::npos);
  EXPECT_NE(a.find("residual_vs_iteration.png"), std::string::npos);
}

#ifdef GDALAB_CLI_PATH

int run_cli(const std::string& args) {
  const std::string cmd = std::string(GDALAB_CLI_PATH) + " " + args + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(CliTest, RunWritesTrajectoryAndIsDeterministic) {
  ScratchDir dir("cli_run");
  write_file(dir / "cfg.json", small_config_json());
  ASSERT_EQ(run_cli("run --config " + (dir / "cfg.json").string() + " --out " +
                    (dir / "a.csv").string()),
            0);
  ASSERT_EQ(run_cli("run --config " + (dir / "cfg.json").string() + " --out " +
                    (dir / "b.csv").string()),
            0);
  const std::string a = read_file(dir / "a.csv");
  EXPECT_EQ(a.substr(0, a.find('\n')), kTrajectoryCsvHeader);
  EXPECT_EQ(a, read_file(dir / "b.csv"));
}

TEST(CliTest, SweepWritesOneRowPerCell) {
  ScratchDir dir("cli_sweep");
  write_file(dir / "cfg.json", small_config_json());
  ASSERT_EQ(run_cli("sweep --threads 2 --config " + (dir / "cfg.json").string() + " --out " +
                    (dir / "s.csv").string()),
            0);
  std::istringstream in(read_file(dir / "s.csv"));
  EXPECT_EQ(read_sweep_csv(in).rows.size(), 8u);
}

TEST(CliTest, ExitCodes) {
  ScratchDir dir("cli_codes");
  write_file(dir / "bad.json", R"({"schema_version": 1, "model": {"k": -1}})");
  EXPECT_EQ(run_cli("run --config " + (dir / "bad.json").string()), 2);
  write_file(dir / "broken.json", "{ not json");
  EXPECT_EQ(run_cli("sweep --config " + (dir / "broken.json").string()), 2);
  EXPECT_EQ(run_cli("run --config " + (dir / "missing.json").string()), 2);
  EXPECT_EQ(run_cli("no-such-command"), 2);
  EXPECT_EQ(run_cli("plot-script --sweep " + (dir / "missing.csv").string()), 2);

  write_file(dir / "diverge.json", R"({"schema_version": 1,
    "model": {"m": 3, "d": 2, "k": 16, "n": 8, "seed": 1}, "method": "gd_closed_form",
    "schedule": {"rule": "explicit", "eta": 1e8, "T": 5000, "tol": 0}})");
  EXPECT_EQ(run_cli("run --config " + (dir / "diverge.json").string() + " --out " +
                    (dir / "partial.csv").string()),
            1);
  EXPECT_EQ(read_file(dir / "partial.csv").rfind(kTrajectoryCsvHeader, 0), 0u);
}

TEST(CliTest, PlotScriptSubcommand) {
  ScratchDir dir("cli_plot");
  write_file(dir / "s.csv", "");
  ASSERT_EQ(run_cli("plot-script --sweep " + (dir / "s.csv").string() + " --out " +
                    (dir / "plot.py").string()),
            0);
  EXPECT_EQ(read_file(dir / "plot.py"), emit_plot_script(dir / "s.csv", {}));
}

#endif

}  // namespace
}  // namespace gdalab
