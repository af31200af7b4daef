#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gdalab/errors.hpp"
#include "gdalab/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDiverged = 1;
constexpr int kExitConfig = 2;
constexpr int kExitFailure = 3;

// Opens `path` for writing, or returns std::cout when it is empty or "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    if (const auto parent = std::filesystem::path(path).parent_path(); !parent.empty()) {
      std::filesystem::create_directories(parent);
    }
    file_.open(path, std::ios::binary);
    if (!file_) throw gdalab::ConfigError("cannot open output file " + path);
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

std::string pick(const std::string& flag, const std::string& from_config) {
  return flag.empty() ? from_config : flag;
}

void apply_threads(int threads) {
  if (threads > 0) ::setenv("GDALAB_THREADS", std::to_string(threads).c_str(), 1);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gdalab: gradient descent/ascent experiments for one-hidden-layer GANs"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::string envelope_path;
  std::string sweep_path;
  std::vector<std::string> trajectory_paths;
  bool wallclock = false;
  int threads = 0;

  auto* run = app.add_subcommand("run", "Run one trajectory and write its CSV");
  run->add_option("--config", config_path, "JSON configuration")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_path, "Trajectory CSV (default: outputs.trajectory or stdout)");
  run->add_flag("--wallclock", wallclock, "Fill the wallclock_ns column");

  auto* sweep = app.add_subcommand("sweep", "Final MSE over hidden widths, methods and seeds");
  sweep->add_option("--config", config_path, "JSON configuration")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out_path, "Sweep CSV (default: outputs.sweep or stdout)");
  sweep->add_option("--threads", threads, "Worker threads (overrides GDALAB_THREADS)");

  auto* cert = app.add_subcommand("certify", "GDA with its linearised twin plus the certificate");
  cert->add_option("--config", config_path, "JSON configuration")->required()->check(CLI::ExistingFile);
  cert->add_option("--out", out_path, "JSON report (default: outputs.report or stdout)");
  cert->add_option("--envelopes", envelope_path, "Envelope comparison CSV");
  cert->add_option("--threads", threads, "Worker threads for the Jacobian probes");

  auto* conc = app.add_subcommand("concentration", "Monte-Carlo checks of the random-matrix bounds");
  conc->add_option("--config", config_path, "JSON configuration")->required()->check(CLI::ExistingFile);
  conc->add_option("--out", out_path, "JSON report (default: outputs.report or stdout)");
  conc->add_option("--threads", threads, "Worker threads");

  auto* oracle = app.add_subcommand("oracle-check", "Finite-difference and Gram checks of J");
  oracle->add_option("--config", config_path, "JSON configuration")->required()->check(CLI::ExistingFile);
  oracle->add_option("--out", out_path, "JSON report (default: stdout)");

  auto* plot = app.add_subcommand("plot-script", "Write a matplotlib script for result CSVs");
  plot->add_option("--sweep", sweep_path, "Sweep CSV")->required();
  plot->add_option("--trajectory", trajectory_paths, "Trajectory CSVs");
  plot->add_option("--out", out_path, "Script path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  apply_threads(threads);

  try {
    if (*plot) {
      std::vector<std::filesystem::path> trajs(trajectory_paths.begin(), trajectory_paths.end());
      const std::string script = gdalab::emit_plot_script(sweep_path, trajs);
      Output out(out_path);
      out.stream() << script;
      return kExitOk;
    }

    const gdalab::ExperimentConfig config = gdalab::load_config(config_path);

    if (*run) {
      gdalab::RunResult result;
      try {
        result = gdalab::run_experiment(config);
      } catch (const gdalab::TrajectoryDivergence& e) {
        Output out(pick(out_path, config.outputs.trajectory));
        gdalab::write_trajectory_csv(out.stream(), e.partial(), wallclock || config.run.wallclock);
        throw;
      }
      Output out(pick(out_path, config.outputs.trajectory));
      gdalab::write_trajectory_csv(out.stream(), result.trajectory,
                                   wallclock || config.run.wallclock);
      std::cerr << "run: " << gdalab::to_string(config.method) << " eta=" << result.schedule.eta
                << " mu=" << result.schedule.mu << " iterations=" << result.trajectory.iterations
                << " final_residual=" << result.trajectory.records.back().residual_norm
                << (result.trajectory.converged ? " (converged)" : "") << '\n';
    } else if (*sweep) {
      const gdalab::SweepResult result = gdalab::sweep_k(config);
      Output out(pick(out_path, config.outputs.sweep));
      gdalab::write_sweep_csv(out.stream(), result);
      for (const auto method : config.sweep.methods) {
        std::cerr << gdalab::to_string(method) << ":";
        for (const auto& p : gdalab::median_by_k(result, method)) {
          std::cerr << " k=" << p.k << " median_mse=" << p.median_final_mse;
        }
        std::cerr << '\n';
      }
    } else if (*cert) {
      const gdalab::CertifyResult result = gdalab::certify_run(config);
      Output out(pick(out_path, config.outputs.report));
      out.stream() << gdalab::certify_report_json(result, &config);
      const std::string env_path = pick(envelope_path, config.outputs.envelopes);
      if (!env_path.empty()) {
        Output env(env_path);
        gdalab::write_envelope_csv(env.stream(), result.envelopes);
      }
      std::cerr << "certify: certified=" << (result.report.certified() ? "yes" : "no")
                << " envelopes=" << (result.summary.all_ok() ? "hold" : "violated") << '\n';
    } else if (*conc) {
      const gdalab::ConcentrationSuite suite = gdalab::run_concentration_suite(config);
      Output out(pick(out_path, config.outputs.report));
      out.stream() << gdalab::concentration_report_json(suite);
      std::cerr << "concentration: " << (suite.all_pass() ? "all checks pass" : "some checks fail")
                << '\n';
    } else if (*oracle) {
      const gdalab::OracleCheck check = gdalab::run_oracle_check(config);
      Output out(out_path);
      out.stream() << gdalab::oracle_check_json(check);
      if (!check.pass) return kExitFailure;
    }
    return kExitOk;
  } catch (const gdalab::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}
