#include "gdalab/harness.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gdalab/errors.hpp"
#include "gdalab/oracles.hpp"
#include "gdalab/rng.hpp"

namespace gdalab {
namespace {

using nlohmann::json;

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Reads the keys of one JSON object and rejects anything left unread.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(path_ + " must be a JSON object");
  }

  ~Section() = default;

  bool has(const std::string& key) {
    seen_.insert(key);
    return node_.contains(key) && !node_.at(key).is_null();
  }

  const json& at(const std::string& key) {
    seen_.insert(key);
    return node_.at(key);
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_number()) throw ConfigError(where(key) + " must be a number");
    return v.get<double>();
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) {
    if (!has(key)) return fallback;
    return as_integer(node_.at(key), where(key));
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    const std::int64_t x = as_integer(v, where(key));
    if (x < 0) throw ConfigError(where(key) + " must be >= 0");
    return static_cast<std::uint64_t>(x);
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_boolean()) throw ConfigError(where(key) + " must be true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_string()) throw ConfigError(where(key) + " must be a string");
    return v.get<std::string>();
  }

  void finish() const {
    for (const auto& item : node_.items()) {
      if (!seen_.count(item.key())) {
        throw ConfigError("unknown key '" + item.key() + "' in " + path_);
      }
    }
  }

  std::string where(const std::string& key) const { return path_ + "." + key; }

  static std::int64_t as_integer(const json& v, const std::string& where) {
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_number_float()) {
      const double x = v.get<double>();
      if (std::isfinite(x) && std::floor(x) == x && std::abs(x) < 9.0e15) {
        return static_cast<std::int64_t>(x);
      }
    }
    throw ConfigError(where + " must be an integer");
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

int to_int(std::int64_t x, const std::string& where) {
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
    throw ConfigError(where + " is out of range");
  }
  return static_cast<int>(x);
}

Method parse_method(const json& v, const std::string& where) {
  if (!v.is_string()) throw ConfigError(where + " must be a method name");
  return method_from_string(v.get<std::string>());
}

// JSON has no infinities; non-finite doubles are written as null and read
// back as +inf.
json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

double number_from(const json& node, const std::string& key) {
  if (!node.contains(key)) throw ConfigError("report is missing '" + key + "'");
  const json& v = node.at(key);
  if (v.is_null()) return std::numeric_limits<double>::infinity();
  if (!v.is_number()) throw ConfigError("report field '" + key + "' must be a number");
  return v.get<double>();
}

json scope_to_json(const ProbeScope& s) {
  return json{{"beta_hat", number_or_null(s.beta_hat)},
              {"eps_hat", number_or_null(s.eps_hat)},
              {"R", number_or_null(s.R)},
              {"probes", s.probes},
              {"ratio_ok", s.ratio_ok},
              {"sep_ok", s.sep_ok},
              {"radius_ok", s.radius_ok}};
}

ProbeScope scope_from_json(const json& j) {
  ProbeScope s;
  s.beta_hat = number_from(j, "beta_hat");
  s.eps_hat = number_from(j, "eps_hat");
  s.R = number_from(j, "R");
  s.probes = j.at("probes").get<int>();
  s.ratio_ok = j.at("ratio_ok").get<bool>();
  s.sep_ok = j.at("sep_ok").get<bool>();
  s.radius_ok = j.at("radius_ok").get<bool>();
  return s;
}

json report_json(const SpectralReport& r) {
  return json{{"eta", r.eta},
              {"mu", r.mu},
              {"alpha", r.alpha},
              {"beta0", r.beta0},
              {"gamma", number_or_null(r.gamma)},
              {"rho", r.rho},
              {"z0_norm", r.z0_norm},
              {"pinv_z0_norm", r.pinv_z0_norm},
              {"max_drift", r.max_drift},
              {"path", scope_to_json(r.path)},
              {"ball", scope_to_json(r.ball)}};
}

json check_json(const BoundCheckResult& c) {
  return json{{"formula_value", c.formula_value},
              {"empirical_mean", c.empirical_mean},
              {"empirical_std_error", c.empirical_std_error},
              {"empirical_max", c.empirical_max},
              {"violation_rate", c.violation_rate},
              {"trials", c.trials},
              {"pass", c.pass}};
}

json matrix_json(const Matrix& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(row);
  }
  return rows;
}

json config_json(const ExperimentConfig& c) {
  json methods = json::array();
  for (Method m : c.sweep.methods) methods.push_back(to_string(m));
  json target = json::object();
  if (c.target.mean) {
    target["mean"] = std::vector<double>(c.target.mean->data(),
                                         c.target.mean->data() + c.target.mean->size());
  }
  json schedule{{"rule", to_string(c.schedule.rule)}, {"mu", c.schedule.mu},
                {"eta_bar", c.schedule.eta_bar},      {"d_iter", c.schedule.d_iter},
                {"T", c.schedule.T},                  {"tol", c.schedule.tol}};
  if (c.schedule.rule == StepRule::kExplicit) schedule["eta"] = c.schedule.eta;
  json outputs = json::object();
  if (!c.outputs.trajectory.empty()) outputs["trajectory"] = c.outputs.trajectory;
  if (!c.outputs.sweep.empty()) outputs["sweep"] = c.outputs.sweep;
  if (!c.outputs.report.empty()) outputs["report"] = c.outputs.report;
  if (!c.outputs.envelopes.empty()) outputs["envelopes"] = c.outputs.envelopes;
  const ConcentrationSettings& q = c.concentration;
  return json{
      {"schema_version", kConfigSchemaVersion},
      {"model",
       {{"m", c.model.m},
        {"d", c.model.d},
        {"k", c.model.k},
        {"n", c.model.n},
        {"sigma_v", c.model.sigma_v},
        {"sigma_w", c.model.sigma_w},
        {"sigma_z", c.model.sigma_z},
        {"seed", c.model.seed}}},
      {"target", target},
      {"method", to_string(c.method)},
      {"schedule", schedule},
      {"run",
       {{"stride", c.run.stride},
        {"linearized_twin", c.run.linearized_twin},
        {"wallclock", c.run.wallclock}}},
      {"sweep",
       {{"k_list", c.sweep.k_list},
        {"repeats", c.sweep.repeats},
        {"methods", methods},
        {"master_seed", c.sweep.master_seed}}},
      {"certify",
       {{"ball_samples", c.certify.ball_samples},
        {"probe_seed", c.certify.probe_seed},
        {"snapshot_stride", c.certify.snapshot_stride}}},
      {"concentration",
       {{"delta", q.delta},
        {"misfit_delta", q.misfit_delta},
        {"eta_lemma", q.eta_lemma},
        {"trials", q.trials},
        {"expectation_trials", q.expectation_trials},
        {"gram_trials", q.gram_trials},
        {"radius_scale", q.radius_scale},
        {"probe_samples", q.probe_samples},
        {"seed", q.seed}}},
      {"outputs", outputs}};
}

double final_residual_norm(const SmoothMap& f, const Vector& y, const GanState& state) {
  return (f.evaluate(state.theta) - y).norm();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string python_string(const std::string& s) { return json(s).dump(); }

}  // namespace

std::string to_string(StepRule rule) {
  switch (rule) {
    case StepRule::kExplicit: return "explicit";
    case StepRule::kTheorem1: return "theorem1";
    case StepRule::kTheorem2: return "theorem2";
    case StepRule::kAuto: return "auto";
  }
  return "unknown";
}

StepRule step_rule_from_string(const std::string& name) {
  if (name == "explicit") return StepRule::kExplicit;
  if (name == "theorem1") return StepRule::kTheorem1;
  if (name == "theorem2") return StepRule::kTheorem2;
  if (name == "auto") return StepRule::kAuto;
  throw ConfigError("unknown step rule '" + name +
                    "' (expected explicit, theorem1, theorem2, auto)");
}

StepSchedule resolve_schedule(const ScheduleSpec& spec, const ModelConfig& model, Method method) {
  StepSchedule s;
  s.mu = spec.mu;
  s.eta_bar = spec.eta_bar;
  s.d_iter = spec.d_iter;
  s.T = spec.T;
  s.tol = spec.tol;
  StepRule rule = spec.rule;
  if (rule == StepRule::kAuto) {
    rule = method == Method::kGdClosedForm ? StepRule::kTheorem2 : StepRule::kTheorem1;
  }
  switch (rule) {
    case StepRule::kExplicit: s.eta = spec.eta; break;
    case StepRule::kTheorem1: s.eta = theorem1_step_sizes(model, spec.eta_bar, spec.mu).eta; break;
    case StepRule::kTheorem2: s.eta = theorem2_step_size(model, spec.eta_bar); break;
    case StepRule::kAuto: break;
  }
  s.validate();
  return s;
}

void ExperimentConfig::validate() const {
  model.validate();
  if (target.mean && target.mean->size() != model.m) {
    throw ConfigError("target.mean must have length m = " + std::to_string(model.m));
  }
  if (schedule.rule == StepRule::kExplicit && !(schedule.eta > 0.0)) {
    throw ConfigError("schedule.eta must be > 0 for the explicit rule");
  }
  if (!(schedule.mu > 0.0 && schedule.mu <= 1.0)) throw ConfigError("schedule.mu must lie in (0, 1]");
  if (!(schedule.eta_bar > 0.0 && schedule.eta_bar <= 1.0)) {
    throw ConfigError("schedule.eta_bar must lie in (0, 1]");
  }
  if (schedule.d_iter < 1) throw ConfigError("schedule.d_iter must be >= 1");
  if (schedule.T < 0) throw ConfigError("schedule.T must be >= 0");
  if (!(schedule.tol >= 0.0)) throw ConfigError("schedule.tol must be >= 0");
  if (run.stride < 1) throw ConfigError("run.stride must be >= 1");
  if (run.linearized_twin && method != Method::kGda) {
    throw ConfigError("run.linearized_twin requires method gda");
  }
  if (sweep.k_list.empty()) throw ConfigError("sweep.k_list must not be empty");
  for (int k : sweep.k_list) {
    if (k < 1) throw ConfigError("sweep.k_list entries must be >= 1");
  }
  if (sweep.repeats < 1) throw ConfigError("sweep.repeats must be >= 1");
  if (sweep.methods.empty()) throw ConfigError("sweep.methods must not be empty");
  if (certify.ball_samples < 0) throw ConfigError("certify.ball_samples must be >= 0");
  if (certify.snapshot_stride < 1) throw ConfigError("certify.snapshot_stride must be >= 1");
  const ConcentrationSettings& q = concentration;
  if (!(q.delta >= 0.0 && q.delta <= 1.5)) throw ConfigError("concentration.delta must lie in [0, 1.5]");
  if (!(q.misfit_delta >= 0.0 && q.misfit_delta <= 3.0)) {
    throw ConfigError("concentration.misfit_delta must lie in [0, 3]");
  }
  if (!(q.eta_lemma > 0.0)) throw ConfigError("concentration.eta_lemma must be > 0");
  if (q.trials < 1 || q.expectation_trials < 1 || q.gram_trials < 1 || q.probe_samples < 1) {
    throw ConfigError("concentration trial counts must be >= 1");
  }
  if (!(q.radius_scale >= 0.0)) throw ConfigError("concentration.radius_scale must be >= 0");
}

ExperimentConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Section top(root, "config");
  if (!top.has("schema_version")) throw ConfigError("config.schema_version is required");
  const std::int64_t version = top.integer("schema_version", 0);
  if (version != kConfigSchemaVersion) {
    throw ConfigError("unsupported schema_version " + std::to_string(version) + " (expected " +
                      std::to_string(kConfigSchemaVersion) + ")");
  }

  if (top.has("model")) {
    Section s(top.at("model"), "model");
    c.model.m = to_int(s.integer("m", c.model.m), "model.m");
    c.model.d = to_int(s.integer("d", c.model.d), "model.d");
    c.model.k = to_int(s.integer("k", c.model.k), "model.k");
    c.model.n = to_int(s.integer("n", c.model.n), "model.n");
    c.model.sigma_v = s.number("sigma_v", c.model.sigma_v);
    c.model.sigma_w = s.number("sigma_w", c.model.sigma_w);
    c.model.sigma_z = s.number("sigma_z", c.model.sigma_z);
    c.model.seed = s.unsigned_integer("seed", c.model.seed);
    s.finish();
  }
  if (top.has("target")) {
    Section s(top.at("target"), "target");
    if (s.has("mean")) {
      const json& mean = s.at("mean");
      if (!mean.is_array()) throw ConfigError("target.mean must be an array of numbers");
      Vector v(static_cast<Eigen::Index>(mean.size()));
      for (std::size_t i = 0; i < mean.size(); ++i) {
        if (!mean[i].is_number()) throw ConfigError("target.mean must be an array of numbers");
        v(static_cast<Eigen::Index>(i)) = mean[i].get<double>();
      }
      c.target.mean = v;
    }
    s.finish();
  }
  if (top.has("method")) c.method = parse_method(top.at("method"), "config.method");
  if (top.has("schedule")) {
    Section s(top.at("schedule"), "schedule");
    c.schedule.rule = step_rule_from_string(s.string("rule", to_string(c.schedule.rule)));
    c.schedule.eta = s.number("eta", c.schedule.eta);
    c.schedule.mu = s.number("mu", c.schedule.mu);
    c.schedule.eta_bar = s.number("eta_bar", c.schedule.eta_bar);
    c.schedule.d_iter = to_int(s.integer("d_iter", c.schedule.d_iter), "schedule.d_iter");
    c.schedule.T = s.integer("T", c.schedule.T);
    c.schedule.tol = s.number("tol", c.schedule.tol);
    s.finish();
  }
  if (top.has("run")) {
    Section s(top.at("run"), "run");
    c.run.stride = s.integer("stride", c.run.stride);
    c.run.linearized_twin = s.boolean("linearized_twin", c.run.linearized_twin);
    c.run.wallclock = s.boolean("wallclock", c.run.wallclock);
    s.finish();
  }
  if (top.has("sweep")) {
    Section s(top.at("sweep"), "sweep");
    if (s.has("k_list")) {
      const json& ks = s.at("k_list");
      if (!ks.is_array()) throw ConfigError("sweep.k_list must be an array of integers");
      c.sweep.k_list.clear();
      for (const json& k : ks) {
        c.sweep.k_list.push_back(to_int(Section::as_integer(k, "sweep.k_list"), "sweep.k_list"));
      }
    }
    c.sweep.repeats = to_int(s.integer("repeats", c.sweep.repeats), "sweep.repeats");
    if (s.has("methods")) {
      const json& ms = s.at("methods");
      if (!ms.is_array()) throw ConfigError("sweep.methods must be an array of method names");
      c.sweep.methods.clear();
      for (const json& m : ms) c.sweep.methods.push_back(parse_method(m, "sweep.methods"));
    }
    c.sweep.master_seed = s.unsigned_integer("master_seed", c.sweep.master_seed);
    s.finish();
  }
  if (top.has("certify")) {
    Section s(top.at("certify"), "certify");
    c.certify.ball_samples =
        to_int(s.integer("ball_samples", c.certify.ball_samples), "certify.ball_samples");
    c.certify.probe_seed = s.unsigned_integer("probe_seed", c.certify.probe_seed);
    c.certify.snapshot_stride = s.integer("snapshot_stride", c.certify.snapshot_stride);
    s.finish();
  }
  if (top.has("concentration")) {
    Section s(top.at("concentration"), "concentration");
    ConcentrationSettings& q = c.concentration;
    q.delta = s.number("delta", q.delta);
    q.misfit_delta = s.number("misfit_delta", q.misfit_delta);
    q.eta_lemma = s.number("eta_lemma", q.eta_lemma);
    q.trials = to_int(s.integer("trials", q.trials), "concentration.trials");
    q.expectation_trials = to_int(s.integer("expectation_trials", q.expectation_trials),
                                  "concentration.expectation_trials");
    q.gram_trials = to_int(s.integer("gram_trials", q.gram_trials), "concentration.gram_trials");
    q.radius_scale = s.number("radius_scale", q.radius_scale);
    q.probe_samples =
        to_int(s.integer("probe_samples", q.probe_samples), "concentration.probe_samples");
    q.seed = s.unsigned_integer("seed", q.seed);
    s.finish();
  }
  if (top.has("outputs")) {
    Section s(top.at("outputs"), "outputs");
    c.outputs.trajectory = s.string("trajectory", "");
    c.outputs.sweep = s.string("sweep", "");
    c.outputs.report = s.string("report", "");
    c.outputs.envelopes = s.string("envelopes", "");
    s.finish();
  }
  top.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string config_to_json(const ExperimentConfig& config) {
  return config_json(config).dump(2) + "\n";
}

ProblemInstance make_instance(const ExperimentConfig& config) {
  config.validate();
  if (config.target.mean) return sample_problem(config.model, gaussian_targets(*config.target.mean));
  return sample_problem(config.model, random_mean_gaussian_targets());
}

RunResult run_experiment(const ExperimentConfig& config) {
  auto inst = std::make_shared<const ProblemInstance>(make_instance(config));
  const GeneratorMap f(inst);
  RunResult out;
  out.schedule = resolve_schedule(config.schedule, config.model, config.method);
  RunOptions options;
  options.method = config.method;
  options.linearized_twin = config.run.linearized_twin;
  options.stride = config.run.stride;
  options.wallclock = config.run.wallclock;
  out.trajectory = run_trajectory(f, inst->xbar, initial_state(*inst), out.schedule, options);
  return out;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj, bool with_wallclock) {
  out << kTrajectoryCsvHeader << '\n';
  for (const auto& r : traj.records) {
    out << r.t << ',' << fmt_double(r.residual_norm) << ',' << fmt_double(r.d_norm) << ','
        << fmt_double(r.z_norm) << ',' << fmt_double(r.drift) << ',';
    if (r.lin_gap) out << fmt_double(*r.lin_gap);
    out << ',';
    if (with_wallclock) out << r.wallclock_ns;
    out << '\n';
  }
}

std::uint64_t cell_seed(std::uint64_t master_seed, Method method, int k, int repeat) {
  return master_seed ^
         stable_hash(to_string(method) + "/" + std::to_string(k) + "/" + std::to_string(repeat));
}

SweepResult sweep_k(const ExperimentConfig& config, std::size_t workers) {
  config.validate();
  const SweepSettings& sw = config.sweep;

  Vector target_mean;
  if (config.target.mean) {
    target_mean = *config.target.mean;
  } else {
    Rng rng(sw.master_seed);
    target_mean.resize(config.model.m);
    for (int j = 0; j < config.model.m; ++j) target_mean(j) = rng.normal();
  }
  const TargetSampler targets = gaussian_targets(target_mean);

  std::vector<SweepRow> rows;
  for (Method method : sw.methods) {
    for (int k : sw.k_list) {
      for (int rep = 0; rep < sw.repeats; ++rep) {
        SweepRow row;
        row.method = method;
        row.k = k;
        row.repeat = rep;
        row.seed = cell_seed(sw.master_seed, method, k, rep);
        rows.push_back(row);
      }
    }
  }

  parallel_for(
      rows.size(),
      [&](std::size_t i) {
        SweepRow& row = rows[i];
        ModelConfig model = config.model;
        model.k = row.k;
        model.seed = row.seed;
        auto inst = std::make_shared<const ProblemInstance>(sample_problem(model, targets));
        const GeneratorMap f(inst);
        const StepSchedule sched = resolve_schedule(config.schedule, model, row.method);
        RunOptions options;
        options.method = row.method;
        options.stride = sched.T + 1;
        GanState last;
        try {
          const Trajectory traj =
              run_trajectory(f, inst->xbar, initial_state(*inst), sched, options);
          row.final_residual_norm = traj.records.back().residual_norm;
          row.iters = traj.iterations;
        } catch (const TrajectoryDivergence& e) {
          row.diverged = true;
          row.iters = e.partial().iterations;
          row.final_residual_norm = final_residual_norm(f, inst->xbar, e.partial().final_state);
        }
        row.final_mse = row.final_residual_norm * row.final_residual_norm;
      },
      workers);

  SweepResult out{std::move(rows)};
  canonical_sort(out.rows);
  return out;
}

void canonical_sort(std::vector<SweepRow>& rows) {
  std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    const std::string ma = to_string(a.method);
    const std::string mb = to_string(b.method);
    if (ma != mb) return ma < mb;
    if (a.k != b.k) return a.k < b.k;
    return a.seed < b.seed;
  });
}

void write_sweep_csv(std::ostream& out, const SweepResult& result) {
  out << kSweepCsvHeader << '\n';
  for (const auto& r : result.rows) {
    out << to_string(r.method) << ',' << r.k << ',' << r.seed << ',' << fmt_double(r.final_mse)
        << ',' << fmt_double(r.final_residual_norm) << ',' << r.iters << ','
        << (r.diverged ? 1 : 0) << '\n';
  }
}

SweepResult read_sweep_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) return {};
  if (line != kSweepCsvHeader) throw ConfigError("sweep CSV header does not match: " + line);
  SweepResult out;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 7) {
      throw ConfigError("sweep CSV line " + std::to_string(lineno) + " has " +
                        std::to_string(cells.size()) + " fields, expected 7");
    }
    try {
      SweepRow row;
      row.method = method_from_string(cells[0]);
      row.k = std::stoi(cells[1]);
      row.seed = std::stoull(cells[2]);
      row.final_mse = std::stod(cells[3]);
      row.final_residual_norm = std::stod(cells[4]);
      row.iters = std::stol(cells[5]);
      row.diverged = cells[6] == "1";
      out.rows.push_back(row);
    } catch (const std::logic_error&) {
      throw ConfigError("sweep CSV line " + std::to_string(lineno) + " is malformed");
    }
  }
  return out;
}

std::vector<MedianPoint> median_by_k(const SweepResult& result, Method method) {
  std::map<int, std::vector<double>> by_k;
  for (const auto& r : result.rows) {
    if (r.method != method) continue;
    by_k[r.k].push_back(std::isnan(r.final_mse) ? std::numeric_limits<double>::infinity()
                                                 : r.final_mse);
  }
  std::vector<MedianPoint> out;
  for (auto& [k, values] : by_k) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    const double med = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
    out.push_back({k, med});
  }
  return out;
}

std::vector<EnvelopeRow> envelope_table(const SpectralReport& report, const Trajectory& traj) {
  std::vector<EnvelopeRow> rows;
  rows.reserve(traj.records.size());
  for (const auto& rec : traj.records) {
    const Envelopes env = predicted_envelopes(report, report.z0_norm, rec.t);
    EnvelopeRow row;
    row.t = rec.t;
    row.z_norm = rec.z_norm;
    row.state_bound = env.state_bound;
    row.lin_z_norm = rec.lin_state_norm.value_or(std::numeric_limits<double>::quiet_NaN());
    row.lin_state_bound = env.linear_state_bound;
    row.lin_gap = rec.lin_gap.value_or(std::numeric_limits<double>::quiet_NaN());
    row.gap_bound = env.gap_bound;
    row.uniform_gap_bound = env.uniform_gap_bound;
    row.param_gap = rec.param_gap.value_or(std::numeric_limits<double>::quiet_NaN());
    row.param_gap_bound = env.param_gap_bound;
    row.drift = rec.drift;
    row.drift_bound = env.drift_bound;
    rows.push_back(row);
  }
  return rows;
}

EnvelopeSummary summarize_envelopes(const std::vector<EnvelopeRow>& rows) {
  EnvelopeSummary s;
  if (rows.empty()) return s;
  // Quantities that are exactly zero in exact arithmetic (the gaps at t <= 1,
  // every gap for an affine map) come out at rounding level.
  const double slack = 1e-10 * (1.0 + rows.front().z_norm);
  // NaN (twin not co-run) compares false and fails the check.
  auto within = [&](double measured, double bound) { return measured <= bound + slack; };
  for (const auto& r : rows) {
    s.state_ok = s.state_ok && within(r.z_norm, r.state_bound);
    s.linear_state_ok = s.linear_state_ok && within(r.lin_z_norm, r.lin_state_bound);
    s.gap_ok = s.gap_ok && within(r.lin_gap, r.gap_bound) && within(r.lin_gap, r.uniform_gap_bound);
    s.param_gap_ok = s.param_gap_ok && within(r.param_gap, r.param_gap_bound);
    s.drift_ok = s.drift_ok && within(r.drift, r.drift_bound);
  }
  return s;
}

CertifyResult certify_run(const SmoothMap& f, const Vector& y, const GanState& init,
                          const StepSchedule& sched, const RunSettings& run,
                          const CertifySettings& settings) {
  RunOptions options;
  options.method = Method::kGda;
  options.linearized_twin = true;
  options.stride = run.stride;
  options.snapshot_stride = settings.snapshot_stride;
  options.wallclock = run.wallclock;
  CertifyResult out;
  out.trajectory = run_trajectory(f, y, init, sched, options);
  CertifyOptions copts;
  copts.ball_samples = settings.ball_samples;
  copts.seed = settings.probe_seed;
  out.report = certify(f, y, init, out.trajectory, sched, copts);
  out.envelopes = envelope_table(out.report, out.trajectory);
  out.summary = summarize_envelopes(out.envelopes);
  return out;
}

CertifyResult certify_run(const ExperimentConfig& config) {
  auto inst = std::make_shared<const ProblemInstance>(make_instance(config));
  const GeneratorMap f(inst);
  const StepSchedule sched = resolve_schedule(config.schedule, config.model, Method::kGda);
  return certify_run(f, inst->xbar, initial_state(*inst), sched, config.run, config.certify);
}

void write_envelope_csv(std::ostream& out, const std::vector<EnvelopeRow>& rows) {
  out << kEnvelopeCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.t;
    for (double x : {r.z_norm, r.state_bound, r.lin_z_norm, r.lin_state_bound, r.lin_gap,
                     r.gap_bound, r.uniform_gap_bound, r.param_gap, r.param_gap_bound, r.drift,
                     r.drift_bound}) {
      out << ',';
      if (!std::isnan(x)) out << fmt_double(x);
    }
    out << '\n';
  }
}

std::string spectral_report_to_json(const SpectralReport& report) {
  return report_json(report).dump(2) + "\n";
}

SpectralReport spectral_report_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("report is not valid JSON: ") + e.what());
  }
  if (j.contains("spectral")) j = j.at("spectral");
  try {
    SpectralReport r;
    r.eta = number_from(j, "eta");
    r.mu = number_from(j, "mu");
    r.alpha = number_from(j, "alpha");
    r.beta0 = number_from(j, "beta0");
    r.gamma = number_from(j, "gamma");
    r.rho = number_from(j, "rho");
    r.z0_norm = number_from(j, "z0_norm");
    r.pinv_z0_norm = number_from(j, "pinv_z0_norm");
    r.max_drift = number_from(j, "max_drift");
    r.path = scope_from_json(j.at("path"));
    r.ball = scope_from_json(j.at("ball"));
    return r;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("report does not follow the schema: ") + e.what());
  }
}

std::string certify_report_json(const CertifyResult& result, const ExperimentConfig* config) {
  const Trajectory& traj = result.trajectory;
  json summary{{"state_ok", result.summary.state_ok},
               {"linear_state_ok", result.summary.linear_state_ok},
               {"gap_ok", result.summary.gap_ok},
               {"param_gap_ok", result.summary.param_gap_ok},
               {"drift_ok", result.summary.drift_ok}};
  json j{{"schema_version", kReportSchemaVersion},
         {"kind", "certificate"},
         {"empirical", true},
         {"spectral", report_json(result.report)},
         {"certified", result.report.certified()},
         {"envelopes", summary},
         {"run",
          {{"iterations", traj.iterations},
           {"converged", traj.converged},
           {"initial_residual_norm", traj.initial_residual_norm},
           {"final_residual_norm", traj.records.empty() ? 0.0 : traj.records.back().residual_norm}}}};
  if (config) j["config"] = config_json(*config);
  return j.dump(2) + "\n";
}

bool ConcentrationSuite::all_pass() const {
  return d_squared.pass && gram.pass && sigma_min.pass && opnorm.pass && initial_misfit.pass &&
         perturbation.averaged.pass;
}

ConcentrationSuite run_concentration_suite(const ExperimentConfig& config) {
  config.validate();
  const ConcentrationSettings& q = config.concentration;
  ConcentrationSuite suite;
  suite.d_squared = check_expected_d_squared(config.model, q.expectation_trials,
                                             Rng::split(q.seed, 0));
  suite.gram = check_gram_expectation(config.model, q.gram_trials, Rng::split(q.seed, 1));

  ConcentrationQuery query;
  query.config = config.model;
  query.delta = q.delta;
  query.eta_lemma = q.eta_lemma;
  query.trials = q.trials;
  query.seed = Rng::split(q.seed, 2);
  suite.sigma_min_bound = sigma_min_lower_bound(query);
  suite.sigma_min = check_sigma_min(query);
  query.seed = Rng::split(q.seed, 3);
  suite.opnorm = check_opnorm(query);
  query.seed = Rng::split(q.seed, 4);
  query.delta = q.misfit_delta;
  suite.initial_misfit = check_initial_misfit(query);

  const ProblemInstance inst = make_instance(config);
  const double d = config.model.d;
  const double dlogd = d * std::log(d);
  const double radius = dlogd > 0.0 ? q.radius_scale * config.model.sigma_w *
                                          std::sqrt(static_cast<double>(config.model.k)) /
                                          std::pow(dlogd, 1.5)
                                    : 0.0;
  PerturbationProbeOptions popts;
  popts.samples = q.probe_samples;
  popts.seed = Rng::split(q.seed, 5);
  suite.perturbation = perturbation_probe(inst, config.model, radius, popts);
  return suite;
}

std::string concentration_report_json(const ConcentrationSuite& suite) {
  json j{{"schema_version", kReportSchemaVersion},
         {"kind", "concentration"},
         {"expected_d_squared", check_json(suite.d_squared)},
         {"gram_expectation",
          {{"expected", matrix_json(suite.gram.expected)},
           {"mean", matrix_json(suite.gram.mean)},
           {"std_error", matrix_json(suite.gram.std_error)},
           {"max_z_score", suite.gram.max_z_score},
           {"trials", suite.gram.trials},
           {"pass", suite.gram.pass}}},
         {"sigma_min", check_json(suite.sigma_min)},
         {"sigma_min_vacuous", suite.sigma_min_bound.vacuous},
         {"opnorm", check_json(suite.opnorm)},
         {"initial_misfit", check_json(suite.initial_misfit)},
         {"perturbation",
          {{"radius", suite.perturbation.radius},
           {"averaged", check_json(suite.perturbation.averaged)},
           {"max_sample_ratio", suite.perturbation.max_sample_ratio}}},
         {"all_pass", suite.all_pass()}};
  return j.dump(2) + "\n";
}

OracleCheck run_oracle_check(const ExperimentConfig& config) {
  auto inst = std::make_shared<const ProblemInstance>(make_instance(config));
  const GeneratorMap f(inst);
  const Vector theta = f.initial_theta();
  const oracles::FiniteDiffConfig fd;
  const auto near_kink =
      oracles::relu_kink_predicate(inst->Z, theta, inst->k(), inst->d(), fd.guard_factor);
  const oracles::FiniteDiffResult numeric = oracles::finite_diff_jacobian(f, theta, fd, near_kink);
  const Matrix J = f.jacobian(theta);

  OracleCheck out;
  out.total_columns = J.cols();
  const double scale = std::max(J.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  for (Eigen::Index j = 0; j < J.cols(); ++j) {
    if (!numeric.reliable(j)) continue;
    ++out.reliable_columns;
    out.max_rel_error =
        std::max(out.max_rel_error, (numeric.J.col(j) - J.col(j)).cwiseAbs().maxCoeff() / scale);
  }
  const Matrix dense = J * J.transpose();
  out.gram_rel_error = (f.jacobian_gram(theta) - dense).norm() / dense.norm();

  Rng rng(Rng::split(config.model.seed, 0x6f7261636c65ULL));
  Vector direction(theta.size());
  for (Eigen::Index i = 0; i < direction.size(); ++i) direction(i) = rng.normal();
  const Vector theta_b = theta + 0.1 * theta.norm() / direction.norm() * direction;
  const double span = (f.evaluate(theta_b) - f.evaluate(theta)).norm();
  out.quadrature_residual =
      oracles::average_jacobian_residual(f, theta, theta_b, 1024) / std::max(span, 1e-300);
  out.pass = out.max_rel_error <= 1e-5 && out.gram_rel_error <= 1e-10;
  return out;
}

std::string oracle_check_json(const OracleCheck& check) {
  json j{{"schema_version", kReportSchemaVersion},
         {"kind", "oracle_check"},
         {"max_rel_error", check.max_rel_error},
         {"reliable_columns", check.reliable_columns},
         {"total_columns", check.total_columns},
         {"gram_rel_error", check.gram_rel_error},
         {"quadrature_residual", check.quadrature_residual},
         {"pass", check.pass}};
  return j.dump(2) + "\n";
}

std::string emit_plot_script(const std::filesystem::path& sweep_csv,
                             const std::vector<std::filesystem::path>& trajectory_csvs) {
  if (!std::filesystem::exists(sweep_csv)) {
    throw ConfigError("sweep file not found: " + sweep_csv.string());
  }
  for (const auto& p : trajectory_csvs) {
    if (!std::filesystem::exists(p)) throw ConfigError("trajectory file not found: " + p.string());
  }
  std::ifstream in(sweep_csv);
  const SweepResult sweep = read_sweep_csv(in);
  std::vector<std::string> methods;
  for (Method m : {Method::kGda, Method::kGdClosedForm, Method::kMultiAscent}) {
    const bool present = std::any_of(sweep.rows.begin(), sweep.rows.end(),
                                     [&](const SweepRow& r) { return r.method == m; });
    if (present) methods.push_back(to_string(m));
  }

  std::ostringstream s;
  s << "#!/usr/bin/env python3\n"
    << "\"\"\"Final MSE against hidden width (one panel per method) and residual norm\n"
    << "against iteration. Generated by `gdalab plot-script`.\"\"\"\n"
    << "import csv\n"
    << "import os\n"
    << "from statistics import median\n\n"
    << "import matplotlib\n\n"
    << "matplotlib.use(\"Agg\")\n"
    << "import matplotlib.pyplot as plt  # noqa: E402\n\n"
    << "SWEEP_CSV = " << python_string(sweep_csv.string()) << "\n"
    << "TRAJECTORY_CSVS = [";
  for (std::size_t i = 0; i < trajectory_csvs.size(); ++i) {
    s << (i ? ", " : "") << python_string(trajectory_csvs[i].string());
  }
  s << "]\n"
    << "METHODS = [";
  for (std::size_t i = 0; i < methods.size(); ++i) s << (i ? ", " : "") << python_string(methods[i]);
  s << "]\n\n\n"
    << "def read_rows(path):\n"
    << "    with open(path, newline=\"\") as fh:\n"
    << "        return list(csv.DictReader(fh))\n\n\n"
    << "def sweep_figure(rows):\n"
    << "    panels = METHODS or [None]\n"
    << "    fig, axes = plt.subplots(1, len(panels), figsize=(4.5 * len(panels), 3.6), squeeze=False)\n"
    << "    for ax, method in zip(axes[0], panels):\n"
    << "        by_k = {}\n"
    << "        for row in rows:\n"
    << "            if row[\"method\"] == method:\n"
    << "                by_k.setdefault(int(row[\"k\"]), []).append(float(row[\"final_mse\"]))\n"
    << "        ks = sorted(by_k)\n"
    << "        for k in ks:\n"
    << "            ax.scatter([k] * len(by_k[k]), by_k[k], s=8, color=\"0.6\")\n"
    << "        if ks:\n"
    << "            ax.plot(ks, [median(by_k[k]) for k in ks], marker=\"o\", color=\"C0\")\n"
    << "            ax.set_xscale(\"log\", base=2)\n"
    << "            if all(v > 0 for vs in by_k.values() for v in vs):\n"
    << "                ax.set_yscale(\"log\")\n"
    << "        ax.set_title(method if method else \"no sweep rows\")\n"
    << "        ax.set_xlabel(\"hidden width k\")\n"
    << "        ax.set_ylabel(\"final MSE\")\n"
    << "    fig.tight_layout()\n"
    << "    fig.savefig(\"final_mse_vs_k.png\", dpi=150)\n\n\n"
    << "def trajectory_figure(paths):\n"
    << "    fig, ax = plt.subplots(figsize=(5.0, 3.6))\n"
    << "    for path in paths:\n"
    << "        rows = read_rows(path)\n"
    << "        ax.plot([int(r[\"t\"]) for r in rows], [float(r[\"residual_norm\"]) for r in rows],\n"
    << "                label=os.path.basename(path))\n"
    << "    ax.set_yscale(\"log\")\n"
    << "    ax.set_xlabel(\"iteration\")\n"
    << "    ax.set_ylabel(\"residual norm\")\n"
    << "    if paths:\n"
    << "        ax.legend()\n"
    << "    fig.tight_layout()\n"
    << "    fig.savefig(\"residual_vs_iteration.png\", dpi=150)\n\n\n"
    << "if __name__ == \"__main__\":\n"
    << "    sweep_figure(read_rows(SWEEP_CSV))\n"
    << "    if TRAJECTORY_CSVS:\n"
    << "        trajectory_figure(TRAJECTORY_CSVS)\n";
  return s.str();
}

}  // namespace gdalab
