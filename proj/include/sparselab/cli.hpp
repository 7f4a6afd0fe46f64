#pragma once

// Command-line front end: simulate, estimate, experiment and diagnose.
// Exit codes: 0 success, 2 invalid configuration or flags, 3 I/O failure,
// 1 numerical failure while running a valid configuration.

#include "sparselab/core.hpp"
#include "sparselab/estimators.hpp"
#include "sparselab/experiments.hpp"
#include "sparselab/io.hpp"
#include "sparselab/model.hpp"
#include "sparselab/simulate.hpp"
#include "sparselab/stats.hpp"
#include "sparselab/tuning.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace sparselab::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kFailure = 1, kBadConfig = 2, kIoFailure = 3 };

/// Invalid configuration file or inconsistent flags.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// 1-based line of a byte offset into `text`.
inline std::size_t line_of(const std::string& text, std::size_t byte) {
  const std::size_t end = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(end), '\n'));
}

inline Json parse_json_text(const std::string& text, const std::string& name) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    const std::size_t byte = e.byte > 0 ? e.byte - 1 : 0;
    throw ConfigError(name + ":" + std::to_string(line_of(text, byte)) + ": JSON syntax error: " + e.what());
  }
}

inline Json load_json_file(const fs::path& file) { return parse_json_text(read_text_file(file), file.string()); }

/// Typed access to one JSON object. Every key must be consumed; finish() rejects
/// the rest as unknown.
class ConfigReader {
 public:
  ConfigReader(const Json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw ConfigError(label() + "expected a JSON object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key) && !obj_.at(key).is_null();
  }

  const Json& at(const std::string& key) {
    if (!has(key)) throw ConfigError(label() + "missing required key '" + key + "'");
    return obj_.at(key);
  }

  std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

  double number(const std::string& key) {
    const Json& v = at(key);
    if (!v.is_number()) throw ConfigError("key '" + path(key) + "': expected a number");
    return v.get<double>();
  }
  double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

  long long integer(const std::string& key) {
    const Json& v = at(key);
    if (!v.is_number_integer()) throw ConfigError("key '" + path(key) + "': expected an integer");
    return v.get<long long>();
  }
  long long integer(const std::string& key, long long fallback) { return has(key) ? integer(key) : fallback; }

  std::uint64_t seed(const std::string& key) {
    const Json& v = at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
      throw ConfigError("key '" + path(key) + "': expected a nonnegative integer");
    return v.get<std::uint64_t>();
  }
  std::uint64_t seed(const std::string& key, std::uint64_t fallback) { return has(key) ? seed(key) : fallback; }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const Json& v = obj_.at(key);
    if (!v.is_boolean()) throw ConfigError("key '" + path(key) + "': expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const Json& v = obj_.at(key);
    if (!v.is_string()) throw ConfigError("key '" + path(key) + "': expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key) {
    const Json& v = at(key);
    if (!v.is_array() || v.empty()) throw ConfigError("key '" + path(key) + "': expected a nonempty array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw ConfigError("key '" + path(key) + "': expected a nonempty array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }
  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
    return has(key) ? numbers(key) : fallback;
  }

  Matrix matrix(const std::string& key) {
    try {
      return matrix_from_json(at(key), "key '" + path(key) + "'");
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }

  ConfigReader object(const std::string& key) { return ConfigReader(at(key), path(key)); }

  void finish() const {
    for (const auto& item : obj_.items())
      if (!seen_.count(item.key())) throw ConfigError(label() + "unknown key '" + path(item.key()) + "'");
  }

 private:
  std::string label() const { return where_.empty() ? std::string() : "in '" + where_ + "': "; }

  const Json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

// ---------------------------------------------------------------------------
// Model block

struct ModelSpec {
  std::optional<Matrix> A;
  Matrix sigma;
  Vector b;
  double jump_intensity = 0.0;
  Vector laplace_scale;

  Index dim() const { return sigma.rows(); }

  LevySpec levy() const {
    const Index d = dim();
    JumpLaw law = NoJumps{};
    if (jump_intensity > 0.0) law = LaplaceJumps{laplace_scale};
    return LevySpec{b.size() == d ? b : Vector::Zero(d), sigma, jump_intensity, law};
  }

  OUModel ou_model() const {
    if (!A) throw ConfigError("model: key 'A' is required here");
    return make_ou_model(*A, levy());
  }
};

/// sigma: a number (multiple of the identity), an array (diagonal) or a matrix.
inline Matrix read_sigma(ConfigReader& r, std::optional<Index> d) {
  const Json& v = r.at("sigma");
  if (v.is_number()) {
    if (!d) throw ConfigError("key '" + r.path("sigma") + "': a scalar needs 'A' to fix the dimension");
    return v.get<double>() * Matrix::Identity(*d, *d);
  }
  if (v.is_array() && !v.empty() && v[0].is_number()) {
    const std::vector<double> diag = r.numbers("sigma");
    return Eigen::Map<const Vector>(diag.data(), static_cast<Index>(diag.size())).asDiagonal();
  }
  return r.matrix("sigma");
}

inline ModelSpec read_model(ConfigReader r) {
  ModelSpec m;
  std::optional<Index> d;
  if (r.has("A")) {
    m.A = r.matrix("A");
    d = m.A->rows();
  }
  m.sigma = read_sigma(r, d);
  const Index dd = m.sigma.rows();
  if (m.sigma.cols() != dd) throw ConfigError("key '" + r.path("sigma") + "': must be square");
  if (m.A && (m.A->rows() != dd || m.A->cols() != dd))
    throw ConfigError("model: 'A' and 'sigma' dimensions differ");
  if (r.has("b")) {
    const auto b = r.numbers("b");
    if (static_cast<Index>(b.size()) != dd) throw ConfigError("key '" + r.path("b") + "': length must equal d");
    m.b = Eigen::Map<const Vector>(b.data(), dd);
  } else {
    m.b = Vector::Zero(dd);
  }
  m.jump_intensity = r.number("jump_intensity", 0.0);
  if (r.has("laplace_scale")) {
    const Json& v = r.at("laplace_scale");
    if (v.is_number()) {
      m.laplace_scale = Vector::Constant(dd, v.get<double>());
    } else {
      const auto s = r.numbers("laplace_scale");
      if (static_cast<Index>(s.size()) != dd)
        throw ConfigError("key '" + r.path("laplace_scale") + "': length must equal d");
      m.laplace_scale = Eigen::Map<const Vector>(s.data(), dd);
    }
  } else {
    m.laplace_scale = Vector::Ones(dd);
  }
  r.finish();
  try {
    m.levy().validate();
    if (m.A) m.ou_model();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return m;
}

/// The model block of a simulate config or of a path sidecar.
inline ModelSpec load_model_file(const fs::path& file) {
  const Json j = load_json_file(file);
  if (!j.is_object()) throw ConfigError(file.string() + ": expected a JSON object");
  if (j.contains("model")) return read_model(ConfigReader(j.at("model"), "model"));
  if (j.contains("config") && j.at("config").is_object() && j.at("config").contains("model"))
    return read_model(ConfigReader(j.at("config").at("model"), "config.model"));
  throw ConfigError(file.string() + ": no 'model' block found");
}

inline fs::path sidecar_of(const fs::path& csv) {
  fs::path p = csv;
  p.replace_extension(".json");
  return p;
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  fs::path config;
  std::optional<fs::path> out_dir;
};

struct SimulateOutputs {
  fs::path csv;
  fs::path sidecar;
};

inline SimulateOutputs cmd_simulate(const SimulateArgs& args) {
  const Json cfg_json = load_json_file(args.config);
  ConfigReader r(cfg_json, "");
  const ModelSpec model = read_model(r.object("model"));
  if (!model.A) throw ConfigError("in 'model': missing required key 'A'");
  SimConfig sim;
  sim.T = r.number("T");
  sim.delta = r.number("delta", 1e-2);
  sim.seed = r.seed("seed");
  if (r.has("burn_in")) sim.burn_in = r.number("burn_in");
  if (r.has("x0")) {
    const auto x0 = r.numbers("x0");
    if (static_cast<Index>(x0.size()) != model.dim()) throw ConfigError("key 'x0': length must equal d");
    sim.x0 = Eigen::Map<const Vector>(x0.data(), model.dim());
  }
  const fs::path out_dir = args.out_dir.value_or(fs::path(r.string("output_dir", ".")));
  r.finish();
  try {
    sim.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }

  const SamplePath path = simulate_path(model.ou_model(), sim);
  SimulateOutputs out{out_dir / "path.csv", out_dir / "path.json"};
  write_text_file(out.csv, path_to_csv(path));
  Json side;
  side["generator"] = "sparselab simulate";
  side["path_file"] = "path.csv";
  side["d"] = path.dim();
  side["steps"] = path.steps();
  side["delta"] = path.delta;
  side["T"] = path.T();
  side["seed"] = sim.seed;
  side["jump_count"] = path.jump_marks.size();
  side["config"] = cfg_json;
  write_text_file(out.sidecar, dump(side));
  return out;
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateArgs {
  fs::path path_csv;
  std::string estimator = "mle";
  std::optional<double> lambda;
  bool cv = false;
  bool theoretical = false;
  bool refit_full = false;
  std::optional<fs::path> model_file;
  std::string increments = "filtered";
  std::string cv_score = "likelihood";
  double split = 0.8;
  double grid_lo = 1e-3;
  double grid_hi = 10.0;
  int grid_count = 40;
  double c0 = 1.0;
  std::optional<double> sparsity;
  double filter_v = 4.0;
  double filter_beta = 0.49;
  double tol = 1e-8;
  int max_iter = 20000;
  fs::path out_dir = ".";
};

struct EstimateOutputs {
  fs::path estimate;
  std::optional<fs::path> cv_trace;
};

inline void check_tuning_flags(const EstimateArgs& a) {
  const int modes = (a.lambda ? 1 : 0) + (a.cv ? 1 : 0) + (a.theoretical ? 1 : 0);
  if (a.estimator == "mle") {
    if (modes > 0) throw ConfigError("--lambda, --cv and --theoretical apply to penalized estimators only");
    if (a.refit_full) throw ConfigError("--refit-full requires --cv");
    return;
  }
  if (a.estimator != "lasso" && a.estimator != "slope")
    throw ConfigError("--estimator must be mle, lasso or slope");
  if (modes != 1) throw ConfigError("penalized estimators need exactly one of --lambda, --cv, --theoretical");
  if (a.refit_full && !a.cv) throw ConfigError("--refit-full requires --cv");
  if (a.lambda && !(*a.lambda >= 0.0)) throw ConfigError("--lambda must be nonnegative");
}

inline EstimateOutputs cmd_estimate(const EstimateArgs& args) {
  check_tuning_flags(args);
  FilterRule rule{args.filter_v, args.filter_beta, std::nullopt};
  try {
    rule.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (args.increments != "filtered" && args.increments != "raw")
    throw ConfigError("--increments must be filtered or raw");
  SamplePath path;
  try {
    path = read_path(args.path_csv);
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(args.path_csv.string() + ": " + e.what());
  }
  const ModelSpec model = load_model_file(args.model_file.value_or(sidecar_of(args.path_csv)));
  if (model.dim() != path.dim())
    throw ConfigError("path has d=" + std::to_string(path.dim()) + " but the model has d=" +
                      std::to_string(model.dim()));
  const Matrix& sigma = model.sigma;
  Matrix inc;
  Index flagged = 0;
  if (args.increments == "filtered") {
    auto f = filter_jumps(path, rule, spectral_norm(sigma));
    inc = std::move(f.increments);
    flagged = static_cast<Index>(f.flagged.size());
  } else {
    inc = path.increments();
  }

  SolverOptions solver;
  solver.tol = args.tol;
  solver.max_iter = args.max_iter;
  EstimateOutputs out{args.out_dir / "estimate.json", std::nullopt};
  EstimatorResult fit;
  std::string tuning = "none";
  Json extra = Json::object();
  const Index d = path.dim();

  if (args.estimator == "mle") {
    fit = mle(compute_stats(path, inc), sigma);
  } else {
    const PenaltyKind kind = args.estimator == "lasso" ? PenaltyKind::lasso : PenaltyKind::slope;
    if (args.lambda) {
      tuning = "lambda";
      fit = fit_penalized(kind, Objective(compute_stats(path, inc), sigma), *args.lambda, solver);
    } else if (args.theoretical) {
      tuning = "theoretical";
      const SufficientStats stats = compute_stats(path, inc);
      const double kappa_max = sym_eig_extremes(stats.C_hat).max;
      const TuningParams tp = TuningParams::for_kappa(kappa_max, args.c0);
      double lambda = 0.0;
      try {
        lambda = theoretical_lambda(kind, kappa_max, stats.T, d, args.sparsity, tp);
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
      fit = fit_penalized(kind, Objective(stats, sigma), lambda, solver);
      extra["kappa_max_plugin"] = kappa_max;
      extra["c0"] = args.c0;
    } else {
      tuning = "cv";
      CVConfig cv;
      cv.kind = kind;
      cv.split_fraction = args.split;
      cv.refit_full = args.refit_full;
      cv.solver = solver;
      try {
        cv.score = parse_cv_score(args.cv_score);
        cv.grid = log_grid(args.grid_lo, args.grid_hi, args.grid_count);
        cv.validate();
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
      auto outcome = cross_validate(path, inc, sigma, cv);
      fit = std::move(outcome.result);
      fit.lambda = outcome.lambda_hat;
      out.cv_trace = args.out_dir / "cv_trace.csv";
      write_text_file(*out.cv_trace, cv_trace_to_csv(outcome.trace));
      extra["cv_score"] = args.cv_score;
      extra["refit_full"] = args.refit_full;
    }
  }

  Json j;
  j["estimator"] = args.estimator;
  j["tuning"] = tuning;
  j["lambda"] = fit.lambda;
  j["d"] = d;
  j["T"] = path.T();
  j["delta"] = path.delta;
  j["increments"] = args.increments;
  j["flagged_steps"] = flagged;
  j["A_hat"] = matrix_to_json(fit.A_hat);
  Json diag;
  diag["iterations"] = fit.iterations;
  diag["optimality_residual"] = fit.optimality_residual;
  diag["objective_value"] = fit.objective_value;
  diag["converged"] = fit.converged;
  diag["nnz"] = count_nonzero(fit.A_hat, 1e-8);
  diag["nnz_threshold"] = 1e-8;
  j["diagnostics"] = diag;
  if (!extra.empty()) j["tuning_details"] = extra;
  write_text_file(out.estimate, dump(j));
  return out;
}

/// A_hat of an estimate file.
inline Matrix read_estimate(const fs::path& file) {
  const Json j = load_json_file(file);
  if (!j.is_object() || !j.contains("A_hat")) throw ConfigError(file.string() + ": no 'A_hat'");
  return matrix_from_json(j.at("A_hat"), "A_hat");
}

// ---------------------------------------------------------------------------
// experiment

struct ExperimentArgs {
  fs::path config;
  bool plot = false;
  std::optional<fs::path> out_dir;
};

struct ExperimentOutputs {
  std::vector<fs::path> files;
};

namespace detail {

inline std::vector<double> read_T_grid(ConfigReader& r, std::vector<double> fallback) {
  return r.numbers("T_grid", std::move(fallback));
}

inline int read_count(ConfigReader& r, const std::string& key, int fallback) {
  const long long v = r.integer(key, fallback);
  if (v < 1 || v > 100000000) throw ConfigError("key '" + r.path(key) + "': must be a positive integer");
  return static_cast<int>(v);
}

inline CVConfig read_cv(ConfigReader r) {
  CVConfig cv;
  cv.split_fraction = r.number("split_fraction", cv.split_fraction);
  if (r.has("grid")) {
    const Json& g = r.at("grid");
    if (g.is_array()) {
      cv.grid = r.numbers("grid");
    } else {
      ConfigReader gr = r.object("grid");
      const double lo = gr.number("lo"), hi = gr.number("hi");
      const int count = read_count(gr, "count", 40);
      gr.finish();
      try {
        cv.grid = log_grid(lo, hi, count);
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
    }
  }
  try {
    cv.score = parse_cv_score(r.string("score", to_string(cv.score)));
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  cv.refit_full = r.boolean("refit_full", false);
  cv.solver.tol = r.number("tol", cv.solver.tol);
  cv.solver.max_iter = read_count(r, "max_iter", cv.solver.max_iter);
  r.finish();
  return cv;
}

inline FilterRule read_filter(ConfigReader r) {
  FilterRule f;
  f.v = r.number("v", f.v);
  f.beta = r.number("beta", f.beta);
  r.finish();
  return f;
}

template <class F>
auto as_config_error(F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

inline Json rows_summary_json(const std::string& kind, std::uint64_t seed) {
  Json j;
  j["kind"] = kind;
  j["seed"] = seed;
  return j;
}

}  // namespace detail

inline ExperimentOutputs cmd_experiment(const ExperimentArgs& args) {
  const Json cfg_json = load_json_file(args.config);
  ConfigReader r(cfg_json, "");
  const std::string kind = r.string("kind", "");
  if (kind.empty()) throw ConfigError("missing required key 'kind'");
  const fs::path out_dir = args.out_dir.value_or(fs::path(r.string("output_dir", ".")));
  ExperimentOutputs out;
  auto emit = [&](const std::string& name, const std::string& content) {
    out.files.push_back(out_dir / name);
    write_text_file(out.files.back(), content);
  };

  if (kind == "comparison") {
    ComparisonConfig c;
    if (r.has("dims")) {
      c.dims.clear();
      for (double v : r.numbers("dims")) {
        if (v != std::floor(v) || v < 1) throw ConfigError("key 'dims': entries must be positive integers");
        c.dims.push_back(static_cast<Index>(v));
      }
    }
    c.T = r.number("T", c.T);
    c.delta = r.number("delta", c.delta);
    c.density = r.number("density", c.density);
    c.magnitude = r.number("magnitude", c.magnitude);
    c.sigma_low = r.number("sigma_low", c.sigma_low);
    c.sigma_high = r.number("sigma_high", c.sigma_high);
    c.jump_intensity = r.number("jump_intensity", c.jump_intensity);
    c.laplace_scale = r.number("laplace_scale", c.laplace_scale);
    c.reps = detail::read_count(r, "reps", c.reps);
    c.seed = r.seed("seed", c.seed);
    if (r.has("cv")) c.cv = detail::read_cv(r.object("cv"));
    if (r.has("filter")) c.filter = detail::read_filter(r.object("filter"));
    c.increments = detail::as_config_error([&] { return parse_increment_source(r.string("increments", "filtered")); });
    r.finish();
    detail::as_config_error([&] {
      c.validate();
      return 0;
    });
    const ExperimentReport report = run_comparison(c);
    const auto agg = aggregate(report);
    emit("report.csv", report_to_csv(report));
    emit("aggregate.csv", aggregate_to_csv(agg));
    if (args.plot) {
      emit("l2_error.svg", comparison_plot(agg, true));
      emit("l1_error.svg", comparison_plot(agg, false));
    }
  } else if (kind == "rate_check") {
    RateCheckConfig c;
    c.d = r.integer("d", c.d);
    c.density = r.number("density", c.density);
    c.magnitude = r.number("magnitude", c.magnitude);
    c.sigma = r.number("sigma", c.sigma);
    c.T_grid = detail::read_T_grid(r, c.T_grid);
    c.reps = detail::read_count(r, "reps", c.reps);
    c.delta = r.number("delta", c.delta);
    c.c0 = r.number("c0", c.c0);
    c.seed = r.seed("seed", c.seed);
    c.solver.tol = r.number("tol", c.solver.tol);
    c.solver.max_iter = detail::read_count(r, "max_iter", c.solver.max_iter);
    r.finish();
    detail::as_config_error([&] {
      c.validate();
      return 0;
    });
    const RateCheckResult res = run_rate_check(c);
    emit("report.csv", report_to_csv(res.report));
    emit("rate_summary.csv", rate_summary_to_csv(res.summary));
    if (args.plot) {
      LineSeries s{"median squared error", {}, {}, {}};
      for (const auto& row : res.summary) {
        s.x.push_back(row.T);
        s.mean.push_back(row.median_sq_l2);
      }
      emit("rate_summary.svg", svg_line_plot({s}, "Slope error against T", "T", "median squared L2 error"));
    }
  } else if (kind == "re_probability") {
    REProbabilityConfig c;
    c.d = r.integer("d", c.d);
    c.density = r.number("density", c.density);
    c.magnitude = r.number("magnitude", c.magnitude);
    c.sigma = r.number("sigma", c.sigma);
    c.T_grid = detail::read_T_grid(r, c.T_grid);
    c.reps = detail::read_count(r, "reps", c.reps);
    c.delta = r.number("delta", c.delta);
    if (r.has("r")) c.r = r.number("r");
    c.seed = r.seed("seed", c.seed);
    r.finish();
    detail::as_config_error([&] {
      c.validate();
      return 0;
    });
    const REProbabilityResult res = run_re_probability(c);
    emit("re_probability.csv", re_probability_to_csv(res.rows));
    if (args.plot) {
      LineSeries s{"frequency", {}, {}, {}};
      for (const auto& row : res.rows) {
        s.x.push_back(row.T);
        s.mean.push_back(row.frequency);
      }
      emit("re_probability.svg", svg_line_plot({s}, "Restricted-eigenvalue event frequency", "T", "frequency"));
    }
  } else if (kind == "deviation_check") {
    DeviationCheckConfig c;
    c.d = r.integer("d", c.d);
    c.density = r.number("density", c.density);
    c.magnitude = r.number("magnitude", c.magnitude);
    c.sigma = r.number("sigma", c.sigma);
    c.T = r.number("T", c.T);
    c.delta = r.number("delta", c.delta);
    c.eps0 = r.number("eps0", c.eps0);
    c.c0 = r.number("c0", c.c0);
    c.dictionary_size = detail::read_count(r, "dictionary_size", c.dictionary_size);
    c.reps = detail::read_count(r, "reps", c.reps);
    c.seed = r.seed("seed", c.seed);
    r.finish();
    detail::as_config_error([&] {
      c.validate();
      return 0;
    });
    const DeviationCheckResult res = run_deviation_check(c);
    emit("deviation.csv", deviation_to_csv(res.rows));
    Json summary = detail::rows_summary_json(kind, c.seed);
    summary["violation_frequency"] = res.violation_frequency;
    summary["target"] = res.target;
    summary["threshold"] = res.rows.empty() ? 0.0 : res.rows.front().threshold;
    emit("deviation_summary.json", dump(summary));
    if (args.plot) {
      LineSeries stat{"statistic", {}, {}, {}}, thr{"threshold", {}, {}, {}};
      for (const auto& row : res.rows) {
        stat.x.push_back(row.replication);
        stat.mean.push_back(row.statistic);
        thr.x.push_back(row.replication);
        thr.mean.push_back(row.threshold);
      }
      emit("deviation.svg", svg_line_plot({stat, thr}, "Dictionary statistic", "replication", "value"));
    }
  } else if (kind == "concentration") {
    Index d = r.integer("d", 4);
    const double density = r.number("density", 0.2);
    const double magnitude = r.number("magnitude", 1.0);
    const double sigma = r.number("sigma", 1.0);
    const std::vector<double> T_grid = detail::read_T_grid(r, {100.0, 500.0, 2000.0});
    const std::vector<double> r_grid = r.numbers("r_grid", {0.05, 0.1, 0.2, 0.5, 1.0});
    const int reps = detail::read_count(r, "reps", 50);
    const double delta = r.number("delta", 1e-2);
    const std::uint64_t seed = r.seed("seed", 1);
    std::optional<Matrix> A;
    if (r.has("A")) A = r.matrix("A");
    r.finish();
    if (A) d = A->rows();
    if (d < 1 || !(sigma > 0.0)) throw ConfigError("concentration: need d >= 1 and sigma > 0");
    const OUModel model = detail::as_config_error([&] {
      Matrix A0;
      if (A) {
        A0 = *A;
      } else {
        Rng rng(split_seed(seed, 0));
        A0 = generate_sparse_stable(d, density, magnitude, rng).matrix();
      }
      return make_ou_model(A0, gaussian_levy(sigma * Matrix::Identity(d, d)));
    });
    const auto cells = empirical_concentration(model, T_grid, r_grid, reps, seed, delta);
    emit("concentration.csv", concentration_to_csv(cells));
    if (args.plot) emit("concentration.svg", concentration_heat_map(cells));
  } else {
    throw ConfigError("key 'kind': unknown experiment '" + kind +
                      "' (expected comparison, rate_check, re_probability, deviation_check or concentration)");
  }
  return out;
}

// ---------------------------------------------------------------------------
// diagnose

struct DiagnoseArgs {
  fs::path path_csv;
  std::optional<fs::path> model_file;
  double filter_v = 4.0;
  double filter_beta = 0.49;
  fs::path out_dir = ".";
};

inline Json cmd_diagnose(const DiagnoseArgs& args, fs::path* written = nullptr) {
  SamplePath path;
  try {
    path = read_path(args.path_csv);
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(args.path_csv.string() + ": " + e.what());
  }
  const ModelSpec spec = load_model_file(args.model_file.value_or(sidecar_of(args.path_csv)));
  if (spec.dim() != path.dim())
    throw ConfigError("path has d=" + std::to_string(path.dim()) + " but the model has d=" +
                      std::to_string(spec.dim()));
  const OUModel model = spec.ou_model();
  FilterRule rule{args.filter_v, args.filter_beta, std::nullopt};
  detail::as_config_error([&] {
    rule.validate();
    return 0;
  });

  const auto moments = stationary_moments(model);
  const SufficientStats stats = compute_stats(path, path.increments());
  const double half = moments.kappa_min / 2.0;
  const double sigma_max = spectral_norm(spec.sigma);
  const auto filtered = filter_jumps(path, rule, sigma_max);

  Json j;
  j["d"] = path.dim();
  j["T"] = path.T();
  j["delta"] = path.delta;
  j["kappa_min"] = moments.kappa_min;
  j["kappa_max"] = moments.kappa_max;
  j["lambda_min_C_hat"] = re_constant(stats);
  j["lambda_max_C_hat"] = sym_eig_extremes(stats.C_hat).max;
  j["deviation_spectral"] = sym_spectral_radius(stats.C_hat - moments.C_inf);
  j["Q_radius"] = half;
  j["Q_event"] = check_Q_event(stats, moments.C_inf, half);
  Json f;
  f["v"] = rule.v;
  f["beta"] = rule.beta;
  f["sigma_max"] = sigma_max;
  f["threshold"] = rule.threshold(sigma_max, path.delta);
  f["flagged_steps"] = filtered.flagged.size();
  f["flagged_fraction"] = static_cast<double>(filtered.flagged.size()) / static_cast<double>(path.steps());
  j["jump_filter"] = f;
  const fs::path file = args.out_dir / "diagnostics.json";
  write_text_file(file, dump(j));
  if (written) *written = file;
  return j;
}

// ---------------------------------------------------------------------------
// Entry point

/// Maps library exceptions onto exit codes and prints the message to `err`.
template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    body();
    return kOk;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kBadConfig;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Sparse drift estimation for Levy-driven Ornstein-Uhlenbeck processes"};
  app.require_subcommand(1);

  SimulateArgs sim;
  std::string sim_out;
  auto* s = app.add_subcommand("simulate", "Simulate a path from a JSON config");
  s->add_option("config", sim.config, "config file")->required();
  s->add_option("--out", sim_out, "output directory (overrides output_dir)");

  EstimateArgs est;
  double lambda = 0.0;
  std::string model_file;
  double sparsity = 0.0;
  auto* e = app.add_subcommand("estimate", "Estimate the drift matrix from a path CSV");
  e->add_option("path", est.path_csv, "path CSV")->required();
  e->add_option("--estimator", est.estimator, "mle, lasso or slope")->required();
  auto* lam_opt = e->add_option("--lambda", lambda, "fixed penalty level");
  e->add_flag("--cv", est.cv, "chronological hold-out selection");
  e->add_flag("--theoretical", est.theoretical, "theoretical tuning parameter");
  e->add_flag("--refit-full", est.refit_full, "refit on the whole path at the selected level");
  auto* model_opt = e->add_option("--model", model_file, "JSON with a model block (default: the path sidecar)");
  e->add_option("--increments", est.increments, "filtered or raw");
  e->add_option("--cv-score", est.cv_score, "likelihood or normalized");
  e->add_option("--split", est.split, "training fraction");
  e->add_option("--grid-lo", est.grid_lo, "smallest grid value");
  e->add_option("--grid-hi", est.grid_hi, "largest grid value");
  e->add_option("--grid-count", est.grid_count, "grid size");
  e->add_option("--c0", est.c0, "chaining constant for --theoretical");
  auto* sparsity_opt = e->add_option("--sparsity", sparsity, "sparsity guess for the Lasso theoretical level");
  e->add_option("--filter-v", est.filter_v, "jump filter coefficient");
  e->add_option("--filter-beta", est.filter_beta, "jump filter exponent");
  e->add_option("--tol", est.tol, "solver tolerance");
  e->add_option("--max-iter", est.max_iter, "solver iteration cap");
  e->add_option("--out", est.out_dir, "output directory");

  ExperimentArgs exp;
  std::string exp_out;
  auto* x = app.add_subcommand("experiment", "Run a Monte Carlo experiment from a JSON config");
  x->add_option("config", exp.config, "config file")->required();
  x->add_flag("--plot", exp.plot, "also write SVG figures");
  x->add_option("--out", exp_out, "output directory (overrides output_dir)");

  DiagnoseArgs dia;
  std::string dia_model;
  auto* g = app.add_subcommand("diagnose", "Restricted-eigenvalue and filter diagnostics of a path");
  g->add_option("path", dia.path_csv, "path CSV")->required();
  auto* dia_model_opt = g->add_option("--model", dia_model, "JSON with a model block (default: the path sidecar)");
  g->add_option("--filter-v", dia.filter_v, "jump filter coefficient");
  g->add_option("--filter-beta", dia.filter_beta, "jump filter exponent");
  g->add_option("--out", dia.out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& pe) {
    err << "error: " << pe.what() << "\n";
    return kBadConfig;
  }

  if (s->parsed()) {
    if (!sim_out.empty()) sim.out_dir = sim_out;
    return guarded(err, [&] {
      const auto o = cmd_simulate(sim);
      out << o.csv.string() << "\n" << o.sidecar.string() << "\n";
    });
  }
  if (e->parsed()) {
    if (lam_opt->count() > 0) est.lambda = lambda;
    if (model_opt->count() > 0) est.model_file = model_file;
    if (sparsity_opt->count() > 0) est.sparsity = sparsity;
    return guarded(err, [&] {
      const auto o = cmd_estimate(est);
      out << o.estimate.string() << "\n";
      if (o.cv_trace) out << o.cv_trace->string() << "\n";
    });
  }
  if (x->parsed()) {
    if (!exp_out.empty()) exp.out_dir = exp_out;
    return guarded(err, [&] {
      for (const auto& f : cmd_experiment(exp).files) out << f.string() << "\n";
    });
  }
  if (dia_model_opt->count() > 0) dia.model_file = dia_model;
  return guarded(err, [&] {
    fs::path file;
    const Json j = cmd_diagnose(dia, &file);
    out << file.string() << "\n";
  });
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"sparselab"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace sparselab::cli
