#pragma once

// Monte Carlo harness: estimator comparison, rate scaling, restricted-eigenvalue
// event frequency and the stochastic-error deviation event.

#include "sparselab/core.hpp"
#include "sparselab/estimators.hpp"
#include "sparselab/model.hpp"
#include "sparselab/simulate.hpp"
#include "sparselab/stats.hpp"
#include "sparselab/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <string>

namespace sparselab {

/// Which increments feed the likelihood: jump-filtered observations, the true
/// continuous part recorded by the simulator, or raw observed increments.
enum class IncrementSource { filtered, recorded, raw };

inline IncrementSource parse_increment_source(const std::string& s) {
  if (s == "filtered") return IncrementSource::filtered;
  if (s == "recorded") return IncrementSource::recorded;
  if (s == "raw") return IncrementSource::raw;
  throw Error("unknown increment source '" + s + "' (expected filtered, recorded or raw)");
}

inline Matrix select_increments(const SamplePath& path, IncrementSource source, const FilterRule& rule,
                                const Matrix& sigma) {
  switch (source) {
    case IncrementSource::filtered:
      return filter_jumps(path, rule, spectral_norm(sigma)).increments;
    case IncrementSource::recorded:
      return path.continuous_increments();
    case IncrementSource::raw:
      break;
  }
  return path.increments();
}

struct ReportRow {
  Index d = 0;
  double T = 0.0;
  int replication = 0;
  std::string estimator;
  double l1_error = 0.0;
  double l2_error = 0.0;
  double l1_error_weighted = 0.0;  // on Sigma^{-1}(A_hat - A0)
  double l2_error_weighted = 0.0;
  Index nnz = 0;
  double lambda_used = 0.0;
  std::uint64_t seed = 0;
  bool failed = false;
};

struct AggregateRow {
  Index d = 0;
  double T = 0.0;
  std::string estimator;
  int count = 0;
  int failed = 0;
  double mean_l1 = 0.0;
  double sd_l1 = 0.0;
  double mean_l2 = 0.0;
  double sd_l2 = 0.0;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
};

/// Mean and sample standard deviation per (d, T, estimator), in first-appearance
/// order. Failed rows are counted but excluded from the statistics.
inline std::vector<AggregateRow> aggregate(const ExperimentReport& report) {
  std::vector<AggregateRow> cells;
  std::vector<std::vector<const ReportRow*>> members;
  for (const auto& row : report.rows) {
    auto it = std::find_if(cells.begin(), cells.end(), [&](const AggregateRow& c) {
      return c.d == row.d && c.T == row.T && c.estimator == row.estimator;
    });
    if (it == cells.end()) {
      cells.push_back({row.d, row.T, row.estimator});
      members.emplace_back();
      it = cells.end() - 1;
    }
    members[static_cast<std::size_t>(it - cells.begin())].push_back(&row);
  }
  for (std::size_t c = 0; c < cells.size(); ++c) {
    auto& cell = cells[c];
    double s1 = 0.0, s2 = 0.0;
    for (const auto* r : members[c]) {
      if (r->failed) {
        ++cell.failed;
        continue;
      }
      ++cell.count;
      s1 += r->l1_error;
      s2 += r->l2_error;
    }
    if (cell.count == 0) continue;
    cell.mean_l1 = s1 / cell.count;
    cell.mean_l2 = s2 / cell.count;
    if (cell.count > 1) {
      double v1 = 0.0, v2 = 0.0;
      for (const auto* r : members[c]) {
        if (r->failed) continue;
        v1 += (r->l1_error - cell.mean_l1) * (r->l1_error - cell.mean_l1);
        v2 += (r->l2_error - cell.mean_l2) * (r->l2_error - cell.mean_l2);
      }
      cell.sd_l1 = std::sqrt(v1 / (cell.count - 1));
      cell.sd_l2 = std::sqrt(v2 / (cell.count - 1));
    }
  }
  return cells;
}

inline ReportRow score_estimate(const Matrix& A_hat, const Matrix& A0, const Matrix& sigma) {
  ReportRow row;
  const Matrix diff = A_hat - A0;
  const Matrix weighted = sigma.partialPivLu().solve(diff);
  row.l1_error = diff.cwiseAbs().sum();
  row.l2_error = diff.norm();
  row.l1_error_weighted = weighted.cwiseAbs().sum();
  row.l2_error_weighted = weighted.norm();
  row.nnz = count_nonzero(A_hat, 1e-8);
  return row;
}

// ---------------------------------------------------------------------------
// Estimator comparison

struct ComparisonConfig {
  std::vector<Index> dims{10, 15, 20, 25, 30};
  double T = 100.0;
  double delta = 1e-2;
  double density = 0.2;
  double magnitude = 1.0;
  double sigma_low = 0.0;
  double sigma_high = 10.0;
  double jump_intensity = 5.0;
  double laplace_scale = 1.0;
  int reps = 10;
  std::uint64_t seed = 1;
  CVConfig cv;
  FilterRule filter;
  IncrementSource increments = IncrementSource::filtered;

  void validate() const {
    if (dims.empty()) throw Error("comparison: dims must be nonempty");
    for (Index d : dims)
      if (d < 1) throw Error("comparison: dimensions must be positive");
    if (!(T > 0.0) || !(delta > 0.0 && delta <= T)) throw Error("comparison: invalid T or delta");
    if (!(sigma_low >= 0.0 && sigma_high > sigma_low)) throw Error("comparison: need 0 <= sigma_low < sigma_high");
    if (!(laplace_scale > 0.0)) throw Error("comparison: laplace_scale must be positive");
    if (reps < 1) throw Error("comparison: reps must be positive");
    cv.validate();
    filter.validate();
  }
};

/// Seed of replication `rep` in dimension `d`.
inline std::uint64_t replication_seed(std::uint64_t master, Index d, int rep) {
  return split_seed(split_seed(master, static_cast<std::uint64_t>(d)), static_cast<std::uint64_t>(rep));
}

/// Per replication: sparse stable A0, diagonal Sigma with uniform entries,
/// simulated path, MLE on the whole path and cross-validated Lasso and Slope.
inline ExperimentReport run_comparison(const ComparisonConfig& cfg) {
  cfg.validate();
  const std::size_t per_dim = static_cast<std::size_t>(cfg.reps);
  const std::size_t jobs = cfg.dims.size() * per_dim;
  std::vector<std::vector<ReportRow>> results(jobs);

  parallel_for(jobs, [&](std::size_t job) {
    const Index d = cfg.dims[job / per_dim];
    const int rep = static_cast<int>(job % per_dim);
    const std::uint64_t seed = replication_seed(cfg.seed, d, rep);
    auto& out = results[job];
    const char* names[] = {"mle", "lasso", "slope"};
    auto failed_rows = [&] {
      out.clear();
      for (const char* name : names) {
        ReportRow row;
        row.d = d;
        row.T = cfg.T;
        row.replication = rep;
        row.estimator = name;
        row.seed = seed;
        row.failed = true;
        out.push_back(row);
      }
    };

    Matrix A0, sigma;
    SamplePath path;
    try {
      Rng rng(seed);
      A0 = generate_sparse_stable(d, cfg.density, cfg.magnitude, rng).matrix();
      std::uniform_real_distribution<double> sig(cfg.sigma_low, cfg.sigma_high);
      Vector diag(d);
      for (Index i = 0; i < d; ++i) {
        diag(i) = sig(rng);
        // Uniform draws can return the lower end exactly; Sigma must stay invertible.
        if (diag(i) <= 0.0) diag(i) = cfg.sigma_high * 1e-6;
      }
      sigma = diag.asDiagonal();
      LevySpec levy{Vector::Zero(d), sigma, cfg.jump_intensity,
                    cfg.jump_intensity > 0.0 ? JumpLaw{laplace_jumps(d, cfg.laplace_scale)} : JumpLaw{NoJumps{}}};
      const OUModel model = make_ou_model(A0, std::move(levy));
      SimConfig sim;
      sim.T = cfg.T;
      sim.delta = cfg.delta;
      sim.seed = split_seed(seed, 1);
      path = simulate_path(model, sim);
    } catch (const Error&) {
      failed_rows();
      return;
    }

    const Matrix inc = select_increments(path, cfg.increments, cfg.filter, sigma);
    for (const char* name : names) {
      ReportRow row;
      try {
        EstimatorResult fit;
        if (std::string(name) == "mle") {
          fit = mle(compute_stats(path, inc), sigma);
        } else {
          CVConfig cv = cfg.cv;
          cv.kind = std::string(name) == "lasso" ? PenaltyKind::lasso : PenaltyKind::slope;
          auto outcome = cross_validate(path, inc, sigma, cv);
          fit = std::move(outcome.result);
          fit.lambda = outcome.lambda_hat;
        }
        row = score_estimate(fit.A_hat, A0, sigma);
        row.lambda_used = fit.lambda;
        row.failed = !fit.converged;
      } catch (const Error&) {
        row = ReportRow{};
        row.failed = true;
      }
      row.d = d;
      row.T = cfg.T;
      row.replication = rep;
      row.estimator = name;
      row.seed = seed;
      out.push_back(row);
    }
  });

  ExperimentReport report;
  for (auto& block : results)
    for (auto& row : block) report.rows.push_back(std::move(row));
  return report;
}

// ---------------------------------------------------------------------------
// Rate scaling of the Slope estimator with the theoretical tuning parameter

struct RateCheckConfig {
  Index d = 10;
  double density = 0.2;
  double magnitude = 1.0;
  double sigma = 1.0;
  std::vector<double> T_grid{100.0, 200.0, 400.0};
  int reps = 20;
  double delta = 1e-2;
  double c0 = 1.0;
  std::uint64_t seed = 1;
  SolverOptions solver;

  void validate() const {
    if (d < 1) throw Error("rate_check: d must be positive");
    if (T_grid.size() < 3) throw Error("rate_check: T grid needs at least 3 points");
    for (std::size_t i = 0; i < T_grid.size(); ++i)
      if (!(T_grid[i] > 0.0) || (i > 0 && !(T_grid[i] > T_grid[i - 1])))
        throw Error("rate_check: T grid must be positive and increasing");
    if (reps < 1) throw Error("rate_check: reps must be positive");
    if (!(sigma > 0.0)) throw Error("rate_check: sigma must be positive");
    if (!(c0 > 0.0)) throw Error("rate_check: c0 must be positive");
  }
};

struct RateSummaryRow {
  double T;
  double median_sq_l2;  // median of ||Sigma^{-1}(A_hat - A0)||_F^2
  double normalized;    // median_sq_l2 T kappa_min^2 / (s log(2 e d^2 / s))
  double lambda;
  int reps;
};

struct RateCheckResult {
  ExperimentReport report;
  std::vector<RateSummaryRow> summary;
  Index sparsity = 0;
  double kappa_min = 0.0;
  double kappa_max = 0.0;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Gaussian model with Sigma = sigma Id and one fixed sparse A0; Slope with
/// lambda_T = 2 c_S / sqrt(T), c_S = c_star sqrt(kappa_max), on every T.
inline RateCheckResult run_rate_check(const RateCheckConfig& cfg) {
  cfg.validate();
  Rng rng(split_seed(cfg.seed, 0));
  const Matrix A0 = generate_sparse_stable(cfg.d, cfg.density, cfg.magnitude, rng).matrix();
  const Matrix sigma = cfg.sigma * Matrix::Identity(cfg.d, cfg.d);
  const OUModel model = make_ou_model(A0, gaussian_levy(sigma));
  const auto moments = stationary_moments(model);
  const TuningParams tuning = TuningParams::for_kappa(moments.kappa_max, cfg.c0);

  RateCheckResult out;
  out.kappa_min = moments.kappa_min;
  out.kappa_max = moments.kappa_max;
  out.sparsity = count_nonzero(sigma.partialPivLu().solve(A0));

  const std::size_t reps = static_cast<std::size_t>(cfg.reps);
  std::vector<ReportRow> rows(cfg.T_grid.size() * reps);
  const SlopeWeights weights(cfg.d * cfg.d);
  parallel_for(rows.size(), [&](std::size_t job) {
    const std::size_t t = job / reps;
    const int rep = static_cast<int>(job % reps);
    SimConfig sim;
    sim.T = cfg.T_grid[t];
    sim.delta = cfg.delta;
    sim.seed = split_seed(split_seed(cfg.seed, t + 1), static_cast<std::uint64_t>(rep));
    const double lambda = theoretical_lambda(PenaltyKind::slope, moments.kappa_max, sim.T, cfg.d, {}, tuning);
    ReportRow row;
    try {
      const SamplePath path = simulate_path(model, sim);
      const Objective obj(compute_stats(path, path.increments()), sigma);
      const auto fit = fit_slope(obj, lambda, weights, cfg.solver);
      row = score_estimate(fit.A_hat, A0, sigma);
      row.failed = !fit.converged;
    } catch (const Error&) {
      row.failed = true;
    }
    row.d = cfg.d;
    row.T = sim.T;
    row.replication = rep;
    row.estimator = "slope";
    row.lambda_used = lambda;
    row.seed = sim.seed;
    rows[job] = row;
  });
  out.report.rows = std::move(rows);

  const double dd = static_cast<double>(cfg.d);
  const double s = static_cast<double>(out.sparsity);
  const double rate_unit = s * std::log(2.0 * std::numbers::e * dd * dd / s);
  for (std::size_t t = 0; t < cfg.T_grid.size(); ++t) {
    std::vector<double> sq;
    for (std::size_t rep = 0; rep < reps; ++rep) {
      const auto& row = out.report.rows[t * reps + rep];
      if (!row.failed) sq.push_back(row.l2_error_weighted * row.l2_error_weighted);
    }
    const double med = median(sq);
    const double T = cfg.T_grid[t];
    out.summary.push_back({T, med, med * T * out.kappa_min * out.kappa_min / rate_unit,
                           out.report.rows[t * reps].lambda_used, static_cast<int>(sq.size())});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Frequency of the restricted-eigenvalue event Q_T(r)

struct REProbabilityConfig {
  Index d = 4;
  double density = 0.2;
  double magnitude = 1.0;
  double sigma = 1.0;
  std::vector<double> T_grid{100.0, 500.0, 2000.0};
  int reps = 50;
  double delta = 1e-2;
  /// Event radius; unset means kappa_min / 2.
  std::optional<double> r;
  std::uint64_t seed = 1;

  void validate() const {
    if (d < 1) throw Error("re_probability: d must be positive");
    if (T_grid.empty()) throw Error("re_probability: T grid must be nonempty");
    for (double T : T_grid)
      if (!(T > 0.0)) throw Error("re_probability: T values must be positive");
    if (reps < 1) throw Error("re_probability: reps must be positive");
    if (!(sigma > 0.0)) throw Error("re_probability: sigma must be positive");
    if (r && !(*r > 0.0)) throw Error("re_probability: r must be positive");
  }
};

struct REProbabilityRow {
  double T;
  double frequency;
  int reps;
};

struct REProbabilityResult {
  std::vector<REProbabilityRow> rows;
  double kappa_min = 0.0;
  double r = 0.0;
  /// Runs where Q_T(kappa_min/2) held; on each, lambda_min(C_hat) >= kappa_min/2 was asserted.
  int inclusion_checks = 0;
};

/// Empirical frequency of check_Q_event(stats, C_inf, r) per horizon. On every run
/// the inclusion Q_T(kappa_min/2) => lambda_min(C_hat) >= kappa_min/2 is asserted.
inline REProbabilityResult run_re_probability(const REProbabilityConfig& cfg) {
  cfg.validate();
  Rng rng(split_seed(cfg.seed, 0));
  const Matrix A0 = generate_sparse_stable(cfg.d, cfg.density, cfg.magnitude, rng).matrix();
  const OUModel model = make_ou_model(A0, gaussian_levy(cfg.sigma * Matrix::Identity(cfg.d, cfg.d)));
  const auto moments = stationary_moments(model);
  const double half = moments.kappa_min / 2.0;

  REProbabilityResult out;
  out.kappa_min = moments.kappa_min;
  out.r = cfg.r.value_or(half);
  const std::size_t reps = static_cast<std::size_t>(cfg.reps);
  std::vector<int> hit(cfg.T_grid.size() * reps, 0), inclusion(cfg.T_grid.size() * reps, 0);
  parallel_for(hit.size(), [&](std::size_t job) {
    const std::size_t t = job / reps;
    SimConfig sim;
    sim.T = cfg.T_grid[t];
    sim.delta = cfg.delta;
    sim.seed = split_seed(split_seed(cfg.seed, t + 1), job % reps);
    const SamplePath path = simulate_path(model, sim);
    const SufficientStats stats = compute_stats(path, path.increments());
    hit[job] = check_Q_event(stats, moments.C_inf, out.r) ? 1 : 0;
    if (check_Q_event(stats, moments.C_inf, half)) {
      inclusion[job] = 1;
      if (re_constant(stats) < half * (1.0 - 1e-12))
        throw std::logic_error("Q_T(kappa_min/2) holds but lambda_min(C_hat) < kappa_min/2");
    }
  });
  for (std::size_t t = 0; t < cfg.T_grid.size(); ++t) {
    int hits = 0;
    for (std::size_t rep = 0; rep < reps; ++rep) {
      hits += hit[t * reps + rep];
      out.inclusion_checks += inclusion[t * reps + rep];
    }
    out.rows.push_back({cfg.T_grid[t], static_cast<double>(hits) / cfg.reps, cfg.reps});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Deviation event of the stochastic error over a finite dictionary

struct DeviationCheckConfig {
  Index d = 5;
  double density = 0.2;
  double magnitude = 1.0;
  double sigma = 1.0;
  double T = 500.0;
  double delta = 1e-2;
  double eps0 = 0.1;
  double c0 = 1.0;
  int dictionary_size = 500;
  int reps = 100;
  std::uint64_t seed = 1;

  void validate() const {
    if (d < 1) throw Error("deviation_check: d must be positive");
    if (!(T > 0.0)) throw Error("deviation_check: T must be positive");
    if (!(eps0 > 0.0 && eps0 < 1.0)) throw Error("deviation_check: eps0 must lie in (0,1)");
    if (!(c0 > 0.0)) throw Error("deviation_check: c0 must be positive");
    if (dictionary_size < 1) throw Error("deviation_check: dictionary must be nonempty");
    if (reps < 1) throw Error("deviation_check: reps must be positive");
    if (!(sigma > 0.0)) throw Error("deviation_check: sigma must be positive");
  }
};

struct DeviationRow {
  int replication;
  double statistic;
  double threshold;
  bool violated;
};

struct DeviationCheckResult {
  std::vector<DeviationRow> rows;
  double violation_frequency = 0.0;
  double target = 0.0;  // eps0 / 2
};

/// Random d x d matrices of mixed sparsity: dictionary entry k has
/// 1 + (k mod d^2) nonzero standard normal entries on a random support.
inline std::vector<Matrix> random_dictionary(Index d, int size, Rng& rng) {
  std::vector<Matrix> dict;
  dict.reserve(static_cast<std::size_t>(size));
  std::vector<Index> cells(static_cast<std::size_t>(d * d));
  std::iota(cells.begin(), cells.end(), Index{0});
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < size; ++k) {
    std::shuffle(cells.begin(), cells.end(), rng);
    const Index nnz = 1 + static_cast<Index>(k) % (d * d);
    Matrix B = Matrix::Zero(d, d);
    for (Index j = 0; j < nnz; ++j) B.data()[cells[static_cast<std::size_t>(j)]] = normal(rng);
    dict.push_back(std::move(B));
  }
  return dict;
}

/// max over the dictionary of <eps_T, B> / ||B||_S, times the indicator of Q_T(kappa_max).
/// A lower bound on the supremum over all B.
inline double dictionary_statistic(const Matrix& eps, const std::vector<Matrix>& dict,
                                   const std::vector<double>& norms) {
  double best = 0.0;
  for (std::size_t k = 0; k < dict.size(); ++k) {
    if (norms[k] == 0.0) continue;
    best = std::max(best, (eps.array() * dict[k].array()).sum() / norms[k]);
  }
  return best;
}

/// Violation frequency of max_B <eps_T, B>/||B||_S <= c_star sqrt(kappa_max / T)
/// over a random dictionary (a necessary-condition check of the deviation event).
inline DeviationCheckResult run_deviation_check(const DeviationCheckConfig& cfg) {
  cfg.validate();
  Rng rng(split_seed(cfg.seed, 0));
  const Matrix A0 = generate_sparse_stable(cfg.d, cfg.density, cfg.magnitude, rng).matrix();
  const Matrix sigma = cfg.sigma * Matrix::Identity(cfg.d, cfg.d);
  const OUModel model = make_ou_model(A0, gaussian_levy(sigma));
  const auto moments = stationary_moments(model);
  const TuningParams tuning{cfg.c0, 0.0};
  const double threshold = tuning.c_star() * std::sqrt(moments.kappa_max / cfg.T);

  Rng dict_rng(split_seed(cfg.seed, 0xD1C7ULL));
  const auto dict = random_dictionary(cfg.d, cfg.dictionary_size, dict_rng);
  const SlopeWeights w(cfg.d * cfg.d);
  std::vector<double> norms;
  norms.reserve(dict.size());
  for (const auto& B : dict) norms.push_back(norm_S(B, cfg.eps0, w));

  DeviationCheckResult out;
  out.target = cfg.eps0 / 2.0;
  out.rows.resize(static_cast<std::size_t>(cfg.reps));
  parallel_for(out.rows.size(), [&](std::size_t rep) {
    SimConfig sim;
    sim.T = cfg.T;
    sim.delta = cfg.delta;
    sim.seed = split_seed(split_seed(cfg.seed, 1), rep);
    const SamplePath path = simulate_path(model, sim);
    const Matrix eps = epsilon_T(path, sigma);
    const SufficientStats stats = compute_stats(path, path.increments());
    const double indicator = check_Q_event(stats, moments.C_inf, moments.kappa_max) ? 1.0 : 0.0;
    const double stat = indicator * dictionary_statistic(eps, dict, norms);
    out.rows[rep] = {static_cast<int>(rep), stat, threshold, stat > threshold};
  });
  int violations = 0;
  for (const auto& r : out.rows) violations += r.violated ? 1 : 0;
  out.violation_frequency = static_cast<double>(violations) / cfg.reps;
  return out;
}

}  // namespace sparselab
