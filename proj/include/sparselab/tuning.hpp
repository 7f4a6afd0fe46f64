#pragma once

// Chronological hold-out selection of the penalty level.

#include "sparselab/estimators.hpp"
#include "sparselab/simulate.hpp"
#include "sparselab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sparselab {

/// `count` log-spaced points from lo to hi inclusive.
inline std::vector<double> log_grid(double lo, double hi, int count) {
  if (!(lo > 0.0 && hi >= lo) || count < 1) throw Error("log_grid: need 0 < lo <= hi and count >= 1");
  if (count == 1) return {lo};
  std::vector<double> g(static_cast<std::size_t>(count));
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < count; ++i) g[static_cast<std::size_t>(i)] = std::exp(a + (b - a) * i / (count - 1));
  g.front() = lo;
  g.back() = hi;
  return g;
}

/// Selection score: the validation likelihood divided by the estimate's penalty
/// norm, or the plain validation likelihood.
enum class CVScore { normalized, likelihood };

inline const char* to_string(CVScore s) { return s == CVScore::normalized ? "normalized" : "likelihood"; }

inline CVScore parse_cv_score(const std::string& s) {
  if (s == "normalized") return CVScore::normalized;
  if (s == "likelihood") return CVScore::likelihood;
  throw Error("unknown CV score '" + s + "' (expected normalized or likelihood)");
}

struct CVConfig {
  double split_fraction = 0.8;
  std::vector<double> grid = log_grid(1e-3, 10.0, 40);
  PenaltyKind kind = PenaltyKind::lasso;
  CVScore score = CVScore::likelihood;
  /// Refit the final estimator on the whole path instead of the training segment.
  bool refit_full = false;
  SolverOptions solver;

  void validate() const {
    if (!(split_fraction > 0.0 && split_fraction < 1.0)) throw Error("CVConfig: split_fraction must lie in (0,1)");
    if (grid.empty()) throw Error("CVConfig: grid must be nonempty");
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (!(grid[i] > 0.0)) throw Error("CVConfig: grid values must be positive");
      if (i > 0 && !(grid[i] > grid[i - 1])) throw Error("CVConfig: grid must be strictly increasing");
    }
  }
};

struct CVTraceRow {
  double lambda;
  double score;
  double nll_validation;
  double norm_of_estimate;
  Index nnz;
};

struct CVOutcome {
  double lambda_hat = 0.0;
  EstimatorResult result;
  std::vector<CVTraceRow> trace;  // grid order
};

/// Norm used to normalize the validation score: ||A||_1 for Lasso, ||A||_* for Slope.
inline double cv_norm(PenaltyKind kind, const Matrix& A) {
  if (kind == PenaltyKind::lasso) return A.cwiseAbs().sum();
  return slope_norm(A, SlopeWeights(A.size()));
}

/// Validation score: nll_valid(A) / norm(A) (normalized) or nll_valid(A). The
/// zero matrix scores +infinity under either rule.
inline double cv_score(PenaltyKind kind, CVScore rule, const Objective& validation, const Matrix& A) {
  const double norm = cv_norm(kind, A);
  if (norm == 0.0) return std::numeric_limits<double>::infinity();
  const double value = nll(validation, A);
  return rule == CVScore::normalized ? value / norm : value;
}

/// Fits every grid value on the first split_fraction of the path, scores each fit
/// on the remainder and returns the grid argmin. Fits run from the largest lambda
/// down, each warm-started at the previous solution.
inline CVOutcome cross_validate(const SamplePath& path, const Matrix& increments, const Matrix& sigma,
                                const CVConfig& cfg) {
  cfg.validate();
  const Index d = path.dim();
  const Index n = path.steps();
  const auto split = static_cast<Index>(std::llround(cfg.split_fraction * static_cast<double>(n)));
  if (split < d * d || n - split < d * d)
    throw Error("cross_validate: both segments need at least d^2 = " + std::to_string(d * d) + " steps");

  const Objective train(compute_stats(path, increments, 0, split), sigma);
  const Objective valid(compute_stats(path, increments, split, n), sigma);

  const std::size_t m = cfg.grid.size();
  std::vector<EstimatorResult> fits(m);
  SolverOptions opts = cfg.solver;
  for (std::size_t k = m; k-- > 0;) {
    fits[k] = fit_penalized(cfg.kind, train, cfg.grid[k], opts);
    opts.initial_A = fits[k].A_hat.matrix();
  }

  CVOutcome out;
  out.trace.reserve(m);
  std::size_t best = m;
  for (std::size_t k = 0; k < m; ++k) {
    const Matrix& A = fits[k].A_hat;
    const double score = cv_score(cfg.kind, cfg.score, valid, A);
    out.trace.push_back({cfg.grid[k], score, nll(valid, A), cv_norm(cfg.kind, A), count_nonzero(A, 1e-8)});
    if (std::isfinite(score) && (best == m || score < out.trace[best].score)) best = k;
  }
  if (best == m) throw Error("cross_validate: grid entirely over-penalizes (every candidate estimate is zero)");

  out.lambda_hat = cfg.grid[best];
  if (cfg.refit_full) {
    const Objective full(compute_stats(path, increments), sigma);
    SolverOptions refit = cfg.solver;
    refit.initial_A = fits[best].A_hat.matrix();
    out.result = fit_penalized(cfg.kind, full, out.lambda_hat, refit);
  } else {
    out.result = std::move(fits[best]);
  }
  return out;
}

}  // namespace sparselab
