#pragma once

// Sufficient statistics of the likelihood, jump filtering, and the
// restricted-eigenvalue and concentration diagnostics.

#include "sparselab/core.hpp"
#include "sparselab/model.hpp"
#include "sparselab/numkit.hpp"
#include "sparselab/simulate.hpp"

#include <cmath>
#include <limits>
#include <optional>

namespace sparselab {

/// C_hat = (1/T) sum_k X_k X_k^T delta and G = (1/T) sum_k dXc_k X_k^T over a
/// window of T time units.
struct SufficientStats {
  Matrix C_hat;
  Matrix G;
  double T = 0.0;

  Index dim() const { return C_hat.rows(); }
};

/// Increment k is a jump iff ||dX_k + delta A_pilot X_k|| > v sigma_max delta^beta.
struct FilterRule {
  double v = 4.0;
  double beta = 0.49;
  std::optional<Matrix> pilot_drift;

  void validate() const {
    if (!(v > 0.0)) throw Error("FilterRule: threshold coefficient must be positive");
    if (!(beta > 0.0 && beta < 0.5)) throw Error("FilterRule: exponent must lie in (0, 1/2)");
  }

  double threshold(double sigma_max, double delta) const { return v * sigma_max * std::pow(delta, beta); }
};

struct FilteredIncrements {
  Matrix increments;          // d x N, flagged steps zeroed
  std::vector<Index> flagged; // step indices classified as jumps
};

/// Estimated continuous increments: observed increments with jump-contaminated
/// steps replaced by zero so the time alignment of the Riemann sums is kept.
inline FilteredIncrements filter_jumps(const SamplePath& path, const FilterRule& rule, double sigma_max) {
  rule.validate();
  if (!(sigma_max > 0.0)) throw Error("filter_jumps: sigma_max must be positive");
  FilteredIncrements out{path.increments(), {}};
  const double cut = rule.threshold(sigma_max, path.delta);
  if (std::isinf(cut)) return out;
  const Index d = path.dim();
  if (rule.pilot_drift && (rule.pilot_drift->rows() != d || rule.pilot_drift->cols() != d))
    throw Error("filter_jumps: pilot drift has wrong shape");
  for (Index k = 0; k < path.steps(); ++k) {
    double size = 0.0;
    if (rule.pilot_drift)
      size = (out.increments.col(k) + path.delta * (*rule.pilot_drift * path.states.col(k))).norm();
    else
      size = out.increments.col(k).norm();
    if (size > cut) {
      out.increments.col(k).setZero();
      out.flagged.push_back(k);
    }
  }
  return out;
}

/// Statistics over steps [begin, end).
inline SufficientStats compute_stats(const SamplePath& path, const Matrix& increments, Index begin, Index end) {
  if (increments.cols() != path.steps() || increments.rows() != path.dim())
    throw Error("compute_stats: increments do not match the path (" + std::to_string(increments.cols()) +
                " vs " + std::to_string(path.steps()) + " steps)");
  if (begin < 0 || end > path.steps() || begin >= end) throw Error("compute_stats: invalid step window");
  const Index n = end - begin;
  const double T = static_cast<double>(n) * path.delta;
  const auto X = path.states.middleCols(begin, n);
  SufficientStats s;
  s.T = T;
  s.C_hat = symmetrize((X * X.transpose()) * (path.delta / T));
  s.G = (increments.middleCols(begin, n) * X.transpose()) / T;
  return s;
}

inline SufficientStats compute_stats(const SamplePath& path, const Matrix& increments) {
  return compute_stats(path, increments, 0, path.steps());
}

/// Q_T(r): sup over ||B||_F <= 1 of |tr(B (C_hat - C_inf) B^T)| <= r. The sup is
/// the spectral radius of the symmetric difference.
inline bool check_Q_event(const SufficientStats& stats, const Matrix& C_inf, double r) {
  if (C_inf.rows() != stats.dim() || C_inf.cols() != stats.dim()) throw Error("check_Q_event: shape mismatch");
  return sym_spectral_radius(stats.C_hat - C_inf) <= r;
}

/// inf over B != 0 of ||B X||_{L2}^2 / ||B||_F^2, which equals lambda_min(C_hat).
inline double re_constant(const SufficientStats& stats) { return sym_eig_extremes(stats.C_hat).min; }

/// eps_T = (1/T) sum_k (Sigma^{-1} g_k) X_k^T from the recorded Gaussian increments g_k.
/// Diagnostic only: estimators never see the recorded increments.
inline Matrix epsilon_T(const SamplePath& path, const Matrix& sigma) {
  if (!path.has_recorded_increments()) throw Error("epsilon_T: path has no recorded Gaussian increments");
  if (sigma.rows() != path.dim() || sigma.cols() != path.dim()) throw Error("epsilon_T: sigma has wrong shape");
  const Index n = path.steps();
  const Matrix W = sigma.partialPivLu().solve(path.gauss_increments);
  return (W * path.states.leftCols(n).transpose()) / path.T();
}

/// Probability bound 2 exp(-T H0(r)) of the Gaussian concentration inequality,
/// H0(r) = tau0 r^2 / (8 kappa_max p0 (r + kappa_max)), for unit-covariance noise.
/// tau0 is the smallest real part of the drift eigenvalues and p0 the condition
/// number of its eigenvector matrix.
inline double gaussian_concentration_bound(double T, double r, double tau0, double p0, double kappa_max) {
  const double h0 = tau0 * r * r / (8.0 * kappa_max * p0 * (r + kappa_max));
  return 2.0 * std::exp(-T * h0);
}

struct ConcentrationCell {
  double T;
  double r;
  double frequency;
};

/// Replication frequency of |u^T (C_hat_T - C_inf) u| >= r, maximized over the
/// canonical basis plus five random unit vectors.
inline std::vector<ConcentrationCell> empirical_concentration(const OUModel& model, const std::vector<double>& T_grid,
                                                              const std::vector<double>& r_grid, int reps,
                                                              std::uint64_t seed, double delta = 1e-2) {
  if (T_grid.empty() || r_grid.empty()) throw Error("empirical_concentration: grids must be nonempty");
  if (reps < 1) throw Error("empirical_concentration: reps must be positive");
  const Index d = model.dim();
  const Matrix C_inf = stationary_moments(model).C_inf;

  std::vector<Vector> directions;
  for (Index i = 0; i < d; ++i) directions.push_back(Vector::Unit(d, i));
  Rng dir_rng(split_seed(seed, 0xD1EC7105ULL));
  for (int k = 0; k < 5; ++k) {
    Vector u = detail::standard_normal(d, dir_rng);
    directions.push_back(u / u.norm());
  }

  const std::size_t nT = T_grid.size();
  // deviations[t][rep][u]
  std::vector<std::vector<std::vector<double>>> deviations(nT, std::vector<std::vector<double>>(reps));
  parallel_for(nT * static_cast<std::size_t>(reps), [&](std::size_t job) {
    const std::size_t t = job / static_cast<std::size_t>(reps);
    const std::size_t rep = job % static_cast<std::size_t>(reps);
    SimConfig cfg;
    cfg.T = T_grid[t];
    cfg.delta = delta;
    cfg.seed = split_seed(split_seed(seed, t + 1), rep);
    const SamplePath path = simulate_path(model, cfg);
    const Index n = path.steps();
    const Matrix X = path.states.leftCols(n);
    const Matrix diff = (X * X.transpose()) * (path.delta / path.T()) - C_inf;
    auto& row = deviations[t][rep];
    for (const auto& u : directions) row.push_back(std::abs(u.dot(diff * u)));
  });

  std::vector<ConcentrationCell> cells;
  for (std::size_t t = 0; t < nT; ++t)
    for (double r : r_grid) {
      double worst = 0.0;
      for (std::size_t u = 0; u < directions.size(); ++u) {
        int hits = 0;
        for (int rep = 0; rep < reps; ++rep) hits += deviations[t][rep][u] >= r ? 1 : 0;
        worst = std::max(worst, static_cast<double>(hits) / reps);
      }
      cells.push_back({T_grid[t], r, worst});
    }
  return cells;
}

}  // namespace sparselab
