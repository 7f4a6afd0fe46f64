#pragma once

// Negative log-likelihood of the drift, its gradient, the closed-form MLE and
// the penalized Lasso and Slope estimators.
//
// With C = Sigma Sigma^T the objective is
//   L_T(A) = tr(C^{-1} A G^T) + 1/2 tr(C^{-1} A C_hat A^T),
// quadratic in A. Penalized fits run in B = Sigma^{-1} A, where it becomes
//   <B, Sigma^{-1} G> + 1/2 tr(B C_hat B^T)
// so the penalty acts on B directly and the curvature is C_hat alone.

#include "sparselab/core.hpp"
#include "sparselab/model.hpp"
#include "sparselab/numkit.hpp"
#include "sparselab/stats.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

namespace sparselab {

class Objective {
 public:
  Objective(SufficientStats stats, Matrix sigma) : stats_(std::move(stats)), sigma_(std::move(sigma)) {
    const Index d = stats_.dim();
    if (sigma_.rows() != d || sigma_.cols() != d || stats_.G.rows() != d || stats_.G.cols() != d)
      throw Error("Objective: shape mismatch between statistics and sigma");
    Eigen::PartialPivLU<Matrix> lu(sigma_);
    sigma_inv_ = lu.inverse();
    if (!sigma_inv_.allFinite()) throw Error("Objective: sigma is not invertible");
    C_inv_ = sigma_inv_.transpose() * sigma_inv_;
    linear_B_ = sigma_inv_ * stats_.G;
    lipschitz_ = sym_eig_extremes(stats_.C_hat).max;
  }

  const SufficientStats& stats() const { return stats_; }
  const Matrix& sigma() const { return sigma_; }
  const Matrix& sigma_inv() const { return sigma_inv_; }
  const Matrix& C_inv() const { return C_inv_; }
  Index dim() const { return stats_.dim(); }

  /// Largest eigenvalue of C_hat: the gradient Lipschitz constant in B.
  double lipschitz() const { return lipschitz_; }

  Matrix to_B(const Matrix& A) const { return sigma_inv_ * A; }
  Matrix to_A(const Matrix& B) const { return sigma_ * B; }

  /// Smooth part in B coordinates and its gradient.
  double value_B(const Matrix& B) const {
    return (B.array() * linear_B_.array()).sum() + 0.5 * (B.array() * (B * stats_.C_hat).array()).sum();
  }
  Matrix gradient_B(const Matrix& B) const { return linear_B_ + B * stats_.C_hat; }

 private:
  SufficientStats stats_;
  Matrix sigma_;
  Matrix sigma_inv_;
  Matrix C_inv_;
  Matrix linear_B_;
  double lipschitz_ = 0.0;
};

/// L_T(A) = tr(C^{-1} A G^T) + 1/2 tr(C^{-1} A C_hat A^T).
inline double nll(const Objective& obj, const Matrix& A) {
  const Matrix CA = obj.C_inv() * A;
  return (CA.array() * obj.stats().G.array()).sum() + 0.5 * (CA.array() * (A * obj.stats().C_hat).array()).sum();
}

/// C^{-1} (G + A C_hat).
inline Matrix nll_gradient(const Objective& obj, const Matrix& A) {
  return obj.C_inv() * (obj.stats().G + A * obj.stats().C_hat);
}

struct EstimatorResult {
  DriftMatrix A_hat;
  double lambda = 0.0;
  int iterations = 0;
  double optimality_residual = 0.0;
  double objective_value = 0.0;
  bool converged = true;
  /// Objective value after every iteration, when requested.
  std::vector<double> objective_trace;
};

/// Closed-form maximizer of the likelihood: A = -G C_hat^{-1}.
inline EstimatorResult mle(const SufficientStats& stats, const Matrix& sigma) {
  const auto ext = sym_eig_extremes(stats.C_hat);
  if (!(ext.min > 0.0) || ext.max / ext.min > 1e12)
    throw Error("mle: C_hat is singular or ill-conditioned (smallest eigenvalue " + std::to_string(ext.min) + ")");
  const Objective obj(stats, sigma);
  Matrix A = stats.C_hat.ldlt().solve(-stats.G.transpose()).transpose();
  EstimatorResult r;
  r.optimality_residual = nll_gradient(obj, A).norm();
  r.objective_value = nll(obj, A);
  r.A_hat = DriftMatrix(std::move(A));
  return r;
}

enum class PenaltyKind { lasso, slope };

inline const char* to_string(PenaltyKind k) { return k == PenaltyKind::lasso ? "lasso" : "slope"; }

struct SolverOptions {
  double tol = 1e-8;
  int max_iter = 20000;
  /// Starting point in A coordinates; zero when unset.
  std::optional<Matrix> initial_A;
  bool record_trace = false;
};

namespace detail {

/// Relative slack under which an objective increase counts as rounding noise.
inline constexpr double kRoundingSlack = 1e-13;

/// FISTA with adaptive restart on F(B) = f(B) + penalty(B). Momentum is reset
/// when the step direction opposes the last move (gradient restart) or when the
/// accelerated step raises F beyond rounding; in the latter case the step is
/// replaced by a plain proximal-gradient step from the previous iterate, which
/// cannot increase F.
template <class Penalty, class Prox>
EstimatorResult fista(const Objective& obj, double lambda, Penalty&& penalty, Prox&& prox, const SolverOptions& opts) {
  if (!(lambda >= 0.0)) throw Error("penalized fit: lambda must be nonnegative");
  const Index d = obj.dim();
  const double L = obj.lipschitz();
  if (!(L > 0.0)) throw Error("penalized fit: C_hat has no positive eigenvalue");
  const double step = 1.0 / L;

  auto F = [&](const Matrix& B) { return obj.value_B(B) + lambda * penalty(B); };
  auto prox_step = [&](const Matrix& from) -> Matrix { return prox(from - step * obj.gradient_B(from), step); };

  Matrix x = opts.initial_A ? obj.to_B(*opts.initial_A) : Matrix::Zero(d, d);
  if (x.rows() != d || x.cols() != d) throw Error("penalized fit: initial point has wrong shape");
  Matrix y = x;
  double Fx = F(x);
  double t = 1.0;

  EstimatorResult result;
  result.lambda = lambda;
  Matrix x_prox = prox_step(x);
  double residual = (x - x_prox).norm();
  int it = 0;
  while (residual > opts.tol && it < opts.max_iter) {
    ++it;
    Matrix z = prox_step(y);
    double Fz = F(z);
    if (Fz > Fx + kRoundingSlack * std::max(1.0, std::abs(Fx))) {
      t = 1.0;
      z = std::move(x_prox);
      Fz = F(z);
    } else if (((y - z).array() * (z - x).array()).sum() > 0.0) {
      t = 1.0;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = z + ((t - 1.0) / t_next) * (z - x);
    x = std::move(z);
    Fx = Fz;
    t = t_next;
    if (opts.record_trace) result.objective_trace.push_back(Fx);
    x_prox = prox_step(x);
    residual = (x - x_prox).norm();
  }
  result.iterations = it;
  result.optimality_residual = residual;
  result.converged = residual <= opts.tol;
  result.objective_value = Fx;
  result.A_hat = DriftMatrix(obj.to_A(x));
  return result;
}

}  // namespace detail

/// argmin_A L_T(A) + lambda ||Sigma^{-1} A||_1.
inline EstimatorResult fit_lasso(const Objective& obj, double lambda, const SolverOptions& opts = {}) {
  return detail::fista(
      obj, lambda, [](const Matrix& B) { return B.cwiseAbs().sum(); },
      [lambda](const Matrix& V, double step) { return soft_threshold(V, lambda * step); }, opts);
}

/// argmin_A L_T(A) + lambda ||Sigma^{-1} A||_* with sorted-l1 weights w.
inline EstimatorResult fit_slope(const Objective& obj, double lambda, const SlopeWeights& w,
                                 const SolverOptions& opts = {}) {
  if (w.m() != obj.dim() * obj.dim()) throw Error("fit_slope: weight count must equal d^2");
  return detail::fista(
      obj, lambda, [&w](const Matrix& B) { return slope_norm(B, w); },
      [&w, lambda](const Matrix& V, double step) { return prox_sorted_l1(V, Vector((lambda * step) * w.lambdas())); },
      opts);
}

inline EstimatorResult fit_penalized(PenaltyKind kind, const Objective& obj, double lambda,
                                     const SolverOptions& opts = {}) {
  if (kind == PenaltyKind::lasso) return fit_lasso(obj, lambda, opts);
  return fit_slope(obj, lambda, SlopeWeights(obj.dim() * obj.dim()), opts);
}

/// Constants of the theoretical tuning parameters. c0 is the unspecified
/// universal chaining constant; c_star = c0 (sqrt(3 pi / log 2) + sqrt(300)).
struct TuningParams {
  double c0 = 1.0;
  double c_S = 0.0;

  double c_star() const { return c0 * (std::sqrt(3.0 * std::numbers::pi / std::log(2.0)) + std::sqrt(300.0)); }

  /// c_S at its smallest admissible value c_star sqrt(kappa_max).
  static TuningParams for_kappa(double kappa_max, double c0 = 1.0) {
    TuningParams t{c0, 0.0};
    t.c_S = t.c_star() * std::sqrt(kappa_max);
    return t;
  }
};

/// Lasso: 2 c_star sqrt(kappa_max / T log(2 e d^2 / s)), s defaulting to d.
/// Slope: 2 c_S / sqrt(T).
inline double theoretical_lambda(PenaltyKind kind, double kappa_max, double T, Index d,
                                 std::optional<double> s_guess, const TuningParams& tuning) {
  if (!(T > 0.0)) throw Error("theoretical_lambda: T must be positive");
  if (kind == PenaltyKind::slope) return 2.0 * tuning.c_S / std::sqrt(T);
  const double dd = static_cast<double>(d);
  const double s = s_guess.value_or(dd);
  if (!(s >= 1.0 && s <= dd * dd)) throw Error("theoretical_lambda: sparsity guess must lie in [1, d^2]");
  return 2.0 * tuning.c_star() * std::sqrt(kappa_max / T * std::log(2.0 * std::numbers::e * dd * dd / s));
}

}  // namespace sparselab
