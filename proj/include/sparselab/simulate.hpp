#pragma once

// Seeded Euler-Maruyama simulation of Levy-driven OU paths.

#include "sparselab/core.hpp"
#include "sparselab/model.hpp"

#include <cmath>
#include <optional>

namespace sparselab {

struct SimConfig {
  double T = 1.0;
  double delta = 1e-2;
  /// Burn-in time for the jump case; unset means max(50 / decay_rate, 100).
  std::optional<double> burn_in;
  std::uint64_t seed = 0;
  /// Fixed initial state; unset means a stationary draw.
  std::optional<Vector> x0;

  void validate() const {
    if (!(T > 0.0)) throw Error("SimConfig: T must be positive");
    if (!(delta > 0.0 && delta <= T)) throw Error("SimConfig: delta must lie in (0, T]");
    if (burn_in && !(*burn_in >= 0.0)) throw Error("SimConfig: burn_in must be nonnegative");
  }

  Index steps() const { return static_cast<Index>(std::llround(T / delta)); }
};

struct JumpMark {
  Index step;
  Vector size;
};

/// Discretized trajectory. Column k of `states` is X_k; column k of
/// `gauss_increments` is the Gaussian increment of step k. Paths read back from
/// disk carry no recorded increments or jump marks.
struct SamplePath {
  double delta = 0.0;
  Matrix states;
  Matrix gauss_increments;
  std::vector<JumpMark> jump_marks;

  Index dim() const { return states.rows(); }
  Index steps() const { return states.cols() > 0 ? states.cols() - 1 : 0; }
  double T() const { return static_cast<double>(steps()) * delta; }
  bool has_recorded_increments() const { return gauss_increments.cols() == steps() && steps() > 0; }

  /// Observed increments X_{k+1} - X_k, one column per step.
  Matrix increments() const {
    const Index n = steps();
    return states.rightCols(n) - states.leftCols(n);
  }

  /// Continuous-part increments X_{k+1} - X_k minus the recorded jumps.
  Matrix continuous_increments() const {
    Matrix inc = increments();
    for (const auto& mark : jump_marks) inc.col(mark.step) -= mark.size;
    return inc;
  }
};

/// One Euler-Maruyama step X + (b - A X) delta + gauss + jump.
inline Vector euler_step(const Matrix& A, const Vector& b, double delta, const Vector& x, const Vector& gauss,
                         const Vector& jump) {
  Vector next = x - delta * (A * x);
  next += delta * b;
  next += gauss;
  next += jump;
  return next;
}

struct JumpDraw {
  Vector size;
  int count = 0;
};

inline Vector sample_jump(const JumpLaw& law, Index d, Rng& rng) {
  return std::visit(
      [&](const auto& l) -> Vector {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, NoJumps>) {
          return Vector::Zero(d);
        } else if constexpr (std::is_same_v<L, LaplaceJumps>) {
          Vector z(d);
          std::exponential_distribution<double> magnitude(1.0);
          std::bernoulli_distribution positive(0.5);
          for (Index i = 0; i < d; ++i) {
            const double m = l.scale(i) * magnitude(rng);
            z(i) = positive(rng) ? m : -m;
          }
          return z;
        } else {
          Vector z = l.sampler(rng);
          if (z.size() != d) throw Error("custom jump sampler '" + l.tag + "' returned wrong dimension");
          return z;
        }
      },
      law);
}

/// Compound Poisson increment over one step: K ~ Poisson(intensity * delta) jumps.
inline JumpDraw sample_compound_poisson(double intensity, const JumpLaw& law, double delta, Index d, Rng& rng) {
  if (!(intensity >= 0.0)) throw Error("sample_compound_poisson: intensity must be nonnegative");
  JumpDraw draw{Vector::Zero(d), 0};
  if (intensity == 0.0 || std::holds_alternative<NoJumps>(law)) return draw;
  std::poisson_distribution<int> count(intensity * delta);
  draw.count = count(rng);
  for (int k = 0; k < draw.count; ++k) draw.size += sample_jump(law, d, rng);
  return draw;
}

namespace detail {

inline Vector standard_normal(Index d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector xi(d);
  for (Index i = 0; i < d; ++i) xi(i) = normal(rng);
  return xi;
}

/// Advances x by `steps` Euler steps without recording.
inline Vector advance(const OUModel& model, double delta, Index steps, Vector x, Rng& rng) {
  const Matrix& A = model.drift;
  const Index d = model.dim();
  const double root_delta = std::sqrt(delta);
  for (Index k = 0; k < steps; ++k) {
    const Vector gauss = model.levy.sigma * (root_delta * standard_normal(d, rng));
    const JumpDraw jump = sample_compound_poisson(model.levy.jump_intensity, model.levy.jump_law, delta, d, rng);
    x = euler_step(A, model.levy.drift, delta, x, gauss, jump.size);
  }
  return x;
}

}  // namespace detail

/// Default burn-in time for jump-driven models.
inline double default_burn_in(const OUModel& model) {
  return std::max(50.0 / lyapunov_decay_rate(model.drift), 100.0);
}

/// Initial state distributed (approximately) by the invariant law. Without jumps
/// this is an exact draw from N(A^{-1} b, Cov) with A Cov + Cov A^T = Sigma Sigma^T;
/// with jumps the same draw is followed by a burn-in run.
inline Vector stationary_init(const OUModel& model, const SimConfig& cfg, Rng& rng) {
  const Matrix& A = model.drift;
  const Index d = model.dim();
  const Matrix cov = lyapunov_solve(A, model.levy.sigma * model.levy.sigma.transpose());
  Eigen::LLT<Matrix> chol(cov);
  if (chol.info() != Eigen::Success || sym_eig_extremes(cov).min <= 0.0)
    throw Error("stationary_init: stationary covariance is not positive definite");
  Vector mean = Vector::Zero(d);
  if (model.levy.drift.size() == d && model.levy.drift.squaredNorm() > 0.0)
    mean = A.partialPivLu().solve(model.levy.drift);
  Vector x = mean + chol.matrixL() * detail::standard_normal(d, rng);
  if (!model.levy.has_jumps()) return x;
  const double burn = cfg.burn_in ? *cfg.burn_in : default_burn_in(model);
  const auto steps = static_cast<Index>(std::llround(burn / cfg.delta));
  return detail::advance(model, cfg.delta, steps, std::move(x), rng);
}

/// Simulates X_0..X_N, N = round(T / delta), from the seeded generator. Identical
/// (model, cfg) produce bitwise identical paths.
inline SamplePath simulate_path(const OUModel& model, const SimConfig& cfg) {
  cfg.validate();
  const Index d = model.dim();
  if (model.levy.sigma.rows() != d || model.levy.sigma.cols() != d)
    throw Error("simulate_path: sigma dimension does not match drift");
  const Matrix& A = model.drift;
  const Vector b = model.levy.drift.size() == d ? model.levy.drift : Vector::Zero(d);
  Rng rng(cfg.seed);

  SamplePath path;
  path.delta = cfg.delta;
  const Index n = cfg.steps();
  path.states.resize(d, n + 1);
  path.gauss_increments.resize(d, n);

  if (cfg.x0) {
    if (cfg.x0->size() != d) throw Error("simulate_path: x0 has wrong dimension");
    path.states.col(0) = *cfg.x0;
  } else {
    path.states.col(0) = stationary_init(model, cfg, rng);
  }

  const double root_delta = std::sqrt(cfg.delta);
  Vector x = path.states.col(0);
  for (Index k = 0; k < n; ++k) {
    const Vector gauss = model.levy.sigma * (root_delta * detail::standard_normal(d, rng));
    const JumpDraw jump =
        sample_compound_poisson(model.levy.jump_intensity, model.levy.jump_law, cfg.delta, d, rng);
    if (jump.count > 0) path.jump_marks.push_back({k, jump.size});
    x = euler_step(A, b, cfg.delta, x, gauss, jump.size);
    path.gauss_increments.col(k) = gauss;
    path.states.col(k + 1) = x;
  }
  return path;
}

}  // namespace sparselab
