#pragma once

// Domain types of the Levy-driven OU model dX = (b - A X) dt + Sigma dW + dJ and
// operations on its stationary second moment.

#include "sparselab/core.hpp"
#include "sparselab/numkit.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <variant>

namespace sparselab {

/// Square drift matrix with finite entries.
class DriftMatrix {
 public:
  DriftMatrix() = default;
  explicit DriftMatrix(Matrix entries) : entries_(std::move(entries)) {
    if (entries_.rows() != entries_.cols() || entries_.size() == 0)
      throw Error("DriftMatrix: matrix must be square and nonempty");
    if (!entries_.allFinite()) throw Error("DriftMatrix: non-finite entries");
  }

  Index dim() const { return entries_.rows(); }
  const Matrix& matrix() const { return entries_; }
  operator const Matrix&() const { return entries_; }

 private:
  Matrix entries_;
};

struct NoJumps {};

/// Coordinatewise independent Laplace jump sizes, one scale per coordinate.
struct LaplaceJumps {
  Vector scale;
};

/// Jump sizes drawn from a caller-supplied sampler. `second_moment` is E[z z^T]
/// of a single jump; it enters the stationary moment computation.
struct CustomJumps {
  std::string tag;
  std::function<Vector(Rng&)> sampler;
  Matrix second_moment;
};

using JumpLaw = std::variant<NoJumps, LaplaceJumps, CustomJumps>;

inline LaplaceJumps laplace_jumps(Index d, double scale) { return {Vector::Constant(d, scale)}; }

/// E[z z^T] of a single jump.
inline Matrix jump_second_moment(const JumpLaw& law, Index d) {
  return std::visit(
      [d](const auto& l) -> Matrix {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, NoJumps>) {
          return Matrix::Zero(d, d);
        } else if constexpr (std::is_same_v<L, LaplaceJumps>) {
          return (2.0 * l.scale.array().square()).matrix().asDiagonal();
        } else {
          return l.second_moment;
        }
      },
      law);
}

/// Generating triplet of the driving Levy process: drift b, diffusion Sigma and a
/// compound Poisson jump part.
struct LevySpec {
  Vector drift;
  Matrix sigma;
  double jump_intensity = 0.0;
  JumpLaw jump_law = NoJumps{};

  Index dim() const { return sigma.rows(); }
  bool has_jumps() const { return jump_intensity > 0.0 && !std::holds_alternative<NoJumps>(jump_law); }

  void validate(double max_condition = 1e12) const {
    const Index d = sigma.rows();
    if (d == 0 || sigma.cols() != d) throw Error("LevySpec: sigma must be square and nonempty");
    if (!sigma.allFinite()) throw Error("LevySpec: sigma has non-finite entries");
    if (drift.size() != d) throw Error("LevySpec: drift vector has wrong length");
    Eigen::JacobiSVD<Matrix> svd(sigma);
    const Vector& sv = svd.singularValues();
    if (!(sv(d - 1) > 0.0) || sv(0) / sv(d - 1) > max_condition)
      throw Error("LevySpec: sigma is singular or ill-conditioned (condition estimate " +
                  std::to_string(sv(d - 1) > 0.0 ? sv(0) / sv(d - 1) : INFINITY) + ")");
    if (!(jump_intensity >= 0.0)) throw Error("LevySpec: jump intensity must be nonnegative");
    if (const auto* lap = std::get_if<LaplaceJumps>(&jump_law)) {
      if (lap->scale.size() != d) throw Error("LevySpec: Laplace scale has wrong length");
      if (!(lap->scale.array() > 0.0).all()) throw Error("LevySpec: Laplace scale must be positive");
    }
    if (const auto* custom = std::get_if<CustomJumps>(&jump_law)) {
      if (!custom->sampler) throw Error("LevySpec: custom jump law '" + custom->tag + "' has no sampler");
      if (custom->second_moment.rows() != d || custom->second_moment.cols() != d)
        throw Error("LevySpec: custom jump second moment has wrong shape");
    }
  }
};

inline LevySpec gaussian_levy(const Matrix& sigma) { return {Vector::Zero(sigma.rows()), sigma, 0.0, NoJumps{}}; }

/// Symmetric PSD stationary second moment with its extreme eigenvalues.
struct StationaryMoments {
  Matrix C_inf;
  double kappa_min;
  double kappa_max;
};

namespace detail {

/// Kronecker-sum operator I (x) A + A (x) I acting on column-major vec(X).
inline Matrix lyapunov_operator(const Matrix& A) {
  const Index d = A.rows();
  Matrix K = Matrix::Zero(d * d, d * d);
  for (Index j = 0; j < d; ++j)
    for (Index i = 0; i < d; ++i)
      for (Index k = 0; k < d; ++k) {
        K(i + j * d, k + j * d) += A(i, k);
        K(i + j * d, i + k * d) += A(j, k);
      }
  return K;
}

inline constexpr double kMaxLyapunovCondition = 1e14;
inline constexpr double kSpdTolerance = 1e-10;

/// Factorized Lyapunov operator. `singular` marks an exactly rank-deficient
/// operator, which happens only when two eigenvalues of A sum to zero.
struct LyapunovFactor {
  Eigen::PartialPivLU<Matrix> lu;
  double rcond = 0.0;
  bool singular = false;
};

inline LyapunovFactor factor_lyapunov(const Matrix& A) {
  LyapunovFactor f;
  Matrix K = lyapunov_operator(A);
  f.lu.compute(K);
  f.rcond = f.lu.rcond();
  if (!(f.rcond >= 1.0 / kMaxLyapunovCondition)) {
    Eigen::FullPivLU<Matrix> full(K);
    f.singular = !full.isInvertible();
  }
  return f;
}

inline Matrix solve_factored(const LyapunovFactor& f, const Matrix& Q) {
  const Index d = Q.rows();
  Vector rhs = Eigen::Map<const Vector>(Q.data(), Q.size());
  Vector x = f.lu.solve(rhs);
  return symmetrize(Eigen::Map<const Matrix>(x.data(), d, d));
}

inline void check_square_finite(const Matrix& A, const char* who) {
  if (A.rows() != A.cols() || A.size() == 0) throw Error(std::string(who) + ": matrix must be square and nonempty");
  if (!A.allFinite()) throw Error(std::string(who) + ": non-finite entries");
}

/// Stability verdict from an already factorized operator; throws when undecidable.
inline bool stable_from_factor(const Matrix& A, const LyapunovFactor& f) {
  if (f.singular) return false;
  if (!(f.rcond >= 1.0 / kMaxLyapunovCondition))
    throw StabilityUndecidable("stability undecidable: Lyapunov system condition estimate " +
                               std::to_string(f.rcond > 0.0 ? 1.0 / f.rcond : INFINITY) + " exceeds 1e14");
  const Matrix P = solve_factored(f, Matrix::Identity(A.rows(), A.rows()));
  if (!P.allFinite()) return false;
  return sym_eig_extremes(P).min > kSpdTolerance;
}

}  // namespace detail

/// True iff A P + P A^T = Id has a symmetric positive definite solution, i.e. all
/// eigenvalues of A have positive real part. Throws StabilityUndecidable when the
/// Lyapunov system is too ill-conditioned to tell.
inline bool validate_stability(const Matrix& A) {
  detail::check_square_finite(A, "validate_stability");
  // The trace is the sum of the real parts of the eigenvalues.
  if (A.trace() <= 0.0) return false;
  return detail::stable_from_factor(A, detail::factor_lyapunov(A));
}

/// Solves A X + X A^T = Q for stable A through the d^2 x d^2 Kronecker system.
inline Matrix lyapunov_solve(const Matrix& A, const Matrix& Q) {
  detail::check_square_finite(A, "lyapunov_solve");
  if (Q.rows() != A.rows() || Q.cols() != A.cols()) throw Error("lyapunov_solve: Q has wrong shape");
  if (!Q.allFinite()) throw Error("lyapunov_solve: Q has non-finite entries");
  if (A.trace() <= 0.0) throw Error("lyapunov_solve: drift matrix is not stable");
  const auto factor = detail::factor_lyapunov(A);
  if (!detail::stable_from_factor(A, factor)) throw Error("lyapunov_solve: drift matrix is not stable");
  const Matrix Qs = symmetrize(Q);
  Matrix X = detail::solve_factored(factor, Qs);
  const double residual = spectral_norm(A * X + X * A.transpose() - Qs);
  const double scale = spectral_norm(Qs);
  if (residual > 1e-8 * scale || !X.allFinite())
    throw Error("lyapunov_solve: residual " + std::to_string(residual) + " exceeds 1e-8 * ||Q||");
  return X;
}

/// Exponential decay rate of x' = -A x in the Lyapunov metric M with
/// A^T M + M A = Id: |x(t)| decays at least like exp(-t / (2 lambda_max(M))).
inline double lyapunov_decay_rate(const Matrix& A) {
  const Matrix M = lyapunov_solve(A.transpose(), Matrix::Identity(A.rows(), A.cols()));
  return 1.0 / (2.0 * sym_eig_extremes(M).max);
}

/// Drift plus driving noise; the drift is stable.
struct OUModel {
  DriftMatrix drift;
  LevySpec levy;

  Index dim() const { return drift.dim(); }

  void validate() const {
    levy.validate();
    if (levy.dim() != drift.dim()) throw Error("OUModel: drift and sigma dimensions differ");
    if (!validate_stability(drift)) throw Error("OUModel: drift matrix is not stable");
  }
};

inline OUModel make_ou_model(Matrix drift, LevySpec levy) {
  OUModel m{DriftMatrix(std::move(drift)), std::move(levy)};
  m.validate();
  return m;
}

/// C_inf = Cov + m m^T where Cov solves A Cov + Cov A^T = Sigma Sigma^T + rate E[z z^T]
/// and m = A^{-1} b is the stationary mean.
inline StationaryMoments stationary_moments(const OUModel& model) {
  const Matrix& A = model.drift;
  const Index d = model.dim();
  Matrix Q = model.levy.sigma * model.levy.sigma.transpose();
  if (model.levy.has_jumps()) Q += model.levy.jump_intensity * jump_second_moment(model.levy.jump_law, d);
  Matrix C = lyapunov_solve(A, Q);
  if (model.levy.drift.size() == d && model.levy.drift.squaredNorm() > 0.0) {
    const Vector mean = A.partialPivLu().solve(model.levy.drift);
    C += mean * mean.transpose();
  }
  C = symmetrize(C);
  const auto ext = sym_eig_extremes(C);
  return {std::move(C), ext.min, ext.max};
}

/// Random sparse stable drift: off-diagonal support Bernoulli(density), values
/// uniform on [-magnitude, magnitude], diagonal raised in steps of 0.5 until stable.
inline DriftMatrix generate_sparse_stable(Index d, double density, double magnitude, Rng& rng) {
  if (d < 1) throw Error("generate_sparse_stable: dimension must be positive");
  if (!(density >= 0.0 && density <= 1.0)) throw Error("generate_sparse_stable: density must lie in [0,1]");
  if (!(magnitude >= 0.0)) throw Error("generate_sparse_stable: magnitude must be nonnegative");
  std::bernoulli_distribution keep(density);
  std::uniform_real_distribution<double> value(-magnitude, magnitude);
  Matrix A = Matrix::Zero(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j)
      if (i != j && keep(rng)) A(i, j) = value(rng);

  constexpr int kMaxSteps = 100;
  constexpr double kStep = 0.5;
  for (int step = 1; step <= kMaxSteps; ++step) {
    A.diagonal().setConstant(kStep * step);
    bool stable = false;
    try {
      stable = validate_stability(A);
    } catch (const StabilityUndecidable&) {
      stable = false;
    }
    if (stable) return DriftMatrix(std::move(A));
  }
  throw Error("generate_sparse_stable: no stabilizing diagonal shift within 100 steps");
}

/// Largest even r with r <= (s - d) / 2.
inline Index hypothesis_sparsity(Index d, Index s) {
  Index r = (s - d) / 2;
  if (r % 2 != 0) --r;
  return r;
}

/// Minimax-lower-bound fixtures: matrices 1/2 Id + w B, B antisymmetric with
/// entries in {-1,0,1}, exactly r nonzeros and pairwise l1 separation >= r/8.
inline std::vector<DriftMatrix> generate_hypothesis_set(Index d, Index s, double w, Index count, Rng& rng) {
  if (d < 4) throw Error("generate_hypothesis_set: requires d >= 4");
  if (s < 2 * d) throw Error("generate_hypothesis_set: requires s >= 2d");
  if (!(w > 0.0)) throw Error("generate_hypothesis_set: w must be positive");
  if (count < 1) throw Error("generate_hypothesis_set: count must be positive");
  const Index r = hypothesis_sparsity(d, s);
  const Index pairs = r / 2;

  std::vector<std::pair<Index, Index>> upper;
  for (Index i = 0; i < d; ++i)
    for (Index j = i + 1; j < d; ++j) upper.emplace_back(i, j);

  std::vector<Matrix> accepted;
  std::bernoulli_distribution positive(0.5);
  constexpr int kMaxAttempts = 1000;
  for (int attempt = 0; attempt < kMaxAttempts && static_cast<Index>(accepted.size()) < count; ++attempt) {
    std::shuffle(upper.begin(), upper.end(), rng);
    Matrix B = Matrix::Zero(d, d);
    for (Index k = 0; k < pairs; ++k) {
      const auto [i, j] = upper[static_cast<std::size_t>(k)];
      const double sign = positive(rng) ? 1.0 : -1.0;
      B(i, j) = sign;
      B(j, i) = -sign;
    }
    bool separated = true;
    for (const auto& other : accepted) {
      const double dist = (B - other).cwiseAbs().sum();
      if (dist == 0.0 || dist < static_cast<double>(r) / 8.0) {
        separated = false;
        break;
      }
    }
    if (separated) accepted.push_back(std::move(B));
  }
  if (static_cast<Index>(accepted.size()) < count)
    throw Error("generate_hypothesis_set: separation not satisfiable, achieved " + std::to_string(accepted.size()) +
                " of " + std::to_string(count) + " matrices");

  std::vector<DriftMatrix> out;
  out.reserve(accepted.size());
  for (const auto& B : accepted) {
    Matrix A = 0.5 * Matrix::Identity(d, d) + w * B;
    if (count_nonzero(A) > s || !validate_stability(A))
      throw Error("generate_hypothesis_set: generated matrix violates sparsity or stability");
    out.emplace_back(std::move(A));
  }
  return out;
}

/// KL divergence between the path laws under drifts A and A2 on [0,T]:
/// (T/2) tr((A2 - A) C_inf (A2 - A)^T).
inline double kl_divergence(const Matrix& A, const Matrix& A2, const Matrix& C_inf, double T) {
  if (A.rows() != A2.rows() || A.cols() != A2.cols() || C_inf.rows() != A.cols() || C_inf.cols() != A.cols())
    throw Error("kl_divergence: shape mismatch");
  if (!(T > 0.0)) throw Error("kl_divergence: T must be positive");
  const Matrix D = A2 - A;
  return 0.5 * T * (D * C_inf * D.transpose()).trace();
}

}  // namespace sparselab
