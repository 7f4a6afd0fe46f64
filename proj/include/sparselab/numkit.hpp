#pragma once

// Numerical kernels: sorted-l1 weights and norms, proximal operators and
// symmetric eigenvalue extremes.

#include "sparselab/core.hpp"

#include <cmath>
#include <numeric>
#include <span>

namespace sparselab {

/// Nonincreasing positive weights of the sorted-l1 norm on m coordinates.
/// The default weights are lambda_j = sqrt(log(2m/j)), j = 1..m.
class SlopeWeights {
 public:
  explicit SlopeWeights(Index m) : lambdas_(m) {
    if (m < 1) throw Error("SlopeWeights: coordinate count must be positive");
    for (Index j = 0; j < m; ++j)
      lambdas_(j) = std::sqrt(std::log(2.0 * static_cast<double>(m) / static_cast<double>(j + 1)));
  }

  /// Custom weights; must be nonincreasing and strictly positive.
  static SlopeWeights from_values(Vector values) {
    if (values.size() < 1) throw Error("SlopeWeights: empty weight vector");
    for (Index j = 0; j < values.size(); ++j) {
      if (!(values(j) > 0.0)) throw Error("SlopeWeights: weights must be strictly positive");
      if (j > 0 && values(j) > values(j - 1)) throw Error("SlopeWeights: weights must be nonincreasing");
    }
    SlopeWeights w;
    w.lambdas_ = std::move(values);
    return w;
  }

  Index m() const { return lambdas_.size(); }
  const Vector& lambdas() const { return lambdas_; }

 private:
  SlopeWeights() = default;
  Vector lambdas_;
};

/// Indices ordering |v| nonincreasingly; ties keep their original order.
inline std::vector<Index> magnitude_order(std::span<const double> v) {
  std::vector<Index> order(v.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return std::abs(v[a]) > std::abs(v[b]); });
  return order;
}

/// Sorted-l1 norm of the entries of B: sum_j lambda_j |B|_(j).
inline double slope_norm(const Matrix& B, const SlopeWeights& w) {
  if (B.size() != w.m())
    throw Error("slope_norm: weight count " + std::to_string(w.m()) + " does not match entry count " +
                std::to_string(B.size()));
  std::vector<double> mags(B.data(), B.data() + B.size());
  for (auto& x : mags) x = std::abs(x);
  std::stable_sort(mags.begin(), mags.end(), std::greater<>());
  double total = 0.0;
  for (Index j = 0; j < w.m(); ++j) total += w.lambdas()(j) * mags[j];
  return total;
}

/// ||B||_S = max(||B||_*, sqrt(log(4/eps0)) ||B||_F).
inline double norm_S(const Matrix& B, double eps0, const SlopeWeights& w) {
  if (!(eps0 > 0.0 && eps0 < 1.0)) throw Error("norm_S: eps0 must lie in (0,1)");
  return std::max(slope_norm(B, w), std::sqrt(std::log(4.0 / eps0)) * B.norm());
}

/// Componentwise sign(v) max(|v| - tau, 0).
inline Vector soft_threshold(const Vector& v, double tau) {
  if (tau < 0.0) throw Error("soft_threshold: tau must be nonnegative");
  return v.unaryExpr([tau](double x) {
    const double m = std::abs(x) - tau;
    return m > 0.0 ? std::copysign(m, x) : 0.0;
  });
}

inline Matrix soft_threshold(const Matrix& v, double tau) {
  Vector flat = Eigen::Map<const Vector>(v.data(), v.size());
  Vector out = soft_threshold(flat, tau);
  return Eigen::Map<const Matrix>(out.data(), v.rows(), v.cols());
}

/// Proximal operator of x -> sum_j taus_j |x|_(j):
/// argmin_x 0.5 ||x - v||^2 + sum_j taus_j |x|_(j).
///
/// Sorts |v| nonincreasingly, subtracts the weights, projects the result onto
/// the nonincreasing cone by pool-adjacent-violators, clips at zero and
/// restores signs and positions. O(m log m).
inline Vector prox_sorted_l1(const Vector& v, const Vector& taus) {
  const Index n = v.size();
  if (taus.size() != n) throw Error("prox_sorted_l1: weight count does not match input length");
  for (Index j = 0; j < n; ++j) {
    if (!(taus(j) >= 0.0)) throw Error("prox_sorted_l1: weights must be nonnegative");
    if (j > 0 && taus(j) > taus(j - 1)) throw Error("prox_sorted_l1: weights must be nonincreasing");
  }
  if (n == 0) return v;

  const auto order = magnitude_order(std::span<const double>(v.data(), static_cast<std::size_t>(n)));

  struct Block {
    Index start;
    Index end;  // inclusive
    double sum;
    double mean() const { return sum / static_cast<double>(end - start + 1); }
  };
  std::vector<Block> blocks;
  blocks.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    blocks.push_back({i, i, std::abs(v(order[i])) - taus(i)});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].mean() <= blocks.back().mean()) {
      Block top = blocks.back();
      blocks.pop_back();
      blocks.back().end = top.end;
      blocks.back().sum += top.sum;
    }
  }

  Vector x = Vector::Zero(n);
  for (const auto& b : blocks) {
    const double level = std::max(b.mean(), 0.0);
    if (level == 0.0) continue;
    for (Index i = b.start; i <= b.end; ++i) x(order[i]) = std::copysign(level, v(order[i]));
  }
  return x;
}

inline Matrix prox_sorted_l1(const Matrix& v, const Vector& taus) {
  Vector flat = Eigen::Map<const Vector>(v.data(), v.size());
  Vector out = prox_sorted_l1(flat, taus);
  return Eigen::Map<const Matrix>(out.data(), v.rows(), v.cols());
}

struct EigenExtremes {
  double min;
  double max;
};

/// Smallest and largest eigenvalue of a symmetric matrix (symmetrized first).
inline EigenExtremes sym_eig_extremes(const Matrix& M) {
  if (M.rows() != M.cols() || M.size() == 0) throw Error("sym_eig_extremes: matrix must be square and nonempty");
  if (!M.allFinite()) throw Error("sym_eig_extremes: non-finite entries");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrize(M), Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw Error("sym_eig_extremes: eigensolver did not converge");
  const Vector& ev = solver.eigenvalues();
  return {ev.minCoeff(), ev.maxCoeff()};
}

/// Largest eigenvalue magnitude of a symmetric matrix.
inline double sym_spectral_radius(const Matrix& M) {
  const auto e = sym_eig_extremes(M);
  return std::max(std::abs(e.min), std::abs(e.max));
}

}  // namespace sparselab
