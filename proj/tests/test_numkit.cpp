#include "oracles.hpp"
#include "sparselab/numkit.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace sparselab;

TEST(SlopeWeights, DefaultSequence) {
  const SlopeWeights w(12);
  ASSERT_EQ(w.m(), 12);
  for (Index j = 0; j < 12; ++j) {
    EXPECT_DOUBLE_EQ(w.lambdas()(j), std::sqrt(std::log(24.0 / static_cast<double>(j + 1))));
    EXPECT_GT(w.lambdas()(j), 0.0);
    if (j > 0) {
      EXPECT_LE(w.lambdas()(j), w.lambdas()(j - 1));
    }
  }
  EXPECT_DOUBLE_EQ(w.lambdas()(11), std::sqrt(std::log(2.0)));
}

TEST(SlopeWeights, RejectsBadCustomValues) {
  EXPECT_THROW(SlopeWeights::from_values(Vector::LinSpaced(3, 1.0, 2.0)), Error);
  EXPECT_THROW(SlopeWeights::from_values(Vector::Zero(2)), Error);
  EXPECT_THROW(SlopeWeights(0), Error);
  EXPECT_NO_THROW(SlopeWeights::from_values(Vector::Constant(4, 0.5)));
}

TEST(SlopeNorm, SmallCases) {
  Matrix a(1, 1);
  a << -2.5;
  EXPECT_NEAR(slope_norm(a, SlopeWeights(1)), 2.5 * std::sqrt(std::log(2.0)), 1e-15);
  EXPECT_EQ(slope_norm(Matrix::Zero(3, 3), SlopeWeights(9)), 0.0);
  Matrix b(1, 2);
  b << 1.0, 1.0;
  EXPECT_NEAR(slope_norm(b, SlopeWeights(2)), std::sqrt(std::log(4.0)) + std::sqrt(std::log(2.0)), 1e-15);
  EXPECT_THROW(slope_norm(b, SlopeWeights(3)), Error);
}

TEST(SlopeNorm, NormAxioms) {
  Rng rng(11);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int k = 0; k < 200; ++k) {
    const Index d = 1 + k % 5;
    const SlopeWeights w(d * d);
    const Matrix A = oracle::random_matrix(d, d, rng), B = oracle::random_matrix(d, d, rng);
    const double c = u(rng);
    EXPECT_LE(slope_norm(A + B, w), slope_norm(A, w) + slope_norm(B, w) + 1e-12);
    EXPECT_NEAR(slope_norm(c * A, w), std::abs(c) * slope_norm(A, w), 1e-12 * (1.0 + slope_norm(A, w)));
    EXPECT_GT(slope_norm(A, w), 0.0);
  }
}

TEST(SlopeNorm, DominatesScaledL1) {
  Rng rng(12);
  for (int k = 0; k < 200; ++k) {
    const Index d = 1 + k % 6;
    const Matrix B = oracle::random_matrix(d, d, rng);
    EXPECT_LE(std::log(2.0) * B.cwiseAbs().sum(), slope_norm(B, SlopeWeights(d * d)) + 1e-12);
  }
}

TEST(NormS, Examples) {
  const SlopeWeights w(4);
  EXPECT_EQ(norm_S(Matrix::Zero(2, 2), 0.1, w), 0.0);
  Rng rng(13);
  const Matrix B = oracle::random_matrix(2, 2, rng);
  EXPECT_NEAR(norm_S(B, 4.0 / std::exp(4.0), w), std::max(slope_norm(B, w), 2.0 * B.norm()), 1e-14);
  Matrix a(1, 1);
  a << 3.0;
  EXPECT_NEAR(norm_S(a, 0.04, SlopeWeights(1)), 3.0 * std::max(std::sqrt(std::log(2.0)), std::sqrt(std::log(100.0))),
              1e-13);
  EXPECT_THROW(norm_S(a, 1.0, SlopeWeights(1)), Error);
}

TEST(SoftThreshold, Examples) {
  Vector v(1);
  v << 3.0;
  EXPECT_DOUBLE_EQ(soft_threshold(v, 1.0)(0), 2.0);
  v << -0.5;
  EXPECT_DOUBLE_EQ(soft_threshold(v, 1.0)(0), 0.0);
  Rng rng(14);
  const Vector r = oracle::random_vector(7, rng);
  EXPECT_EQ(soft_threshold(r, 0.0), r);
  EXPECT_THROW(soft_threshold(r, -1.0), Error);
}

TEST(ProxSortedL1, ZeroWeightsIsIdentity) {
  Rng rng(15);
  const Vector v = oracle::random_vector(9, rng);
  EXPECT_EQ(prox_sorted_l1(v, Vector::Zero(9)), v);
}

TEST(ProxSortedL1, ConstantWeightsMatchSoftThreshold) {
  Rng rng(16);
  for (int k = 0; k < 50; ++k) {
    const Vector v = oracle::random_vector(8, rng, 2.0);
    EXPECT_LE((prox_sorted_l1(v, Vector::Constant(8, 0.7)) - soft_threshold(v, 0.7)).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(ProxSortedL1, TwoDimensionalGridOracle) {
  Vector v(2), taus(2);
  v << 3.0, 1.0;
  taus << 2.0, 1.0;
  const Vector x = prox_sorted_l1(v, taus);
  const Vector ref =
      oracle::grid_minimize([&](const Vector& y) { return oracle::prox_objective(y, v, taus); }, Vector::Zero(2), 5.0);
  EXPECT_LE((x - ref).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(x(0), 1.0, 1e-14);
  EXPECT_NEAR(x(1), 0.0, 1e-14);
}

TEST(ProxSortedL1, MatchesEnumerationOracle) {
  Rng rng(17);
  std::uniform_int_distribution<int> len(1, 6);
  for (int k = 0; k < 200; ++k) {
    const Index n = len(rng);
    const Vector v = oracle::random_vector(n, rng, 2.0);
    Vector taus = oracle::random_vector(n, rng).cwiseAbs();
    std::sort(taus.data(), taus.data() + n, std::greater<>());
    if (k % 4 == 0) taus.setConstant(0.5);  // ties in the weights
    Vector vv = v;
    if (k % 5 == 0 && n > 1) vv(1) = -vv(0);  // ties in the input magnitudes
    const Vector x = prox_sorted_l1(vv, taus);
    EXPECT_LE((x - oracle::prox_enumerate(vv, taus)).cwiseAbs().maxCoeff(), 1e-9) << "instance " << k;
  }
}

TEST(ProxSortedL1, SubgradientOptimality) {
  Rng rng(18);
  for (int k = 0; k < 500; ++k) {
    const Index n = 1 + k % 12;
    const Vector v = oracle::random_vector(n, rng, 1.5);
    Vector taus = oracle::random_vector(n, rng).cwiseAbs();
    std::sort(taus.data(), taus.data() + n, std::greater<>());
    const Vector x = prox_sorted_l1(v, taus);
    const Vector y = v - x;
    // Dual feasibility: partial sums of |y| sorted descending never exceed those of taus.
    std::vector<double> ys(y.data(), y.data() + n);
    for (auto& e : ys) e = std::abs(e);
    std::sort(ys.begin(), ys.end(), std::greater<>());
    double sy = 0.0, st = 0.0;
    for (Index j = 0; j < n; ++j) {
      sy += ys[static_cast<std::size_t>(j)];
      st += taus(j);
      EXPECT_LE(sy, st + 1e-10);
    }
    // Complementarity: <y, x> equals the penalty at x.
    EXPECT_NEAR(y.dot(x), oracle::sorted_l1(x, taus), 1e-10);
    // Magnitudes follow the input order and are nonnegative.
    const auto order = magnitude_order(std::span<const double>(v.data(), static_cast<std::size_t>(n)));
    for (Index j = 1; j < n; ++j) EXPECT_GE(std::abs(x(order[j - 1])), std::abs(x(order[j])) - 1e-14);
  }
}

TEST(ProxSortedL1, NonExpansive) {
  Rng rng(19);
  for (int k = 0; k < 200; ++k) {
    const Index n = 2 + k % 10;
    Vector taus = oracle::random_vector(n, rng).cwiseAbs();
    std::sort(taus.data(), taus.data() + n, std::greater<>());
    const Vector u = oracle::random_vector(n, rng), v = oracle::random_vector(n, rng);
    EXPECT_LE((prox_sorted_l1(u, taus) - prox_sorted_l1(v, taus)).norm(), (u - v).norm() + 1e-12);
  }
}

TEST(ProxSortedL1, RejectsInvalidWeights) {
  Vector v = Vector::Ones(3);
  Vector up(3);
  up << 1.0, 2.0, 3.0;
  EXPECT_THROW(prox_sorted_l1(v, up), Error);
  EXPECT_THROW(prox_sorted_l1(v, Vector::Constant(3, -1.0)), Error);
  EXPECT_THROW(prox_sorted_l1(v, Vector::Ones(2)), Error);
}

TEST(SymEig, Examples) {
  Matrix m = Vector((Vector(2) << 0.25, 0.5).finished()).asDiagonal();
  auto e = sym_eig_extremes(m);
  EXPECT_DOUBLE_EQ(e.min, 0.25);
  EXPECT_DOUBLE_EQ(e.max, 0.5);
  e = sym_eig_extremes(Matrix::Identity(4, 4));
  EXPECT_DOUBLE_EQ(e.min, 1.0);
  EXPECT_DOUBLE_EQ(e.max, 1.0);
  Matrix bad = Matrix::Identity(2, 2);
  bad(0, 1) = std::nan("");
  EXPECT_THROW(sym_eig_extremes(bad), Error);
}

TEST(SymEig, MatchesCharacteristicPolynomialAt3) {
  Rng rng(20);
  for (int k = 0; k < 100; ++k) {
    const Matrix M = oracle::random_symmetric(3, rng);
    const auto ref = oracle::charpoly_eig3(M);
    const auto e = sym_eig_extremes(M);
    EXPECT_NEAR(e.min, ref[0], 1e-8);
    EXPECT_NEAR(e.max, ref[2], 1e-8);
  }
}

TEST(SymEig, MatchesPowerIterationAt10) {
  Rng rng(21);
  for (int k = 0; k < 20; ++k) {
    const Matrix M = oracle::random_symmetric(10, rng);
    const auto e = sym_eig_extremes(M);
    EXPECT_NEAR(e.max, oracle::power_max_eig(M), 1e-8);
    EXPECT_NEAR(e.min, oracle::power_min_eig(M), 1e-8);
    EXPECT_NEAR(sym_spectral_radius(M), std::max(std::abs(e.min), std::abs(e.max)), 0.0);
  }
}
