#include "oracles.hpp"
#include "sparselab/tuning.hpp"

#include <gtest/gtest.h>

using namespace sparselab;

namespace {

struct Fixture {
  Matrix A0;
  Matrix sigma;
  SamplePath path;
};

Fixture gaussian_fixture(Index d, double T, std::uint64_t seed) {
  Rng rng(seed);
  Fixture f;
  f.A0 = generate_sparse_stable(d, 0.3, 1.0, rng).matrix();
  f.sigma = Matrix::Identity(d, d);
  SimConfig cfg;
  cfg.T = T;
  cfg.seed = seed + 1;
  f.path = simulate_path(make_ou_model(f.A0, gaussian_levy(f.sigma)), cfg);
  return f;
}

}  // namespace

TEST(LogGrid, Properties) {
  const auto g = log_grid(1e-3, 10.0, 40);
  ASSERT_EQ(g.size(), 40u);
  EXPECT_EQ(g.front(), 1e-3);
  EXPECT_EQ(g.back(), 10.0);
  for (std::size_t i = 2; i < g.size(); ++i)
    EXPECT_NEAR(std::log(g[i]) - std::log(g[i - 1]), std::log(g[1]) - std::log(g[0]), 1e-12);
  EXPECT_EQ(log_grid(2.0, 5.0, 1), std::vector<double>{2.0});
  EXPECT_THROW(log_grid(0.0, 1.0, 3), Error);
  EXPECT_THROW(log_grid(2.0, 1.0, 3), Error);
}

TEST(CVScoreRule, ParsingAndZeroEstimate) {
  EXPECT_EQ(parse_cv_score("normalized"), CVScore::normalized);
  EXPECT_EQ(parse_cv_score("likelihood"), CVScore::likelihood);
  EXPECT_THROW(parse_cv_score("aic"), Error);
  Rng rng(101);
  const Objective obj(oracle::synthetic_stats(3, rng), Matrix::Identity(3, 3));
  for (auto rule : {CVScore::normalized, CVScore::likelihood})
    for (auto kind : {PenaltyKind::lasso, PenaltyKind::slope})
      EXPECT_EQ(cv_score(kind, rule, obj, Matrix::Zero(3, 3)), std::numeric_limits<double>::infinity());
  const Matrix A = oracle::random_matrix(3, 3, rng);
  EXPECT_NEAR(cv_score(PenaltyKind::lasso, CVScore::normalized, obj, A), nll(obj, A) / A.cwiseAbs().sum(), 1e-12);
}

TEST(CrossValidate, SingleGridPoint) {
  const auto f = gaussian_fixture(3, 50.0, 102);
  CVConfig cfg;
  cfg.grid = {0.05};
  const auto out = cross_validate(f.path, f.path.increments(), f.sigma, cfg);
  EXPECT_EQ(out.lambda_hat, 0.05);
  ASSERT_EQ(out.trace.size(), 1u);
}

TEST(CrossValidate, TraceMatchesIndependentRefits) {
  const auto f = gaussian_fixture(3, 60.0, 103);
  for (auto kind : {PenaltyKind::lasso, PenaltyKind::slope}) {
    CVConfig cfg;
    cfg.kind = kind;
    cfg.grid = log_grid(1e-3, 1.0, 8);
    cfg.solver.tol = 1e-11;
    const Matrix inc = f.path.increments();
    const auto out = cross_validate(f.path, inc, f.sigma, cfg);
    const Index split = static_cast<Index>(std::llround(0.8 * static_cast<double>(f.path.steps())));
    const Objective train(compute_stats(f.path, inc, 0, split), f.sigma);
    const Objective valid(compute_stats(f.path, inc, split, f.path.steps()), f.sigma);
    std::size_t best = 0;
    for (std::size_t k = 0; k < cfg.grid.size(); ++k) {
      SolverOptions opts;
      opts.tol = 1e-11;
      const Matrix A = fit_penalized(kind, train, cfg.grid[k], opts).A_hat;
      EXPECT_NEAR(out.trace[k].nll_validation, nll(valid, A), 1e-6);
      EXPECT_EQ(out.trace[k].lambda, cfg.grid[k]);
      if (out.trace[k].score < out.trace[best].score) best = k;
    }
    EXPECT_EQ(out.lambda_hat, cfg.grid[best]);
  }
}

TEST(CrossValidate, Deterministic) {
  const auto f = gaussian_fixture(4, 40.0, 104);
  CVConfig cfg;
  cfg.grid = log_grid(1e-3, 1.0, 10);
  cfg.kind = PenaltyKind::slope;
  const auto a = cross_validate(f.path, f.path.increments(), f.sigma, cfg);
  const auto b = cross_validate(f.path, f.path.increments(), f.sigma, cfg);
  EXPECT_EQ(a.lambda_hat, b.lambda_hat);
  EXPECT_EQ(a.result.A_hat.matrix(), b.result.A_hat.matrix());
  for (std::size_t k = 0; k < a.trace.size(); ++k) EXPECT_EQ(a.trace[k].score, b.trace[k].score);
}

TEST(CrossValidate, OverPenalizedGridIsAnError) {
  const auto f = gaussian_fixture(3, 40.0, 105);
  CVConfig cfg;
  cfg.grid = {1e3, 1e4};
  EXPECT_THROW(cross_validate(f.path, f.path.increments(), f.sigma, cfg), Error);
}

TEST(CrossValidate, RejectsBadConfigurations) {
  const auto f = gaussian_fixture(3, 40.0, 106);
  CVConfig cfg;
  cfg.grid = {0.1, 0.05};
  EXPECT_THROW(cross_validate(f.path, f.path.increments(), f.sigma, cfg), Error);
  cfg.grid = {0.1};
  cfg.split_fraction = 1.0;
  EXPECT_THROW(cross_validate(f.path, f.path.increments(), f.sigma, cfg), Error);
  cfg.split_fraction = 0.8;
  const auto shortp = gaussian_fixture(5, 0.2, 107);
  EXPECT_THROW(cross_validate(shortp.path, shortp.path.increments(), shortp.sigma, cfg), Error);
}

TEST(CrossValidate, RefitUsesWholePath) {
  const auto f = gaussian_fixture(3, 50.0, 108);
  CVConfig cfg;
  cfg.grid = log_grid(1e-3, 1.0, 6);
  cfg.refit_full = true;
  cfg.solver.tol = 1e-11;
  const auto out = cross_validate(f.path, f.path.increments(), f.sigma, cfg);
  SolverOptions opts;
  opts.tol = 1e-11;
  const Matrix ref = fit_lasso(Objective(compute_stats(f.path, f.path.increments()), f.sigma), out.lambda_hat, opts).A_hat;
  EXPECT_LE((out.result.A_hat.matrix() - ref).cwiseAbs().maxCoeff(), 1e-7);
}
