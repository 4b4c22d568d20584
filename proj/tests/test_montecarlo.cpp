#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "pmdesign/montecarlo.hpp"

using namespace pmdesign;

namespace {

CellConfig continuous_cell(const CovariateMatrix& x, DesignSpec design, std::size_t reps) {
  CellConfig cfg;
  cfg.model = simulation_model(ResponseKind::continuous, x.n_covariates());
  cfg.covariates = x;
  cfg.design = std::move(design);
  cfg.n_reps = reps;
  cfg.bootstrap_reps = 50;
  cfg.seed = 2024;
  cfg.cell_id = 3;
  return cfg;
}

double closed_form_mean(const CellConfig& cfg) {
  const auto means = potential_means(cfg.model, cfg.covariates);
  const auto rho = residual_variances(cfg.model, means.mu_T, means.mu_C);
  std::vector<double> mu(means.mu_T.size());
  for (std::size_t i = 0; i < mu.size(); ++i) mu[i] = means.mu_T[i] + means.mu_C[i];
  return mean_mse(mu, rho, design_covariance(cfg.design));
}

}  // namespace

TEST(EmpiricalQuantile, Examples) {
  std::vector<double> s(100);
  std::iota(s.begin(), s.end(), 1.0);
  EXPECT_EQ(empirical_quantile(s, 0.95), 95.0);
  EXPECT_EQ(empirical_quantile(s, 0.951), 96.0);
  EXPECT_EQ(empirical_quantile(s, 1.0), 100.0);
  EXPECT_EQ(empirical_quantile(s, 0.999999), 100.0);
  EXPECT_EQ(empirical_quantile(s, 0.001), 1.0);
  const std::vector<double> c(17, 4.25);
  for (double q : {0.01, 0.5, 0.95, 1.0}) EXPECT_EQ(empirical_quantile(c, q), 4.25);
  EXPECT_THROW(empirical_quantile(std::vector<double>{}, 0.5), std::invalid_argument);
}

TEST(Bootstrap, ConstantSamplesZeroWidth) {
  Stream rng(1);
  const std::vector<double> c(50, 3.0);
  const auto ci = bootstrap_ci(c, sample_mean, 0.95, 200, rng);
  EXPECT_EQ(ci.lo, 3.0);
  EXPECT_EQ(ci.hi, 3.0);
}

TEST(Bootstrap, SingleResampleIsDegenerate) {
  Stream rng(2);
  std::vector<double> s(30);
  for (auto& v : s) v = rng.uniform();
  const auto ci = bootstrap_ci(s, sample_mean, 0.95, 1, rng);
  EXPECT_EQ(ci.lo, ci.hi);
}

TEST(Bootstrap, DeterministicAndWorkerInvariant) {
  std::vector<double> s(500);
  Stream data(3);
  for (auto& v : s) v = standard_normal(data);
  Stream a(9), b(9);
  const auto x = bootstrap_ci(s, sample_mean, 0.9, 300, a, 1);
  const auto y = bootstrap_ci(s, sample_mean, 0.9, 300, b, 4);
  EXPECT_EQ(x.lo, y.lo);
  EXPECT_EQ(x.hi, y.hi);
  EXPECT_LT(x.lo, x.hi);
}

TEST(Bootstrap, MeanCoverageNearNominal) {
  const std::size_t outer = 1000;
  const std::size_t n = 10000;
  std::size_t covered = 0;
  std::vector<double> s(n);
  for (std::size_t k = 0; k < outer; ++k) {
    Stream rng = Stream::derive({0xc07eULL, k});
    for (auto& v : s) v = standard_normal(rng);
    const auto ci = bootstrap_ci(s, sample_mean, 0.95, 200, rng);
    covered += (ci.lo <= 0.0 && 0.0 <= ci.hi) ? 1 : 0;
  }
  const double rate = static_cast<double>(covered) / static_cast<double>(outer);
  EXPECT_NEAR(rate, 0.95, 3.0 * std::sqrt(0.95 * 0.05 / outer) + 0.01);
}

TEST(RunCell, ZeroNoiseMatchedDuplicates) {
  Stream rng(4);
  std::vector<std::vector<double>> rows;
  for (int k = 0; k < 6; ++k) {
    const std::vector<double> r{rng.uniform(), rng.uniform()};
    rows.push_back(r);
    rows.push_back(r);
  }
  CellConfig cfg = continuous_cell(CovariateMatrix::from_rows(rows), DesignSpec::pm(Pairing::contiguous(12, 6)), 500);
  cfg.model.sigma = 0.0;
  cfg.model.beta_T = 0.0;
  const auto rep = run_cell(cfg);
  for (double e : rep.squared_errors) EXPECT_EQ(e, 0.0);
  EXPECT_EQ(rep.mean_sq_err, 0.0);
  EXPECT_EQ(rep.sd_sq_err, 0.0);
  EXPECT_EQ(rep.empirical_quantile, 0.0);
  EXPECT_EQ(rep.approx_quantile, 0.0);
  EXPECT_EQ(rep.empirical_ci.lo, 0.0);
  EXPECT_EQ(rep.empirical_ci.hi, 0.0);
  EXPECT_EQ(rep.approx_ci.hi, 0.0);
}

TEST(RunCell, MeanAgreesWithClosedForm) {
  Stream rng(5);
  const auto x4 = draw_covariates(CovariateDistribution::uniform(-1, 1), 4, 1, rng);
  const auto x8 = draw_covariates(CovariateDistribution::uniform(-1, 1), 8, 2, rng);
  const std::vector<std::pair<CovariateMatrix, DesignSpec>> cells{
      {x4, DesignSpec::pm(Pairing::contiguous(4, 2))},
      {x8, DesignSpec::bcrd(8)},
      {x8, DesignSpec::block(build_blocking(x8, 2))},
      {x8, DesignSpec::pm(build_blocking(x8, 4))},
      {x8, DesignSpec::pb(greedy_pair_switch(x8, 20, 1).allocation)}};
  for (const auto& [x, design] : cells) {
    const auto cfg = continuous_cell(x, design, 100000);
    const auto rep = run_cell(cfg);
    const double se = rep.sd_sq_err / std::sqrt(static_cast<double>(rep.n_reps));
    EXPECT_NEAR(rep.mean_sq_err, closed_form_mean(cfg), 3.0 * se) << to_string(design.kind);
  }
}

TEST(RunCell, NonGaussianMeansAgreeWithClosedForm) {
  Stream rng(6);
  for (auto kind : kAllResponses) {
    const auto x = draw_covariates(uniform_covariates_for(kind), 8, 2, rng);
    CellConfig cfg = continuous_cell(x, DesignSpec::block(build_blocking(x, 2)), 100000);
    cfg.model = simulation_model(kind, 2);
    const auto rep = run_cell(cfg);
    const double se = rep.sd_sq_err / std::sqrt(static_cast<double>(rep.n_reps));
    EXPECT_NEAR(rep.mean_sq_err, closed_form_mean(cfg), 3.0 * se) << to_string(kind);
  }
}

TEST(RunCell, WorkerCountInvariant) {
  Stream rng(7);
  const auto x = draw_covariates(CovariateDistribution::uniform(-1, 1), 16, 2, rng);
  CellConfig cfg = continuous_cell(x, DesignSpec::block(build_blocking(x, 4)), 5000);
  cfg.bootstrap_reps = 100;
  cfg.workers = 1;
  const auto a = run_cell(cfg);
  cfg.workers = 8;
  const auto b = run_cell(cfg);
  EXPECT_EQ(a.squared_errors, b.squared_errors);
  EXPECT_EQ(a.mean_sq_err, b.mean_sq_err);
  EXPECT_EQ(a.sd_sq_err, b.sd_sq_err);
  EXPECT_EQ(a.empirical_quantile, b.empirical_quantile);
  EXPECT_EQ(a.empirical_ci.lo, b.empirical_ci.lo);
  EXPECT_EQ(a.empirical_ci.hi, b.empirical_ci.hi);
  EXPECT_EQ(a.approx_ci.lo, b.approx_ci.lo);
  EXPECT_EQ(a.approx_ci.hi, b.approx_ci.hi);
}

TEST(RunCell, ApproxQuantileIdentityAndCiOrder) {
  Stream rng(8);
  const auto x = draw_covariates(CovariateDistribution::uniform(-1, 1), 24, 1, rng);
  CellConfig cfg = continuous_cell(x, DesignSpec::bcrd(24), 4000);
  cfg.bootstrap_reps = 200;
  const auto rep = run_cell(cfg);
  EXPECT_EQ(rep.c_q, 1.645);
  EXPECT_EQ(rep.approx_quantile, rep.mean_sq_err + 1.645 * rep.sd_sq_err);
  EXPECT_LE(rep.empirical_ci.lo, rep.empirical_quantile);
  EXPECT_LE(rep.empirical_quantile, rep.empirical_ci.hi);
  EXPECT_LE(rep.approx_ci.lo, rep.approx_quantile);
  EXPECT_LE(rep.approx_quantile, rep.approx_ci.hi);
}

TEST(RunCell, DimensionMismatchRejected) {
  Stream rng(9);
  const auto x = draw_covariates(CovariateDistribution::uniform(-1, 1), 8, 1, rng);
  EXPECT_THROW(run_cell(continuous_cell(x, DesignSpec::bcrd(10), 10)), std::invalid_argument);
}

TEST(DesignOracle, PbVarianceZero) {
  const auto o = OutcomePair::observed({1, 4, -2, 0.5}, {0.3, 2, 1, 1});
  const auto r = enumerate_design_oracle(DesignSpec::pb(Allocation({1, -1, -1, 1})), o);
  EXPECT_EQ(r.support, 2U);
  EXPECT_NEAR(r.var_sq_err, 0.0, 1e-15);
}

TEST(DesignOracle, PmTwoPairs) {
  const double d1 = 1.5;
  const double d2 = -2.0;
  const auto o = OutcomePair::observed({0.0, d1, 3.0, 3.0 + d2}, {0, 0, 0, 0});
  const auto r = enumerate_design_oracle(DesignSpec::pm(Pairing::contiguous(4, 2)), o);
  EXPECT_NEAR(r.var_sq_err, d1 * d1 * d2 * d2 / 64.0, 1e-14);
}

TEST(DesignOracle, BcrdMeanIsQuadraticForm) {
  const std::vector<double> mu{0.7, -1.2, 2.0, 0.1};
  const auto o = OutcomePair::observed(mu, {0, 0, 0, 0});
  const auto spec = DesignSpec::bcrd(4);
  const auto r = enumerate_design_oracle(spec, o);
  EXPECT_NEAR(r.mean_sq_err, design_covariance(spec).quadratic_form(mu) / 16.0, 1e-14);
  EXPECT_EQ(r.support, 6U);
}

TEST(DesignOracle, UnbiasedOverSupport) {
  Stream rng(10);
  std::vector<double> yt(8), yc(8);
  for (std::size_t i = 0; i < 8; ++i) {
    yt[i] = standard_normal(rng);
    yc[i] = standard_normal(rng);
  }
  const auto o = OutcomePair::observed(yt, yc);
  for (const auto& spec : {DesignSpec::bcrd(8), DesignSpec::pm(Pairing::contiguous(8, 4)),
                           DesignSpec::block(Blocking::contiguous(8, 2)),
                           DesignSpec::pb(Allocation({1, 1, -1, -1, 1, -1, 1, -1}))}) {
    EXPECT_NEAR(enumerate_design_oracle(spec, o).mean_estimate, estimand(o), 1e-12);
  }
}

TEST(MeanMseOracle, AgreesWithClosedForm) {
  Stream rng(11);
  std::vector<double> mu(6), rho(6);
  for (std::size_t i = 0; i < 6; ++i) {
    mu[i] = standard_normal(rng);
    rho[i] = rng.uniform();
  }
  for (const auto& spec : {DesignSpec::bcrd(6), DesignSpec::pm(Pairing::contiguous(6, 3))}) {
    const double closed = mean_mse(mu, rho, design_covariance(spec));
    EXPECT_NEAR(enumerate_mean_mse_oracle(spec, mu, rho), closed, 1e-12 * closed);
  }
}

TEST(Convergence, ZeroNoiseGivesZero) {
  ConvergenceSetup s;
  s.rho = 0.0;
  s.subject_counts = {8, 32};
  s.reps = 200;
  for (auto kind : {DesignKind::PM, DesignKind::PB}) {
    s.design = kind;
    for (const auto& r : convergence_study(s)) EXPECT_EQ(r.n2_var, 0.0);
  }
}

TEST(Convergence, PbNearHalf) {
  ConvergenceSetup s;
  s.design = DesignKind::PB;
  s.subject_counts = {128};
  s.reps = 20000;
  const auto rows = convergence_study(s);
  ASSERT_EQ(rows.size(), 1U);
  EXPECT_NEAR(rows[0].n2_var, 0.5, 4.0 * rows[0].se);
  EXPECT_EQ(rows[0].printed_reference, 0.5);
}

TEST(Convergence, RejectsOtherDesigns) {
  ConvergenceSetup s;
  s.design = DesignKind::BCRD;
  EXPECT_THROW(convergence_study(s), std::invalid_argument);
}
