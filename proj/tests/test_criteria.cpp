#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "pmdesign/criteria.hpp"

using namespace pmdesign;

namespace {

std::vector<double> random_vector(std::size_t n, Stream& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * standard_normal(rng);
  return v;
}

// (w'mu)^2 / 4n^2 averaged over every balanced w, for BCRD.
double bcrd_enumerated_mean(const std::vector<double>& mu) {
  const auto all = oracle::balanced_vectors(mu.size());
  double acc = 0.0;
  for (const auto& w : all) {
    double s = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) s += w[i] * mu[i];
    acc += s * s;
  }
  const double n2 = static_cast<double>(mu.size());
  return acc / static_cast<double>(all.size()) / (n2 * n2);
}

}  // namespace

TEST(MeanMse, SinglePair) {
  const auto cov = design_covariance(DesignSpec::pm(Pairing::contiguous(2, 1)));
  const std::vector<double> mu{1.5, -0.5};
  const std::vector<double> rho{0.3, 0.7};
  EXPECT_NEAR(mean_mse(mu, rho, cov), (4.0 + 1.0) / 4.0, 1e-15);
}

TEST(MeanMse, ConstantMeanZeroNoisePm) {
  const auto cov = design_covariance(DesignSpec::pm(Pairing::contiguous(8, 4)));
  EXPECT_NEAR(mean_mse(std::vector<double>(8, 3.0), std::vector<double>(8, 0.0), cov), 0.0, 1e-15);
}

TEST(MeanMse, BcrdFourSubjects) {
  const std::vector<double> mu{1, 0, 0, 0};
  EXPECT_DOUBLE_EQ(bcrd_enumerated_mean(mu), 0.0625);
  CriterionInputs in{mu, std::vector<double>(4, 0.0), design_covariance(DesignSpec::bcrd(4))};
  EXPECT_DOUBLE_EQ(mean_mse(in), 0.0625);
}

TEST(MeanMse, MatchesBcrdEnumerationRandom) {
  Stream rng(3);
  for (std::size_t n2 : {4U, 6U, 8U, 10U}) {
    const auto mu = random_vector(n2, rng);
    const double closed = mean_mse(mu, std::vector<double>(n2, 0.0), design_covariance(DesignSpec::bcrd(n2)));
    EXPECT_NEAR(closed, bcrd_enumerated_mean(mu), 1e-12 * closed);
  }
}

TEST(MeanMse, InputValidation) {
  CriterionInputs in{{1, 2, 3}, {0, 0, 0}, design_covariance(DesignSpec::bcrd(4))};
  EXPECT_THROW(mean_mse(in), std::invalid_argument);
  CriterionInputs bad_q{{1, 2, 3, 4}, {0, 0, 0, 0}, design_covariance(DesignSpec::bcrd(4)), 1.0};
  EXPECT_THROW(mean_mse(bad_q), std::invalid_argument);
}

TEST(PmConditionalVariance, SinglePairIsZero) {
  EXPECT_EQ(pm_conditional_variance(std::vector<double>{0.3, 2.9}), 0.0);
}

TEST(PmConditionalVariance, TwoPairsHandValue) {
  for (auto [d1, d2] : {std::pair{1.0, 1.0}, {2.0, 3.0}, {-0.5, 4.0}}) {
    const std::vector<double> v{0.0, d1, 1.0, 1.0 + d2};
    EXPECT_NEAR(pm_conditional_variance(v), d1 * d1 * d2 * d2 / 64.0, 1e-15);
    EXPECT_NEAR(oracle::pm_variance_by_enumeration(v), d1 * d1 * d2 * d2 / 64.0, 1e-14);
  }
}

TEST(PmConditionalVariance, SingleNonzeroGapIsZero) {
  EXPECT_EQ(pm_conditional_variance(std::vector<double>{1, 1, 5, 5, 0, 3, 2, 2}), 0.0);
}

TEST(PmConditionalVariance, MatchesEnumeration) {
  Stream rng(4);
  for (std::size_t n = 1; n <= 10; ++n) {
    for (int t = 0; t < 5; ++t) {
      const auto v = random_vector(2 * n, rng, 2.0);
      const double oracle_var = oracle::pm_variance_by_enumeration(v);
      const double closed = pm_conditional_variance(v);
      if (oracle_var == 0.0) {
        EXPECT_NEAR(closed, 0.0, 1e-15);
      } else {
        EXPECT_LE(std::abs(closed - oracle_var), 1e-12 * oracle_var) << n;
      }
    }
  }
}

TEST(PmConditionalVariance, ArbitraryPairing) {
  Stream rng(5);
  const Pairing p({{0, 5}, {1, 3}, {2, 4}});
  const auto v = random_vector(6, rng);
  const std::vector<double> reordered{v[0], v[5], v[1], v[3], v[2], v[4]};
  EXPECT_NEAR(pm_conditional_variance(p, v), oracle::pm_variance_by_enumeration(reordered), 1e-14);
}

TEST(PmConditionalVariance, ConstantsRecorded) {
  EXPECT_EQ(kPmConditionalVarianceConstant, 0.25);
  EXPECT_EQ(kPrintedPmConditionalVarianceConstant, 0.0625);
}

TEST(ScaleEquivariance, MeanMseAndConditionalVariance) {
  Stream rng(6);
  const auto mu = random_vector(8, rng);
  std::vector<double> rho(8);
  for (auto& r : rho) r = rng.uniform();
  const auto cov = design_covariance(DesignSpec::block(Blocking::contiguous(8, 2)));
  const double s = 3.0;
  std::vector<double> mu_s(mu), rho_s(rho);
  for (auto& x : mu_s) x *= s;
  for (auto& r : rho_s) r *= s * s;
  EXPECT_NEAR(mean_mse(mu_s, rho_s, cov), s * s * mean_mse(mu, rho, cov), 1e-12);
  EXPECT_NEAR(pm_conditional_variance(mu_s), std::pow(s, 4) * pm_conditional_variance(mu), 1e-10);
}

TEST(ApproxQuantile, Examples) {
  EXPECT_NEAR(approx_quantile(2.0, 4.0, tail_constant(0.95)), 5.29, 1e-12);
  EXPECT_EQ(approx_quantile(2.0, 0.0, 1.645), 2.0);
  EXPECT_EQ(approx_quantile(2.0, 9.0, 0.0), 2.0);
  EXPECT_THROW(approx_quantile(1.0, -1.0, 1.645), std::invalid_argument);
  EXPECT_LT(approx_quantile(1.0, 1.0, 1.0), approx_quantile(1.1, 1.0, 1.0));
  EXPECT_LT(approx_quantile(1.0, 1.0, 1.0), approx_quantile(1.0, 1.1, 1.0));
  EXPECT_LT(approx_quantile(1.0, 1.0, 1.0), approx_quantile(1.0, 1.0, 1.1));
}

TEST(NormalQuantile, TableAndAccuracy) {
  EXPECT_EQ(tail_constant(0.95), 1.645);
  EXPECT_EQ(tail_constant(0.99), 2.326);
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-9);
  EXPECT_NEAR(normal_quantile(0.95), 1.6448536269514722, 1e-9);
  EXPECT_NEAR(normal_quantile(0.999), 3.090232306167813, 1e-9);
  EXPECT_NEAR(normal_quantile(0.001), -3.090232306167813, 1e-9);
  EXPECT_NEAR(normal_quantile(1e-10), -6.361340902404056, 1e-8);
  EXPECT_EQ(normal_quantile(0.5), 0.0);
  for (double q = 0.001; q < 1.0; q += 0.0137) {
    const double x = normal_quantile(q);
    EXPECT_NEAR(0.5 * std::erfc(-x / std::sqrt(2.0)), q, 1e-12);
  }
  EXPECT_THROW(normal_quantile(0.0), std::invalid_argument);
}

TEST(AsymptoticReference, Values) {
  const auto a = asymptotic_reference(1.0);
  EXPECT_EQ(a.pm_limit, 0.125);
  EXPECT_EQ(a.pb_limit, 0.5);
  const auto z = asymptotic_reference(0.0);
  EXPECT_EQ(z.pm_limit, 0.0);
  EXPECT_EQ(z.pb_limit, 0.0);
  const auto b = asymptotic_reference(2.0);
  EXPECT_EQ(b.pm_limit, 0.5);
  EXPECT_EQ(b.pb_limit, 2.0);
  EXPECT_EQ(enumerated_pm_limit(1.0), 0.5);
}

TEST(VarianceDecomposition, PbSecondTermZero) {
  const auto spec = DesignSpec::pb(Allocation({1, -1, 1, -1, -1, 1}));
  const OutcomeSumSampler draw = [](Stream& rng) { return random_vector(6, rng); };
  const auto t = variance_decomposition_terms(spec, draw, 200, 1);
  EXPECT_EQ(t.mean_of_conditional_variance, 0.0);
  EXPECT_GT(t.var_of_conditional_mean, 0.0);
}

TEST(VarianceDecomposition, PmZeroNoiseFirstTermZero) {
  const auto spec = DesignSpec::pm(Pairing::contiguous(6, 3));
  const std::vector<double> mu{0.1, 0.9, -1.0, 0.5, 2.0, 2.2};
  const OutcomeSumSampler draw = [&](Stream&) { return mu; };
  const auto t = variance_decomposition_terms(spec, draw, 50, 2);
  EXPECT_NEAR(t.var_of_conditional_mean, 0.0, 1e-20);
  EXPECT_NEAR(t.mean_of_conditional_variance, pm_conditional_variance(mu), 1e-15);
}

TEST(VarianceDecomposition, SumMatchesDirectVariance) {
  const std::vector<double> mu{0.0, 0.4, 1.0, 1.5, -0.5, 0.2, 0.8, 0.9};
  const std::vector<double> rho(8, 1.0);
  const std::vector<DesignSpec> specs{DesignSpec::pm(Pairing::contiguous(4, 2)), DesignSpec::pm(Pairing::contiguous(8, 4)),
                                      DesignSpec::bcrd(8), DesignSpec::block(Blocking::contiguous(8, 2)),
                                      DesignSpec::pb(Allocation({1, -1, -1, 1, 1, -1, -1, 1}))};
  for (const auto& spec : specs) {
    const std::size_t n2 = spec.n_subjects;
    const std::vector<double> m(mu.begin(), mu.begin() + static_cast<std::ptrdiff_t>(n2));
    const std::vector<double> r(rho.begin(), rho.begin() + static_cast<std::ptrdiff_t>(n2));
    const OutcomeSumSampler draw = [&](Stream& rng) {
      std::vector<double> v(m);
      for (auto& x : v) x += standard_normal(rng);
      return v;
    };
    const auto terms = variance_decomposition_terms(spec, draw, 40000, 10);
    const auto direct = moments(gaussian_squared_errors(spec, m, r, 400000, 11));
    const double se = std::sqrt(direct.variance_se * direct.variance_se +
                                terms.var_of_conditional_mean_se * terms.var_of_conditional_mean_se +
                                terms.mean_of_conditional_variance_se * terms.mean_of_conditional_variance_se);
    EXPECT_NEAR(terms.total(), direct.variance, 3.0 * se) << to_string(spec.kind) << " 2n=" << n2;
  }
}

TEST(VarianceDecomposition, RejectsUnenumerableDesigns) {
  const OutcomeSumSampler draw = [](Stream& rng) { return random_vector(48, rng); };
  EXPECT_THROW(variance_decomposition_terms(DesignSpec::bcrd(48), draw, 10, 1), std::invalid_argument);
}

TEST(BoundCheck, ZeroNoiseTriviallySatisfied) {
  BoundCheckSetup s;
  s.subject_counts = {16};
  s.block_sizes = {2, 4, 16};
  s.rho = 0.0;
  s.mean_slope = 0.0;
  s.reps = 100;
  const auto rows = theorem1_bound_check(s);
  ASSERT_EQ(rows.size(), 3U);
  for (const auto& r : rows) {
    EXPECT_EQ(r.bound, 0.0);
    EXPECT_TRUE(r.satisfied);
  }
}

TEST(BoundCheck, PmAndBlocksAboveBound) {
  BoundCheckSetup s;
  s.subject_counts = {64};
  s.block_sizes = {2, 4, 8, 64, 3};
  s.reps = 20000;
  const auto rows = theorem1_bound_check(s);
  ASSERT_EQ(rows.size(), 4U);  // size 3 skipped
  for (const auto& r : rows) EXPECT_TRUE(r.satisfied) << r.block_size << " " << r.n2_var;
}

TEST(Moments, KnownSample) {
  const std::vector<double> x{1, 2, 3, 4};
  const auto m = moments(x);
  EXPECT_DOUBLE_EQ(m.mean, 2.5);
  EXPECT_DOUBLE_EQ(m.variance, 5.0 / 3.0);
}
