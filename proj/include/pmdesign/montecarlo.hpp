#ifndef PMDESIGN_MONTECARLO_HPP
#define PMDESIGN_MONTECARLO_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pmdesign/core.hpp"
#include "pmdesign/criteria.hpp"
#include "pmdesign/designs.hpp"
#include "pmdesign/parallel.hpp"
#include "pmdesign/random.hpp"
#include "pmdesign/response.hpp"

namespace pmdesign {

/// The ceil(q N)-th order statistic (1-based), without interpolation.
/// q N is rounded down when it lies within 1e-9 of an integer so that
/// representation error in q does not skip an order statistic.
inline double empirical_quantile(std::span<const double> samples, double q) {
  if (samples.empty()) throw std::invalid_argument("empirical quantile of an empty sample");
  if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("quantile level must lie in (0, 1]");
  const double n = static_cast<double>(samples.size());
  auto k = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
  k = std::clamp<std::size_t>(k, 1, samples.size());
  std::vector<double> copy(samples.begin(), samples.end());
  std::nth_element(copy.begin(), copy.begin() + static_cast<std::ptrdiff_t>(k - 1), copy.end());
  return copy[k - 1];
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Statistic values on `reps` resamples drawn with replacement. Resample b
/// uses a stream derived from (base_seed, b), so the result does not depend on the
/// worker count. Each call to `statistics` returns K statistics computed on
/// the same resample.
template <std::size_t K, typename Fn>
std::vector<std::array<double, K>> bootstrap_replicates(std::span<const double> samples, std::size_t reps,
                                                        std::uint64_t base_seed, Fn&& statistics,
                                                        std::size_t workers = 1) {
  if (samples.empty()) throw std::invalid_argument("bootstrap of an empty sample");
  std::vector<std::array<double, K>> out(reps);
  parallel_for(reps, workers, [&](std::size_t b) {
    Stream rng = Stream::derive({base_seed, 0xb007ULL, b});
    std::vector<double> resample(samples.size());
    for (auto& v : resample) v = samples[static_cast<std::size_t>(rng.below(samples.size()))];
    out[b] = statistics(std::span<const double>(resample));
  });
  return out;
}

/// Percentile interval [quantile (1-level)/2, quantile (1+level)/2] of the
/// bootstrap distribution, using the same order-statistic rule as
/// empirical_quantile.
inline Interval percentile_interval(std::span<const double> stats, double level) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence level must lie in (0, 1)");
  return {empirical_quantile(stats, (1.0 - level) / 2.0), empirical_quantile(stats, (1.0 + level) / 2.0)};
}

using Statistic = std::function<double(std::span<const double>)>;

/// Nonparametric percentile bootstrap interval for one statistic.
inline Interval bootstrap_ci(std::span<const double> samples, const Statistic& statistic, double level,
                             std::size_t reps, Stream& rng, std::size_t workers = 1) {
  if (reps < 1) throw std::invalid_argument("bootstrap needs at least one resample");
  const std::uint64_t base = rng();
  const auto reps_out = bootstrap_replicates<1>(
      samples, reps, base, [&](std::span<const double> s) { return std::array<double, 1>{statistic(s)}; }, workers);
  std::vector<double> stats(reps);
  for (std::size_t b = 0; b < reps; ++b) stats[b] = reps_out[b][0];
  return percentile_interval(stats, level);
}

inline double sample_mean(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v;
  return acc / static_cast<double>(x.size());
}

/// Sample standard deviation, divisor N - 1 (0 for a single sample).
inline double sample_sd(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = sample_mean(x);
  double acc = 0.0;
  for (double v : x) acc += (v - m) * (v - m);
  return std::sqrt(acc / static_cast<double>(x.size() - 1));
}

// ---------------------------------------------------------------------------
// One experiment cell
// ---------------------------------------------------------------------------

struct CellConfig {
  ResponseModel model;
  CovariateMatrix covariates;  // fixed for the whole cell
  DesignSpec design;
  std::size_t n_reps = 100000;
  double q = 0.95;
  std::size_t bootstrap_reps = 500;
  double ci_level = 0.95;
  std::uint64_t seed = 0;
  std::uint64_t cell_id = 0;
  std::size_t workers = 1;

  void validate() const {
    if (n_reps < 1) throw std::invalid_argument("cell needs at least one replicate");
    if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("quantile level must lie in (0, 1)");
    if (covariates.n_subjects() != design.n_subjects)
      throw std::invalid_argument("design covers " + std::to_string(design.n_subjects) + " subjects but covariates have " +
                                  std::to_string(covariates.n_subjects()));
    design.validate();
    model.validate();
  }
};

struct CriterionReport {
  double mean_sq_err = 0.0;
  double sd_sq_err = 0.0;
  double empirical_quantile = 0.0;
  double approx_quantile = 0.0;
  Interval empirical_ci;
  Interval approx_ci;
  double c_q = 0.0;
  std::size_t n_reps = 0;
  std::uint64_t seed = 0;
  std::size_t clamped_subjects = 0;  // subjects whose mean hit the link clamp
  std::vector<double> squared_errors;  // in replicate order
};

/// Replicate r: draw y_T and y_C from the response model, compute tau, draw
/// one allocation from the design, record (tau_hat - tau)^2. Replicate r uses
/// Stream::derive({seed, cell_id, r}); reductions run in replicate order.
inline CriterionReport run_cell(const CellConfig& cfg) {
  cfg.validate();
  const PotentialMeans means = potential_means(cfg.model, cfg.covariates);
  const std::vector<double> rho = residual_variances(cfg.model, means.mu_T, means.mu_C);
  std::vector<double> errors(cfg.n_reps);
  parallel_for(cfg.n_reps, cfg.workers, [&](std::size_t r) {
    Stream rng = Stream::derive({cfg.seed, cfg.cell_id, r});
    const OutcomePair o = draw_outcome_pair(cfg.model, means, rho, rng);
    const Allocation w = sample_allocation(cfg.design, rng);
    errors[r] = squared_error(w, o);
  });

  CriterionReport rep;
  rep.c_q = tail_constant(cfg.q);
  rep.mean_sq_err = sample_mean(errors);
  rep.sd_sq_err = sample_sd(errors);
  rep.empirical_quantile = empirical_quantile(errors, cfg.q);
  rep.approx_quantile = rep.mean_sq_err + rep.c_q * rep.sd_sq_err;
  rep.n_reps = cfg.n_reps;
  rep.seed = cfg.seed;
  rep.clamped_subjects = means.clamped;
  if (cfg.bootstrap_reps > 0) {
    const double q = cfg.q;
    const double c_q = rep.c_q;
    const auto boot = bootstrap_replicates<2>(
        errors, cfg.bootstrap_reps, mix_key({cfg.seed, cfg.cell_id, 0xc1ULL}),
        [q, c_q](std::span<const double> s) {
          return std::array<double, 2>{empirical_quantile(s, q), sample_mean(s) + c_q * sample_sd(s)};
        },
        cfg.workers);
    std::vector<double> emp(boot.size());
    std::vector<double> approx(boot.size());
    for (std::size_t b = 0; b < boot.size(); ++b) {
      emp[b] = boot[b][0];
      approx[b] = boot[b][1];
    }
    rep.empirical_ci = percentile_interval(emp, cfg.ci_level);
    rep.approx_ci = percentile_interval(approx, cfg.ci_level);
  } else {
    rep.empirical_ci = {rep.empirical_quantile, rep.empirical_quantile};
    rep.approx_ci = {rep.approx_quantile, rep.approx_quantile};
  }
  rep.squared_errors = std::move(errors);
  return rep;
}

// ---------------------------------------------------------------------------
// Enumeration oracles
// ---------------------------------------------------------------------------

struct OracleResult {
  double mean_sq_err = 0.0;    // over the support, outcomes fixed
  double var_sq_err = 0.0;
  double mean_estimate = 0.0;  // average of tau_hat over the support
  std::size_t support = 0;
};

/// Exact moments of (tau_hat - tau)^2 and the mean of tau_hat over the
/// design's equally weighted support, computed allocation by allocation
/// from the estimator itself.
inline OracleResult enumerate_design_oracle(const DesignSpec& spec, const OutcomePair& outcomes) {
  outcomes.validate();
  if (outcomes.size() != spec.n_subjects) throw std::invalid_argument("outcomes do not match the design size");
  const std::vector<Allocation> support = enumerate_support(spec);
  const double tau = estimand(outcomes);
  double m1 = 0.0;
  double m2 = 0.0;
  double est = 0.0;
  for (const auto& w : support) {
    const double t = estimate(w, outcomes);
    const double e = (t - tau) * (t - tau);
    m1 += e;
    m2 += e * e;
    est += t;
  }
  const double k = static_cast<double>(support.size());
  m1 /= k;
  return {m1, std::max(0.0, m2 / k - m1 * m1), est / k, support.size()};
}

/// E over the support and the noise of (tau_hat - tau)^2, with the noise
/// integrated in closed form: for each allocation E_Z[(w'(mu+Z))^2] =
/// (w'mu)^2 + sum rho (independent zero-mean residuals, w_i^2 = 1).
inline double enumerate_mean_mse_oracle(const DesignSpec& spec, std::span<const double> mu, std::span<const double> rho) {
  if (mu.size() != spec.n_subjects || rho.size() != spec.n_subjects) throw std::invalid_argument("dimension mismatch");
  const std::vector<Allocation> support = enumerate_support(spec);
  double noise = 0.0;
  for (double r : rho) noise += r;
  const double two_n = static_cast<double>(spec.n_subjects);
  double acc = 0.0;
  for (const auto& w : support) {
    const double s = w.dot(mu);
    acc += (s * s + noise) / (two_n * two_n);
  }
  return acc / static_cast<double>(support.size());
}

// ---------------------------------------------------------------------------
// Asymptotic convergence study
// ---------------------------------------------------------------------------

struct ConvergenceSetup {
  DesignKind design = DesignKind::PM;  // PM or PB
  std::vector<std::size_t> subject_counts{64, 256, 1024};
  double rho = 1.0;        // Var(Z_i), Gaussian
  double mean_spread = 1.0;  // pair k has mean spread * k / n, identical within the pair
  std::size_t reps = 50000;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
};

struct ConvergenceRow {
  std::size_t n_subjects = 0;
  double n2_var = 0.0;
  double se = 0.0;
  double mean_sq_err = 0.0;
  double printed_reference = 0.0;     // rho^2/8 (PM) or rho^2/2 (PB)
  double enumerated_reference = 0.0;  // PM limit with the enumerated constant; PB unchanged
};

/// n^2 Var(squared error) for PM or PB on matched-duplicate subjects (every
/// pair shares its mean, so within-pair gaps are zero). PB uses the
/// allocation that splits every duplicate pair, which balances the means
/// exactly.
inline std::vector<ConvergenceRow> convergence_study(const ConvergenceSetup& setup) {
  if (setup.design != DesignKind::PM && setup.design != DesignKind::PB)
    throw std::invalid_argument("convergence study covers PM and PB");
  const AsymptoticReference ref = asymptotic_reference(setup.rho);
  std::vector<ConvergenceRow> rows;
  for (std::size_t idx = 0; idx < setup.subject_counts.size(); ++idx) {
    const std::size_t two_n = setup.subject_counts[idx];
    if (two_n < 4 || two_n % 2 != 0) throw std::invalid_argument("subject counts must be even and >= 4");
    const std::size_t n = two_n / 2;
    std::vector<double> mu(two_n);
    for (std::size_t i = 0; i < two_n; ++i) mu[i] = setup.mean_spread * static_cast<double>(i / 2) / static_cast<double>(n);
    const std::vector<double> rho(two_n, setup.rho);
    DesignSpec spec;
    if (setup.design == DesignKind::PM) {
      spec = DesignSpec::pm(Pairing::contiguous(two_n, n));
    } else {
      std::vector<int> w(two_n);
      for (std::size_t i = 0; i < two_n; ++i) w[i] = i % 2 == 0 ? 1 : -1;
      spec = DesignSpec::pb(Allocation(std::move(w)));
    }
    const auto errors = gaussian_squared_errors(
        spec, mu, rho, setup.reps, mix_key({setup.seed, static_cast<std::uint64_t>(setup.design), two_n}), setup.workers);
    const MomentEstimate m = moments(errors);
    const double nn = static_cast<double>(n) * static_cast<double>(n);
    ConvergenceRow row;
    row.n_subjects = two_n;
    row.n2_var = nn * m.variance;
    row.se = nn * m.variance_se;
    row.mean_sq_err = m.mean;
    row.printed_reference = setup.design == DesignKind::PM ? ref.pm_limit : ref.pb_limit;
    row.enumerated_reference = setup.design == DesignKind::PM ? enumerated_pm_limit(setup.rho) : ref.pb_limit;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace pmdesign

#endif  // PMDESIGN_MONTECARLO_HPP
