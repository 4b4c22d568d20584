#ifndef PMDESIGN_CRITERIA_HPP
#define PMDESIGN_CRITERIA_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "pmdesign/core.hpp"
#include "pmdesign/designs.hpp"
#include "pmdesign/parallel.hpp"
#include "pmdesign/random.hpp"

namespace pmdesign {

// ---------------------------------------------------------------------------
// Standard normal quantile and tail constants
// ---------------------------------------------------------------------------

/// Inverse standard normal CDF: rational approximation (Acklam) refined by
/// one Halley step against erfc; absolute error well below 1e-8.
inline double normal_quantile(double q) {
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("quantile level must lie in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double low = 0.02425;
  double x = 0.0;
  if (q < low) {
    const double t = std::sqrt(-2.0 * std::log(q));
    x = (((((c[0] * t + c[1]) * t + c[2]) * t + c[3]) * t + c[4]) * t + c[5]) /
        ((((d[0] * t + d[1]) * t + d[2]) * t + d[3]) * t + 1.0);
  } else if (q <= 1.0 - low) {
    const double t = q - 0.5;
    const double r = t * t;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * t /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double t = std::sqrt(-2.0 * std::log1p(-q));
    x = -(((((c[0] * t + c[1]) * t + c[2]) * t + c[3]) * t + c[4]) * t + c[5]) /
        ((((d[0] * t + d[1]) * t + d[2]) * t + d[3]) * t + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - q;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

/// c_q for the approximate tail criterion: the tabulated 1.645 and 2.326 for
/// q = .95 and .99, the standard normal quantile otherwise.
inline double tail_constant(double q) {
  if (q == 0.95) return 1.645;
  if (q == 0.99) return 2.326;
  return normal_quantile(q);
}

// ---------------------------------------------------------------------------
// Closed-form criteria
// ---------------------------------------------------------------------------

struct CriterionInputs {
  std::vector<double> mu;   // mu_T + mu_C
  std::vector<double> rho;  // residual variances
  DesignCovariance sigma_w;
  double q = 0.95;
  double c_q = 1.645;

  void validate() const {
    if (mu.empty() || mu.size() % 2 != 0) throw std::invalid_argument("criterion inputs need an even, nonzero subject count");
    if (rho.size() != mu.size() || sigma_w.size() != mu.size()) throw std::invalid_argument("criterion input dimensions disagree");
    if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("quantile level must lie in (0, 1)");
  }
};

/// E over assignments and noise of (tau_hat - tau)^2:
/// (mu' Sigma_W mu + sum rho) / (4 n^2).
inline double mean_mse(std::span<const double> mu, std::span<const double> rho, const DesignCovariance& sigma_w) {
  if (rho.size() != mu.size()) throw std::invalid_argument("mu and rho differ in length");
  const double two_n = static_cast<double>(mu.size());
  double trace = 0.0;
  for (double r : rho) trace += r;
  return (sigma_w.quadratic_form(mu) + trace) / (two_n * two_n);
}

inline double mean_mse(const CriterionInputs& in) {
  in.validate();
  return mean_mse(in.mu, in.rho, in.sigma_w);
}

/// Leading constant of Var_W(MSE | Z) under PM, as fixed by exhaustive
/// enumeration of the 2^n sign patterns: Var = (1/(4 n^4)) sum_{i<j} d_i^2 d_j^2.
inline constexpr double kPmConditionalVarianceConstant = 0.25;
/// The commonly quoted 1/16, kept for comparison in reports.
inline constexpr double kPrintedPmConditionalVarianceConstant = 1.0 / 16.0;

/// Var over PM allocations of (tau_hat - tau)^2 for a fixed v = mu + z,
/// with pairs given by `pairing`.
inline double pm_conditional_variance(const Pairing& pairing, std::span<const double> v) {
  if (!pairing.is_pairing()) throw std::invalid_argument("PM conditional variance needs a pairing");
  if (v.size() != pairing.n_subjects()) throw std::invalid_argument("vector length does not match the pairing");
  const double n = static_cast<double>(pairing.n_blocks());
  double prefix = 0.0;
  double cross = 0.0;  // sum_{i<j} d_i^2 d_j^2
  for (const auto& b : pairing.blocks()) {
    const double g = v[b[1]] - v[b[0]];
    const double g2 = g * g;
    cross += g2 * prefix;
    prefix += g2;
  }
  return kPmConditionalVarianceConstant * cross / (n * n * n * n);
}

/// Adjacent pairs (0,1), (2,3), ...
inline double pm_conditional_variance(std::span<const double> v) {
  if (v.empty() || v.size() % 2 != 0) throw std::invalid_argument("PM conditional variance needs an even-length vector");
  return pm_conditional_variance(Pairing::contiguous(v.size(), v.size() / 2), v);
}

/// Mean Q_q + c_q sqrt(var).
inline double approx_quantile(double mean, double var, double c_q) {
  if (var < 0.0) throw std::invalid_argument("variance must be nonnegative");
  return mean + c_q * std::sqrt(var);
}

/// Quoted limits of n^2 Var(squared error): rho_bar^2/8 for
/// PM (the block-design lower bound) and rho_bar^2/2 for PB.
struct AsymptoticReference {
  double pm_limit = 0.0;
  double pb_limit = 0.0;
};

inline AsymptoticReference asymptotic_reference(double rho_bar) {
  if (rho_bar < 0.0) throw std::invalid_argument("rho_bar must be nonnegative");
  return {rho_bar * rho_bar / 8.0, rho_bar * rho_bar / 2.0};
}

/// PM limit rescaled by the enumerated conditional-variance constant
/// (1/4 instead of 1/16): rho_bar^2 / 2.
inline double enumerated_pm_limit(double rho_bar) {
  return asymptotic_reference(rho_bar).pm_limit * (kPmConditionalVarianceConstant / kPrintedPmConditionalVarianceConstant);
}

// ---------------------------------------------------------------------------
// Monte Carlo helpers shared by the variance studies
// ---------------------------------------------------------------------------

struct MomentEstimate {
  double mean = 0.0;
  double mean_se = 0.0;
  double variance = 0.0;      // sample variance, divisor N - 1
  double variance_se = 0.0;   // sqrt((m4 - s^4) / N)
};

inline MomentEstimate moments(std::span<const double> x) {
  if (x.size() < 2) throw std::invalid_argument("need at least two samples");
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double m2 = 0.0;
  double m4 = 0.0;
  for (double v : x) {
    const double d = (v - mean) * (v - mean);
    m2 += d;
    m4 += d * d;
  }
  MomentEstimate out;
  out.mean = mean;
  out.variance = m2 / (n - 1.0);
  out.mean_se = std::sqrt(out.variance / n);
  const double m2n = m2 / n;
  out.variance_se = std::sqrt(std::max(0.0, m4 / n - m2n * m2n) / n);
  return out;
}

/// Squared errors (w'(mu + Z))^2/(4n^2) for independent Gaussian residuals
/// with Var(Z_i) = rho_i, one allocation per replicate. Replicate r uses
/// Stream::derive({seed, r}).
inline std::vector<double> gaussian_squared_errors(const DesignSpec& spec, std::span<const double> mu,
                                                   std::span<const double> rho, std::size_t reps, std::uint64_t seed,
                                                   std::size_t workers = 1) {
  spec.validate();
  if (mu.size() != spec.n_subjects || rho.size() != spec.n_subjects) throw std::invalid_argument("dimension mismatch");
  std::vector<double> sd(rho.size());
  for (std::size_t i = 0; i < rho.size(); ++i) sd[i] = std::sqrt(rho[i]);
  const double two_n = static_cast<double>(mu.size());
  std::vector<double> out(reps);
  parallel_for(reps, workers, [&](std::size_t r) {
    Stream rng = Stream::derive({seed, r});
    const Allocation w = sample_allocation(spec, rng);
    double s = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const double v = mu[i] + sd[i] * standard_normal(rng);
      s += w[i] > 0 ? v : -v;
    }
    out[r] = s * s / (two_n * two_n);
  });
  return out;
}

/// Exact mean and variance over the design's support of (w'v)^2 / (4n^2).
struct SupportMoments {
  double mean = 0.0;
  double variance = 0.0;
};

inline SupportMoments squared_error_support_moments(const std::vector<Allocation>& support, std::span<const double> v) {
  const double two_n = static_cast<double>(v.size());
  double m1 = 0.0;
  double m2 = 0.0;
  for (const auto& w : support) {
    const double s = w.dot(v);
    const double e = s * s / (two_n * two_n);
    m1 += e;
    m2 += e * e;
  }
  const double k = static_cast<double>(support.size());
  m1 /= k;
  return {m1, std::max(0.0, m2 / k - m1 * m1)};
}

struct VarianceTerms {
  double var_of_conditional_mean = 0.0;   // Var_Z(E_W[MSE | Z])
  double var_of_conditional_mean_se = 0.0;
  double mean_of_conditional_variance = 0.0;  // E_Z(Var_W[MSE | Z])
  double mean_of_conditional_variance_se = 0.0;
  std::size_t draws = 0;

  double total() const { return var_of_conditional_mean + mean_of_conditional_variance; }
};

/// Function drawing one realization of v = y_T + y_C.
using OutcomeSumSampler = std::function<std::vector<double>(Stream&)>;

/// Both terms of Var_{Z,W}(MSE) = Var_Z(E_W[MSE|Z]) + E_Z(Var_W[MSE|Z]),
/// estimated over `draws` noise realizations. The inner conditional mean
/// uses Sigma_W; the inner conditional variance is closed-form for PM, zero
/// for PB, and exhaustive enumeration for other designs with small support.
inline VarianceTerms variance_decomposition_terms(const DesignSpec& spec, const OutcomeSumSampler& draw_v,
                                                  std::size_t draws, std::uint64_t seed) {
  spec.validate();
  if (draws < 2) throw std::invalid_argument("need at least two noise draws");
  const DesignCovariance cov = design_covariance(spec);
  std::vector<Allocation> support;
  if (spec.kind != DesignKind::PM && spec.kind != DesignKind::PB) {
    if (support_size(spec) > static_cast<double>(kMaxEnumeratedSupport))
      throw std::invalid_argument("design has neither a closed-form conditional variance nor an enumerable support");
    support = enumerate_support(spec);
  }
  const double two_n = static_cast<double>(spec.n_subjects);
  std::vector<double> cond_mean(draws);
  std::vector<double> cond_var(draws);
  for (std::size_t r = 0; r < draws; ++r) {
    Stream rng = Stream::derive({seed, r});
    const std::vector<double> v = draw_v(rng);
    if (v.size() != spec.n_subjects) throw std::invalid_argument("sampler returned the wrong length");
    cond_mean[r] = cov.quadratic_form(v) / (two_n * two_n);
    switch (spec.kind) {
      case DesignKind::PM: cond_var[r] = pm_conditional_variance(*spec.blocking, v); break;
      case DesignKind::PB: cond_var[r] = 0.0; break;
      default: cond_var[r] = squared_error_support_moments(support, v).variance; break;
    }
  }
  const MomentEstimate a = moments(cond_mean);
  const MomentEstimate b = moments(cond_var);
  return {a.variance, a.variance_se, b.mean, b.mean_se, draws};
}

// ---------------------------------------------------------------------------
// Lower-bound check across block designs
// ---------------------------------------------------------------------------

struct BoundCheckSetup {
  std::vector<std::size_t> subject_counts;  // 2n values
  std::vector<std::size_t> block_sizes;     // nB values; pairs where nB does not divide 2n are skipped
  double rho = 1.0;                         // Var(Z_i) for every subject
  double mean_slope = 1.0;                  // mu_i = slope * i / 2n, so within-block gaps vanish
  std::size_t reps = 10000;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
};

struct BoundCheckRow {
  std::size_t n_subjects = 0;
  std::size_t n_blocks = 0;
  std::size_t block_size = 0;
  double n2_var = 0.0;
  double se = 0.0;
  double bound = 0.0;
  bool satisfied = false;  // n2_var >= bound - 3 se
};

/// Monte Carlo estimates of n^2 Var(squared error) for contiguous block
/// designs under Gaussian noise, against the rho_bar^2/8 lower bound.
inline std::vector<BoundCheckRow> theorem1_bound_check(const BoundCheckSetup& setup) {
  std::vector<BoundCheckRow> rows;
  const double bound = asymptotic_reference(setup.rho).pm_limit;
  std::size_t cell = 0;
  for (std::size_t two_n : setup.subject_counts) {
    std::vector<double> mu(two_n);
    for (std::size_t i = 0; i < two_n; ++i) mu[i] = setup.mean_slope * static_cast<double>(i) / static_cast<double>(two_n);
    const std::vector<double> rho(two_n, setup.rho);
    for (std::size_t size : setup.block_sizes) {
      if (size == 0 || size % 2 != 0 || two_n % size != 0) continue;
      const std::size_t blocks = two_n / size;
      const Blocking b = Blocking::contiguous(two_n, blocks);
      const DesignSpec spec = size == 2 ? DesignSpec::pm(b) : (blocks == 1 ? DesignSpec::bcrd(two_n) : DesignSpec::block(b));
      const auto errors = gaussian_squared_errors(spec, mu, rho, setup.reps, mix_key({setup.seed, cell++}), setup.workers);
      const MomentEstimate m = moments(errors);
      const double n = static_cast<double>(two_n) / 2.0;
      BoundCheckRow row{two_n, blocks, size, n * n * m.variance, n * n * m.variance_se, bound, false};
      row.satisfied = row.n2_var >= row.bound - 3.0 * row.se;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace pmdesign

#endif  // PMDESIGN_CRITERIA_HPP
