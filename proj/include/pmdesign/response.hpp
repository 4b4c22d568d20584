#ifndef PMDESIGN_RESPONSE_HPP
#define PMDESIGN_RESPONSE_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pmdesign/core.hpp"
#include "pmdesign/random.hpp"

namespace pmdesign {

enum class ResponseKind { continuous, incidence, proportion, count, survival };

inline constexpr std::array<ResponseKind, 5> kAllResponses = {ResponseKind::continuous, ResponseKind::incidence,
                                                             ResponseKind::proportion, ResponseKind::count,
                                                             ResponseKind::survival};

inline std::string_view to_string(ResponseKind k) {
  switch (k) {
    case ResponseKind::continuous: return "continuous";
    case ResponseKind::incidence: return "incidence";
    case ResponseKind::proportion: return "proportion";
    case ResponseKind::count: return "count";
    case ResponseKind::survival: return "survival";
  }
  return "?";
}

inline std::optional<ResponseKind> parse_response_kind(std::string_view s) {
  for (ResponseKind k : kAllResponses)
    if (to_string(k) == s) return k;
  return std::nullopt;
}

/// GLM-style response: linear predictor b0 + beta'x + beta_T w passed
/// through the kind's mean function, with noise from the kind's family.
struct ResponseModel {
  ResponseKind kind = ResponseKind::continuous;
  double beta0 = 0.0;
  std::vector<double> beta;
  double beta_T = 0.0;
  double sigma = 1.0;  // continuous: noise SD
  double phi = 2.0;    // proportion: Beta precision
  double k = 4.0;      // survival: Weibull shape

  void validate() const {
    if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be nonnegative");
    if (!(phi > 0.0)) throw std::invalid_argument("phi must be positive");
    if (!(k > 0.0)) throw std::invalid_argument("Weibull shape k must be positive");
  }
};

/// Simulation-study coefficients: b0 = -1, beta = (1,-1,1,-1,1) truncated to
/// p covariates, beta_T = 0.001, sigma = 1, phi = 2, k = 4.
inline ResponseModel simulation_model(ResponseKind kind, std::size_t p) {
  if (p < 1 || p > 5) throw std::invalid_argument("simulation coefficients are defined for 1 <= p <= 5");
  ResponseModel m;
  m.kind = kind;
  m.beta0 = -1.0;
  for (std::size_t j = 0; j < p; ++j) m.beta.push_back(j % 2 == 0 ? 1.0 : -1.0);
  m.beta_T = 0.001;
  return m;
}

inline double linear_component(const ResponseModel& model, std::span<const double> x_row, int w_sign) {
  if (x_row.size() != model.beta.size())
    throw std::invalid_argument("covariate row has " + std::to_string(x_row.size()) + " entries, model expects " +
                                std::to_string(model.beta.size()));
  double eta = model.beta0 + model.beta_T * static_cast<double>(w_sign);
  for (std::size_t j = 0; j < x_row.size(); ++j) eta += model.beta[j] * x_row[j];
  return eta;
}

inline constexpr double kLinkClamp = 700.0;

/// Identity, inverse-logit, or exp. For the nonlinear links eta is clamped
/// to [-700, 700]; `clamped` is set when that happens.
inline double mean_function(ResponseKind kind, double eta, bool* clamped = nullptr) {
  if (!std::isfinite(eta)) throw std::invalid_argument("linear predictor is not finite");
  if (kind == ResponseKind::continuous) return eta;
  const double e = std::clamp(eta, -kLinkClamp, kLinkClamp);
  if (clamped && e != eta) *clamped = true;
  switch (kind) {
    case ResponseKind::incidence:
    case ResponseKind::proportion:
      return 1.0 / (1.0 + std::exp(-e));
    case ResponseKind::count:
    case ResponseKind::survival:
      return std::exp(e);
    default:
      return e;
  }
}

struct PotentialMeans {
  std::vector<double> mu_T;
  std::vector<double> mu_C;
  std::size_t clamped = 0;  // subjects whose linear predictor hit the link clamp
};

/// Per-subject means under treatment (w = +1) and control (w = -1).
inline PotentialMeans potential_means(const ResponseModel& model, const CovariateMatrix& x) {
  if (x.n_covariates() != model.beta.size())
    throw std::invalid_argument("model has " + std::to_string(model.beta.size()) + " coefficients but covariates have " +
                                std::to_string(x.n_covariates()) + " columns");
  PotentialMeans out;
  const std::size_t n = x.n_subjects();
  out.mu_T.resize(n);
  out.mu_C.resize(n);
  std::vector<double> row(x.n_covariates());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = x(i, j);
    bool hit = false;
    out.mu_T[i] = mean_function(model.kind, linear_component(model, row, +1), &hit);
    out.mu_C[i] = mean_function(model.kind, linear_component(model, row, -1), &hit);
    if (hit) ++out.clamped;
  }
  return out;
}

inline double weibull_scale(const ResponseModel& model, double mu) { return mu / std::tgamma(1.0 + 1.0 / model.k); }

inline void check_mean_domain(const ResponseModel& model, double mu) {
  bool ok = std::isfinite(mu);
  switch (model.kind) {
    case ResponseKind::continuous: break;
    case ResponseKind::incidence: ok = ok && mu >= 0.0 && mu <= 1.0; break;
    case ResponseKind::proportion: ok = ok && mu > 0.0 && mu < 1.0; break;
    case ResponseKind::count: ok = ok && mu >= 0.0; break;
    case ResponseKind::survival: ok = ok && mu > 0.0; break;
  }
  if (!ok) throw std::domain_error("mean " + std::to_string(mu) + " outside the parameter space of the " +
                                   std::string(to_string(model.kind)) + " response");
}

/// One draw per subject from the response family with the given means.
inline std::vector<double> draw_outcomes(const ResponseModel& model, std::span<const double> mu, Stream& rng) {
  model.validate();
  std::vector<double> y(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double m = mu[i];
    check_mean_domain(model, m);
    switch (model.kind) {
      case ResponseKind::continuous: y[i] = m + model.sigma * standard_normal(rng); break;
      case ResponseKind::incidence: y[i] = rng.uniform() < m ? 1.0 : 0.0; break;
      case ResponseKind::proportion: y[i] = beta_variate(model.phi * m, model.phi * (1.0 - m), rng); break;
      case ResponseKind::count: y[i] = static_cast<double>(poisson_variate(m, rng)); break;
      case ResponseKind::survival: y[i] = weibull_variate(weibull_scale(model, m), model.k, rng); break;
    }
  }
  return y;
}

/// Closed-form variance of a single outcome with mean mu.
inline double outcome_variance(const ResponseModel& model, double mu) {
  check_mean_domain(model, mu);
  switch (model.kind) {
    case ResponseKind::continuous: return model.sigma * model.sigma;
    case ResponseKind::incidence: return mu * (1.0 - mu);
    case ResponseKind::proportion: return mu * (1.0 - mu) / (model.phi + 1.0);
    case ResponseKind::count: return mu;
    case ResponseKind::survival: {
      const double scale = weibull_scale(model, mu);
      const double g1 = std::tgamma(1.0 + 1.0 / model.k);
      const double g2 = std::tgamma(1.0 + 2.0 / model.k);
      return scale * scale * (g2 - g1 * g1);
    }
  }
  return 0.0;
}

/// rho_i = Var(Z_T,i) + Var(Z_C,i) from the closed forms.
inline std::vector<double> residual_variances(const ResponseModel& model, std::span<const double> mu_T,
                                              std::span<const double> mu_C) {
  if (mu_T.size() != mu_C.size()) throw std::invalid_argument("mean vectors differ in length");
  std::vector<double> rho(mu_T.size());
  for (std::size_t i = 0; i < rho.size(); ++i) rho[i] = outcome_variance(model, mu_T[i]) + outcome_variance(model, mu_C[i]);
  return rho;
}

/// Draws y_T then y_C (in that order) and packages them with their means.
inline OutcomePair draw_outcome_pair(const ResponseModel& model, const PotentialMeans& means,
                                     std::span<const double> rho, Stream& rng) {
  OutcomePair o;
  o.y_T = draw_outcomes(model, means.mu_T, rng);
  o.y_C = draw_outcomes(model, means.mu_C, rng);
  o.mu_T = means.mu_T;
  o.mu_C = means.mu_C;
  o.rho.assign(rho.begin(), rho.end());
  return o;
}

// ---------------------------------------------------------------------------
// Covariates
// ---------------------------------------------------------------------------

enum class CovariateFamily { uniform, exponential_centered };

struct CovariateDistribution {
  CovariateFamily family = CovariateFamily::uniform;
  double a = -1.0;    // uniform lower bound
  double b = 1.0;     // uniform upper bound
  double rate = 1.0;  // exponential rate

  static CovariateDistribution uniform(double a, double b) { return {CovariateFamily::uniform, a, b, 1.0}; }
  static CovariateDistribution exponential_centered(double rate) {
    return {CovariateFamily::exponential_centered, 0.0, 0.0, rate};
  }

  double mean() const { return family == CovariateFamily::uniform ? 0.5 * (a + b) : 0.0; }
  double variance() const {
    return family == CovariateFamily::uniform ? (b - a) * (b - a) / 12.0 : 1.0 / (rate * rate);
  }
};

/// Uniform covariate ranges per response: U(-1,1), except U(-10,10) for
/// incidence and U(-5,5) for count.
inline CovariateDistribution uniform_covariates_for(ResponseKind kind) {
  switch (kind) {
    case ResponseKind::incidence: return CovariateDistribution::uniform(-10.0, 10.0);
    case ResponseKind::count: return CovariateDistribution::uniform(-5.0, 5.0);
    default: return CovariateDistribution::uniform(-1.0, 1.0);
  }
}

/// Mean-centered exponential covariates with the same variance as the
/// uniform ones: rate sqrt(12)/2, sqrt(12)/20 (incidence), sqrt(12)/10 (count).
inline CovariateDistribution exponential_covariates_for(ResponseKind kind) {
  const double root12 = std::sqrt(12.0);
  switch (kind) {
    case ResponseKind::incidence: return CovariateDistribution::exponential_centered(root12 / 20.0);
    case ResponseKind::count: return CovariateDistribution::exponential_centered(root12 / 10.0);
    default: return CovariateDistribution::exponential_centered(root12 / 2.0);
  }
}

/// i.i.d. draws in row-major order.
inline CovariateMatrix draw_covariates(const CovariateDistribution& dist, std::size_t rows, std::size_t cols, Stream& rng) {
  if (dist.family == CovariateFamily::uniform && !(dist.b > dist.a))
    throw std::invalid_argument("uniform covariates need b > a");
  if (dist.family == CovariateFamily::exponential_centered && !(dist.rate > 0.0))
    throw std::invalid_argument("exponential covariates need a positive rate");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = dist.family == CovariateFamily::uniform
                    ? dist.a + (dist.b - dist.a) * rng.uniform()
                    : exponential_variate(dist.rate, rng) - 1.0 / dist.rate;
  return CovariateMatrix(std::move(m));
}

}  // namespace pmdesign

#endif  // PMDESIGN_RESPONSE_HPP
