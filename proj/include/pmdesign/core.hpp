#ifndef PMDESIGN_CORE_HPP
#define PMDESIGN_CORE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pmdesign {

/// Fixed 2n x p matrix of subject measurements, one row per subject.
class CovariateMatrix {
 public:
  CovariateMatrix() = default;

  explicit CovariateMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {
    if (values_.rows() < 4 || values_.rows() % 2 != 0)
      throw std::invalid_argument("covariate matrix needs an even number of rows, at least 4 (got " +
                                  std::to_string(values_.rows()) + ")");
    if (values_.cols() < 1) throw std::invalid_argument("covariate matrix needs at least one column");
    if (!values_.allFinite()) throw std::invalid_argument("covariate matrix has non-finite entries");
  }

  /// Single-covariate convenience constructor.
  static CovariateMatrix from_column(std::span<const double> column) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(column.size()), 1);
    for (std::size_t i = 0; i < column.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = column[i];
    return CovariateMatrix(std::move(m));
  }

  static CovariateMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw std::invalid_argument("covariate matrix needs rows");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows.front().size()) throw std::invalid_argument("ragged covariate rows");
      for (std::size_t j = 0; j < rows[i].size(); ++j)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    return CovariateMatrix(std::move(m));
  }

  std::size_t n_subjects() const noexcept { return static_cast<std::size_t>(values_.rows()); }
  std::size_t n_covariates() const noexcept { return static_cast<std::size_t>(values_.cols()); }
  double operator()(std::size_t i, std::size_t j) const {
    return values_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  auto row(std::size_t i) const { return values_.row(static_cast<Eigen::Index>(i)); }
  const Eigen::MatrixXd& values() const noexcept { return values_; }

  /// Range (max - min) of covariate j.
  double column_range(std::size_t j) const {
    const auto c = values_.col(static_cast<Eigen::Index>(j));
    return c.maxCoeff() - c.minCoeff();
  }

 private:
  Eigen::MatrixXd values_;
};

/// Balanced +/-1 assignment vector.
class Allocation {
 public:
  Allocation() = default;

  explicit Allocation(std::vector<int> signs) : signs_(std::move(signs)) {
    long sum = 0;
    for (int s : signs_) {
      if (s != 1 && s != -1) throw std::invalid_argument("allocation entries must be +1 or -1");
      sum += s;
    }
    if (signs_.empty()) throw std::invalid_argument("allocation is empty");
    if (sum != 0) throw std::invalid_argument("allocation is unbalanced (sum " + std::to_string(sum) + ")");
  }

  std::size_t size() const noexcept { return signs_.size(); }
  int operator[](std::size_t i) const { return signs_[i]; }
  const std::vector<int>& signs() const noexcept { return signs_; }

  Allocation mirrored() const {
    Allocation out;
    out.signs_.reserve(signs_.size());
    for (int s : signs_) out.signs_.push_back(-s);
    return out;
  }

  double dot(std::span<const double> v) const {
    if (v.size() != signs_.size()) throw std::invalid_argument("allocation/vector length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) acc += signs_[i] > 0 ? v[i] : -v[i];
    return acc;
  }

  friend bool operator==(const Allocation&, const Allocation&) = default;

 private:
  std::vector<int> signs_;
};

/// Ordered partition of subject indices into B equal even-size blocks.
/// Block ids are zero-based. A pairing is a blocking with block size 2.
class Blocking {
 public:
  Blocking() = default;

  explicit Blocking(std::vector<std::vector<std::size_t>> blocks) : blocks_(std::move(blocks)) {
    if (blocks_.empty()) throw std::invalid_argument("blocking has no blocks");
    const std::size_t size = blocks_.front().size();
    if (size == 0 || size % 2 != 0)
      throw std::invalid_argument("block size must be even and positive (got " + std::to_string(size) + ")");
    std::size_t total = 0;
    for (const auto& b : blocks_) {
      if (b.size() != size) throw std::invalid_argument("blocks must all have the same size");
      total += b.size();
    }
    block_of_.assign(total, total);
    for (std::size_t id = 0; id < blocks_.size(); ++id) {
      for (std::size_t i : blocks_[id]) {
        if (i >= total) throw std::invalid_argument("block member index out of range");
        if (block_of_[i] != total) throw std::invalid_argument("subject appears in more than one block");
        block_of_[i] = id;
      }
    }
  }

  /// Consecutive blocks: subjects 0..nB-1 form block 0, and so on.
  static Blocking contiguous(std::size_t n_subjects, std::size_t n_blocks) {
    if (n_blocks == 0 || n_subjects % n_blocks != 0)
      throw std::invalid_argument("block count " + std::to_string(n_blocks) + " does not divide " +
                                  std::to_string(n_subjects));
    const std::size_t size = n_subjects / n_blocks;
    std::vector<std::vector<std::size_t>> blocks(n_blocks);
    for (std::size_t i = 0; i < n_subjects; ++i) blocks[i / size].push_back(i);
    return Blocking(std::move(blocks));
  }

  std::size_t n_blocks() const noexcept { return blocks_.size(); }
  std::size_t block_size() const noexcept { return blocks_.front().size(); }
  std::size_t n_subjects() const noexcept { return block_of_.size(); }
  bool is_pairing() const noexcept { return block_size() == 2; }
  const std::vector<std::vector<std::size_t>>& blocks() const noexcept { return blocks_; }
  const std::vector<std::size_t>& block_of() const noexcept { return block_of_; }

 private:
  std::vector<std::vector<std::size_t>> blocks_;
  std::vector<std::size_t> block_of_;
};

using Pairing = Blocking;

/// Potential outcomes, their means, and residual variances rho_i = Var(Z_T,i + Z_C,i).
struct OutcomePair {
  std::vector<double> y_T;
  std::vector<double> y_C;
  std::vector<double> mu_T;
  std::vector<double> mu_C;
  std::vector<double> rho;

  /// Outcomes with no mean/noise bookkeeping (means set to the outcomes, rho to zero).
  static OutcomePair observed(std::vector<double> y_T, std::vector<double> y_C) {
    OutcomePair o;
    o.mu_T = y_T;
    o.mu_C = y_C;
    o.rho.assign(y_T.size(), 0.0);
    o.y_T = std::move(y_T);
    o.y_C = std::move(y_C);
    o.validate();
    return o;
  }

  std::size_t size() const noexcept { return y_T.size(); }

  void validate() const {
    const std::size_t n = y_T.size();
    if (n == 0) throw std::invalid_argument("outcomes are empty");
    if (y_C.size() != n || mu_T.size() != n || mu_C.size() != n || rho.size() != n)
      throw std::invalid_argument("outcome vectors have mismatched lengths");
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(y_T[i]) || !std::isfinite(y_C[i]) || !std::isfinite(mu_T[i]) ||
          !std::isfinite(mu_C[i]) || !std::isfinite(rho[i]))
        throw std::invalid_argument("outcomes contain non-finite values");
      if (rho[i] < 0.0) throw std::invalid_argument("residual variance must be nonnegative");
    }
  }

  std::vector<double> residual_T() const {
    std::vector<double> z(size());
    for (std::size_t i = 0; i < size(); ++i) z[i] = y_T[i] - mu_T[i];
    return z;
  }
  std::vector<double> residual_C() const {
    std::vector<double> z(size());
    for (std::size_t i = 0; i < size(); ++i) z[i] = y_C[i] - mu_C[i];
    return z;
  }
  /// y_T + y_C, the vector whose projection on w drives the estimation error.
  std::vector<double> outcome_sum() const {
    std::vector<double> v(size());
    for (std::size_t i = 0; i < size(); ++i) v[i] = y_T[i] + y_C[i];
    return v;
  }
  /// mu = mu_T + mu_C.
  std::vector<double> mean_sum() const {
    std::vector<double> v(size());
    for (std::size_t i = 0; i < size(); ++i) v[i] = mu_T[i] + mu_C[i];
    return v;
  }
};

/// Variance-covariance matrix of the allocation vector under a design.
struct DesignCovariance {
  Eigen::MatrixXd sigma_w;

  std::size_t size() const noexcept { return static_cast<std::size_t>(sigma_w.rows()); }

  /// v' Sigma_W v
  double quadratic_form(std::span<const double> v) const {
    const Eigen::Map<const Eigen::VectorXd> x(v.data(), static_cast<Eigen::Index>(v.size()));
    if (x.size() != sigma_w.rows()) throw std::invalid_argument("vector length does not match design covariance");
    return x.dot(sigma_w * x);
  }
};

// ---------------------------------------------------------------------------
// Estimand, estimator and squared error
// ---------------------------------------------------------------------------

/// Sample average treatment effect, mean of y_T - y_C.
inline double estimand(const OutcomePair& o) {
  double acc = 0.0;
  for (std::size_t i = 0; i < o.size(); ++i) acc += o.y_T[i] - o.y_C[i];
  return acc / static_cast<double>(o.size());
}

/// Difference in means: treated average of y_T minus control average of y_C.
inline double estimate(const Allocation& w, const OutcomePair& o) {
  if (w.size() != o.size()) throw std::invalid_argument("allocation/outcome length mismatch");
  const double n = static_cast<double>(o.size()) / 2.0;
  double treated = 0.0;
  double control = 0.0;
  for (std::size_t i = 0; i < o.size(); ++i) {
    if (w[i] > 0)
      treated += o.y_T[i];
    else
      control += o.y_C[i];
  }
  return (treated - control) / n;
}

/// (tau_hat - tau)^2 computed directly from the estimator and estimand.
inline double squared_error(const Allocation& w, const OutcomePair& o) {
  const double e = estimate(w, o) - estimand(o);
  return e * e;
}

/// (w'(y_T + y_C))^2 / (4n^2); equal to squared_error for balanced w.
inline double squared_error_quadratic(const Allocation& w, std::span<const double> outcome_sum) {
  const double n2 = static_cast<double>(outcome_sum.size());  // 2n
  const double s = w.dot(outcome_sum);
  return s * s / (n2 * n2);
}

/// Mean residual variance across subjects.
inline double residual_variance_mean(std::span<const double> rho) {
  if (rho.empty()) throw std::invalid_argument("residual variance vector is empty");
  double acc = 0.0;
  for (double r : rho) {
    if (r < 0.0) throw std::invalid_argument("residual variance must be nonnegative");
    acc += r;
  }
  return acc / static_cast<double>(rho.size());
}

}  // namespace pmdesign

#endif  // PMDESIGN_CORE_HPP
