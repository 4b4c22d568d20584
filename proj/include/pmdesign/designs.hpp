#ifndef PMDESIGN_DESIGNS_HPP
#define PMDESIGN_DESIGNS_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pmdesign/core.hpp"
#include "pmdesign/covariance.hpp"
#include "pmdesign/parallel.hpp"
#include "pmdesign/random.hpp"

namespace pmdesign {

enum class DesignKind { BCRD, Block, PM, PB };

inline std::string_view to_string(DesignKind kind) {
  switch (kind) {
    case DesignKind::BCRD: return "BCRD";
    case DesignKind::Block: return "Block";
    case DesignKind::PM: return "PM";
    case DesignKind::PB: return "PB";
  }
  return "?";
}

/// A randomization design over 2n subjects.
///
/// BCRD is stored as the one-block blocking so that all block designs share
/// one sampler. PB carries its optimized allocation; its support is that
/// allocation and its mirror.
struct DesignSpec {
  DesignKind kind = DesignKind::BCRD;
  std::size_t n_subjects = 0;
  std::optional<Blocking> blocking;
  std::optional<Allocation> w_star;

  static DesignSpec bcrd(std::size_t n_subjects) {
    return {DesignKind::BCRD, n_subjects, Blocking::contiguous(n_subjects, 1), std::nullopt};
  }
  static DesignSpec block(Blocking b) {
    const std::size_t n = b.n_subjects();
    return {DesignKind::Block, n, std::move(b), std::nullopt};
  }
  static DesignSpec pm(Pairing p) {
    if (!p.is_pairing()) throw std::invalid_argument("PM design requires blocks of size 2");
    const std::size_t n = p.n_subjects();
    return {DesignKind::PM, n, std::move(p), std::nullopt};
  }
  static DesignSpec pb(Allocation w_star) {
    const std::size_t n = w_star.size();
    return {DesignKind::PB, n, std::nullopt, std::move(w_star)};
  }

  void validate() const {
    if (n_subjects < 2 || n_subjects % 2 != 0) throw std::invalid_argument("design needs an even subject count");
    if (kind == DesignKind::PB) {
      if (!w_star || w_star->size() != n_subjects) throw std::invalid_argument("PB design requires w_star of matching length");
      return;
    }
    if (!blocking) throw std::invalid_argument("block design requires a blocking");
    if (blocking->n_subjects() != n_subjects) throw std::invalid_argument("blocking does not cover the subjects");
    if (kind == DesignKind::PM && !blocking->is_pairing()) throw std::invalid_argument("PM design requires blocks of size 2");
    if (kind == DesignKind::BCRD && blocking->n_blocks() != 1) throw std::invalid_argument("BCRD is the one-block design");
  }
};

/// Draws one allocation: balanced, uniformly at random within every block,
/// independently across blocks; PB returns w_star or its mirror with
/// probability 1/2 each.
inline Allocation sample_allocation(const DesignSpec& spec, Stream& rng) {
  spec.validate();
  if (spec.kind == DesignKind::PB) return (rng() >> 63) ? spec.w_star->mirrored() : *spec.w_star;
  std::vector<int> signs(spec.n_subjects, 0);
  const auto& blocks = spec.blocking->blocks();
  const std::size_t size = spec.blocking->block_size();
  if (size == 2) {
    for (const auto& b : blocks) {
      const int s = (rng() >> 63) ? 1 : -1;
      signs[b[0]] = s;
      signs[b[1]] = -s;
    }
  } else {
    std::vector<int> pattern(size);
    for (const auto& b : blocks) {
      std::fill(pattern.begin(), pattern.begin() + static_cast<std::ptrdiff_t>(size / 2), 1);
      std::fill(pattern.begin() + static_cast<std::ptrdiff_t>(size / 2), pattern.end(), -1);
      shuffle(pattern, rng);
      for (std::size_t k = 0; k < size; ++k) signs[b[k]] = pattern[k];
    }
  }
  return Allocation(std::move(signs));
}

/// Sigma_W. Block designs: block-diagonal with 1 on the diagonal and
/// -1/(nB - 1) between members of the same block. PB: w* w*'.
inline DesignCovariance design_covariance(const DesignSpec& spec) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(spec.n_subjects);
  DesignCovariance cov{Eigen::MatrixXd::Zero(n, n)};
  if (spec.kind == DesignKind::PB) {
    const auto& w = *spec.w_star;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        cov.sigma_w(i, j) = static_cast<double>(w[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(j)]);
    return cov;
  }
  const double off = -1.0 / static_cast<double>(spec.blocking->block_size() - 1);
  for (const auto& b : spec.blocking->blocks())
    for (std::size_t i : b)
      for (std::size_t j : b)
        cov.sigma_w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (i == j) ? 1.0 : off;
  return cov;
}

/// Blocks from covariates: order subjects by covariate 1 (stable, ties by
/// index); for p >= 2 re-sort each consecutive super-group of 2 nB subjects
/// by covariate 2; then cut into blocks of nB. Covariates beyond the second
/// are ignored.
inline Blocking build_blocking(const CovariateMatrix& x, std::size_t n_blocks) {
  const std::size_t total = x.n_subjects();
  if (n_blocks == 0 || total % n_blocks != 0)
    throw std::invalid_argument("B=" + std::to_string(n_blocks) + " does not divide 2n=" + std::to_string(total));
  const std::size_t size = total / n_blocks;
  if (size % 2 != 0)
    throw std::invalid_argument("block size 2n/B=" + std::to_string(size) + " is odd for (2n=" + std::to_string(total) +
                                ", B=" + std::to_string(n_blocks) + ")");
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x(a, 0) < x(b, 0); });
  if (x.n_covariates() >= 2) {
    const std::size_t group = 2 * size;
    for (std::size_t start = 0; start < total; start += group) {
      const auto first = order.begin() + static_cast<std::ptrdiff_t>(start);
      const auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(total, start + group));
      std::stable_sort(first, last, [&](std::size_t a, std::size_t b) { return x(a, 1) < x(b, 1); });
    }
  }
  std::vector<std::vector<std::size_t>> blocks(n_blocks);
  for (std::size_t k = 0; k < total; ++k) blocks[k / size].push_back(order[k]);
  return Blocking(std::move(blocks));
}

// ---------------------------------------------------------------------------
// Perfect-balance search
// ---------------------------------------------------------------------------

/// Mahalanobis imbalance (X'w)' S^{-1} (X'w) of an allocation.
inline double imbalance(const Eigen::MatrixXd& whitened, const Allocation& w) {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(whitened.cols());
  for (Eigen::Index i = 0; i < whitened.rows(); ++i)
    s += static_cast<double>(w[static_cast<std::size_t>(i)]) * whitened.row(i).transpose();
  return s.squaredNorm();
}

inline double imbalance(const CovariateMatrix& x, const Allocation& w) { return imbalance(whitened_rows(x), w); }

/// Steepest-descent pair switching from `start` on pre-whitened rows. Each
/// step applies the (+1,-1) swap that lowers the imbalance the most (first
/// such swap in row-major scan order) until no swap improves it. If `trace`
/// is given it receives the objective after every step, starting value first.
inline Allocation pair_switch_descent(const Eigen::MatrixXd& whitened, Allocation start,
                                      std::vector<double>* trace = nullptr) {
  const auto n = static_cast<std::size_t>(whitened.rows());
  if (start.size() != n) throw std::invalid_argument("start allocation length mismatch");
  const Eigen::MatrixXd gram = whitened * whitened.transpose();
  std::vector<int> w = start.signs();
  Eigen::VectorXd s = Eigen::VectorXd::Zero(whitened.cols());
  for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(w[i]) * whitened.row(static_cast<Eigen::Index>(i)).transpose();
  Eigen::VectorXd proj = whitened * s;  // proj_k = z_k . s
  double obj = s.squaredNorm();
  if (trace) trace->push_back(obj);
  for (;;) {
    double best = obj;
    std::size_t bi = n;
    std::size_t bj = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (w[i] != 1) continue;
      const auto ii = static_cast<Eigen::Index>(i);
      for (std::size_t j = 0; j < n; ++j) {
        if (w[j] != -1) continue;
        const auto jj = static_cast<Eigen::Index>(j);
        // ||s + 2(z_j - z_i)||^2
        const double cand = obj + 4.0 * (proj(jj) - proj(ii)) + 4.0 * (gram(jj, jj) + gram(ii, ii) - 2.0 * gram(ii, jj));
        if (cand < best) {
          best = cand;
          bi = i;
          bj = j;
        }
      }
    }
    if (bi == n || !(best < obj - 1e-13 * (1.0 + obj))) break;
    w[bi] = -1;
    w[bj] = 1;
    const Eigen::VectorXd delta = 2.0 * (whitened.row(static_cast<Eigen::Index>(bj)) - whitened.row(static_cast<Eigen::Index>(bi))).transpose();
    s += delta;
    proj += whitened * delta;
    obj = s.squaredNorm();
    if (trace) trace->push_back(obj);
  }
  return Allocation(std::move(w));
}

/// Uniformly random balanced allocation.
inline Allocation random_balanced(std::size_t n_subjects, Stream& rng) {
  std::vector<int> signs(n_subjects, -1);
  std::fill(signs.begin(), signs.begin() + static_cast<std::ptrdiff_t>(n_subjects / 2), 1);
  shuffle(signs, rng);
  return Allocation(std::move(signs));
}

struct PairSwitchResult {
  Allocation allocation;
  double objective = 0.0;
  std::size_t restart = 0;
};

/// Best local optimum of the imbalance over `restarts` uniformly random
/// starts. Restart r draws its start from its own derived stream; the
/// winner is the lowest (objective, restart) so the result does not depend
/// on the worker count.
inline PairSwitchResult greedy_pair_switch(const CovariateMatrix& x, std::size_t restarts, std::uint64_t seed,
                                           std::size_t workers = 1) {
  if (restarts < 1) throw std::invalid_argument("greedy pair switching needs at least one restart");
  const Eigen::MatrixXd z = whitened_rows(x);
  std::vector<Allocation> found(restarts);
  std::vector<double> objective(restarts);
  parallel_for(restarts, workers, [&](std::size_t r) {
    Stream rng = Stream::derive({seed, 0x9b5ULL, r});
    found[r] = pair_switch_descent(z, random_balanced(x.n_subjects(), rng));
    objective[r] = imbalance(z, found[r]);
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < restarts; ++r)
    if (objective[r] < objective[best]) best = r;
  return {found[best], objective[best], best};
}

// ---------------------------------------------------------------------------
// Support enumeration (small designs only)
// ---------------------------------------------------------------------------

inline constexpr std::size_t kMaxEnumeratedSupport = std::size_t{1} << 20;

inline double binomial_coefficient(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

/// Number of allocations in the design's support.
inline double support_size(const DesignSpec& spec) {
  spec.validate();
  if (spec.kind == DesignKind::PB) return 2.0;
  const std::size_t size = spec.blocking->block_size();
  return std::pow(binomial_coefficient(size, size / 2), static_cast<double>(spec.blocking->n_blocks()));
}

/// Every allocation in the design's support; all are equally likely.
inline std::vector<Allocation> enumerate_support(const DesignSpec& spec) {
  spec.validate();
  if (support_size(spec) > static_cast<double>(kMaxEnumeratedSupport))
    throw std::length_error("design support too large to enumerate");
  if (spec.kind == DesignKind::PB) return {*spec.w_star, spec.w_star->mirrored()};

  const std::size_t size = spec.blocking->block_size();
  std::vector<std::vector<int>> patterns;  // balanced sign patterns for one block
  for (std::uint32_t mask = 0; mask < (1U << size); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) != size / 2) continue;
    std::vector<int> p(size);
    for (std::size_t k = 0; k < size; ++k) p[k] = (mask >> k) & 1U ? 1 : -1;
    patterns.push_back(std::move(p));
  }
  const auto& blocks = spec.blocking->blocks();
  std::vector<Allocation> out;
  std::vector<std::size_t> choice(blocks.size(), 0);
  for (;;) {
    std::vector<int> signs(spec.n_subjects);
    for (std::size_t b = 0; b < blocks.size(); ++b)
      for (std::size_t k = 0; k < size; ++k) signs[blocks[b][k]] = patterns[choice[b]][k];
    out.emplace_back(std::move(signs));
    std::size_t b = 0;
    while (b < blocks.size() && ++choice[b] == patterns.size()) choice[b++] = 0;
    if (b == blocks.size()) break;
  }
  return out;
}

}  // namespace pmdesign

#endif  // PMDESIGN_DESIGNS_HPP
