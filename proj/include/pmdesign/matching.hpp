#ifndef PMDESIGN_MATCHING_HPP
#define PMDESIGN_MATCHING_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <limits>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pmdesign/core.hpp"
#include "pmdesign/covariance.hpp"
#include "pmdesign/random.hpp"

namespace pmdesign {

/// Symmetric matrix of squared Mahalanobis distances between subjects.
struct DistanceMatrix {
  Eigen::MatrixXd d;

  std::size_t size() const noexcept { return static_cast<std::size_t>(d.rows()); }
  double operator()(std::size_t i, std::size_t j) const {
    return d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

  void validate() const {
    if (d.rows() != d.cols()) throw std::invalid_argument("distance matrix must be square");
    if (d.rows() < 2 || d.rows() % 2 != 0) throw std::invalid_argument("distance matrix needs an even number of subjects");
    if (!d.allFinite()) throw std::invalid_argument("distance matrix has non-finite entries");
  }
};

enum class MatchMethod { exact, grid, heuristic };

inline std::string_view to_string(MatchMethod m) {
  switch (m) {
    case MatchMethod::exact: return "exact";
    case MatchMethod::grid: return "grid";
    case MatchMethod::heuristic: return "heuristic";
  }
  return "?";
}

struct MatchResult {
  Pairing pairing;
  double cost = 0.0;
  MatchMethod method = MatchMethod::exact;
};

/// Largest subject count match_exact accepts (2^20 subset table).
inline constexpr std::size_t kExactMatchCapacity = 20;

class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

inline DistanceMatrix mahalanobis_distances(const CovariateMatrix& x) {
  const Eigen::MatrixXd z = whitened_rows(x);
  const Eigen::Index n = z.rows();
  DistanceMatrix out{Eigen::MatrixXd::Zero(n, n)};
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = (z.row(i) - z.row(j)).squaredNorm();
      out.d(i, j) = v;
      out.d(j, i) = v;
    }
  return out;
}

/// Pairs listed with the smaller index first, ordered by that index.
inline Pairing canonical_pairing(std::vector<std::pair<std::size_t, std::size_t>> pairs) {
  for (auto& p : pairs)
    if (p.first > p.second) std::swap(p.first, p.second);
  std::sort(pairs.begin(), pairs.end());
  std::vector<std::vector<std::size_t>> blocks;
  blocks.reserve(pairs.size());
  for (const auto& [a, b] : pairs) blocks.push_back({a, b});
  return Pairing(std::move(blocks));
}

inline double pairing_cost(const DistanceMatrix& d, const Pairing& pairing) {
  double cost = 0.0;
  for (const auto& b : pairing.blocks()) cost += d(b[0], b[1]);
  return cost;
}

/// Minimum-cost perfect pairing by dynamic programming over subsets of
/// unmatched subjects; the lowest unmatched subject is always paired next,
/// and among equal-cost partners the lowest index wins, which yields the
/// lexicographically smallest optimal pairing.
inline MatchResult match_exact(const DistanceMatrix& d) {
  d.validate();
  const std::size_t n = d.size();
  if (n > kExactMatchCapacity)
    throw CapacityError("exact matching supports at most " + std::to_string(kExactMatchCapacity) + " subjects (got " +
                        std::to_string(n) + "); use match_heuristic");
  const std::uint32_t full = (n == 32) ? ~0U : ((1U << n) - 1U);
  std::vector<double> best(std::size_t{full} + 1, 0.0);
  std::vector<std::uint8_t> partner(std::size_t{full} + 1, 0);
  for (std::uint32_t mask = 1; mask <= full; ++mask) {
    if (std::popcount(mask) % 2 != 0) continue;
    const int i = std::countr_zero(mask);
    const std::uint32_t rest = mask & ~(1U << i);
    double b = std::numeric_limits<double>::infinity();
    int bj = -1;
    for (std::uint32_t m = rest; m != 0; m &= m - 1) {
      const int j = std::countr_zero(m);
      const double cand = d(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) + best[rest & ~(1U << j)];
      if (bj < 0 || cand < b - 1e-12 * std::max(1.0, std::abs(b))) {
        b = cand;
        bj = j;
      }
    }
    best[mask] = b;
    partner[mask] = static_cast<std::uint8_t>(bj);
  }
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::uint32_t mask = full; mask != 0;) {
    const int i = std::countr_zero(mask);
    const int j = partner[mask];
    pairs.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    mask &= ~((1U << i) | (1U << j));
  }
  Pairing pairing = canonical_pairing(std::move(pairs));
  const double cost = pairing_cost(d, pairing);
  return {std::move(pairing), cost, MatchMethod::exact};
}

namespace detail {

// The 15 perfect pairings of six slots, as index pairs into the slot list.
inline constexpr std::array<std::array<std::array<int, 2>, 3>, 15> kSixSlotPairings = {{
    {{{0, 1}, {2, 3}, {4, 5}}}, {{{0, 1}, {2, 4}, {3, 5}}}, {{{0, 1}, {2, 5}, {3, 4}}},
    {{{0, 2}, {1, 3}, {4, 5}}}, {{{0, 2}, {1, 4}, {3, 5}}}, {{{0, 2}, {1, 5}, {3, 4}}},
    {{{0, 3}, {1, 2}, {4, 5}}}, {{{0, 3}, {1, 4}, {2, 5}}}, {{{0, 3}, {1, 5}, {2, 4}}},
    {{{0, 4}, {1, 2}, {3, 5}}}, {{{0, 4}, {1, 3}, {2, 5}}}, {{{0, 4}, {1, 5}, {2, 3}}},
    {{{0, 5}, {1, 2}, {3, 4}}}, {{{0, 5}, {1, 3}, {2, 4}}}, {{{0, 5}, {1, 4}, {2, 3}}},
}};

using PairList = std::vector<std::pair<std::size_t, std::size_t>>;

// One sweep of two-pair exchanges; true if anything changed.
inline bool two_pair_sweep(const DistanceMatrix& d, PairList& pairs) {
  bool improved = false;
  for (std::size_t s = 0; s < pairs.size(); ++s) {
    for (std::size_t t = s + 1; t < pairs.size(); ++t) {
      auto& [a, b] = pairs[s];
      auto& [c, e] = pairs[t];
      const double now = d(a, b) + d(c, e);
      const double cross1 = d(a, c) + d(b, e);
      const double cross2 = d(a, e) + d(b, c);
      const double tol = 1e-12 * std::max(1.0, now);
      if (cross1 < now - tol && cross1 <= cross2) {
        std::swap(b, c);  // {a,c},{b,e}
        improved = true;
      } else if (cross2 < now - tol) {
        std::swap(b, e);  // {a,e},{c,b}
        improved = true;
      }
    }
  }
  return improved;
}

// One sweep re-pairing every triple of pairs optimally; true if anything changed.
inline bool three_pair_sweep(const DistanceMatrix& d, PairList& pairs) {
  bool improved = false;
  const std::size_t k = pairs.size();
  for (std::size_t s = 0; s < k; ++s)
    for (std::size_t t = s + 1; t < k; ++t)
      for (std::size_t u = t + 1; u < k; ++u) {
        const std::array<std::size_t, 6> slot{pairs[s].first, pairs[s].second, pairs[t].first,
                                              pairs[t].second, pairs[u].first, pairs[u].second};
        const double now = d(slot[0], slot[1]) + d(slot[2], slot[3]) + d(slot[4], slot[5]);
        double best = now - 1e-12 * std::max(1.0, now);
        int pick = -1;
        for (int c = 1; c < 15; ++c) {
          const auto& pl = kSixSlotPairings[static_cast<std::size_t>(c)];
          double cost = 0.0;
          for (const auto& e : pl) cost += d(slot[static_cast<std::size_t>(e[0])], slot[static_cast<std::size_t>(e[1])]);
          if (cost < best) {
            best = cost;
            pick = c;
          }
        }
        if (pick < 0) continue;
        const auto& pl = kSixSlotPairings[static_cast<std::size_t>(pick)];
        pairs[s] = {slot[static_cast<std::size_t>(pl[0][0])], slot[static_cast<std::size_t>(pl[0][1])]};
        pairs[t] = {slot[static_cast<std::size_t>(pl[1][0])], slot[static_cast<std::size_t>(pl[1][1])]};
        pairs[u] = {slot[static_cast<std::size_t>(pl[2][0])], slot[static_cast<std::size_t>(pl[2][1])]};
        improved = true;
      }
  return improved;
}

}  // namespace detail

inline constexpr std::size_t kHeuristicRestarts = 32;

namespace detail {

inline void local_search(const DistanceMatrix& d, PairList& pairs) {
  for (;;) {
    while (two_pair_sweep(d, pairs)) {
    }
    if (!three_pair_sweep(d, pairs)) break;
  }
}

inline double list_cost(const DistanceMatrix& d, const PairList& pairs) {
  double c = 0.0;
  for (const auto& [i, j] : pairs) c += d(i, j);
  return c;
}

}  // namespace detail

/// Local search for a low-cost perfect pairing. The first start is the
/// greedy cheapest-edge pairing; further starts are random pairings from a
/// fixed-seed stream, so the result is deterministic. From each start,
/// two-pair exchanges ({a,b},{c,d} -> {a,c},{b,d} or {a,d},{b,c}) run to a
/// local optimum, then every triple of pairs is re-paired optimally over its
/// 15 pairings; the two steps alternate until neither improves. The cheapest
/// result over all starts is returned.
inline MatchResult match_heuristic(const DistanceMatrix& d, std::size_t restarts = kHeuristicRestarts) {
  d.validate();
  const std::size_t n = d.size();
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  edges.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) edges.emplace_back(i, j);
  std::stable_sort(edges.begin(), edges.end(),
                   [&](const auto& a, const auto& b) { return d(a.first, a.second) < d(b.first, b.second); });
  std::vector<bool> used(n, false);
  detail::PairList best;
  best.reserve(n / 2);
  for (const auto& [i, j] : edges) {
    if (used[i] || used[j]) continue;
    used[i] = used[j] = true;
    best.emplace_back(i, j);
    if (best.size() == n / 2) break;
  }
  detail::local_search(d, best);
  double best_cost = detail::list_cost(d, best);

  std::vector<std::size_t> order(n);
  for (std::size_t r = 1; r < restarts; ++r) {
    Stream rng = Stream::derive({0x3a7c4ULL, n, r});
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng);
    detail::PairList pairs;
    pairs.reserve(n / 2);
    for (std::size_t k = 0; k + 1 < n; k += 2) pairs.emplace_back(order[k], order[k + 1]);
    detail::local_search(d, pairs);
    const double c = detail::list_cost(d, pairs);
    if (c < best_cost - 1e-12 * std::max(1.0, best_cost)) {
      best_cost = c;
      best = std::move(pairs);
    }
  }
  Pairing pairing = canonical_pairing(std::move(best));
  const double cost = pairing_cost(d, pairing);
  return {std::move(pairing), cost, MatchMethod::heuristic};
}

/// Grid-matching result with the bookkeeping of its construction.
struct GridMatchResult : MatchResult {
  std::size_t intervals = 0;       // m
  std::size_t interval_size = 0;   // 2r, subjects per interval
  std::size_t n_groups = 0;        // nonempty groups
  std::size_t leftovers = 0;       // subjects beyond the last full interval of some covariate
  std::size_t overflow_size = 0;   // subjects paired in the overflow step
};

/// Suboptimal grid matching.
///
/// 1. m = max(1, floor(n^{1/(2p)})), r = floor(n/m). Per covariate, the
///    subjects with sorted ranks [2r g, 2r (g+1)) form interval g.
/// 2. Subjects sharing an interval for every covariate form a group.
/// 3. Members of each group are paired at random.
/// 4. Unpaired members (odd groups, plus subjects whose rank falls past the
///    last full interval) form the overflow group, paired at random.
inline GridMatchResult match_grid(const CovariateMatrix& x, Stream& rng) {
  const std::size_t total = x.n_subjects();
  const std::size_t n = total / 2;
  const std::size_t p = x.n_covariates();
  const auto m = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(std::pow(static_cast<double>(n), 1.0 / (2.0 * static_cast<double>(p))) + 1e-9)));
  const std::size_t r = n / m;
  const std::size_t width = 2 * r;

  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::vector<std::size_t>> cell(total, std::vector<std::size_t>(p, 0));
  std::vector<bool> leftover(total, false);
  for (std::size_t j = 0; j < p; ++j) {
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x(a, j) < x(b, j); });
    for (std::size_t rank = 0; rank < total; ++rank) {
      const std::size_t g = rank / width;
      if (g >= m) {
        leftover[order[rank]] = true;
        cell[order[rank]][j] = kNone;
      } else {
        cell[order[rank]][j] = g;
      }
    }
  }

  std::map<std::vector<std::size_t>, std::vector<std::size_t>> groups;
  std::vector<std::size_t> overflow;
  std::size_t n_leftover = 0;
  for (std::size_t i = 0; i < total; ++i) {
    if (leftover[i]) {
      overflow.push_back(i);
      ++n_leftover;
    } else {
      groups[cell[i]].push_back(i);
    }
  }

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (auto& [key, members] : groups) {
    shuffle(members, rng);
    std::size_t k = 0;
    for (; k + 1 < members.size(); k += 2) pairs.emplace_back(members[k], members[k + 1]);
    if (k < members.size()) overflow.push_back(members[k]);
  }
  std::sort(overflow.begin(), overflow.end());
  const std::size_t overflow_size = overflow.size();
  shuffle(overflow, rng);
  for (std::size_t k = 0; k + 1 < overflow.size(); k += 2) pairs.emplace_back(overflow[k], overflow[k + 1]);

  GridMatchResult out;
  out.pairing = canonical_pairing(std::move(pairs));
  out.cost = pairing_cost(mahalanobis_distances(x), out.pairing);
  out.method = MatchMethod::grid;
  out.intervals = m;
  out.interval_size = width;
  out.n_groups = groups.size();
  out.leftovers = n_leftover;
  out.overflow_size = overflow_size;
  return out;
}

/// Average squared within-pair gap of the means, (1/n) sum over pairs.
inline double a2_diagnostic(const Pairing& pairing, std::span<const double> mu) {
  if (!pairing.is_pairing()) throw std::invalid_argument("diagnostic needs a pairing");
  if (mu.size() != pairing.n_subjects()) throw std::invalid_argument("mean vector length does not match the pairing");
  double acc = 0.0;
  for (const auto& b : pairing.blocks()) {
    const double gap = mu[b[1]] - mu[b[0]];
    acc += gap * gap;
  }
  return acc / static_cast<double>(pairing.n_blocks());
}

}  // namespace pmdesign

#endif  // PMDESIGN_MATCHING_HPP
