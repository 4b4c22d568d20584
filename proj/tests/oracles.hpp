// Brute-force reference computations used only by the tests. None of these
// call into the library paths they are used to check.
#ifndef PMDESIGN_TESTS_ORACLES_HPP
#define PMDESIGN_TESTS_ORACLES_HPP

#include <bit>
#include <cstdint>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

namespace oracle {

using PairList = std::vector<std::pair<std::size_t, std::size_t>>;

/// Visits every perfect pairing of {0..n-1}, lowest free index paired first.
inline void for_each_pairing(std::size_t n, const std::function<void(const PairList&)>& visit) {
  std::vector<bool> used(n, false);
  PairList cur;
  std::function<void()> rec = [&] {
    std::size_t i = 0;
    while (i < n && used[i]) ++i;
    if (i == n) {
      visit(cur);
      return;
    }
    used[i] = true;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (used[j]) continue;
      used[j] = true;
      cur.emplace_back(i, j);
      rec();
      cur.pop_back();
      used[j] = false;
    }
    used[i] = false;
  };
  rec();
}

/// Minimum total cost over all (n-1)!! pairings, and how many were visited.
template <typename Cost>
std::pair<double, std::size_t> brute_force_min_pairing(std::size_t n, Cost&& cost) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t count = 0;
  for_each_pairing(n, [&](const PairList& pl) {
    ++count;
    double c = 0.0;
    for (const auto& [a, b] : pl) c += cost(a, b);
    best = std::min(best, c);
  });
  return {best, count};
}

/// All balanced sign vectors of length n (bitmask enumeration).
inline std::vector<std::vector<int>> balanced_vectors(std::size_t n) {
  std::vector<std::vector<int>> out;
  for (std::uint32_t m = 0; m < (1U << n); ++m) {
    if (static_cast<std::size_t>(std::popcount(m)) != n / 2) continue;
    std::vector<int> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = (m >> i) & 1U ? 1 : -1;
    out.push_back(std::move(w));
  }
  return out;
}

/// Exact population variance of (w'v)^2 / (2n)^2 over the 2^n PM sign
/// patterns, pairs (2i, 2i+1). Two passes in long double.
inline double pm_variance_by_enumeration(const std::vector<double>& v) {
  const std::size_t n = v.size() / 2;
  const long double two_n = static_cast<long double>(v.size());
  const std::uint64_t patterns = std::uint64_t{1} << n;
  std::vector<long double> e(patterns);
  long double mean = 0.0L;
  for (std::uint64_t u = 0; u < patterns; ++u) {
    long double s = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
      const long double d = static_cast<long double>(v[2 * i + 1]) - v[2 * i];
      s += ((u >> i) & 1U) ? d : -d;
    }
    e[u] = s * s / (two_n * two_n);
    mean += e[u];
  }
  mean /= static_cast<long double>(patterns);
  long double var = 0.0L;
  for (long double x : e) var += (x - mean) * (x - mean);
  return static_cast<double>(var / static_cast<long double>(patterns));
}

}  // namespace oracle

#endif  // PMDESIGN_TESTS_ORACLES_HPP
