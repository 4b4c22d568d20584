#ifndef PMDESIGN_RANDOM_HPP
#define PMDESIGN_RANDOM_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace pmdesign {

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Mixes an ordered list of identifiers into a single 64-bit key.
inline constexpr std::uint64_t mix_key(std::initializer_list<std::uint64_t> ids) noexcept {
  std::uint64_t state = 0x6a09e667f3bcc908ULL;
  std::uint64_t acc = 0;
  for (std::uint64_t id : ids) {
    state ^= id + 0x9e3779b97f4a7c15ULL + (acc << 6) + (acc >> 2);
    acc = splitmix64(state);
  }
  return acc;
}

/// xoshiro256** generator. Satisfies UniformRandomBitGenerator.
///
/// Streams are derived from a tuple of identifiers (master seed, cell,
/// replicate, ...) so that any replicate can be regenerated on its own,
/// independent of how work is scheduled.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t seed = 0) noexcept { reseed(seed); }

  static Stream derive(std::initializer_list<std::uint64_t> ids) noexcept {
    return Stream(mix_key(ids));
  }

  void reseed(std::uint64_t seed) noexcept {
    std::uint64_t sm = seed;
    for (auto& s : state_) s = splitmix64(sm);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1); never returns 0, safe for logarithms.
  double uniform_open() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Unbiased integer in [0, bound) (Lemire's method).
  std::uint64_t below(std::uint64_t bound) noexcept {
    __uint128_t m = static_cast<__uint128_t>((*this)()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<__uint128_t>((*this)()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }
  std::array<std::uint64_t, 4> state_{};
};

template <typename T>
void shuffle(std::vector<T>& v, Stream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

// ---------------------------------------------------------------------------
// Variate generators. All are exact (no table approximations) and depend only
// on Stream, so draws are reproducible across standard libraries.
// ---------------------------------------------------------------------------

/// Standard normal via the Marsaglia polar method (no cached second value).
inline double standard_normal(Stream& rng) noexcept {
  for (;;) {
    const double u = 2.0 * rng.uniform() - 1.0;
    const double v = 2.0 * rng.uniform() - 1.0;
    const double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
  }
}

/// Gamma(shape, 1) by Marsaglia and Tsang, boosted for shape < 1.
inline double gamma_variate(double shape, Stream& rng) {
  if (!(shape > 0.0) || !std::isfinite(shape)) throw std::invalid_argument("gamma shape must be positive");
  if (shape < 1.0) {
    const double u = rng.uniform_open();
    return gamma_variate(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = standard_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform_open();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

inline double beta_variate(double a, double b, Stream& rng) {
  const double x = gamma_variate(a, rng);
  const double y = gamma_variate(b, rng);
  return x / (x + y);
}

/// Exponential(rate) by inversion.
inline double exponential_variate(double rate, Stream& rng) {
  return -std::log(rng.uniform_open()) / rate;
}

/// Weibull(scale, shape) by inversion.
inline double weibull_variate(double scale, double shape, Stream& rng) {
  return scale * std::pow(-std::log(rng.uniform_open()), 1.0 / shape);
}

/// Binomial(trials, p) by the beta-splitting recursion; exact for all trials.
inline std::uint64_t binomial_variate(std::uint64_t trials, double p, Stream& rng) {
  std::uint64_t acc = 0;
  for (;;) {
    if (trials == 0 || p <= 0.0) return acc;
    if (p >= 1.0) return acc + trials;
    if (trials <= 32) {
      for (std::uint64_t i = 0; i < trials; ++i) acc += rng.uniform() < p ? 1 : 0;
      return acc;
    }
    const std::uint64_t a = 1 + trials / 2;
    const std::uint64_t b = trials + 1 - a;
    const double x = beta_variate(static_cast<double>(a), static_cast<double>(b), rng);
    if (x >= p) {
      trials = a - 1;
      p = p / x;
    } else {
      acc += a;
      trials = b - 1;
      p = (p - x) / (1.0 - x);
    }
  }
}

inline constexpr double kPoissonMeanLimit = 1e12;

/// Poisson(mean) by gamma splitting down to a sequential-search tail.
/// Exact for every mean up to kPoissonMeanLimit; larger means throw.
inline std::uint64_t poisson_variate(double mean, Stream& rng) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) throw std::invalid_argument("poisson mean must be finite and nonnegative");
  if (mean > kPoissonMeanLimit) throw std::domain_error("poisson mean exceeds the supported limit of 1e12");
  std::uint64_t acc = 0;
  while (mean > 16.0) {
    const auto m = static_cast<std::uint64_t>(std::floor(0.875 * mean));
    const double x = gamma_variate(static_cast<double>(m), rng);
    if (x < mean) {
      acc += m;
      mean -= x;
    } else {
      return acc + binomial_variate(m - 1, mean / x, rng);
    }
  }
  // Inversion by sequential search; mean <= 16 keeps exp(-mean) well away from underflow.
  double p = std::exp(-mean);
  double cdf = p;
  const double u = rng.uniform();
  std::uint64_t k = 0;
  while (u >= cdf) {
    ++k;
    p *= mean / static_cast<double>(k);
    const double next = cdf + p;
    if (next == cdf) break;
    cdf = next;
  }
  return acc + k;
}

}  // namespace pmdesign

#endif  // PMDESIGN_RANDOM_HPP
