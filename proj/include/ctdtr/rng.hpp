#pragma once

// Seeded, derivable RNG streams. Every stochastic routine in the library
// draws from an explicit stream derived from (master seed, path of ids), so
// results are byte-identical across runs and across concurrency levels.
// Distributions are implemented by hand on top of mt19937_64 (whose output
// sequence is fixed by the standard) rather than through std::*_distribution,
// whose algorithms are implementation-defined.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace ctdtr {

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) { *this = derive(seed, {}); }

  // Derives an independent stream from a master seed and a path of ids
  // (e.g. {patient_hash, iteration, rollout}).
  static RngStream derive(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    std::vector<std::uint32_t> words;
    words.reserve(2 * (1 + path.size()));
    auto push = [&words](std::uint64_t v) {
      words.push_back(static_cast<std::uint32_t>(v & 0xffffffffull));
      words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(master);
    for (std::uint64_t p : path) push(p);
    std::seed_seq seq(words.begin(), words.end());
    return RngStream(seq);
  }

  std::uint64_t bits() { return eng_(); }

  // Uniform on the open interval (0, 1); never returns an endpoint, so the
  // inverse-transform solvers get finite targets.
  double uniform01() {
    return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller (cosine branch only; no cached state).
  double normal() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Marsaglia-Tsang; unit scale.
  double gamma_unit(double shape) {
    if (shape < 1.0) {
      const double u = uniform01();
      return gamma_unit(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      const double x = normal();
      const double t = 1.0 + c * x;
      if (t <= 0.0) continue;
      const double v = t * t * t;
      const double u = uniform01();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
  }

  double gamma(double shape, double rate) { return gamma_unit(shape) / rate; }

  double inverse_gamma(double shape, double rate_b) {
    return rate_b / gamma_unit(shape);
  }

  double chi_square(double df) { return 2.0 * gamma_unit(0.5 * df); }

  // Weibull(shape, scale) by inverse CDF.
  double weibull(double shape, double scale) {
    return scale * std::pow(-std::log(1.0 - uniform01()), 1.0 / shape);
  }

  bool bernoulli(double p) { return uniform01() < p; }

 private:
  explicit RngStream(std::seed_seq& seq) : eng_(seq) {}
  std::mt19937_64 eng_;
};

}  // namespace ctdtr
