#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <random>
#include <vector>

namespace fedperm {

// Deterministic random source. Every piece of randomness in the library flows
// through an explicitly passed Rng so that runs are reproducible from a single
// seed. Substreams derived with fork() depend only on (seed, tag), never on
// how much of the parent stream has been consumed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform double in [0, 1) with 53 random bits. Built from raw bits rather
  // than std::uniform_real_distribution so the stream is implementation
  // independent.
  double uniform();
  double uniform(double lo, double hi);

  // Uniform integer in [0, bound) by rejection sampling; bound > 0.
  std::uint64_t below(std::uint64_t bound);

  // Laplace(0, scale) via inverse CDF.
  double laplace(double scale);

  // N(0, stddev^2) via Box-Muller (no cached spare).
  double gaussian(double stddev);

  // Gamma(shape, 1) via Marsaglia-Tsang, boosted for shape < 1.
  double gamma(double shape);

  // Dirichlet(alpha * 1_k) as normalized Gamma draws.
  std::vector<double> dirichlet(double alpha, std::size_t k);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  // Uniformly random nonnegative integer with exactly `nbits` significant
  // bits (top bit set) when exact_width, otherwise < 2^nbits.
  mpz_class bits(std::size_t nbits, bool exact_width = false);

  // Uniform in [0, bound) by rejection sampling; bound > 0.
  mpz_class below(const mpz_class& bound);

  // Independent substream identified by (seed, tag).
  Rng fork(std::uint64_t tag) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace fedperm
