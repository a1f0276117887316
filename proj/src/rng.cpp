#include "fedperm/rng.hpp"

#include <cmath>

#include "fedperm/errors.hpp"

namespace fedperm {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t s = seed;
  // Warm the engine with splitmix-derived words; raw small seeds make
  // mt19937_64's first outputs correlated.
  std::seed_seq seq{static_cast<std::uint32_t>(splitmix64(s)),
                    static_cast<std::uint32_t>(splitmix64(s)),
                    static_cast<std::uint32_t>(splitmix64(s)),
                    static_cast<std::uint32_t>(splitmix64(s))};
  engine_.seed(seq);
}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) throw ParameterError("below: bound must be positive");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % bound;
}

double Rng::laplace(double scale) {
  // u in (-1/2, 1/2]; inverse CDF of the Laplace distribution.
  const double u = uniform() - 0.5;
  const double sign = (u < 0.0) ? -1.0 : 1.0;
  return -scale * sign * std::log1p(-2.0 * std::fabs(u));
}

double Rng::gaussian(double stddev) {
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return stddev * r * std::cos(2.0 * M_PI * u2);
}

double Rng::gamma(double shape) {
  if (shape <= 0.0) throw ParameterError("gamma: shape must be positive");
  if (shape < 1.0) {
    const double u = uniform();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = gaussian(1.0);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
      return d * v;
    }
  }
}

std::vector<double> Rng::dirichlet(double alpha, std::size_t k) {
  if (k == 0) throw ParameterError("dirichlet: k must be positive");
  std::vector<double> out(k);
  double sum = 0.0;
  for (auto& x : out) {
    x = gamma(alpha);
    sum += x;
  }
  if (sum <= 0.0) {
    // All-zero draws can only happen through underflow at tiny alpha; fall
    // back to a single winner chosen uniformly.
    out.assign(k, 0.0);
    out[below(static_cast<std::uint64_t>(k))] = 1.0;
    return out;
  }
  for (auto& x : out) x /= sum;
  return out;
}

mpz_class Rng::bits(std::size_t nbits, bool exact_width) {
  if (nbits == 0) return 0;
  static_assert(sizeof(unsigned long) == 8, "LP64 assumed");
  const std::size_t words = (nbits + 63) / 64;
  mpz_class out = 0;
  for (std::size_t i = 0; i < words; ++i) {
    out <<= 64;
    out += static_cast<unsigned long>(next_u64());
  }
  // Trim to nbits.
  mpz_class mask = (mpz_class(1) << nbits) - 1;
  out &= mask;
  if (exact_width) mpz_setbit(out.get_mpz_t(), nbits - 1);
  return out;
}

mpz_class Rng::below(const mpz_class& bound) {
  if (bound <= 0) throw ParameterError("below: bound must be positive");
  const std::size_t nbits = mpz_sizeinbase(bound.get_mpz_t(), 2);
  mpz_class x;
  do {
    x = bits(nbits);
  } while (x >= bound);
  return x;
}

Rng Rng::fork(std::uint64_t tag) const {
  std::uint64_t s = seed_ ^ (0x6a09e667f3bcc909ULL + tag);
  splitmix64(s);
  const std::uint64_t derived = splitmix64(s);
  return Rng(derived);
}

}  // namespace fedperm
