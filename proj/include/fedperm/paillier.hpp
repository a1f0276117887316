#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <filesystem>

#include "fedperm/rng.hpp"

namespace fedperm {

// Ciphertext in Z*_{n^2}, bound to its keypair through key_id.
struct Ciphertext {
  mpz_class value;
  std::uint64_t key_id = 0;
};

class PublicKey {
 public:
  PublicKey() = default;
  PublicKey(unsigned key_bits, mpz_class n, mpz_class g);

  unsigned key_bits() const { return key_bits_; }
  const mpz_class& n() const { return n_; }
  const mpz_class& g() const { return g_; }
  const mpz_class& n_squared() const { return n_squared_; }
  std::uint64_t key_id() const { return key_id_; }

  // Probabilistic encryption of m in [0, n): c = g^m * r^n mod n^2.
  Ciphertext encrypt(const mpz_class& m, Rng& rng) const;

  // Deterministic encryption of zero (value 1), the neutral element for
  // homomorphic summation.
  Ciphertext zero_ciphertext() const;

 private:
  unsigned key_bits_ = 0;
  mpz_class n_, g_, n_squared_;
  std::uint64_t key_id_ = 0;
};

class SecretKey {
 public:
  SecretKey() = default;
  // Reconstructs decryption data (lambda, mu) from the factorization.
  SecretKey(const PublicKey& pk, mpz_class p, mpz_class q);

  const mpz_class& p() const { return p_; }
  const mpz_class& q() const { return q_; }
  std::uint64_t key_id() const { return key_id_; }

  // Unique plaintext in [0, n).
  mpz_class decrypt(const Ciphertext& c) const;

 private:
  mpz_class p_, q_, lambda_, mu_, n_, n_squared_;
  std::uint64_t key_id_ = 0;
};

struct PaillierKeypair {
  PublicKey pk;
  SecretKey sk;
};

inline constexpr unsigned kMinKeyBits = 512;

// Generates n = p*q with exactly key_bits bits from two random primes.
// Deterministic under the rng seed. key_bits must be even and >= kMinKeyBits.
PaillierKeypair keygen(unsigned key_bits, Rng& rng);

// Homomorphic addition: decrypts to (m1 + m2) mod n.
Ciphertext add(const PublicKey& pk, const Ciphertext& c1, const Ciphertext& c2);

// Plaintext-scalar multiplication: decrypts to (m * k) mod n; k >= 0.
Ciphertext scalar_mul(const PublicKey& pk, const Ciphertext& c,
                      const mpz_class& k);

// Maps reals in [0, range_max] to integers x * 2^frac_bits rounded to
// nearest. Only nonnegative values are representable; callers normalize into
// [0, 1] upstream. max_accumulations bounds how many encoded values may be
// homomorphically summed without leaving the plaintext ring.
class FixedPointCodec {
 public:
  explicit FixedPointCodec(unsigned frac_bits = 32,
                           double range_max = 1048576.0,
                           std::uint64_t max_accumulations = 1);

  unsigned frac_bits() const { return frac_bits_; }
  double range_max() const { return range_max_; }
  std::uint64_t max_accumulations() const { return max_accumulations_; }

  // Throws EncodingError if max_accumulations values at range_max could wrap
  // mod n.
  void validate_for_modulus(const mpz_class& n) const;

  mpz_class encode(double x) const;

  // v is a sum of up to `accumulated_count` encoded values; returns
  // v / (2^frac_bits * accumulated_count).
  double decode(const mpz_class& v, std::uint64_t accumulated_count = 1) const;

  // Largest representation error of a single encode/decode round trip.
  double quantum() const;

 private:
  unsigned frac_bits_;
  double range_max_;
  std::uint64_t max_accumulations_;
  mpz_class scale_;  // 2^frac_bits
};

// Key file round trips. Public keys store (key_bits, n, g); secret keys
// additionally (p, q). Byte layout documented in docs/formats.md.
void save_public_key(const PublicKey& pk, const std::filesystem::path& path);
PublicKey load_public_key(const std::filesystem::path& path);
void save_secret_key(const PaillierKeypair& kp,
                     const std::filesystem::path& path);
PaillierKeypair load_secret_key(const std::filesystem::path& path);

}  // namespace fedperm
