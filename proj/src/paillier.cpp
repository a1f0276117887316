#include "fedperm/paillier.hpp"

#include <cmath>
#include <vector>

#include "fedperm/errors.hpp"

namespace fedperm {

namespace {

constexpr int kPrimalityRounds = 64;

// FNV-1a over the magnitude bytes of n; binds ciphertexts to their keypair.
std::uint64_t derive_key_id(const mpz_class& n) {
  std::size_t count = 0;
  std::vector<unsigned char> buf((mpz_sizeinbase(n.get_mpz_t(), 2) + 7) / 8);
  mpz_export(buf.data(), &count, 1, 1, 1, 0, n.get_mpz_t());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < count; ++i) {
    h ^= buf[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

// L(x) = (x - 1) / n, defined on x = 1 mod n.
mpz_class l_function(const mpz_class& x, const mpz_class& n) {
  return (x - 1) / n;
}

mpz_class random_prime(std::size_t bits, Rng& rng) {
  // Top two bits set so that the product of two such primes has exactly
  // 2*bits bits; low bit set for oddness.
  mpz_class candidate = rng.bits(bits, /*exact_width=*/true);
  mpz_setbit(candidate.get_mpz_t(), bits - 2);
  mpz_setbit(candidate.get_mpz_t(), 0);
  while (mpz_probab_prime_p(candidate.get_mpz_t(), kPrimalityRounds) == 0) {
    candidate += 2;
  }
  return candidate;
}

}  // namespace

PublicKey::PublicKey(unsigned key_bits, mpz_class n, mpz_class g)
    : key_bits_(key_bits),
      n_(std::move(n)),
      g_(std::move(g)),
      n_squared_(n_ * n_),
      key_id_(derive_key_id(n_)) {}

Ciphertext PublicKey::encrypt(const mpz_class& m, Rng& rng) const {
  if (m < 0 || m >= n_) {
    throw ParameterError("encrypt: plaintext outside [0, n)");
  }
  mpz_class r, gcd;
  do {
    r = rng.below(n_);
    mpz_gcd(gcd.get_mpz_t(), r.get_mpz_t(), n_.get_mpz_t());
  } while (r == 0 || gcd != 1);

  // g = n + 1, so g^m = 1 + m*n mod n^2.
  mpz_class gm = (1 + m * n_) % n_squared_;
  mpz_class rn;
  mpz_powm(rn.get_mpz_t(), r.get_mpz_t(), n_.get_mpz_t(),
           n_squared_.get_mpz_t());
  return Ciphertext{gm * rn % n_squared_, key_id_};
}

Ciphertext PublicKey::zero_ciphertext() const {
  return Ciphertext{mpz_class(1), key_id_};
}

SecretKey::SecretKey(const PublicKey& pk, mpz_class p, mpz_class q)
    : p_(std::move(p)),
      q_(std::move(q)),
      n_(pk.n()),
      n_squared_(pk.n_squared()),
      key_id_(pk.key_id()) {
  if (p_ * q_ != n_) throw UsageError("secret key does not match public key");
  mpz_class pm1 = p_ - 1, qm1 = q_ - 1;
  mpz_lcm(lambda_.get_mpz_t(), pm1.get_mpz_t(), qm1.get_mpz_t());
  mpz_class glambda;
  mpz_powm(glambda.get_mpz_t(), pk.g().get_mpz_t(), lambda_.get_mpz_t(),
           n_squared_.get_mpz_t());
  mpz_class l = l_function(glambda, n_);
  if (mpz_invert(mu_.get_mpz_t(), l.get_mpz_t(), n_.get_mpz_t()) == 0) {
    throw UsageError("invalid keypair: L(g^lambda) not invertible mod n");
  }
}

mpz_class SecretKey::decrypt(const Ciphertext& c) const {
  if (c.key_id != key_id_) {
    throw UsageError("decrypt: ciphertext bound to a different keypair");
  }
  mpz_class clambda;
  mpz_powm(clambda.get_mpz_t(), c.value.get_mpz_t(), lambda_.get_mpz_t(),
           n_squared_.get_mpz_t());
  return l_function(clambda, n_) * mu_ % n_;
}

PaillierKeypair keygen(unsigned key_bits, Rng& rng) {
  if (key_bits < kMinKeyBits || key_bits % 2 != 0) {
    throw ParameterError("keygen: key_bits must be even and >= " +
                         std::to_string(kMinKeyBits));
  }
  const std::size_t half = key_bits / 2;
  for (;;) {
    mpz_class p = random_prime(half, rng);
    mpz_class q = random_prime(half, rng);
    if (p == q) continue;
    mpz_class n = p * q;
    if (mpz_sizeinbase(n.get_mpz_t(), 2) != key_bits) continue;
    mpz_class phi = (p - 1) * (q - 1), gcd;
    mpz_gcd(gcd.get_mpz_t(), n.get_mpz_t(), phi.get_mpz_t());
    if (gcd != 1) continue;
    PublicKey pk(key_bits, n, n + 1);
    return PaillierKeypair{pk, SecretKey(pk, p, q)};
  }
}

Ciphertext add(const PublicKey& pk, const Ciphertext& c1,
               const Ciphertext& c2) {
  if (c1.key_id != c2.key_id || c1.key_id != pk.key_id()) {
    throw UsageError("add: ciphertexts from different keypairs");
  }
  return Ciphertext{c1.value * c2.value % pk.n_squared(), pk.key_id()};
}

Ciphertext scalar_mul(const PublicKey& pk, const Ciphertext& c,
                      const mpz_class& k) {
  if (c.key_id != pk.key_id()) {
    throw UsageError("scalar_mul: ciphertext from a different keypair");
  }
  if (k < 0) {
    throw ParameterError(
        "scalar_mul: negative scalars are handled by the codec, not here");
  }
  Ciphertext out{mpz_class(), pk.key_id()};
  mpz_powm(out.value.get_mpz_t(), c.value.get_mpz_t(), k.get_mpz_t(),
           pk.n_squared().get_mpz_t());
  return out;
}

FixedPointCodec::FixedPointCodec(unsigned frac_bits, double range_max,
                                 std::uint64_t max_accumulations)
    : frac_bits_(frac_bits),
      range_max_(range_max),
      max_accumulations_(max_accumulations),
      scale_(mpz_class(1) << frac_bits) {
  if (frac_bits == 0 || frac_bits > 52) {
    throw ParameterError("codec: frac_bits must be in [1, 52]");
  }
  if (!(range_max > 0.0) || max_accumulations == 0) {
    throw ParameterError("codec: range_max and max_accumulations positive");
  }
  // Encoded values must fit the 8-byte wire slots.
  if (std::ldexp(range_max, static_cast<int>(frac_bits)) >= 0x1.0p64) {
    throw ParameterError("codec: range_max * 2^frac_bits exceeds 64 bits");
  }
}

void FixedPointCodec::validate_for_modulus(const mpz_class& n) const {
  mpz_class limit = scale_ * mpz_class(static_cast<unsigned long>(
                                 std::ceil(range_max_) + 1)) *
                    mpz_class(static_cast<unsigned long>(max_accumulations_));
  if (limit >= n) {
    throw EncodingError(
        "codec: accumulated encodings can overflow the plaintext ring");
  }
}

mpz_class FixedPointCodec::encode(double x) const {
  if (!std::isfinite(x)) throw EncodingError("encode: non-finite value");
  if (x < 0.0 || x > range_max_) {
    throw EncodingError("encode: value outside codec range");
  }
  const double scaled =
      std::nearbyint(std::ldexp(x, static_cast<int>(frac_bits_)));
  mpz_class out;
  mpz_set_d(out.get_mpz_t(), scaled);
  return out;
}

double FixedPointCodec::decode(const mpz_class& v,
                               std::uint64_t accumulated_count) const {
  if (accumulated_count == 0) {
    throw ParameterError("decode: accumulated_count must be positive");
  }
  if (v < 0) throw EncodingError("decode: negative encoded value");
  mpz_class limit = scale_ *
                    mpz_class(static_cast<unsigned long>(
                        std::ceil(range_max_) + 1)) *
                    mpz_class(static_cast<unsigned long>(accumulated_count));
  if (v > limit) {
    throw EncodingError("decode: value exceeds accumulated range");
  }
  return mpz_get_d(v.get_mpz_t()) /
         (std::ldexp(1.0, static_cast<int>(frac_bits_)) *
          static_cast<double>(accumulated_count));
}

double FixedPointCodec::quantum() const {
  return std::ldexp(1.0, -static_cast<int>(frac_bits_));
}

}  // namespace fedperm
