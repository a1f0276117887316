#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fedperm/errors.hpp"
#include "fedperm/paillier.hpp"

using namespace fedperm;

namespace {

PaillierKeypair test_keys(std::uint64_t seed = 1, unsigned bits = 512) {
  Rng rng(seed);
  return keygen(bits, rng);
}

}  // namespace

TEST_CASE("keygen produces a modulus of the requested width") {
  const auto kp = test_keys();
  CHECK(mpz_sizeinbase(kp.pk.n().get_mpz_t(), 2) == 512);
  CHECK(kp.pk.g() == kp.pk.n() + 1);

  Rng rng(3);
  const auto kp2 = keygen(768, rng);
  CHECK(mpz_sizeinbase(kp2.pk.n().get_mpz_t(), 2) == 768);

  // Production default.
  const auto kp3 = keygen(2048, rng);
  CHECK(mpz_sizeinbase(kp3.pk.n().get_mpz_t(), 2) == 2048);
  CHECK(kp3.sk.decrypt(kp3.pk.encrypt(123456789, rng)) == 123456789);
}

TEST_CASE("keygen is deterministic under a fixed seed") {
  Rng a(7), b(7);
  const auto k1 = keygen(512, a);
  const auto k2 = keygen(512, b);
  CHECK(k1.pk.n() == k2.pk.n());
  CHECK(k1.sk.p() == k2.sk.p());
  // Ciphertext streams repeat as well.
  Rng ra(9), rb(9);
  CHECK(k1.pk.encrypt(5, ra).value == k2.pk.encrypt(5, rb).value);
}

TEST_CASE("key bits below the floor are rejected") {
  Rng rng(1);
  CHECK_THROWS_AS(keygen(128, rng), ParameterError);
  CHECK_THROWS_AS(keygen(511, rng), ParameterError);
}

TEST_CASE("encrypt/decrypt round trips") {
  const auto kp = test_keys();
  Rng rng(2);
  CHECK(kp.sk.decrypt(kp.pk.encrypt(0, rng)) == 0);
  CHECK(kp.sk.decrypt(kp.pk.encrypt(42, rng)) == 42);
  const mpz_class top = kp.pk.n() - 1;
  CHECK(kp.sk.decrypt(kp.pk.encrypt(top, rng)) == top);

  for (int i = 0; i < 50; ++i) {
    const mpz_class m = rng.below(kp.pk.n());
    CHECK(kp.sk.decrypt(kp.pk.encrypt(m, rng)) == m);
  }
}

TEST_CASE("encryption is probabilistic") {
  const auto kp = test_keys();
  Rng rng(4);
  CHECK(kp.pk.encrypt(5, rng).value != kp.pk.encrypt(5, rng).value);
}

TEST_CASE("plaintexts outside [0, n) are rejected") {
  const auto kp = test_keys();
  Rng rng(5);
  CHECK_THROWS_AS(kp.pk.encrypt(-1, rng), ParameterError);
  CHECK_THROWS_AS(kp.pk.encrypt(kp.pk.n(), rng), ParameterError);
}

TEST_CASE("additive homomorphism matches plain addition") {
  const auto kp = test_keys();
  Rng rng(6);
  CHECK(kp.sk.decrypt(add(kp.pk, kp.pk.encrypt(3, rng),
                          kp.pk.encrypt(5, rng))) == 8);
  // Enc(0) is the neutral element.
  const auto cx = kp.pk.encrypt(123456, rng);
  CHECK(kp.sk.decrypt(add(kp.pk, kp.pk.encrypt(0, rng), cx)) == 123456);
  CHECK(kp.sk.decrypt(add(kp.pk, kp.pk.zero_ciphertext(), cx)) == 123456);

  for (int i = 0; i < 100; ++i) {
    const mpz_class a = rng.bits(64), b = rng.bits(64);
    const auto sum =
        kp.sk.decrypt(add(kp.pk, kp.pk.encrypt(a, rng),
                          kp.pk.encrypt(b, rng)));
    CHECK(sum == a + b);
  }
}

TEST_CASE("sums wrap mod n") {
  const auto kp = test_keys();
  Rng rng(8);
  const mpz_class a = kp.pk.n() - 2, b = 10;
  const auto c = add(kp.pk, kp.pk.encrypt(a, rng), kp.pk.encrypt(b, rng));
  CHECK(kp.sk.decrypt(c) == (a + b) % kp.pk.n());
}

TEST_CASE("scalar multiplication matches plain multiplication") {
  const auto kp = test_keys();
  Rng rng(10);
  const auto cx = kp.pk.encrypt(7, rng);
  CHECK(kp.sk.decrypt(scalar_mul(kp.pk, cx, 6)) == 42);
  CHECK(kp.sk.decrypt(scalar_mul(kp.pk, cx, 0)) == 0);
  CHECK(kp.sk.decrypt(scalar_mul(kp.pk, cx, 1)) == 7);
  CHECK_THROWS_AS(scalar_mul(kp.pk, cx, -3), ParameterError);

  for (int i = 0; i < 100; ++i) {
    const mpz_class x = rng.bits(48);
    const mpz_class k = rng.bits(32);
    CHECK(kp.sk.decrypt(scalar_mul(kp.pk, kp.pk.encrypt(x, rng), k)) ==
          x * k);
  }
}

TEST_CASE("cross-keypair operations are rejected") {
  const auto kp1 = test_keys(1);
  const auto kp2 = test_keys(2);
  Rng rng(12);
  const auto c1 = kp1.pk.encrypt(1, rng);
  const auto c2 = kp2.pk.encrypt(1, rng);
  CHECK_THROWS_AS(add(kp1.pk, c1, c2), UsageError);
  CHECK_THROWS_AS(kp2.sk.decrypt(c1), UsageError);
  CHECK_THROWS_AS(scalar_mul(kp2.pk, c1, 2), UsageError);
}

TEST_CASE("codec encodes exact dyadics and bounds quantization") {
  const FixedPointCodec codec(32);
  CHECK(codec.encode(0.0) == 0);
  CHECK(codec.encode(0.5) == mpz_class(1) << 31);
  CHECK(codec.encode(1.0) == mpz_class(1) << 32);

  Rng rng(14);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.uniform();
    const double back = codec.decode(codec.encode(x));
    CHECK(std::fabs(back - x) <= codec.quantum());
  }
  CHECK(std::fabs(codec.decode(codec.encode(0.3)) - 0.3) <= codec.quantum());
}

TEST_CASE("codec encode is monotone") {
  const FixedPointCodec codec(16);
  Rng rng(15);
  double prev_x = 0.0;
  mpz_class prev_v = codec.encode(0.0);
  for (int i = 0; i < 200; ++i) {
    const double x = prev_x + rng.uniform() * 0.01;
    const mpz_class v = codec.encode(x);
    CHECK(v >= prev_v);
    prev_x = x;
    prev_v = v;
  }
}

TEST_CASE("codec rejects out-of-range and non-finite values") {
  const FixedPointCodec codec(32, 2.0, 4);
  CHECK_THROWS_AS(codec.encode(-0.1), EncodingError);
  CHECK_THROWS_AS(codec.encode(2.5), EncodingError);
  CHECK_THROWS_AS(codec.encode(std::nan("")), EncodingError);
}

TEST_CASE("accumulated sums stay below a 512-bit modulus") {
  // Fifteen clients of values <= 1.0 at 32 fractional bits: 15 * 2^32 is
  // vastly below n, so validation passes.
  const auto kp = test_keys();
  const FixedPointCodec codec(32, 1.0, 15);
  CHECK_NOTHROW(codec.validate_for_modulus(kp.pk.n()));
  // A deliberately absurd accumulation bound trips the check.
  const FixedPointCodec big(32, 1.0, UINT64_MAX / 2);
  CHECK_THROWS_AS(big.validate_for_modulus(mpz_class(1) << 64),
                  EncodingError);
}

TEST_CASE("decode averages homomorphic sums") {
  const auto kp = test_keys();
  const FixedPointCodec codec(32, 1.0, 15);
  Rng rng(16);
  // Sum of 15 encodings of 1.0 decodes back to 1.0 under divisor 15.
  Ciphertext acc = kp.pk.zero_ciphertext();
  for (int i = 0; i < 15; ++i) {
    acc = add(kp.pk, acc, kp.pk.encrypt(codec.encode(1.0), rng));
  }
  CHECK(codec.decode(kp.sk.decrypt(acc), 15) == doctest::Approx(1.0));
}

TEST_CASE("key files round trip and are deterministic") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "fedperm_key_test";
  fs::create_directories(dir);

  const auto kp = test_keys(21);
  save_public_key(kp.pk, dir / "k.pub");
  save_secret_key(kp, dir / "k.key");

  const auto pk = load_public_key(dir / "k.pub");
  CHECK(pk.n() == kp.pk.n());
  CHECK(pk.key_id() == kp.pk.key_id());

  const auto kp2 = load_secret_key(dir / "k.key");
  Rng rng(22);
  CHECK(kp2.sk.decrypt(pk.encrypt(777, rng)) == 777);

  // Same seed, same bytes.
  const auto kp3 = test_keys(21);
  save_public_key(kp3.pk, dir / "k2.pub");
  std::ifstream a(dir / "k.pub", std::ios::binary);
  std::ifstream b(dir / "k2.pub", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)),
                       std::istreambuf_iterator<char>());
  const std::string sb((std::istreambuf_iterator<char>(b)),
                       std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  fs::remove_all(dir);
}
