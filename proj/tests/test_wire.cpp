#include <doctest.h>

#include "fedperm/errors.hpp"
#include "fedperm/wire.hpp"

using namespace fedperm;

namespace {

PaillierKeypair test_keys() {
  Rng rng(1);
  return keygen(512, rng);
}

ClientUpdateMsg sample_message(const PublicKey& pk) {
  Rng rng(5);
  const auto spec = gen_spec(12, 3, 2, rng);
  ClientUpdateMsg msg;
  msg.client_id = 4;
  msg.true_dim = 12;
  const FixedPointCodec codec(32, 2.0, 4);
  for (int i = 0; i < 12; ++i) {
    msg.shuffled.push_back(codec.encode(i / 16.0).get_ui());
  }
  msg.query = build_query(pk, spec, rng);
  return msg;
}

}  // namespace

TEST_CASE("client updates round trip through the wire format") {
  const auto kp = test_keys();
  const auto msg = sample_message(kp.pk);
  const auto bytes = serialize_update(msg);
  CHECK(bytes.size() == serialized_update_size(msg));

  const auto parsed = parse_update(bytes);
  CHECK(parsed.shuffled == msg.shuffled);
  REQUIRE(parsed.query.has_value());
  CHECK(parsed.query->window == 3);
  CHECK(parsed.query->pattern_count == 2);
  CHECK(parsed.query->key_id == kp.pk.key_id());
  REQUIRE(parsed.query->matrices.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    REQUIRE(parsed.query->matrices[i].size() == 9);
    for (std::size_t e = 0; e < 9; ++e) {
      CHECK(parsed.query->matrices[i][e].value ==
            msg.query->matrices[i][e].value);
    }
  }
  // The parsed ciphertexts still decrypt to permutation-matrix bits.
  int ones = 0;
  for (const auto& c : parsed.query->matrices[0]) {
    ones += kp.sk.decrypt(c) == 1 ? 1 : 0;
  }
  CHECK(ones == 3);
}

TEST_CASE("wire header is byte-exact") {
  const auto kp = test_keys();
  const auto msg = sample_message(kp.pk);
  const auto bytes = serialize_update(msg);
  REQUIRE(bytes.size() > 30);
  // magic
  CHECK(bytes[0] == 'F');
  CHECK(bytes[1] == 'P');
  CHECK(bytes[2] == 'R');
  CHECK(bytes[3] == 'M');
  // version 1 (u16 BE)
  CHECK(bytes[4] == 0);
  CHECK(bytes[5] == 1);
  // dimension 12 (u64 BE)
  for (int i = 6; i < 13; ++i) CHECK(bytes[i] == 0);
  CHECK(bytes[13] == 12);
  // k1 = 3, k2 = 2 (u32 BE each)
  CHECK(bytes[17] == 3);
  CHECK(bytes[21] == 2);
  // key id (u64 BE)
  std::uint64_t key_id = 0;
  for (int i = 22; i < 30; ++i) key_id = (key_id << 8) | bytes[i];
  CHECK(key_id == kp.pk.key_id());
}

TEST_CASE("corrupted updates are rejected with offsets") {
  const auto kp = test_keys();
  const auto msg = sample_message(kp.pk);
  auto bytes = serialize_update(msg);

  auto truncated = bytes;
  truncated.resize(bytes.size() / 2);
  CHECK_THROWS_AS(parse_update(truncated), FormatError);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  try {
    parse_update(bad_magic);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.byte_offset() == 0);
  }

  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(parse_update(trailing), FormatError);
}

TEST_CASE("mock-mode messages have no wire form") {
  ClientUpdateMsg msg;
  msg.shuffled = {1, 2, 3};
  CHECK_THROWS_AS(serialize_update(msg), UsageError);
  CHECK(serialized_update_size(msg) == 0);
}

TEST_CASE("key files reject the wrong magic") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "fedperm_wire_test";
  fs::create_directories(dir);
  const auto kp = test_keys();
  save_public_key(kp.pk, dir / "k.pub");
  save_secret_key(kp, dir / "k.key");
  // A public key file is not a secret key file.
  CHECK_THROWS_AS(load_secret_key(dir / "k.pub"), FormatError);
  CHECK_THROWS_AS(load_public_key(dir / "k.key"), FormatError);
  fs::remove_all(dir);
}
