#pragma once

#include <cstdint>
#include <vector>

#include "fedperm/fedcore.hpp"
#include "fedperm/paillier.hpp"

namespace fedperm {

inline constexpr std::uint16_t kWireVersion = 1;

// Client upload encoding (big-endian throughout): magic "FPRM", u16 version,
// u64 dimension, u32 k1, u32 k2, u64 key_id, then dimension u64 fixed-point
// values, then k2*k1^2 ciphertexts as u32 length + magnitude bytes.
// docs/formats.md is the byte-exact reference.
std::vector<std::uint8_t> serialize_update(const ClientUpdateMsg& msg);
ClientUpdateMsg parse_update(const std::vector<std::uint8_t>& bytes);

// Size in bytes a paillier-mode upload occupies on the wire.
std::size_t serialized_update_size(const ClientUpdateMsg& msg);

}  // namespace fedperm
