#pragma once

#include <cstdint>
#include <vector>

#include "fedperm/paillier.hpp"
#include "fedperm/permute.hpp"

namespace fedperm {

// Encrypted shuffling patterns: k2 matrices of k1 x k1 ciphertexts, each an
// elementwise encryption of the pattern's permutation matrix.
struct PirQuery {
  std::size_t window = 0;         // k1
  std::size_t pattern_count = 0;  // k2
  std::uint64_t key_id = 0;
  // pattern_count entries, each row-major k1*k1.
  std::vector<std::vector<Ciphertext>> matrices;

  std::size_t ciphertext_count() const;
};

// Encrypted, unshuffled, client-summed parameter slots. Division by the
// contributor count happens after decryption.
struct EncryptedAggregate {
  std::vector<Ciphertext> slots;
  std::uint64_t contributor_count = 0;
  std::uint64_t key_id = 0;
};

// Entry (i, j, l) encrypts 1 iff pattern_i(j) == l, else 0. Exactly
// k2 * k1^2 ciphertexts.
PirQuery build_query(const PublicKey& pk, const ShuffleSpec& spec, Rng& rng);

// Homomorphic dot product of one encrypted mask row with a plaintext record
// vector; decrypts to the selected record.
Ciphertext respond_single(const PublicKey& pk,
                          const std::vector<Ciphertext>& query_row,
                          const std::vector<mpz_class>& db);

// Applies each client's encrypted permutation matrices window-wise to its
// shuffled fixed-point vector (the matrix for a pattern is broadcast across
// the pattern's superwindow), then homomorphically sums across clients.
// All clients must share (d, k1, k2) and the public key. Runs only on the
// public key; the result decrypts to the plain unshuffle-and-sum.
EncryptedAggregate unshuffle_aggregate(
    const PublicKey& pk, const std::vector<PirQuery>& queries,
    const std::vector<std::vector<mpz_class>>& shuffled, std::size_t k1,
    std::size_t k2, unsigned threads = 1);

// Decrypts all slots, decodes with the contributor count as divisor, and
// de-normalizes via clip_c * (2z - 1).
std::vector<double> recover(const SecretKey& sk, const EncryptedAggregate& agg,
                            const FixedPointCodec& codec, double clip_c);

}  // namespace fedperm
