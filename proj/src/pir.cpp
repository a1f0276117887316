#include "fedperm/pir.hpp"

#include "fedperm/errors.hpp"
#include "fedperm/parallel.hpp"

namespace fedperm {

std::size_t PirQuery::ciphertext_count() const {
  std::size_t count = 0;
  for (const auto& m : matrices) count += m.size();
  return count;
}

PirQuery build_query(const PublicKey& pk, const ShuffleSpec& spec, Rng& rng) {
  spec.validate();
  PirQuery query;
  query.window = spec.window;
  query.pattern_count = spec.pattern_count;
  query.key_id = pk.key_id();
  query.matrices.reserve(spec.pattern_count);
  const mpz_class one = 1, zero = 0;
  for (const auto& pi : spec.patterns) {
    const auto bits = permutation_matrix(pi);
    std::vector<Ciphertext> mat;
    mat.reserve(bits.size());
    for (std::uint8_t b : bits) {
      mat.push_back(pk.encrypt(b ? one : zero, rng));
    }
    query.matrices.push_back(std::move(mat));
  }
  return query;
}

Ciphertext respond_single(const PublicKey& pk,
                          const std::vector<Ciphertext>& query_row,
                          const std::vector<mpz_class>& db) {
  if (query_row.size() != db.size()) {
    throw ParameterError("respond_single: query and database length mismatch");
  }
  Ciphertext acc = pk.zero_ciphertext();
  for (std::size_t l = 0; l < db.size(); ++l) {
    acc = add(pk, acc, scalar_mul(pk, query_row[l], db[l]));
  }
  return acc;
}

EncryptedAggregate unshuffle_aggregate(
    const PublicKey& pk, const std::vector<PirQuery>& queries,
    const std::vector<std::vector<mpz_class>>& shuffled, std::size_t k1,
    std::size_t k2, unsigned threads) {
  if (queries.empty() || queries.size() != shuffled.size()) {
    throw ProtocolError("aggregate: need one query per client update");
  }
  const std::size_t d = shuffled.front().size();
  if (d == 0 || k1 == 0 || k2 == 0 || d % (k1 * k2) != 0) {
    throw ProtocolError("aggregate: geometry does not partition the model");
  }
  for (std::size_t u = 0; u < queries.size(); ++u) {
    const auto& q = queries[u];
    if (q.window != k1 || q.pattern_count != k2 ||
        q.matrices.size() != k2) {
      throw ProtocolError("aggregate: client geometry mismatch");
    }
    for (const auto& m : q.matrices) {
      if (m.size() != k1 * k1) {
        throw ProtocolError("aggregate: malformed query matrix");
      }
    }
    if (q.key_id != pk.key_id()) {
      throw ProtocolError("aggregate: client key mismatch");
    }
    if (shuffled[u].size() != d) {
      throw ProtocolError("aggregate: client dimension mismatch");
    }
  }

  EncryptedAggregate agg;
  agg.contributor_count = queries.size();
  agg.key_id = pk.key_id();
  agg.slots.assign(d, pk.zero_ciphertext());

  // Each output window is independent, so windows parallelize with a
  // schedule-independent result (ciphertext arithmetic is exact).
  const std::size_t window_count = d / k1;
  parallel_for(0, window_count, threads, [&](std::size_t k) {
    const std::size_t base = k * k1;
    for (std::size_t u = 0; u < queries.size(); ++u) {
      const auto& mat = queries[u].matrices[k % k2];
      const auto& y = shuffled[u];
      // Slot j of the original order: sum over mask column j. Row l of the
      // matrix encrypts e_{pi(l)}, so column j selects the position where
      // original slot j currently lives.
      for (std::size_t j = 0; j < k1; ++j) {
        Ciphertext acc = agg.slots[base + j];
        for (std::size_t l = 0; l < k1; ++l) {
          acc = add(pk, acc, scalar_mul(pk, mat[l * k1 + j], y[base + l]));
        }
        agg.slots[base + j] = acc;
      }
    }
  });
  return agg;
}

std::vector<double> recover(const SecretKey& sk, const EncryptedAggregate& agg,
                            const FixedPointCodec& codec, double clip_c) {
  if (agg.key_id != sk.key_id()) {
    throw UsageError("recover: aggregate bound to a different keypair");
  }
  std::vector<double> out(agg.slots.size());
  for (std::size_t i = 0; i < agg.slots.size(); ++i) {
    const double z = codec.decode(sk.decrypt(agg.slots[i]),
                                  agg.contributor_count);
    out[i] = clip_c * (2.0 * z - 1.0);
  }
  return out;
}

}  // namespace fedperm
