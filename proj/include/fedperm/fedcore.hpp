#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <variant>
#include <vector>

#include "fedperm/datamodel.hpp"
#include "fedperm/paillier.hpp"
#include "fedperm/permute.hpp"
#include "fedperm/pir.hpp"
#include "fedperm/privacy.hpp"

namespace fedperm {

enum class Algorithm { fedperm, fedavg, cdp, ldp };

// Clipping applied by the FedAvg baseline, selectable so it can serve as the
// exact noiseless oracle for each private algorithm.
enum class ClipMode { none, element, l2_delta, l2_batch };

// paillier runs the real cryptographic pipeline; mock replaces it with the
// bit-identical plaintext unshuffle-and-sum over the same fixed-point
// integers (an ideal-functionality shortcut for desk-scale experiments).
enum class HeMode { paillier, mock };

struct FederationConfig {
  std::size_t total_clients = 15;      // N
  std::size_t clients_per_round = 15;  // n
  std::uint64_t rounds = 10;           // T
  unsigned local_epochs = 1;           // E
  double learning_rate = 0.1;
  std::size_t batch_size = 32;
  double clip_c = 1.0;  // C
  double norm_bound_m = std::numeric_limits<double>::infinity();  // M
  std::size_t window = 5;         // k1
  std::size_t pattern_count = 1;  // k2
  // Local budget before amplification; +infinity disables noise. When
  // eps_total is finite it takes precedence and eps_d is derived through
  // calibrate().
  double eps_d = std::numeric_limits<double>::infinity();
  double eps_total = std::numeric_limits<double>::quiet_NaN();
  double delta_total = 1e-5;
  double amplification_constant = 1.0;
  unsigned frac_bits = 32;
  unsigned key_bits = 512;
  HeMode he_mode = HeMode::paillier;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  double dirichlet_alpha = 1.0;
  std::size_t attacker_count = 0;
  double attacker_scale = 1.0;
  ClipMode fedavg_clip = ClipMode::none;
  double cdp_noise_multiplier = 1.0;  // z
  double cdp_sample_fraction = 0.0;   // q; 0 means n / N
  bool measure_times = false;

  void validate() const;
};

struct ClientUpdateMsg {
  std::uint64_t client_id = 0;
  std::size_t true_dim = 0;  // d before padding
  // Shuffled, noisy, normalized values as fixed-point integers (padded).
  std::vector<std::uint64_t> shuffled;
  std::optional<PirQuery> query;         // paillier mode
  std::optional<ShuffleSpec> plain_spec;  // mock mode
};

struct PlainAggregate {
  std::vector<mpz_class> slots;
  std::uint64_t contributor_count = 0;
};

using Aggregate = std::variant<EncryptedAggregate, PlainAggregate>;

struct RoundRecord {
  std::uint64_t round = 0;  // 1-based
  std::vector<std::uint64_t> client_ids;
  double enc_ms = 0.0;
  double agg_ms = 0.0;
  double dec_ms = 0.0;
  double test_acc = 0.0;
  double eps_spent = 0.0;
  double delta_spent = 0.0;
};

struct RunResult {
  std::vector<RoundRecord> records;
  std::vector<std::vector<double>> trajectory;  // global model after round t
  std::vector<double> final_model;
};

// Per-round budget quantities derived from the config and model size. When
// the geometry admits no amplification regime, accounting falls back to
// naive composition of the raw eps_d-LDP rounds (amplified == false).
struct ResolvedBudget {
  bool noisy = false;      // any Laplace noise at all
  bool amplified = false;  // amplification corollary applies
  double eps_d = std::numeric_limits<double>::infinity();
  PrivacyBudget derived;  // populated when amplified
  double delta_l = 0.0;
  double delta_prime = 0.0;
};

ResolvedBudget resolve_budget(const FederationConfig& config,
                              std::size_t true_dim, std::size_t padded_dim);

std::size_t padded_dim(std::size_t true_dim, std::size_t k1, std::size_t k2);

// The randomness stream local training consumes for (round, client); shared
// by every algorithm so noiseless trajectories are comparable, and exposed
// so test oracles can replay a client's training.
Rng training_rng(const FederationConfig& config, std::uint64_t round,
                 std::uint64_t client_id);

// Local training, delta extraction, clip/normalize, Laplace noise, padding,
// shuffling, fixed-point encoding, and query construction for one client.
// Deterministic under (config.seed, round, client_id). forced_spec is a test
// hook overriding the sampled shuffling patterns.
ClientUpdateMsg client_round(const std::vector<double>& global_params,
                             const Dataset& shard,
                             const FederationConfig& config,
                             const ResolvedBudget& budget,
                             const PublicKey* pk, const FixedPointCodec& codec,
                             std::uint64_t round, std::uint64_t client_id,
                             const ShuffleSpec* forced_spec = nullptr);

// Scales the (pre-bound) update values by `scale`, keeping the query intact.
ClientUpdateMsg attacker_client(ClientUpdateMsg msg, double scale,
                                const FixedPointCodec& codec);

// Norm-bounds every update in decoded real space, re-encodes, and performs
// the encrypted (or mock) unshuffle-and-sum. Receives only the public key.
Aggregate server_round(const std::vector<ClientUpdateMsg>& msgs,
                       const FederationConfig& config, const PublicKey* pk,
                       const FixedPointCodec& codec);

// Decrypts, decodes with the contributor count, de-normalizes, strips
// padding, and applies the global update.
std::vector<double> client_finalize(const Aggregate& agg, const SecretKey* sk,
                                    const FederationConfig& config,
                                    const FixedPointCodec& codec,
                                    const std::vector<double>& global_params,
                                    std::size_t true_dim);

RunResult run_fedperm(const FederationConfig& config, const Dataset& train,
                      const Dataset& test);
RunResult run_fedavg(const FederationConfig& config, const Dataset& train,
                     const Dataset& test);
RunResult run_cdp(const FederationConfig& config, const Dataset& train,
                  const Dataset& test);
RunResult run_ldp(const FederationConfig& config, const Dataset& train,
                  const Dataset& test);

RunResult run_algorithm(Algorithm algorithm, const FederationConfig& config,
                        const Dataset& train, const Dataset& test);

// Stable schema: round,client_ids,enc_ms,agg_ms,dec_ms,test_acc,eps_spent,
// delta_spent. client_ids joined with ';'.
std::string metrics_csv(const std::vector<RoundRecord>& records);

}  // namespace fedperm
