#include "fedperm/fedcore.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fedperm/errors.hpp"
#include "fedperm/parallel.hpp"

namespace fedperm {

namespace {

enum SeedTag : std::uint64_t {
  kTagPartition = 1,
  kTagKeygen = 2,
  kTagSample = 3,
  kTagTrain = 4,
  kTagNoise = 5,
  kTagPattern = 6,
  kTagQuery = 7,
  kTagGauss = 8,
};

constexpr double kPadValue = 0.5;  // normalized encoding of a zero delta
constexpr double kCodecRange = 1048576.0;

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

Rng client_rng(const FederationConfig& config, std::uint64_t tag,
               std::uint64_t round, std::uint64_t client_id) {
  return Rng(config.seed).fork(tag).fork(round).fork(client_id);
}

std::vector<std::uint64_t> sample_clients(const FederationConfig& config,
                                          std::uint64_t round) {
  Rng rng = Rng(config.seed).fork(kTagSample).fork(round);
  std::vector<std::uint64_t> ids(config.total_clients);
  std::iota(ids.begin(), ids.end(), 0u);
  // Partial Fisher-Yates: the first n entries are a uniform sample without
  // replacement.
  for (std::size_t i = 0; i < config.clients_per_round; ++i) {
    const std::size_t j = i + rng.below(ids.size() - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(config.clients_per_round);
  std::sort(ids.begin(), ids.end());
  return ids;
}

FixedPointCodec make_codec(const FederationConfig& config) {
  return FixedPointCodec(config.frac_bits, kCodecRange,
                         config.clients_per_round);
}

// Local training shared by every algorithm so that noiseless trajectories are
// comparable coordinatewise. Returns the parameter delta theta - theta_g.
std::vector<double> local_delta(const std::vector<double>& global_params,
                                const Dataset& shard,
                                const FederationConfig& config, Rng rng) {
  LogRegModel model = LogRegModel::unflatten(
      global_params, shard.feature_dim, shard.num_classes);
  local_sgd(model, shard, config.learning_rate, config.local_epochs,
            config.batch_size, rng);
  std::vector<double> delta = model.flatten();
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] -= global_params[i];
  return delta;
}

// CDP-style local training: the cumulative delta is l2-projected onto the
// C-ball after every batch step.
std::vector<double> local_delta_projected(
    const std::vector<double>& global_params, const Dataset& shard,
    const FederationConfig& config, Rng rng) {
  LogRegModel model = LogRegModel::unflatten(
      global_params, shard.feature_dim, shard.num_classes);
  std::vector<std::size_t> order(shard.size());
  std::iota(order.begin(), order.end(), 0u);
  std::vector<std::size_t> batch;
  std::vector<double> params = global_params;
  for (unsigned e = 0; e < config.local_epochs; ++e) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t stop =
          std::min(order.size(), start + config.batch_size);
      batch.assign(order.begin() + start, order.begin() + stop);
      const auto grad = model.gradient(shard, batch);
      params = model.flatten();
      for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] -= config.learning_rate * grad[i];
      }
      std::vector<double> delta(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        delta[i] = params[i] - global_params[i];
      }
      delta = norm_bound(delta, config.clip_c);
      for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] = global_params[i] + delta[i];
      }
      model = LogRegModel::unflatten(params, shard.feature_dim,
                                     shard.num_classes);
    }
  }
  std::vector<double> delta = model.flatten();
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] -= global_params[i];
  return delta;
}

// Single arithmetic path for plaintext averaging so that noiseless
// baselines coincide bitwise regardless of which algorithm produced them.
void apply_mean_update(std::vector<double>& global,
                       const std::vector<std::vector<double>>& deltas) {
  const double inv = 1.0 / static_cast<double>(deltas.size());
  for (std::size_t j = 0; j < global.size(); ++j) {
    double sum = 0.0;
    for (const auto& delta : deltas) sum += delta[j];
    global[j] += sum * inv;
  }
}

double gaussian_sigma(double sensitivity, double eps, double delta) {
  return sensitivity * std::sqrt(2.0 * std::log(1.25 / delta)) / eps;
}

struct RunContext {
  std::vector<DatasetShard> shards;
  LogRegModel initial;
  std::vector<double> global;
  std::size_t true_dim = 0;
};

RunContext start_run(const FederationConfig& config, const Dataset& train) {
  config.validate();
  RunContext ctx;
  Rng master(config.seed);
  Rng part_rng = master.fork(kTagPartition);
  ctx.shards = dirichlet_partition(train, config.total_clients,
                                   config.dirichlet_alpha, part_rng);
  ctx.initial = LogRegModel(train.feature_dim, train.num_classes);
  ctx.global = ctx.initial.flatten();
  ctx.true_dim = ctx.initial.param_count();
  return ctx;
}

void record_round(RunResult& result, const FederationConfig& config,
                  std::uint64_t round, std::vector<std::uint64_t> ids,
                  const std::vector<double>& global, const Dataset& test,
                  double eps_spent, double delta_spent, double enc_ms,
                  double agg_ms, double dec_ms) {
  RoundRecord rec;
  rec.round = round;
  rec.client_ids = std::move(ids);
  rec.enc_ms = config.measure_times ? enc_ms : 0.0;
  rec.agg_ms = config.measure_times ? agg_ms : 0.0;
  rec.dec_ms = config.measure_times ? dec_ms : 0.0;
  const LogRegModel m = LogRegModel::unflatten(global, test.feature_dim,
                                               test.num_classes);
  rec.test_acc = evaluate(m, test);
  rec.eps_spent = eps_spent;
  rec.delta_spent = delta_spent;
  result.records.push_back(std::move(rec));
  result.trajectory.push_back(global);
}

std::string format_double(double v) {
  std::ostringstream os;
  if (std::isinf(v)) {
    os << (v > 0 ? "inf" : "-inf");
  } else {
    os.precision(17);
    os << v;
  }
  return os.str();
}

}  // namespace

void FederationConfig::validate() const {
  if (total_clients == 0 || clients_per_round == 0 ||
      clients_per_round > total_clients) {
    throw ParameterError("config: need 1 <= n <= N");
  }
  if (local_epochs == 0) throw ParameterError("config: E >= 1");
  if (!(learning_rate > 0.0)) throw ParameterError("config: eta > 0");
  if (batch_size == 0) throw ParameterError("config: batch_size >= 1");
  if (!(clip_c > 0.0)) throw ParameterError("config: clip C > 0");
  if (!(norm_bound_m > 0.0)) throw ParameterError("config: norm bound M > 0");
  if (window == 0 || pattern_count == 0) {
    throw ParameterError("config: k1, k2 >= 1");
  }
  if (attacker_count > total_clients) {
    throw ParameterError("config: more attackers than clients");
  }
  if (!(attacker_scale > 0.0)) throw ParameterError("config: lambda > 0");
}

std::size_t padded_dim(std::size_t true_dim, std::size_t k1, std::size_t k2) {
  const std::size_t block = k1 * k2;
  return (true_dim + block - 1) / block * block;
}

Rng training_rng(const FederationConfig& config, std::uint64_t round,
                 std::uint64_t client_id) {
  return client_rng(config, kTagTrain, round, client_id);
}

ResolvedBudget resolve_budget(const FederationConfig& config,
                              std::size_t true_dim, std::size_t padded) {
  ResolvedBudget out;
  out.delta_l = config.delta_total / (2.0 * static_cast<double>(
                                               std::max<std::uint64_t>(
                                                   1, config.rounds)));
  out.delta_prime = config.delta_total / 2.0;
  if (std::isfinite(config.eps_total)) {
    out.eps_d = calibrate(config.eps_total, config.delta_total,
                          std::max<std::uint64_t>(1, config.rounds), padded,
                          config.window, config.pattern_count,
                          config.amplification_constant);
  } else {
    out.eps_d = config.eps_d;
  }
  if (!std::isfinite(out.eps_d)) return out;  // noiseless
  out.noisy = true;
  try {
    out.derived = derive_budget(out.eps_d, true_dim, padded, config.window,
                               config.pattern_count, out.delta_l,
                               config.amplification_constant);
    out.amplified = true;
  } catch (const DomainError&) {
    out.amplified = false;  // account the raw LDP rounds naively
  }
  return out;
}

ClientUpdateMsg client_round(const std::vector<double>& global_params,
                             const Dataset& shard,
                             const FederationConfig& config,
                             const ResolvedBudget& budget,
                             const PublicKey* pk, const FixedPointCodec& codec,
                             std::uint64_t round, std::uint64_t client_id,
                             const ShuffleSpec* forced_spec) {
  if (shard.size() == 0) throw DataError("client_round: empty shard");
  const auto delta = local_delta(
      global_params, shard, config,
      client_rng(config, kTagTrain, round, client_id));

  auto normalized = clip_normalize(delta, config.clip_c);
  Rng noise_rng = client_rng(config, kTagNoise, round, client_id);
  auto noisy = laplace_randomize(normalized, budget.eps_d, normalized.size(),
                                 noise_rng);

  const std::size_t true_dim = noisy.size();
  const std::size_t target =
      padded_dim(true_dim, config.window, config.pattern_count);
  noisy.resize(target, kPadValue);

  ShuffleSpec spec;
  if (forced_spec != nullptr) {
    spec = *forced_spec;
  } else {
    Rng pattern_rng = client_rng(config, kTagPattern, round, client_id);
    spec = gen_spec(target, config.window, config.pattern_count, pattern_rng);
  }
  const auto shuffled_vals = shuffle(noisy, spec);

  ClientUpdateMsg msg;
  msg.client_id = client_id;
  msg.true_dim = true_dim;
  msg.shuffled.reserve(target);
  for (double v : shuffled_vals) {
    msg.shuffled.push_back(codec.encode(v).get_ui());
  }
  if (config.he_mode == HeMode::paillier) {
    if (pk == nullptr) throw UsageError("client_round: missing public key");
    Rng query_rng = client_rng(config, kTagQuery, round, client_id);
    msg.query = build_query(*pk, spec, query_rng);
  } else {
    msg.plain_spec = std::move(spec);
  }
  return msg;
}

ClientUpdateMsg attacker_client(ClientUpdateMsg msg, double scale,
                                const FixedPointCodec& codec) {
  if (!(scale > 0.0)) throw ParameterError("attacker: lambda > 0");
  for (auto& v : msg.shuffled) {
    const double real = codec.decode(mpz_class(static_cast<unsigned long>(v)));
    v = codec.encode(real * scale).get_ui();
  }
  return msg;
}

Aggregate server_round(const std::vector<ClientUpdateMsg>& msgs,
                       const FederationConfig& config, const PublicKey* pk,
                       const FixedPointCodec& codec) {
  if (msgs.empty()) throw ProtocolError("server_round: no updates");
  const std::size_t dim = msgs.front().shuffled.size();
  for (const auto& m : msgs) {
    if (m.shuffled.size() != dim) {
      throw ProtocolError("server_round: update dimension mismatch");
    }
  }

  // Norm bounding happens on the decoded real values; the shuffled order is
  // irrelevant to the l2 norm.
  std::vector<std::vector<mpz_class>> bounded(msgs.size());
  for (std::size_t u = 0; u < msgs.size(); ++u) {
    const auto& vals = msgs[u].shuffled;
    if (std::isinf(config.norm_bound_m)) {
      bounded[u].reserve(vals.size());
      for (std::uint64_t v : vals) {
        bounded[u].emplace_back(static_cast<unsigned long>(v));
      }
      continue;
    }
    std::vector<double> reals(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) {
      reals[i] = codec.decode(mpz_class(static_cast<unsigned long>(vals[i])));
    }
    reals = norm_bound(reals, config.norm_bound_m);
    bounded[u].reserve(reals.size());
    for (double r : reals) bounded[u].push_back(codec.encode(r));
  }

  if (config.he_mode == HeMode::paillier) {
    if (pk == nullptr) throw UsageError("server_round: missing public key");
    std::vector<PirQuery> queries;
    queries.reserve(msgs.size());
    for (const auto& m : msgs) {
      if (!m.query) throw ProtocolError("server_round: update lacks query");
      queries.push_back(*m.query);
    }
    return unshuffle_aggregate(*pk, queries, bounded, config.window,
                               config.pattern_count, config.threads);
  }

  PlainAggregate agg;
  agg.contributor_count = msgs.size();
  agg.slots.assign(dim, mpz_class(0));
  for (std::size_t u = 0; u < msgs.size(); ++u) {
    if (!msgs[u].plain_spec) {
      throw ProtocolError("server_round: mock update lacks spec");
    }
    const auto restored = unshuffle(bounded[u], *msgs[u].plain_spec);
    for (std::size_t i = 0; i < dim; ++i) agg.slots[i] += restored[i];
  }
  return agg;
}

std::vector<double> client_finalize(const Aggregate& agg, const SecretKey* sk,
                                    const FederationConfig& config,
                                    const FixedPointCodec& codec,
                                    const std::vector<double>& global_params,
                                    std::size_t true_dim) {
  std::vector<double> z;
  if (std::holds_alternative<EncryptedAggregate>(agg)) {
    if (sk == nullptr) throw UsageError("client_finalize: missing secret key");
    z = recover(*sk, std::get<EncryptedAggregate>(agg), codec, config.clip_c);
  } else {
    const auto& plain = std::get<PlainAggregate>(agg);
    z.reserve(plain.slots.size());
    for (const auto& slot : plain.slots) {
      const double avg = codec.decode(slot, plain.contributor_count);
      z.push_back(config.clip_c * (2.0 * avg - 1.0));
    }
  }
  if (z.size() < true_dim || global_params.size() != true_dim) {
    throw ProtocolError("client_finalize: dimension mismatch");
  }
  std::vector<double> next = global_params;
  for (std::size_t i = 0; i < true_dim; ++i) next[i] += z[i];
  return next;
}

RunResult run_fedperm(const FederationConfig& config, const Dataset& train,
                      const Dataset& test) {
  RunContext ctx = start_run(config, train);
  RunResult result;
  result.final_model = ctx.global;
  if (config.rounds == 0) return result;

  const std::size_t target =
      padded_dim(ctx.true_dim, config.window, config.pattern_count);
  const ResolvedBudget budget =
      resolve_budget(config, ctx.true_dim, target);
  const FixedPointCodec codec = make_codec(config);

  PaillierKeypair keys;
  const PublicKey* pk = nullptr;
  const SecretKey* sk = nullptr;
  if (config.he_mode == HeMode::paillier) {
    Rng key_rng = Rng(config.seed).fork(kTagKeygen);
    keys = keygen(config.key_bits, key_rng);
    codec.validate_for_modulus(keys.pk.n());
    pk = &keys.pk;
    sk = &keys.sk;
  }

  for (std::uint64_t t = 1; t <= config.rounds; ++t) {
    const auto ids = sample_clients(config, t);
    std::vector<ClientUpdateMsg> msgs(ids.size());
    const double enc_start = now_ms();
    parallel_for(0, ids.size(), config.threads, [&](std::size_t i) {
      msgs[i] = client_round(ctx.global, ctx.shards[ids[i]].data, config,
                             budget, pk, codec, t, ids[i]);
      if (ids[i] < config.attacker_count) {
        msgs[i] = attacker_client(std::move(msgs[i]), config.attacker_scale,
                                  codec);
      }
    });
    const double enc_ms = now_ms() - enc_start;

    const double agg_start = now_ms();
    const Aggregate agg = server_round(msgs, config, pk, codec);
    const double agg_ms = now_ms() - agg_start;

    const double dec_start = now_ms();
    ctx.global = client_finalize(agg, sk, config, codec, ctx.global,
                                 ctx.true_dim);
    const double dec_ms = now_ms() - dec_start;

    double eps_spent = std::numeric_limits<double>::infinity();
    double delta_spent = 0.0;
    if (budget.noisy && budget.amplified) {
      const auto spent = compose_strong(budget.derived.eps_l, budget.delta_l,
                                        t, budget.delta_prime);
      eps_spent = spent.eps;
      delta_spent = spent.delta;
    } else if (budget.noisy) {
      eps_spent = compose_naive(budget.eps_d, t);
    }
    record_round(result, config, t, ids, ctx.global, test, eps_spent,
                 delta_spent, enc_ms, agg_ms, dec_ms);
  }
  result.final_model = ctx.global;
  return result;
}

RunResult run_fedavg(const FederationConfig& config, const Dataset& train,
                     const Dataset& test) {
  RunContext ctx = start_run(config, train);
  RunResult result;
  result.final_model = ctx.global;

  for (std::uint64_t t = 1; t <= config.rounds; ++t) {
    const auto ids = sample_clients(config, t);
    std::vector<std::vector<double>> deltas(ids.size());
    parallel_for(0, ids.size(), config.threads, [&](std::size_t i) {
      Rng rng = client_rng(config, kTagTrain, t, ids[i]);
      if (config.fedavg_clip == ClipMode::l2_batch) {
        deltas[i] = local_delta_projected(ctx.global,
                                          ctx.shards[ids[i]].data, config,
                                          rng);
      } else {
        deltas[i] =
            local_delta(ctx.global, ctx.shards[ids[i]].data, config, rng);
        if (config.fedavg_clip == ClipMode::element) {
          for (auto& v : deltas[i]) {
            v = std::clamp(v, -config.clip_c, config.clip_c);
          }
        } else if (config.fedavg_clip == ClipMode::l2_delta) {
          deltas[i] = norm_bound(deltas[i], config.clip_c);
        }
      }
    });
    apply_mean_update(ctx.global, deltas);
    record_round(result, config, t, ids, ctx.global, test,
                 std::numeric_limits<double>::infinity(), 0.0, 0, 0, 0);
  }
  result.final_model = ctx.global;
  return result;
}

RunResult run_cdp(const FederationConfig& config, const Dataset& train,
                  const Dataset& test) {
  RunContext ctx = start_run(config, train);
  RunResult result;
  result.final_model = ctx.global;

  const double T = static_cast<double>(std::max<std::uint64_t>(
      1, config.rounds));
  const double delta_l = config.delta_total / (2.0 * T);
  const double delta_prime = config.delta_total / 2.0;
  const double q = config.cdp_sample_fraction > 0.0
                       ? config.cdp_sample_fraction
                       : static_cast<double>(config.clients_per_round) /
                             static_cast<double>(config.total_clients);
  const double z = config.cdp_noise_multiplier;
  const double sigma = z * config.clip_c / q;
  // Per-round budget of the Gaussian mechanism on the mean (sensitivity C/n)
  // under the strong-composition accountant substituted for the moments
  // accountant.
  const double sensitivity =
      config.clip_c / static_cast<double>(config.clients_per_round);
  const double eps_round =
      sigma > 0.0
          ? sensitivity * std::sqrt(2.0 * std::log(1.25 / delta_l)) / sigma
          : 0.0;
  const double budget_cap = std::isfinite(config.eps_total)
                               ? config.eps_total
                               : std::numeric_limits<double>::infinity();

  Rng gauss_master = Rng(config.seed).fork(kTagGauss);
  for (std::uint64_t t = 1; t <= config.rounds; ++t) {
    double eps_spent = 0.0, delta_spent = 0.0;
    if (eps_round > 0.0) {
      const auto spent = compose_strong(eps_round, delta_l, t, delta_prime);
      eps_spent = spent.eps;
      delta_spent = spent.delta;
      if (eps_spent > budget_cap) break;  // stop before exceeding the budget
    } else if (!std::isfinite(config.eps_total)) {
      eps_spent = std::numeric_limits<double>::infinity();
    }

    const auto ids = sample_clients(config, t);
    std::vector<std::vector<double>> deltas(ids.size());
    parallel_for(0, ids.size(), config.threads, [&](std::size_t i) {
      deltas[i] = local_delta_projected(
          ctx.global, ctx.shards[ids[i]].data, config,
          client_rng(config, kTagTrain, t, ids[i]));
    });
    Rng noise = gauss_master.fork(t);
    apply_mean_update(ctx.global, deltas);
    if (sigma > 0.0) {
      for (std::size_t j = 0; j < ctx.global.size(); ++j) {
        ctx.global[j] += noise.gaussian(sigma);
      }
    }
    record_round(result, config, t, ids, ctx.global, test, eps_spent,
                 delta_spent, 0, 0, 0);
  }
  result.final_model = ctx.global;
  return result;
}

RunResult run_ldp(const FederationConfig& config, const Dataset& train,
                  const Dataset& test) {
  RunContext ctx = start_run(config, train);
  RunResult result;
  result.final_model = ctx.global;

  const double T = static_cast<double>(std::max<std::uint64_t>(
      1, config.rounds));
  const double delta_l = config.delta_total / (2.0 * T);
  const double delta_prime = config.delta_total / 2.0;
  double eps_round;
  if (std::isfinite(config.eps_total)) {
    eps_round = invert_strong_composition(config.eps_total, config.rounds,
                                          delta_prime);
  } else {
    eps_round = config.eps_d;  // may be +inf (no noise)
  }
  // Within the l2 ball of radius C any two inputs are 2C apart.
  const double sigma =
      std::isinf(eps_round)
          ? 0.0
          : gaussian_sigma(2.0 * config.clip_c, eps_round, delta_l);

  for (std::uint64_t t = 1; t <= config.rounds; ++t) {
    const auto ids = sample_clients(config, t);
    std::vector<std::vector<double>> updates(ids.size());
    parallel_for(0, ids.size(), config.threads, [&](std::size_t i) {
      auto delta = local_delta(ctx.global, ctx.shards[ids[i]].data, config,
                               client_rng(config, kTagTrain, t, ids[i]));
      delta = norm_bound(delta, config.clip_c);
      if (sigma > 0.0) {
        Rng noise = client_rng(config, kTagGauss, t, ids[i]);
        for (auto& v : delta) v += noise.gaussian(sigma);
      }
      updates[i] = std::move(delta);
    });
    apply_mean_update(ctx.global, updates);
    double eps_spent = std::numeric_limits<double>::infinity();
    double delta_spent = 0.0;
    if (sigma > 0.0) {
      const auto spent = compose_strong(eps_round, delta_l, t, delta_prime);
      eps_spent = spent.eps;
      delta_spent = spent.delta;
    }
    record_round(result, config, t, ids, ctx.global, test, eps_spent,
                 delta_spent, 0, 0, 0);
  }
  result.final_model = ctx.global;
  return result;
}

RunResult run_algorithm(Algorithm algorithm, const FederationConfig& config,
                        const Dataset& train, const Dataset& test) {
  switch (algorithm) {
    case Algorithm::fedperm:
      return run_fedperm(config, train, test);
    case Algorithm::fedavg:
      return run_fedavg(config, train, test);
    case Algorithm::cdp:
      return run_cdp(config, train, test);
    case Algorithm::ldp:
      return run_ldp(config, train, test);
  }
  throw ParameterError("unknown algorithm");
}

std::string metrics_csv(const std::vector<RoundRecord>& records) {
  std::ostringstream os;
  os << "round,client_ids,enc_ms,agg_ms,dec_ms,test_acc,eps_spent,"
        "delta_spent\n";
  for (const auto& rec : records) {
    os << rec.round << ',';
    for (std::size_t i = 0; i < rec.client_ids.size(); ++i) {
      if (i > 0) os << ';';
      os << rec.client_ids[i];
    }
    os << ',' << format_double(rec.enc_ms) << ',' << format_double(rec.agg_ms)
       << ',' << format_double(rec.dec_ms) << ','
       << format_double(rec.test_acc) << ',' << format_double(rec.eps_spent)
       << ',' << format_double(rec.delta_spent) << '\n';
  }
  return os.str();
}

}  // namespace fedperm
