#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "fedperm/errors.hpp"
#include "fedperm/fedcore.hpp"
#include "fedperm/parallel.hpp"
#include "fedperm/pir.hpp"
#include "fedperm/wire.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace fedperm;

namespace {

constexpr const char* kVersion = "fedperm 0.1.0";

int g_verbosity = 0;

void progress(const std::string& line) {
  if (g_verbosity > 0) std::cout << line << "\n";
}

double parse_extended(const json& v, const char* key) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf" || s == "+inf") {
      return std::numeric_limits<double>::infinity();
    }
    throw ConfigError(std::string(key) + ": expected number or \"inf\"");
  }
  if (!v.is_number()) {
    throw ConfigError(std::string(key) + ": expected number");
  }
  return v.get<double>();
}

struct RunConfig {
  Algorithm algorithm = Algorithm::fedavg;
  FederationConfig fed;
  std::string dataset = "bundled";
  fs::path train_images, train_labels;
  fs::path test_images, test_labels;  // optional separate test files
  fs::path output_dir = "out";
  std::size_t test_split_every = 5;
  json raw;
};

Algorithm parse_algorithm(const std::string& name) {
  if (name == "fedperm") return Algorithm::fedperm;
  if (name == "fedavg") return Algorithm::fedavg;
  if (name == "cdp") return Algorithm::cdp;
  if (name == "ldp") return Algorithm::ldp;
  throw ConfigError("unknown algorithm: " + name);
}

ClipMode parse_clip_mode(const std::string& name) {
  if (name == "none") return ClipMode::none;
  if (name == "element") return ClipMode::element;
  if (name == "l2_delta") return ClipMode::l2_delta;
  if (name == "l2_batch") return ClipMode::l2_batch;
  throw ConfigError("unknown clip_mode: " + name);
}

json load_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error: " + std::string(e.what()));
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  return doc;
}

RunConfig load_run_config(const fs::path& path) {
  const json doc = load_json(path);
  RunConfig cfg;
  cfg.raw = doc;

  const std::set<std::string> known = {
      "algorithm",     "dataset",        "train_images",
      "train_labels",  "test_images",    "test_labels",
      "output_dir",    "test_split_every",
      "total_clients", "clients_per_round", "rounds",
      "local_epochs",  "learning_rate",  "batch_size",
      "clip",          "norm_bound",     "k1",
      "k2",            "eps_d",          "eps_total",
      "delta_total",   "amplification_constant", "frac_bits",
      "key_bits",      "he_mode",        "seed",
      "dirichlet_alpha", "attackers",    "attacker_scale",
      "clip_mode",     "cdp_noise_multiplier", "cdp_sample_fraction"};
  for (const auto& [key, value] : doc.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key: " + key);
  }

  auto get = [&](const char* key) -> std::optional<json> {
    auto it = doc.find(key);
    if (it == doc.end()) return std::nullopt;
    return *it;
  };

  if (auto v = get("algorithm")) cfg.algorithm = parse_algorithm(*v);
  if (auto v = get("dataset")) cfg.dataset = v->get<std::string>();
  if (auto v = get("train_images")) cfg.train_images = v->get<std::string>();
  if (auto v = get("train_labels")) cfg.train_labels = v->get<std::string>();
  if (auto v = get("test_images")) cfg.test_images = v->get<std::string>();
  if (auto v = get("test_labels")) cfg.test_labels = v->get<std::string>();
  if (auto v = get("output_dir")) cfg.output_dir = v->get<std::string>();
  if (auto v = get("test_split_every")) {
    cfg.test_split_every = v->get<std::size_t>();
  }

  FederationConfig& f = cfg.fed;
  if (auto v = get("total_clients")) f.total_clients = v->get<std::size_t>();
  if (auto v = get("clients_per_round")) {
    f.clients_per_round = v->get<std::size_t>();
  }
  if (auto v = get("rounds")) f.rounds = v->get<std::uint64_t>();
  if (auto v = get("local_epochs")) f.local_epochs = v->get<unsigned>();
  if (auto v = get("learning_rate")) f.learning_rate = v->get<double>();
  if (auto v = get("batch_size")) f.batch_size = v->get<std::size_t>();
  if (auto v = get("clip")) f.clip_c = v->get<double>();
  if (auto v = get("norm_bound")) {
    f.norm_bound_m = parse_extended(*v, "norm_bound");
  }
  if (auto v = get("k1")) f.window = v->get<std::size_t>();
  if (auto v = get("k2")) f.pattern_count = v->get<std::size_t>();
  if (auto v = get("eps_d")) f.eps_d = parse_extended(*v, "eps_d");
  if (auto v = get("eps_total")) f.eps_total = v->get<double>();
  if (auto v = get("delta_total")) f.delta_total = v->get<double>();
  if (auto v = get("amplification_constant")) {
    f.amplification_constant = v->get<double>();
  }
  if (auto v = get("frac_bits")) f.frac_bits = v->get<unsigned>();
  if (auto v = get("key_bits")) f.key_bits = v->get<unsigned>();
  if (auto v = get("he_mode")) {
    const std::string mode = v->get<std::string>();
    if (mode == "paillier") {
      f.he_mode = HeMode::paillier;
    } else if (mode == "mock") {
      f.he_mode = HeMode::mock;
    } else {
      throw ConfigError("unknown he_mode: " + mode);
    }
  }
  if (auto v = get("seed")) f.seed = v->get<std::uint64_t>();
  if (auto v = get("dirichlet_alpha")) {
    f.dirichlet_alpha = v->get<double>();
  }
  if (auto v = get("attackers")) f.attacker_count = v->get<std::size_t>();
  if (auto v = get("attacker_scale")) f.attacker_scale = v->get<double>();
  if (auto v = get("clip_mode")) cfg.fed.fedavg_clip = parse_clip_mode(*v);
  if (auto v = get("cdp_noise_multiplier")) {
    f.cdp_noise_multiplier = v->get<double>();
  }
  if (auto v = get("cdp_sample_fraction")) {
    f.cdp_sample_fraction = v->get<double>();
  }

  if (cfg.dataset == "bundled") {
    // The bundled digits set lives next to the binary install or the source
    // tree; resolved later.
  } else if (cfg.dataset == "idx") {
    for (const auto& p : {cfg.train_images, cfg.train_labels}) {
      if (!fs::exists(p)) {
        throw ConfigError("dataset file does not exist: " + p.string());
      }
    }
    if (cfg.test_images.empty() != cfg.test_labels.empty()) {
      throw ConfigError("test_images and test_labels go together");
    }
    if (!cfg.test_images.empty()) {
      for (const auto& p : {cfg.test_images, cfg.test_labels}) {
        if (!fs::exists(p)) {
          throw ConfigError("dataset file does not exist: " + p.string());
        }
      }
    }
  } else {
    // A direct path to a digits-format CSV.
    if (!fs::exists(cfg.dataset)) {
      throw ConfigError("dataset does not exist: " + cfg.dataset);
    }
  }
  return cfg;
}

fs::path bundled_digits_path(const char* argv0) {
  if (const char* env = std::getenv("FEDPERM_DATA_DIR")) {
    return fs::path(env) / "digits.csv";
  }
  // Relative to the binary: ../../data/digits.csv covers the build tree.
  fs::path exe = fs::absolute(fs::path(argv0));
  for (fs::path dir = exe.parent_path(); !dir.empty();
       dir = dir.parent_path()) {
    const fs::path candidate = dir / "data" / "digits.csv";
    if (fs::exists(candidate)) return candidate;
    if (dir == dir.parent_path()) break;
  }
  return fs::path("data/digits.csv");
}

std::pair<Dataset, Dataset> load_train_test(const RunConfig& cfg,
                                             const char* argv0) {
  if (cfg.dataset == "idx") {
    Dataset train = load_idx(cfg.train_images, cfg.train_labels);
    if (!cfg.test_images.empty()) {
      return {std::move(train), load_idx(cfg.test_images, cfg.test_labels)};
    }
    return split_train_test(train, cfg.test_split_every);
  }
  const fs::path path = cfg.dataset == "bundled"
                            ? bundled_digits_path(argv0)
                            : fs::path(cfg.dataset);
  if (!fs::exists(path)) {
    throw ConfigError("dataset does not exist: " + path.string());
  }
  return split_train_test(load_digits_csv(path), cfg.test_split_every);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write: " + path.string());
  out << text;
}

json manifest_json(const RunConfig& cfg, unsigned threads) {
  json manifest;
  manifest["version"] = kVersion;
  manifest["seed"] = cfg.fed.seed;
  manifest["threads"] = threads;
  if (cfg.algorithm == Algorithm::cdp) {
    manifest["accountant"] = "strong composition";
  }
  manifest["config"] = cfg.raw;
  return manifest;
}

int cmd_train(const fs::path& config_path, unsigned threads,
              const char* argv0) {
  RunConfig cfg = load_run_config(config_path);
  cfg.fed.threads = threads;
  auto [train, test] = load_train_test(cfg, argv0);
  progress("training " + std::to_string(cfg.fed.rounds) + " rounds on " +
           std::to_string(train.size()) + " examples");
  const RunResult result = run_algorithm(cfg.algorithm, cfg.fed, train, test);

  fs::create_directories(cfg.output_dir);
  write_text(cfg.output_dir / "metrics.csv", metrics_csv(result.records));
  write_text(cfg.output_dir / "manifest.json",
             manifest_json(cfg, threads).dump(2) + "\n");
  if (!result.records.empty()) {
    progress("final accuracy " +
             std::to_string(result.records.back().test_acc));
  }
  return 0;
}

int cmd_keygen(unsigned bits, std::uint64_t seed, const fs::path& out_dir) {
  Rng rng(seed);
  const PaillierKeypair kp = keygen(bits, rng);
  fs::create_directories(out_dir);
  save_public_key(kp.pk, out_dir / "paillier.pub");
  save_secret_key(kp, out_dir / "paillier.key");
  progress("wrote keypair with modulus of " +
           std::to_string(mpz_sizeinbase(kp.pk.n().get_mpz_t(), 2)) +
           " bits");
  return 0;
}

int cmd_amplify(const fs::path& grid_path, const fs::path& out_path) {
  const json doc = load_json(grid_path);
  const std::set<std::string> known = {"k1",      "k2",          "d",
                                       "eps_d",   "delta_l",     "rounds",
                                       "delta_prime", "constant"};
  for (const auto& [key, value] : doc.items()) {
    if (!known.count(key)) throw ConfigError("unknown grid key: " + key);
  }
  auto list = [&](const char* key,
                  std::vector<double> fallback) -> std::vector<double> {
    auto it = doc.find(key);
    if (it == doc.end()) return fallback;
    if (!it->is_array()) throw ConfigError(std::string(key) + ": array");
    return it->get<std::vector<double>>();
  };
  const auto k1s = list("k1", {100, 200, 400, 800});
  const auto k2s = list("k2", {1});
  const auto ds = list("d", {7850});
  const auto eps_ds = list("eps_d", {1.0});
  const auto delta_ls = list("delta_l", {1e-7});
  const std::uint64_t rounds =
      doc.contains("rounds") ? doc["rounds"].get<std::uint64_t>() : 1;
  const double delta_prime = doc.contains("delta_prime")
                                 ? doc["delta_prime"].get<double>()
                                 : 1e-6;
  const double constant =
      doc.contains("constant") ? doc["constant"].get<double>() : 1.0;

  std::ostringstream csv;
  csv << "k1,k2,d,eps_d,eps_w,eps_round,eps_total_T,delta_total,status\n";
  for (double d : ds) {
    for (double k1 : k1s) {
      for (double k2 : k2s) {
        for (double eps_d : eps_ds) {
          for (double delta_l : delta_ls) {
            const double eps_w = eps_d / (k1 * k2);
            csv << k1 << ',' << k2 << ',' << d << ',' << eps_d << ','
                << eps_w << ',';
            try {
              const double eps_l = amplify_for_geometry(
                  eps_w, delta_l, static_cast<std::size_t>(k1),
                  static_cast<std::size_t>(k2), constant);
              const auto total =
                  compose_strong(eps_l, delta_l, rounds, delta_prime);
              csv << eps_l << ',' << total.eps << ',' << total.delta
                  << ",ok\n";
            } catch (const DomainError&) {
              // Out-of-regime rows are flagged, not dropped.
              csv << ",,," << "invalid\n";
            }
          }
        }
      }
    }
  }
  write_text(out_path, csv.str());
  return 0;
}

int cmd_bench(const fs::path& config_path, const fs::path& out_path,
              unsigned threads) {
  const json doc = load_json(config_path);
  const std::set<std::string> known = {"k1", "k2", "d", "n", "key_bits",
                                       "frac_bits", "seed"};
  for (const auto& [key, value] : doc.items()) {
    if (!known.count(key)) throw ConfigError("unknown bench key: " + key);
  }
  auto list = [&](const char* key,
                  std::vector<std::size_t> fallback) {
    auto it = doc.find(key);
    if (it == doc.end()) return fallback;
    return it->get<std::vector<std::size_t>>();
  };
  const auto k1s = list("k1", {5, 10});
  const auto k2s = list("k2", {1, 2});
  const auto ds = list("d", {100});
  const auto ns = list("n", {3});
  const unsigned key_bits =
      doc.contains("key_bits") ? doc["key_bits"].get<unsigned>() : 512;
  const unsigned frac_bits =
      doc.contains("frac_bits") ? doc["frac_bits"].get<unsigned>() : 32;
  const std::uint64_t seed =
      doc.contains("seed") ? doc["seed"].get<std::uint64_t>() : 1;

  Rng master(seed);
  Rng key_rng = master.fork(1);
  const PaillierKeypair kp = keygen(key_bits, key_rng);

  std::ostringstream csv;
  csv << "k1,k2,d,n,enc_count,dec_count,enc_ms,agg_ms,dec_ms,"
         "upload_bytes\n";
  using clock = std::chrono::steady_clock;
  using msd = std::chrono::duration<double, std::milli>;
  std::size_t row = 0;
  for (std::size_t d : ds) {
    for (std::size_t k1 : k1s) {
      for (std::size_t k2 : k2s) {
        if (d % (k1 * k2) != 0) {
          throw ConfigError("bench: k1*k2 must divide d");
        }
        for (std::size_t n : ns) {
          const FixedPointCodec codec(frac_bits, 1048576.0, n);
          codec.validate_for_modulus(kp.pk.n());
          Rng rng = master.fork(100 + row++);

          std::vector<PirQuery> queries;
          std::vector<std::vector<mpz_class>> shuffled(n);
          std::size_t enc_count = 0, upload_bytes = 0;
          double enc_ms = 0;
          for (std::size_t u = 0; u < n; ++u) {
            std::vector<double> y(d);
            for (auto& v : y) v = rng.uniform();
            const auto spec = gen_spec(d, k1, k2, rng);
            const auto shuf = shuffle(y, spec);
            ClientUpdateMsg msg;
            for (double v : shuf) {
              const mpz_class enc = codec.encode(v);
              shuffled[u].push_back(enc);
              msg.shuffled.push_back(enc.get_ui());
            }
            const auto t0 = clock::now();
            queries.push_back(build_query(kp.pk, spec, rng));
            enc_ms += msd(clock::now() - t0).count();
            // Per-client encryption count; identical for every client.
            enc_count = queries.back().ciphertext_count();
            msg.query = queries.back();
            upload_bytes += serialized_update_size(msg);
          }

          const auto t1 = clock::now();
          const auto agg = unshuffle_aggregate(kp.pk, queries, shuffled, k1,
                                               k2, threads);
          const double agg_ms = msd(clock::now() - t1).count();

          const auto t2 = clock::now();
          const auto z = recover(kp.sk, agg, codec, 1.0);
          const double dec_ms = msd(clock::now() - t2).count();
          const std::size_t dec_count = z.size();

          csv << k1 << ',' << k2 << ',' << d << ',' << n << ',' << enc_count
              << ',' << dec_count << ',' << enc_ms << ',' << agg_ms << ','
              << dec_ms << ',' << upload_bytes << "\n";
          progress("bench k1=" + std::to_string(k1) + " k2=" +
                   std::to_string(k2) + " d=" + std::to_string(d) + " n=" +
                   std::to_string(n));
        }
      }
    }
  }
  write_text(out_path, csv.str());
  return 0;
}

unsigned resolve_threads(int cli_threads) {
  if (cli_threads > 0) return static_cast<unsigned>(cli_threads);
  if (const char* env = std::getenv("FEDPERM_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return default_thread_count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FedPerm federated-learning simulator"};
  app.fallthrough();  // global flags may follow the subcommand
  app.set_version_flag("--version", kVersion);
  app.add_flag("-v,--verbose", g_verbosity, "print progress lines");
  int threads = 0;
  app.add_option("--threads", threads,
                 "worker threads (default: FEDPERM_THREADS or all cores)");

  std::string train_config, bench_config, grid_config;
  std::string bench_out = "bench.csv", amplify_out = "amplify.csv";
  auto* train = app.add_subcommand("train", "run a federated experiment");
  train->add_option("--config", train_config, "run config JSON")->required();

  auto* bench = app.add_subcommand("bench", "time HE phases over a grid");
  bench->add_option("--config", bench_config, "bench grid JSON")->required();
  bench->add_option("--out", bench_out, "output CSV path");

  auto* amplify =
      app.add_subcommand("amplify", "privacy amplification calculator");
  amplify->add_option("--grid", grid_config, "grid JSON")->required();
  amplify->add_option("--out", amplify_out, "output CSV path");

  unsigned bits = 2048;
  std::uint64_t seed = 1;
  std::string out_dir = "keys";
  auto* kg = app.add_subcommand("keygen", "generate a Paillier keypair");
  kg->add_option("--bits", bits, "modulus size (default 2048)");
  kg->add_option("--seed", seed, "rng seed");
  kg->add_option("--out", out_dir, "output directory");

  app.require_subcommand(1);
  CLI11_PARSE(app, argc, argv);

  try {
    const unsigned nthreads = resolve_threads(threads);
    if (train->parsed()) return cmd_train(train_config, nthreads, argv[0]);
    if (bench->parsed()) return cmd_bench(bench_config, bench_out, nthreads);
    if (amplify->parsed()) return cmd_amplify(grid_config, amplify_out);
    if (kg->parsed()) return cmd_keygen(bits, seed, out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ParameterError& e) {
    std::cerr << "parameter error: " << e.what() << "\n";
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "domain error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
