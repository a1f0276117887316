#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const char* kCli = FEDPERM_CLI_PATH;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("fedperm_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int counter() {
    static int c = 0;
    return c++;
  }
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(kCli) + " " + args + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("train writes one metrics row per round plus a manifest") {
  TempDir tmp;
  const auto config = tmp.path / "run.json";
  write_file(config,
             "{\"algorithm\": \"fedavg\", \"dataset\": \"" FEDPERM_DATA_DIR
             "/digits.csv\", \"total_clients\": 5, \"clients_per_round\": 5, "
             "\"rounds\": 3, \"seed\": 1, \"output_dir\": \"" +
                 (tmp.path / "out").string() + "\"}");
  CHECK(run_cli("train --config " + config.string()) == 0);

  const auto metrics = read_file(tmp.path / "out" / "metrics.csv");
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 4);  // header + 3
  const auto manifest = read_file(tmp.path / "out" / "manifest.json");
  CHECK(manifest.find("\"seed\": 1") != std::string::npos);
  CHECK(manifest.find("fedperm 0.1.0") != std::string::npos);
}

TEST_CASE("same seed produces byte-identical metrics") {
  TempDir tmp;
  for (const char* dir : {"a", "b"}) {
    const auto config = tmp.path / (std::string("run_") + dir + ".json");
    write_file(config,
               "{\"algorithm\": \"fedperm\", \"he_mode\": \"mock\", "
               "\"eps_d\": 25.0, \"k1\": 5, \"k2\": 1, "
               "\"dataset\": \"" FEDPERM_DATA_DIR "/digits.csv\", "
               "\"total_clients\": 5, \"clients_per_round\": 5, "
               "\"rounds\": 2, \"seed\": 9, \"output_dir\": \"" +
                   (tmp.path / dir).string() + "\"}");
    CHECK(run_cli("train --config " + config.string()) == 0);
  }
  CHECK(read_file(tmp.path / "a" / "metrics.csv") ==
        read_file(tmp.path / "b" / "metrics.csv"));
}

TEST_CASE("noiseless fedperm and plain fedavg reach matching accuracy") {
  TempDir tmp;
  auto config_for = [&](const std::string& algo, const std::string& dir) {
    const auto path = tmp.path / (algo + ".json");
    write_file(path,
               "{\"algorithm\": \"" + algo +
                   "\", \"he_mode\": \"mock\", \"k1\": 5, \"k2\": 2, "
                   "\"dataset\": \"" FEDPERM_DATA_DIR "/digits.csv\", "
                   "\"total_clients\": 15, \"clients_per_round\": 15, "
                   "\"rounds\": 5, \"seed\": 3, \"output_dir\": \"" +
                   (tmp.path / dir).string() + "\"}");
    return path;
  };
  CHECK(run_cli("train --config " +
                config_for("fedperm", "perm").string()) == 0);
  CHECK(run_cli("train --config " +
                config_for("fedavg", "avg").string()) == 0);

  auto final_acc = [&](const std::string& dir) {
    const auto csv = read_file(tmp.path / dir / "metrics.csv");
    const auto last = csv.find_last_of('\n', csv.size() - 2);
    std::istringstream row(csv.substr(last + 1));
    std::string cell;
    for (int i = 0; i < 6; ++i) std::getline(row, cell, ',');
    return std::stod(cell);
  };
  CHECK(std::fabs(final_acc("perm") - final_acc("avg")) <= 0.005);
}

TEST_CASE("missing dataset path exits with code 2") {
  TempDir tmp;
  const auto config = tmp.path / "run.json";
  write_file(config,
             "{\"algorithm\": \"fedavg\", \"dataset\": \"/nonexistent/x.csv\","
             " \"rounds\": 1}");
  CHECK(run_cli("train --config " + config.string()) == 2);
}

TEST_CASE("unknown config keys exit with code 2") {
  TempDir tmp;
  const auto config = tmp.path / "run.json";
  write_file(config, "{\"algrothim\": \"fedavg\"}");
  CHECK(run_cli("train --config " + config.string()) == 2);
}

TEST_CASE("keygen is deterministic and rejects small keys") {
  TempDir tmp;
  CHECK(run_cli("keygen --bits 128 --seed 1 --out " +
                (tmp.path / "bad").string()) == 2);

  CHECK(run_cli("keygen --bits 512 --seed 7 --out " +
                (tmp.path / "k1").string()) == 0);
  CHECK(run_cli("keygen --bits 512 --seed 7 --out " +
                (tmp.path / "k2").string()) == 0);
  CHECK(read_file(tmp.path / "k1" / "paillier.pub") ==
        read_file(tmp.path / "k2" / "paillier.pub"));
  CHECK(read_file(tmp.path / "k1" / "paillier.key") ==
        read_file(tmp.path / "k2" / "paillier.key"));
}

TEST_CASE("amplify sweeps a grid and flags invalid rows") {
  TempDir tmp;
  const auto grid = tmp.path / "grid.json";
  // k1=10 at delta_l=1e-7 has no valid regime; larger k1 values do.
  write_file(grid,
             "{\"k1\": [10, 100, 200, 400, 800], \"k2\": [1], "
             "\"d\": [7850], \"eps_d\": [4.0], \"delta_l\": [1e-7], "
             "\"rounds\": 50, \"delta_prime\": 5e-6}");
  const auto out = tmp.path / "amp.csv";
  CHECK(run_cli("amplify --grid " + grid.string() + " --out " +
                out.string()) == 0);
  const auto csv = read_file(out);
  CHECK(csv.rfind("k1,k2,d,eps_d,eps_w,eps_round,eps_total_T,delta_total,"
                  "status",
                  0) == 0);
  CHECK(csv.find("invalid") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);  // header + 5 rows

  // eps_round decreases as k1 grows at fixed eps_d.
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);  // header
  double prev = 1e18;
  int checked = 0;
  while (std::getline(lines, line)) {
    if (line.find("ok") == std::string::npos) continue;
    std::istringstream cells(line);
    std::string cell;
    for (int i = 0; i < 6; ++i) std::getline(cells, cell, ',');
    const double eps_round = std::stod(cell);
    CHECK(eps_round < prev);
    prev = eps_round;
    ++checked;
  }
  CHECK(checked == 4);
}

TEST_CASE("bench counts encryptions and decryptions per the cost model") {
  TempDir tmp;
  const auto config = tmp.path / "bench.json";
  write_file(config,
             "{\"k1\": [2, 3], \"k2\": [1, 2], \"d\": [12], \"n\": [2], "
             "\"key_bits\": 512, \"seed\": 3}");
  const auto out = tmp.path / "bench.csv";
  CHECK(run_cli("bench --config " + config.string() + " --out " +
                out.string()) == 0);
  const auto csv = read_file(out);
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  CHECK(line ==
        "k1,k2,d,n,enc_count,dec_count,enc_ms,agg_ms,dec_ms,upload_bytes");
  int rows = 0;
  while (std::getline(lines, line)) {
    std::istringstream cells(line);
    std::vector<std::string> cell(10);
    for (auto& c : cell) std::getline(cells, c, ',');
    const std::size_t k1 = std::stoul(cell[0]);
    const std::size_t k2 = std::stoul(cell[1]);
    const std::size_t d = std::stoul(cell[2]);
    const std::size_t n = std::stoul(cell[3]);
    (void)n;
    CHECK(std::stoul(cell[4]) == k2 * k1 * k1);
    CHECK(std::stoul(cell[5]) == d);
    ++rows;
  }
  CHECK(rows == 4);
}
