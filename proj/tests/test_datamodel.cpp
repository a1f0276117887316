#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "fedperm/datamodel.hpp"
#include "fedperm/errors.hpp"

using namespace fedperm;
namespace fs = std::filesystem;

namespace {

const char* digits_path() { return FEDPERM_DATA_DIR "/digits.csv"; }

void write_u32_be(std::ofstream& out, std::uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char*>(buf), 4);
}

struct IdxFixture {
  fs::path dir, images, labels;

  IdxFixture(std::uint32_t magic_img, std::uint32_t magic_lbl,
             std::uint32_t n_img, std::uint32_t n_lbl) {
    dir = fs::temp_directory_path() / "fedperm_idx_test";
    fs::create_directories(dir);
    images = dir / "images.idx";
    labels = dir / "labels.idx";
    std::ofstream img(images, std::ios::binary);
    write_u32_be(img, magic_img);
    write_u32_be(img, n_img);
    write_u32_be(img, 2);
    write_u32_be(img, 2);
    for (std::uint32_t i = 0; i < n_img * 4; ++i) {
      img.put(static_cast<char>(i % 256));
    }
    std::ofstream lbl(labels, std::ios::binary);
    write_u32_be(lbl, magic_lbl);
    write_u32_be(lbl, n_lbl);
    for (std::uint32_t i = 0; i < n_lbl; ++i) {
      lbl.put(static_cast<char>(i % 10));
    }
  }
  ~IdxFixture() { fs::remove_all(dir); }
};

Dataset toy_dataset() {
  // Two well-separated 2d classes.
  Dataset d;
  d.feature_dim = 2;
  d.num_classes = 2;
  const std::vector<std::pair<std::vector<double>, std::uint32_t>> pts = {
      {{0.9, 0.1}, 0}, {{0.8, 0.2}, 0}, {{1.0, 0.0}, 0},
      {{0.1, 0.9}, 1}, {{0.2, 0.8}, 1}, {{0.0, 1.0}, 1}};
  for (const auto& [x, y] : pts) {
    d.features.insert(d.features.end(), x.begin(), x.end());
    d.labels.push_back(y);
  }
  return d;
}

}  // namespace

TEST_CASE("idx loader accepts the standard magics and scales pixels") {
  IdxFixture fx(0x803, 0x801, 3, 3);
  const auto data = load_idx(fx.images, fx.labels);
  CHECK(data.size() == 3);
  CHECK(data.feature_dim == 4);
  CHECK(data.labels[2] == 2);
  CHECK(data.features[1] == doctest::Approx(1.0 / 255.0));
}

TEST_CASE("idx loader rejects bad magics and count mismatches") {
  {
    IdxFixture fx(0x802, 0x801, 2, 2);
    CHECK_THROWS_AS(load_idx(fx.images, fx.labels), FormatError);
  }
  {
    IdxFixture fx(0x803, 0x805, 2, 2);
    CHECK_THROWS_AS(load_idx(fx.images, fx.labels), FormatError);
  }
  {
    IdxFixture fx(0x803, 0x801, 3, 2);
    CHECK_THROWS_AS(load_idx(fx.images, fx.labels), FormatError);
  }
}

TEST_CASE("idx loader reports the byte offset of truncation") {
  IdxFixture fx(0x803, 0x801, 3, 3);
  fs::resize_file(fx.images, 18);  // cut inside the first image
  try {
    load_idx(fx.images, fx.labels);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.byte_offset() == 16);  // header ends at byte 16
  }
}

TEST_CASE("bundled digits load with the documented shape") {
  const auto data = load_digits_csv(digits_path());
  CHECK(data.size() == 1797);
  CHECK(data.feature_dim == 64);
  CHECK(data.num_classes == 10);
  for (double v : data.features) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  const auto [train, test] = split_train_test(data, 5);
  CHECK(train.size() == 1437);
  CHECK(test.size() == 360);
}

TEST_CASE("model dimension formula") {
  CHECK(LogRegModel(784, 10).param_count() == 7850);
  CHECK(LogRegModel(64, 10).param_count() == 650);
}

TEST_CASE("flatten and unflatten round trip exactly") {
  Rng rng(3);
  LogRegModel m(5, 3);
  for (auto& w : m.weights) w = rng.uniform(-1, 1);
  for (auto& b : m.bias) b = rng.uniform(-1, 1);
  const auto flat = m.flatten();
  REQUIRE(flat.size() == m.param_count());
  const auto back = LogRegModel::unflatten(flat, 5, 3);
  CHECK(back.weights == m.weights);
  CHECK(back.bias == m.bias);
  CHECK_THROWS_AS(LogRegModel::unflatten(flat, 5, 4), ParameterError);
}

TEST_CASE("analytic gradient matches central finite differences") {
  const auto data = toy_dataset();
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0u);

  Rng rng(5);
  LogRegModel m(2, 2);
  for (auto& w : m.weights) w = rng.uniform(-0.5, 0.5);
  for (auto& b : m.bias) b = rng.uniform(-0.5, 0.5);

  const auto grad = m.gradient(data, all);
  auto params = m.flatten();
  const double h = 1e-6;
  double max_rel = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto plus = params, minus = params;
    plus[i] += h;
    minus[i] -= h;
    const double lp =
        LogRegModel::unflatten(plus, 2, 2).loss(data, all);
    const double lm =
        LogRegModel::unflatten(minus, 2, 2).loss(data, all);
    const double numeric = (lp - lm) / (2.0 * h);
    const double rel = std::fabs(numeric - grad[i]) /
                       std::max(1e-8, std::fabs(grad[i]));
    max_rel = std::max(max_rel, rel);
  }
  CHECK(max_rel < 1e-5);
}

TEST_CASE("sgd with zero learning rate leaves the model unchanged") {
  const auto data = toy_dataset();
  LogRegModel m(2, 2);
  const auto before = m.flatten();
  Rng rng(7);
  // lr must be positive in runs; drive the step count to zero instead by
  // checking lr ~ 0 equivalence directly through a tiny lr.
  local_sgd(m, data, 0.0, 1, 2, rng);
  CHECK(m.flatten() == before);
}

TEST_CASE("many steps on a single example drive its loss to zero") {
  Dataset single;
  single.feature_dim = 2;
  single.num_classes = 2;
  single.features = {0.9, 0.1};
  single.labels = {0};
  LogRegModel m(2, 2);
  Rng rng(9);
  local_sgd(m, single, 0.5, 200, 1, rng);
  CHECK(m.loss(single, {0}) < 0.01);
}

TEST_CASE("full-batch descent on a convex problem never increases loss") {
  const auto data = toy_dataset();
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0u);
  LogRegModel m(2, 2);
  Rng rng(11);
  double prev = m.loss(data, all);
  for (int step = 0; step < 50; ++step) {
    local_sgd(m, data, 0.05, 1, data.size(), rng);
    const double cur = m.loss(data, all);
    CHECK(cur <= prev + 1e-12);
    prev = cur;
  }
}

TEST_CASE("sgd is deterministic under a fixed seed") {
  const auto data = toy_dataset();
  LogRegModel a(2, 2), b(2, 2);
  Rng ra(13), rb(13);
  local_sgd(a, data, 0.1, 3, 2, ra);
  local_sgd(b, data, 0.1, 3, 2, rb);
  CHECK(a.flatten() == b.flatten());
}

TEST_CASE("random init predicts at chance on a balanced set") {
  const auto data = load_digits_csv(digits_path());
  const LogRegModel m(64, 10);  // zero weights: every class ties, argmax = 0
  const double acc = evaluate(m, data);
  CHECK(acc > 0.05);
  CHECK(acc < 0.15);
}

TEST_CASE("a memorizer scores perfectly when train equals test") {
  const auto data = toy_dataset();
  LogRegModel m(2, 2);
  Rng rng(15);
  local_sgd(m, data, 0.5, 300, 6, rng);
  CHECK(evaluate(m, data) == 1.0);
}

TEST_CASE("dirichlet partition is a true partition") {
  const auto data = load_digits_csv(digits_path());
  for (std::uint64_t seed : {1, 2, 3}) {
    Rng rng(seed);
    const auto shards = dirichlet_partition(data, 15, 1.0, rng);
    std::size_t total = 0;
    for (const auto& s : shards) total += s.data.size();
    CHECK(total == data.size());
  }
}

TEST_CASE("partition determinism and owner assignment") {
  const auto data = load_digits_csv(digits_path());
  Rng a(4), b(4);
  const auto s1 = dirichlet_partition(data, 10, 0.5, a);
  const auto s2 = dirichlet_partition(data, 10, 0.5, b);
  REQUIRE(s1.size() == s2.size());
  for (std::size_t u = 0; u < s1.size(); ++u) {
    CHECK(s1[u].owner == u);
    CHECK(s1[u].data.labels == s2[u].data.labels);
    CHECK(s1[u].data.features == s2[u].data.features);
  }
}

TEST_CASE("huge alpha gives near-uniform class proportions") {
  const auto data = load_digits_csv(digits_path());
  Rng rng(6);
  const std::size_t clients = 5;
  const auto shards = dirichlet_partition(data, clients, 1e6, rng);
  for (const auto& shard : shards) {
    const double expected = static_cast<double>(data.size()) / clients;
    CHECK(std::fabs(shard.data.size() - expected) / expected < 0.05);
  }
}

TEST_CASE("small alpha concentrates classes (pinned seed)") {
  const auto data = load_digits_csv(digits_path());
  Rng rng(42);
  const auto shards = dirichlet_partition(data, 15, 0.1, rng);
  bool concentrated = false;
  for (const auto& shard : shards) {
    if (shard.data.size() == 0) continue;
    std::size_t counts[10] = {};
    for (auto l : shard.data.labels) counts[l]++;
    for (auto c : counts) {
      if (2 * c > shard.data.size()) concentrated = true;
    }
  }
  CHECK(concentrated);
}

TEST_CASE("partition rejects bad arguments") {
  const auto data = toy_dataset();
  Rng rng(8);
  CHECK_THROWS_AS(dirichlet_partition(Dataset{}, 3, 1.0, rng), DataError);
  CHECK_THROWS_AS(dirichlet_partition(data, 3, 0.0, rng), ParameterError);
}
