#include "fedperm/datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "fedperm/errors.hpp"

namespace fedperm {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::uint32_t read_u32_be(std::ifstream& in, std::size_t& offset,
                          const char* what) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (in.gcount() != 4) {
    throw FormatError(std::string("idx: truncated ") + what, offset);
  }
  offset += 4;
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

}  // namespace

LogRegModel::LogRegModel(std::size_t input_dim, std::size_t num_classes)
    : input_dim(input_dim),
      num_classes(num_classes),
      weights(input_dim * num_classes, 0.0),
      bias(num_classes, 0.0) {}

std::vector<double> LogRegModel::flatten() const {
  std::vector<double> out;
  out.reserve(param_count());
  out.insert(out.end(), weights.begin(), weights.end());
  out.insert(out.end(), bias.begin(), bias.end());
  return out;
}

LogRegModel LogRegModel::unflatten(const std::vector<double>& params,
                                   std::size_t input_dim,
                                   std::size_t num_classes) {
  LogRegModel m(input_dim, num_classes);
  if (params.size() != m.param_count()) {
    throw ParameterError("unflatten: parameter count mismatch");
  }
  std::copy(params.begin(), params.begin() + m.weights.size(),
            m.weights.begin());
  std::copy(params.begin() + m.weights.size(), params.end(), m.bias.begin());
  return m;
}

std::vector<double> LogRegModel::predict(const double* x) const {
  std::vector<double> logits(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    double z = bias[c];
    for (std::size_t i = 0; i < input_dim; ++i) {
      z += weights[i * num_classes + c] * x[i];
    }
    logits[c] = z;
  }
  const double zmax = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (auto& z : logits) {
    z = std::exp(z - zmax);
    sum += z;
  }
  for (auto& z : logits) z /= sum;
  return logits;
}

double LogRegModel::loss(const Dataset& data,
                         const std::vector<std::size_t>& idx) const {
  if (idx.empty()) throw DataError("loss: empty batch");
  double total = 0.0;
  for (std::size_t i : idx) {
    const auto p = predict(data.example(i));
    total += -std::log(std::max(p[data.labels[i]], 1e-300));
  }
  return total / static_cast<double>(idx.size());
}

std::vector<double> LogRegModel::gradient(
    const Dataset& data, const std::vector<std::size_t>& idx) const {
  if (idx.empty()) throw DataError("gradient: empty batch");
  std::vector<double> grad(param_count(), 0.0);
  double* gw = grad.data();
  double* gb = grad.data() + weights.size();
  for (std::size_t i : idx) {
    const double* x = data.example(i);
    auto p = predict(x);
    p[data.labels[i]] -= 1.0;
    for (std::size_t f = 0; f < input_dim; ++f) {
      const double xf = x[f];
      if (xf == 0.0) continue;
      double* row = gw + f * num_classes;
      for (std::size_t c = 0; c < num_classes; ++c) row[c] += xf * p[c];
    }
    for (std::size_t c = 0; c < num_classes; ++c) gb[c] += p[c];
  }
  const double inv = 1.0 / static_cast<double>(idx.size());
  for (auto& g : grad) g *= inv;
  return grad;
}

Dataset load_idx(const std::filesystem::path& images,
                 const std::filesystem::path& labels) {
  std::ifstream img(images, std::ios::binary);
  if (!img) throw DataError("idx: cannot open " + images.string());
  std::ifstream lbl(labels, std::ios::binary);
  if (!lbl) throw DataError("idx: cannot open " + labels.string());

  std::size_t img_off = 0, lbl_off = 0;
  const std::uint32_t img_magic = read_u32_be(img, img_off, "image magic");
  if (img_magic != kIdxImagesMagic) {
    throw FormatError("idx: bad image magic " + std::to_string(img_magic), 0);
  }
  const std::uint32_t count = read_u32_be(img, img_off, "image count");
  const std::uint32_t rows = read_u32_be(img, img_off, "row count");
  const std::uint32_t cols = read_u32_be(img, img_off, "column count");

  const std::uint32_t lbl_magic = read_u32_be(lbl, lbl_off, "label magic");
  if (lbl_magic != kIdxLabelsMagic) {
    throw FormatError("idx: bad label magic " + std::to_string(lbl_magic), 0);
  }
  const std::uint32_t lbl_count = read_u32_be(lbl, lbl_off, "label count");
  if (lbl_count != count) {
    throw FormatError("idx: image/label counts differ", lbl_off);
  }

  Dataset out;
  out.feature_dim = std::size_t(rows) * cols;
  out.num_classes = 10;
  out.features.resize(std::size_t(count) * out.feature_dim);
  out.labels.resize(count);

  std::vector<unsigned char> buf(out.feature_dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    img.read(reinterpret_cast<char*>(buf.data()), buf.size());
    if (static_cast<std::size_t>(img.gcount()) != buf.size()) {
      throw FormatError("idx: truncated image data", img_off);
    }
    img_off += buf.size();
    for (std::size_t j = 0; j < buf.size(); ++j) {
      out.features[i * out.feature_dim + j] = buf[j] / 255.0;
    }
    int c = lbl.get();
    if (c == EOF) throw FormatError("idx: truncated label data", lbl_off);
    ++lbl_off;
    if (c > 9) throw FormatError("idx: label out of range", lbl_off - 1);
    out.labels[i] = static_cast<std::uint32_t>(c);
  }
  return out;
}

Dataset load_digits_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("digits: cannot open " + path.string());
  Dataset out;
  out.feature_dim = 64;
  out.num_classes = 10;
  std::string line;
  std::size_t line_no = 0;
  const auto parse_int = [&](const std::string& cell) {
    try {
      return std::stoi(cell);
    } catch (const std::exception&) {
      throw FormatError("digits: non-numeric field at line " +
                            std::to_string(line_no),
                        0);
    }
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    if (!std::getline(ss, cell, ',')) {
      throw FormatError("digits: missing label at line " +
                            std::to_string(line_no),
                        0);
    }
    const int label = parse_int(cell);
    if (label < 0 || label > 9) {
      throw FormatError("digits: label out of range at line " +
                            std::to_string(line_no),
                        0);
    }
    out.labels.push_back(static_cast<std::uint32_t>(label));
    std::size_t fields = 0;
    while (std::getline(ss, cell, ',')) {
      const int v = parse_int(cell);
      if (v < 0 || v > 16) {
        throw FormatError("digits: pixel out of range at line " +
                              std::to_string(line_no),
                          0);
      }
      out.features.push_back(v / 16.0);
      ++fields;
    }
    if (fields != out.feature_dim) {
      throw FormatError("digits: expected 64 pixels at line " +
                            std::to_string(line_no),
                        0);
    }
  }
  if (out.labels.empty()) throw DataError("digits: empty dataset");
  return out;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& data,
                                             std::size_t test_every) {
  if (test_every < 2) throw ParameterError("split: test_every must be >= 2");
  Dataset train, test;
  train.feature_dim = test.feature_dim = data.feature_dim;
  train.num_classes = test.num_classes = data.num_classes;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Dataset& dst = (i % test_every == 0) ? test : train;
    dst.labels.push_back(data.labels[i]);
    dst.features.insert(dst.features.end(), data.example(i),
                        data.example(i) + data.feature_dim);
  }
  return {std::move(train), std::move(test)};
}

std::vector<DatasetShard> dirichlet_partition(const Dataset& data,
                                              std::size_t clients,
                                              double alpha, Rng& rng) {
  if (data.size() == 0) throw DataError("partition: empty dataset");
  if (clients == 0) throw ParameterError("partition: clients must be >= 1");
  if (!(alpha > 0.0)) throw ParameterError("partition: alpha must be > 0");

  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    by_class[data.labels[i]].push_back(i);
  }

  std::vector<std::vector<std::size_t>> assigned(clients);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.empty()) continue;
    rng.shuffle(members);
    const auto props = rng.dirichlet(alpha, clients);
    // Largest-remainder apportionment of the class count.
    const std::size_t total = members.size();
    std::vector<std::size_t> counts(clients);
    std::vector<std::pair<double, std::size_t>> remainders(clients);
    std::size_t used = 0;
    for (std::size_t u = 0; u < clients; ++u) {
      const double exact = props[u] * static_cast<double>(total);
      counts[u] = static_cast<std::size_t>(exact);
      remainders[u] = {exact - static_cast<double>(counts[u]), u};
      used += counts[u];
    }
    std::sort(remainders.begin(), remainders.end(), [](auto& a, auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (std::size_t i = 0; used < total; ++i, ++used) {
      ++counts[remainders[i % clients].second];
    }
    std::size_t cursor = 0;
    for (std::size_t u = 0; u < clients; ++u) {
      for (std::size_t i = 0; i < counts[u]; ++i) {
        assigned[u].push_back(members[cursor++]);
      }
    }
  }

  std::vector<DatasetShard> shards(clients);
  for (std::size_t u = 0; u < clients; ++u) {
    shards[u].owner = u;
    shards[u].data.feature_dim = data.feature_dim;
    shards[u].data.num_classes = data.num_classes;
    std::sort(assigned[u].begin(), assigned[u].end());
    for (std::size_t i : assigned[u]) {
      shards[u].data.labels.push_back(data.labels[i]);
      shards[u].data.features.insert(shards[u].data.features.end(),
                                     data.example(i),
                                     data.example(i) + data.feature_dim);
    }
  }
  return shards;
}

void local_sgd(LogRegModel& model, const Dataset& shard, double lr,
               unsigned epochs, std::size_t batch_size, Rng& rng) {
  if (shard.size() == 0) throw DataError("local_sgd: empty shard");
  if (batch_size == 0) throw ParameterError("local_sgd: batch_size >= 1");
  std::vector<std::size_t> order(shard.size());
  std::iota(order.begin(), order.end(), 0u);
  std::vector<std::size_t> batch;
  for (unsigned e = 0; e < epochs; ++e) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t stop = std::min(order.size(), start + batch_size);
      batch.assign(order.begin() + start, order.begin() + stop);
      const auto grad = model.gradient(shard, batch);
      for (std::size_t i = 0; i < model.weights.size(); ++i) {
        model.weights[i] -= lr * grad[i];
      }
      for (std::size_t c = 0; c < model.bias.size(); ++c) {
        model.bias[c] -= lr * grad[model.weights.size() + c];
      }
    }
  }
}

double evaluate(const LogRegModel& model, const Dataset& test) {
  if (test.size() == 0) throw DataError("evaluate: empty test set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto p = model.predict(test.example(i));
    const std::size_t argmax =
        std::max_element(p.begin(), p.end()) - p.begin();
    if (argmax == test.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace fedperm
