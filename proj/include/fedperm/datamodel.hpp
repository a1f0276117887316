#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "fedperm/rng.hpp"

namespace fedperm {

struct Dataset {
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;  // row-major, size() * feature_dim
  std::vector<std::uint32_t> labels;

  std::size_t size() const { return labels.size(); }
  const double* example(std::size_t i) const {
    return features.data() + i * feature_dim;
  }
};

struct DatasetShard {
  Dataset data;
  std::size_t owner = 0;
};

// Multinomial logistic regression; parameters flatten row-major weights
// followed by biases, d = input_dim * num_classes + num_classes.
struct LogRegModel {
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> weights;  // input_dim * num_classes
  std::vector<double> bias;     // num_classes

  LogRegModel() = default;
  LogRegModel(std::size_t input_dim, std::size_t num_classes);

  std::size_t param_count() const {
    return input_dim * num_classes + num_classes;
  }
  std::vector<double> flatten() const;
  static LogRegModel unflatten(const std::vector<double>& params,
                               std::size_t input_dim, std::size_t num_classes);

  // Class probabilities for one example.
  std::vector<double> predict(const double* x) const;

  // Mean cross-entropy over the given examples.
  double loss(const Dataset& data, const std::vector<std::size_t>& idx) const;

  // Flattened mean cross-entropy gradient over the given examples.
  std::vector<double> gradient(const Dataset& data,
                               const std::vector<std::size_t>& idx) const;
};

// Big-endian IDX files (magic 0x803 for images, 0x801 for labels); pixels
// scaled by 1/255.
Dataset load_idx(const std::filesystem::path& images,
                 const std::filesystem::path& labels);

// Bundled digits CSV: each line "label,p0,...,p63" with pixels in [0, 16],
// scaled by 1/16.
Dataset load_digits_csv(const std::filesystem::path& path);

// Deterministic split: every test_every-th example goes to the test set.
std::pair<Dataset, Dataset> split_train_test(const Dataset& data,
                                             std::size_t test_every = 5);

// Non-IID partition: per-class client proportions drawn from
// Dirichlet(alpha * 1_N); every example assigned exactly once.
std::vector<DatasetShard> dirichlet_partition(const Dataset& data,
                                              std::size_t clients,
                                              double alpha, Rng& rng);

// E epochs of seeded mini-batch SGD on cross-entropy loss.
void local_sgd(LogRegModel& model, const Dataset& shard, double lr,
               unsigned epochs, std::size_t batch_size, Rng& rng);

// Argmax prediction accuracy in [0, 1].
double evaluate(const LogRegModel& model, const Dataset& test);

}  // namespace fedperm
