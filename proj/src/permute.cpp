#include "fedperm/permute.hpp"

#include <algorithm>
#include <numeric>

namespace fedperm {

void ShuffleSpec::validate() const {
  if (dim == 0 || window == 0 || pattern_count == 0) {
    throw ParameterError("shuffle spec: all sizes must be positive");
  }
  if (dim % (window * pattern_count) != 0) {
    throw ParameterError(
        "shuffle spec: k1*k2 must divide d (caller pads beforehand)");
  }
  if (patterns.size() != pattern_count) {
    throw ParameterError("shuffle spec: pattern count mismatch");
  }
  for (const auto& pi : patterns) {
    if (pi.size() != window) {
      throw ParameterError("shuffle spec: pattern length != k1");
    }
    std::vector<bool> seen(window, false);
    for (std::uint32_t v : pi) {
      if (v < 1 || v > window || seen[v - 1]) {
        throw ParameterError("shuffle spec: pattern is not a permutation");
      }
      seen[v - 1] = true;
    }
  }
}

ShuffleSpec gen_spec(std::size_t d, std::size_t k1, std::size_t k2, Rng& rng) {
  ShuffleSpec spec;
  spec.dim = d;
  spec.window = k1;
  spec.pattern_count = k2;
  if (d == 0 || k1 == 0 || k2 == 0 || d % (k1 * k2) != 0) {
    throw ParameterError("gen_spec: k1*k2 must divide d");
  }
  spec.patterns.resize(k2);
  for (auto& pi : spec.patterns) {
    pi.resize(k1);
    std::iota(pi.begin(), pi.end(), 1u);
    rng.shuffle(pi);
  }
  spec.validate();
  return spec;
}

namespace detail {

void check_shuffle_args(std::size_t size, const ShuffleSpec& spec) {
  spec.validate();
  if (size != spec.dim) {
    throw ParameterError("shuffle: vector length does not match spec");
  }
}

}  // namespace detail

std::vector<std::uint8_t> permutation_matrix(
    const std::vector<std::uint32_t>& pi) {
  const std::size_t k1 = pi.size();
  std::vector<bool> seen(k1, false);
  for (std::uint32_t v : pi) {
    if (v < 1 || v > k1 || seen[v - 1]) {
      throw ParameterError("permutation_matrix: not a permutation");
    }
    seen[v - 1] = true;
  }
  std::vector<std::uint8_t> mat(k1 * k1, 0);
  for (std::size_t j = 0; j < k1; ++j) {
    mat[j * k1 + (pi[j] - 1)] = 1;
  }
  return mat;
}

}  // namespace fedperm
