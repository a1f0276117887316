#pragma once

#include <cstdint>
#include <vector>

#include "fedperm/errors.hpp"
#include "fedperm/rng.hpp"

namespace fedperm {

// Intra-model shuffling geometry: the parameter vector of length dim is cut
// into dim/window contiguous windows; window k (1-based) is permuted with
// pattern ((k-1) mod pattern_count) + 1. Patterns are stored 1-indexed.
struct ShuffleSpec {
  std::size_t dim = 0;            // d
  std::size_t window = 0;         // k1
  std::size_t pattern_count = 0;  // k2
  std::vector<std::vector<std::uint32_t>> patterns;

  std::size_t window_count() const { return dim / window; }
  std::size_t superwindow_width() const {
    return dim / (window * pattern_count);
  }
  // 0-based pattern index for 0-based window index.
  std::size_t pattern_for_window(std::size_t k) const {
    return k % pattern_count;
  }

  void validate() const;
};

// k2 independent uniform permutations of [1, k1]; requires k1*k2 | d.
ShuffleSpec gen_spec(std::size_t d, std::size_t k1, std::size_t k2, Rng& rng);

namespace detail {

void check_shuffle_args(std::size_t size, const ShuffleSpec& spec);

template <typename T, typename Index>
std::vector<T> apply_windowed(const std::vector<T>& x, const ShuffleSpec& spec,
                              Index index) {
  check_shuffle_args(x.size(), spec);
  std::vector<T> out(x.size());
  const std::size_t k1 = spec.window;
  for (std::size_t k = 0; k < spec.window_count(); ++k) {
    const auto& pi = spec.patterns[spec.pattern_for_window(k)];
    const std::size_t base = k * k1;
    for (std::size_t j = 0; j < k1; ++j) {
      index(out, x, base, j, static_cast<std::size_t>(pi[j] - 1));
    }
  }
  return out;
}

}  // namespace detail

// Position j of each window receives the value from slot pi(j).
template <typename T>
std::vector<T> shuffle(const std::vector<T>& x, const ShuffleSpec& spec) {
  return detail::apply_windowed(
      x, spec,
      [](std::vector<T>& out, const std::vector<T>& in, std::size_t base,
         std::size_t j, std::size_t pj) { out[base + j] = in[base + pj]; });
}

// Exact inverse: unshuffle(shuffle(x, s), s) == x.
template <typename T>
std::vector<T> unshuffle(const std::vector<T>& y, const ShuffleSpec& spec) {
  return detail::apply_windowed(
      y, spec,
      [](std::vector<T>& out, const std::vector<T>& in, std::size_t base,
         std::size_t j, std::size_t pj) { out[base + pj] = in[base + j]; });
}

// Binary matrix B with row j the unit vector e_{pi(j)} (row-major, k1 x k1).
// B applied to a window shuffles it; B transposed applied to a shuffled
// window restores the original order.
std::vector<std::uint8_t> permutation_matrix(
    const std::vector<std::uint32_t>& pi);

}  // namespace fedperm
