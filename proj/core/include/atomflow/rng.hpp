#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace atomflow {

/// Explicit random stream. Streams are derived from a seed plus integer keys so
/// that results do not depend on evaluation order or thread scheduling.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) : engine_(seed) {}

  /// Stream keyed by (seed, keys...), e.g. (seed, system index, copy index).
  static RngStream derive(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

  /// Uniform on [0, 1).
  double uniform() { return uniform_(engine_); }
  /// Uniform on the open interval (0, 1).
  double uniform_open();
  double normal() { return normal_(engine_); }
  /// Index drawn from unnormalized nonnegative weights.
  template <typename Range>
  int categorical(const Range& weights);

  std::uint64_t next_u64() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

template <typename Range>
int RngStream::categorical(const Range& weights) {
  double total = 0.0;
  int count = 0;
  for (double w : weights) {
    total += w;
    ++count;
  }
  const double u = uniform() * total;
  double acc = 0.0;
  int last_positive = 0;
  int i = 0;
  for (double w : weights) {
    if (w > 0.0) last_positive = i;
    acc += w;
    if (u < acc) return i;
    ++i;
  }
  // u landed on the upper edge through rounding; pick the last type with mass.
  return count > 0 ? last_positive : 0;
}

}  // namespace atomflow
