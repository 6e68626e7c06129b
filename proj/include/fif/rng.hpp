#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include <Eigen/Dense>

namespace fif {

/// Keyed random stream.
///
/// Every stream is identified by a base seed plus a short path of integer
/// keys (for example {epoch, batch, element}). Streams with different paths
/// are statistically independent, and any stream can be recreated from its
/// path alone, so resuming a run needs no serialized generator state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : Rng(seed, {}) {}
  Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

  /// Child stream; the parent is unaffected.
  Rng split(std::initializer_list<std::uint64_t> path) const;

  std::uint64_t key() const { return key_; }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double rademacher() { return (engine_() >> 63) != 0u ? 1.0 : -1.0; }
  std::uint64_t next_u64() { return engine_(); }

  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t key_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// SplitMix64 finalizer, used to mix stream keys.
std::uint64_t mix64(std::uint64_t x);

}  // namespace fif
