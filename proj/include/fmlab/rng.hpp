// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "fmlab/types.hpp"

namespace fmlab {

/// Counter-based random stream. Every draw is a pure function of
/// (key, counter), so a stream identified by (seed, op-index) reproduces the
/// same sequence on every platform, and child streams can be derived without
/// touching the parent's position.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  /// Independent child stream; does not advance this stream.
  RngStream split(std::uint64_t child_id) const;

  std::uint64_t next_u64();
  /// Uniform on [0, 1).
  double uniform();
  /// Standard normal (Box-Muller with explicit caching of the second variate).
  double normal();
  /// Index drawn from a discrete distribution given by cumulative weights.
  std::size_t categorical(const std::vector<double>& cumulative);

  Vec normal_vector(Eigen::Index dim);

  std::uint64_t key() const noexcept { return key_; }

 private:
  explicit RngStream(std::uint64_t key) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace fmlab
