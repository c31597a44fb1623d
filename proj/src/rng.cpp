// SPDX-License-Identifier: Apache-2.0

#include "fmlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace fmlab {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : key_(splitmix64(splitmix64(seed) ^ splitmix64(stream_id + 0x632BE59BD9B4E019ULL))) {}

RngStream RngStream::split(std::uint64_t child_id) const {
  return RngStream(splitmix64(key_ ^ splitmix64(child_id ^ 0xD1B54A32D192ED03ULL)));
}

std::uint64_t RngStream::next_u64() {
  // SplitMix64 is itself counter based: output = mix(key + counter * gamma).
  return splitmix64(key_ + 0x9E3779B97F4A7C15ULL * (counter_++));
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_normal_ = true;
  return r * std::cos(theta);
}

std::size_t RngStream::categorical(const std::vector<double>& cumulative) {
  const double u = uniform() * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()),
                               cumulative.size() - 1);
}

Vec RngStream::normal_vector(Eigen::Index dim) {
  Vec z(dim);
  for (Eigen::Index k = 0; k < dim; ++k) z[k] = normal();
  return z;
}

}  // namespace fmlab
