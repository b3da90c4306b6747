// Copyright 2026 The edgebid Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace edgebid {

// All randomness in the library flows through explicitly injected streams.
using RandomStream = std::mt19937_64;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

// Derives an independent stream from a root seed and a list of tags, so that
// e.g. the channel/data stream of seed 3 never depends on how many auction
// tie-breaks were drawn.
inline RandomStream make_stream(std::uint64_t seed,
                                std::initializer_list<std::uint64_t> tags = {}) {
  std::uint64_t h = detail::splitmix64(seed ^ 0x5eedULL);
  for (std::uint64_t t : tags) h = detail::splitmix64(h ^ detail::splitmix64(t));
  std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return RandomStream(seq);
}

// Stream tags used across the library.
enum StreamTag : std::uint64_t {
  kWorldStream = 1,
  kAuctionStream = 2,
  kPolicyStream = 3,
  kInitStream = 4,
  kReplayStream = 5,
  kEvalStream = 6,
  kCalibrationStream = 7,
};

inline double uniform01(RandomStream& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

// Uniform on the open interval (0, 1).
inline double uniform_open01(RandomStream& rng) {
  constexpr double kTiny = std::numeric_limits<double>::min();
  double u = uniform01(rng);
  while (u <= kTiny || u >= 1.0) u = uniform01(rng);
  return u;
}

inline double standard_normal(RandomStream& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline double unit_exponential(RandomStream& rng) {
  return std::exponential_distribution<double>(1.0)(rng);
}

inline double beta_sample(RandomStream& rng, double alpha, double beta) {
  const double x = std::gamma_distribution<double>(alpha, 1.0)(rng);
  const double y = std::gamma_distribution<double>(beta, 1.0)(rng);
  const double s = x + y;
  return s > 0.0 ? x / s : 0.5;
}

// Standard Gumbel draw by inverse transform.
inline double standard_gumbel(RandomStream& rng) {
  double u = uniform_open01(rng);
  return -std::log(-std::log(u));
}

}  // namespace edgebid
