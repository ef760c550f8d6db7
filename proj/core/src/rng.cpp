// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tsfo/rng.hpp"

#include <cmath>
#include <numbers>

namespace tsfo {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double SeededRng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double SeededRng::normal() {
  double u1 = uniform();
  double u2 = uniform();
  // u1 in (0, 1] keeps the log finite.
  u1 = 1.0 - u1;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t SeededRng::index(std::size_t n) {
  __extension__ using u128 = unsigned __int128;
  const u128 wide = static_cast<u128>(engine_()) * n;
  return static_cast<std::size_t>(wide >> 64);
}

SeededRng SeededRng::fork(std::uint64_t stream) const {
  return SeededRng(splitmix64(seed_ ^ splitmix64(stream + 1)));
}

}  // namespace tsfo
