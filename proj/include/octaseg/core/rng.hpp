// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "octaseg/core/tensor.hpp"

namespace octaseg {

/// Deterministic RNG. Streams are derived by hashing (seed, tag, counters) so
/// that parallel or reordered consumers cannot change each other's draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng derive(std::uint64_t seed, const std::string& tag, std::uint64_t a = 0,
                    std::uint64_t b = 0) {
    std::uint64_t h = fnv1a(tag.data(), tag.size(), 0x9e3779b97f4a7c15ull ^ seed);
    h = fnv1a(&a, sizeof(a), h);
    h = fnv1a(&b, sizeof(b), h);
    return Rng(h);
  }

  std::mt19937_64& engine() { return engine_; }

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  long uniform_int(long lo, long hi) {  // inclusive bounds
    return std::uniform_int_distribution<long>(lo, hi)(engine_);
  }
  bool bernoulli(double p) { return std::bernoulli_distribution(p)(engine_); }

  template <typename T>
  void fill_uniform(Tensor<T>& t, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    for (long i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(d(engine_));
  }
  template <typename T>
  void fill_normal(Tensor<T>& t, double mean, double stddev) {
    std::normal_distribution<double> d(mean, stddev);
    for (long i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(d(engine_));
  }

 private:
  std::mt19937_64 engine_;
};

/// Kaiming-uniform bound sqrt(6/fan_in); the convention for all conv weights.
template <typename T>
Tensor<T> kaiming_uniform(Rng& rng, Shape shape, long fan_in) {
  Tensor<T> t(shape);
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  rng.fill_uniform(t, -bound, bound);
  return t;
}

}  // namespace octaseg
