// Copyright 2026 The hospeq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef HOSPEQ_RNG_HPP
#define HOSPEQ_RNG_HPP

// Counter-based random numbers. Draw n of stream `key` is
// splitmix64(key + (n + 1) * golden_gamma), i.e. the SplitMix64 sequence
// (Steele, Lea & Flood 2014) addressed by index. Output depends only on
// (key, n), so every platform produces the same values and any draw can be
// regenerated without replaying the stream.

#include <cstdint>
#include <limits>

namespace hospeq {

inline constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Key for an independent sub-stream of `master`.
constexpr std::uint64_t derive_key(std::uint64_t master, std::uint64_t stream) {
  return splitmix64_mix(master ^ splitmix64_mix(stream * kGoldenGamma + 0x632be59bd9b4e019ULL));
}

/// UniformRandomBitGenerator over a SplitMix64 counter stream.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr CounterRng(std::uint64_t key, std::uint64_t counter = 0)
      : key_(key), counter_(counter) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() { return at(counter_++); }

  /// Value at absolute position n, independent of the current counter.
  constexpr result_type at(std::uint64_t n) const {
    return splitmix64_mix(key_ + (n + 1) * kGoldenGamma);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  constexpr double uniform01() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1); safe for logarithms.
  constexpr double uniform_open01() {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  constexpr std::uint64_t key() const { return key_; }
  constexpr std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace hospeq

#endif  // HOSPEQ_RNG_HPP
