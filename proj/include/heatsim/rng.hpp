// Copyright (c) The Heatsim Authors.
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

#ifndef HEATSIM_RNG_HPP_
#define HEATSIM_RNG_HPP_

#include <cmath>
#include <cstdint>

namespace heatsim {

// 64-bit linear congruential generator with the MMIX multiplier/increment.
// state <- 6364136223846793005*state + 1442695040888963407 (mod 2^64);
// each draw returns the top 32 bits of the new state. The sequence is
// identical on every platform, which is what makes traces reproducible
// across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint32_t next() {
    state_ = 6364136223846793005ULL * state_ + 1442695040888963407ULL;
    return static_cast<std::uint32_t>(state_ >> 32);
  }

  // Uniform in [0, 1), 32 bits of resolution.
  double uniform() { return next() * (1.0 / 4294967296.0); }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Modulo draw in [0, n). n must be nonzero.
  std::uint32_t below(std::uint32_t n) { return next() % n; }

  // Standard normal via Box-Muller; consumes exactly two draws.
  double gaussian() {
    const double u1 = (next() + 0.5) * (1.0 / 4294967296.0);
    const double u2 = (next() + 0.5) * (1.0 / 4294967296.0);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace heatsim

#endif  // HEATSIM_RNG_HPP_
