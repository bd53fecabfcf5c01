// stpt/rng.hpp
//
// Copyright 2026 The stpt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace stpt {

// Deterministic RNG used everywhere. Distributions are implemented by hand on
// top of std::mt19937_64 so that sequences are pinned by this code alone and
// do not depend on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive integer range via rejection-free modulo of a wide draw.
  int uniform_int(int lo, int hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; draws two uniforms per call, no cached spare.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::string state_string() const;
  void restore_state(const std::string& s);

 private:
  std::mt19937_64 engine_;
};

// Stateless seed derivation: children obtained from a master seed plus a tag
// and indices are independent streams, so parallel and serial schedules see
// the same numbers.
uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t a = 0, uint64_t b = 0,
                     uint64_t c = 0);

}  // namespace stpt
