// Copyright 2026 The stablevl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ============================================================================
#pragma once

#include <cstdint>
#include <string_view>

namespace svl {

// Counter-based generator: the i-th draw is a pure function of (key, i), so a
// stream can be forked by name without disturbing its parent.
class CounterRng {
 public:
  explicit CounterRng(uint64_t seed) : key_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

  // Independent sub-stream identified by a label and an optional index.
  CounterRng fork(std::string_view name, uint64_t index = 0) const;

  uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }
  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  // Uniform integer in [0, n).
  uint64_t below(uint64_t n);
  double normal();

  uint64_t key() const { return key_; }
  uint64_t counter() const { return counter_; }

 private:
  CounterRng(uint64_t key, int) : key_(key) {}
  static uint64_t mix(uint64_t z);

  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace svl
