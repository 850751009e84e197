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

#include <string>
#include <vector>

namespace svl::harness {

inline constexpr double kGradcheckTolerance = 1e-4;

struct GradcheckEntry {
  std::string component;
  double max_relative_error = 0.0;
  // Same metric with structurally-null parameters (beta_k) left out;
  // informational only.
  double excluding_null = 0.0;
  bool has_null = false;
  std::size_t coordinates = 0;
  std::string worst;  // "param[index] analytic=.. numeric=.."

  bool pass() const { return max_relative_error <= kGradcheckTolerance; }
};

// One entry per layer type plus the end-to-end image -> block -> loss path,
// at eps 1e-5. corrupt_op names an op whose backward is scaled by 1.5 for the
// whole battery; empty leaves every rule intact.
std::vector<GradcheckEntry> gradcheck_battery(const std::string& corrupt_op = "");

}  // namespace svl::harness
