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

#include <optional>
#include <string>
#include <vector>

#include "autograd/parameters.hpp"
#include "blocks/blocks.hpp"

namespace svl::diagnostics {

struct GroupNorm {
  std::string group;
  double norm = 0.0;
  bool touched = false;    // at least one tensor in the group holds a gradient
  bool trainable = false;  // at least one tensor in the group requires grad
};

// L2 gradient norm per parameter group. Throws InvalidArgument when no
// backward pass has completed since the last zero_grad().
std::vector<GroupNorm> grad_stats(const ag::ParameterRegistry& registry);

struct TrainRecord {
  int stage = 0;
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::vector<GroupNorm> groups;
  bool nonfinite = false;

  // Root-sum-square over the trainable groups.
  double trainable_norm() const;
  // One JSON object, no trailing newline.
  std::string to_json() const;
};

enum class Outcome { kOk, kGradientVanish, kNonFinite };
std::string outcome_name(Outcome o);

struct Evidence {
  double final_loss = 0.0;
  double median_norm = 0.0;  // over the trailing window
  double max_abs_logit = 0.0;
  double max_weight = 0.0;
  bool saturated = false;
  std::size_t steps = 0;
};

struct RunVerdict {
  Outcome outcome = Outcome::kOk;
  std::optional<std::size_t> first_bad_step;
  Evidence evidence;
};

struct ClassifyOptions {
  std::size_t window = 50;
  double vanish_threshold = 1e-8;
};

// NonFinite if any record is flagged or has a non-finite loss (first such
// step reported).
// GradientVanish if, over the last window records, the median trainable
// gradient norm is below the threshold and the loss did not decrease from the
// window's first record to its last. Otherwise OK.
RunVerdict classify(const std::vector<TrainRecord>& records, const ClassifyOptions& opts = {});

// Logit blow-up or a near one-hot softmax row.
bool saturated(const blocks::AttentionStats& stats);
inline constexpr double kSaturationLogit = 50.0;
inline constexpr double kSaturationWeight = 1.0 - 1e-6;

}  // namespace svl::diagnostics
