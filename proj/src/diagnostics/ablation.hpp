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
#include <string>
#include <vector>

#include "curriculum/trainer.hpp"
#include "diagnostics/diagnostics.hpp"
#include "model/model.hpp"

namespace svl::diagnostics {

struct AblationVariant {
  std::string name;
  model::ModelConfig model;
};

// full, w/o LoRA, w/o Input Layer Norm, w/o RMS Norm, w/o QK Norm, then the
// full config at each extra width.
std::vector<AblationVariant> ablation_variants(const model::ModelConfig& base, const std::vector<std::size_t>& widths);

struct AblationOptions {
  std::vector<curriculum::StageSpec> stages;
  curriculum::TrainOptions train;
  std::uint64_t seed = 1;
  std::uint64_t data_seed = 7;
  std::size_t samples_per_stage = 32;
  std::vector<std::size_t> widths;
  // Q/K init std for the saturation probe run on every variant.
  double adversarial_qk_std = 10.0;
  std::size_t probe_samples = 4;
};

struct AblationCell {
  int stage = 0;
  RunVerdict verdict;
  bool halted = false;
};

struct AblationRow {
  std::string config;
  std::size_t d_model = 0;
  bool width_sweep = false;
  std::vector<AblationCell> cells;
  blocks::AttentionStats probe;
  bool probe_saturated = false;
};

struct AblationTable {
  double adversarial_qk_std = 0.0;
  std::vector<AblationRow> rows;

  std::string to_jsonl() const;
  std::string to_text() const;
};

// Runs every variant through the whole stage list. A stage that halts still
// hands its model to the next stage, so every cell carries a verdict.
AblationTable ablation_suite(const model::ModelConfig& base, const AblationOptions& opts);

}  // namespace svl::diagnostics
