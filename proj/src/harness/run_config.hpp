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
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "curriculum/schedule.hpp"
#include "curriculum/trainer.hpp"
#include "model/model.hpp"

namespace svl::harness {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr std::size_t kDeskDivisor = 200;

struct StageEntry {
  int id = 1;
  std::size_t scale_divisor = kDeskDivisor;
  // Literal overrides of the published plan; not divided.
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> iters_per_epoch;
  std::optional<curriculum::Schedule> schedule;  // total_steps / period derived
  std::optional<std::set<std::string>> trainable_groups;
};

std::vector<StageEntry> default_stages();

struct RunConfig {
  std::uint64_t seed = 1;
  std::uint64_t data_seed = 7;
  model::ModelConfig model;
  std::vector<StageEntry> stages = default_stages();
  std::size_t samples_per_stage = 32;
  curriculum::TrainOptions train;
  std::vector<std::size_t> ablation_widths{64};
  double adversarial_qk_std = 10.0;
  std::size_t probe_samples = 4;
  std::string output_dir = "runs/default";

  // Throws ConfigError naming the offending field.
  void validate() const;
  std::vector<curriculum::StageSpec> stage_specs() const;
  // Canonical form with every field spelled out.
  std::string to_json() const;
};

// Unknown keys are rejected; keys starting with '_' are comments.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::string& path);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace svl::harness
