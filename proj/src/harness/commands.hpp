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

#include <filesystem>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "diagnostics/ablation.hpp"
#include "harness/run_config.hpp"

namespace svl::harness {

// Relative paths resolve against $SVL_OUTPUT_ROOT when it is set.
std::filesystem::path resolve_output_dir(const std::string& dir);

struct StageSummary {
  int stage = 0;
  diagnostics::RunVerdict verdict;
  bool halted = false;
};

struct TrainSummary {
  std::vector<StageSummary> stages;
  std::size_t steps = 0;
  std::size_t nonfinite_steps = 0;
  double final_loss = 0.0;
  bool encoder_intact = true;
  std::filesystem::path out_dir;

  bool all_ok() const;
};

// Writes metrics.jsonl (one record per step), verdict.json and manifest.json.
TrainSummary train(const RunConfig& cfg, std::ostream* log = nullptr);

struct AblateSummary {
  diagnostics::AblationTable table;
  std::filesystem::path out_dir;

  bool complete(std::size_t n_stages) const;
  bool full_row_ok() const;
};

// Writes ablation.jsonl, ablation.txt and manifest.json.
AblateSummary ablate(const RunConfig& cfg, std::ostream* log = nullptr);

// "step,lr" lines: steps 0..N-1 for the sawtooth, 0..N for warmup-cosine
// (whose final value sits at step N).
std::vector<std::string> lr_dump(int stage_id, std::size_t scale_divisor);

// One rendered line per non-empty input line. Malformed lines raise
// ConfigError naming the 1-based line number.
std::vector<std::string> render_file(const std::string& samples_path);

// Empty string when the rendered output equals the golden file byte for byte,
// otherwise a description of the first difference.
std::string render_check(const std::string& samples_path, const std::string& golden_path);

std::string manifest_json(const RunConfig& cfg, const std::string& command);

}  // namespace svl::harness
