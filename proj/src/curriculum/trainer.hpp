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

#include <functional>
#include <string>
#include <vector>

#include "curriculum/schedule.hpp"
#include "diagnostics/diagnostics.hpp"
#include "model/model.hpp"
#include "taskspec/template.hpp"

namespace svl::curriculum {

enum class Optimizer { kSgd, kAdam };

struct TrainOptions {
  Optimizer optimizer = Optimizer::kSgd;
  // Multiplies every scheduled learning rate. The published rates are tuned
  // for billions of parameters and huge batches; desk runs need larger steps.
  double lr_scale = 1.0;
  // Samples per step, cycling through the pool; 0 means the whole pool.
  std::size_t batch_size = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  diagnostics::ClassifyOptions classify;
  bool halt_on_vanish = true;
};

using RecordSink = std::function<void(const diagnostics::TrainRecord&)>;

struct StageResult {
  std::vector<diagnostics::TrainRecord> records;
  diagnostics::RunVerdict verdict;
  blocks::AttentionStats attention;
  bool halted = false;
};

// Applies the stage's freeze map, then runs its steps over the fixed sample
// pool. Every step emits a record; a non-finite step is recorded and halts
// the stage without applying its update, and a GradientVanish verdict halts
// it once a full window exists.
// Fixed sample pool for one stage: build_stage_batch keyed by data_seed + stage.
std::vector<taskspec::TaskSample> stage_pool(int stage_id, std::uint64_t data_seed, std::size_t n);

StageResult run_stage(model::Model& model, const std::vector<taskspec::TaskSample>& pool, const StageSpec& spec,
                      const TrainOptions& opts, const RecordSink& sink = {});

}  // namespace svl::curriculum
