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
#include "curriculum/schedule.hpp"

#include <cmath>
#include <numbers>

#include "common/error.hpp"

namespace svl::curriculum {

namespace {
std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}
}  // namespace

void SawtoothLinear::validate() const {
  if (period < 2) throw ConfigError("sawtooth period must be at least 2 steps, got " + std::to_string(period));
  if (!(lr_start >= 0.0) || !(lr_end >= 0.0)) throw ConfigError("sawtooth learning rates must be non-negative");
}

double SawtoothLinear::lr(std::size_t step) const {
  validate();
  const double p = static_cast<double>(step % period) / static_cast<double>(period - 1);
  return std::lerp(lr_start, lr_end, p);
}

void WarmupCosine::validate() const {
  if (!(warmup_lr >= 0.0) || !(init_lr >= 0.0) || !(min_lr >= 0.0)) {
    throw ConfigError("warmup-cosine learning rates must be non-negative");
  }
  if (warmup_lr > init_lr) {
    throw ConfigError("warmup-cosine requires warmup_lr <= init_lr (got " + num(warmup_lr) + " > " + num(init_lr) + ")");
  }
  if (min_lr > init_lr) {
    throw ConfigError("warmup-cosine requires min_lr <= init_lr (got min_lr " + num(min_lr) + " > init_lr " +
                      num(init_lr) + "); a cosine decay cannot end above its start");
  }
  if (warmup_steps > total_steps) {
    throw ConfigError("warmup-cosine requires warmup_steps <= total_steps (got " + std::to_string(warmup_steps) +
                      " > " + std::to_string(total_steps) + ")");
  }
}

double WarmupCosine::lr(std::size_t step) const {
  validate();
  if (step > total_steps) {
    throw InvalidArgument("step " + std::to_string(step) + " beyond schedule end " + std::to_string(total_steps));
  }
  if (step < warmup_steps) {
    return std::lerp(warmup_lr, init_lr, static_cast<double>(step) / static_cast<double>(warmup_steps));
  }
  if (total_steps == warmup_steps) return init_lr;
  const double phase = static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return std::lerp(min_lr, init_lr, 0.5 * (1.0 + std::cos(std::numbers::pi * phase)));
}

double lr_at(const Schedule& schedule, std::size_t step) {
  return std::visit([step](const auto& s) { return s.lr(step); }, schedule);
}

void validate(const Schedule& schedule) {
  std::visit([](const auto& s) { s.validate(); }, schedule);
}

void StageSpec::validate() const {
  if (stage_id < 1 || stage_id > 4) throw ConfigError("stage id must be 1..4, got " + std::to_string(stage_id));
  if (epochs == 0 || iters_per_epoch == 0) throw ConfigError("stage needs at least one epoch and one iteration");
  curriculum::validate(schedule);
  if (const auto* wc = std::get_if<WarmupCosine>(&schedule); wc && wc->total_steps != total_steps()) {
    throw ConfigError("warmup-cosine total_steps must equal epochs * iters_per_epoch");
  }
  if (resolution != 224 && resolution != 448) throw ConfigError("stage resolution must be 224 or 448");
}

StageSpec build_stage_plan(int stage_id, std::size_t scale_divisor) {
  if (scale_divisor == 0) throw InvalidArgument("scale divisor must be at least 1");
  struct Published {
    std::size_t epochs, iters, warmup;
    double warmup_lr, init_lr, min_lr;
  };
  StageSpec spec;
  spec.stage_id = stage_id;
  Published p{};
  switch (stage_id) {
    case 1: p = {17, 1000, 0, 0, 0, 0}; spec.trainable_groups = {"projection_stack", "norms"}; break;
    case 2: p = {4, 5000, 5000, 1e-6, 1e-4, 8e-5}; spec.trainable_groups = {"lora"}; break;
    case 3: p = {5, 200, 200, 1e-6, 3e-5, 1e-5}; spec.trainable_groups = {"lora", "projection_stack", "norms"}; break;
    case 4: p = {50, 1000, 1000, 1e-6, 1e-5, 8e-6}; spec.trainable_groups = {"lora", "projection_stack", "norms"}; break;
    default: throw InvalidArgument("stage id must be 1..4, got " + std::to_string(stage_id));
  }
  if (p.iters % scale_divisor != 0 || p.warmup % scale_divisor != 0) {
    throw InvalidArgument("scale divisor " + std::to_string(scale_divisor) + " does not divide stage " +
                          std::to_string(stage_id) + "'s " + std::to_string(p.iters) + " iterations per epoch");
  }
  spec.epochs = p.epochs;
  spec.iters_per_epoch = p.iters / scale_divisor;
  spec.resolution = stage_id == 4 ? 448 : 224;
  if (stage_id == 1) {
    spec.schedule = SawtoothLinear{1e-5, 1e-4, spec.iters_per_epoch};
  } else {
    spec.schedule = WarmupCosine{p.warmup / scale_divisor, p.warmup_lr, p.init_lr, p.min_lr, spec.total_steps()};
  }
  spec.validate();
  return spec;
}

}  // namespace svl::curriculum
