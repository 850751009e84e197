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
#include <doctest.h>

#include <cmath>

#include "common/error.hpp"
#include "curriculum/schedule.hpp"

using namespace svl;
using namespace svl::curriculum;

namespace {
bool close_rel(double a, double b, double tol = 1e-9) { return std::abs(a - b) <= tol * std::max(std::abs(b), 1e-300); }
}  // namespace

TEST_CASE("stage 2 warmup-cosine hits its published landmarks") {
  const auto spec = build_stage_plan(2);
  CHECK(spec.total_steps() == 20000);
  CHECK(lr_at(spec.schedule, 0) == 1e-6);
  CHECK(lr_at(spec.schedule, 5000) == 1e-4);
  CHECK(lr_at(spec.schedule, 20000) == 8e-5);
  CHECK(close_rel(lr_at(spec.schedule, 12500), 9e-5));
  CHECK(close_rel(lr_at(spec.schedule, 2500), 0.5 * (1e-6 + 1e-4)));
}

TEST_CASE("stage 3 warmup end and final value") {
  const auto spec = build_stage_plan(3);
  CHECK(spec.total_steps() == 1000);
  CHECK(lr_at(spec.schedule, 200) == 3e-5);
  CHECK(lr_at(spec.schedule, 1000) == 1e-5);
  CHECK_THROWS_AS(lr_at(spec.schedule, 1001), InvalidArgument);
}

TEST_CASE("stage 4 uses a decaying floor and the high resolution") {
  const auto spec = build_stage_plan(4);
  CHECK(spec.resolution == 448);
  CHECK(lr_at(spec.schedule, 1000) == 1e-5);
  CHECK(lr_at(spec.schedule, spec.total_steps()) == 8e-6);
}

TEST_CASE("cosine phase is monotone non-increasing") {
  for (int stage : {2, 3, 4}) {
    const auto spec = build_stage_plan(stage, stage == 4 ? 10 : 5);
    const auto& wc = std::get<WarmupCosine>(spec.schedule);
    double prev = lr_at(spec.schedule, wc.warmup_steps);
    for (std::size_t s = wc.warmup_steps + 1; s <= wc.total_steps; ++s) {
      const double cur = lr_at(spec.schedule, s);
      REQUIRE(cur <= prev);
      prev = cur;
    }
    double wprev = lr_at(spec.schedule, 0);
    for (std::size_t s = 1; s <= wc.warmup_steps; ++s) {
      const double cur = lr_at(spec.schedule, s);
      REQUIRE(cur >= wprev);
      wprev = cur;
    }
  }
}

TEST_CASE("sawtooth endpoints and periodicity") {
  const auto spec = build_stage_plan(1);
  CHECK(spec.total_steps() == 17000);
  for (std::size_t k = 0; k < 17; ++k) {
    CHECK(lr_at(spec.schedule, k * 1000) == 1e-5);
    CHECK(lr_at(spec.schedule, k * 1000 + 999) == 1e-4);
  }
  for (std::size_t s = 0; s < 3000; s += 7) CHECK(lr_at(spec.schedule, s) == lr_at(spec.schedule, s + 1000));
  for (std::size_t s = 1; s < 1000; ++s) CHECK(lr_at(spec.schedule, s) > lr_at(spec.schedule, s - 1));
  CHECK_THROWS_AS(SawtoothLinear({1e-5, 1e-4, 1}).validate(), ConfigError);
}

TEST_CASE("min_lr above init_lr is rejected with the violated constraint") {
  WarmupCosine wc{10, 1e-6, 1e-5, 8e-5, 100};
  try {
    wc.validate();
    FAIL("accepted min_lr > init_lr");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("min_lr <= init_lr") != std::string::npos);
  }
  CHECK_THROWS_AS(WarmupCosine({200, 1e-6, 1e-5, 1e-6, 100}).validate(), ConfigError);
  CHECK_THROWS_AS(WarmupCosine({0, 1e-4, 1e-5, 1e-6, 100}).validate(), ConfigError);
}

TEST_CASE("divisor scales iterations and warmup but keeps epochs and endpoints") {
  for (std::size_t d : {1u, 2u, 5u, 10u, 200u}) {
    const auto full = build_stage_plan(3);
    const auto scaled = build_stage_plan(3, d);
    CHECK(scaled.epochs == full.epochs);
    CHECK(scaled.iters_per_epoch * d == full.iters_per_epoch);
    const auto& wc = std::get<WarmupCosine>(scaled.schedule);
    CHECK(wc.warmup_steps * d == 200);
    CHECK(lr_at(scaled.schedule, wc.warmup_steps) == 3e-5);
    CHECK(lr_at(scaled.schedule, scaled.total_steps()) == 1e-5);
  }
  CHECK_THROWS_AS(build_stage_plan(3, 3), InvalidArgument);
  CHECK_THROWS_AS(build_stage_plan(3, 0), InvalidArgument);
  CHECK_THROWS_AS(build_stage_plan(1, 1000), ConfigError);
  CHECK_THROWS_AS(build_stage_plan(5), InvalidArgument);
}

TEST_CASE("trainable groups follow the stage map") {
  using G = std::set<std::string>;
  CHECK(build_stage_plan(1).trainable_groups == G{"projection_stack", "norms"});
  CHECK(build_stage_plan(2).trainable_groups == G{"lora"});
  CHECK(build_stage_plan(3).trainable_groups == G{"lora", "projection_stack", "norms"});
  CHECK(build_stage_plan(4).trainable_groups == G{"lora", "projection_stack", "norms"});
}
