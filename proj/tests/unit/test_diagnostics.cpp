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
#include <limits>

#include "autograd/ops.hpp"
#include "common/error.hpp"
#include "diagnostics/diagnostics.hpp"

using namespace svl;
using namespace svl::diagnostics;
using ag::Tensor;

namespace {

TrainRecord rec(std::size_t step, double loss, double norm) {
  TrainRecord r;
  r.stage = 3;
  r.step = step;
  r.loss = loss;
  r.groups = {{"lora", norm, true, true}, {"lm_head", 0.0, false, false}};
  return r;
}

}  // namespace

TEST_CASE("grad_stats reports untouched groups and sqrt(count) norms") {
  ag::ParameterRegistry reg;
  reg.declare_group("a");
  reg.declare_group("frozen");
  Tensor w = Tensor::zeros({4}, true);
  reg.add("a", "w", w);
  reg.add("frozen", "f", Tensor::zeros({3}));
  CHECK_THROWS_AS(grad_stats(reg), InvalidArgument);

  ag::Tape tape;
  Tensor loss;
  {
    ag::Tape::Scope scope(tape);
    loss = ag::sum(w);
  }
  reg.backward(tape, loss);
  const auto stats = grad_stats(reg);
  REQUIRE(stats.size() == 2);
  CHECK(stats[0].group == "a");
  CHECK(stats[0].touched);
  CHECK(stats[0].trainable);
  CHECK(stats[0].norm == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(stats[1].group == "frozen");
  CHECK_FALSE(stats[1].touched);
  CHECK_FALSE(stats[1].trainable);
  reg.zero_grad();
  CHECK_THROWS_AS(grad_stats(reg), InvalidArgument);
}

TEST_CASE("record JSON marks untouched groups and non-finite losses") {
  auto r = rec(4, 1.5, 0.25);
  const std::string j = r.to_json();
  CHECK(j.find("\"untouched\"") != std::string::npos);
  CHECK(j.find("\"step\":4") != std::string::npos);
  r.loss = std::numeric_limits<double>::quiet_NaN();
  CHECK(r.to_json().find("\"nan\"") != std::string::npos);
  CHECK(r.trainable_norm() == 0.25);
}

TEST_CASE("classify: healthy decreasing run is OK") {
  std::vector<TrainRecord> rs;
  for (std::size_t s = 0; s < 100; ++s) rs.push_back(rec(s, 3.0 - 0.01 * s, 0.5));
  const auto v = classify(rs);
  CHECK(v.outcome == Outcome::kOk);
  CHECK_FALSE(v.first_bad_step.has_value());
  CHECK(v.evidence.final_loss == doctest::Approx(2.01));
  CHECK(v.evidence.steps == 100);
}

TEST_CASE("classify: tiny norms with a flat loss vanish") {
  std::vector<TrainRecord> rs;
  for (std::size_t s = 0; s < 60; ++s) rs.push_back(rec(s, 2.0, s < 10 ? 0.5 : 1e-12));
  const auto v = classify(rs);
  CHECK(v.outcome == Outcome::kGradientVanish);
  REQUIRE(v.first_bad_step.has_value());
  CHECK(*v.first_bad_step == 10);
  CHECK(outcome_name(v.outcome) == "GradientVanish");
}

TEST_CASE("classify: tiny norms but falling loss is not a vanish") {
  std::vector<TrainRecord> rs;
  for (std::size_t s = 0; s < 60; ++s) rs.push_back(rec(s, 2.0 - 1e-3 * s, 1e-12));
  CHECK(classify(rs).outcome == Outcome::kOk);
}

TEST_CASE("classify: short runs cannot vanish") {
  std::vector<TrainRecord> rs;
  for (std::size_t s = 0; s < 49; ++s) rs.push_back(rec(s, 2.0, 0.0));
  CHECK(classify(rs).outcome == Outcome::kOk);
}

TEST_CASE("classify: first non-finite step wins") {
  std::vector<TrainRecord> rs;
  for (std::size_t s = 0; s < 20; ++s) rs.push_back(rec(s, 2.0, 0.5));
  rs[7].nonfinite = true;
  rs[7].loss = std::numeric_limits<double>::infinity();
  rs[12].nonfinite = true;
  const auto v = classify(rs);
  CHECK(v.outcome == Outcome::kNonFinite);
  CHECK(*v.first_bad_step == 7);
}

TEST_CASE("saturation thresholds") {
  blocks::AttentionStats s;
  s.max_abs_logit = 10.0;
  s.max_weight = 0.9;
  CHECK_FALSE(saturated(s));
  s.max_abs_logit = 60.0;
  CHECK(saturated(s));
  s.max_abs_logit = 1.0;
  s.max_weight = 1.0;
  CHECK(saturated(s));
}

TEST_CASE("a single NaN at any step flips the verdict and dominates vanish") {
  for (std::size_t k = 0; k < 60; ++k) {
    std::vector<TrainRecord> rs;
    for (std::size_t s = 0; s < 60; ++s) rs.push_back(rec(s, 2.0, 1e-12));
    REQUIRE(classify(rs).outcome == Outcome::kGradientVanish);
    rs[k].loss = std::numeric_limits<double>::quiet_NaN();
    const auto v = classify(rs);
    CHECK(v.outcome == Outcome::kNonFinite);
    CHECK(*v.first_bad_step == k);
  }
  CHECK_THROWS_AS(classify({}), InvalidArgument);
  CHECK_THROWS_AS(classify({rec(0, 1.0, 1.0)}, {.window = 0}), InvalidArgument);
}
