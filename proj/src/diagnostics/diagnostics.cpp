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
#include "diagnostics/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "common/error.hpp"
#include "json.hpp"

namespace svl::diagnostics {

std::vector<GroupNorm> grad_stats(const ag::ParameterRegistry& registry) {
  if (!registry.backward_done()) throw InvalidArgument("grad_stats: no backward pass since the last zero_grad");
  std::vector<GroupNorm> out;
  for (const auto& [name, params] : registry.groups()) {
    GroupNorm g{name, 0.0, false, false};
    double sq = 0.0;
    for (const auto& p : params) {
      g.trainable = g.trainable || p.tensor.requires_grad();
      if (!p.tensor.has_grad()) continue;
      g.touched = true;
      for (double v : p.tensor.grad()) sq += v * v;
    }
    g.norm = std::sqrt(sq);
    out.push_back(g);
  }
  return out;
}

double TrainRecord::trainable_norm() const {
  double sq = 0.0;
  for (const auto& g : groups) {
    if (g.trainable) sq += g.norm * g.norm;
  }
  return std::sqrt(sq);
}

namespace {
nlohmann::json number(double v) {
  // JSON has no NaN/Inf; keep them visible as strings.
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}
}  // namespace

std::string TrainRecord::to_json() const {
  nlohmann::ordered_json j;
  j["stage"] = stage;
  j["step"] = step;
  j["loss"] = number(loss);
  j["lr"] = number(lr);
  nlohmann::ordered_json norms = nlohmann::ordered_json::object();
  for (const auto& g : groups) {
    if (g.touched) {
      norms[g.group] = number(g.norm);
    } else {
      norms[g.group] = "untouched";
    }
  }
  j["grad_norms"] = norms;
  j["nonfinite"] = nonfinite;
  return j.dump();
}

std::string outcome_name(Outcome o) {
  switch (o) {
    case Outcome::kOk: return "OK";
    case Outcome::kGradientVanish: return "GradientVanish";
    case Outcome::kNonFinite: return "NonFinite";
  }
  return "";
}

bool saturated(const blocks::AttentionStats& stats) {
  return stats.max_abs_logit > kSaturationLogit || stats.max_weight > kSaturationWeight;
}

RunVerdict classify(const std::vector<TrainRecord>& records, const ClassifyOptions& opts) {
  if (records.empty()) throw InvalidArgument("classify: no records");
  if (opts.window == 0) throw InvalidArgument("classify: window must be at least 1");
  RunVerdict v;
  v.evidence.final_loss = records.back().loss;
  v.evidence.steps = records.size();
  for (const auto& r : records) {
    if (r.nonfinite || !std::isfinite(r.loss)) {
      v.outcome = Outcome::kNonFinite;
      v.first_bad_step = r.step;
      return v;
    }
  }
  const std::size_t w = std::min(opts.window, records.size());
  std::vector<double> norms;
  for (std::size_t i = records.size() - w; i < records.size(); ++i) norms.push_back(records[i].trainable_norm());
  std::sort(norms.begin(), norms.end());
  v.evidence.median_norm = w % 2 ? norms[w / 2] : 0.5 * (norms[w / 2 - 1] + norms[w / 2]);
  if (records.size() < opts.window) return v;
  const TrainRecord& first = records[records.size() - w];
  if (v.evidence.median_norm < opts.vanish_threshold && records.back().loss >= first.loss) {
    v.outcome = Outcome::kGradientVanish;
    v.first_bad_step = first.step;
  }
  return v;
}

}  // namespace svl::diagnostics
