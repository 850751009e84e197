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
#include "diagnostics/ablation.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "common/error.hpp"
#include "json.hpp"

namespace svl::diagnostics {

namespace {

nlohmann::ordered_json number(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

std::string fixed(double v, int prec) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

}  // namespace

std::vector<AblationVariant> ablation_variants(const model::ModelConfig& base, const std::vector<std::size_t>& widths) {
  std::vector<AblationVariant> out;
  model::ModelConfig full = base;
  full.block.use_lora = full.block.use_input_layernorm = full.block.use_rms_postnorm = full.block.use_qk_norm = true;
  out.push_back({"full", full});
  out.push_back({"w/o LoRA", full});
  out.back().model.block.use_lora = false;
  out.push_back({"w/o Input Layer Norm", full});
  out.back().model.block.use_input_layernorm = false;
  out.push_back({"w/o RMS Norm", full});
  out.back().model.block.use_rms_postnorm = false;
  out.push_back({"w/o QK Norm", full});
  out.back().model.block.use_qk_norm = false;
  for (std::size_t w : widths) {
    model::ModelConfig m = full;
    m.block.d_model = w;
    m.block.d_mlp = 4 * w;
    m.vision.d_lm = w;
    out.push_back({"full d=" + std::to_string(w), m});
  }
  return out;
}

AblationTable ablation_suite(const model::ModelConfig& base, const AblationOptions& opts) {
  if (opts.stages.empty()) throw InvalidArgument("ablation_suite: no stages");
  const auto variants = ablation_variants(base, opts.widths);
  for (const auto& v : variants) v.model.validate();

  std::vector<std::vector<taskspec::TaskSample>> pools;
  for (const auto& spec : opts.stages) {
    pools.push_back(curriculum::stage_pool(spec.stage_id, opts.data_seed, opts.samples_per_stage));
  }
  auto probe_batch = curriculum::stage_pool(3, opts.data_seed, std::max<std::size_t>(opts.probe_samples, 1));

  AblationTable table;
  table.adversarial_qk_std = opts.adversarial_qk_std;
  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    const auto& v = variants[vi];
    AblationRow row;
    row.config = v.name;
    row.d_model = v.model.block.d_model;
    row.width_sweep = vi >= 5;
    model::Model m(v.model, opts.seed);
    for (std::size_t s = 0; s < opts.stages.size(); ++s) {
      const auto res = curriculum::run_stage(m, pools[s], opts.stages[s], opts.train);
      row.cells.push_back({opts.stages[s].stage_id, res.verdict, res.halted});
    }
    model::ModelConfig adv = v.model;
    adv.qk_init_std = opts.adversarial_qk_std;
    model::Model probe(adv, opts.seed);
    probe.batch_loss(probe_batch, &row.probe);
    row.probe_saturated = saturated(row.probe);
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string AblationTable::to_jsonl() const {
  std::string out;
  for (const auto& row : rows) {
    for (const auto& c : row.cells) {
      nlohmann::ordered_json j;
      j["config"] = row.config;
      j["d_model"] = row.d_model;
      j["stage"] = c.stage;
      j["outcome"] = outcome_name(c.verdict.outcome);
      j["first_bad_step"] = c.verdict.first_bad_step ? nlohmann::ordered_json(*c.verdict.first_bad_step) : nullptr;
      j["halted"] = c.halted;
      j["steps"] = c.verdict.evidence.steps;
      j["final_loss"] = number(c.verdict.evidence.final_loss);
      j["median_norm"] = number(c.verdict.evidence.median_norm);
      j["max_abs_logit"] = number(c.verdict.evidence.max_abs_logit);
      j["max_weight"] = number(c.verdict.evidence.max_weight);
      j["saturated"] = c.verdict.evidence.saturated;
      out += j.dump() + "\n";
    }
    nlohmann::ordered_json p;
    p["config"] = row.config;
    p["d_model"] = row.d_model;
    p["probe"] = "adversarial_qk";
    p["qk_init_std"] = adversarial_qk_std;
    p["max_abs_logit"] = number(row.probe.max_abs_logit);
    p["max_weight"] = number(row.probe.max_weight);
    p["saturated"] = row.probe_saturated;
    out += p.dump() + "\n";
  }
  return out;
}

std::string AblationTable::to_text() const {
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> head{"Config", "d"};
  if (!rows.empty()) {
    for (const auto& c : rows.front().cells) head.push_back("Stage " + std::to_string(c.stage));
  }
  head.push_back("QK probe (std " + fixed(adversarial_qk_std, 0) + ")");
  grid.push_back(head);
  for (const auto& row : rows) {
    std::vector<std::string> line{row.config, std::to_string(row.d_model)};
    for (const auto& c : row.cells) {
      if (c.verdict.outcome == Outcome::kOk) {
        line.push_back(fixed(c.verdict.evidence.final_loss, 3));
      } else {
        line.push_back(outcome_name(c.verdict.outcome) + " @" + std::to_string(c.verdict.first_bad_step.value_or(0)));
      }
    }
    line.push_back("logit " + fixed(row.probe.max_abs_logit, 1) + (row.probe_saturated ? " saturated" : ""));
    grid.push_back(line);
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& l : grid) {
    for (std::size_t i = 0; i < l.size(); ++i) width[i] = std::max(width[i], l[i].size());
  }
  std::ostringstream os;
  for (std::size_t r = 0; r < grid.size(); ++r) {
    std::string line;
    for (std::size_t i = 0; i < grid[r].size(); ++i) line += (i ? " | " : "") + pad(grid[r][i], width[i]);
    while (!line.empty() && line.back() == ' ') line.pop_back();
    os << line << "\n";
    if (r == 0) {
      std::string rule;
      for (std::size_t i = 0; i < width.size(); ++i) rule += (i ? "-+-" : "") + std::string(width[i], '-');
      os << rule << "\n";
    }
  }
  return os.str();
}

}  // namespace svl::diagnostics
