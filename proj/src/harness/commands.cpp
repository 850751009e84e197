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
#include "harness/commands.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "common/error.hpp"
#include "json.hpp"
#include "taskspec/template.hpp"

namespace svl::harness {

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

fs::path prepare_dir(const RunConfig& cfg) {
  const fs::path dir = resolve_output_dir(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

std::uint64_t encoder_hash(const vision::VisionEncoder& enc) {
  std::uint64_t h = 0;
  for (const auto& t : enc.tensors()) {
    const auto d = t.data();
    h ^= fnv1a64(std::string_view(reinterpret_cast<const char*>(d.data()), d.size() * sizeof(double))) + (h << 6);
  }
  return h;
}

nlohmann::ordered_json number(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace

fs::path resolve_output_dir(const std::string& dir) {
  fs::path p(dir);
  if (p.is_relative()) {
    if (const char* root = std::getenv("SVL_OUTPUT_ROOT"); root && *root) p = fs::path(root) / p;
  }
  return p;
}

std::string manifest_json(const RunConfig& cfg, const std::string& command) {
  const std::string canonical = cfg.to_json();
  nlohmann::ordered_json m;
  m["tool"] = "stablevl";
  m["version"] = kVersion;
  m["command"] = command;
  m["seed"] = cfg.seed;
  m["data_seed"] = cfg.data_seed;
  m["config_hash"] = "fnv1a64:" + hex64(fnv1a64(canonical));
  m["config"] = nlohmann::ordered_json::parse(canonical);
  return m.dump(2) + "\n";
}

bool TrainSummary::all_ok() const {
  if (!encoder_intact) return false;
  for (const auto& s : stages) {
    if (s.verdict.outcome != diagnostics::Outcome::kOk) return false;
  }
  return true;
}

TrainSummary train(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  const auto specs = cfg.stage_specs();
  TrainSummary summary;
  summary.out_dir = prepare_dir(cfg);
  write_file(summary.out_dir / "manifest.json", manifest_json(cfg, "train"));

  std::ofstream metrics(summary.out_dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
  if (!metrics) throw IoError("cannot write " + (summary.out_dir / "metrics.jsonl").string());

  model::Model m(cfg.model, cfg.seed);
  const std::uint64_t enc_before = encoder_hash(m.encoder());
  for (const auto& spec : specs) {
    const auto pool = curriculum::stage_pool(spec.stage_id, cfg.data_seed, cfg.samples_per_stage);
    const auto res = curriculum::run_stage(m, pool, spec, cfg.train, [&](const diagnostics::TrainRecord& r) {
      metrics << r.to_json() << "\n";
      if (r.nonfinite) ++summary.nonfinite_steps;
    });
    metrics.flush();
    summary.steps += res.records.size();
    summary.final_loss = res.verdict.evidence.final_loss;
    summary.stages.push_back({spec.stage_id, res.verdict, res.halted});
    if (log) {
      *log << "stage " << spec.stage_id << ": " << res.records.size() << "/" << spec.total_steps() << " steps, loss "
           << (res.records.empty() ? 0.0 : res.records.front().loss) << " -> " << res.verdict.evidence.final_loss
           << ", " << diagnostics::outcome_name(res.verdict.outcome) << "\n";
    }
  }
  summary.encoder_intact = encoder_hash(m.encoder()) == enc_before;
  if (!metrics) throw IoError("write failed for metrics.jsonl");

  nlohmann::ordered_json v;
  v["outcome"] = summary.all_ok() ? "OK" : "FAIL";
  v["steps"] = summary.steps;
  v["nonfinite_steps"] = summary.nonfinite_steps;
  v["final_loss"] = number(summary.final_loss);
  v["encoder_intact"] = summary.encoder_intact;
  auto& st = v["stages"] = nlohmann::ordered_json::array();
  for (const auto& s : summary.stages) {
    nlohmann::ordered_json j;
    j["stage"] = s.stage;
    j["outcome"] = diagnostics::outcome_name(s.verdict.outcome);
    j["first_bad_step"] = s.verdict.first_bad_step ? nlohmann::ordered_json(*s.verdict.first_bad_step) : nullptr;
    j["halted"] = s.halted;
    j["steps"] = s.verdict.evidence.steps;
    j["final_loss"] = number(s.verdict.evidence.final_loss);
    j["median_norm"] = number(s.verdict.evidence.median_norm);
    j["max_abs_logit"] = number(s.verdict.evidence.max_abs_logit);
    j["max_weight"] = number(s.verdict.evidence.max_weight);
    j["saturated"] = s.verdict.evidence.saturated;
    st.push_back(j);
  }
  write_file(summary.out_dir / "verdict.json", v.dump(2) + "\n");
  return summary;
}

bool AblateSummary::complete(std::size_t n_stages) const {
  if (table.rows.size() < 5) return false;
  for (const auto& row : table.rows) {
    if (row.cells.size() != n_stages) return false;
  }
  return true;
}

bool AblateSummary::full_row_ok() const {
  if (table.rows.empty()) return false;
  for (const auto& c : table.rows.front().cells) {
    if (c.verdict.outcome != diagnostics::Outcome::kOk) return false;
  }
  return true;
}

AblateSummary ablate(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  diagnostics::AblationOptions opts;
  opts.stages = cfg.stage_specs();
  opts.train = cfg.train;
  opts.seed = cfg.seed;
  opts.data_seed = cfg.data_seed;
  opts.samples_per_stage = cfg.samples_per_stage;
  opts.widths = cfg.ablation_widths;
  opts.adversarial_qk_std = cfg.adversarial_qk_std;
  opts.probe_samples = cfg.probe_samples;

  AblateSummary summary;
  summary.out_dir = prepare_dir(cfg);
  write_file(summary.out_dir / "manifest.json", manifest_json(cfg, "ablate"));
  summary.table = diagnostics::ablation_suite(cfg.model, opts);
  write_file(summary.out_dir / "ablation.jsonl", summary.table.to_jsonl());
  write_file(summary.out_dir / "ablation.txt", summary.table.to_text());
  if (log) *log << summary.table.to_text();
  return summary;
}

std::vector<std::string> lr_dump(int stage_id, std::size_t scale_divisor) {
  const auto spec = curriculum::build_stage_plan(stage_id, scale_divisor);
  const bool cosine = std::holds_alternative<curriculum::WarmupCosine>(spec.schedule);
  const std::size_t last = cosine ? spec.total_steps() : spec.total_steps() - 1;
  std::vector<std::string> lines;
  lines.reserve(last + 1);
  char buf[64];
  for (std::size_t s = 0; s <= last; ++s) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g", s, curriculum::lr_at(spec.schedule, s));
    lines.emplace_back(buf);
  }
  return lines;
}

std::vector<std::string> render_file(const std::string& samples_path) {
  const auto lines = read_lines(samples_path);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(taskspec::render(taskspec::sample_from_json(lines[i])));
    } catch (const Error& e) {
      throw ConfigError(samples_path + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

std::string render_check(const std::string& samples_path, const std::string& golden_path) {
  const auto rendered = render_file(samples_path);
  std::string produced;
  for (const auto& l : rendered) produced += l + "\n";
  std::ifstream in(golden_path, std::ios::binary);
  if (!in) throw IoError("cannot open " + golden_path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string golden = ss.str();
  if (produced == golden) return {};
  std::size_t line = 1, pos = 0;
  while (pos < produced.size() && pos < golden.size() && produced[pos] == golden[pos]) {
    if (produced[pos] == '\n') ++line;
    ++pos;
  }
  return "mismatch at byte " + std::to_string(pos) + " (line " + std::to_string(line) + ")";
}

}  // namespace svl::harness
