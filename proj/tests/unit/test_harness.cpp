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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "common/error.hpp"
#include "harness/commands.hpp"
#include "harness/gradcheck.hpp"
#include "harness/run_config.hpp"
#include "json.hpp"
#include "unit/tiny_model.hpp"

using namespace svl;
using namespace svl::harness;
namespace fs = std::filesystem;

namespace {

std::string fixture(const std::string& rel) { return std::string(SVL_FIXTURE_DIR) + "/" + rel; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("svl_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string config_error(const std::string& json) {
  try {
    parse_run_config(json);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

RunConfig tiny_run(const fs::path& out) {
  RunConfig cfg;
  cfg.model = testing::tiny_model_config();
  cfg.samples_per_stage = 3;
  cfg.train.optimizer = curriculum::Optimizer::kAdam;
  cfg.train.lr_scale = 50.0;
  cfg.train.batch_size = 2;
  cfg.ablation_widths = {8};
  cfg.probe_samples = 2;
  // 5 + 25 + 1 + 5 steps.
  for (auto& s : cfg.stages) s.epochs = 1;
  cfg.output_dir = out.string();
  return cfg;
}

}  // namespace

TEST_CASE("empty config takes every default and round-trips canonically") {
  const RunConfig d = parse_run_config("{}");
  const RunConfig ref;
  CHECK(d.to_json() == ref.to_json());
  CHECK(parse_run_config(d.to_json()).to_json() == d.to_json());
  const auto specs = d.stage_specs();
  REQUIRE(specs.size() == 4);
  CHECK(specs[0].total_steps() == 85);
  CHECK(specs[1].total_steps() == 100);
  CHECK(specs[2].total_steps() == 5);
  CHECK(specs[3].total_steps() == 250);
  CHECK(specs[3].resolution == 448);
}

TEST_CASE("shipped configs parse") {
  for (const char* name : {"default.json", "desk.json"}) {
    CAPTURE(name);
    CHECK_NOTHROW(load_run_config(std::string(SVL_CONFIG_DIR) + "/" + name));
  }
  CHECK(load_run_config(std::string(SVL_CONFIG_DIR) + "/default.json").to_json() == RunConfig().to_json());
  const std::string err = [] {
    try {
      load_run_config(std::string(SVL_CONFIG_DIR) + "/stage4_literal.json");
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  }();
  CHECK(err.find("stages[0].schedule") != std::string::npos);
  CHECK(err.find("min_lr <= init_lr") != std::string::npos);
}

TEST_CASE("config errors name the field") {
  CHECK(config_error("{\"seed\": -1}").rfind("seed:", 0) == 0);
  CHECK(config_error("{\"model\": {\"d_model\": \"wide\"}}").rfind("model.d_model:", 0) == 0);
  CHECK(config_error("{\"model\": {\"d_model\": 10}}").rfind("model", 0) == 0);
  CHECK(config_error("{\"lora\": {\"targets\": [\"q\", 3]}}").rfind("lora.targets[1]:", 0) == 0);
  CHECK(config_error("{\"training\": {\"optimiser\": \"adam\"}}") == "training.optimiser: unknown field");
  CHECK(config_error("{\"training\": {\"optimizer\": \"lion\"}}").rfind("training.optimizer:", 0) == 0);
  CHECK(config_error("{\"stages\": []}").rfind("stages:", 0) == 0);
  CHECK(config_error("{\"stages\": [{\"id\": 5}]}").rfind("stages[0].id:", 0) == 0);
  CHECK(config_error("{\"stages\": [{\"id\": 3, \"scale_divisor\": 3}]}").rfind("stages[0].scale_divisor:", 0) == 0);
  CHECK(config_error("{\"stages\": [{\"id\": 1, \"scale_divisor\": 1000}]}").find("period") != std::string::npos);
  CHECK(config_error("{\"stages\": [{\"id\": 2, \"trainable_groups\": [\"loras\"]}]}")
            .rfind("stages[0].trainable_groups:", 0) == 0);
  CHECK(config_error("{\"stages\": [{\"id\": 2, \"schedule\": {\"type\": \"step\"}}]}")
            .rfind("stages[0].schedule.type:", 0) == 0);
  CHECK(config_error("{\"ablation\": {\"widths\": [6]}}").rfind("ablation.widths[0]:", 0) == 0);
  CHECK(config_error("[1, 2]").rfind("config:", 0) == 0);
  CHECK(config_error("{not json").rfind("config: malformed JSON", 0) == 0);
  CHECK(config_error("{\"_comment\": \"fine\", \"model\": {\"_note\": 1}}").empty());
}

TEST_CASE("stage overrides derive the schedule length") {
  const auto cfg = parse_run_config(R"({"stages": [
      {"id": 1, "epochs": 2, "iters_per_epoch": 4},
      {"id": 3, "scale_divisor": 1, "iters_per_epoch": 10,
       "schedule": {"type": "warmup_cosine", "warmup_steps": 3, "warmup_lr": 0, "init_lr": 1e-3, "min_lr": 1e-4}}]})");
  const auto specs = cfg.stage_specs();
  CHECK(specs[0].total_steps() == 8);
  CHECK(std::get<curriculum::SawtoothLinear>(specs[0].schedule).period == 4);
  const auto& wc = std::get<curriculum::WarmupCosine>(specs[1].schedule);
  CHECK(wc.total_steps == 50);
  CHECK(curriculum::lr_at(specs[1].schedule, 3) == 1e-3);
  CHECK(curriculum::lr_at(specs[1].schedule, 50) == 1e-4);
}

TEST_CASE("fnv1a64 reference vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("output root applies to relative directories only") {
  ::setenv("SVL_OUTPUT_ROOT", "/tmp/svl_root", 1);
  CHECK(resolve_output_dir("runs/x") == fs::path("/tmp/svl_root/runs/x"));
  CHECK(resolve_output_dir("/abs/y") == fs::path("/abs/y"));
  ::unsetenv("SVL_OUTPUT_ROOT");
  CHECK(resolve_output_dir("runs/x") == fs::path("runs/x"));
}

TEST_CASE("lr-dump lines") {
  const auto s2 = lr_dump(2, 1);
  REQUIRE(s2.size() == 20001);
  CHECK(s2.front() == "0,9.9999999999999995e-07");
  CHECK(s2[5000] == "5000,0.0001");
  CHECK(s2.back() == "20000,8.0000000000000007e-05");
  const auto s1 = lr_dump(1, 1);
  REQUIRE(s1.size() == 17000);
  const auto value = [](const std::string& l) { return l.substr(l.find(',')); };
  for (std::size_t i = 0; i + 1000 < s1.size(); i += 37) CHECK(value(s1[i]) == value(s1[i + 1000]));
  CHECK(lr_dump(3, 200).size() == 6);
  CHECK_THROWS_AS(lr_dump(1, 1000), ConfigError);
  CHECK_THROWS_AS(lr_dump(0, 1), InvalidArgument);
}

TEST_CASE("render and golden check") {
  const auto lines = render_file(fixture("golden/samples.jsonl"));
  CHECK(lines.size() == 10);
  CHECK(render_check(fixture("golden/samples.jsonl"), fixture("golden/expected.txt")).empty());
  CHECK(render_file(fixture("golden/empty.jsonl")).empty());

  const fs::path dir = temp_dir("render");
  fs::create_directories(dir);
  {
    std::ofstream(dir / "golden.txt") << "###Human: something else\n";
    std::ofstream(dir / "bad.jsonl") << R"({"task":"vqa","instruction":"a","target":"b"})" << "\n\n{oops\n";
  }
  CHECK(render_check(fixture("golden/samples.jsonl"), (dir / "golden.txt").string()).find("line 1") !=
        std::string::npos);
  try {
    render_file((dir / "bad.jsonl").string());
    FAIL("malformed line accepted");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bad.jsonl:3:") != std::string::npos);
  }
  CHECK_THROWS_AS(render_file((dir / "missing.jsonl").string()), IoError);
}

TEST_CASE("gradcheck battery covers every layer type once and catches a corrupted rule") {
  const auto entries = gradcheck_battery();
  std::vector<std::string> names;
  for (const auto& e : entries) names.push_back(e.component);
  CHECK(names == std::vector<std::string>{"input_layer_norm", "rms_norm", "qk_norm_attention", "block_forward",
                                          "lora_forward", "resample", "project_to_lm", "end_to_end"});
  for (const auto& e : entries) {
    CAPTURE(e.component);
    CHECK(e.coordinates > 0);
    // The strict metric is reported as is; without the structurally-null
    // beta_k coordinates every component is well inside tolerance.
    CHECK((e.has_null ? e.excluding_null : e.max_relative_error) <= kGradcheckTolerance);
  }
  bool any_fail = false;
  for (const auto& e : gradcheck_battery("matmul")) any_fail = any_fail || !e.pass();
  CHECK(any_fail);
}

TEST_CASE("train writes artifacts and is byte-reproducible") {
  const fs::path a = temp_dir("train_a"), b = temp_dir("train_b");
  const auto sa = train(tiny_run(a));
  const auto sb = train(tiny_run(b));
  CHECK(sa.all_ok());
  CHECK(sa.encoder_intact);
  CHECK(sa.steps == 36);
  CHECK(sa.nonfinite_steps == 0);
  const std::string metrics = slurp(a / "metrics.jsonl");
  CHECK(metrics == slurp(b / "metrics.jsonl"));
  std::istringstream in(metrics);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* k : {"stage", "step", "loss", "lr", "grad_norms", "nonfinite"}) CHECK(j.contains(k));
    ++n;
  }
  CHECK(n == 36);
  const auto verdict = nlohmann::json::parse(slurp(a / "verdict.json"));
  CHECK(verdict["outcome"] == "OK");
  CHECK(verdict["stages"].size() == 4);
  const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
  CHECK(manifest["version"] == kVersion);
  CHECK(manifest["seed"] == 1);
  CHECK(std::string(manifest["config_hash"]).rfind("fnv1a64:", 0) == 0);
}

TEST_CASE("ablation table is total, reproducible and shows the QK mechanism") {
  const fs::path a = temp_dir("ablate_a"), b = temp_dir("ablate_b");
  const auto sa = ablate(tiny_run(a));
  const auto sb = ablate(tiny_run(b));
  CHECK(sa.complete(4));
  CHECK(sa.full_row_ok());
  REQUIRE(sa.table.rows.size() == 6);
  CHECK(sa.table.rows[5].d_model == 8);
  CHECK(slurp(a / "ablation.jsonl") == slurp(b / "ablation.jsonl"));
  CHECK(slurp(a / "ablation.txt") == slurp(b / "ablation.txt"));
  std::size_t records = 0;
  std::istringstream in(slurp(a / "ablation.jsonl"));
  for (std::string line; std::getline(in, line); ++records) CHECK_NOTHROW((void)nlohmann::json::parse(line));
  CHECK(records == 6 * 5);
  for (const auto& row : sa.table.rows) {
    CAPTURE(row.config);
    const bool qk = row.config != "w/o QK Norm";
    CHECK(row.probe_saturated == !qk);
    if (!qk) {
      CHECK(row.probe.max_abs_logit > 50.0);
      CHECK(row.probe.max_weight > 1.0 - 1e-6);
    }
  }
}
