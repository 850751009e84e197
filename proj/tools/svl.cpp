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
// svl: command-line front end over the stablevl C API.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "stablevl/stablevl.h"

namespace {

enum Exit { kOk = 0, kCheckFailed = 1, kUsage = 2, kIo = 3, kInternal = 4 };

int exit_for(svl_status s) {
  switch (s) {
    case SVL_OK: return kOk;
    case SVL_ERR_CHECK_FAILED: return kCheckFailed;
    case SVL_ERR_IO: return kIo;
    case SVL_ERR_INTERNAL: return kInternal;
    default: return kUsage;
  }
}

int report(svl_status s, const char* what) {
  std::fprintf(stderr, "svl %s: %s: %s\n", what, svl_status_name(s), svl_last_error());
  return exit_for(s);
}

void print_line(const char* text, void* user) {
  std::fprintf(static_cast<FILE*>(user), "%s\n", text);
}

struct RunFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> scale;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "run configuration (JSON); built-in defaults when omitted");
  cmd->add_option("--seed", f.seed, "override the model seed");
  cmd->add_option("--out", f.out, "output directory (relative paths honor SVL_OUTPUT_ROOT)");
  cmd->add_option("--scale", f.scale, "scale divisor applied to every stage");
}

svl_status load(const RunFlags& f, svl_config** cfg) {
  svl_status s = f.config.empty() ? svl_config_default(cfg) : svl_config_load(f.config.c_str(), cfg);
  if (s != SVL_OK) return s;
  if (f.seed) s = svl_config_set_seed(*cfg, *f.seed);
  if (s == SVL_OK && f.out) s = svl_config_set_output_dir(*cfg, f.out->c_str());
  if (s == SVL_OK && f.scale) s = svl_config_set_scale(*cfg, *f.scale);
  if (s != SVL_OK) {
    svl_config_free(*cfg);
    *cfg = nullptr;
  }
  return s;
}

int cmd_train(const RunFlags& f) {
  svl_config* cfg = nullptr;
  if (svl_status s = load(f, &cfg)) return report(s, "train");
  svl_train_report r{};
  const svl_status s = svl_train(cfg, print_line, stderr, &r);
  svl_config_free(cfg);
  if (s != SVL_OK) return report(s, "train");
  std::printf("train: %zu stages, %zu steps, final loss %.6f, nonfinite steps %zu, encoder %s -> %s\n", r.stages,
              r.steps, r.final_loss, r.nonfinite_steps, r.encoder_intact ? "intact" : "CHANGED",
              r.all_ok ? "OK" : "FAIL");
  return r.all_ok ? kOk : kCheckFailed;
}

int cmd_ablate(const RunFlags& f) {
  svl_config* cfg = nullptr;
  if (svl_status s = load(f, &cfg)) return report(s, "ablate");
  svl_ablate_report r{};
  const svl_status s = svl_ablate(cfg, print_line, stdout, &r);
  svl_config_free(cfg);
  if (s != SVL_OK) return report(s, "ablate");
  std::printf("ablate: %zu rows x %zu stages, table %s, full config %s\n", r.rows, r.stages,
              r.complete ? "complete" : "INCOMPLETE", r.full_row_ok ? "OK" : "NOT OK");
  return r.complete && r.full_row_ok ? kOk : kCheckFailed;
}

int cmd_lr_dump(int stage, std::size_t scale, const std::string& out) {
  FILE* fp = stdout;
  if (!out.empty()) {
    fp = std::fopen(out.c_str(), "wb");
    if (!fp) {
      std::fprintf(stderr, "svl lr-dump: cannot write %s\n", out.c_str());
      return kIo;
    }
  }
  const svl_status s = svl_lr_dump(stage, scale, print_line, fp);
  if (fp != stdout) std::fclose(fp);
  return s == SVL_OK ? kOk : report(s, "lr-dump");
}

int cmd_render(const std::string& samples, const std::string& golden) {
  if (!golden.empty()) {
    const svl_status s = svl_render_check(samples.c_str(), golden.c_str());
    if (s != SVL_OK) return report(s, "render --check");
    std::printf("render --check: %s matches %s\n", samples.c_str(), golden.c_str());
    return kOk;
  }
  const svl_status s = svl_render(samples.c_str(), print_line, stdout);
  return s == SVL_OK ? kOk : report(s, "render");
}

int cmd_gradcheck(const std::string& corrupt, const std::string& json_out) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  std::printf("%-18s %12s %12s %8s  %s\n", "component", "max_rel_err", "excl_null", "coords", "status");
  auto on_entry = [](const svl_gradcheck_entry* e, void* user) {
    char excl[32] = "-";
    if (e->has_null) std::snprintf(excl, sizeof excl, "%.3e", e->excluding_null);
    std::printf("%-18s %12.3e %12s %8zu  %s  worst %s\n", e->component, e->max_relative_error, excl, e->coordinates,
                e->pass ? "PASS" : "FAIL", e->worst);
    static_cast<nlohmann::ordered_json*>(user)->push_back({{"component", e->component},
                                                           {"max_relative_error", e->max_relative_error},
                                                           {"excluding_null", e->excluding_null},
                                                           {"has_null", e->has_null != 0},
                                                           {"coordinates", e->coordinates},
                                                           {"worst", e->worst},
                                                           {"pass", e->pass != 0}});
  };
  int all_pass = 0;
  const svl_status s = svl_gradcheck(corrupt.empty() ? nullptr : corrupt.c_str(), on_entry, &rows, &all_pass);
  if (s != SVL_OK) return report(s, "gradcheck");
  std::printf("gradcheck: %s (tolerance %.0e, eps 1e-5)\n", all_pass ? "PASS" : "FAIL", svl_gradcheck_tolerance());
  if (!json_out.empty()) {
    std::ofstream out(json_out, std::ios::binary | std::ios::trunc);
    out << nlohmann::ordered_json{{"pass", all_pass != 0}, {"tolerance", svl_gradcheck_tolerance()}, {"components", rows}}
               .dump(2)
        << "\n";
    if (!out) {
      std::fprintf(stderr, "svl gradcheck: cannot write %s\n", json_out.c_str());
      return kIo;
    }
  }
  return all_pass ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stablevl: toy-scale vision-language training with stabilized blocks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(svl_version()));

  RunFlags train_flags, ablate_flags;
  auto* train = app.add_subcommand("train", "run the configured stage sequence");
  add_run_flags(train, train_flags);
  auto* ablate = app.add_subcommand("ablate", "module-removal ablation table");
  add_run_flags(ablate, ablate_flags);

  int stage = 0;
  std::size_t scale = 1;
  std::string lr_out;
  auto* lr = app.add_subcommand("lr-dump", "print step,lr for one stage");
  lr->add_option("--stage", stage, "stage id 1..4")->required();
  lr->add_option("--scale", scale, "scale divisor");
  lr->add_option("--out", lr_out, "write to a file instead of stdout");

  std::string samples, golden;
  auto* render = app.add_subcommand("render", "render task samples to prompts");
  render->add_option("samples", samples, "line-delimited JSON samples")->required();
  render->add_option("--check", golden, "golden file to compare against byte-exactly");

  std::string corrupt, gc_json;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every layer type");
  gc->add_option("--json", gc_json, "also write the results as JSON");
  gc->add_option("--corrupt-backward", corrupt, "")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (*train) return cmd_train(train_flags);
  if (*ablate) return cmd_ablate(ablate_flags);
  if (*lr) return cmd_lr_dump(stage, scale, lr_out);
  if (*render) return cmd_render(samples, golden);
  if (*gc) return cmd_gradcheck(corrupt, gc_json);
  return kUsage;
}
