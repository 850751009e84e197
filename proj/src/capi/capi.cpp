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
#include "stablevl/stablevl.h"

#include <exception>
#include <memory>
#include <new>
#include <string>

#include "common/error.hpp"
#include "common/runtime.hpp"
#include "harness/commands.hpp"
#include "harness/gradcheck.hpp"
#include "harness/run_config.hpp"

struct svl_config {
  svl::harness::RunConfig cfg;
};

namespace {

thread_local std::string g_last_error;

svl_status fail(svl_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <typename F>
svl_status guarded(F&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const svl::ConfigError& e) {
    return fail(SVL_ERR_CONFIG, e.what());
  } catch (const svl::ShapeError& e) {
    return fail(SVL_ERR_SHAPE, e.what());
  } catch (const svl::InvalidArgument& e) {
    return fail(SVL_ERR_INVALID_ARGUMENT, e.what());
  } catch (const svl::IoError& e) {
    return fail(SVL_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(SVL_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(SVL_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(SVL_ERR_INTERNAL, "unknown error");
  }
}

svl_status require(const void* p, const char* what) {
  if (p == nullptr) return fail(SVL_ERR_INVALID_ARGUMENT, std::string(what) + " must not be NULL");
  return SVL_OK;
}

class CallbackBuf : public std::streambuf {
 public:
  CallbackBuf(svl_text_fn fn, void* user) : fn_(fn), user_(user) {}
  ~CallbackBuf() override { flush_line(); }

 protected:
  int overflow(int c) override {
    if (c == EOF) return 0;
    if (c == '\n') {
      flush_line();
    } else {
      line_.push_back(static_cast<char>(c));
    }
    return c;
  }

 private:
  void flush_line() {
    if (!line_.empty() && fn_) fn_(line_.c_str(), user_);
    line_.clear();
  }
  svl_text_fn fn_;
  void* user_;
  std::string line_;
};

}  // namespace

extern "C" {

const char* svl_version(void) { return svl::harness::kVersion; }

const char* svl_status_name(svl_status status) {
  switch (status) {
    case SVL_OK: return "ok";
    case SVL_ERR_INVALID_ARGUMENT: return "invalid argument";
    case SVL_ERR_CONFIG: return "config error";
    case SVL_ERR_SHAPE: return "shape error";
    case SVL_ERR_IO: return "io error";
    case SVL_ERR_CHECK_FAILED: return "check failed";
    case SVL_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* svl_last_error(void) { return g_last_error.c_str(); }

svl_status svl_config_default(svl_config** out) {
  if (auto s = require(out, "out")) return s;
  return guarded([&] {
    *out = new svl_config{};
    return SVL_OK;
  });
}

svl_status svl_config_load(const char* path, svl_config** out) {
  if (auto s = require(path, "path")) return s;
  if (auto s = require(out, "out")) return s;
  return guarded([&] {
    auto cfg = std::make_unique<svl_config>(svl_config{svl::harness::load_run_config(path)});
    *out = cfg.release();
    return SVL_OK;
  });
}

svl_status svl_config_parse(const char* json_text, svl_config** out) {
  if (auto s = require(json_text, "json_text")) return s;
  if (auto s = require(out, "out")) return s;
  return guarded([&] {
    auto cfg = std::make_unique<svl_config>(svl_config{svl::harness::parse_run_config(json_text)});
    *out = cfg.release();
    return SVL_OK;
  });
}

void svl_config_free(svl_config* cfg) { delete cfg; }

svl_status svl_config_set_seed(svl_config* cfg, uint64_t seed) {
  if (auto s = require(cfg, "cfg")) return s;
  cfg->cfg.seed = seed;
  g_last_error.clear();
  return SVL_OK;
}

svl_status svl_config_set_output_dir(svl_config* cfg, const char* dir) {
  if (auto s = require(cfg, "cfg")) return s;
  if (auto s = require(dir, "dir")) return s;
  if (*dir == '\0') return fail(SVL_ERR_INVALID_ARGUMENT, "output directory must not be empty");
  return guarded([&] {
    cfg->cfg.output_dir = dir;
    return SVL_OK;
  });
}

svl_status svl_config_set_scale(svl_config* cfg, size_t divisor) {
  if (auto s = require(cfg, "cfg")) return s;
  return guarded([&] {
    auto copy = cfg->cfg;
    for (auto& st : copy.stages) st.scale_divisor = divisor;
    copy.validate();
    cfg->cfg = std::move(copy);
    return SVL_OK;
  });
}

svl_status svl_config_to_json(const svl_config* cfg, svl_text_fn fn, void* user) {
  if (auto s = require(cfg, "cfg")) return s;
  if (auto s = require(reinterpret_cast<const void*>(fn), "fn")) return s;
  return guarded([&] {
    const std::string j = cfg->cfg.to_json();
    fn(j.c_str(), user);
    return SVL_OK;
  });
}

svl_status svl_train(const svl_config* cfg, svl_text_fn log, void* user, svl_train_report* report) {
  if (auto s = require(cfg, "cfg")) return s;
  return guarded([&] {
    svl::tune_allocator();
    CallbackBuf buf(log, user);
    std::ostream os(&buf);
    const auto summary = svl::harness::train(cfg->cfg, log ? &os : nullptr);
    if (report) {
      report->stages = summary.stages.size();
      report->steps = summary.steps;
      report->nonfinite_steps = summary.nonfinite_steps;
      report->final_loss = summary.final_loss;
      report->encoder_intact = summary.encoder_intact ? 1 : 0;
      report->all_ok = summary.all_ok() ? 1 : 0;
    }
    return SVL_OK;
  });
}

svl_status svl_ablate(const svl_config* cfg, svl_text_fn log, void* user, svl_ablate_report* report) {
  if (auto s = require(cfg, "cfg")) return s;
  return guarded([&] {
    svl::tune_allocator();
    CallbackBuf buf(log, user);
    std::ostream os(&buf);
    const auto summary = svl::harness::ablate(cfg->cfg, log ? &os : nullptr);
    if (report) {
      const std::size_t n_stages = cfg->cfg.stages.size();
      report->rows = summary.table.rows.size();
      report->stages = n_stages;
      report->complete = summary.complete(n_stages) ? 1 : 0;
      report->full_row_ok = summary.full_row_ok() ? 1 : 0;
    }
    return SVL_OK;
  });
}

svl_status svl_lr_dump(int stage_id, size_t scale_divisor, svl_text_fn line, void* user) {
  if (auto s = require(reinterpret_cast<const void*>(line), "line")) return s;
  return guarded([&] {
    for (const auto& l : svl::harness::lr_dump(stage_id, scale_divisor)) line(l.c_str(), user);
    return SVL_OK;
  });
}

svl_status svl_render(const char* samples_path, svl_text_fn line, void* user) {
  if (auto s = require(samples_path, "samples_path")) return s;
  if (auto s = require(reinterpret_cast<const void*>(line), "line")) return s;
  return guarded([&] {
    for (const auto& l : svl::harness::render_file(samples_path)) line(l.c_str(), user);
    return SVL_OK;
  });
}

svl_status svl_render_check(const char* samples_path, const char* golden_path) {
  if (auto s = require(samples_path, "samples_path")) return s;
  if (auto s = require(golden_path, "golden_path")) return s;
  return guarded([&] {
    const std::string diff = svl::harness::render_check(samples_path, golden_path);
    if (!diff.empty()) return fail(SVL_ERR_CHECK_FAILED, diff);
    return SVL_OK;
  });
}

double svl_gradcheck_tolerance(void) { return svl::harness::kGradcheckTolerance; }

svl_status svl_gradcheck(const char* corrupt_op, svl_gradcheck_fn fn, void* user, int* all_pass) {
  return guarded([&] {
    svl::tune_allocator();
    const auto entries = svl::harness::gradcheck_battery(corrupt_op ? corrupt_op : "");
    bool ok = true;
    for (const auto& e : entries) {
      ok = ok && e.pass();
      if (fn) {
        const svl_gradcheck_entry c{e.component.c_str(), e.max_relative_error, e.excluding_null, e.has_null ? 1 : 0,
                                    e.coordinates,       e.worst.c_str(),      e.pass() ? 1 : 0};
        fn(&c, user);
      }
    }
    if (all_pass) *all_pass = ok ? 1 : 0;
    return SVL_OK;
  });
}

}  // extern "C"
