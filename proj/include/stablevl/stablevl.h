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
#ifndef STABLEVL_STABLEVL_H
#define STABLEVL_STABLEVL_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(STABLEVL_BUILDING_LIBRARY)
#define SVL_API __attribute__((visibility("default")))
#else
#define SVL_API
#endif

typedef enum svl_status {
  SVL_OK = 0,
  SVL_ERR_INVALID_ARGUMENT = 1,
  SVL_ERR_CONFIG = 2,
  SVL_ERR_SHAPE = 3,
  SVL_ERR_IO = 4,
  SVL_ERR_CHECK_FAILED = 5,
  SVL_ERR_INTERNAL = 6
} svl_status;

/* Opaque run configuration. */
typedef struct svl_config svl_config;

/* Receives one line of text (no trailing newline) or a log fragment. */
typedef void (*svl_text_fn)(const char* text, void* user);

SVL_API const char* svl_version(void);
SVL_API const char* svl_status_name(svl_status status);
/* Message for the last failing call on this thread; "" after a success. */
SVL_API const char* svl_last_error(void);

SVL_API svl_status svl_config_default(svl_config** out);
SVL_API svl_status svl_config_load(const char* path, svl_config** out);
SVL_API svl_status svl_config_parse(const char* json_text, svl_config** out);
SVL_API void svl_config_free(svl_config* cfg);

SVL_API svl_status svl_config_set_seed(svl_config* cfg, uint64_t seed);
SVL_API svl_status svl_config_set_output_dir(svl_config* cfg, const char* dir);
/* Sets the scale divisor of every stage. */
SVL_API svl_status svl_config_set_scale(svl_config* cfg, size_t divisor);
/* Canonical JSON form, delivered in one call to fn. */
SVL_API svl_status svl_config_to_json(const svl_config* cfg, svl_text_fn fn, void* user);

typedef struct svl_train_report {
  size_t stages;
  size_t steps;
  size_t nonfinite_steps;
  double final_loss;
  int encoder_intact;
  int all_ok; /* every stage verdict OK */
} svl_train_report;

/* SVL_OK once the run completes and its artifacts are written; the verdict
   itself is in report->all_ok. log may be NULL. */
SVL_API svl_status svl_train(const svl_config* cfg, svl_text_fn log, void* user, svl_train_report* report);

typedef struct svl_ablate_report {
  size_t rows;
  size_t stages;
  int complete;    /* every variant has a verdict for every stage */
  int full_row_ok; /* the full configuration is OK in every stage */
} svl_ablate_report;

SVL_API svl_status svl_ablate(const svl_config* cfg, svl_text_fn log, void* user, svl_ablate_report* report);

/* "step,lr" lines for one stage of the built-in plan. */
SVL_API svl_status svl_lr_dump(int stage_id, size_t scale_divisor, svl_text_fn line, void* user);

/* One rendered prompt per sample line. */
SVL_API svl_status svl_render(const char* samples_path, svl_text_fn line, void* user);
/* SVL_ERR_CHECK_FAILED when the rendering differs from the golden file. */
SVL_API svl_status svl_render_check(const char* samples_path, const char* golden_path);

typedef struct svl_gradcheck_entry {
  const char* component;
  double max_relative_error;
  double excluding_null; /* informational: structurally-null parameters left out */
  int has_null;
  size_t coordinates;
  const char* worst;
  int pass;
} svl_gradcheck_entry;

typedef void (*svl_gradcheck_fn)(const svl_gradcheck_entry* entry, void* user);

SVL_API double svl_gradcheck_tolerance(void);
/* Runs the full battery. corrupt_op (may be NULL) names an op whose backward
   rule is deliberately scaled, to show the check can fail. */
SVL_API svl_status svl_gradcheck(const char* corrupt_op, svl_gradcheck_fn fn, void* user, int* all_pass);

#ifdef __cplusplus
}
#endif

#endif /* STABLEVL_STABLEVL_H */
