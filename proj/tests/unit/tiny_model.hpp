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
#pragma once

#include "model/model.hpp"

namespace svl::testing {

// Small enough for unit tests, yet supports both image resolutions.
inline model::ModelConfig tiny_model_config() {
  model::ModelConfig cfg;
  cfg.block.d_model = 16;
  cfg.block.n_heads = 2;
  cfg.block.d_mlp = 32;
  cfg.n_layers = 1;
  cfg.lora.rank = 2;
  cfg.lora.alpha = 4.0;
  cfg.vision.d_vis = 8;
  cfg.vision.enc_heads = 2;
  cfg.vision.n_query = 4;
  cfg.vision.d_q = 8;
  cfg.vision.d_mid = 8;
  cfg.vision.d_lm = 16;
  return cfg;
}

}  // namespace svl::testing
