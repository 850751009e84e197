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

#include <cstdint>
#include <string>
#include <vector>

#include "taskspec/template.hpp"
#include "taskspec/vocab.hpp"

namespace svl::taskspec {

// Image resolution used by a stage's samples.
std::size_t stage_resolution(int stage_id);

// Synthetic stand-ins for each stage's data:
//   1, 2: image-caption pairs, no task token;
//   3:    single-turn instructions about the image, no task token;
//   4:    uniform over the six tasks plus 10% text-only samples, each with
//         exactly one task token.
std::vector<TaskSample> build_stage_batch(int stage_id, std::uint64_t seed, std::size_t n);

// Token ids of render(sample) with next-token labels: labels[i] is the id
// at i + 1 when that position lies in the answer, -1 elsewhere.
struct TokenizedSample {
  std::vector<int> ids;
  std::vector<int> labels;
  // Index of the <ImageHere> token, or ids.size() when there is none.
  std::size_t image_pos = 0;
};

TokenizedSample tokenize(const TaskSample& sample, const ToyVocab& vocab = default_vocab());

}  // namespace svl::taskspec
