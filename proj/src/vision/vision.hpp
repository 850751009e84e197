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

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "autograd/parameters.hpp"
#include "autograd/rng.hpp"
#include "autograd/tensor.hpp"

namespace svl::vision {

inline constexpr std::size_t kChannels = 3;

struct VisionConfig {
  std::size_t patch_size = 16;
  std::size_t max_resolution = 448;
  std::size_t d_vis = 64;
  std::size_t enc_heads = 4;
  std::size_t n_query = 32;
  std::size_t d_q = 64;
  std::size_t d_mid = 64;
  std::size_t d_lm = 128;
  std::uint64_t encoder_seed = 0x5eed;

  void validate() const;
  std::size_t max_grid() const { return max_resolution / patch_size; }
};

// ---------------------------------------------------------------------------
// Synthetic scenes

struct SceneObject {
  std::string color;
  // Cell-aligned rectangle on the scene grid, half-open.
  std::size_t row0, col0, row1, col1;
};

struct Scene {
  std::size_t grid = 4;
  std::vector<SceneObject> objects;
};

const std::vector<std::string>& palette();

// One to three non-overlapping rectangles, fully determined by seed.
Scene make_scene(std::uint64_t seed);

// Pixel box (x1, y1, x2, y2) of an object at the given resolution.
std::vector<double> pixel_box(const Scene& scene, const SceneObject& obj, std::size_t resolution);

// Tensor[res, res, 3] with values in [0, 1].
ag::Tensor render_scene(const Scene& scene, std::size_t resolution);

// ---------------------------------------------------------------------------
// Frozen encoder

struct PatchGrid {
  std::size_t resolution = 0;
  std::size_t patch_size = 0;
  std::size_t grid = 0;
  ag::Tensor tokens;  // [grid^2, d_vis]
};

// Relative position bias: one table row per 2-D offset, sized for the largest
// grid. Smaller grids index the same table.
struct RelPosBias {
  std::size_t max_grid = 0;
  ag::Tensor table;  // [heads, (2 max_grid - 1)^2]

  std::size_t encode(long drow, long dcol) const;
  // [g^2, g^2] bias for head h.
  ag::Tensor lookup(std::size_t g, std::size_t head) const;
  // [heads, g^2, g^2]
  ag::Tensor lookup_all(std::size_t g) const;
};

struct VisionEncoder {
  VisionConfig cfg;
  ag::Tensor patch_embed;  // [d_vis, patch^2 * 3]
  ag::Tensor wq, wk, wv, wo;
  RelPosBias bias;

  // Frozen random weights drawn from cfg.encoder_seed only.
  static VisionEncoder create(const VisionConfig& cfg);

  // Non-overlapping patches, row-major, each flattened (y, x, channel) and
  // projected to d_vis.
  PatchGrid patchify(const ag::Tensor& image) const;
  // tokens + Attn(LN(tokens)) with the relative position bias, untaped.
  ag::Tensor encode(const ag::Tensor& image) const;

  std::vector<ag::Tensor> tensors() const;
};

// ---------------------------------------------------------------------------
// Trainable bridge

struct ProjectionStack {
  ag::Tensor queries;     // [n_query, d_q]
  ag::Tensor rq, rk, rv;  // [d_q, d_q], [d_q, d_vis], [d_q, d_vis]
  ag::Tensor w1, b1;      // [d_mid, d_q], [d_mid]
  ag::Tensor w2, b2;      // [d_lm, d_mid], [d_lm]
};

ProjectionStack init_projection(const VisionConfig& cfg, CounterRng& rng);

void register_projection(ag::ParameterRegistry& registry, const ProjectionStack& stack);

// Learned queries cross-attend over the encoded patch tokens. [n_query, d_q].
ag::Tensor resample(const ag::Tensor& tokens, const ProjectionStack& stack);

// linear2(linear1(q_out)); no nonlinearity in between.
ag::Tensor project_to_lm(const ag::Tensor& q_out, const ProjectionStack& stack);

// Replaces rows [begin, begin + length) of text with image.
ag::Tensor splice(const ag::Tensor& text, const ag::Tensor& image, std::size_t begin, std::size_t length);

}  // namespace svl::vision
