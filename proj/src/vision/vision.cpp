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
#include "vision/vision.hpp"

#include <algorithm>
#include <cmath>

#include "autograd/ops.hpp"
#include "blocks/blocks.hpp"
#include "common/error.hpp"

namespace svl::vision {

using ag::Tensor;

void VisionConfig::validate() const {
  if (patch_size == 0) throw ConfigError("vision.patch_size must be positive");
  if (max_resolution == 0 || max_resolution % patch_size != 0) {
    throw ConfigError("vision.max_resolution must be a positive multiple of vision.patch_size");
  }
  if (d_vis == 0 || enc_heads == 0 || d_vis % enc_heads != 0) {
    throw ConfigError("vision.d_vis must be divisible by vision.enc_heads");
  }
  if (n_query == 0 || d_q == 0 || d_mid == 0 || d_lm == 0) throw ConfigError("vision widths must be positive");
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& palette() {
  static const std::vector<std::string> colors{"red", "green", "blue", "yellow", "cyan", "magenta"};
  return colors;
}

namespace {

const double kRgb[6][3] = {{0.9, 0.1, 0.1}, {0.1, 0.8, 0.2}, {0.1, 0.2, 0.9},
                           {0.9, 0.9, 0.1}, {0.1, 0.9, 0.9}, {0.9, 0.1, 0.9}};

bool overlaps(const SceneObject& a, const SceneObject& b) {
  return a.row0 < b.row1 && b.row0 < a.row1 && a.col0 < b.col1 && b.col0 < a.col1;
}

}  // namespace

Scene make_scene(std::uint64_t seed) {
  CounterRng rng = CounterRng(seed).fork("scene");
  Scene scene;
  const std::size_t wanted = 1 + rng.below(3);
  std::vector<std::size_t> colors(palette().size());
  for (std::size_t i = 0; i < colors.size(); ++i) colors[i] = i;
  for (int attempt = 0; attempt < 64 && scene.objects.size() < wanted; ++attempt) {
    SceneObject obj;
    const std::size_t h = 1 + rng.below(2), w = 1 + rng.below(2);
    obj.row0 = rng.below(scene.grid - h + 1);
    obj.col0 = rng.below(scene.grid - w + 1);
    obj.row1 = obj.row0 + h;
    obj.col1 = obj.col0 + w;
    const bool clash = std::any_of(scene.objects.begin(), scene.objects.end(),
                                   [&](const SceneObject& o) { return overlaps(o, obj); });
    if (clash) continue;
    // Distinct colors so a color names exactly one object.
    const std::size_t pick = scene.objects.size() + rng.below(colors.size() - scene.objects.size());
    std::swap(colors[scene.objects.size()], colors[pick]);
    obj.color = palette()[colors[scene.objects.size()]];
    scene.objects.push_back(obj);
  }
  return scene;
}

std::vector<double> pixel_box(const Scene& scene, const SceneObject& obj, std::size_t resolution) {
  const double cell = static_cast<double>(resolution) / static_cast<double>(scene.grid);
  return {obj.col0 * cell, obj.row0 * cell, obj.col1 * cell, obj.row1 * cell};
}

Tensor render_scene(const Scene& scene, std::size_t resolution) {
  if (resolution == 0) throw InvalidArgument("render_scene: resolution must be positive");
  Tensor img = Tensor::full({resolution, resolution, kChannels}, 0.05);
  auto d = img.mutable_data();
  for (const auto& obj : scene.objects) {
    const auto idx = static_cast<std::size_t>(
        std::find(palette().begin(), palette().end(), obj.color) - palette().begin());
    const auto box = pixel_box(scene, obj, resolution);
    const auto x0 = static_cast<std::size_t>(box[0]), y0 = static_cast<std::size_t>(box[1]);
    const auto x1 = static_cast<std::size_t>(box[2]), y1 = static_cast<std::size_t>(box[3]);
    for (std::size_t y = y0; y < y1; ++y) {
      for (std::size_t x = x0; x < x1; ++x) {
        for (std::size_t c = 0; c < kChannels; ++c) d[(y * resolution + x) * kChannels + c] = kRgb[idx][c];
      }
    }
  }
  return img;
}

// ---------------------------------------------------------------------------

std::size_t RelPosBias::encode(long drow, long dcol) const {
  const long span = static_cast<long>(max_grid) - 1;
  if (std::abs(drow) > span || std::abs(dcol) > span) {
    throw InvalidArgument("rel_pos_bias: offset outside the table");
  }
  return static_cast<std::size_t>((drow + span) * (2 * span + 1) + (dcol + span));
}

Tensor RelPosBias::lookup(std::size_t g, std::size_t head) const {
  if (g == 0 || g > max_grid) {
    throw InvalidArgument("rel_pos_bias: grid side " + std::to_string(g) + " outside [1, " +
                          std::to_string(max_grid) + "]");
  }
  if (head >= table.dim(0)) throw InvalidArgument("rel_pos_bias: head out of range");
  const std::size_t n = g * g, width = table.dim(1);
  std::vector<double> out(n * n);
  const auto t = table.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const long dr = static_cast<long>(i / g) - static_cast<long>(j / g);
      const long dc = static_cast<long>(i % g) - static_cast<long>(j % g);
      out[i * n + j] = t[head * width + encode(dr, dc)];
    }
  }
  return Tensor::from({n, n}, std::move(out));
}

Tensor RelPosBias::lookup_all(std::size_t g) const {
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < table.dim(0); ++h) heads.push_back(lookup(g, h));
  const std::size_t n = g * g;
  return ag::reshape(ag::concat_rows(heads), {table.dim(0), n, n});
}

VisionEncoder VisionEncoder::create(const VisionConfig& cfg) {
  cfg.validate();
  CounterRng rng = CounterRng(cfg.encoder_seed).fork("vision_encoder");
  VisionEncoder enc;
  enc.cfg = cfg;
  const std::size_t patch_dim = cfg.patch_size * cfg.patch_size * kChannels;
  const std::size_t d = cfg.d_vis;
  enc.patch_embed = Tensor::randn({d, patch_dim}, 1.0 / std::sqrt(static_cast<double>(patch_dim)), rng);
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  enc.wq = Tensor::randn({d, d}, s, rng);
  enc.wk = Tensor::randn({d, d}, s, rng);
  enc.wv = Tensor::randn({d, d}, s, rng);
  enc.wo = Tensor::randn({d, d}, s, rng);
  const std::size_t g = cfg.max_grid();
  enc.bias.max_grid = g;
  enc.bias.table = Tensor::randn({cfg.enc_heads, (2 * g - 1) * (2 * g - 1)}, 0.5, rng);
  return enc;
}

PatchGrid VisionEncoder::patchify(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != image.dim(1) || image.dim(2) != kChannels) {
    throw ShapeError("patchify: expected a square [res, res, 3] image, got " + ag::shape_str(image.shape()));
  }
  const std::size_t res = image.dim(0), p = cfg.patch_size;
  if (res % p != 0) {
    throw InvalidArgument("patchify: resolution " + std::to_string(res) + " is not divisible by patch size " +
                          std::to_string(p));
  }
  if (res > cfg.max_resolution) {
    throw InvalidArgument("patchify: resolution " + std::to_string(res) + " exceeds max_resolution " +
                          std::to_string(cfg.max_resolution));
  }
  const std::size_t g = res / p, patch_dim = p * p * kChannels;
  std::vector<double> patches(g * g * patch_dim);
  const auto src = image.data();
  for (std::size_t pr = 0; pr < g; ++pr) {
    for (std::size_t pc = 0; pc < g; ++pc) {
      double* dst = patches.data() + (pr * g + pc) * patch_dim;
      for (std::size_t y = 0; y < p; ++y) {
        const double* row = src.data() + ((pr * p + y) * res + pc * p) * kChannels;
        std::copy(row, row + p * kChannels, dst + y * p * kChannels);
      }
    }
  }
  PatchGrid out;
  out.resolution = res;
  out.patch_size = p;
  out.grid = g;
  out.tokens = ag::linear(Tensor::from({g * g, patch_dim}, std::move(patches)), patch_embed);
  return out;
}

Tensor VisionEncoder::encode(const Tensor& image) const {
  const PatchGrid pg = patchify(image);
  const std::size_t n = pg.grid * pg.grid, d = cfg.d_vis, h = cfg.enc_heads, dk = d / h;
  const Tensor x = blocks::input_layer_norm(pg.tokens, Tensor::full({d}, 1.0), Tensor::zeros({d}), 1e-5);
  const auto heads = [&](const Tensor& t) { return ag::transpose(ag::reshape(t, {n, h, dk}), 0, 1); };
  blocks::AttentionOptions opts;
  opts.causal = false;
  opts.bias = bias.lookup_all(pg.grid);
  const Tensor att =
      blocks::qk_norm_attention(heads(ag::linear(x, wq)), heads(ag::linear(x, wk)), heads(ag::linear(x, wv)), opts);
  const Tensor merged = ag::reshape(ag::transpose(att, 0, 1), {n, d});
  return ag::add(pg.tokens, ag::linear(merged, wo));
}

std::vector<Tensor> VisionEncoder::tensors() const { return {patch_embed, wq, wk, wv, wo, bias.table}; }

// ---------------------------------------------------------------------------

ProjectionStack init_projection(const VisionConfig& cfg, CounterRng& rng) {
  cfg.validate();
  ProjectionStack s;
  CounterRng r = rng.fork("resampler");
  s.queries = Tensor::randn({cfg.n_query, cfg.d_q}, 1.0, r);
  s.rq = Tensor::randn({cfg.d_q, cfg.d_q}, 1.0 / std::sqrt(static_cast<double>(cfg.d_q)), r);
  s.rk = Tensor::randn({cfg.d_q, cfg.d_vis}, 1.0 / std::sqrt(static_cast<double>(cfg.d_vis)), r);
  s.rv = Tensor::randn({cfg.d_q, cfg.d_vis}, 1.0 / std::sqrt(static_cast<double>(cfg.d_vis)), r);
  // Stand-in for a pretrained first projection: a fixed-seed Gaussian.
  CounterRng l1 = rng.fork("linear1");
  s.w1 = Tensor::randn({cfg.d_mid, cfg.d_q}, 1.0 / std::sqrt(static_cast<double>(cfg.d_q)), l1);
  s.b1 = Tensor::zeros({cfg.d_mid});
  CounterRng l2 = rng.fork("linear2");
  s.w2 = Tensor::randn({cfg.d_lm, cfg.d_mid}, 0.02, l2);
  s.b2 = Tensor::zeros({cfg.d_lm});
  return s;
}

void register_projection(ag::ParameterRegistry& registry, const ProjectionStack& s) {
  const std::string g = "projection_stack";
  registry.add(g, "proj.queries", s.queries);
  registry.add(g, "proj.rq", s.rq);
  registry.add(g, "proj.rk", s.rk);
  registry.add(g, "proj.rv", s.rv);
  registry.add(g, "proj.w1", s.w1);
  registry.add(g, "proj.b1", s.b1);
  registry.add(g, "proj.w2", s.w2);
  registry.add(g, "proj.b2", s.b2);
}

Tensor resample(const Tensor& tokens, const ProjectionStack& s) {
  if (tokens.rank() != 2 || tokens.dim(1) != s.rk.dim(1)) {
    throw ShapeError("resample: patch tokens " + ag::shape_str(tokens.shape()) + " do not match key width " +
                     std::to_string(s.rk.dim(1)));
  }
  const Tensor q = ag::linear(s.queries, s.rq);
  const Tensor k = ag::linear(tokens, s.rk);
  const Tensor v = ag::linear(tokens, s.rv);
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  return ag::matmul(ag::softmax_last(ag::mul_scalar(ag::matmul_nt(q, k), scale)), v);
}

Tensor project_to_lm(const Tensor& q_out, const ProjectionStack& s) {
  if (q_out.rank() != 2 || q_out.dim(1) != s.w1.dim(1)) {
    throw ShapeError("project_to_lm: input " + ag::shape_str(q_out.shape()) + " does not match linear1 width " +
                     std::to_string(s.w1.dim(1)));
  }
  if (s.w2.dim(1) != s.w1.dim(0)) throw ShapeError("project_to_lm: linear1 and linear2 widths do not chain");
  return ag::linear(ag::linear(q_out, s.w1, s.b1), s.w2, s.b2);
}

Tensor splice(const Tensor& text, const Tensor& image, std::size_t begin, std::size_t length) {
  if (text.rank() != 2 || image.rank() != 2 || text.dim(1) != image.dim(1)) {
    throw ShapeError("splice: text " + ag::shape_str(text.shape()) + " and image " + ag::shape_str(image.shape()) +
                     " widths differ");
  }
  const std::size_t t = text.dim(0);
  if (begin >= t || length > t - begin) {
    throw InvalidArgument("splice: span [" + std::to_string(begin) + ", " + std::to_string(begin + length) +
                          ") outside text of length " + std::to_string(t));
  }
  std::vector<Tensor> parts;
  if (begin > 0) parts.push_back(ag::slice_rows(text, 0, begin));
  parts.push_back(image);
  if (begin + length < t) parts.push_back(ag::slice_rows(text, begin + length, t));
  return parts.size() == 1 ? parts.front() : ag::concat_rows(parts);
}

}  // namespace svl::vision
