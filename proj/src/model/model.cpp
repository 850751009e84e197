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
#include "model/model.hpp"

#include <cmath>

#include "autograd/ops.hpp"
#include "common/error.hpp"

namespace svl::model {

using ag::Tensor;

void ModelConfig::validate() const {
  block.validate();
  lora.validate();
  vision.validate();
  if (n_layers == 0) throw ConfigError("model.n_layers must be at least 1");
  if (max_seq == 0) throw ConfigError("model.max_seq must be positive");
  if (vision.d_lm != block.d_model) {
    throw ConfigError("vision.d_lm (" + std::to_string(vision.d_lm) + ") must equal model.d_model (" +
                      std::to_string(block.d_model) + ")");
  }
  if (qk_init_std < 0.0) throw ConfigError("model.qk_init_std must be non-negative");
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  encoder_ = vision::VisionEncoder::create(cfg_.vision);
  const CounterRng root(seed);
  CounterRng proj_rng = root.fork("projection");
  stack_ = vision::init_projection(cfg_.vision, proj_rng);

  const std::size_t d = cfg_.block.d_model, vocab = taskspec::default_vocab().size();
  CounterRng emb_rng = root.fork("embeddings");
  tok_emb_ = Tensor::randn({vocab, d}, 0.5, emb_rng);
  pos_emb_ = Tensor::randn({cfg_.max_seq, d}, 0.1, emb_rng);
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    CounterRng brng = root.fork("block", l);
    blocks_.push_back(blocks::init_block(cfg_.block, cfg_.lora, brng));
    if (cfg_.qk_init_std > 0.0) {
      CounterRng qrng = brng.fork("qk_init");
      blocks_.back().wq = Tensor::randn({d, d}, cfg_.qk_init_std, qrng);
      blocks_.back().wk = Tensor::randn({d, d}, cfg_.qk_init_std, qrng);
      if (blocks_.back().lora_q) blocks_.back().lora_q->base = blocks_.back().wq;
      if (blocks_.back().lora_k) blocks_.back().lora_k->base = blocks_.back().wk;
    }
  }
  final_gamma_ = Tensor::full({d}, 1.0);
  final_beta_ = Tensor::zeros({d});
  CounterRng head_rng = root.fork("lm_head");
  lm_head_ = Tensor::randn({vocab, d}, 1.0 / std::sqrt(static_cast<double>(d)), head_rng);

  for (const char* g : {"embeddings", "attention", "mlp", "norms", "lora", "projection_stack", "lm_head"}) {
    registry_.declare_group(g);
  }
  registry_.add("embeddings", "tok_emb", tok_emb_);
  registry_.add("embeddings", "pos_emb", pos_emb_);
  vision::register_projection(registry_, stack_);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    blocks::register_block(registry_, "block" + std::to_string(l) + ".", blocks_[l]);
  }
  registry_.add("norms", "final_ln.gamma", final_gamma_);
  registry_.add("norms", "final_ln.beta", final_beta_);
  registry_.add("lm_head", "lm_head", lm_head_);
}

const Tensor& Model::encoded_image(std::uint64_t image_seed, std::size_t resolution) {
  const auto key = std::make_pair(image_seed, resolution);
  auto it = image_cache_.find(key);
  if (it == image_cache_.end()) {
    const Tensor img = vision::render_scene(vision::make_scene(image_seed), resolution);
    it = image_cache_.emplace(key, encoder_.encode(img)).first;
  }
  return it->second;
}

std::pair<Tensor, std::vector<int>> Model::inputs(const taskspec::TaskSample& sample) {
  const auto tok = taskspec::tokenize(sample);
  Tensor x = ag::embedding(tok_emb_, tok.ids);
  std::vector<int> labels = tok.labels;
  if (sample.image_seed) {
    const auto res = static_cast<std::size_t>(sample.width);
    const Tensor img = vision::project_to_lm(vision::resample(encoded_image(*sample.image_seed, res), stack_), stack_);
    x = vision::splice(x, img, tok.image_pos, 1);
    labels.insert(labels.begin() + static_cast<std::ptrdiff_t>(tok.image_pos), img.dim(0) - 1, -1);
  }
  if (x.dim(0) > cfg_.max_seq) {
    throw InvalidArgument("sequence of " + std::to_string(x.dim(0)) + " positions exceeds model.max_seq " +
                          std::to_string(cfg_.max_seq));
  }
  return {ag::add(x, ag::slice_rows(pos_emb_, 0, x.dim(0))), std::move(labels)};
}

Tensor Model::logits(const Tensor& inputs, blocks::AttentionStats* stats) const {
  Tensor h = inputs;
  for (const auto& b : blocks_) h = blocks::block_forward(h, cfg_.block, b, stats);
  h = blocks::input_layer_norm(h, final_gamma_, final_beta_, cfg_.block.eps_ln);
  return ag::linear(h, lm_head_);
}

Tensor Model::sample_loss(const taskspec::TaskSample& sample, blocks::AttentionStats* stats) {
  auto [x, labels] = inputs(sample);
  return ag::cross_entropy(logits(x, stats), labels);
}

Tensor Model::batch_loss(const std::vector<taskspec::TaskSample>& batch, blocks::AttentionStats* stats) {
  if (batch.empty()) throw InvalidArgument("batch_loss: empty batch");
  Tensor total = sample_loss(batch.front(), stats);
  for (std::size_t i = 1; i < batch.size(); ++i) total = ag::add(total, sample_loss(batch[i], stats));
  return ag::mul_scalar(total, 1.0 / static_cast<double>(batch.size()));
}

}  // namespace svl::model
