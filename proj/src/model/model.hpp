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
#include <map>
#include <utility>
#include <vector>

#include "autograd/parameters.hpp"
#include "autograd/tensor.hpp"
#include "blocks/blocks.hpp"
#include "lora/lora.hpp"
#include "taskspec/data.hpp"
#include "vision/vision.hpp"

namespace svl::model {

struct ModelConfig {
  blocks::BlockConfig block;
  std::size_t n_layers = 2;
  std::size_t max_seq = 256;
  lora::LoraConfig lora;
  vision::VisionConfig vision;
  // Overrides the std of W_q and W_k when positive; used to provoke logit
  // blow-up in ablations.
  double qk_init_std = 0.0;

  // Also forces vision.d_lm to match block.d_model.
  void validate() const;
};

// Toy multimodal language model: frozen patch encoder, trainable projection
// stack, token and position embeddings, a stack of stabilized blocks, a final
// LayerNorm and an LM head. Parameter groups: embeddings, attention, mlp,
// norms, lora, projection_stack, lm_head.
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ag::ParameterRegistry& registry() { return registry_; }
  const ag::ParameterRegistry& registry() const { return registry_; }
  const vision::VisionEncoder& encoder() const { return encoder_; }

  // Cached frozen-encoder output for a procedural image.
  const ag::Tensor& encoded_image(std::uint64_t image_seed, std::size_t resolution);

  // Mean next-token cross-entropy over the answer tokens of one sample.
  ag::Tensor sample_loss(const taskspec::TaskSample& sample, blocks::AttentionStats* stats = nullptr);
  // Mean of sample_loss over a batch.
  ag::Tensor batch_loss(const std::vector<taskspec::TaskSample>& batch, blocks::AttentionStats* stats = nullptr);

  // Logits [seq, vocab] for already spliced inputs.
  ag::Tensor logits(const ag::Tensor& inputs, blocks::AttentionStats* stats = nullptr) const;

  // Builds the spliced input rows and matching labels for one sample.
  std::pair<ag::Tensor, std::vector<int>> inputs(const taskspec::TaskSample& sample);

  const std::vector<blocks::BlockParams>& block_params() const { return blocks_; }
  const vision::ProjectionStack& projection() const { return stack_; }

 private:
  ModelConfig cfg_;
  vision::VisionEncoder encoder_;
  vision::ProjectionStack stack_;
  ag::Tensor tok_emb_, pos_emb_;
  std::vector<blocks::BlockParams> blocks_;
  ag::Tensor final_gamma_, final_beta_;
  ag::Tensor lm_head_;
  ag::ParameterRegistry registry_;
  std::map<std::pair<std::uint64_t, std::size_t>, ag::Tensor> image_cache_;
};

}  // namespace svl::model
