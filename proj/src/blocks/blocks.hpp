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

#include <optional>
#include <string>

#include "autograd/parameters.hpp"
#include "autograd/rng.hpp"
#include "autograd/tensor.hpp"
#include "lora/lora.hpp"

namespace svl::blocks {

// Per-block switches. The four booleans are the ablation axis: each one
// removes a single stabilizing component.
struct BlockConfig {
  std::size_t d_model = 128;
  std::size_t n_heads = 4;
  std::size_t d_mlp = 512;
  bool use_input_layernorm = true;
  bool use_rms_postnorm = true;
  bool use_qk_norm = true;
  bool use_lora = true;
  // Learnable gain on the post-attention RMSNorm. Off: the normalization is
  // the plain x / rms(x) form.
  bool rms_gain = false;
  double eps_ln = 1e-5;
  double eps_rms = 1e-6;

  void validate() const;
  std::size_t head_dim() const { return d_model / n_heads; }
};

// gamma * (x - mean) / sqrt(var + eps) + beta over the last axis, with the
// population variance.
ag::Tensor input_layer_norm(const ag::Tensor& x, const ag::Tensor& gamma, const ag::Tensor& beta, double eps);

// x / sqrt(mean(x^2) + eps) over the last axis, optionally times a gain.
ag::Tensor rms_norm(const ag::Tensor& x, double eps, const ag::Tensor& gain = ag::Tensor());

// Per-head LayerNorm parameters applied to queries and keys, each [heads, d_k].
struct QkNormParams {
  ag::Tensor gamma_q, beta_q, gamma_k, beta_k;
  double eps = 1e-5;
};

// Observed pre-softmax logit magnitudes and attention peaks.
struct AttentionStats {
  double max_abs_logit = 0.0;
  // Largest softmax weight among rows with at least two admissible keys.
  double max_weight = 0.0;

  void merge(const AttentionStats& other);
};

struct AttentionOptions {
  const QkNormParams* qk_norm = nullptr;  // null: plain scaled dot product
  bool causal = true;
  ag::Tensor bias;  // optional additive [heads, seq, seq] logit bias
  AttentionStats* stats = nullptr;
};

// softmax(LN(Q) LN(K)^T / sqrt(d_k) + mask) V for Q, K, V of shape
// [heads, seq, d_k]; LN is dropped when opts.qk_norm is null.
ag::Tensor qk_norm_attention(const ag::Tensor& q, const ag::Tensor& k, const ag::Tensor& v,
                             const AttentionOptions& opts);

struct BlockParams {
  ag::Tensor ln1_gamma, ln1_beta;  // [d_model]
  ag::Tensor ln2_gamma, ln2_beta;  // [d_model]
  ag::Tensor wq, wk, wv, wo;       // [d_model, d_model]
  QkNormParams qk;                 // [heads, d_k] each
  ag::Tensor rms_gain;             // [d_model] when BlockConfig::rms_gain
  ag::Tensor w1, b1;               // [d_mlp, d_model], [d_mlp]
  ag::Tensor w2, b2;               // [d_model, d_mlp], [d_model]
  std::optional<lora::LoraLinear> lora_q, lora_k, lora_v, lora_o;
};

// Gaussian(0.02) weights, zero biases, unit gains and zero shifts. Adapters
// are attached to the configured targets when cfg.use_lora is set.
BlockParams init_block(const BlockConfig& cfg, const lora::LoraConfig& lora_cfg, CounterRng& rng);

// Files the block's tensors into the groups "norms", "attention", "mlp" and
// "lora", prefixing names with prefix.
void register_block(ag::ParameterRegistry& registry, const std::string& prefix, const BlockParams& params);

// h = x + RMSNorm(MHA(LN1(x))); out = h + MLP(LN2(h)). A disabled
// normalization is the identity; MHA drops QK normalization when disabled.
ag::Tensor block_forward(const ag::Tensor& x, const BlockConfig& cfg, const BlockParams& params,
                         AttentionStats* stats = nullptr);

}  // namespace svl::blocks
