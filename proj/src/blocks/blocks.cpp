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
#include "blocks/blocks.hpp"

#include <algorithm>
#include <cmath>

#include "autograd/ops.hpp"
#include "common/error.hpp"

namespace svl::blocks {

using ag::Tensor;

void BlockConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || d_mlp == 0) throw ConfigError("block widths must be positive");
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                      std::to_string(n_heads) + ")");
  }
  if (!(eps_ln > 0.0)) throw ConfigError("eps_ln must be positive");
  if (!(eps_rms > 0.0)) throw ConfigError("eps_rms must be positive");
}

namespace {

Tensor standardize(const Tensor& x, double eps) {
  const Tensor centered = ag::sub(x, ag::mean_last(x));
  const Tensor denom = ag::sqrt(ag::add_scalar(ag::var_last(x), eps));
  return ag::div(centered, denom);
}

// x [.., heads, d_k] normalized per head with gamma/beta [heads, d_k].
Tensor head_layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  return ag::add(ag::mul(standardize(x, eps), gamma), beta);
}

void collect_stats(const Tensor& logits, const Tensor& weights, bool causal, AttentionStats& stats) {
  const std::size_t keys = logits.shape().back();
  const std::size_t queries = logits.shape()[logits.rank() - 2];
  const std::size_t rows = logits.numel() / keys;
  const auto ld = logits.data();
  const auto wd = weights.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t width = causal ? std::min(keys, r % queries + 1) : keys;
    for (std::size_t j = 0; j < width; ++j) {
      stats.max_abs_logit = std::max(stats.max_abs_logit, std::abs(ld[r * keys + j]));
      if (width >= 2) stats.max_weight = std::max(stats.max_weight, wd[r * keys + j]);
    }
  }
}

Tensor project(const Tensor& x, const Tensor& w, const std::optional<lora::LoraLinear>& adapter, bool use_lora) {
  if (use_lora && adapter) return lora::lora_forward(x, *adapter);
  return ag::linear(x, w);
}

}  // namespace

void AttentionStats::merge(const AttentionStats& other) {
  max_abs_logit = std::max(max_abs_logit, other.max_abs_logit);
  max_weight = std::max(max_weight, other.max_weight);
}

Tensor input_layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0) throw ShapeError("input_layer_norm: input needs a feature axis");
  const std::size_t d = x.shape().back();
  if (gamma.shape() != ag::Shape{d} || beta.shape() != ag::Shape{d}) {
    throw ShapeError("input_layer_norm: affine parameters must have shape (" + std::to_string(d) + ")");
  }
  return ag::add(ag::mul(standardize(x, eps), gamma), beta);
}

Tensor rms_norm(const Tensor& x, double eps, const Tensor& gain) {
  if (x.rank() == 0) throw ShapeError("rms_norm: input needs a feature axis");
  const Tensor rms = ag::sqrt(ag::add_scalar(ag::mean_last(ag::square(x)), eps));
  Tensor y = ag::div(x, rms);
  if (gain.defined()) y = ag::mul(y, gain);
  return y;
}

Tensor qk_norm_attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionOptions& opts) {
  if (q.rank() != 3 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw ShapeError("attention: Q, K, V must share a [heads, seq, d_k] shape, got " + ag::shape_str(q.shape()) +
                     ", " + ag::shape_str(k.shape()) + ", " + ag::shape_str(v.shape()));
  }
  const std::size_t heads = q.dim(0);
  const std::size_t seq = q.dim(1);
  const std::size_t dk = q.dim(2);

  Tensor qn = q;
  Tensor kn = k;
  if (opts.qk_norm != nullptr) {
    const QkNormParams& p = *opts.qk_norm;
    const ag::Shape want{heads, dk};
    if (p.gamma_q.shape() != want || p.beta_q.shape() != want || p.gamma_k.shape() != want ||
        p.beta_k.shape() != want) {
      throw ShapeError("attention: QK-norm parameters must have shape " + ag::shape_str(want));
    }
    // [seq, heads, d_k] makes the per-head parameters a trailing suffix.
    qn = ag::transpose(head_layer_norm(ag::transpose(q, 0, 1), p.gamma_q, p.beta_q, p.eps), 0, 1);
    kn = ag::transpose(head_layer_norm(ag::transpose(k, 0, 1), p.gamma_k, p.beta_k, p.eps), 0, 1);
  }

  Tensor logits = ag::mul_scalar(ag::matmul_nt(qn, kn), 1.0 / std::sqrt(static_cast<double>(dk)));
  if (opts.bias.defined()) {
    if (opts.bias.shape() != ag::Shape{heads, seq, seq}) {
      throw ShapeError("attention: bias " + ag::shape_str(opts.bias.shape()) + " does not match logits " +
                       ag::shape_str(logits.shape()));
    }
    logits = ag::add(logits, opts.bias);
  }
  const Tensor weights = ag::softmax_last(logits, opts.causal);
  if (opts.stats != nullptr) collect_stats(logits, weights, opts.causal, *opts.stats);
  return ag::matmul(weights, v);
}

BlockParams init_block(const BlockConfig& cfg, const lora::LoraConfig& lora_cfg, CounterRng& rng) {
  cfg.validate();
  const std::size_t d = cfg.d_model;
  const std::size_t dk = cfg.head_dim();
  BlockParams p;
  p.ln1_gamma = Tensor::full({d}, 1.0);
  p.ln1_beta = Tensor::zeros({d});
  p.ln2_gamma = Tensor::full({d}, 1.0);
  p.ln2_beta = Tensor::zeros({d});
  p.wq = Tensor::randn({d, d}, 0.02, rng);
  p.wk = Tensor::randn({d, d}, 0.02, rng);
  p.wv = Tensor::randn({d, d}, 0.02, rng);
  p.wo = Tensor::randn({d, d}, 0.02, rng);
  p.qk.gamma_q = Tensor::full({cfg.n_heads, dk}, 1.0);
  p.qk.beta_q = Tensor::zeros({cfg.n_heads, dk});
  p.qk.gamma_k = Tensor::full({cfg.n_heads, dk}, 1.0);
  p.qk.beta_k = Tensor::zeros({cfg.n_heads, dk});
  p.qk.eps = cfg.eps_ln;
  if (cfg.rms_gain) p.rms_gain = Tensor::full({d}, 1.0);
  p.w1 = Tensor::randn({cfg.d_mlp, d}, 0.02, rng);
  p.b1 = Tensor::zeros({cfg.d_mlp});
  p.w2 = Tensor::randn({d, cfg.d_mlp}, 0.02, rng);
  p.b2 = Tensor::zeros({d});
  if (cfg.use_lora) {
    lora_cfg.validate();
    CounterRng lrng = rng.fork("lora");
    auto attach = [&](const char* name, const Tensor& w, std::optional<lora::LoraLinear>& slot) {
      if (lora_cfg.targets.count(name)) slot = lora::make_lora(w, lora_cfg.rank, lora_cfg.alpha, lrng);
    };
    attach("q", p.wq, p.lora_q);
    attach("k", p.wk, p.lora_k);
    attach("v", p.wv, p.lora_v);
    attach("o", p.wo, p.lora_o);
  }
  return p;
}

void register_block(ag::ParameterRegistry& registry, const std::string& prefix, const BlockParams& p) {
  for (const char* g : {"norms", "attention", "mlp", "lora"}) registry.declare_group(g);
  registry.add("norms", prefix + "ln1.gamma", p.ln1_gamma);
  registry.add("norms", prefix + "ln1.beta", p.ln1_beta);
  registry.add("norms", prefix + "ln2.gamma", p.ln2_gamma);
  registry.add("norms", prefix + "ln2.beta", p.ln2_beta);
  registry.add("norms", prefix + "qk.gamma_q", p.qk.gamma_q);
  registry.add("norms", prefix + "qk.beta_q", p.qk.beta_q);
  registry.add("norms", prefix + "qk.gamma_k", p.qk.gamma_k);
  registry.add("norms", prefix + "qk.beta_k", p.qk.beta_k);
  if (p.rms_gain.defined()) registry.add("norms", prefix + "rms.gain", p.rms_gain);
  registry.add("attention", prefix + "wq", p.wq);
  registry.add("attention", prefix + "wk", p.wk);
  registry.add("attention", prefix + "wv", p.wv);
  registry.add("attention", prefix + "wo", p.wo);
  registry.add("mlp", prefix + "w1", p.w1);
  registry.add("mlp", prefix + "b1", p.b1);
  registry.add("mlp", prefix + "w2", p.w2);
  registry.add("mlp", prefix + "b2", p.b2);
  auto add_lora = [&](const char* name, const std::optional<lora::LoraLinear>& m) {
    if (!m) return;
    registry.add("lora", prefix + "lora_" + name + ".a", m->a);
    registry.add("lora", prefix + "lora_" + name + ".b", m->b);
  };
  add_lora("q", p.lora_q);
  add_lora("k", p.lora_k);
  add_lora("v", p.lora_v);
  add_lora("o", p.lora_o);
}

Tensor block_forward(const Tensor& x, const BlockConfig& cfg, const BlockParams& p, AttentionStats* stats) {
  if (x.rank() != 2 || x.dim(1) != cfg.d_model) {
    throw ShapeError("block_forward: input " + ag::shape_str(x.shape()) + " does not have width " +
                     std::to_string(cfg.d_model));
  }
  const std::size_t seq = x.dim(0);
  const std::size_t heads = cfg.n_heads;
  const std::size_t dk = cfg.head_dim();

  const Tensor a = cfg.use_input_layernorm ? input_layer_norm(x, p.ln1_gamma, p.ln1_beta, cfg.eps_ln) : x;
  auto split_heads = [&](const Tensor& t) { return ag::transpose(ag::reshape(t, {seq, heads, dk}), 0, 1); };
  const Tensor q = split_heads(project(a, p.wq, p.lora_q, cfg.use_lora));
  const Tensor k = split_heads(project(a, p.wk, p.lora_k, cfg.use_lora));
  const Tensor v = split_heads(project(a, p.wv, p.lora_v, cfg.use_lora));

  AttentionOptions opts;
  opts.qk_norm = cfg.use_qk_norm ? &p.qk : nullptr;
  opts.causal = true;
  opts.stats = stats;
  const Tensor heads_out = qk_norm_attention(q, k, v, opts);
  const Tensor merged = ag::reshape(ag::transpose(heads_out, 0, 1), {seq, cfg.d_model});
  Tensor attn = project(merged, p.wo, p.lora_o, cfg.use_lora);
  if (cfg.use_rms_postnorm) attn = rms_norm(attn, cfg.eps_rms, p.rms_gain);
  const Tensor h = ag::add(x, attn);

  const Tensor b = cfg.use_input_layernorm ? input_layer_norm(h, p.ln2_gamma, p.ln2_beta, cfg.eps_ln) : h;
  const Tensor mlp = ag::linear(ag::gelu(ag::linear(b, p.w1, p.b1)), p.w2, p.b2);
  return ag::add(h, mlp);
}

}  // namespace svl::blocks
