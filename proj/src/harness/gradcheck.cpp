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
#include "harness/gradcheck.hpp"

#include <cstdio>
#include <memory>
#include <optional>

#include "autograd/grad_check.hpp"
#include "autograd/ops.hpp"
#include "blocks/blocks.hpp"
#include "lora/lora.hpp"
#include "model/model.hpp"
#include "taskspec/data.hpp"
#include "vision/vision.hpp"

namespace svl::harness {

namespace {

using ag::Tensor;

struct Named {
  std::string name;
  Tensor tensor;
};

bool structurally_null(const std::string& name) {
  return name.size() >= 6 && name.compare(name.size() - 6, 6, "beta_k") == 0;
}

void jitter(std::vector<Named>& params, CounterRng& rng, double scale) {
  for (auto& p : params) {
    for (double& v : p.tensor.mutable_data()) v += scale * rng.normal();
  }
}

GradcheckEntry run(const std::string& component, const std::function<Tensor()>& loss, const std::vector<Named>& named) {
  std::vector<Tensor> params;
  for (const auto& p : named) params.push_back(p.tensor);
  const auto res = ag::grad_check_params(loss, params, 1e-5);
  GradcheckEntry e;
  e.component = component;
  e.max_relative_error = res.max_relative_error;
  e.coordinates = res.coordinates;
  for (std::size_t k = 0; k < named.size(); ++k) {
    if (structurally_null(named[k].name)) {
      e.has_null = true;
    } else {
      e.excluding_null = std::max(e.excluding_null, res.per_param[k]);
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s[%zu] analytic=%.3e numeric=%.3e", named[res.worst_param].name.c_str(),
                res.worst_index, res.worst_analytic, res.worst_numeric);
  e.worst = buf;
  return e;
}

blocks::BlockConfig small_block() {
  blocks::BlockConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.d_mlp = 16;
  cfg.rms_gain = true;
  return cfg;
}

std::vector<Named> block_named(const blocks::BlockParams& p) {
  ag::ParameterRegistry reg;
  blocks::register_block(reg, "", p);
  std::vector<Named> out;
  for (const auto& [g, ps] : reg.groups()) {
    for (const auto& np : ps) out.push_back({np.name, np.tensor});
  }
  return out;
}

vision::VisionConfig small_vision(std::size_t max_res) {
  vision::VisionConfig cfg;
  cfg.patch_size = 16;
  cfg.max_resolution = max_res;
  cfg.d_vis = 8;
  cfg.enc_heads = 2;
  cfg.n_query = 3;
  cfg.d_q = 6;
  cfg.d_mid = 5;
  cfg.d_lm = 8;
  return cfg;
}

std::vector<Named> stack_named(const vision::ProjectionStack& s) {
  return {{"proj.queries", s.queries}, {"proj.rq", s.rq}, {"proj.rk", s.rk}, {"proj.rv", s.rv},
          {"proj.w1", s.w1},           {"proj.b1", s.b1}, {"proj.w2", s.w2}, {"proj.b2", s.b2}};
}

}  // namespace

std::vector<GradcheckEntry> gradcheck_battery(const std::string& corrupt_op) {
  std::optional<ag::testing::CorruptBackwardScope> corrupt;
  if (!corrupt_op.empty()) corrupt.emplace(corrupt_op);
  std::vector<GradcheckEntry> out;
  CounterRng root(0x9c);

  {
    CounterRng rng = root.fork("input_layer_norm", 0);
    Tensor x = Tensor::randn({4, 6}, 1.0, rng);
    Tensor gamma = Tensor::randn({6}, 0.5, rng);
    Tensor beta = Tensor::randn({6}, 0.5, rng);
    const Tensor w = Tensor::randn({4, 6}, 1.0, rng);
    out.push_back(run("input_layer_norm",
                      [&] { return ag::sum(ag::mul(blocks::input_layer_norm(x, gamma, beta, 1e-5), w)); },
                      {{"x", x}, {"gamma", gamma}, {"beta", beta}}));
  }
  {
    CounterRng rng = root.fork("rms_norm", 0);
    Tensor x = Tensor::randn({4, 6}, 1.0, rng);
    Tensor gain = Tensor::randn({6}, 0.5, rng);
    const Tensor w = Tensor::randn({4, 6}, 1.0, rng);
    out.push_back(run("rms_norm", [&] { return ag::sum(ag::mul(blocks::rms_norm(x, 1e-6, gain), w)); },
                      {{"x", x}, {"gain", gain}}));
  }
  {
    CounterRng rng = root.fork("qk_norm_attention", 0);
    const std::size_t h = 2, s = 4, dk = 3;
    Tensor q = Tensor::randn({h, s, dk}, 1.0, rng);
    Tensor k = Tensor::randn({h, s, dk}, 1.0, rng);
    Tensor v = Tensor::randn({h, s, dk}, 1.0, rng);
    blocks::QkNormParams qk{Tensor::randn({h, dk}, 0.5, rng), Tensor::randn({h, dk}, 0.5, rng),
                            Tensor::randn({h, dk}, 0.5, rng), Tensor::randn({h, dk}, 0.5, rng), 1e-5};
    const Tensor w = Tensor::randn({h, s, dk}, 1.0, rng);
    blocks::AttentionOptions opts;
    opts.qk_norm = &qk;
    out.push_back(run("qk_norm_attention", [&] { return ag::sum(ag::mul(blocks::qk_norm_attention(q, k, v, opts), w)); },
                      {{"q", q},
                       {"k", k},
                       {"v", v},
                       {"gamma_q", qk.gamma_q},
                       {"beta_q", qk.beta_q},
                       {"gamma_k", qk.gamma_k},
                       {"beta_k", qk.beta_k}}));
  }
  {
    CounterRng rng = root.fork("block_forward", 0);
    const auto cfg = small_block();
    const lora::LoraConfig lcfg{.rank = 2, .alpha = 4.0, .targets = {"q", "k", "v", "o"}};
    blocks::BlockParams p = blocks::init_block(cfg, lcfg, rng);
    auto named = block_named(p);
    jitter(named, rng, 0.3);
    Tensor x = Tensor::randn({5, cfg.d_model}, 1.0, rng);
    const Tensor w = Tensor::randn({5, cfg.d_model}, 1.0, rng);
    named.push_back({"x", x});
    out.push_back(run("block_forward", [&] { return ag::sum(ag::mul(blocks::block_forward(x, cfg, p), w)); }, named));
  }
  {
    CounterRng rng = root.fork("lora_forward", 0);
    const Tensor base = Tensor::randn({5, 4}, 1.0, rng);
    auto m = lora::make_lora(base, 2, 4.0, rng);
    for (double& v : m.b.mutable_data()) v = rng.normal();
    Tensor x = Tensor::randn({3, 4}, 1.0, rng);
    const Tensor w = Tensor::randn({3, 5}, 1.0, rng);
    out.push_back(run("lora_forward", [&] { return ag::sum(ag::mul(lora::lora_forward(x, m), w)); },
                      {{"x", x}, {"lora.a", m.a}, {"lora.b", m.b}}));
  }
  const auto vcfg = small_vision(64);
  const auto enc = vision::VisionEncoder::create(vcfg);
  {
    CounterRng rng = root.fork("resample", 0);
    const auto stack = vision::init_projection(vcfg, rng);
    Tensor tokens = enc.encode(vision::render_scene(vision::make_scene(3), 64));
    const Tensor w = Tensor::randn({vcfg.n_query, vcfg.d_q}, 1.0, rng);
    auto named = stack_named(stack);
    named.resize(4);
    named.push_back({"tokens", tokens});
    out.push_back(run("resample", [&] { return ag::sum(ag::mul(vision::resample(tokens, stack), w)); }, named));
  }
  {
    CounterRng rng = root.fork("project_to_lm", 0);
    const auto stack = vision::init_projection(vcfg, rng);
    Tensor q_out = Tensor::randn({vcfg.n_query, vcfg.d_q}, 1.0, rng);
    const Tensor w = Tensor::randn({vcfg.n_query, vcfg.d_lm}, 1.0, rng);
    auto all = stack_named(stack);
    std::vector<Named> named(all.begin() + 4, all.end());
    named.push_back({"q_out", q_out});
    out.push_back(run("project_to_lm", [&] { return ag::sum(ag::mul(vision::project_to_lm(q_out, stack), w)); }, named));
  }
  {
    CounterRng rng = root.fork("end_to_end", 0);
    model::ModelConfig mcfg;
    mcfg.block = small_block();
    mcfg.n_layers = 1;
    mcfg.max_seq = 96;
    mcfg.lora = {.rank = 2, .alpha = 4.0, .targets = {"q", "v"}};
    mcfg.vision = small_vision(224);
    auto m = std::make_unique<model::Model>(mcfg, 3);
    const auto sample = taskspec::build_stage_batch(3, 11, 1).front();
    std::vector<Named> named;
    for (const auto& [g, ps] : m->registry().groups()) {
      if (g == "embeddings") continue;
      for (const auto& np : ps) named.push_back({np.name, np.tensor});
    }
    jitter(named, rng, 0.2);
    m->encoded_image(*sample.image_seed, sample.width);
    out.push_back(run("end_to_end", [&] { return m->sample_loss(sample); }, named));
  }
  return out;
}

}  // namespace svl::harness
