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
#include "curriculum/trainer.hpp"

#include <cmath>

#include "autograd/ops.hpp"
#include "common/error.hpp"
#include "lora/lora.hpp"
#include "taskspec/data.hpp"

namespace svl::curriculum {

namespace {

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::size_t t = 0;
};

}  // namespace

std::vector<taskspec::TaskSample> stage_pool(int stage_id, std::uint64_t data_seed, std::size_t n) {
  return taskspec::build_stage_batch(stage_id, data_seed + static_cast<std::uint64_t>(stage_id), n);
}

StageResult run_stage(model::Model& model, const std::vector<taskspec::TaskSample>& pool, const StageSpec& spec,
                      const TrainOptions& opts, const RecordSink& sink) {
  if (pool.empty()) throw InvalidArgument("run_stage: empty data stream");
  spec.validate();
  if (!(opts.lr_scale >= 0.0)) throw InvalidArgument("run_stage: lr_scale must be non-negative");
  auto& registry = model.registry();
  lora::mark_trainable(registry, spec.trainable_groups);
  const std::vector<ag::Tensor> params = registry.trainable();
  const std::size_t batch = opts.batch_size == 0 ? pool.size() : opts.batch_size;

  AdamState adam;
  if (opts.optimizer == Optimizer::kAdam) {
    for (const auto& p : params) {
      adam.m.emplace_back(p.numel(), 0.0);
      adam.v.emplace_back(p.numel(), 0.0);
    }
  }

  StageResult result;
  for (std::size_t step = 0; step < spec.total_steps(); ++step) {
    std::vector<taskspec::TaskSample> samples;
    for (std::size_t i = 0; i < batch; ++i) samples.push_back(pool[(step * batch + i) % pool.size()]);

    registry.zero_grad();
    blocks::AttentionStats stats;
    diagnostics::TrainRecord rec;
    rec.stage = spec.stage_id;
    rec.step = step;
    rec.lr = lr_at(spec.schedule, step) * opts.lr_scale;
    {
      ag::Tape tape;
      ag::Tensor loss;
      {
        ag::Tape::Scope scope(tape);
        loss = model.batch_loss(samples, &stats);
      }
      rec.loss = loss.item();
      registry.backward(tape, loss);
    }
    rec.groups = diagnostics::grad_stats(registry);
    rec.nonfinite = !std::isfinite(rec.loss);
    for (const auto& [_, group] : registry.groups()) {
      for (const auto& p : group) {
        if (!all_finite(p.tensor.data()) || (p.tensor.has_grad() && !all_finite(p.tensor.grad()))) {
          rec.nonfinite = true;
        }
      }
    }
    result.attention.merge(stats);
    result.records.push_back(rec);
    if (sink) sink(rec);
    if (rec.nonfinite) {
      result.halted = true;
      break;
    }

    if (opts.optimizer == Optimizer::kSgd) {
      for (const auto& p : params) {
        ag::Tensor t = p;
        const auto g = t.grad_or_zero();
        auto d = t.mutable_data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= rec.lr * g[i];
      }
    } else {
      ++adam.t;
      const double c1 = 1.0 - std::pow(opts.adam_beta1, static_cast<double>(adam.t));
      const double c2 = 1.0 - std::pow(opts.adam_beta2, static_cast<double>(adam.t));
      for (std::size_t k = 0; k < params.size(); ++k) {
        ag::Tensor t = params[k];
        const auto g = t.grad_or_zero();
        auto d = t.mutable_data();
        auto& m = adam.m[k];
        auto& v = adam.v[k];
        for (std::size_t i = 0; i < d.size(); ++i) {
          m[i] = opts.adam_beta1 * m[i] + (1.0 - opts.adam_beta1) * g[i];
          v[i] = opts.adam_beta2 * v[i] + (1.0 - opts.adam_beta2) * g[i] * g[i];
          d[i] -= rec.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opts.adam_eps);
        }
      }
    }

    if (opts.halt_on_vanish && result.records.size() >= opts.classify.window &&
        diagnostics::classify(result.records, opts.classify).outcome == diagnostics::Outcome::kGradientVanish) {
      result.halted = true;
      break;
    }
  }
  registry.zero_grad();
  result.verdict = diagnostics::classify(result.records, opts.classify);
  result.verdict.evidence.max_abs_logit = result.attention.max_abs_logit;
  result.verdict.evidence.max_weight = result.attention.max_weight;
  result.verdict.evidence.saturated = diagnostics::saturated(result.attention);
  return result;
}

}  // namespace svl::curriculum
