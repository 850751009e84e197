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
#include "lora/lora.hpp"

#include <algorithm>

#include "autograd/ops.hpp"
#include "common/error.hpp"

namespace svl::lora {

void LoraConfig::validate() const {
  if (rank == 0) throw ConfigError("lora.rank must be positive");
  if (!(alpha >= 0.0)) throw ConfigError("lora.alpha must be non-negative");
  for (const auto& t : targets) {
    if (t != "q" && t != "k" && t != "v" && t != "o") {
      throw ConfigError("lora.targets: unknown projection '" + t + "' (expected q, k, v or o)");
    }
  }
}

LoraLinear make_lora(const ag::Tensor& base, std::size_t rank, double alpha, CounterRng& rng) {
  if (base.rank() != 2) throw ShapeError("lora base weight must be 2-D, got " + ag::shape_str(base.shape()));
  const std::size_t out = base.dim(0);
  const std::size_t in = base.dim(1);
  if (rank == 0 || rank > std::min(out, in)) {
    throw InvalidArgument("lora rank " + std::to_string(rank) + " must be in [1, " +
                          std::to_string(std::min(out, in)) + "]");
  }
  LoraLinear m;
  m.base = base;
  m.a = ag::Tensor::randn({rank, in}, 0.02, rng);
  m.b = ag::Tensor::zeros({out, rank});
  m.rank = rank;
  m.alpha = alpha;
  return m;
}

ag::Tensor lora_forward(const ag::Tensor& x, const LoraLinear& m) {
  if (x.rank() == 0 || x.shape().back() != m.in_features()) {
    throw ShapeError("lora_forward: input " + ag::shape_str(x.shape()) + " does not match in_features " +
                     std::to_string(m.in_features()));
  }
  const ag::Tensor base = ag::linear(x, m.base);
  const ag::Tensor update = ag::mul_scalar(ag::linear(ag::linear(x, m.a), m.b), m.scale());
  return ag::add(base, update);
}

ag::Tensor merge(const LoraLinear& m) {
  const std::size_t out = m.out_features();
  const std::size_t in = m.in_features();
  const auto w0 = m.base.data();
  const auto a = m.a.data();
  const auto b = m.b.data();
  std::vector<double> merged(w0.begin(), w0.end());
  const double s = m.scale();
  for (std::size_t i = 0; i < out; ++i) {
    for (std::size_t j = 0; j < in; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < m.rank; ++k) acc += b[i * m.rank + k] * a[k * in + j];
      merged[i * in + j] += s * acc;
    }
  }
  return ag::Tensor::from({out, in}, std::move(merged));
}

void mark_trainable(ag::ParameterRegistry& registry, const std::set<std::string>& selector) {
  std::string unknown;
  for (const auto& name : selector) {
    if (!registry.has_group(name)) unknown += (unknown.empty() ? "" : ", ") + name;
  }
  if (!unknown.empty()) throw InvalidArgument("unknown parameter group(s): " + unknown);
  for (const auto& [group, params] : registry.groups()) {
    const bool on = selector.count(group) != 0;
    for (const auto& p : params) {
      ag::Tensor t = p.tensor;
      t.set_requires_grad(on);
      if (!on) t.clear_grad();
    }
  }
}

}  // namespace svl::lora
