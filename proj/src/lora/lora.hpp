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

#include <set>
#include <string>
#include <vector>

#include "autograd/parameters.hpp"
#include "autograd/rng.hpp"
#include "autograd/tensor.hpp"

namespace svl::lora {

struct LoraConfig {
  std::size_t rank = 8;
  double alpha = 16.0;
  // Attention projections carrying adapters: any of "q", "k", "v", "o".
  std::set<std::string> targets{"q", "v"};

  void validate() const;
};

// Rank-r bypass W0 + (alpha / r) B A alongside a frozen base weight.
struct LoraLinear {
  ag::Tensor base;  // [out, in], never trained through the adapter
  ag::Tensor a;     // [r, in]
  ag::Tensor b;     // [out, r], zero at construction
  std::size_t rank = 0;
  double alpha = 0.0;

  std::size_t in_features() const { return base.dim(1); }
  std::size_t out_features() const { return base.dim(0); }
  double scale() const { return alpha / static_cast<double>(rank); }
};

// A is drawn N(0, 0.02^2) from rng; B starts at zero so the adapted map equals
// the base map. Throws InvalidArgument if rank > min(out, in) or rank == 0.
LoraLinear make_lora(const ag::Tensor& base, std::size_t rank, double alpha, CounterRng& rng);

// x W0^T + (alpha / r) (x A^T) B^T.
ag::Tensor lora_forward(const ag::Tensor& x, const LoraLinear& m);

// W0 + (alpha / r) B A, computed outside any tape.
ag::Tensor merge(const LoraLinear& m);

// Exactly the selected groups become trainable; every other parameter is
// frozen. Unknown names are rejected together in one message.
void mark_trainable(ag::ParameterRegistry& registry, const std::set<std::string>& selector);

}  // namespace svl::lora
