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

#include <span>
#include <vector>

#include "autograd/tensor.hpp"

// Differentiable tensor ops. Each op records a backward rule on the active tape
// when any input requires a gradient.
//
// Binary elementwise ops broadcast in two restricted ways only: the smaller
// operand's shape is a trailing suffix of the larger one (a rank-0 scalar is
// the empty suffix), or it equals the larger shape with the last extent set
// to 1 (the keep-last-axis form produced by the *_last reductions).
namespace svl::ag {

// a[..., m, k] x b[k, n] -> [..., m, n]; a[B, m, k] x b[B, k, n] -> [B, m, n].
Tensor matmul(const Tensor& a, const Tensor& b);
// a[m, k] x b[n, k]^T -> [m, n] (also batched over a shared leading extent).
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// x[..., in] W[out, in]^T + bias[out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = Tensor());

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);
Tensor neg(const Tensor& x);

Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
// tanh approximation.
Tensor gelu(const Tensor& x);

// Full reductions to a rank-0 tensor.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Reductions over the last axis keeping it with extent 1.
Tensor sum_last(const Tensor& x);
Tensor mean_last(const Tensor& x);
// Population variance over the last axis.
Tensor var_last(const Tensor& x);

// Max-subtracted softmax over the last axis. With causal set, the input's last
// two axes are (query, key) and keys after the query get zero weight, the same
// as adding -inf to those logits.
Tensor softmax_last(const Tensor& x, bool causal = false);

// Mean negative log-likelihood of targets under softmax(logits[T, V]). A target
// of -1 excludes that row.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

// Rows of table[V, d] selected by ids -> [ids.size(), d].
Tensor embedding(const Tensor& table, std::span<const int> ids);

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x, std::size_t axis0, std::size_t axis1);
// Rows [begin, end) along axis 0.
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_rows(const std::vector<Tensor>& parts);

}  // namespace svl::ag
