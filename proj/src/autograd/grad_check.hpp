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

#include <functional>
#include <vector>

#include "autograd/tensor.hpp"

namespace svl::ag {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  // Location of the worst coordinate.
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  // Largest relative error within each parameter, in argument order.
  std::vector<double> per_param;
};

// Compares tape gradients against central differences
// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every coordinate of every
// listed parameter. Relative error uses a max(|a|, |b|, 1e-8) denominator.
// Parameters are perturbed in place and restored afterwards; their
// requires_grad flags are forced on for the duration of the check.
// Throws InvalidArgument if f is not scalar-valued or not deterministic.
GradCheckResult grad_check_params(const std::function<Tensor()>& f, std::vector<Tensor> params,
                                  double eps = 1e-5);

// Single-input form: f is evaluated on copies of x.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps = 1e-5);

}  // namespace svl::ag
