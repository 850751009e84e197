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
#include "autograd/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "common/error.hpp"

namespace svl::ag {

namespace {
double eval_scalar(const std::function<Tensor()>& f) {
  const Tensor y = f();
  if (!y.defined() || y.numel() != 1) throw InvalidArgument("grad_check: function must be scalar-valued");
  return y.item();
}
}  // namespace

GradCheckResult grad_check_params(const std::function<Tensor()>& f, std::vector<Tensor> params, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("grad_check: eps must be positive");
  std::vector<bool> saved_flags;
  for (auto& p : params) {
    saved_flags.push_back(p.requires_grad());
    p.set_requires_grad(true);
    p.clear_grad();
  }

  // Determinism probe: two untaped evaluations must agree bit for bit.
  const double first = eval_scalar(f);
  const double second = eval_scalar(f);
  if (std::memcmp(&first, &second, sizeof(double)) != 0) {
    throw InvalidArgument("grad_check: function is not deterministic");
  }

  {
    Tape tape;
    Tape::Scope scope(tape);
    const Tensor y = f();
    if (y.numel() != 1) throw InvalidArgument("grad_check: function must be scalar-valued");
    tape.backward(y);
  }

  GradCheckResult result;
  result.per_param.assign(params.size(), 0.0);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    const std::vector<double> analytic = p.grad_or_zero();
    auto data = p.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + eps;
      const double up = eval_scalar(f);
      data[i] = orig - eps;
      const double down = eval_scalar(f);
      data[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      result.per_param[k] = std::max(result.per_param[k], rel);
      if (rel > result.max_relative_error || result.coordinates == 0) {
        result.max_relative_error = rel;
        result.worst_param = k;
        result.worst_index = i;
        result.worst_analytic = analytic[i];
        result.worst_numeric = numeric;
      }
      ++result.coordinates;
    }
  }

  for (std::size_t k = 0; k < params.size(); ++k) {
    params[k].clear_grad();
    params[k].set_requires_grad(saved_flags[k]);
  }
  return result;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  Tensor probe = x.clone();
  return grad_check_params([&] { return f(probe); }, {probe}, eps).max_relative_error;
}

}  // namespace svl::ag
