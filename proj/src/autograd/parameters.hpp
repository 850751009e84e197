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

#include <map>
#include <set>
#include <string>
#include <vector>

#include "autograd/tensor.hpp"

namespace svl::ag {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

// Every trainable tensor of a model, filed under exactly one named group.
// Groups may be declared empty (e.g. "lora" on a model without adapters) so
// that stage selectors stay valid across ablations.
class ParameterRegistry {
 public:
  void declare_group(const std::string& group);
  void add(const std::string& group, std::string name, Tensor tensor);

  bool has_group(const std::string& group) const { return groups_.count(group) != 0; }
  const std::map<std::string, std::vector<NamedParam>>& groups() const { return groups_; }
  std::vector<std::string> group_names() const;
  const std::vector<NamedParam>& group(const std::string& name) const;

  std::vector<Tensor> trainable() const;
  std::size_t trainable_scalars() const;
  bool group_trainable(const std::string& group) const;

  // Drops every gradient slot; grad_stats is unavailable until backward().
  void zero_grad();
  void backward(Tape& tape, const Tensor& loss);
  bool backward_done() const { return backward_done_; }

  // Flat copy of every parameter value, in registry order.
  std::vector<std::vector<double>> snapshot() const;

 private:
  std::map<std::string, std::vector<NamedParam>> groups_;
  bool backward_done_ = false;
};

}  // namespace svl::ag
