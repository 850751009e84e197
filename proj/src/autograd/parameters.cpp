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
#include "autograd/parameters.hpp"

#include "common/error.hpp"

namespace svl::ag {

void ParameterRegistry::declare_group(const std::string& group) { groups_[group]; }

void ParameterRegistry::add(const std::string& group, std::string name, Tensor tensor) {
  for (const auto& [g, params] : groups_) {
    for (const auto& p : params) {
      if (p.tensor.same_as(tensor)) {
        throw InvalidArgument("parameter " + name + " already registered in group " + g);
      }
    }
  }
  groups_[group].push_back({std::move(name), std::move(tensor)});
}

std::vector<std::string> ParameterRegistry::group_names() const {
  std::vector<std::string> names;
  for (const auto& [g, _] : groups_) names.push_back(g);
  return names;
}

const std::vector<NamedParam>& ParameterRegistry::group(const std::string& name) const {
  auto it = groups_.find(name);
  if (it == groups_.end()) throw InvalidArgument("unknown parameter group: " + name);
  return it->second;
}

std::vector<Tensor> ParameterRegistry::trainable() const {
  std::vector<Tensor> out;
  for (const auto& [_, params] : groups_) {
    for (const auto& p : params) {
      if (p.tensor.requires_grad()) out.push_back(p.tensor);
    }
  }
  return out;
}

std::size_t ParameterRegistry::trainable_scalars() const {
  std::size_t n = 0;
  for (const auto& t : trainable()) n += t.numel();
  return n;
}

bool ParameterRegistry::group_trainable(const std::string& group) const {
  for (const auto& p : this->group(group)) {
    if (p.tensor.requires_grad()) return true;
  }
  return false;
}

void ParameterRegistry::zero_grad() {
  for (auto& [_, params] : groups_) {
    for (auto& p : params) p.tensor.clear_grad();
  }
  backward_done_ = false;
}

void ParameterRegistry::backward(Tape& tape, const Tensor& loss) {
  tape.backward(loss);
  backward_done_ = true;
}

std::vector<std::vector<double>> ParameterRegistry::snapshot() const {
  std::vector<std::vector<double>> out;
  for (const auto& [_, params] : groups_) {
    for (const auto& p : params) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  }
  return out;
}

}  // namespace svl::ag
