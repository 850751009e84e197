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
#include "autograd/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>

#include "common/error.hpp"

namespace svl::ag {

namespace {
thread_local Tape* g_active_tape = nullptr;
thread_local std::string g_corrupt_op;
thread_local double g_corrupt_factor = 1.0;
}  // namespace

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (numel_of(shape) != data.size()) {
    throw ShapeError("shape " + shape_str(shape) + " does not match " + std::to_string(data.size()) +
                     " elements");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  for (double v : impl->data) {
    if (!std::isfinite(v)) {
      impl->nonfinite = true;
      break;
    }
  }
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = numel_of(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

Tensor Tensor::randn(Shape shape, double stddev, CounterRng& rng, bool requires_grad) {
  std::vector<double> data(numel_of(shape));
  for (double& v : data) v = stddev * rng.normal();
  return from(std::move(shape), std::move(data), requires_grad);
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

std::vector<double> Tensor::grad_or_zero() const {
  if (impl_->has_grad) return impl_->grad;
  return std::vector<double>(numel(), 0.0);
}

void Tensor::clear_grad() {
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
  impl_->has_grad = false;
}

bool Tensor::all_finite() const {
  for (double v : impl_->data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::clone() const { return from(shape(), impl_->data, false); }

Tape::~Tape() { clear(); }

void Tape::record(const char* op, std::vector<Tensor> inputs, const Tensor& output, BackwardFn fn) {
  Node node{op, {}, output.impl(), std::move(fn)};
  node.inputs.reserve(inputs.size());
  for (auto& t : inputs) node.inputs.push_back(t.impl());
  output.impl()->is_leaf = false;
  output.impl()->requires_grad = true;
  nodes_.push_back(std::move(node));
}

void Tape::clear() { nodes_.clear(); }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw InvalidArgument("backward needs a scalar loss, got shape " +
                          (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  std::unordered_map<const TensorImpl*, std::vector<double>> grads;
  grads[loss.impl().get()] = {1.0};

  GradSink sink;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& node = *it;
    auto found = grads.find(node.output.get());
    if (found == grads.end()) continue;
    std::vector<double> upstream = std::move(found->second);
    grads.erase(found);

    if (!g_corrupt_op.empty() && g_corrupt_op == node.op) {
      for (double& g : upstream) g *= g_corrupt_factor;
    }

    sink.bufs_.assign(node.inputs.size(), nullptr);
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      TensorImpl* in = node.inputs[i].get();
      if (!in->requires_grad) continue;
      auto& buf = grads[in];
      if (buf.empty()) buf.assign(in->data.size(), 0.0);
      sink.bufs_[i] = &buf;
    }
    node.fn(upstream, sink);
  }

  // Every requires_grad leaf on the tape gets a slot, reached or not.
  for (const Node& node : nodes_) {
    for (const auto& in : node.inputs) {
      if (!in->is_leaf || !in->requires_grad) continue;
      if (!in->has_grad) {
        in->grad.assign(in->data.size(), 0.0);
        in->has_grad = true;
      }
    }
  }
  for (auto& [impl, g] : grads) {
    auto* leaf = const_cast<TensorImpl*>(impl);
    if (!leaf->is_leaf || !leaf->requires_grad) continue;
    if (!leaf->has_grad) {
      leaf->grad.assign(leaf->data.size(), 0.0);
      leaf->has_grad = true;
    }
    for (std::size_t i = 0; i < g.size(); ++i) leaf->grad[i] += g[i];
  }
}

Tape* Tape::active() { return g_active_tape; }

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

namespace testing {
CorruptBackwardScope::CorruptBackwardScope(std::string op, double factor)
    : previous_op_(g_corrupt_op), previous_factor_(g_corrupt_factor) {
  g_corrupt_op = std::move(op);
  g_corrupt_factor = factor;
}
CorruptBackwardScope::~CorruptBackwardScope() {
  g_corrupt_op = previous_op_;
  g_corrupt_factor = previous_factor_;
}
}  // namespace testing

}  // namespace svl::ag
