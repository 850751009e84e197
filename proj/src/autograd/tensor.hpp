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

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "autograd/rng.hpp"

namespace svl::ag {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool has_grad = false;
  bool requires_grad = false;
  // False for tensors produced by a recorded op.
  bool is_leaf = true;
  // Set when an op produced a NaN/Inf; lets diagnostics see it without a scan.
  bool nonfinite = false;
};

// Shared handle to a dense row-major array. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(Shape shape, double stddev, CounterRng& rng, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  // Only valid on leaves that are not referenced by a live tape.
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double at(std::size_t flat) const { return impl_->data.at(flat); }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const { return impl_->is_leaf; }

  bool has_grad() const { return impl_->has_grad; }
  std::span<const double> grad() const { return impl_->grad; }
  // Gradient with an absent slot read as zeros.
  std::vector<double> grad_or_zero() const;
  void clear_grad();

  bool flagged_nonfinite() const { return impl_->nonfinite; }
  bool all_finite() const;

  // Deep copy with no gradient state.
  Tensor clone() const;

  bool same_as(const Tensor& other) const { return impl_ == other.impl_; }
  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Backward rules receive the upstream gradient and write input gradients
// through a sink that only allocates buffers for inputs that need them.
class GradSink {
 public:
  bool wants(std::size_t input) const { return bufs_[input] != nullptr; }
  std::vector<double>& at(std::size_t input) { return *bufs_[input]; }

 private:
  friend class Tape;
  std::vector<std::vector<double>*> bufs_;
};

using BackwardFn = std::function<void(std::span<const double> upstream, GradSink& sink)>;

// Ordered record of differentiable ops. One tape per training step; ops made
// while no tape is active are not recorded.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  void record(const char* op, std::vector<Tensor> inputs, const Tensor& output, BackwardFn fn);
  // Accumulates d(loss)/d(leaf) into every requires_grad leaf on the tape.
  void backward(const Tensor& loss);
  void clear();
  std::size_t size() const { return nodes_.size(); }

  static Tape* active();

  // Makes a tape the active recorder for the current thread.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

 private:
  struct Node {
    const char* op;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
};

// True when at least one input needs a gradient and a tape is recording.
bool should_record(std::initializer_list<const Tensor*> inputs);

namespace testing {
// Scales the upstream gradient seen by every backward rule of the named op by
// the given factor while in scope. Used to prove gradient checks can fail.
class CorruptBackwardScope {
 public:
  CorruptBackwardScope(std::string op, double factor = 1.5);
  ~CorruptBackwardScope();
  CorruptBackwardScope(const CorruptBackwardScope&) = delete;
  CorruptBackwardScope& operator=(const CorruptBackwardScope&) = delete;

 private:
  std::string previous_op_;
  double previous_factor_;
};
}  // namespace testing

}  // namespace svl::ag
