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
#include "autograd/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "common/error.hpp"

namespace svl::ag {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// C[m, n] += op(A) * op(B); A is stored [m, k] (or [k, m] when ta), B is [k, n]
// (or [n, k] when tb).
void gemm_acc(const double* a, bool ta, const double* b, bool tb, double* c, std::size_t m,
              std::size_t n, std::size_t k) {
  const auto M = static_cast<Eigen::Index>(m);
  const auto N = static_cast<Eigen::Index>(n);
  const auto K = static_cast<Eigen::Index>(k);
  MutMap cm(c, M, N);
  if (!ta && !tb) {
    cm.noalias() += ConstMap(a, M, K) * ConstMap(b, K, N);
  } else if (!ta && tb) {
    cm.noalias() += ConstMap(a, M, K) * ConstMap(b, N, K).transpose();
  } else if (ta && !tb) {
    cm.noalias() += ConstMap(a, K, M).transpose() * ConstMap(b, K, N);
  } else {
    cm.noalias() += ConstMap(a, K, M).transpose() * ConstMap(b, N, K).transpose();
  }
}

Tensor make(Shape shape, std::vector<double> data) { return Tensor::from(std::move(shape), std::move(data)); }

void record(const char* op, std::vector<Tensor> inputs, const Tensor& out, BackwardFn fn) {
  Tape::active()->record(op, std::move(inputs), out, std::move(fn));
}

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()));
}

// How a broadcast operand's index follows the output index.
struct Broadcast {
  enum Kind { kSame, kSuffix, kKeepLast } kind = kSame;
  std::size_t param = 1;
};

bool broadcast_into(const Shape& big, const Shape& small, Broadcast& out) {
  if (big == small) {
    out = {Broadcast::kSame, 1};
    return true;
  }
  if (small.size() <= big.size() && std::equal(small.rbegin(), small.rend(), big.rbegin())) {
    out = {Broadcast::kSuffix, numel_of(small)};
    return true;
  }
  if (!big.empty() && small.size() == big.size() && small.back() == 1 &&
      std::equal(small.begin(), small.end() - 1, big.begin())) {
    out = {Broadcast::kKeepLast, big.back()};
    return true;
  }
  return false;
}

// Walks a broadcast operand in step with the output without divisions.
struct Cursor {
  Broadcast map;
  std::size_t idx = 0, count = 0;
  void advance() {
    switch (map.kind) {
      case Broadcast::kSame:
        ++idx;
        break;
      case Broadcast::kSuffix:
        if (++idx == map.param) idx = 0;
        break;
      case Broadcast::kKeepLast:
        if (++count == map.param) {
          count = 0;
          ++idx;
        }
        break;
    }
  }
};

// Calls fn(i, ia, ib) for every output index i with the operand indices.
template <typename Fn>
void for_each_pair(std::size_t n, const Broadcast& ma, const Broadcast& mb, Fn&& fn) {
  if (ma.kind == Broadcast::kSame && mb.kind == Broadcast::kSame) {
    for (std::size_t i = 0; i < n; ++i) fn(i, i, i);
    return;
  }
  Cursor ca{ma}, cb{mb};
  for (std::size_t i = 0; i < n; ++i) {
    fn(i, ca.idx, cb.idx);
    ca.advance();
    cb.advance();
  }
}

template <typename Fwd, typename DA, typename DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, Fwd f, DA dfa, DB dfb) {
  Broadcast ma, mb;
  Shape out_shape;
  if (broadcast_into(a.shape(), b.shape(), mb)) {
    out_shape = a.shape();
  } else if (broadcast_into(b.shape(), a.shape(), ma)) {
    out_shape = b.shape();
  } else {
    mismatch(op, a, b);
  }
  const std::size_t n = numel_of(out_shape);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  std::vector<double> out(n);
  for_each_pair(n, ma, mb, [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = f(ad[ia], bd[ib]); });
  Tensor y = make(std::move(out_shape), std::move(out));
  if (should_record({&a, &b})) {
    record(op, {a, b}, y, [a, b, ma, mb, n, dfa, dfb](std::span<const double> g, GradSink& sink) {
      const double* ad = a.data().data();
      const double* bd = b.data().data();
      double* ga = sink.wants(0) ? sink.at(0).data() : nullptr;
      double* gb = sink.wants(1) ? sink.at(1).data() : nullptr;
      for_each_pair(n, ma, mb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
        if (ga) ga[ia] += g[i] * dfa(ad[ia], bd[ib]);
        if (gb) gb[ib] += g[i] * dfb(ad[ia], bd[ib]);
      });
    });
  }
  return y;
}

template <typename Fwd, typename Deriv>
Tensor unary(const char* op, const Tensor& x, Fwd f, Deriv df) {
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
  Tensor y = make(x.shape(), std::move(out));
  if (should_record({&x})) {
    // df receives (x, y) so rules like sqrt can reuse the forward value.
    record(op, {x}, y, [x, y, df](std::span<const double> g, GradSink& sink) {
      if (!sink.wants(0)) return;
      auto& gx = sink.at(0);
      const auto xd = x.data();
      const auto yd = y.data();
      for (std::size_t i = 0; i < xd.size(); ++i) gx[i] += g[i] * df(xd[i], yd[i]);
    });
  }
  return y;
}

std::size_t last_extent(const Tensor& x, const char* op) {
  if (x.rank() == 0) throw ShapeError(std::string(op) + ": needs at least one axis");
  return x.shape().back();
}

Shape keep_last(const Shape& s) {
  Shape out = s;
  out.back() = 1;
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) mismatch("matmul", a, b);
  const std::size_t k = a.shape().back();
  const std::size_t m = a.shape()[a.rank() - 2];
  Shape out_shape = a.shape();
  std::size_t batch = 1;
  bool shared_b = false;
  std::size_t n = 0;
  if (b.rank() == 2) {
    if (b.dim(0) != k) mismatch("matmul", a, b);
    n = b.dim(1);
    shared_b = true;
    // Fold leading axes of a into the row count.
    for (std::size_t i = 0; i + 2 < a.rank(); ++i) batch *= a.dim(i);
  } else if (b.rank() == 3 && a.rank() == 3 && a.dim(0) == b.dim(0) && b.dim(1) == k) {
    batch = a.dim(0);
    n = b.dim(2);
  } else {
    mismatch("matmul", a, b);
  }
  out_shape.back() = n;
  std::vector<double> out(batch * m * n, 0.0);
  if (shared_b) {
    gemm_acc(a.data().data(), false, b.data().data(), false, out.data(), batch * m, n, k);
  } else {
    for (std::size_t p = 0; p < batch; ++p) {
      gemm_acc(a.data().data() + p * m * k, false, b.data().data() + p * k * n, false,
               out.data() + p * m * n, m, n, k);
    }
  }
  Tensor y = make(std::move(out_shape), std::move(out));
  if (should_record({&a, &b})) {
    record("matmul", {a, b}, y, [a, b, batch, m, n, k, shared_b](std::span<const double> g, GradSink& sink) {
      if (shared_b) {
        // dA = dC B^T, dB = A^T dC over the folded rows.
        if (sink.wants(0)) gemm_acc(g.data(), false, b.data().data(), true, sink.at(0).data(), batch * m, k, n);
        if (sink.wants(1)) gemm_acc(a.data().data(), true, g.data(), false, sink.at(1).data(), k, n, batch * m);
        return;
      }
      for (std::size_t p = 0; p < batch; ++p) {
        const double* gp = g.data() + p * m * n;
        if (sink.wants(0)) {
          gemm_acc(gp, false, b.data().data() + p * k * n, true, sink.at(0).data() + p * m * k, m, k, n);
        }
        if (sink.wants(1)) {
          gemm_acc(a.data().data() + p * m * k, true, gp, false, sink.at(1).data() + p * k * n, k, n, m);
        }
      }
    });
  }
  return y;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) mismatch("matmul_nt", a, b);
  const std::size_t k = a.shape().back();
  const std::size_t m = a.shape()[a.rank() - 2];
  std::size_t batch = 1;
  std::size_t n = 0;
  bool shared_b = false;
  if (b.rank() == 2) {
    if (b.dim(1) != k) mismatch("matmul_nt", a, b);
    n = b.dim(0);
    shared_b = true;
    for (std::size_t i = 0; i + 2 < a.rank(); ++i) batch *= a.dim(i);
  } else if (b.rank() == 3 && a.rank() == 3 && a.dim(0) == b.dim(0) && b.dim(2) == k) {
    batch = a.dim(0);
    n = b.dim(1);
  } else {
    mismatch("matmul_nt", a, b);
  }
  Shape out_shape = a.shape();
  out_shape.back() = n;
  std::vector<double> out(batch * m * n, 0.0);
  if (shared_b) {
    gemm_acc(a.data().data(), false, b.data().data(), true, out.data(), batch * m, n, k);
  } else {
    for (std::size_t p = 0; p < batch; ++p) {
      gemm_acc(a.data().data() + p * m * k, false, b.data().data() + p * n * k, true,
               out.data() + p * m * n, m, n, k);
    }
  }
  Tensor y = make(std::move(out_shape), std::move(out));
  if (should_record({&a, &b})) {
    record("matmul_nt", {a, b}, y, [a, b, batch, m, n, k, shared_b](std::span<const double> g, GradSink& sink) {
      // C = A B^T: dA = dC B, dB = dC^T A.
      if (shared_b) {
        if (sink.wants(0)) gemm_acc(g.data(), false, b.data().data(), false, sink.at(0).data(), batch * m, k, n);
        if (sink.wants(1)) gemm_acc(g.data(), true, a.data().data(), false, sink.at(1).data(), n, k, batch * m);
        return;
      }
      for (std::size_t p = 0; p < batch; ++p) {
        const double* gp = g.data() + p * m * n;
        if (sink.wants(0)) {
          gemm_acc(gp, false, b.data().data() + p * n * k, false, sink.at(0).data() + p * m * k, m, k, n);
        }
        if (sink.wants(1)) {
          gemm_acc(gp, true, a.data().data() + p * m * k, false, sink.at(1).data() + p * n * k, n, k, m);
        }
      }
    });
  }
  return y;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || x.rank() < 1 || x.shape().back() != weight.dim(1)) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                     shape_str(weight.shape()));
  }
  const Tensor x2 = x.rank() == 1 ? reshape(x, {1, x.dim(0)}) : x;
  Tensor y = matmul_nt(x2, weight);
  if (bias.defined()) {
    if (bias.rank() != 1 || bias.dim(0) != weight.dim(0)) {
      throw ShapeError("linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                       shape_str(weight.shape()));
    }
    y = add(y, bias);
  }
  return x.rank() == 1 ? reshape(y, {weight.dim(0)}) : y;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary(
      "add_scalar", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double c) {
  return unary(
      "mul_scalar", x, [c](double v) { return v * c; }, [c](double, double) { return c; });
}

Tensor neg(const Tensor& x) { return mul_scalar(x, -1.0); }

Tensor sqrt(const Tensor& x) {
  return unary(
      "sqrt", x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

Tensor square(const Tensor& x) {
  return unary(
      "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor gelu(const Tensor& x) {
  static constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double kA = 0.044715;
  // 0.5 (1 + tanh(u)) written as the logistic function of 2u.
  static constexpr auto gate = [](double v) { return 1.0 / (1.0 + std::exp(-2.0 * kC * (v + kA * v * v * v))); };
  return unary(
      "gelu", x, [](double v) { return v * gate(v); },
      [](double v, double) {
        const double s = gate(v);
        return s + v * s * (1.0 - s) * 2.0 * kC * (1.0 + 3.0 * kA * v * v);
      });
}

Tensor sum(const Tensor& x) {
  const auto xd = x.data();
  double s = 0.0;
  for (double v : xd) s += v;
  Tensor y = Tensor::scalar(s);
  if (should_record({&x})) {
    record("sum", {x}, y, [](std::span<const double> g, GradSink& sink) {
      if (!sink.wants(0)) return;
      for (double& v : sink.at(0)) v += g[0];
    });
  }
  return y;
}

Tensor mean(const Tensor& x) { return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum_last(const Tensor& x) {
  const std::size_t d = last_extent(x, "sum_last");
  const std::size_t rows = x.numel() / d;
  const auto xd = x.data();
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < d; ++j) out[r] += xd[r * d + j];
  }
  Tensor y = make(keep_last(x.shape()), std::move(out));
  if (should_record({&x})) {
    record("sum_last", {x}, y, [rows, d](std::span<const double> g, GradSink& sink) {
      if (!sink.wants(0)) return;
      auto& gx = sink.at(0);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += g[r];
      }
    });
  }
  return y;
}

Tensor mean_last(const Tensor& x) {
  const std::size_t d = last_extent(x, "mean_last");
  return mul_scalar(sum_last(x), 1.0 / static_cast<double>(d));
}

Tensor var_last(const Tensor& x) {
  const std::size_t d = last_extent(x, "var_last");
  const std::size_t rows = x.numel() / d;
  const auto xd = x.data();
  std::vector<double> mu(rows, 0.0), out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < d; ++j) mu[r] += xd[r * d + j];
    mu[r] /= static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xd[r * d + j] - mu[r];
      out[r] += c * c;
    }
    out[r] /= static_cast<double>(d);
  }
  Tensor y = make(keep_last(x.shape()), std::move(out));
  if (should_record({&x})) {
    record("var_last", {x}, y, [x, rows, d, mu](std::span<const double> g, GradSink& sink) {
      if (!sink.wants(0)) return;
      auto& gx = sink.at(0);
      const auto xd = x.data();
      const double scale = 2.0 / static_cast<double>(d);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += g[r] * scale * (xd[r * d + j] - mu[r]);
      }
    });
  }
  return y;
}

Tensor softmax_last(const Tensor& x, bool causal) {
  const std::size_t n = last_extent(x, "softmax_last");
  if (causal && x.rank() < 2) throw ShapeError("softmax_last: causal mode needs (query, key) axes");
  const std::size_t queries = causal ? x.shape()[x.rank() - 2] : 1;
  const std::size_t rows = x.numel() / n;
  const auto xd = x.data();
  std::vector<double> out(x.numel(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    // Admissible keys for this row; all of them unless causal.
    const std::size_t width = causal ? std::min(n, r % queries + 1) : n;
    const double* in = xd.data() + r * n;
    double* o = out.data() + r * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < width; ++j) mx = std::max(mx, in[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      o[j] = std::exp(in[j] - mx);
      z += o[j];
    }
    for (std::size_t j = 0; j < width; ++j) o[j] /= z;
  }
  Tensor y = make(x.shape(), std::move(out));
  if (should_record({&x})) {
    record("softmax", {x}, y, [y, rows, n](std::span<const double> g, GradSink& sink) {
      if (!sink.wants(0)) return;
      auto& gx = sink.at(0);
      const auto yd = y.data();
      // Masked entries have y = 0, so they receive no gradient.
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * yd[r * n + j];
        for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += yd[r * n + j] * (g[r * n + j] - dot);
      }
    });
  }
  return y;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  if (logits.rank() != 2 || logits.dim(0) != targets.size()) {
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                     std::to_string(targets.size()) + " targets");
  }
  const std::size_t rows = logits.dim(0);
  const std::size_t v = logits.dim(1);
  std::size_t count = 0;
  for (int t : targets) {
    if (t < -1 || t >= static_cast<int>(v)) {
      throw InvalidArgument("cross_entropy: target id " + std::to_string(t) + " outside vocabulary of " +
                            std::to_string(v));
    }
    if (t >= 0) ++count;
  }
  if (count == 0) throw InvalidArgument("cross_entropy: no target rows");
  const auto ld = logits.data();
  std::vector<double> probs(rows * v, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] < 0) continue;
    const double* in = ld.data() + r * v;
    const double mx = *std::max_element(in, in + v);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += std::exp(in[j] - mx);
    const double lse = mx + std::log(z);
    total += lse - in[targets[r]];
    for (std::size_t j = 0; j < v; ++j) probs[r * v + j] = std::exp(in[j] - lse);
  }
  const double inv = 1.0 / static_cast<double>(count);
  Tensor y = Tensor::scalar(total * inv);
  if (should_record({&logits})) {
    std::vector<int> tg(targets.begin(), targets.end());
    record("cross_entropy", {logits}, y,
           [probs = std::move(probs), tg = std::move(tg), rows, v, inv](std::span<const double> g, GradSink& sink) {
             if (!sink.wants(0)) return;
             auto& gx = sink.at(0);
             for (std::size_t r = 0; r < rows; ++r) {
               if (tg[r] < 0) continue;
               for (std::size_t j = 0; j < v; ++j) {
                 const double onehot = static_cast<int>(j) == tg[r] ? 1.0 : 0.0;
                 gx[r * v + j] += g[0] * inv * (probs[r * v + j] - onehot);
               }
             }
           });
  }
  return y;
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be 2-D, got " + shape_str(table.shape()));
  if (ids.empty()) throw ShapeError("embedding: empty id list");
  const std::size_t vocab = table.dim(0);
  const std::size_t d = table.dim(1);
  const auto td = table.data();
  std::vector<double> out(ids.size() * d);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= vocab) {
      throw InvalidArgument("embedding: id " + std::to_string(ids[t]) + " outside table of " + std::to_string(vocab));
    }
    std::copy_n(td.data() + static_cast<std::size_t>(ids[t]) * d, d, out.data() + t * d);
  }
  Tensor y = make({ids.size(), d}, std::move(out));
  if (should_record({&table})) {
    std::vector<int> idv(ids.begin(), ids.end());
    record("embedding", {table}, y, [idv = std::move(idv), d](std::span<const double> g, GradSink& sink) {
      if (!sink.wants(0)) return;
      auto& gt = sink.at(0);
      for (std::size_t t = 0; t < idv.size(); ++t) {
        const std::size_t row = static_cast<std::size_t>(idv[t]) * d;
        for (std::size_t j = 0; j < d; ++j) gt[row + j] += g[t * d + j];
      }
    });
  }
  return y;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor y = make(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  if (should_record({&x})) {
    record("reshape", {x}, y, [](std::span<const double> g, GradSink& sink) {
      if (!sink.wants(0)) return;
      auto& gx = sink.at(0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return y;
}

Tensor transpose(const Tensor& x, std::size_t axis0, std::size_t axis1) {
  const std::size_t rank = x.rank();
  if (axis0 >= rank || axis1 >= rank) {
    throw ShapeError("transpose: axes out of range for " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  std::swap(out_shape[axis0], out_shape[axis1]);
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * x.dim(i);
  // Source offset for every destination element.
  std::vector<std::size_t> src(x.numel());
  std::vector<std::size_t> idx(rank, 0);
  std::vector<std::size_t> perm_strides = in_strides;
  std::swap(perm_strides[axis0], perm_strides[axis1]);
  for (std::size_t flat = 0; flat < src.size(); ++flat) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < rank; ++i) off += idx[i] * perm_strides[i];
    src[flat] = off;
    for (std::size_t i = rank; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  const auto xd = x.data();
  std::vector<double> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = xd[src[i]];
  Tensor y = make(std::move(out_shape), std::move(out));
  if (should_record({&x})) {
    record("transpose", {x}, y, [src = std::move(src)](std::span<const double> g, GradSink& sink) {
      if (!sink.wants(0)) return;
      auto& gx = sink.at(0);
      for (std::size_t i = 0; i < src.size(); ++i) gx[src[i]] += g[i];
    });
  }
  return y;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() == 0 || begin >= end || end > x.dim(0)) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for " + shape_str(x.shape()));
  }
  const std::size_t row = x.numel() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = end - begin;
  const auto xd = x.data();
  std::vector<double> out(xd.begin() + static_cast<std::ptrdiff_t>(begin * row),
                          xd.begin() + static_cast<std::ptrdiff_t>(end * row));
  Tensor y = make(std::move(shape), std::move(out));
  if (should_record({&x})) {
    record("slice_rows", {x}, y, [offset = begin * row](std::span<const double> g, GradSink& sink) {
      if (!sink.wants(0)) return;
      auto& gx = sink.at(0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[offset + i] += g[i];
    });
  }
  return y;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Shape& first = parts.front().shape();
  if (first.empty()) throw ShapeError("concat_rows: inputs need at least one axis");
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size() || !std::equal(first.begin() + 1, first.end(), p.shape().begin() + 1)) {
      mismatch("concat_rows", parts.front(), p);
    }
    rows += p.dim(0);
  }
  Shape shape = first;
  shape[0] = rows;
  std::vector<double> out;
  out.reserve(numel_of(shape));
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Tensor y = make(std::move(shape), std::move(out));

  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (Tape::active() != nullptr && any) {
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
      offsets.push_back(off);
      off += p.numel();
    }
    record("concat_rows", parts, y, [offsets = std::move(offsets)](std::span<const double> g, GradSink& sink) {
      for (std::size_t k = 0; k < offsets.size(); ++k) {
        if (!sink.wants(k)) continue;
        auto& gp = sink.at(k);
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offsets[k] + i];
      }
    });
  }
  return y;
}

}  // namespace svl::ag
