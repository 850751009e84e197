#include <cmath>
#include <cstring>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "autograd/grad_check.hpp"
#include "autograd/ops.hpp"
#include "autograd/tensor.hpp"
#include "common/error.hpp"
#include "doctest.h"

using namespace svl;
using ag::Tensor;

namespace {

// Loss that touches every output coordinate with a distinct weight.
Tensor weighted_sum(const Tensor& y, uint64_t seed) {
  CounterRng rng(seed);
  return ag::sum(ag::mul(y, Tensor::randn(y.shape(), 1.0, rng)));
}

Tensor uniform(ag::Shape shape, double lo, double hi, CounterRng& rng) {
  std::vector<double> d(ag::numel_of(shape));
  for (double& v : d) v = lo + (hi - lo) * rng.uniform();
  return Tensor::from(std::move(shape), std::move(d));
}

}  // namespace

TEST_CASE("matmul identity and hand-expanded product") {
  const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  const Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
  const Tensor c = ag::matmul(eye, b);
  CHECK(std::vector<double>(c.data().begin(), c.data().end()) == std::vector<double>{5, 6, 7, 8});

  const Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  // [1*5+2*7, 1*6+2*8; 3*5+4*7, 3*6+4*8]
  const Tensor d = ag::matmul(a, b);
  CHECK(std::vector<double>(d.data().begin(), d.data().end()) == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("matmul shape mismatch reports both shapes") {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({2, 3});
  try {
    ag::matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(2,3)") != std::string::npos);
    CHECK(msg.find("and (2,3)") != std::string::npos);
  }
}

TEST_CASE("matmul backward accumulates dA = dC B^T and dB = A^T dC") {
  ag::Tape tape;
  ag::Tape::Scope scope(tape);
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
  Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8}, true);
  tape.backward(ag::sum(ag::matmul(a, b)));
  // dC = ones: dA[i,k] = sum_j B[k,j], dB[k,j] = sum_i A[i,k].
  CHECK(std::vector<double>(a.grad().begin(), a.grad().end()) == std::vector<double>{11, 15, 11, 15});
  CHECK(std::vector<double>(b.grad().begin(), b.grad().end()) == std::vector<double>{4, 4, 6, 6});
}

TEST_CASE("softmax closed-form values") {
  const Tensor u = ag::softmax_last(Tensor::from({4}, {0, 0, 0, 0}));
  for (double v : u.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  // e^0 / (e^0 + e^{ln 3}) = 1/4.
  const Tensor p = ag::softmax_last(Tensor::from({2}, {0.0, std::log(3.0)}));
  CHECK(std::abs(p.at(0) - 0.25) <= 1e-15);
  CHECK(std::abs(p.at(1) - 0.75) <= 1e-15);
}

TEST_CASE("softmax slices sum to one and are shift invariant") {
  CounterRng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = Tensor::randn({5, 9}, 3.0, rng);
    const double c = 50.0 * rng.normal();
    const double k = rng.normal();
    const Tensor y = ag::softmax_last(x);
    const Tensor ys = ag::softmax_last(ag::add_scalar(x, c));
    for (std::size_t r = 0; r < 5; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < 9; ++j) {
        const double v = y.at(r * 9 + j);
        CHECK(v >= 0.0);
        s += v;
        CHECK(std::abs(v - ys.at(r * 9 + j)) <= 1e-12);
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
    // [c, c+k, c+2k] against [0, k, 2k].
    const Tensor base = ag::softmax_last(Tensor::from({3}, {0.0, k, 2 * k}));
    const Tensor shifted = ag::softmax_last(Tensor::from({3}, {c, c + k, c + 2 * k}));
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(base.at(j) - shifted.at(j)) <= 1e-12);
  }
}

TEST_CASE("causal softmax gives zero weight to later keys") {
  const Tensor x = Tensor::from({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Tensor y = ag::softmax_last(x, true);
  CHECK(y.at(0) == 1.0);
  CHECK(y.at(1) == 0.0);
  CHECK(y.at(2) == 0.0);
  CHECK(y.at(5) == 0.0);
  CHECK(y.at(3) + y.at(4) == doctest::Approx(1.0));
  CHECK(y.all_finite());
}

TEST_CASE("reductions") {
  const Tensor x = Tensor::from({2}, {1, 3});
  CHECK(ag::mean(x).item() == 2.0);
  // ((1-2)^2 + (3-2)^2) / 2
  CHECK(ag::var_last(x).item() == 1.0);
  const Tensor m = ag::mean_last(Tensor::from({2, 2}, {1, 3, 5, 9}));
  CHECK(m.shape() == ag::Shape{2, 1});
  CHECK(m.at(0) == 2.0);
  CHECK(m.at(1) == 7.0);
}

TEST_CASE("sqrt backward at 4 is 1/(2*2)") {
  ag::Tape tape;
  ag::Tape::Scope scope(tape);
  Tensor x = Tensor::from({1}, {4.0}, true);
  tape.backward(ag::sum(ag::sqrt(x)));
  CHECK(x.grad()[0] == 0.25);
}

TEST_CASE("backward rules on simple losses") {
  SUBCASE("sum gives ones") {
    ag::Tape tape;
    ag::Tape::Scope scope(tape);
    Tensor x = Tensor::from({3}, {4, -1, 2}, true);
    tape.backward(ag::sum(x));
    CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{1, 1, 1});
  }
  SUBCASE("sum of squares gives 2x") {
    ag::Tape tape;
    ag::Tape::Scope scope(tape);
    Tensor x = Tensor::from({3}, {1, 2, 3}, true);
    tape.backward(ag::sum(ag::mul(x, x)));
    CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{2, 4, 6});
  }
  SUBCASE("two losses without clearing accumulate") {
    ag::Tape tape;
    ag::Tape::Scope scope(tape);
    Tensor x = Tensor::from({3}, {1, 2, 3}, true);
    const Tensor l1 = ag::sum(ag::mul(x, x));
    const Tensor l2 = ag::sum(x);
    tape.backward(l1);
    tape.backward(l2);
    CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{3, 5, 7});
  }
  SUBCASE("non-scalar loss is rejected") {
    ag::Tape tape;
    ag::Tape::Scope scope(tape);
    Tensor x = Tensor::from({3}, {1, 2, 3}, true);
    CHECK_THROWS_AS(tape.backward(ag::mul_scalar(x, 2.0)), InvalidArgument);
  }
}

TEST_CASE("disconnected parameter keeps an exactly zero gradient") {
  ag::Tape tape;
  ag::Tape::Scope scope(tape);
  Tensor used = Tensor::from({2}, {1, 2}, true);
  Tensor unused = Tensor::from({2}, {3, 4}, true);
  // On the tape but not on the path to the loss.
  const Tensor side = ag::square(unused);
  tape.backward(ag::sum(used));
  CHECK(unused.has_grad());
  for (double g : unused.grad()) CHECK(g == 0.0);
  Tensor never = Tensor::from({2}, {5, 6}, true);
  for (double g : never.grad_or_zero()) CHECK(g == 0.0);
  CHECK(side.numel() == 2);
}

TEST_CASE("frozen inputs never get gradient slots") {
  ag::Tape tape;
  ag::Tape::Scope scope(tape);
  Tensor w = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor x = Tensor::from({1, 2}, {1, 1}, true);
  tape.backward(ag::sum(ag::linear(x, w)));
  CHECK_FALSE(w.has_grad());
  CHECK(x.has_grad());
}

TEST_CASE("broadcasting is limited to trailing and keep-last forms") {
  const Tensor a = Tensor::zeros({2, 3});
  CHECK(ag::add(a, Tensor::zeros({3})).shape() == ag::Shape{2, 3});
  CHECK(ag::add(a, Tensor::zeros({2, 1})).shape() == ag::Shape{2, 3});
  CHECK(ag::add(a, Tensor::scalar(1.0)).shape() == ag::Shape{2, 3});
  CHECK_THROWS_AS(ag::add(a, Tensor::zeros({2})), ShapeError);
  CHECK_THROWS_AS(ag::add(a, Tensor::zeros({1, 3})), ShapeError);
}

TEST_CASE("division by zero raises the non-finite flag") {
  const Tensor y = ag::div(Tensor::from({2}, {1, 2}), Tensor::from({2}, {0, 1}));
  CHECK(y.flagged_nonfinite());
  CHECK_FALSE(y.all_finite());
  CHECK_FALSE(ag::add_scalar(Tensor::from({1}, {1}), 1.0).flagged_nonfinite());
}

TEST_CASE("zero extents are rejected") {
  CHECK_THROWS_AS(Tensor::zeros({0, 4}), ShapeError);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
}

TEST_CASE("cross entropy matches the closed form") {
  const Tensor logits = Tensor::from({2, 2}, {0.0, std::log(3.0), 5.0, 1.0});
  const std::vector<int> targets{1, -1};
  CHECK(ag::cross_entropy(logits, targets).item() == doctest::Approx(-std::log(0.75)).epsilon(1e-14));
  const std::vector<int> none{-1, -1};
  CHECK_THROWS_AS(ag::cross_entropy(logits, none), InvalidArgument);
  const std::vector<int> bad{2, 0};
  CHECK_THROWS_AS(ag::cross_entropy(logits, bad), InvalidArgument);
}

TEST_CASE("grad_check on a linear function is exact") {
  CounterRng rng(3);
  const Tensor x = Tensor::randn({6}, 1.0, rng);
  CHECK(ag::grad_check([](const Tensor& t) { return ag::sum(t); }, x) <= 1e-10);
}

TEST_CASE("grad_check of sum(softmax(x) * v)") {
  CounterRng rng(11);
  const Tensor v = Tensor::randn({7}, 1.0, rng);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = Tensor::randn({7}, 1.0, rng);
    CHECK(ag::grad_check([&](const Tensor& t) { return ag::sum(ag::mul(ag::softmax_last(t), v)); }, x, 1e-5) <=
          1e-5);
  }
}

TEST_CASE("grad_check rejects non-deterministic functions") {
  CounterRng noise(5);
  const Tensor x = Tensor::from({2}, {1, 2});
  CHECK_THROWS_AS(ag::grad_check([&](const Tensor& t) { return ag::add_scalar(ag::sum(t), noise.uniform()); }, x),
                  InvalidArgument);
}

TEST_CASE("corrupted backward rule is caught by grad_check") {
  CounterRng rng(9);
  const Tensor x = Tensor::randn({5}, 1.0, rng);
  auto f = [](const Tensor& t) { return ag::sum(ag::square(t)); };
  CHECK(ag::grad_check(f, x) <= 1e-5);
  ag::testing::CorruptBackwardScope corrupt("square");
  CHECK(ag::grad_check(f, x) > 1e-2);
}

TEST_CASE("every differentiable op passes grad_check on seeded inputs") {
  using Fn = std::function<Tensor(const Tensor&)>;
  struct Case {
    const char* name;
    ag::Shape shape;
    double lo, hi;
    Fn f;
  };
  CounterRng wrng(21);
  const Tensor w34 = Tensor::randn({3, 4}, 1.0, wrng);
  const Tensor w54 = Tensor::randn({5, 4}, 1.0, wrng);
  const Tensor bias5 = Tensor::randn({5}, 1.0, wrng);
  const Tensor row4 = Tensor::randn({4}, 1.0, wrng);
  const Tensor keep = Tensor::from({3, 1}, {0.7, 1.3, 2.1});
  const Tensor other = Tensor::randn({3, 4}, 1.0, wrng);
  const Tensor batch = Tensor::randn({2, 4, 3}, 1.0, wrng);
  const std::vector<int> ids{2, 0, 2, 1};
  const std::vector<int> targets{3, -1, 0};

  const std::vector<Case> cases{
      {"add", {3, 4}, -2, 2, [&](const Tensor& x) { return ag::add(x, row4); }},
      {"add_keep_last", {3, 4}, -2, 2, [&](const Tensor& x) { return ag::add(x, keep); }},
      {"sub_rev", {4}, -2, 2, [&](const Tensor& x) { return ag::sub(other, x); }},
      {"mul", {3, 4}, -2, 2, [&](const Tensor& x) { return ag::mul(x, other); }},
      {"div_num", {3, 4}, -2, 2, [&](const Tensor& x) { return ag::div(x, keep); }},
      {"div_den", {3, 1}, 0.5, 2, [&](const Tensor& x) { return ag::div(other, x); }},
      {"add_scalar", {3}, -1, 1, [](const Tensor& x) { return ag::add_scalar(x, 0.3); }},
      {"mul_scalar", {3}, -1, 1, [](const Tensor& x) { return ag::mul_scalar(x, -1.7); }},
      {"sqrt", {5}, 0.5, 3, [](const Tensor& x) { return ag::sqrt(x); }},
      {"square", {5}, -2, 2, [](const Tensor& x) { return ag::square(x); }},
      {"exp", {5}, -2, 2, [](const Tensor& x) { return ag::exp(x); }},
      {"log", {5}, 0.5, 3, [](const Tensor& x) { return ag::log(x); }},
      {"gelu", {6}, -3, 3, [](const Tensor& x) { return ag::gelu(x); }},
      {"sum_last", {3, 4}, -2, 2, [](const Tensor& x) { return ag::sum_last(x); }},
      {"mean_last", {3, 4}, -2, 2, [](const Tensor& x) { return ag::mean_last(x); }},
      {"var_last", {3, 4}, -2, 2, [](const Tensor& x) { return ag::var_last(x); }},
      {"mean", {3, 4}, -2, 2, [](const Tensor& x) { return ag::mean(x); }},
      {"softmax", {3, 4}, -2, 2, [](const Tensor& x) { return ag::softmax_last(x); }},
      {"softmax_causal", {2, 4, 4}, -2, 2, [](const Tensor& x) { return ag::softmax_last(x, true); }},
      {"cross_entropy", {3, 5}, -2, 2, [&](const Tensor& x) { return ag::cross_entropy(x, targets); }},
      {"embedding", {3, 4}, -2, 2, [&](const Tensor& x) { return ag::embedding(x, ids); }},
      {"matmul_a", {2, 3}, -2, 2, [&](const Tensor& x) { return ag::matmul(x, w34); }},
      {"matmul_b", {3, 4}, -2, 2, [&](const Tensor& x) { return ag::matmul(other, ag::transpose(x, 0, 1)); }},
      {"matmul_batched", {2, 3, 4}, -2, 2, [&](const Tensor& x) { return ag::matmul(x, batch); }},
      {"matmul_nt", {2, 4, 3}, -2, 2, [&](const Tensor& x) { return ag::matmul_nt(x, batch); }},
      {"linear", {2, 4}, -2, 2, [&](const Tensor& x) { return ag::linear(x, w54, bias5); }},
      {"linear_weight", {5, 4}, -2, 2, [&](const Tensor& x) { return ag::linear(other, x, bias5); }},
      {"reshape", {3, 4}, -2, 2, [](const Tensor& x) { return ag::reshape(x, {2, 6}); }},
      {"transpose", {2, 3, 4}, -2, 2, [](const Tensor& x) { return ag::transpose(x, 0, 2); }},
      {"slice_rows", {4, 3}, -2, 2, [](const Tensor& x) { return ag::slice_rows(x, 1, 3); }},
      {"concat_rows", {2, 4}, -2, 2, [&](const Tensor& x) { return ag::concat_rows({other, x, x}); }},
  };

  for (const auto& c : cases) {
    CAPTURE(c.name);
    CounterRng rng = CounterRng(1234).fork(c.name);
    for (int trial = 0; trial < 10; ++trial) {
      const Tensor x = uniform(c.shape, c.lo, c.hi, rng);
      const uint64_t wseed = rng.next_u64();
      const double err = ag::grad_check([&](const Tensor& t) { return weighted_sum(c.f(t), wseed); }, x, 1e-5);
      CHECK(err <= 1e-5);
    }
  }
}

TEST_CASE("identical seeds and op sequences are bit-identical") {
  auto run = [] {
    CounterRng rng(99);
    Tensor w = Tensor::randn({4, 4}, 0.5, rng, true);
    const Tensor x = Tensor::randn({3, 4}, 1.0, rng);
    ag::Tape tape;
    ag::Tape::Scope scope(tape);
    const Tensor y = ag::softmax_last(ag::linear(ag::gelu(ag::linear(x, w)), w), true);
    tape.backward(ag::sum(ag::square(y)));
    std::vector<double> out(y.data().begin(), y.data().end());
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    return out;
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("named rng forks are independent and reproducible") {
  CounterRng root(42);
  CounterRng f1 = root.fork("encoder");
  CounterRng f2 = root.fork("encoder");
  CounterRng f3 = root.fork("resampler");
  const uint64_t a = f1.next_u64();
  CHECK(a == f2.next_u64());
  CHECK(a != f3.next_u64());
  for (int i = 0; i < 1000; ++i) {
    const double u = root.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}
