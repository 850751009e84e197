#include <cmath>
#include <vector>

#include "autograd/grad_check.hpp"
#include "autograd/ops.hpp"
#include "blocks/blocks.hpp"
#include "common/error.hpp"
#include "doctest.h"

using namespace svl;
using ag::Tensor;
using blocks::AttentionOptions;
using blocks::AttentionStats;
using blocks::BlockConfig;

namespace {

blocks::QkNormParams unit_qk(std::size_t heads, std::size_t dk, double eps) {
  return {Tensor::full({heads, dk}, 1.0), Tensor::zeros({heads, dk}), Tensor::full({heads, dk}, 1.0),
          Tensor::zeros({heads, dk}), eps};
}

BlockConfig small_config() {
  BlockConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.d_mlp = 16;
  return cfg;
}

// Pushes norm parameters away from their identity initialization so their
// gradients are generic.
void jitter(const ag::ParameterRegistry& reg, CounterRng& rng) {
  for (const auto& [group, params] : reg.groups()) {
    for (const auto& p : params) {
      Tensor t = p.tensor;
      for (double& v : t.mutable_data()) v += (group == "attention" || group == "mlp" ? 0.3 : 0.2) * rng.normal();
    }
  }
}

}  // namespace

TEST_CASE("input_layer_norm hand cases") {
  const Tensor one = Tensor::full({4}, 1.0);
  const Tensor zero = Tensor::zeros({4});
  const Tensor c = blocks::input_layer_norm(Tensor::from({4}, {5, 5, 5, 5}), one, zero, 1e-5);
  for (double v : c.data()) CHECK(v == 0.0);

  // mean 2, population variance 1.
  const Tensor x = Tensor::from({2}, {1, 3});
  const Tensor y = blocks::input_layer_norm(x, Tensor::full({2}, 1.0), Tensor::zeros({2}), 1e-12);
  CHECK(y.at(0) == doctest::Approx(-1.0).epsilon(1e-11));
  CHECK(y.at(1) == doctest::Approx(1.0).epsilon(1e-11));
  const Tensor z = blocks::input_layer_norm(x, Tensor::full({2}, 2.0), Tensor::full({2}, 1.0), 1e-12);
  CHECK(z.at(0) == doctest::Approx(-1.0).epsilon(1e-11));
  CHECK(z.at(1) == doctest::Approx(3.0).epsilon(1e-11));
  CHECK_THROWS_AS(blocks::input_layer_norm(x, Tensor::full({3}, 1.0), Tensor::zeros({3}), 1e-5), ShapeError);
}

TEST_CASE("rms_norm hand cases") {
  const Tensor a = blocks::rms_norm(Tensor::from({4}, {3, 3, 3, 3}), 1e-15);
  for (double v : a.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  const Tensor z = blocks::rms_norm(Tensor::zeros({3}), 1e-6);
  for (double v : z.data()) CHECK(v == 0.0);
  // mean square (9 + 16) / 2 = 12.5.
  const Tensor b = blocks::rms_norm(Tensor::from({2}, {3, 4}), 1e-15);
  CHECK(b.at(0) == doctest::Approx(3.0 / std::sqrt(12.5)).epsilon(1e-12));
  CHECK(b.at(1) == doctest::Approx(4.0 / std::sqrt(12.5)).epsilon(1e-12));
  CHECK(b.at(0) == doctest::Approx(0.8485).epsilon(1e-4));
  CHECK(b.at(1) == doctest::Approx(1.1314).epsilon(1e-4));
}

TEST_CASE("normalization output properties") {
  CounterRng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const double scale = std::pow(10.0, -3.0 + 0.3 * trial);
    const Tensor x = Tensor::randn({6, 16}, scale, rng);
    const Tensor r = blocks::rms_norm(x, 1e-6);
    for (std::size_t row = 0; row < 6; ++row) {
      double ms = 0.0;
      for (std::size_t j = 0; j < 16; ++j) ms += r.at(row * 16 + j) * r.at(row * 16 + j);
      CHECK(std::sqrt(ms / 16.0) <= 1.0 + 1e-6);
    }
    const Tensor big = Tensor::randn({6, 16}, 1.0 + trial, rng);
    const Tensor y = blocks::input_layer_norm(big, Tensor::full({16}, 1.0), Tensor::zeros({16}), 1e-5);
    for (std::size_t row = 0; row < 6; ++row) {
      double m = 0.0, v = 0.0;
      for (std::size_t j = 0; j < 16; ++j) m += y.at(row * 16 + j);
      m /= 16.0;
      for (std::size_t j = 0; j < 16; ++j) v += (y.at(row * 16 + j) - m) * (y.at(row * 16 + j) - m);
      v /= 16.0;
      CHECK(std::abs(m) <= 1e-6);
      CHECK(std::abs(v - 1.0) <= 1e-4);
    }
  }
}

TEST_CASE("attention over a single position returns V") {
  CounterRng rng(2);
  const Tensor q = Tensor::randn({2, 1, 4}, 1.0, rng);
  const Tensor k = Tensor::randn({2, 1, 4}, 1.0, rng);
  const Tensor v = Tensor::randn({2, 1, 4}, 1.0, rng);
  const auto qk = unit_qk(2, 4, 1e-5);
  for (const blocks::QkNormParams* norm : {&qk, static_cast<const blocks::QkNormParams*>(nullptr)}) {
    AttentionOptions opts;
    opts.qk_norm = norm;
    const Tensor out = blocks::qk_norm_attention(q, k, v, opts);
    for (std::size_t i = 0; i < v.numel(); ++i) CHECK(out.at(i) == v.at(i));
  }
  CHECK_THROWS_AS(Tensor::zeros({2, 0, 4}), ShapeError);
  CHECK_THROWS_AS(blocks::qk_norm_attention(q, Tensor::zeros({2, 2, 4}), v, AttentionOptions{}), ShapeError);
}

TEST_CASE("identical keys receive identical weights") {
  CounterRng rng(4);
  const std::size_t seq = 4, dk = 3;
  Tensor k = Tensor::randn({1, seq, dk}, 1.0, rng);
  auto kd = k.mutable_data();
  for (std::size_t j = 0; j < dk; ++j) kd[dk + j] = kd[j];  // key 1 == key 0
  const Tensor q = Tensor::randn({1, seq, dk}, 1.0, rng);
  const Tensor v = Tensor::randn({1, seq, dk}, 1.0, rng);
  const auto qk = unit_qk(1, dk, 1e-5);
  AttentionOptions opts;
  opts.qk_norm = &qk;
  opts.causal = false;
  // Swapping the values of two keys changes nothing iff their weights agree.
  Tensor swapped = v.clone();
  auto sd = swapped.mutable_data();
  for (std::size_t j = 0; j < dk; ++j) std::swap(sd[j], sd[dk + j]);
  const Tensor o1 = blocks::qk_norm_attention(q, k, v, opts);
  const Tensor o2 = blocks::qk_norm_attention(q, k, swapped, opts);
  for (std::size_t i = 0; i < o1.numel(); ++i) CHECK(o1.at(i) == doctest::Approx(o2.at(i)).epsilon(1e-14));
}

TEST_CASE("QK-norm bounds every logit by sqrt(d_k)") {
  CounterRng rng(31);
  const std::size_t heads = 2, seq = 6, dk = 8;
  const auto qk = unit_qk(heads, dk, 1e-12);
  for (int trial = 0; trial < 200; ++trial) {
    const double scale = std::pow(10.0, rng.uniform() * 6.0 - 2.0);
    const Tensor q = Tensor::randn({heads, seq, dk}, scale, rng);
    const Tensor k = Tensor::randn({heads, seq, dk}, scale, rng);
    AttentionStats stats;
    AttentionOptions opts;
    opts.qk_norm = &qk;
    opts.causal = false;
    opts.stats = &stats;
    blocks::qk_norm_attention(q, k, q, opts);
    CHECK(stats.max_abs_logit <= std::sqrt(static_cast<double>(dk)) + 1e-6);
  }
}

TEST_CASE("without QK-norm the max logit grows like the square of the input scale") {
  CounterRng rng(37);
  const std::size_t heads = 2, seq = 6, dk = 8;
  const Tensor q0 = Tensor::randn({heads, seq, dk}, 1.0, rng);
  const Tensor k0 = Tensor::randn({heads, seq, dk}, 1.0, rng);
  std::vector<double> xs, ys;
  for (double s : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
    AttentionStats stats;
    AttentionOptions opts;
    opts.causal = false;
    opts.stats = &stats;
    blocks::qk_norm_attention(ag::mul_scalar(q0, s), ag::mul_scalar(k0, s), q0, opts);
    xs.push_back(std::log(s));
    ys.push_back(std::log(stats.max_abs_logit));
  }
  // Least-squares slope on the log-log points.
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= xs.size();
  my /= ys.size();
  double num = 0, den = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    num += (xs[i] - mx) * (ys[i] - my);
    den += (xs[i] - mx) * (xs[i] - mx);
  }
  const double slope = num / den;
  CHECK(std::abs(slope - 2.0) <= 0.2);
}

TEST_CASE("block with every switch off and zero weights is a pure residual") {
  BlockConfig cfg = small_config();
  cfg.use_input_layernorm = cfg.use_rms_postnorm = cfg.use_qk_norm = cfg.use_lora = false;
  CounterRng rng(1);
  blocks::BlockParams p = blocks::init_block(cfg, lora::LoraConfig{}, rng);
  for (Tensor* t : {&p.wq, &p.wk, &p.wv, &p.wo, &p.w1, &p.w2}) {
    for (double& v : t->mutable_data()) v = 0.0;
  }
  const Tensor x = Tensor::randn({5, 8}, 1.0, rng);
  const Tensor y = blocks::block_forward(x, cfg, p);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.at(i) == x.at(i));
}

TEST_CASE("block output shape follows the input") {
  BlockConfig cfg = small_config();
  CounterRng rng(8);
  const auto p = blocks::init_block(cfg, lora::LoraConfig{.rank = 2}, rng);
  for (std::size_t seq : {1u, 7u, 64u}) {
    const Tensor x = Tensor::randn({seq, 8}, 1.0, rng);
    CHECK(blocks::block_forward(x, cfg, p).shape() == ag::Shape{seq, 8});
  }
  CHECK_THROWS_AS(blocks::block_forward(Tensor::zeros({3, 6}), cfg, p), ShapeError);
}

TEST_CASE("config validation") {
  BlockConfig cfg = small_config();
  cfg.n_heads = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.eps_rms = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("every switch combination gives finite outputs and gradients") {
  for (unsigned mask = 0; mask < 16; ++mask) {
    BlockConfig cfg = small_config();
    cfg.use_input_layernorm = mask & 1u;
    cfg.use_rms_postnorm = mask & 2u;
    cfg.use_qk_norm = mask & 4u;
    cfg.use_lora = mask & 8u;
    CAPTURE(mask);
    CounterRng rng(100 + mask);
    const auto p = blocks::init_block(cfg, lora::LoraConfig{.rank = 2}, rng);
    ag::ParameterRegistry reg;
    blocks::register_block(reg, "b.", p);
    for (const auto& name : reg.group_names()) {
      for (const auto& np : reg.group(name)) {
        Tensor t = np.tensor;
        t.set_requires_grad(true);
      }
    }
    const Tensor x = Tensor::randn({6, 8}, 1.0, rng);
    ag::Tape tape;
    ag::Tape::Scope scope(tape);
    const Tensor y = blocks::block_forward(x, cfg, p);
    CHECK(y.all_finite());
    reg.backward(tape, ag::sum(ag::square(y)));
    for (const auto& t : reg.trainable()) {
      for (double g : t.grad_or_zero()) CHECK(std::isfinite(g));
    }
  }
}

TEST_CASE("block_forward passes grad_check over its parameters") {
  for (std::uint64_t seed : {55u, 56u, 57u}) {
    CAPTURE(seed);
    BlockConfig cfg = small_config();
    cfg.rms_gain = true;
    CounterRng rng(seed);
    lora::LoraConfig lcfg{.rank = 2, .alpha = 4.0, .targets = {"q", "k", "v", "o"}};
    blocks::BlockParams p = blocks::init_block(cfg, lcfg, rng);
    ag::ParameterRegistry reg;
    blocks::register_block(reg, "b.", p);
    jitter(reg, rng);
    const Tensor x = Tensor::randn({5, 8}, 1.0, rng);
    const Tensor w = Tensor::randn({5, 8}, 1.0, rng);
    const auto loss = [&] { return ag::sum(ag::mul(blocks::block_forward(x, cfg, p), w)); };

    // beta_k shifts every logit of a softmax row by the same amount, so its
    // gradient is exactly zero and central differences only see roundoff.
    std::vector<Tensor> params;
    std::vector<std::string> names;
    for (const auto& [g, ps] : reg.groups()) {
      for (const auto& np : ps) {
        if (np.tensor.same_as(p.qk.beta_k)) continue;
        params.push_back(np.tensor);
        names.push_back(np.name);
      }
    }
    const auto res = ag::grad_check_params(loss, params, 1e-5);
    MESSAGE("block grad_check " << res.max_relative_error << " over " << res.coordinates << " worst "
                                << names[res.worst_param] << "[" << res.worst_index << "]");
    CHECK(res.max_relative_error <= 1e-4);

    Tensor beta_k = p.qk.beta_k;
    beta_k.set_requires_grad(true);
    {
      ag::Tape tape;
      ag::Tape::Scope scope(tape);
      tape.backward(loss());
    }
    for (double g : beta_k.grad_or_zero()) CHECK(std::abs(g) <= 1e-14);
    beta_k.clear_grad();
    auto bk = beta_k.mutable_data();
    for (std::size_t i = 0; i < bk.size(); ++i) {
      const double orig = bk[i];
      bk[i] = orig + 1e-5;
      const double up = loss().item();
      bk[i] = orig - 1e-5;
      const double down = loss().item();
      bk[i] = orig;
      CHECK(std::abs(up - down) / 2e-5 <= 1e-8);
    }
  }
}
