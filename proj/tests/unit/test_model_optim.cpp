#include <cmath>
#include <limits>
#include <numbers>

#include "doctest.h"
#include "tailspin/error.hpp"
#include "tailspin/model.hpp"
#include "tailspin/optim.hpp"

using namespace tailspin;

TEST_CASE("linear batch-size scaling") {
  CHECK(scaled_lr(0.03, 512) == doctest::Approx(0.06).epsilon(1e-15));
  CHECK(scaled_lr(0.05, 256) == 0.05);
  CHECK(scaled_lr(0.003, 128) == doctest::Approx(0.0015).epsilon(1e-15));
}

TEST_CASE("sgd step") {
  SUBCASE("half theta squared from one") {
    std::vector<double> theta = {1.0}, v = {0.0};
    const std::vector<double> g = {theta[0]};
    sgd_step(theta, g, v, 0.1, 0.9, 0.0);
    CHECK(theta[0] == doctest::Approx(0.9).epsilon(1e-15));
  }
  SUBCASE("no momentum, no decay is plain gradient descent") {
    std::vector<double> theta = {0.5, -2.0, 3.0}, v(3, 0.0);
    const std::vector<double> g = {0.25, 1.0, -4.0};
    for (int t = 0; t < 3; ++t) {
      const std::vector<double> before = theta;
      sgd_step(theta, g, v, 0.01, 0.0, 0.0);
      for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(theta[i] - (before[i] - 0.01 * g[i])) <= 1e-12);
    }
  }
  SUBCASE("momentum accumulates velocity") {
    std::vector<double> theta = {0.0}, v = {0.0};
    const std::vector<double> g = {1.0};
    sgd_step(theta, g, v, 1.0, 0.5, 0.0);
    sgd_step(theta, g, v, 1.0, 0.5, 0.0);
    CHECK(v[0] == doctest::Approx(1.5));
    CHECK(theta[0] == doctest::Approx(-2.5));
  }
  SUBCASE("weight decay adds wd theta") {
    std::vector<double> theta = {2.0}, v = {0.0};
    const std::vector<double> g = {0.0};
    sgd_step(theta, g, v, 0.1, 0.0, 0.5);
    CHECK(theta[0] == doctest::Approx(1.9));
  }
}

TEST_CASE("adam steady state approaches lr sign(g)") {
  for (double gv : {3.0, -0.02}) {
    std::vector<double> theta = {0.0}, m = {0.0}, v = {0.0};
    const std::vector<double> g = {gv};
    double prev = 0.0, last = 0.0;
    for (std::size_t t = 1; t <= 2000; ++t) {
      prev = theta[0];
      adam_step(theta, g, m, v, t, 0.001, 0.9, 0.999, 1e-8, 0.0);
      last = theta[0] - prev;
    }
    CHECK(last == doctest::Approx(-0.001 * (gv > 0 ? 1 : -1)).epsilon(1e-4));
  }
  // bias correction makes the first step exactly lr g / (|g| + eps)
  std::vector<double> theta = {1.0}, m = {0.0}, v = {0.0};
  const std::vector<double> g = {0.5};
  adam_step(theta, g, m, v, 1, 0.1, 0.9, 0.999, 1e-8, 0.0);
  CHECK(std::abs(theta[0] - (1.0 - 0.1 * 0.5 / (0.5 + 1e-8))) <= 1e-12);
}

TEST_CASE("optimizer object") {
  SUBCASE("descends a quadratic") {
    Tensor w = Tensor::parameter({2}, {1.0, -1.0});
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::sgd;
    cfg.momentum = 0.0;
    Optimizer opt(cfg, {w});
    for (int i = 0; i < 3; ++i) {
      opt.zero_grad();
      Tape tape;
      tape.backward(tape.scale(tape.sum(tape.mul(w, w)), 0.5));
      const std::vector<double> before(w.values().begin(), w.values().end());
      opt.step(0.1);
      for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(w.values()[k] - 0.9 * before[k]) <= 1e-12);
    }
    CHECK(opt.steps_taken() == 3);
  }
  SUBCASE("non-finite gradient aborts without touching parameters") {
    // two finite paths whose gradients overflow when accumulated
    Tensor x = Tensor::parameter({1}, {1e-300});
    const Tensor c = Tensor::constant({1}, {1.5e308});
    Optimizer bad(OptimizerConfig{}, {x});
    Tape t2;
    t2.backward(t2.add(t2.sum(t2.mul(x, c)), t2.sum(t2.mul(x, c))));
    REQUIRE_FALSE(std::isfinite(x.grad()[0]));
    const double before = x.values()[0];
    CHECK_THROWS_AS(bad.step(0.1), NumericError);
    CHECK(x.values()[0] == before);
  }
  SUBCASE("validation") {
    OptimizerConfig cfg;
    cfg.base_lr = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_THROWS_AS(parse_optimizer_kind("rmsprop"), ConfigError);
  }
}

TEST_CASE("learning rate schedule") {
  const ScheduleConfig s{ScheduleKind::cosine, 10, 200};
  CHECK(lr_at(s, 4, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(lr_at(s, 9, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(lr_at(s, 10, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  const double end = lr_at(s, 199, 1.0);
  CHECK(end == doctest::Approx(0.5 * (1 + std::cos(std::numbers::pi * 189.0 / 190.0))).epsilon(1e-12));
  CHECK(end < 1e-3);
  double prev = lr_at(s, 10, 1.0);
  for (std::size_t e = 11; e < 200; ++e) {
    const double lr = lr_at(s, e, 1.0);
    CHECK(lr <= prev);
    CHECK(prev - lr < 0.02);
    prev = lr;
  }
  CHECK_THROWS_AS(lr_at(s, 200, 1.0), PreconditionError);
  const ScheduleConfig c{ScheduleKind::constant, 0, 25};
  for (std::size_t e = 0; e < 25; ++e) CHECK(lr_at(c, e, 0.001) == 0.001);
  CHECK_THROWS_AS((ScheduleConfig{ScheduleKind::cosine, 5, 5}.validate()), ConfigError);
}

TEST_CASE("model construction") {
  const Architecture arch;
  const Model a = make_model(arch, true, false, 42);
  const Model b = make_model(arch, true, false, 42);
  const Model c = make_model(arch, true, false, 43);
  CHECK(parameter_checksum(a.online_parameters()) == parameter_checksum(b.online_parameters()));
  CHECK(parameter_checksum(a.online_parameters()) != parameter_checksum(c.online_parameters()));
  CHECK(a.encoder.dims() == std::vector<std::size_t>{8, 64, 32});
  CHECK(a.projector.dims() == std::vector<std::size_t>{32, 32, 32});
  CHECK(a.predictor->dims() == std::vector<std::size_t>{32, 16, 32});
  CHECK_FALSE(a.target_encoder.has_value());

  for (const auto& layer : a.encoder.layers())
    for (double v : layer.bias.values()) CHECK(v == 0.0);

  // He-normal: weight variance close to 2 / fan_in
  const auto& w = a.encoder.layers()[0].weight;
  double sq = 0;
  for (double v : w.values()) sq += v * v;
  CHECK(sq / double(w.size()) == doctest::Approx(2.0 / 8.0).epsilon(0.25));

  const Model ema = make_model(arch, true, true, 42);
  REQUIRE(ema.target_encoder.has_value());
  CHECK(parameter_checksum(ema.target_encoder->parameters()) == parameter_checksum(ema.encoder.parameters()));
  for (const auto& p : ema.target_encoder->parameters()) CHECK_FALSE(p.requires_grad());

  Architecture bad = arch;
  bad.projector_layers = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("mlp clone is deep") {
  Rng rng(1);
  Mlp net({3, 4, 2}, false, rng);
  Mlp copy = net.clone();
  copy.layers()[0].weight.mutable_values()[0] += 1.0;
  CHECK(net.layers()[0].weight.values()[0] + 1.0 == copy.layers()[0].weight.values()[0]);
  const auto frozen = net.clone_frozen();
  for (const auto& p : frozen.parameters()) CHECK_FALSE(p.requires_grad());
}
