#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "oracles.hpp"
#include "tailspin/error.hpp"
#include "tailspin/losses.hpp"
#include "tailspin/rng.hpp"

using namespace tailspin;

namespace {

Tensor random_logits(Rng& rng, std::size_t b, std::size_t c, bool param = false) {
  std::vector<double> v(b * c);
  for (auto& x : v) x = rng.uniform(-3, 3);
  return param ? Tensor::parameter({b, c}, v) : Tensor::constant({b, c}, v);
}

std::vector<std::uint32_t> random_labels(Rng& rng, std::size_t b, std::uint32_t c) {
  std::vector<std::uint32_t> y(b);
  for (auto& v : y) v = static_cast<std::uint32_t>(rng.below(c));
  return y;
}

std::vector<double> to_vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST_CASE("lambert w special values") {
  CHECK(lambert_w0(0.0) == 0.0);
  CHECK(std::abs(lambert_w0(std::numbers::e) - 1.0) <= 1e-12);
  CHECK(std::abs(lambert_w0(-1.0 / std::numbers::e) + 1.0) <= 1e-12);
  CHECK(lambert_w0(-1.0 / std::numbers::e - 5e-13) == -1.0);
  CHECK_THROWS_AS(lambert_w0(-1.0 / std::numbers::e - 1e-9), DomainError);
  CHECK_THROWS_AS(lambert_w0(std::nan("")), DomainError);
}

TEST_CASE("lambert w at 1 against an independent Newton solve") {
  const double w = lambert_w0(1.0);
  CHECK(std::abs(w - oracle::newton_lambert_w0(1.0)) <= 1e-14);
  CHECK(w == doctest::Approx(0.5671432904).epsilon(1e-10));
}

TEST_CASE("lambert w residual across the domain") {
  Rng rng(1);
  const double lo = std::log(1e-9), hi = std::log(1e6);
  for (int i = 0; i < 20000; ++i) {
    const double x = -1.0 / std::numbers::e + std::exp(rng.uniform(lo, hi));
    const double w = lambert_w0(x);
    REQUIRE(w >= -1.0);
    REQUIRE(std::abs(w * std::exp(w) - x) <= 1e-12 * std::max(1.0, std::abs(x)));
  }
  for (double x : {0.1, 2.0, 50.0, 1e5}) CHECK(lambert_w0(x) == doctest::Approx(oracle::newton_lambert_w0(x)).epsilon(1e-13));
}

TEST_CASE("logit adjustment") {
  Tape tape;
  SUBCASE("direct substitution") {
    Priors p{{0.5, 0.3, 0.2}};
    Tensor out = logit_adjust(tape, Tensor::zeros({1, 3}), p);
    CHECK(out.at(0, 0) == doctest::Approx(std::log(0.5)));
    CHECK(out.at(0, 1) == doctest::Approx(std::log(0.3)));
    CHECK(out.at(0, 2) == doctest::Approx(std::log(0.2)));
  }
  SUBCASE("rare-class decision flip") {
    Priors p{{0.9, 0.1}};
    Tensor logits = Tensor::constant({1, 2}, {1.0, 1.1});
    CHECK(logits.at(0, 1) > logits.at(0, 0));
    Tensor out = logit_adjust(tape, logits, p);
    CHECK(out.at(0, 0) == doctest::Approx(1.0 + std::log(0.9)));
    CHECK(out.at(0, 1) == doctest::Approx(1.1 + std::log(0.1)));
    CHECK(out.at(0, 0) > out.at(0, 1));
  }
  SUBCASE("class count mismatch") {
    CHECK_THROWS_AS(logit_adjust(tape, Tensor::zeros({2, 3}), Priors::uniform(4)), DimensionError);
  }
}

TEST_CASE("la loss reduces to cross-entropy under uniform priors") {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const std::uint32_t c = 2 + static_cast<std::uint32_t>(rng.below(9));
    const std::size_t b = 1 + rng.below(12);
    Tape tape;
    const Tensor logits = random_logits(rng, b, c);
    const auto y = random_labels(rng, b, c);
    const auto la = to_vec(la_loss(tape, logits, y, Priors::uniform(c)));
    const auto ce = to_vec(cross_entropy(tape, logits, y));
    for (std::size_t i = 0; i < b; ++i) REQUIRE(std::abs(la[i] - ce[i]) <= 1e-12);
  }
}

TEST_CASE("la loss on zero logits over ten classes is log 10") {
  Tape tape;
  const std::vector<std::uint32_t> y = {0, 3, 9};
  const auto la = to_vec(la_loss(tape, Tensor::zeros({3, 10}), y, Priors::uniform(10)));
  for (double v : la) CHECK(v == doctest::Approx(2.302585093).epsilon(1e-9));
}

TEST_CASE("la loss agrees with explicit softmax recomputation") {
  Rng rng(3);
  const std::uint32_t c = 5;
  const std::size_t b = 16;
  Priors pri{{0.4, 0.3, 0.15, 0.1, 0.05}};
  Tape tape;
  const Tensor logits = random_logits(rng, b, c);
  const auto y = random_labels(rng, b, c);
  const auto got = to_vec(la_loss(tape, logits, y, pri));
  for (std::size_t i = 0; i < b; ++i) {
    double denom = 0;
    for (std::uint32_t k = 0; k < c; ++k) denom += std::exp(logits.at(i, k) + std::log(pri.pi[k]));
    const double expected = -std::log(std::exp(logits.at(i, y[i]) + std::log(pri.pi[y[i]])) / denom);
    CHECK(std::abs(got[i] - expected) <= 1e-10);
  }
}

TEST_CASE("la loss is invariant to per-row constant shifts") {
  Rng rng(4);
  Priors pri{{0.6, 0.3, 0.1}};
  Tape tape;
  const Tensor logits = random_logits(rng, 6, 3);
  std::vector<double> shifted(logits.values().begin(), logits.values().end());
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t k = 0; k < 3; ++k) shifted[i * 3 + k] += 10.0 * static_cast<double>(i) - 7.5;
  const auto y = random_labels(rng, 6, 3);
  const auto a = to_vec(la_loss(tape, logits, y, pri));
  const auto b = to_vec(la_loss(tape, Tensor::constant({6, 3}, shifted), y, pri));
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);
}

TEST_CASE("superloss confidence") {
  const SuperLossParams p{std::log(10.0), 4.0, ClampMode::lower_bound};
  SUBCASE("ell equals tau") { CHECK(superloss_sigma(p.tau, p) == 1.0); }
  SUBCASE("floor at the branch point gives e") {
    CHECK(superloss_sigma(p.tau - 2.0 * p.lambda / std::numbers::e - 1.0, p) == std::numbers::e);
    CHECK(superloss_sigma(-1e6, p) == std::numbers::e);
  }
  SUBCASE("ell = tau + lambda against golden-section search") {
    const double s = superloss_sigma(p.tau + p.lambda, p);
    CHECK(s == doctest::Approx(0.7034674224983917).epsilon(1e-12));
    CHECK(std::abs(s - oracle::golden_section_sigma(p.tau + p.lambda, p.tau, p.lambda)) <= 1e-6 * s);
  }
  SUBCASE("as written floor caps the confidence") {
    SuperLossParams q = p;
    q.clamp = ClampMode::as_written;
    const double cap = std::exp(-lambert_w0(1.0 / std::numbers::e));
    CHECK(superloss_sigma(p.tau, q) == doctest::Approx(cap));
    CHECK(superloss_sigma(-50.0, q) == doctest::Approx(cap));
    CHECK(cap == doctest::Approx(0.7569).epsilon(1e-3));
  }
  SUBCASE("monotone nonincreasing in ell") {
    double prev = superloss_sigma(-20.0, p);
    for (double ell = -20.0; ell <= 40.0; ell += 0.01) {
      const double s = superloss_sigma(ell, p);
      REQUIRE(s <= prev);
      REQUIRE(s > 0.0);
      REQUIRE(s <= std::numbers::e);
      prev = s;
    }
  }
  SUBCASE("matches the minimizer on random triples") {
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
      const double tau = rng.uniform(0, 5), lambda = rng.uniform(0.1, 10), ell = rng.uniform(0, 15);
      const double s = superloss_sigma(ell, SuperLossParams{tau, lambda, ClampMode::lower_bound});
      REQUIRE(std::abs(s - oracle::golden_section_sigma(ell, tau, lambda)) <= 1e-6 * s);
    }
  }
}

TEST_CASE("superloss value and gradient") {
  const SuperLossParams p{1.0, 4.0, ClampMode::lower_bound};
  SUBCASE("vanishes at ell = tau") {
    Tape tape;
    CHECK(superloss(tape, Tensor::constant({3}, {1.0, 1.0, 1.0}), p).value() == 0.0);
  }
  SUBCASE("value at ell = tau + lambda") {
    Tape tape;
    const double sigma = 0.7034674224983917;
    const double expected = 4.0 * sigma + 4.0 * std::log(sigma) * std::log(sigma);
    CHECK(superloss(tape, Tensor::constant({1}, {5.0}), p).value() == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(3.30875).epsilon(1e-5));
  }
  SUBCASE("gradient with respect to each base loss is sigma over B") {
    Tensor ell = Tensor::parameter({4}, {0.2, 1.0, 3.0, 30.0});
    Tape tape;
    const ConfidenceReport r = superloss(tape, ell, p);
    tape.backward(r.loss);
    for (std::size_t i = 0; i < 4; ++i) CHECK(ell.grad()[i] == doctest::Approx(r.sigma[i] / 4.0).epsilon(1e-14));
    CHECK(r.sigma[3] < r.sigma[2]);
    CHECK(r.sigma[2] < r.sigma[1]);
  }
  SUBCASE("non-finite base loss") {
    CHECK_THROWS_AS(superloss_sigma(std::numeric_limits<double>::infinity(), p), NumericError);
  }
}

TEST_CASE("la+sl composition") {
  SUBCASE("uniform priors and ell = tau everywhere gives zero") {
    const std::uint32_t c = 4;
    Tape tape;
    const std::vector<std::uint32_t> y = {0, 1, 2, 3};
    const SuperLossParams p = SuperLossParams::defaults_for(c);
    CHECK(p.tau == std::log(4.0));
    CHECK(p.lambda == 4.0);
    // all-equal logits give ell = log C = tau
    CHECK(std::abs(la_sl_loss(tape, Tensor::zeros({4, c}), y, Priors::uniform(c), p).value()) <= 1e-15);
  }
  SUBCASE("confidence ordering reverses loss ordering under skewed priors") {
    Rng rng(6);
    const std::uint32_t c = 10;
    Priors pri;
    for (std::uint32_t k = 0; k < c; ++k) pri.pi.push_back(std::pow(100.0, -static_cast<double>(k) / 9.0));
    double total = 0;
    for (double v : pri.pi) total += v;
    for (double& v : pri.pi) v /= total;
    Tape tape;
    const auto r = la_sl_loss(tape, random_logits(rng, 32, c), random_labels(rng, 32, c), pri,
                              SuperLossParams::defaults_for(c));
    for (std::size_t i = 0; i < 32; ++i)
      for (std::size_t j = 0; j < 32; ++j)
        if (r.base_loss[i] < r.base_loss[j]) REQUIRE(r.sigma[i] >= r.sigma[j]);
  }
  SUBCASE("gradient with sigma held fixed matches finite differences") {
    Rng rng(7);
    for (int t = 0; t < 10; ++t) {
      std::vector<Tensor> ps = {random_logits(rng, 6, 4, true)};
      const auto y = random_labels(rng, 6, 4);
      Priors pri{{0.5, 0.25, 0.15, 0.1}};
      const auto sl = SuperLossParams::defaults_for(4);
      std::vector<double> sigma;
      {
        Tape tape;
        const Tensor base = la_loss(tape, ps[0], y, pri);
        for (double l : base.values()) sigma.push_back(superloss_sigma(l, sl));
      }
      auto f = [&](Tape& tape) { return superloss_with_sigma(tape, la_loss(tape, ps[0], y, pri), sigma, sl).loss; };
      CHECK(finite_diff_check(f, ps) <= 1e-4);
    }
  }
}

TEST_CASE("cross-entropy gradient matches finite differences") {
  Rng rng(8);
  std::vector<Tensor> ps = {random_logits(rng, 8, 5, true)};
  const auto y = random_labels(rng, 8, 5);
  CHECK(finite_diff_check([&](Tape& t) { return t.mean(cross_entropy(t, ps[0], y)); }, ps) <= 1e-6);
}

TEST_CASE("classification loss dispatch and parsing") {
  CHECK(parse_loss_kind("la_sl") == LossKind::la_sl);
  CHECK(std::string(loss_kind_name(LossKind::ce_sl)) == "ce_sl");
  CHECK_THROWS_AS(parse_loss_kind("focal"), ConfigError);
  Rng rng(9);
  const Tensor logits = random_logits(rng, 5, 3);
  const auto y = random_labels(rng, 5, 3);
  const Priors pri{{0.7, 0.2, 0.1}};
  LossConfig cfg;
  cfg.superloss = SuperLossParams::defaults_for(3);
  Tape tape;
  cfg.kind = LossKind::ce;
  const double ce = classification_loss(tape, logits, y, pri, cfg).item();
  double manual = 0;
  const Tensor per_sample = cross_entropy(tape, logits, y);
  for (double v : per_sample.values()) manual += v / 5.0;
  CHECK(ce == doctest::Approx(manual).epsilon(1e-14));
  cfg.kind = LossKind::la_sl;
  CHECK(classification_loss(tape, logits, y, pri, cfg).item() ==
        doctest::Approx(la_sl_loss(tape, logits, y, pri, cfg.superloss).value()).epsilon(1e-14));
}

TEST_CASE("priors and superloss params validation") {
  CHECK_THROWS_AS((Priors{{0.5, 0.0, 0.5}}.validate()), DomainError);
  CHECK_THROWS_AS((Priors{{0.5, 0.6}}.validate()), DomainError);
  CHECK_NOTHROW(Priors::uniform(3).validate());
  CHECK_THROWS_AS((SuperLossParams{0.0, 0.0, ClampMode::lower_bound}.validate()), ConfigError);
}
