#include "tailspin/gradcheck.hpp"

#include <algorithm>
#include <functional>

#include "tailspin/losses.hpp"
#include "tailspin/model.hpp"
#include "tailspin/rng.hpp"
#include "tailspin/ssl.hpp"
#include "tailspin/tensor.hpp"

namespace tailspin {

namespace {

Tensor random_param(Rng& rng, Shape shape, double scale) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor random_const(Rng& rng, Shape shape, double scale) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor::constant(std::move(shape), std::move(v));
}

std::vector<std::uint32_t> random_labels(Rng& rng, std::size_t n, std::uint32_t c) {
  std::vector<std::uint32_t> y(n);
  for (auto& v : y) v = static_cast<std::uint32_t>(rng.below(c));
  return y;
}

Priors random_priors(Rng& rng, std::uint32_t c) {
  Priors p;
  double total = 0.0;
  for (std::uint32_t i = 0; i < c; ++i) {
    p.pi.push_back(0.05 + rng.uniform());
    total += p.pi.back();
  }
  for (auto& v : p.pi) v /= total;
  return p;
}

using Case = std::function<double(Rng&)>;

}  // namespace

std::vector<GradcheckRow> gradcheck_suite(std::size_t instances, std::uint64_t seed) {
  const std::vector<std::pair<std::string, Case>> cases = {
      {"ce",
       [](Rng& rng) {
         const std::size_t b = 2 + rng.below(6);
         const std::uint32_t c = 2 + static_cast<std::uint32_t>(rng.below(5));
         std::vector<Tensor> ps = {random_param(rng, {b, c}, 2.0)};
         const auto y = random_labels(rng, b, c);
         return finite_diff_check([&](Tape& t) { return t.mean(cross_entropy(t, ps[0], y)); }, ps);
       }},
      {"la",
       [](Rng& rng) {
         const std::size_t b = 2 + rng.below(6);
         const std::uint32_t c = 2 + static_cast<std::uint32_t>(rng.below(5));
         std::vector<Tensor> ps = {random_param(rng, {b, c}, 2.0)};
         const auto y = random_labels(rng, b, c);
         const Priors pri = random_priors(rng, c);
         return finite_diff_check([&](Tape& t) { return t.mean(la_loss(t, ps[0], y, pri)); }, ps);
       }},
      // Confidences recomputed at every evaluation. At sigma* the objective is
      // stationary in sigma, so the derivative in ell is sigma* itself and the
      // detached analytic gradient must agree with finite differences.
      {"sl",
       [](Rng& rng) {
         const std::size_t b = 2 + rng.below(6);
         const std::uint32_t c = 2 + static_cast<std::uint32_t>(rng.below(5));
         std::vector<Tensor> ps = {random_param(rng, {b, c}, 2.0)};
         const auto y = random_labels(rng, b, c);
         SuperLossParams sl = SuperLossParams::defaults_for(c);
         sl.lambda = 0.5 + 4.0 * rng.uniform();
         return finite_diff_check([&](Tape& t) { return superloss(t, cross_entropy(t, ps[0], y), sl).loss; }, ps);
       }},
      // sigma* computed once at the unperturbed point and held fixed.
      {"la_sl",
       [](Rng& rng) {
         const std::size_t b = 2 + rng.below(6);
         const std::uint32_t c = 2 + static_cast<std::uint32_t>(rng.below(5));
         std::vector<Tensor> ps = {random_param(rng, {b, c}, 2.0)};
         const auto y = random_labels(rng, b, c);
         const Priors pri = random_priors(rng, c);
         const SuperLossParams sl = SuperLossParams::defaults_for(c);
         std::vector<double> sigma;
         {
           Tape t;
           const Tensor base = la_loss(t, ps[0], y, pri);
           for (double ell : base.values()) sigma.push_back(superloss_sigma(ell, sl));
         }
         return finite_diff_check(
             [&](Tape& t) { return superloss_with_sigma(t, la_loss(t, ps[0], y, pri), sigma, sl).loss; }, ps);
       }},
      {"simsiam",
       [](Rng& rng) {
         const std::size_t b = 2 + rng.below(5), d = 2 + rng.below(5);
         std::vector<Tensor> ps = {random_param(rng, {b, d}, 1.0), random_param(rng, {b, d}, 1.0)};
         const Tensor za = random_const(rng, {b, d}, 1.0), zb = random_const(rng, {b, d}, 1.0);
         return finite_diff_check([&](Tape& t) { return simsiam_loss(t, ps[0], za, ps[1], zb, true); }, ps);
       }},
      {"simsiam_no_sg",
       [](Rng& rng) {
         const std::size_t b = 2 + rng.below(5), d = 2 + rng.below(5);
         std::vector<Tensor> ps;
         for (int i = 0; i < 4; ++i) ps.push_back(random_param(rng, {b, d}, 1.0));
         return finite_diff_check([&](Tape& t) { return simsiam_loss(t, ps[0], ps[1], ps[2], ps[3], false); }, ps);
       }},
      {"byol",
       [](Rng& rng) {
         const std::size_t b = 2 + rng.below(5), d = 2 + rng.below(5);
         std::vector<Tensor> ps = {random_param(rng, {b, d}, 1.0), random_param(rng, {b, d}, 1.0)};
         const Tensor ta = random_const(rng, {b, d}, 1.0), tb = random_const(rng, {b, d}, 1.0);
         return finite_diff_check([&](Tape& t) { return byol_loss(t, ps[0], ta, ps[1], tb); }, ps);
       }},
      {"nt_xent",
       [](Rng& rng) {
         const std::size_t b = 2 + rng.below(5), d = 2 + rng.below(5);
         const double temp = 0.2 + rng.uniform();
         std::vector<Tensor> ps = {random_param(rng, {b, d}, 1.0), random_param(rng, {b, d}, 1.0)};
         return finite_diff_check([&](Tape& t) { return nt_xent_loss(t, ps[0], ps[1], temp); }, ps);
       }},
      {"barlow_twins",
       [](Rng& rng) {
         const std::size_t b = 3 + rng.below(5), d = 2 + rng.below(4);
         const double lam = 0.005 + 0.5 * rng.uniform();
         std::vector<Tensor> ps = {random_param(rng, {b, d}, 1.0), random_param(rng, {b, d}, 1.0)};
         return finite_diff_check([&](Tape& t) { return barlow_twins_loss(t, ps[0], ps[1], lam); }, ps);
       }},
      // Three-layer ReLU network into cross-entropy.
      {"mlp",
       [](Rng& rng) {
         const std::size_t b = 3 + rng.below(4);
         const std::uint32_t c = 3;
         Mlp net({4, 6, 5, c}, false, rng);
         std::vector<Tensor> ps = net.parameters();
         // Biases away from zero so that no unit sits at its ReLU kink.
         for (auto& p : ps)
           if (p.rank() == 1)
             for (auto& v : p.mutable_values()) v = 0.3 * rng.normal();
         const Tensor x = random_const(rng, {b, 4}, 1.0);
         const auto y = random_labels(rng, b, c);
         return finite_diff_check([&](Tape& t) { return t.mean(cross_entropy(t, net.forward(t, x), y)); }, ps);
       }},
  };

  std::vector<GradcheckRow> rows;
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    GradcheckRow row{cases[ci].first, instances, 0.0};
    for (std::size_t i = 0; i < instances; ++i) {
      Rng rng(derive_seed(seed, {0x67726164ULL, ci, i}));
      row.max_rel_error = std::max(row.max_rel_error, cases[ci].second(rng));
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace tailspin
