#include <algorithm>
#include <cmath>
#include <cstring>

#include "doctest.h"
#include "tailspin/commands.hpp"
#include "tailspin/config.hpp"
#include "tailspin/error.hpp"
#include "tailspin/pipeline.hpp"
#include "tailspin/rng.hpp"
#include "tailspin/ssl.hpp"

using namespace tailspin;

namespace {

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, bool param = false) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.normal();
  return param ? Tensor::parameter({r, c}, v) : Tensor::constant({r, c}, v);
}

std::vector<double> normalized_row(const Tensor& t, std::size_t i) {
  std::vector<double> out(t.cols());
  double n = 0;
  for (std::size_t j = 0; j < t.cols(); ++j) n += t.at(i, j) * t.at(i, j);
  for (std::size_t j = 0; j < t.cols(); ++j) out[j] = t.at(i, j) / std::sqrt(n);
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

ExperimentSettings small_settings(const std::string& method, std::size_t epochs, std::vector<std::string> extra = {}) {
  std::vector<std::string> o = {"pretrain.method=" + method, "pretrain.epochs=" + std::to_string(epochs),
                                "pretrain.batch_size=32", "pretrain.knn_every=0"};
  o.insert(o.end(), extra.begin(), extra.end());
  return settings_from_config(ExperimentConfig::parse("", o), 3);
}

}  // namespace

TEST_CASE("simsiam loss values") {
  Tape tape;
  const Tensor u = Tensor::constant({2, 3}, {1, 2, 3, -1, 0.5, 2});
  CHECK(simsiam_loss(tape, u, u, u, u).item() == doctest::Approx(-1.0).epsilon(1e-14));
  const Tensor e1 = Tensor::constant({1, 2}, {1, 0});
  const Tensor e2 = Tensor::constant({1, 2}, {0, 3});
  CHECK(std::abs(simsiam_loss(tape, e1, e2, e1, e2).item()) <= 1e-15);
}

TEST_CASE("simsiam stop-gradient keeps target gradients at zero") {
  Rng rng(1);
  Tensor pa = random_matrix(rng, 4, 5, true), pb = random_matrix(rng, 4, 5, true);
  Tensor za = random_matrix(rng, 4, 5, true), zb = random_matrix(rng, 4, 5, true);
  {
    Tape tape;
    tape.backward(simsiam_loss(tape, pa, za, pb, zb, true));
    for (double g : za.grad()) CHECK(g == 0.0);
    for (double g : zb.grad()) CHECK(g == 0.0);
    CHECK(std::any_of(pa.grad().begin(), pa.grad().end(), [](double g) { return g != 0.0; }));
  }
  za.zero_grad();
  {
    Tape tape;
    tape.backward(simsiam_loss(tape, pa, za, pb, zb, false));
    CHECK(std::any_of(za.grad().begin(), za.grad().end(), [](double g) { return g != 0.0; }));
  }
}

TEST_CASE("nt-xent against exhaustive enumeration") {
  Rng rng(2);
  for (int t = 0; t < 10; ++t) {
    const double temp = rng.uniform(0.1, 1.0);
    const Tensor za = random_matrix(rng, 2, 3), zb = random_matrix(rng, 2, 3);
    std::vector<std::vector<double>> z = {normalized_row(za, 0), normalized_row(za, 1), normalized_row(zb, 0),
                                          normalized_row(zb, 1)};
    double total = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      const std::size_t pos = (i + 2) % 4;
      double denom = 0;
      for (std::size_t k = 0; k < 4; ++k)
        if (k != i) denom += std::exp(dot(z[i], z[k]) / temp);
      total += -std::log(std::exp(dot(z[i], z[pos]) / temp) / denom);
    }
    Tape tape;
    CHECK(std::abs(nt_xent_loss(tape, za, zb, temp).item() - total / 4.0) <= 1e-10);
  }
}

TEST_CASE("nt-xent degenerate cases") {
  Tape tape;
  const std::size_t b = 5;
  const Tensor same = Tensor::constant({b, 2}, std::vector<double>(2 * b, 1.0));
  CHECK(nt_xent_loss(tape, same, same, 0.5).item() == doctest::Approx(std::log(2.0 * b - 1)).epsilon(1e-12));
  Rng rng(3);
  const Tensor za = random_matrix(rng, b, 4), zb = random_matrix(rng, b, 4);
  CHECK(nt_xent_loss(tape, za, zb, 1e6).item() == doctest::Approx(std::log(2.0 * b - 1)).epsilon(1e-5));
  CHECK_THROWS_AS(nt_xent_loss(tape, Tensor::zeros({1, 4}), Tensor::zeros({1, 4}), 0.5), PreconditionError);
  CHECK(nt_xent_loss(tape, za, zb, 0.5).item() >= 0.0);
}

TEST_CASE("byol target updates") {
  auto scalar_net = [](double v) {
    return Mlp({Linear{Tensor::parameter({1, 1}, {v}), Tensor::parameter({1}, {v})}}, false);
  };
  SUBCASE("m = 1 leaves the target bitwise unchanged") {
    Mlp target = scalar_net(0.25).clone_frozen(), online = scalar_net(3.0);
    ema_update(target, online, 1.0);
    CHECK(target.layers()[0].weight.values()[0] == 0.25);
  }
  SUBCASE("m = 0 copies the online network") {
    Mlp target = scalar_net(0.25).clone_frozen(), online = scalar_net(3.0);
    ema_update(target, online, 0.0);
    CHECK(target.layers()[0].weight.values()[0] == 3.0);
    CHECK(target.layers()[0].bias.values()[0] == 3.0);
  }
  SUBCASE("geometric recursion over ten updates") {
    Mlp target = scalar_net(0.0).clone_frozen(), online = scalar_net(1.0);
    for (int i = 0; i < 10; ++i) ema_update(target, online, 0.99);
    CHECK(target.layers()[0].weight.values()[0] == doctest::Approx(1.0 - std::pow(0.99, 10)).epsilon(1e-13));
    CHECK(target.layers()[0].weight.values()[0] == doctest::Approx(0.09562).epsilon(1e-4));
  }
  SUBCASE("byol loss treats targets as constants") {
    Rng rng(4);
    Tensor pa = random_matrix(rng, 3, 4, true), pb = random_matrix(rng, 3, 4, true);
    Tensor ta = random_matrix(rng, 3, 4, true), tb = random_matrix(rng, 3, 4, true);
    Tape tape;
    const Tensor loss = byol_loss(tape, pa, ta, pb, tb);
    CHECK(loss.item() >= -1.0);
    CHECK(loss.item() <= 1.0);
    tape.backward(loss);
    for (double g : ta.grad()) CHECK(g == 0.0);
  }
}

TEST_CASE("barlow twins loss") {
  SUBCASE("identity cross-correlation") {
    const Tensor z = Tensor::constant({4, 2}, {1, 1, -1, 1, 1, -1, -1, -1});
    Tape tape;
    CHECK(barlow_twins_loss(tape, z, z, 0.005).item() <= 1e-15);
  }
  SUBCASE("dense recomputation") {
    Rng rng(5);
    for (int t = 0; t < 10; ++t) {
      const double lambda = rng.uniform(0.0, 0.1);
      const Tensor za = random_matrix(rng, 4, 3), zb = random_matrix(rng, 4, 3);
      auto standardize = [](const Tensor& z) {
        std::vector<std::vector<double>> out(z.rows(), std::vector<double>(z.cols()));
        for (std::size_t j = 0; j < z.cols(); ++j) {
          double mu = 0, var = 0;
          for (std::size_t i = 0; i < z.rows(); ++i) mu += z.at(i, j) / double(z.rows());
          for (std::size_t i = 0; i < z.rows(); ++i) var += (z.at(i, j) - mu) * (z.at(i, j) - mu) / double(z.rows());
          for (std::size_t i = 0; i < z.rows(); ++i) out[i][j] = (z.at(i, j) - mu) / std::sqrt(var + 1e-9);
        }
        return out;
      };
      const auto a = standardize(za), b = standardize(zb);
      double expected = 0;
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
          double c = 0;
          for (std::size_t r = 0; r < 4; ++r) c += a[r][i] * b[r][j] / 4.0;
          expected += i == j ? (1 - c) * (1 - c) : lambda * c * c;
        }
      Tape tape;
      CHECK(std::abs(barlow_twins_loss(tape, za, zb, lambda).item() - expected) <= 1e-10);
    }
  }
  SUBCASE("lambda zero sees only the diagonal") {
    Rng rng(6);
    const Tensor za = random_matrix(rng, 6, 3);
    // swapping two columns of one view changes only off-diagonal mass when the columns are equal
    std::vector<double> v(za.values().begin(), za.values().end());
    for (std::size_t i = 0; i < 6; ++i) v[i * 3 + 1] = v[i * 3 + 0];
    const Tensor zb = Tensor::constant({6, 3}, v);
    Tape tape;
    const double l0 = barlow_twins_loss(tape, zb, zb, 0.0).item();
    CHECK(l0 <= 1e-12);
    CHECK(barlow_twins_loss(tape, zb, zb, 0.5).item() > 0.1);
  }
}

TEST_CASE("pair encoding") {
  const Dataset ds = generate_synthetic(3, 10, 8, 4.0, 1);
  const std::vector<std::size_t> batch = {0, 4, 9, 20};
  SUBCASE("identity augmentation gives equal views") {
    const Model model = make_model(Architecture{}, true, false, 3);
    SslConfig cfg;
    cfg.augmentation = AugmentationSpec{};
    Tape tape;
    const PairEncoding enc = encode_pair(tape, model, ds, batch, cfg, 1, 0);
    CHECK(std::memcmp(enc.z_a.values().data(), enc.z_b.values().data(), enc.z_a.values().size_bytes()) == 0);
    CHECK(enc.p_a.defined());
  }
  SUBCASE("fixed seeds reproduce embeddings, epoch changes them") {
    const Model model = make_model(Architecture{}, true, false, 3);
    const SslConfig cfg;
    Tape t1, t2, t3;
    const auto a = encode_pair(t1, model, ds, batch, cfg, 1, 0);
    const auto b = encode_pair(t2, model, ds, batch, cfg, 1, 0);
    const auto c = encode_pair(t3, model, ds, batch, cfg, 1, 1);
    CHECK(std::memcmp(a.z_a.values().data(), b.z_a.values().data(), a.z_a.values().size_bytes()) == 0);
    CHECK(std::memcmp(a.z_a.values().data(), c.z_a.values().data(), a.z_a.values().size_bytes()) != 0);
  }
  SUBCASE("simclr with a single sample cannot form negatives") {
    const Model model = make_model(Architecture{}, false, false, 3);
    SslConfig cfg;
    cfg.method = SslMethod::simclr;
    const std::size_t one[] = {2};
    Tape tape;
    CHECK_THROWS_AS(encode_pair(tape, model, ds, one, cfg, 1, 0), PreconditionError);
  }
  SUBCASE("input dimension mismatch") {
    Architecture arch;
    arch.input_dim = 5;
    const Model model = make_model(arch, true, false, 3);
    Tape tape;
    CHECK_THROWS_AS(encode_pair(tape, model, ds, batch, SslConfig{}, 1, 0), ConfigError);
  }
}

TEST_CASE("epoch batches") {
  const auto b = epoch_batches(10, 4, 2, 1, 0);
  REQUIRE(b.size() == 3);
  CHECK(b[2].size() == 2);
  const auto dropped = epoch_batches(9, 4, 2, 1, 0);
  CHECK(dropped.size() == 2);
  std::vector<std::size_t> all;
  for (const auto& x : b) all.insert(all.end(), x.begin(), x.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(all[i] == i);
  CHECK(epoch_batches(10, 4, 2, 1, 0) == b);
  CHECK(epoch_batches(10, 4, 2, 1, 1) != b);
}

TEST_CASE("pretraining") {
  const Dataset train = generate_synthetic(3, 60, 8, 4.0, 2);
  SUBCASE("simsiam loss decreases and reruns are bitwise identical") {
    const ExperimentSettings s = small_settings("simsiam", 50);
    std::vector<double> losses, again;
    Model m1 = make_model(s.architecture, true, false, 9);
    pretrain(m1, train, nullptr, s.pretrain, 9, [&](const MetricsRecord& r) { losses.push_back(r.loss); });
    Model m2 = make_model(s.architecture, true, false, 9);
    pretrain(m2, train, nullptr, s.pretrain, 9, [&](const MetricsRecord& r) { again.push_back(r.loss); });
    REQUIRE(losses.size() == 50);
    CHECK(losses.back() < losses.front());
    CHECK(losses == again);
    CHECK(parameter_checksum(m1.online_parameters()) == parameter_checksum(m2.online_parameters()));
    for (double l : losses) CHECK(l >= -1.0);
  }
  SUBCASE("labels never influence pretraining") {
    for (const std::string method : {"simclr", "byol", "barlow_twins"}) {
      const ExperimentSettings s = small_settings(method, 3);
      const SslMethod m = parse_ssl_method(method);
      std::vector<std::uint32_t> shuffled(train.labels_observed().begin(), train.labels_observed().end());
      std::reverse(shuffled.begin(), shuffled.end());
      const Dataset tampered = train.with_observed_labels(shuffled);
      Model a = make_model(s.architecture, uses_predictor(m), m == SslMethod::byol, 4);
      Model b = make_model(s.architecture, uses_predictor(m), m == SslMethod::byol, 4);
      pretrain(a, train, nullptr, s.pretrain, 4, nullptr);
      pretrain(b, tampered, nullptr, s.pretrain, 4, nullptr);
      CHECK(parameter_checksum(a.online_parameters()) == parameter_checksum(b.online_parameters()));
    }
  }
  SUBCASE("heavy imbalance still yields useful representations") {
    const Dataset full = generate_synthetic(10, 300, 8, 4.0, 5);
    const Dataset skewed = apply_exponential_imbalance(full, {100.0, 6});
    SyntheticSpec ts{10, 30, 8, 4.0, 5, Split::test};
    const Dataset test = generate_synthetic(ts);
    ExperimentSettings s = settings_from_config(
        ExperimentConfig::parse("", {"pretrain.epochs=30", "pretrain.knn_every=30", "data.num_classes=10"}), 10);
    Model m = make_model(s.architecture, true, false, 7);
    std::optional<double> knn;
    pretrain(m, skewed, &test, s.pretrain, 7, [&](const MetricsRecord& r) {
      if (r.knn_accuracy) knn = r.knn_accuracy;
    });
    REQUIRE(knn.has_value());
    CHECK(*knn >= 3.0 * 0.1);
  }
}

TEST_CASE("byol pretraining requires an ema target") {
  const Dataset train = generate_synthetic(3, 20, 8, 4.0, 2);
  const ExperimentSettings s = small_settings("byol", 1);
  Model m = make_model(s.architecture, true, false, 1);
  CHECK_THROWS_AS(pretrain(m, train, nullptr, s.pretrain, 1, nullptr), ConfigError);
}
