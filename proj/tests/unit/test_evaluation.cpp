#include <algorithm>
#include <cmath>
#include <cstring>

#include "doctest.h"
#include "oracles.hpp"
#include "tailspin/error.hpp"
#include "tailspin/evaluation.hpp"
#include "tailspin/rng.hpp"

using namespace tailspin;

namespace {

EmbeddingSet random_set(Rng& rng, std::size_t n, std::size_t d, std::uint32_t classes) {
  EmbeddingSet e;
  e.dim = d;
  e.num_classes = classes;
  for (std::size_t i = 0; i < n * d; ++i) e.values.push_back(float(rng.normal()));
  for (std::size_t i = 0; i < n; ++i) e.labels.push_back(std::uint32_t(rng.below(classes)));
  e.labels_observed = e.labels;
  return e;
}

}  // namespace

TEST_CASE("knn degenerate cases") {
  Rng rng(1);
  const EmbeddingSet ref = random_set(rng, 50, 4, 3);
  SUBCASE("query equal to a reference point with k = 1") {
    for (auto metric : {KnnMetric::cosine, KnnMetric::euclidean}) {
      const auto pred = knn_classify(ref, ref, KnnConfig{1, metric, KnnWeighting::uniform, 0.07});
      for (std::size_t i = 0; i < ref.size(); ++i) CHECK(pred[i] == ref.labels[i]);
    }
  }
  SUBCASE("k equal to the reference size votes the majority") {
    std::vector<std::size_t> counts(3, 0);
    for (auto y : ref.labels) ++counts[y];
    const auto majority = std::uint32_t(std::max_element(counts.begin(), counts.end()) - counts.begin());
    const EmbeddingSet q = random_set(rng, 20, 4, 3);
    for (auto y : knn_classify(ref, q, KnnConfig{ref.size(), KnnMetric::euclidean, KnnWeighting::uniform, 0.07}))
      CHECK(y == majority);
  }
  SUBCASE("empty reference") {
    EmbeddingSet empty;
    empty.dim = 4;
    empty.num_classes = 3;
    CHECK_THROWS_AS(knn_classify(empty, ref, KnnConfig{}), PreconditionError);
  }
  SUBCASE("dimension mismatch") {
    const EmbeddingSet q = random_set(rng, 5, 3, 3);
    CHECK_THROWS(knn_classify(ref, q, KnnConfig{}));
  }
}

TEST_CASE("knn matches the exhaustive oracle") {
  Rng rng(2);
  const EmbeddingSet ref = random_set(rng, 200, 5, 4);
  const EmbeddingSet q = random_set(rng, 200, 5, 4);
  for (std::size_t k : {1, 5, 20})
    for (auto metric : {KnnMetric::cosine, KnnMetric::euclidean})
      for (auto weighting : {KnnWeighting::uniform, KnnWeighting::similarity}) {
        const KnnConfig cfg{k, metric, weighting, 0.07};
        CHECK(knn_classify(ref, q, cfg) == oracle::brute_force_knn(ref, q, cfg));
      }
}

TEST_CASE("knn votes with ground truth, not observed labels") {
  Rng rng(3);
  EmbeddingSet ref = random_set(rng, 100, 3, 3);
  const EmbeddingSet q = random_set(rng, 30, 3, 3);
  const auto before = knn_classify(ref, q, KnnConfig{});
  std::reverse(ref.labels_observed.begin(), ref.labels_observed.end());
  CHECK(knn_classify(ref, q, KnnConfig{}) == before);
}

TEST_CASE("accuracy suite") {
  SUBCASE("hand example") {
    const std::vector<std::uint32_t> pred = {1, 1, 0, 0}, truth = {1, 0, 0, 0};
    const AccuracyReport r = accuracy_suite(pred, truth, 2);
    CHECK(r.overall == doctest::Approx(0.75));
    CHECK(*r.per_class[0] == doctest::Approx(2.0 / 3.0));
    CHECK(*r.per_class[1] == doctest::Approx(1.0));
    CHECK(r.balanced == doctest::Approx(5.0 / 6.0));
    CHECK(r.confusion[0][1] == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("perfect predictions") {
    const std::vector<std::uint32_t> y = {0, 1, 2, 2, 1, 0};
    const AccuracyReport r = accuracy_suite(y, y, 3);
    CHECK(r.overall == 1.0);
    CHECK(r.balanced == 1.0);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) CHECK(r.confusion[i][j] == (i == j ? 1.0 : 0.0));
  }
  SUBCASE("constant predictor on balanced data") {
    std::vector<std::uint32_t> y;
    for (std::uint32_t c = 0; c < 5; ++c) y.insert(y.end(), 7, c);
    const std::vector<std::uint32_t> pred(y.size(), 3);
    CHECK(accuracy_suite(pred, y, 5).balanced == doctest::Approx(0.2));
  }
  SUBCASE("absent class is flagged and excluded") {
    const std::vector<std::uint32_t> pred = {0, 1, 1}, truth = {0, 1, 0};
    const AccuracyReport r = accuracy_suite(pred, truth, 3);
    CHECK_FALSE(r.per_class[2].has_value());
    CHECK(r.balanced == doctest::Approx((0.5 + 1.0) / 2.0));
  }
  SUBCASE("balanced accuracy ignores class frequency") {
    const std::vector<std::uint32_t> pred = {0, 1, 1, 0}, truth = {0, 0, 1, 1};
    std::vector<std::uint32_t> p2 = pred, t2 = truth;
    // duplicate every class-1 sample: class frequencies change, per-class rates do not
    for (std::size_t i = 0; i < truth.size(); ++i)
      if (truth[i] == 1) {
        p2.push_back(pred[i]);
        t2.push_back(truth[i]);
      }
    CHECK(accuracy_suite(pred, truth, 2).balanced == accuracy_suite(p2, t2, 2).balanced);
  }
  SUBCASE("duplicating every sample leaves balanced accuracy unchanged") {
    Rng rng(9);
    std::vector<std::uint32_t> pred, truth;
    for (int i = 0; i < 90; ++i) {
      truth.push_back(std::uint32_t(rng.below(4)));
      pred.push_back(std::uint32_t(rng.below(4)));
    }
    std::vector<std::uint32_t> p3 = pred, t3 = truth;
    for (int r = 0; r < 2; ++r) {
      p3.insert(p3.end(), pred.begin(), pred.end());
      t3.insert(t3.end(), truth.begin(), truth.end());
    }
    CHECK(std::abs(accuracy_suite(pred, truth, 4).balanced - accuracy_suite(p3, t3, 4).balanced) <= 1e-12);
  }
  SUBCASE("length mismatch") {
    const std::vector<std::uint32_t> a = {0, 1}, b = {0};
    CHECK_THROWS_AS(accuracy_suite(a, b, 2), DimensionError);
  }
}

TEST_CASE("embedding") {
  const Dataset ds = generate_synthetic(3, 40, 8, 6.0, 4);
  const Model model = make_model(Architecture{}, true, false, 11);
  const EmbeddingSet a = embed(ds, model);
  const EmbeddingSet b = embed(ds, model);
  CHECK(a.dim == 32);
  CHECK(a.size() == ds.size());
  CHECK(std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(float)) == 0);
  CHECK(embed(ds, model, Representation::projector).dim == 32);
  // untrained encoder on well-separated clusters is far above chance
  SyntheticSpec ts{3, 40, 8, 6.0, 4, Split::test};
  const EmbeddingSet q = embed(generate_synthetic(ts), model);
  CHECK(knn_accuracy(a, q, KnnConfig{}) > 1.0 / 3.0 + 0.2);

  Architecture narrow;
  narrow.input_dim = 5;
  CHECK_THROWS_AS(embed(ds, make_model(narrow, true, false, 1)), ConfigError);
}

TEST_CASE("argmax picks the first maximum") {
  const Tensor logits = Tensor::constant({3, 3}, {0, 2, 2, 5, 1, 0, -1, -1, -1});
  CHECK(argmax_rows(logits) == std::vector<std::uint32_t>{1, 0, 0});
}
