#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tailspin/data.hpp"
#include "tailspin/model.hpp"

namespace tailspin {

// Frozen representations, one row per sample, with both label tracks of the
// source dataset. Values are single precision so they round-trip through the
// dataset file format exactly.
struct EmbeddingSet {
  std::size_t dim = 0;
  std::vector<float> values;
  std::vector<std::uint32_t> labels;  // ground truth
  std::vector<std::uint32_t> labels_observed;
  std::uint32_t num_classes = 0;
  Split split = Split::train;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const float> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
};

enum class Representation { encoder, projector };

Representation parse_representation(const std::string& name);

// Deterministic forward pass without augmentation.
EmbeddingSet embed(const Dataset& data, const Model& model, Representation rep = Representation::encoder);
EmbeddingSet embed(const Dataset& data, const Mlp& network);

enum class KnnMetric { cosine, euclidean };
enum class KnnWeighting { uniform, similarity };

KnnMetric parse_knn_metric(const std::string& name);
KnnWeighting parse_knn_weighting(const std::string& name);

struct KnnConfig {
  std::size_t k = 20;
  KnnMetric metric = KnnMetric::cosine;
  KnnWeighting weighting = KnnWeighting::similarity;
  // similarity weights are exp(cos / temperature) for cosine, 1 / (1 + d) for euclidean
  double temperature = 0.07;
};

// Nearest references (ties by smaller reference index) vote with their
// ground-truth labels; vote ties go to the smallest class index.
std::vector<std::uint32_t> knn_classify(const EmbeddingSet& reference, const EmbeddingSet& queries,
                                        const KnnConfig& config);

// Proxy metric: kNN accuracy of queries against their true labels.
double knn_accuracy(const EmbeddingSet& reference, const EmbeddingSet& queries, const KnnConfig& config);

struct AccuracyReport {
  double overall = 0.0;
  std::vector<std::optional<double>> per_class;  // nullopt: class absent from the labels
  double balanced = 0.0;                          // mean over present classes
  std::vector<std::vector<double>> confusion;     // rows normalized by true-class count
};

AccuracyReport accuracy_suite(std::span<const std::uint32_t> predictions, std::span<const std::uint32_t> labels_true,
                              std::uint32_t num_classes);

std::vector<std::uint32_t> argmax_rows(const Tensor& logits);

// One row of training history per epoch and stage.
struct MetricsRecord {
  std::string stage;  // "pretrain", "finetune" or "single_stage"
  std::size_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::optional<double> knn_accuracy;
  std::optional<std::vector<double>> per_class_accuracy;  // NaN for classes absent from the test set
  std::optional<double> balanced_accuracy;
  std::uint64_t seed = 0;
  std::optional<double> wall_time;

  void validate() const;
  bool operator==(const MetricsRecord&) const = default;
};

}  // namespace tailspin
