#include "tailspin/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tailspin/error.hpp"

namespace tailspin {

Representation parse_representation(const std::string& name) {
  if (name == "encoder") return Representation::encoder;
  if (name == "projector") return Representation::projector;
  throw ConfigError("unknown representation '" + name + "' (expected encoder or projector)");
}

KnnMetric parse_knn_metric(const std::string& name) {
  if (name == "cosine") return KnnMetric::cosine;
  if (name == "euclidean") return KnnMetric::euclidean;
  throw ConfigError("unknown kNN metric '" + name + "' (expected cosine or euclidean)");
}

KnnWeighting parse_knn_weighting(const std::string& name) {
  if (name == "uniform") return KnnWeighting::uniform;
  if (name == "similarity") return KnnWeighting::similarity;
  throw ConfigError("unknown kNN weighting '" + name + "' (expected uniform or similarity)");
}

namespace {
EmbeddingSet to_embedding_set(const Dataset& data, const Tensor& out) {
  EmbeddingSet set;
  set.dim = out.cols();
  set.values.reserve(out.size());
  for (double v : out.values()) set.values.push_back(static_cast<float>(v));
  set.labels.assign(data.labels_true().begin(), data.labels_true().end());
  set.labels_observed.assign(data.labels_observed().begin(), data.labels_observed().end());
  set.num_classes = data.num_classes();
  set.split = data.split();
  return set;
}

Tensor all_rows(const Dataset& data) {
  std::vector<double> v(data.features().begin(), data.features().end());
  return Tensor::constant({data.size(), data.dim()}, std::move(v));
}
}  // namespace

EmbeddingSet embed(const Dataset& data, const Mlp& network) {
  if (network.input_dim() != data.dim()) {
    throw ConfigError("embed: dataset dimension " + std::to_string(data.dim()) + " does not match network input " +
                      std::to_string(network.input_dim()));
  }
  Tape tape;
  return to_embedding_set(data, network.forward(tape, all_rows(data)));
}

EmbeddingSet embed(const Dataset& data, const Model& model, Representation rep) {
  if (model.encoder.input_dim() != data.dim()) {
    throw ConfigError("embed: dataset dimension " + std::to_string(data.dim()) + " does not match encoder input " +
                      std::to_string(model.encoder.input_dim()));
  }
  Tape tape;
  Tensor h = model.encoder.forward(tape, all_rows(data));
  if (rep == Representation::projector) h = model.projector.forward(tape, h);
  return to_embedding_set(data, h);
}

std::vector<std::uint32_t> knn_classify(const EmbeddingSet& reference, const EmbeddingSet& queries,
                                        const KnnConfig& config) {
  if (reference.size() == 0) throw PreconditionError("knn_classify: empty reference set");
  if (config.k < 1 || config.k > reference.size()) {
    throw PreconditionError("knn_classify: k=" + std::to_string(config.k) + " outside [1, " +
                            std::to_string(reference.size()) + "]");
  }
  if (reference.dim != queries.dim) throw DimensionError("knn_classify: embedding dimensions differ");
  const std::size_t d = reference.dim;
  std::uint32_t num_classes = std::max(reference.num_classes, queries.num_classes);
  for (auto y : reference.labels) num_classes = std::max(num_classes, y + 1);

  std::vector<double> ref_norm(reference.size(), 0.0);
  for (std::size_t r = 0; r < reference.size(); ++r) {
    double s = 0.0;
    for (float v : reference.row(r)) s += static_cast<double>(v) * v;
    ref_norm[r] = std::sqrt(s);
  }

  std::vector<std::uint32_t> predictions(queries.size());
  std::vector<std::pair<double, std::size_t>> keyed(reference.size());
  std::vector<double> votes(num_classes);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    auto qv = queries.row(q);
    double qn = 0.0;
    for (float v : qv) qn += static_cast<double>(v) * v;
    qn = std::sqrt(qn);
    // key is ascending-is-closer: negative cosine or euclidean distance
    for (std::size_t r = 0; r < reference.size(); ++r) {
      auto rv = reference.row(r);
      double key;
      if (config.metric == KnnMetric::cosine) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += static_cast<double>(qv[j]) * rv[j];
        const double denom = qn * ref_norm[r];
        key = denom > 0.0 ? -dot / denom : 0.0;
      } else {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = static_cast<double>(qv[j]) - rv[j];
          s += diff * diff;
        }
        key = std::sqrt(s);
      }
      keyed[r] = {key, r};
    }
    std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(config.k), keyed.end());
    std::fill(votes.begin(), votes.end(), 0.0);
    for (std::size_t i = 0; i < config.k; ++i) {
      const auto [key, r] = keyed[i];
      double w = 1.0;
      if (config.weighting == KnnWeighting::similarity) {
        w = config.metric == KnnMetric::cosine ? std::exp(-key / config.temperature) : 1.0 / (1.0 + key);
      }
      votes[reference.labels[r]] += w;
    }
    predictions[q] = static_cast<std::uint32_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
  return predictions;
}

double knn_accuracy(const EmbeddingSet& reference, const EmbeddingSet& queries, const KnnConfig& config) {
  const auto pred = knn_classify(reference, queries, config);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == queries.labels[i];
  return queries.size() ? static_cast<double>(correct) / static_cast<double>(queries.size()) : 0.0;
}

AccuracyReport accuracy_suite(std::span<const std::uint32_t> predictions, std::span<const std::uint32_t> labels_true,
                              std::uint32_t num_classes) {
  if (predictions.size() != labels_true.size()) {
    throw DimensionError("accuracy_suite: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(labels_true.size()) + " labels");
  }
  if (predictions.empty()) throw PreconditionError("accuracy_suite: no samples");
  std::vector<std::vector<std::size_t>> counts(num_classes, std::vector<std::size_t>(num_classes, 0));
  std::vector<std::size_t> totals(num_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (labels_true[i] >= num_classes || predictions[i] >= num_classes) {
      throw DomainError("accuracy_suite: class index out of range");
    }
    ++counts[labels_true[i]][predictions[i]];
    ++totals[labels_true[i]];
    correct += predictions[i] == labels_true[i];
  }
  AccuracyReport report;
  report.overall = static_cast<double>(correct) / static_cast<double>(predictions.size());
  report.per_class.resize(num_classes);
  report.confusion.assign(num_classes, std::vector<double>(num_classes, 0.0));
  double sum = 0.0;
  std::size_t present = 0;
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    if (totals[c] == 0) continue;
    const double n = static_cast<double>(totals[c]);
    for (std::uint32_t p = 0; p < num_classes; ++p) report.confusion[c][p] = static_cast<double>(counts[c][p]) / n;
    report.per_class[c] = static_cast<double>(counts[c][c]) / n;
    sum += *report.per_class[c];
    ++present;
  }
  report.balanced = sum / static_cast<double>(present);
  return report;
}

std::vector<std::uint32_t> argmax_rows(const Tensor& logits) {
  const std::size_t m = logits.rows(), n = logits.cols();
  auto v = logits.values();
  std::vector<std::uint32_t> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    auto begin = v.begin() + static_cast<std::ptrdiff_t>(i * n);
    out[i] = static_cast<std::uint32_t>(std::max_element(begin, begin + static_cast<std::ptrdiff_t>(n)) - begin);
  }
  return out;
}

void MetricsRecord::validate() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (stage.empty()) throw PreconditionError("metrics record without a stage");
  if (!std::isfinite(loss) || !std::isfinite(lr)) throw NumericError("metrics record holds a non-finite loss or lr");
  if (knn_accuracy && !in_unit(*knn_accuracy)) throw DomainError("knn accuracy outside [0, 1]");
  if (balanced_accuracy && !in_unit(*balanced_accuracy)) throw DomainError("balanced accuracy outside [0, 1]");
  if (per_class_accuracy) {
    for (double v : *per_class_accuracy)
      if (!std::isnan(v) && !in_unit(v)) throw DomainError("per-class accuracy outside [0, 1]");
  }
}

}  // namespace tailspin
