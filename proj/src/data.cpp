#include "tailspin/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tailspin/error.hpp"
#include "tailspin/rng.hpp"

namespace tailspin {

const char* split_name(Split split) noexcept { return split == Split::train ? "train" : "test"; }

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + name + "'");
}

Dataset::Dataset(std::size_t dim, std::uint32_t num_classes, std::vector<float> features,
                 std::vector<std::uint32_t> labels_true, Split split)
    : Dataset(dim, num_classes, std::move(features), labels_true, labels_true, split) {}

Dataset::Dataset(std::size_t dim, std::uint32_t num_classes, std::vector<float> features,
                 std::vector<std::uint32_t> labels_true, std::vector<std::uint32_t> labels_observed, Split split)
    : dim_(dim),
      num_classes_(num_classes),
      features_(std::move(features)),
      labels_true_(std::move(labels_true)),
      labels_observed_(std::move(labels_observed)),
      split_(split) {
  validate();
}

void Dataset::validate() const {
  if (num_classes_ < 2) throw ConfigError("dataset needs at least two classes");
  if (dim_ == 0) throw ConfigError("dataset feature dimension must be positive");
  if (labels_true_.empty()) throw ConfigError("dataset is empty");
  if (labels_observed_.size() != labels_true_.size()) throw DimensionError("label tracks differ in length");
  if (features_.size() != labels_true_.size() * dim_) {
    throw DimensionError("feature matrix holds " + std::to_string(features_.size()) + " values, expected " +
                         std::to_string(labels_true_.size()) + "x" + std::to_string(dim_));
  }
  for (std::size_t i = 0; i < labels_true_.size(); ++i) {
    if (labels_true_[i] >= num_classes_ || labels_observed_[i] >= num_classes_) {
      throw DomainError("label index out of range at sample " + std::to_string(i));
    }
  }
}

std::vector<std::size_t> Dataset::class_counts_true() const {
  std::vector<std::size_t> counts(num_classes_, 0);
  for (auto y : labels_true_) ++counts[y];
  return counts;
}

std::vector<std::size_t> Dataset::class_counts_observed() const {
  std::vector<std::size_t> counts(num_classes_, 0);
  for (auto y : labels_observed_) ++counts[y];
  return counts;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  std::vector<float> feats;
  feats.reserve(indices.size() * dim_);
  std::vector<std::uint32_t> truth, observed;
  truth.reserve(indices.size());
  observed.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw PreconditionError("subset index out of range");
    auto r = row(i);
    feats.insert(feats.end(), r.begin(), r.end());
    truth.push_back(labels_true_[i]);
    observed.push_back(labels_observed_[i]);
  }
  Dataset out(dim_, num_classes_, std::move(feats), std::move(truth), std::move(observed), split_);
  out.provenance_ = provenance_;
  return out;
}

Dataset Dataset::with_observed_labels(std::vector<std::uint32_t> labels) const {
  Dataset out(dim_, num_classes_, features_, labels_true_, std::move(labels), split_);
  out.provenance_ = provenance_;
  return out;
}

Dataset Dataset::with_true_labels_replaced(std::vector<std::uint32_t> labels) const {
  Dataset out(dim_, num_classes_, features_, std::move(labels), labels_observed_, split_);
  out.provenance_ = provenance_;
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::vector<double>> synthetic_class_means(std::uint32_t num_classes, std::size_t dim,
                                                       double separation, std::uint64_t seed) {
  std::vector<std::vector<double>> means(num_classes, std::vector<double>(dim, 0.0));
  if (num_classes <= dim) {
    // Scaled one-hot vertices: every pair at distance exactly `separation`.
    for (std::uint32_t c = 0; c < num_classes; ++c) means[c][c] = separation / std::sqrt(2.0);
    return means;
  }
  Rng rng(derive_seed(seed, {0x6d65616e73ULL}));
  const double radius = separation * std::sqrt(static_cast<double>(num_classes));
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw ConfigError("could not place class means at the requested separation");
      for (auto& v : means[c]) v = radius * rng.normal() / std::sqrt(static_cast<double>(dim));
      bool ok = true;
      for (std::uint32_t o = 0; o < c && ok; ++o) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < dim; ++j) d2 += (means[c][j] - means[o][j]) * (means[c][j] - means[o][j]);
        ok = std::sqrt(d2) >= separation;
      }
      if (ok) break;
    }
  }
  return means;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("generate_synthetic: need at least two classes");
  if (spec.per_class < 1) throw ConfigError("generate_synthetic: per_class must be >= 1");
  if (spec.dim < 2) throw ConfigError("generate_synthetic: dim must be >= 2");
  if (!(spec.separation > 0.0)) throw ConfigError("generate_synthetic: separation must be positive");

  const auto means = synthetic_class_means(spec.num_classes, spec.dim, spec.separation, spec.seed);
  Rng rng(derive_seed(spec.seed, {spec.split == Split::train ? seed_purpose::data : seed_purpose::test_data}));
  const std::size_t n = spec.num_classes * spec.per_class;
  std::vector<float> feats;
  feats.reserve(n * spec.dim);
  std::vector<std::uint32_t> labels;
  labels.reserve(n);
  for (std::uint32_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      for (std::size_t j = 0; j < spec.dim; ++j) feats.push_back(static_cast<float>(means[c][j] + rng.normal()));
      labels.push_back(c);
    }
  }
  Dataset ds(spec.dim, spec.num_classes, std::move(feats), std::move(labels), spec.split);
  ds.provenance().generator_seed = spec.seed;
  ds.provenance().separation = spec.separation;
  return ds;
}

Dataset generate_synthetic(std::uint32_t num_classes, std::size_t per_class, std::size_t dim, double separation,
                           std::uint64_t seed) {
  return generate_synthetic(SyntheticSpec{num_classes, per_class, dim, separation, seed, Split::train});
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> exponential_profile(std::size_t n_max, std::uint32_t num_classes, double gamma) {
  if (!(gamma >= 1.0) || !std::isfinite(gamma)) throw ConfigError("imbalance ratio gamma must be >= 1");
  if (num_classes < 2) throw ConfigError("imbalance profile needs at least two classes");
  std::vector<std::size_t> counts(num_classes);
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    const double exponent = -static_cast<double>(c) / static_cast<double>(num_classes - 1);
    counts[c] = static_cast<std::size_t>(std::llround(static_cast<double>(n_max) * std::pow(gamma, exponent)));
    if (counts[c] == 0) {
      throw ConfigError("imbalance gamma=" + std::to_string(gamma) + " leaves class " + std::to_string(c) +
                        " with zero samples");
    }
  }
  return counts;
}

Dataset apply_exponential_imbalance(const Dataset& ds, const ImbalanceSpec& spec) {
  const auto counts = ds.class_counts_true();
  const std::size_t n_max = counts[0];
  for (std::size_t c : counts) {
    if (c != n_max) throw PreconditionError("apply_exponential_imbalance: input dataset is not balanced");
  }
  const auto keep = exponential_profile(n_max, ds.num_classes(), spec.gamma);

  std::vector<std::vector<std::size_t>> by_class(ds.num_classes());
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels_true()[i]].push_back(i);

  Rng rng(spec.seed);
  std::vector<std::size_t> selected;
  for (std::uint32_t c = 0; c < ds.num_classes(); ++c) {
    auto& idx = by_class[c];
    rng.shuffle(std::span<std::size_t>(idx));
    selected.insert(selected.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep[c]));
  }
  std::sort(selected.begin(), selected.end());
  Dataset out = ds.subset(selected);
  out.provenance().gamma = spec.gamma;
  out.provenance().imbalance_seed = spec.seed;
  return out;
}

Dataset inject_symmetric_noise(const Dataset& ds, const NoiseSpec& spec) {
  if (!(spec.nu >= 0.0 && spec.nu < 1.0)) throw ConfigError("noise fraction nu must lie in [0, 1)");
  Rng rng(spec.seed);
  std::vector<std::size_t> chosen;
  auto pick = [&](std::vector<std::size_t>& pool, std::size_t k) {
    // partial Fisher-Yates: the first k slots become a uniform k-subset
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
      chosen.push_back(pool[i]);
    }
  };
  if (spec.selection == NoiseSelection::global) {
    std::vector<std::size_t> pool(ds.size());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    pick(pool, static_cast<std::size_t>(std::llround(spec.nu * static_cast<double>(ds.size()))));
  } else {
    std::vector<std::vector<std::size_t>> by_class(ds.num_classes());
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels_true()[i]].push_back(i);
    for (auto& pool : by_class) pick(pool, static_cast<std::size_t>(std::llround(spec.nu * static_cast<double>(pool.size()))));
  }
  std::vector<std::uint32_t> observed(ds.labels_observed().begin(), ds.labels_observed().end());
  for (std::size_t i : chosen) observed[i] = static_cast<std::uint32_t>(rng.below(ds.num_classes()));

  Dataset out = ds.with_observed_labels(std::move(observed));
  out.provenance().nu = spec.nu;
  out.provenance().noise_seed = spec.seed;
  out.provenance().num_resampled = chosen.size();
  return out;
}

Priors estimate_priors(const Dataset& ds, bool floor) {
  const auto counts = ds.class_counts_observed();
  const double n = static_cast<double>(ds.size());
  Priors priors;
  priors.pi.resize(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0 && !floor) {
      throw DomainError("class " + std::to_string(c) + " has no observed samples; prior would be zero");
    }
    priors.pi[c] = static_cast<double>(counts[c]) / n;
  }
  if (floor) {
    const double minimum = 1.0 / (10.0 * n);
    double total = 0.0;
    for (double& p : priors.pi) {
      p = std::max(p, minimum);
      total += p;
    }
    for (double& p : priors.pi) p /= total;
  }
  return priors;
}

// ---------------------------------------------------------------------------

void AugmentationSpec::validate() const {
  if (!(gaussian_sigma >= 0.0) || !(scale_jitter >= 0.0) || !(mask_prob >= 0.0)) {
    throw ConfigError("augmentation parameters must be non-negative");
  }
  if (!(mask_prob < 1.0)) throw ConfigError("augmentation mask_prob must be < 1");
}

std::uint64_t augmentation_seed(std::uint64_t global_seed, std::uint64_t epoch, std::uint64_t sample_index,
                                std::uint64_t view_index) {
  return derive_seed(global_seed, {seed_purpose::augmentation, epoch, sample_index, view_index});
}

std::vector<double> augment(std::span<const float> sample, const AugmentationSpec& spec, std::uint64_t draw_seed) {
  spec.validate();
  Rng rng(draw_seed);
  std::vector<double> out(sample.begin(), sample.end());
  for (double v : out) {
    if (!std::isfinite(v)) throw NumericError("augment: non-finite input");
  }
  if (spec.scale_jitter > 0.0) {
    const double factor = rng.uniform(1.0 - spec.scale_jitter, 1.0 + spec.scale_jitter);
    for (double& v : out) v *= factor;
  }
  if (spec.gaussian_sigma > 0.0) {
    for (double& v : out) v += spec.gaussian_sigma * rng.normal();
  }
  if (spec.mask_prob > 0.0) {
    for (double& v : out)
      if (rng.uniform() < spec.mask_prob) v = 0.0;
  }
  return out;
}

}  // namespace tailspin
