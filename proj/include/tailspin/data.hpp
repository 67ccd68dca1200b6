#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tailspin/losses.hpp"

namespace tailspin {

enum class Split { train, test };

const char* split_name(Split split) noexcept;
Split parse_split(const std::string& name);

// Record of how a dataset was produced; serialized into the manifest.
struct Provenance {
  std::optional<std::uint64_t> generator_seed;
  std::optional<double> separation;
  std::optional<double> gamma;
  std::optional<std::uint64_t> imbalance_seed;
  std::optional<double> nu;
  std::optional<std::uint64_t> noise_seed;
  std::optional<std::size_t> num_resampled;
};

// N x d single-precision features with two label tracks. The true labels are
// fixed at construction; only the observed track can be replaced.
class Dataset {
 public:
  Dataset(std::size_t dim, std::uint32_t num_classes, std::vector<float> features,
          std::vector<std::uint32_t> labels_true, Split split = Split::train);
  Dataset(std::size_t dim, std::uint32_t num_classes, std::vector<float> features,
          std::vector<std::uint32_t> labels_true, std::vector<std::uint32_t> labels_observed, Split split);

  std::size_t size() const noexcept { return labels_true_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  std::uint32_t num_classes() const noexcept { return num_classes_; }
  Split split() const noexcept { return split_; }

  std::span<const float> features() const noexcept { return features_; }
  std::span<const float> row(std::size_t i) const { return {features_.data() + i * dim_, dim_}; }
  std::span<const std::uint32_t> labels_observed() const noexcept { return labels_observed_; }
  std::span<const std::uint32_t> labels_true() const noexcept { return labels_true_; }

  const Provenance& provenance() const noexcept { return provenance_; }
  Provenance& provenance() noexcept { return provenance_; }

  std::vector<std::size_t> class_counts_true() const;
  std::vector<std::size_t> class_counts_observed() const;

  // Rows in the given order, both label tracks carried along.
  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset with_observed_labels(std::vector<std::uint32_t> labels) const;
  // Test hook: same features and observed labels, different ground truth.
  Dataset with_true_labels_replaced(std::vector<std::uint32_t> labels) const;

 private:
  void validate() const;

  std::size_t dim_;
  std::uint32_t num_classes_;
  std::vector<float> features_;
  std::vector<std::uint32_t> labels_true_;
  std::vector<std::uint32_t> labels_observed_;
  Split split_;
  Provenance provenance_;
};

struct SyntheticSpec {
  std::uint32_t num_classes = 3;
  std::size_t per_class = 100;
  std::size_t dim = 8;
  double separation = 6.0;
  std::uint64_t seed = 0;
  Split split = Split::train;
};

// Isotropic unit-variance Gaussian clusters. Class means depend only on the
// seed, so train and test splits drawn with the same seed share them.
Dataset generate_synthetic(const SyntheticSpec& spec);
Dataset generate_synthetic(std::uint32_t num_classes, std::size_t per_class, std::size_t dim, double separation,
                           std::uint64_t seed);

// Class means used by generate_synthetic; pairwise distances >= separation.
std::vector<std::vector<double>> synthetic_class_means(std::uint32_t num_classes, std::size_t dim,
                                                       double separation, std::uint64_t seed);

struct ImbalanceSpec {
  double gamma = 1.0;
  std::uint64_t seed = 0;
};

// n_c = round(n_max * gamma^(-c / (C - 1)))
std::vector<std::size_t> exponential_profile(std::size_t n_max, std::uint32_t num_classes, double gamma);
Dataset apply_exponential_imbalance(const Dataset& ds, const ImbalanceSpec& spec);

enum class NoiseSelection { global, per_class };

struct NoiseSpec {
  double nu = 0.0;
  std::uint64_t seed = 0;
  NoiseSelection selection = NoiseSelection::global;
};

// Selects round(nu * N) samples (round(nu * n_c) per class for per_class) and
// redraws their observed label uniformly over all C classes.
Dataset inject_symmetric_noise(const Dataset& ds, const NoiseSpec& spec);

// pi_y = observed count / N. With the floor on, entries are floored at
// 1 / (10 N) and renormalized; without it an empty class is an error.
Priors estimate_priors(const Dataset& ds, bool floor = true);

struct AugmentationSpec {
  double gaussian_sigma = 0.0;
  double mask_prob = 0.0;
  double scale_jitter = 0.0;

  void validate() const;
};

std::uint64_t augmentation_seed(std::uint64_t global_seed, std::uint64_t epoch, std::uint64_t sample_index,
                                std::uint64_t view_index);

// Scale jitter, then additive Gaussian noise, then coordinate masking.
std::vector<double> augment(std::span<const float> sample, const AugmentationSpec& spec, std::uint64_t draw_seed);

}  // namespace tailspin
