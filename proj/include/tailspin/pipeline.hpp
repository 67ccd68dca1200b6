#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "tailspin/data.hpp"
#include "tailspin/evaluation.hpp"
#include "tailspin/losses.hpp"
#include "tailspin/model.hpp"
#include "tailspin/optim.hpp"
#include "tailspin/ssl.hpp"

namespace tailspin {

enum class FreezePolicy { full_head, last_layer_only };

FreezePolicy parse_freeze_policy(const std::string& name);
const char* freeze_policy_name(FreezePolicy policy) noexcept;

// Noise level above which only the last head layer is fine-tuned:
// SimSiam 0.6, BYOL 0.4, Barlow Twins 0.2. SimCLR has none (always a linear probe).
std::optional<double> freeze_threshold(SslMethod method) noexcept;
FreezePolicy select_freeze_policy(SslMethod method, double nu);

using RecordSink = std::function<void(const MetricsRecord&)>;

struct PretrainSettings {
  SslConfig ssl;
  OptimizerConfig optimizer;
  ScheduleConfig schedule;
  bool scale_lr = true;  // effective lr = base_lr * batch / 256
  KnnConfig knn;
  std::size_t knn_every = 10;  // 0 disables the per-epoch kNN proxy
  Representation representation = Representation::encoder;
};

struct FinetuneSettings {
  LossConfig loss;
  FreezePolicy freeze = FreezePolicy::full_head;
  bool linear_probe = false;  // head is a single linear layer on the encoder
  OptimizerConfig optimizer;
  std::size_t epochs = 10;
};

// Classification head: the pretrained projector minus its output layer,
// followed by a freshly initialized C-way layer. A linear probe (or a
// one-layer projector) yields just the new layer.
Mlp build_classifier_head(const Mlp& projector, bool linear_probe, std::uint32_t num_classes,
                          std::uint64_t init_seed);

AccuracyReport evaluate_classifier(const Mlp& encoder, const Mlp& head, const Dataset& test);

// Self-supervised stage. Per-epoch records are tagged "pretrain".
void pretrain(Model& model, const Dataset& train, const Dataset* test, const PretrainSettings& settings,
              std::uint64_t seed, const RecordSink& sink);

struct FinetuneResult {
  Mlp head;
  std::optional<AccuracyReport> test_report;
};

// Trains the head on frozen encoder features using observed labels and priors
// estimated from them. Encoder parameters are never written.
FinetuneResult finetune(const Model& model, const Dataset& train, const Dataset* test,
                        const FinetuneSettings& settings, std::uint64_t seed, const RecordSink& sink);

struct ExperimentSettings {
  Architecture architecture;
  PretrainSettings pretrain;
  FinetuneSettings finetune;
  std::size_t single_stage_epochs = 225;
  OptimizerConfig single_stage_optimizer;
  std::uint64_t seed = 0;
};

struct RunResult {
  Model model;
  Mlp head;
  AccuracyReport test_report;
  std::optional<double> knn_accuracy;
};

// Pretrain, then fine-tune, under a single seed.
RunResult run_two_stage(const ExperimentSettings& settings, const Dataset& train, const Dataset& test,
                        const RecordSink& sink);

// Encoder and head trained end to end from scratch with the fine-tuning loss.
RunResult run_single_stage(const ExperimentSettings& settings, const Dataset& train, const Dataset& test,
                           const RecordSink& sink);

}  // namespace tailspin
