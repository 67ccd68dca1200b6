#include "tailspin/pipeline.hpp"

#include <cmath>

#include "tailspin/error.hpp"
#include "tailspin/rng.hpp"

namespace tailspin {

namespace {
constexpr std::uint64_t kFinetuneStream = 0x66696e6574756e65ULL;
constexpr std::uint64_t kSingleStageStream = 0x73696e676c65ULL;

Tensor dataset_matrix(const Dataset& data) {
  std::vector<double> v(data.features().begin(), data.features().end());
  return Tensor::constant({data.size(), data.dim()}, std::move(v));
}

std::vector<double> per_class_vector(const AccuracyReport& r) {
  std::vector<double> out;
  for (const auto& v : r.per_class) out.push_back(v ? *v : std::nan(""));
  return out;
}

void emit(const RecordSink& sink, const MetricsRecord& record) {
  record.validate();
  if (sink) sink(record);
}

}  // namespace

FreezePolicy parse_freeze_policy(const std::string& name) {
  if (name == "full_head") return FreezePolicy::full_head;
  if (name == "last_layer_only") return FreezePolicy::last_layer_only;
  throw ConfigError("unknown freeze policy '" + name + "' (expected full_head or last_layer_only)");
}

const char* freeze_policy_name(FreezePolicy policy) noexcept {
  return policy == FreezePolicy::full_head ? "full_head" : "last_layer_only";
}

std::optional<double> freeze_threshold(SslMethod method) noexcept {
  switch (method) {
    case SslMethod::simsiam: return 0.6;
    case SslMethod::byol: return 0.4;
    case SslMethod::barlow_twins: return 0.2;
    case SslMethod::simclr: return std::nullopt;
  }
  return std::nullopt;
}

FreezePolicy select_freeze_policy(SslMethod method, double nu) {
  if (!(nu >= 0.0 && nu < 1.0)) throw ConfigError("noise level for freeze policy must lie in [0, 1)");
  const auto threshold = freeze_threshold(method);
  if (!threshold) return FreezePolicy::last_layer_only;
  return nu <= *threshold ? FreezePolicy::full_head : FreezePolicy::last_layer_only;
}

Mlp build_classifier_head(const Mlp& projector, bool linear_probe, std::uint32_t num_classes,
                          std::uint64_t init_seed) {
  Rng rng(init_seed);
  if (linear_probe || projector.num_layers() <= 1) {
    return Mlp({projector.input_dim(), num_classes}, false, rng);
  }
  std::vector<Linear> layers;
  for (std::size_t l = 0; l + 1 < projector.num_layers(); ++l) {
    const auto& src = projector.layers()[l];
    layers.push_back(Linear{src.weight.clone(), src.bias.clone()});
  }
  const std::size_t hidden = layers.back().weight.shape()[1];
  Mlp fresh({hidden, num_classes}, false, rng);
  layers.push_back(fresh.layers().front());
  return Mlp(std::move(layers), false);
}

AccuracyReport evaluate_classifier(const Mlp& encoder, const Mlp& head, const Dataset& test) {
  Tape tape;
  Tensor logits = head.forward(tape, encoder.forward(tape, dataset_matrix(test)));
  return accuracy_suite(argmax_rows(logits), test.labels_true(), test.num_classes());
}

void pretrain(Model& model, const Dataset& train, const Dataset* test, const PretrainSettings& settings,
              std::uint64_t seed, const RecordSink& sink) {
  settings.ssl.validate();
  settings.schedule.validate();
  const std::size_t bs = settings.optimizer.batch_size;
  const double effective = settings.scale_lr ? scaled_lr(settings.optimizer.base_lr, bs) : settings.optimizer.base_lr;
  Optimizer optimizer(settings.optimizer, model.online_parameters());
  for (std::size_t epoch = 0; epoch < settings.schedule.total_epochs; ++epoch) {
    const double lr = lr_at(settings.schedule, epoch, effective);
    MetricsRecord rec;
    rec.stage = "pretrain";
    rec.epoch = epoch;
    rec.lr = lr;
    rec.seed = seed;
    rec.loss = pretrain_epoch(model, train, settings.ssl, optimizer, lr, bs, seed, epoch);
    const bool last = epoch + 1 == settings.schedule.total_epochs;
    if (test && settings.knn_every > 0 && ((epoch + 1) % settings.knn_every == 0 || last)) {
      auto cfg = settings.knn;
      cfg.k = std::min(cfg.k, train.size());
      rec.knn_accuracy = knn_accuracy(embed(train, model, settings.representation),
                                      embed(*test, model, settings.representation), cfg);
    }
    emit(sink, rec);
  }
}

namespace {

// Mean loss of one supervised epoch of `head` on top of `features` (inputs
// already mapped through any frozen encoder) or of encoder+head end to end.
double supervised_epoch(const Tensor& inputs, const Mlp* encoder, const Mlp& head, const Dataset& train,
                        const Priors& priors, const LossConfig& loss, Optimizer& optimizer, double lr,
                        std::uint64_t stream_seed, std::uint64_t epoch) {
  const std::size_t dim = inputs.cols();
  const auto batches = epoch_batches(train.size(), optimizer.config().batch_size, 1, stream_seed, epoch);
  const auto all = inputs.values();
  double total = 0.0;
  for (const auto& batch : batches) {
    std::vector<double> x;
    x.reserve(batch.size() * dim);
    std::vector<std::uint32_t> y;
    y.reserve(batch.size());
    for (std::size_t i : batch) {
      x.insert(x.end(), all.begin() + static_cast<std::ptrdiff_t>(i * dim),
               all.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
      y.push_back(train.labels_observed()[i]);
    }
    Tape tape;
    Tensor h = Tensor::constant({batch.size(), dim}, std::move(x));
    if (encoder) h = encoder->forward(tape, h);
    Tensor value = classification_loss(tape, head.forward(tape, h), y, priors, loss);
    optimizer.zero_grad();
    tape.backward(value);
    optimizer.step(lr);
    total += value.item();
  }
  return total / static_cast<double>(batches.size());
}

MetricsRecord supervised_record(const char* stage, std::size_t epoch, double loss, double lr, std::uint64_t seed,
                                const std::optional<AccuracyReport>& report) {
  MetricsRecord rec;
  rec.stage = stage;
  rec.epoch = epoch;
  rec.loss = loss;
  rec.lr = lr;
  rec.seed = seed;
  if (report) {
    rec.per_class_accuracy = per_class_vector(*report);
    rec.balanced_accuracy = report->balanced;
  }
  return rec;
}

}  // namespace

FinetuneResult finetune(const Model& model, const Dataset& train, const Dataset* test,
                        const FinetuneSettings& settings, std::uint64_t seed, const RecordSink& sink) {
  if (settings.epochs == 0) throw ConfigError("fine-tuning needs at least one epoch");
  if (train.dim() != model.encoder.input_dim()) {
    throw ConfigError("finetune: dataset dimension does not match encoder input");
  }
  const Priors priors = estimate_priors(train);
  FinetuneResult result;
  result.head = build_classifier_head(model.projector, settings.linear_probe, train.num_classes(),
                                      derive_seed(seed, {seed_purpose::init, 2}));

  std::vector<Tensor> trainable;
  if (settings.freeze == FreezePolicy::full_head) {
    trainable = result.head.parameters();
  } else {
    const auto& last = result.head.layers().back();
    trainable = {last.weight, last.bias};
  }
  Optimizer optimizer(settings.optimizer, trainable);

  // The encoder is frozen: map the training set through it once.
  Tensor features;
  {
    Tape tape;
    features = model.encoder.forward(tape, dataset_matrix(train)).clone_constant();
  }
  const std::uint64_t stream = derive_seed(seed, {kFinetuneStream});
  for (std::size_t epoch = 0; epoch < settings.epochs; ++epoch) {
    const double lr = settings.optimizer.base_lr;
    const double loss =
        supervised_epoch(features, nullptr, result.head, train, priors, settings.loss, optimizer, lr, stream, epoch);
    std::optional<AccuracyReport> report;
    if (test) report = evaluate_classifier(model.encoder, result.head, *test);
    emit(sink, supervised_record("finetune", epoch, loss, lr, seed, report));
    if (epoch + 1 == settings.epochs) result.test_report = report;
  }
  return result;
}

RunResult run_two_stage(const ExperimentSettings& settings, const Dataset& train, const Dataset& test,
                        const RecordSink& sink) {
  const SslMethod method = settings.pretrain.ssl.method;
  Architecture arch = settings.architecture;
  arch.input_dim = train.dim();
  RunResult out;
  out.model = make_model(arch, uses_predictor(method), method == SslMethod::byol,
                         derive_seed(settings.seed, {seed_purpose::init, 1}));
  pretrain(out.model, train, &test, settings.pretrain, settings.seed, sink);
  auto cfg = settings.pretrain.knn;
  cfg.k = std::min(cfg.k, train.size());
  out.knn_accuracy = knn_accuracy(embed(train, out.model, settings.pretrain.representation),
                                  embed(test, out.model, settings.pretrain.representation), cfg);
  FinetuneResult ft = finetune(out.model, train, &test, settings.finetune, settings.seed, sink);
  out.head = std::move(ft.head);
  out.test_report = std::move(*ft.test_report);
  return out;
}

RunResult run_single_stage(const ExperimentSettings& settings, const Dataset& train, const Dataset& test,
                           const RecordSink& sink) {
  if (settings.single_stage_epochs == 0) throw ConfigError("single-stage training needs at least one epoch");
  const SslMethod method = settings.pretrain.ssl.method;
  Architecture arch = settings.architecture;
  arch.input_dim = train.dim();
  RunResult out;
  out.model = make_model(arch, false, false, derive_seed(settings.seed, {seed_purpose::init, 3}));
  out.head = build_classifier_head(out.model.projector, settings.finetune.linear_probe || method == SslMethod::simclr,
                                   train.num_classes(), derive_seed(settings.seed, {seed_purpose::init, 4}));
  const Priors priors = estimate_priors(train);
  auto params = out.model.encoder.parameters();
  for (auto& p : out.head.parameters()) params.push_back(p);
  Optimizer optimizer(settings.single_stage_optimizer, params);
  const Tensor inputs = dataset_matrix(train);
  const std::uint64_t stream = derive_seed(settings.seed, {kSingleStageStream});
  for (std::size_t epoch = 0; epoch < settings.single_stage_epochs; ++epoch) {
    const double lr = settings.single_stage_optimizer.base_lr;
    const double loss = supervised_epoch(inputs, &out.model.encoder, out.head, train, priors, settings.finetune.loss,
                                         optimizer, lr, stream, epoch);
    AccuracyReport report = evaluate_classifier(out.model.encoder, out.head, test);
    emit(sink, supervised_record("single_stage", epoch, loss, lr, settings.seed, report));
    if (epoch + 1 == settings.single_stage_epochs) out.test_report = std::move(report);
  }
  auto cfg = settings.pretrain.knn;
  cfg.k = std::min(cfg.k, train.size());
  out.knn_accuracy = knn_accuracy(embed(train, out.model.encoder), embed(test, out.model.encoder), cfg);
  return out;
}

}  // namespace tailspin
