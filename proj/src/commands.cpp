#include "tailspin/commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include "json.hpp"
#include <algorithm>
#include <sstream>

#include "tailspin/error.hpp"
#include "tailspin/gradcheck.hpp"
#include "tailspin/io.hpp"
#include "tailspin/log.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace tailspin {

namespace {

std::size_t get_size(const ExperimentConfig& c, const std::string& key, std::int64_t min = 0) {
  const auto v = c.get_int(key);
  if (v < min) throw ConfigError("key '" + key + "' must be >= " + std::to_string(min));
  return static_cast<std::size_t>(v);
}

double auto_double(const ExperimentConfig& c, const std::string& key, double fallback) {
  return c.is_auto(key) ? fallback : c.get_double(key);
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

ordered_json report_json(const AccuracyReport& r) {
  ordered_json j;
  j["overall_accuracy"] = r.overall;
  j["balanced_accuracy"] = r.balanced;
  ordered_json pc = ordered_json::array();
  for (const auto& v : r.per_class) pc.push_back(v ? ordered_json(*v) : ordered_json(nullptr));
  j["per_class_accuracy"] = pc;
  return j;
}

// Output directory bookkeeping shared by every subcommand.
class RunOutputs {
 public:
  RunOutputs(const ExperimentConfig& config, const std::string& command)
      : dir_(config.get_string("run.output_dir")), wall_(config.get_bool("run.record_wall_time")) {
    if (dir_.empty()) throw ConfigError("run.output_dir must not be empty");
    fs::create_directories(dir_);
    write_text_file(dir_ / "config.resolved", config.resolved_text());
    write_text_file(dir_ / "config.source", config.source_text());
    summary_["command"] = command;
    summary_["seed"] = config.get_int("run.seed");
    summary_["config_hash"] = hex64(config.hash());
    start_ = std::chrono::steady_clock::now();
  }

  const fs::path& dir() const noexcept { return dir_; }
  ordered_json& summary() noexcept { return summary_; }

  // Truncates metrics.jsonl and returns a sink appending to it.
  RecordSink metrics_sink() {
    const fs::path path = dir_ / "metrics.jsonl";
    fs::remove(path);
    writer_ = std::make_shared<MetricsWriter>(path);
    return [this](const MetricsRecord& r) {
      MetricsRecord rec = r;
      if (wall_) {
        rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
      }
      log_debug(metrics_to_line(rec));
      writer_->append(rec);
    };
  }

  void finish() { write_text_file(dir_ / "summary.json", summary_.dump(2) + "\n"); }

 private:
  fs::path dir_;
  bool wall_;
  ordered_json summary_;
  std::shared_ptr<MetricsWriter> writer_;
  std::chrono::steady_clock::time_point start_;
};

Dataset generate_split(const ExperimentConfig& c, Split split) {
  const auto classes = get_size(c, "data.num_classes", 2);
  SyntheticSpec spec;
  spec.num_classes = static_cast<std::uint32_t>(classes);
  spec.per_class = get_size(c, split == Split::train ? "data.per_class" : "data.test_per_class", 1);
  spec.dim = get_size(c, "data.dim", 1);
  spec.separation = c.get_double("data.separation");
  spec.seed = data_seed(c);
  spec.split = split;
  return generate_synthetic(spec);
}

Dataset corrupt(const Dataset& clean, const ExperimentConfig& c) {
  const std::uint64_t base = data_seed(c);
  Dataset out = clean;
  const double gamma = c.get_double("data.gamma");
  if (gamma != 1.0) {
    out = apply_exponential_imbalance(out, ImbalanceSpec{gamma, derive_seed(base, {seed_purpose::imbalance})});
  } else {
    out.provenance().gamma = 1.0;
  }
  NoiseSpec noise;
  noise.nu = c.get_double("data.nu");
  noise.seed = derive_seed(base, {seed_purpose::noise});
  noise.selection = c.get_string("data.noise_selection") == "per_class" ? NoiseSelection::per_class
                                                                        : NoiseSelection::global;
  return inject_symmetric_noise(out, noise);
}

Dataset load_test(const ExperimentConfig& c) {
  const std::string path = c.get_string("data.test_manifest");
  if (!path.empty()) return read_dataset(path);
  return generate_split(c, Split::test);
}

Model model_from_checkpoint(const Checkpoint& ck, const fs::path& dir) {
  auto need = [&](const char* name) -> const Mlp& {
    auto it = ck.modules.find(name);
    if (it == ck.modules.end()) throw IoError("checkpoint " + dir.string() + " has no '" + name + "' module");
    return it->second;
  };
  Model m;
  m.encoder = need("encoder");
  m.projector = need("projector");
  if (auto it = ck.modules.find("predictor"); it != ck.modules.end()) m.predictor = it->second;
  return m;
}

Checkpoint checkpoint_of(const Model& model, const Mlp* head, SslMethod method) {
  Checkpoint ck;
  ck.method = ssl_method_name(method);
  ck.modules["encoder"] = model.encoder;
  ck.modules["projector"] = model.projector;
  if (model.predictor) ck.modules["predictor"] = *model.predictor;
  if (head) ck.modules["head"] = *head;
  return ck;
}

ordered_json dataset_json(const Dataset& d) {
  ordered_json j;
  j["num_samples"] = d.size();
  j["class_counts_true"] = d.class_counts_true();
  j["class_counts_observed"] = d.class_counts_observed();
  return j;
}

std::string describe(const std::string& label, const AccuracyReport& r) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << label << ": balanced_accuracy=" << r.balanced
    << " overall_accuracy=" << r.overall << "\n";
  return s.str();
}

std::string cmd_generate(const ExperimentConfig& c) {
  RunOutputs out(c, "generate");
  const Dataset train = generate_split(c, Split::train);
  const Dataset test = generate_split(c, Split::test);
  write_dataset(train, out.dir() / "train.json");
  write_dataset(test, out.dir() / "test.json");
  out.summary()["train"] = dataset_json(train);
  out.summary()["test"] = dataset_json(test);
  out.finish();
  return "wrote " + (out.dir() / "train.json").string() + " and " + (out.dir() / "test.json").string() + "\n";
}

std::string cmd_corrupt(const ExperimentConfig& c) {
  RunOutputs out(c, "corrupt");
  const std::string src = c.get_string("data.train_manifest");
  const Dataset clean = src.empty() ? generate_split(c, Split::train) : read_dataset(src);
  const Dataset noisy = corrupt(clean, c);
  write_dataset(noisy, out.dir() / "train.json");
  const auto counts = noisy.class_counts_true();
  out.summary()["train"] = dataset_json(noisy);
  out.summary()["min_class_count"] = *std::min_element(counts.begin(), counts.end());
  out.summary()["max_class_count"] = *std::max_element(counts.begin(), counts.end());
  out.summary()["num_resampled"] = noisy.provenance().num_resampled.value_or(0);
  out.finish();
  std::ostringstream s;
  s << "wrote " << (out.dir() / "train.json").string() << " (" << noisy.size() << " samples, min class "
    << out.summary()["min_class_count"].get<std::size_t>() << ", max class "
    << out.summary()["max_class_count"].get<std::size_t>() << ")\n";
  return s.str();
}

std::string cmd_pretrain(const ExperimentConfig& c) {
  RunOutputs out(c, "pretrain");
  const DataSplits data = load_datasets(c);
  const ExperimentSettings s = settings_from_config(c, data.train.num_classes());
  const SslMethod method = s.pretrain.ssl.method;
  Architecture arch = s.architecture;
  arch.input_dim = data.train.dim();
  Model model = make_model(arch, uses_predictor(method), method == SslMethod::byol,
                           derive_seed(s.seed, {seed_purpose::init, 1}));
  pretrain(model, data.train, &data.test, s.pretrain, s.seed, out.metrics_sink());
  auto knn = s.pretrain.knn;
  knn.k = std::min(knn.k, data.train.size());
  const double acc =
      knn_accuracy(embed(data.train, model, s.pretrain.representation), embed(data.test, model, s.pretrain.representation), knn);
  write_checkpoint(checkpoint_of(model, nullptr, method), out.dir() / "checkpoint");
  out.summary()["method"] = ssl_method_name(method);
  out.summary()["knn_accuracy"] = acc;
  out.finish();
  std::ostringstream r;
  r << std::fixed << std::setprecision(4) << "pretrain " << ssl_method_name(method) << ": knn_accuracy=" << acc << "\n";
  return r.str();
}

std::string cmd_finetune(const ExperimentConfig& c) {
  const fs::path ck_dir = c.get_string("pretrain.checkpoint");
  if (ck_dir.empty()) throw ConfigError("finetune needs pretrain.checkpoint");
  const Checkpoint ck = read_checkpoint(ck_dir);
  RunOutputs out(c, "finetune");
  const DataSplits data = load_datasets(c);
  ExperimentConfig resolved = c;
  resolved.set("pretrain.method", ck.method);
  const ExperimentSettings s = settings_from_config(resolved, data.train.num_classes());
  const Model model = model_from_checkpoint(ck, ck_dir);
  FinetuneResult ft = finetune(model, data.train, &data.test, s.finetune, s.seed, out.metrics_sink());
  write_checkpoint(checkpoint_of(model, &ft.head, s.pretrain.ssl.method), out.dir() / "checkpoint");
  out.summary()["method"] = ck.method;
  out.summary()["loss"] = loss_kind_name(s.finetune.loss.kind);
  out.summary()["freeze_policy"] = freeze_policy_name(s.finetune.freeze);
  out.summary()["test"] = report_json(*ft.test_report);
  out.finish();
  return describe("finetune", *ft.test_report);
}

std::string cmd_run(const ExperimentConfig& c, bool single_stage) {
  RunOutputs out(c, single_stage ? "run-single-stage" : "run");
  const DataSplits data = load_datasets(c);
  const ExperimentSettings s = settings_from_config(c, data.train.num_classes());
  const RecordSink sink = out.metrics_sink();
  RunResult r = single_stage ? run_single_stage(s, data.train, data.test, sink)
                             : run_two_stage(s, data.train, data.test, sink);
  write_checkpoint(checkpoint_of(r.model, &r.head, s.pretrain.ssl.method), out.dir() / "checkpoint");
  out.summary()["method"] = single_stage ? "none" : ssl_method_name(s.pretrain.ssl.method);
  out.summary()["loss"] = loss_kind_name(s.finetune.loss.kind);
  if (!single_stage) out.summary()["freeze_policy"] = freeze_policy_name(s.finetune.freeze);
  out.summary()["train"] = dataset_json(data.train);
  if (r.knn_accuracy) out.summary()["knn_accuracy"] = *r.knn_accuracy;
  out.summary()["test"] = report_json(r.test_report);
  out.finish();
  return describe(single_stage ? "run-single-stage" : "run", r.test_report);
}

std::string cmd_eval(const ExperimentConfig& c) {
  fs::path ck_dir = c.get_string("eval.checkpoint");
  if (ck_dir.empty()) ck_dir = c.get_string("pretrain.checkpoint");
  if (ck_dir.empty()) throw ConfigError("eval needs eval.checkpoint");
  const Checkpoint ck = read_checkpoint(ck_dir);
  RunOutputs out(c, "eval");
  const DataSplits data = load_datasets(c);
  const ExperimentSettings s = settings_from_config(c, data.train.num_classes());
  const Model model = model_from_checkpoint(ck, ck_dir);
  const Representation rep = s.pretrain.representation;
  const EmbeddingSet ref = embed(data.train, model, rep);
  const EmbeddingSet query = embed(data.test, model, rep);
  auto knn = s.pretrain.knn;
  knn.k = std::min(knn.k, ref.size());
  const auto predicted = knn_classify(ref, query, knn);
  const AccuracyReport knn_report = accuracy_suite(predicted, query.labels, query.num_classes);
  std::string report = describe("knn", knn_report);
  out.summary()["knn"] = report_json(knn_report);
  if (auto it = ck.modules.find("head"); it != ck.modules.end()) {
    const AccuracyReport head = evaluate_classifier(model.encoder, it->second, data.test);
    out.summary()["test"] = report_json(head);
    report += describe("classifier", head);
  }
  if (c.get_bool("eval.export_embeddings")) {
    export_embeddings(ref, out.dir() / "embeddings_train.json");
    export_embeddings(query, out.dir() / "embeddings_test.json");
  }
  out.finish();
  return report;
}

std::string cmd_gradcheck(const ExperimentConfig& c) {
  RunOutputs out(c, "gradcheck");
  const auto rows = gradcheck_suite(get_size(c, "run.gradcheck_instances", 1),
                                    static_cast<std::uint64_t>(c.get_int("run.seed")));
  std::ostringstream s;
  s << std::left << std::setw(16) << "case" << std::setw(11) << "instances" << "max_rel_error\n";
  ordered_json table = ordered_json::array();
  bool ok = true;
  for (const auto& r : rows) {
    s << std::left << std::setw(16) << r.name << std::setw(11) << r.instances << std::scientific
      << std::setprecision(3) << r.max_rel_error << (r.max_rel_error <= kGradcheckTolerance ? "" : "  FAIL") << "\n";
    table.push_back({{"case", r.name}, {"instances", r.instances}, {"max_rel_error", r.max_rel_error}});
    ok = ok && r.max_rel_error <= kGradcheckTolerance;
  }
  out.summary()["tolerance"] = kGradcheckTolerance;
  out.summary()["gradcheck"] = table;
  out.summary()["passed"] = ok;
  out.finish();
  if (!ok) throw OracleError("gradient check exceeded tolerance\n" + s.str());
  return s.str();
}

}  // namespace

std::uint64_t data_seed(const ExperimentConfig& c) {
  const auto v = c.get_int("data.seed");
  return static_cast<std::uint64_t>(v >= 0 ? v : c.get_int("run.seed"));
}

DataSplits load_datasets(const ExperimentConfig& c) {
  const std::string path = c.get_string("data.train_manifest");
  Dataset train = path.empty() ? corrupt(generate_split(c, Split::train), c) : read_dataset(path);
  Dataset test = load_test(c);
  if (train.dim() != test.dim() || train.num_classes() != test.num_classes()) {
    throw ConfigError("train and test datasets disagree on feature dimension or class count");
  }
  return {std::move(train), std::move(test)};
}

ExperimentSettings settings_from_config(const ExperimentConfig& c, std::uint32_t num_classes) {
  ExperimentSettings s;
  s.seed = static_cast<std::uint64_t>(c.get_int("run.seed"));

  Architecture& a = s.architecture;
  a.input_dim = get_size(c, "data.dim", 1);
  a.encoder_hidden = get_size(c, "pretrain.encoder_hidden", 1);
  a.representation_dim = get_size(c, "pretrain.rep_dim", 1);
  a.projector_layers = get_size(c, "pretrain.proj_layers", 1);
  a.projector_hidden = get_size(c, "pretrain.proj_hidden", 1);
  a.projector_dim = get_size(c, "pretrain.proj_dim", 1);
  a.predictor_hidden = get_size(c, "pretrain.pred_hidden", 1);
  a.validate();

  const SslMethod method = parse_ssl_method(c.get_string("pretrain.method"));
  const bool simclr = method == SslMethod::simclr;
  PretrainSettings& p = s.pretrain;
  p.ssl.method = method;
  p.ssl.temperature = c.get_double("pretrain.temperature");
  p.ssl.ema_momentum = c.get_double("pretrain.ema_momentum");
  p.ssl.lambda_bt = c.get_double("pretrain.lambda_bt");
  p.ssl.stop_gradient = c.get_bool("pretrain.stop_gradient");
  p.ssl.augmentation = AugmentationSpec{c.get_double("pretrain.aug_sigma"), c.get_double("pretrain.aug_mask"),
                                        c.get_double("pretrain.aug_jitter")};
  p.ssl.validate();

  double lr = 0.001, wd = 1e-6;
  switch (method) {
    case SslMethod::simsiam: lr = 0.8; wd = 5e-4; break;
    case SslMethod::byol: lr = 0.001; wd = 1.5e-6; break;
    case SslMethod::barlow_twins: lr = 0.003; wd = 5e-4; break;
    case SslMethod::simclr: lr = 0.001; wd = 1e-6; break;
  }
  p.optimizer.kind = c.is_auto("pretrain.optimizer")
                         ? (method == SslMethod::simsiam ? OptimizerKind::sgd : OptimizerKind::adam)
                         : parse_optimizer_kind(c.get_string("pretrain.optimizer"));
  p.optimizer.base_lr = auto_double(c, "pretrain.lr", lr);
  p.optimizer.weight_decay = auto_double(c, "pretrain.weight_decay", wd);
  p.optimizer.momentum = c.get_double("pretrain.momentum");
  p.optimizer.batch_size = get_size(c, "pretrain.batch_size", 2);
  p.optimizer.validate();
  p.scale_lr = c.is_auto("pretrain.scale_lr") ? !simclr : c.get_bool("pretrain.scale_lr");
  p.schedule.kind = c.is_auto("pretrain.schedule") ? (simclr ? ScheduleKind::constant : ScheduleKind::cosine)
                                                   : parse_schedule_kind(c.get_string("pretrain.schedule"));
  p.schedule.total_epochs = get_size(c, "pretrain.epochs", 1);
  p.schedule.warmup_epochs =
      c.is_auto("pretrain.warmup_epochs") ? (simclr ? 0 : 10) : get_size(c, "pretrain.warmup_epochs");
  p.schedule.warmup_epochs = std::min(p.schedule.warmup_epochs, p.schedule.total_epochs - 1);
  p.schedule.validate();
  p.knn.k = get_size(c, "eval.knn_k", 1);
  p.knn.metric = parse_knn_metric(c.get_string("eval.knn_metric"));
  p.knn.weighting = parse_knn_weighting(c.get_string("eval.knn_weighting"));
  p.knn.temperature = c.get_double("eval.knn_temperature");
  if (!(p.knn.temperature > 0.0)) throw ConfigError("eval.knn_temperature must be positive");
  p.knn_every = get_size(c, "pretrain.knn_every");
  p.representation = parse_representation(c.get_string("eval.representation"));

  FinetuneSettings& f = s.finetune;
  f.loss.kind = parse_loss_kind(c.get_string("finetune.loss"));
  f.loss.superloss = SuperLossParams::defaults_for(num_classes);
  f.loss.superloss.tau = auto_double(c, "finetune.sl_tau", f.loss.superloss.tau);
  f.loss.superloss.lambda = c.get_double("finetune.sl_lambda");
  f.loss.superloss.clamp =
      c.get_string("finetune.sl_clamp") == "as_written" ? ClampMode::as_written : ClampMode::lower_bound;
  f.loss.superloss.validate();
  const double nu = auto_double(c, "finetune.nu", c.get_double("data.nu"));
  f.linear_probe = simclr;
  f.freeze = c.is_auto("finetune.freeze") ? select_freeze_policy(method, nu)
                                          : parse_freeze_policy(c.get_string("finetune.freeze"));
  f.epochs = c.is_auto("finetune.epochs") ? (simclr ? 25 : 10) : get_size(c, "finetune.epochs", 1);
  f.optimizer.kind = OptimizerKind::adam;
  f.optimizer.base_lr = auto_double(
      c, "finetune.lr", simclr ? 0.001 : (f.freeze == FreezePolicy::full_head ? 0.003 : 0.01));
  f.optimizer.weight_decay = auto_double(c, "finetune.weight_decay", simclr ? 1e-6 : 0.0);
  f.optimizer.batch_size = get_size(c, "finetune.batch_size", 1);
  f.optimizer.validate();

  s.single_stage_epochs = c.is_auto("run.single_stage_epochs") ? p.schedule.total_epochs + f.epochs
                                                               : get_size(c, "run.single_stage_epochs", 1);
  s.single_stage_optimizer = f.optimizer;
  s.single_stage_optimizer.base_lr = c.get_double("run.single_stage_lr");
  s.single_stage_optimizer.weight_decay = 0.0;
  s.single_stage_optimizer.validate();
  return s;
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"generate", "corrupt", "pretrain", "finetune",
                                                 "run",      "run-single-stage", "eval", "gradcheck"};
  return names;
}

std::string run_command(const std::string& name, const ExperimentConfig& config) {
  const auto& names = command_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) throw ConfigError("unknown command '" + name + "'");
  log_info("tailspin " + name + " (config " + hex64(config.hash()) + ")");
  if (name == "generate") return cmd_generate(config);
  if (name == "corrupt") return cmd_corrupt(config);
  if (name == "pretrain") return cmd_pretrain(config);
  if (name == "finetune") return cmd_finetune(config);
  if (name == "run") return cmd_run(config, false);
  if (name == "run-single-stage") return cmd_run(config, true);
  if (name == "eval") return cmd_eval(config);
  if (name == "gradcheck") return cmd_gradcheck(config);
  throw ConfigError("unknown command '" + name + "'");
}

}  // namespace tailspin
