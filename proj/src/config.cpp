#include "tailspin/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "tailspin/error.hpp"
#include "tailspin/io.hpp"

namespace tailspin {

const char* value_type_name(ValueType type) noexcept {
  switch (type) {
    case ValueType::integer: return "integer";
    case ValueType::real: return "number";
    case ValueType::boolean: return "boolean (true/false)";
    case ValueType::string: return "string";
  }
  return "?";
}

const std::vector<KeySpec>& config_keys() {
  using V = ValueType;
  static const std::vector<KeySpec> keys = {
      // data
      {"data.train_manifest", V::string, "", "training set manifest; empty generates synthetic clusters", {}, false},
      {"data.test_manifest", V::string, "", "test set manifest; empty generates a balanced synthetic test split", {}, false},
      {"data.num_classes", V::integer, "3", "synthetic generator: number of classes C", {}, false},
      {"data.per_class", V::integer, "300", "synthetic generator: training samples per class before imbalance (n_max)", {}, false},
      {"data.test_per_class", V::integer, "100", "synthetic generator: test samples per class", {}, false},
      {"data.dim", V::integer, "8", "synthetic generator: feature dimension", {}, false},
      {"data.separation", V::real, "4", "synthetic generator: pairwise distance between class means", {}, false},
      {"data.gamma", V::real, "1", "imbalance ratio gamma (exponential profile)", {}, false},
      {"data.nu", V::real, "0", "symmetric label-noise fraction nu in [0, 1)", {}, false},
      {"data.noise_selection", V::string, "global", "noisy subset drawn globally or per class", {"global", "per_class"}, false},
      {"data.seed", V::integer, "-1", "base seed for generation and corruption; -1 uses run.seed", {}, false},
      // pretrain
      {"pretrain.method", V::string, "simsiam", "self-supervised objective", {"simclr", "simsiam", "byol", "barlow_twins"}, false},
      {"pretrain.epochs", V::integer, "200", "pretraining epochs", {}, false},
      {"pretrain.optimizer", V::string, "auto", "sgd or adam; auto: sgd for simsiam, adam otherwise", {"sgd", "adam"}, true},
      {"pretrain.lr", V::real, "auto", "base lr; auto: simsiam 0.8, byol 0.001, barlow_twins 0.003, simclr 0.001", {}, true},
      {"pretrain.weight_decay", V::real, "auto", "auto: simsiam/barlow_twins 5e-4, byol 1.5e-6, simclr 1e-6", {}, true},
      {"pretrain.momentum", V::real, "0.9", "SGD momentum", {}, false},
      {"pretrain.batch_size", V::integer, "32", "pretraining minibatch size", {}, false},
      {"pretrain.scale_lr", V::boolean, "auto", "use lr * batch / 256; auto: on except for simclr", {}, true},
      {"pretrain.schedule", V::string, "auto", "constant or cosine; auto: constant for simclr, cosine otherwise", {"constant", "cosine"}, true},
      {"pretrain.warmup_epochs", V::integer, "auto", "linear warmup epochs; auto: 0 for simclr, 10 otherwise", {}, true},
      {"pretrain.temperature", V::real, "0.5", "SimCLR NT-Xent temperature", {}, false},
      {"pretrain.ema_momentum", V::real, "0.99", "BYOL target momentum m", {}, false},
      {"pretrain.lambda_bt", V::real, "0.005", "Barlow Twins off-diagonal weight", {}, false},
      {"pretrain.stop_gradient", V::boolean, "true", "SimSiam stop-gradient (false is the collapse ablation)", {}, false},
      {"pretrain.aug_sigma", V::real, "0.5", "additive Gaussian noise scale", {}, false},
      {"pretrain.aug_mask", V::real, "0.2", "per-coordinate masking probability", {}, false},
      {"pretrain.aug_jitter", V::real, "0.2", "multiplicative scale jitter s, factor in [1-s, 1+s]", {}, false},
      {"pretrain.encoder_hidden", V::integer, "64", "encoder hidden width", {}, false},
      {"pretrain.rep_dim", V::integer, "32", "representation (encoder output) width", {}, false},
      {"pretrain.proj_layers", V::integer, "2", "projection head FC layers (1-3)", {}, false},
      {"pretrain.proj_hidden", V::integer, "32", "projection head hidden width", {}, false},
      {"pretrain.proj_dim", V::integer, "32", "projection head output width", {}, false},
      {"pretrain.pred_hidden", V::integer, "16", "predictor hidden width (simsiam, byol)", {}, false},
      {"pretrain.knn_every", V::integer, "10", "epochs between kNN proxy evaluations; 0 disables", {}, false},
      {"pretrain.checkpoint", V::string, "", "pretrained checkpoint directory read by `finetune`", {}, false},
      // finetune
      {"finetune.loss", V::string, "la_sl", "fine-tuning loss", {"ce", "ce_sl", "la", "la_sl"}, false},
      {"finetune.epochs", V::integer, "auto", "auto: 25 for simclr, 10 otherwise", {}, true},
      {"finetune.freeze", V::string, "auto", "auto selects from finetune.nu and the method threshold", {"full_head", "last_layer_only"}, true},
      {"finetune.nu", V::real, "auto", "noise level used to select the freeze policy; auto: data.nu", {}, true},
      {"finetune.lr", V::real, "auto", "auto: simclr 0.001, full_head 0.003, last_layer_only 0.01", {}, true},
      {"finetune.weight_decay", V::real, "auto", "auto: 1e-6 for simclr, 0 otherwise", {}, true},
      {"finetune.batch_size", V::integer, "32", "fine-tuning minibatch size", {}, false},
      {"finetune.sl_tau", V::real, "auto", "SuperLoss threshold tau; auto: log(C)", {}, true},
      {"finetune.sl_lambda", V::real, "4", "SuperLoss regularization lambda", {}, false},
      {"finetune.sl_clamp", V::string, "lower_bound", "SuperLoss clamp mode", {"lower_bound", "as_written"}, false},
      // eval
      {"eval.knn_k", V::integer, "20", "kNN neighbours", {}, false},
      {"eval.knn_metric", V::string, "cosine", "kNN distance", {"cosine", "euclidean"}, false},
      {"eval.knn_weighting", V::string, "similarity", "kNN vote weighting", {"uniform", "similarity"}, false},
      {"eval.knn_temperature", V::real, "0.07", "temperature of exp(cos / T) similarity weights", {}, false},
      {"eval.representation", V::string, "encoder", "embedding used by the kNN proxy", {"encoder", "projector"}, false},
      {"eval.checkpoint", V::string, "", "checkpoint directory read by `eval`", {}, false},
      {"eval.export_embeddings", V::boolean, "false", "`eval` also writes embeddings in the dataset format", {}, false},
      // run
      {"run.seed", V::integer, "0", "global seed; every random stream derives from it", {}, false},
      {"run.output_dir", V::string, "tailspin_out", "directory receiving all outputs", {}, false},
      {"run.single_stage_epochs", V::integer, "auto", "auto: pretrain.epochs + fine-tuning epochs", {}, true},
      {"run.single_stage_lr", V::real, "0.003", "Adam lr for end-to-end training", {}, false},
      {"run.record_wall_time", V::boolean, "false", "add wall_time to metrics lines (breaks byte-identical reruns)", {}, false},
      {"run.gradcheck_instances", V::integer, "20", "random instances per gradient-check case", {}, false},
  };
  return keys;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

bool parse_int(const std::string& s, std::int64_t& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

bool parse_real(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

}  // namespace

std::string nearest_config_key(const std::string& key) {
  std::string best;
  std::size_t best_d = std::string::npos;
  for (const auto& k : config_keys()) {
    const std::size_t d = edit_distance(key, k.key);
    if (d < best_d) {
      best_d = d;
      best = k.key;
    }
  }
  return best;
}

ExperimentConfig::ExperimentConfig() {
  for (const auto& k : config_keys()) values_[k.key] = k.default_value;
}

const KeySpec& ExperimentConfig::spec(const std::string& key) const {
  for (const auto& k : config_keys())
    if (k.key == key) return k;
  throw ConfigError("unknown config key '" + key + "' (did you mean '" + nearest_config_key(key) + "'?)");
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const KeySpec& k = spec(key);
  if (!(k.allows_auto && value == "auto")) {
    std::int64_t i;
    double d;
    switch (k.type) {
      case ValueType::integer:
        if (!parse_int(value, i)) {
          throw ConfigError("key '" + key + "' expects " + value_type_name(k.type) + ", got '" + value + "'");
        }
        break;
      case ValueType::real:
        if (!parse_real(value, d)) {
          throw ConfigError("key '" + key + "' expects " + value_type_name(k.type) + ", got '" + value + "'");
        }
        break;
      case ValueType::boolean:
        if (value != "true" && value != "false") {
          throw ConfigError("key '" + key + "' expects " + value_type_name(k.type) + ", got '" + value + "'");
        }
        break;
      case ValueType::string:
        if (!k.choices.empty() && std::find(k.choices.begin(), k.choices.end(), value) == k.choices.end()) {
          std::string opts;
          for (const auto& c : k.choices) opts += (opts.empty() ? "" : ", ") + c;
          throw ConfigError("key '" + key + "' expects one of {" + opts + "}, got '" + value + "'");
        }
        break;
    }
  }
  values_[key] = value;
}

void ExperimentConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

ExperimentConfig ExperimentConfig::parse(const std::string& text, const std::vector<std::string>& overrides) {
  ExperimentConfig cfg;
  cfg.source_ = text;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string body = line;
    bool quoted = false;
    for (std::size_t i = 0; i < body.size(); ++i) {
      if (body[i] == '"') quoted = !quoted;
      if (body[i] == '#' && !quoted) {
        body.resize(i);
        break;
      }
    }
    body = trim(body);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected `key = value`");
    }
    std::string key = trim(body.substr(0, eq));
    std::string value = trim(body.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    cfg.set(key, value);
  }
  for (const auto& o : overrides) cfg.apply_override(o);
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  if (path.empty()) return parse("", overrides);
  if (!std::filesystem::exists(path)) throw IoError("config file not found: " + path.string());
  return parse(read_text_file(path), overrides);
}

const std::string& ExperimentConfig::raw(const std::string& key) const {
  spec(key);
  return values_.at(key);
}

bool ExperimentConfig::is_auto(const std::string& key) const { return spec(key).allows_auto && raw(key) == "auto"; }

std::int64_t ExperimentConfig::get_int(const std::string& key) const {
  std::int64_t v;
  if (spec(key).type != ValueType::integer || !parse_int(raw(key), v)) {
    throw ConfigError("key '" + key + "' has no integer value ('" + raw(key) + "')");
  }
  return v;
}

double ExperimentConfig::get_double(const std::string& key) const {
  double v;
  if (spec(key).type != ValueType::real || !parse_real(raw(key), v)) {
    throw ConfigError("key '" + key + "' has no numeric value ('" + raw(key) + "')");
  }
  return v;
}

bool ExperimentConfig::get_bool(const std::string& key) const {
  if (spec(key).type != ValueType::boolean || (raw(key) != "true" && raw(key) != "false")) {
    throw ConfigError("key '" + key + "' has no boolean value ('" + raw(key) + "')");
  }
  return raw(key) == "true";
}

const std::string& ExperimentConfig::get_string(const std::string& key) const {
  if (spec(key).type != ValueType::string) throw ConfigError("key '" + key + "' is not a string");
  return raw(key);
}

std::string ExperimentConfig::resolved_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::uint64_t ExperimentConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : resolved_text()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace tailspin
