#include "tailspin/ssl.hpp"

#include <numeric>

#include "tailspin/error.hpp"
#include "tailspin/rng.hpp"

namespace tailspin {

SslMethod parse_ssl_method(const std::string& name) {
  if (name == "simclr") return SslMethod::simclr;
  if (name == "simsiam") return SslMethod::simsiam;
  if (name == "byol") return SslMethod::byol;
  if (name == "barlow_twins") return SslMethod::barlow_twins;
  throw ConfigError("unknown pretraining method '" + name + "' (expected simclr, simsiam, byol or barlow_twins)");
}

const char* ssl_method_name(SslMethod method) noexcept {
  switch (method) {
    case SslMethod::simclr: return "simclr";
    case SslMethod::simsiam: return "simsiam";
    case SslMethod::byol: return "byol";
    case SslMethod::barlow_twins: return "barlow_twins";
  }
  return "?";
}

bool uses_predictor(SslMethod method) noexcept { return method == SslMethod::simsiam || method == SslMethod::byol; }

void SslConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("SimCLR temperature must be positive");
  if (!(ema_momentum >= 0.0 && ema_momentum <= 1.0)) throw ConfigError("EMA momentum must lie in [0, 1]");
  if (!(lambda_bt > 0.0)) throw ConfigError("Barlow Twins lambda must be positive");
  augmentation.validate();
}

Tensor simsiam_loss(Tape& tape, const Tensor& p_a, const Tensor& z_a, const Tensor& p_b, const Tensor& z_b,
                    bool stop_gradient) {
  const Tensor ta = stop_gradient ? tape.stop_gradient(z_a) : z_a;
  const Tensor tb = stop_gradient ? tape.stop_gradient(z_b) : z_b;
  Tensor both = tape.add(tape.cosine_similarity_rows(p_a, tb), tape.cosine_similarity_rows(p_b, ta));
  return tape.scale(tape.mean(both), -0.5);
}

Tensor byol_loss(Tape& tape, const Tensor& p_a, const Tensor& target_z_a, const Tensor& p_b,
                 const Tensor& target_z_b) {
  return simsiam_loss(tape, p_a, target_z_a, p_b, target_z_b, true);
}

Tensor nt_xent_loss(Tape& tape, const Tensor& z_a, const Tensor& z_b, double temperature) {
  if (z_a.rank() != 2 || z_a.shape() != z_b.shape()) {
    throw DimensionError("nt_xent: view shapes " + shape_string(z_a.shape()) + " vs " + shape_string(z_b.shape()));
  }
  const std::size_t b = z_a.rows();
  if (b < 2) throw PreconditionError("nt_xent: batch size must be >= 2 (no negatives otherwise)");
  if (!(temperature > 0.0)) throw ConfigError("nt_xent: temperature must be positive");
  const std::size_t n = 2 * b;
  Tensor z = tape.l2_normalize_rows(tape.concat_rows(z_a, z_b));
  Tensor sim = tape.scale(tape.matmul(z, tape.transpose(z)), 1.0 / temperature);
  // Self-similarities are excluded from the softmax denominator.
  std::vector<double> mask(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) mask[i * n + i] = -1e9;
  Tensor logp = tape.log_softmax_rows(tape.add(sim, Tensor::constant({n, n}, std::move(mask))));
  std::vector<std::uint32_t> positive(n);
  for (std::size_t i = 0; i < n; ++i) positive[i] = static_cast<std::uint32_t>((i + b) % n);
  return tape.scale(tape.mean(tape.gather_columns(logp, positive)), -1.0);
}

Tensor barlow_twins_loss(Tape& tape, const Tensor& z_a, const Tensor& z_b, double lambda_bt) {
  if (z_a.rank() != 2 || z_a.shape() != z_b.shape()) {
    throw DimensionError("barlow_twins: view shapes " + shape_string(z_a.shape()) + " vs " +
                         shape_string(z_b.shape()));
  }
  const std::size_t b = z_a.rows(), d = z_a.cols();
  if (b < 2) throw PreconditionError("barlow_twins: batch size must be >= 2");
  constexpr double kEps = 1e-9;
  Tensor na = tape.standardize_columns(z_a, kEps);
  Tensor nb = tape.standardize_columns(z_b, kEps);
  Tensor corr = tape.scale(tape.matmul(tape.transpose(na), nb), 1.0 / static_cast<double>(b));
  std::vector<double> eye(d * d, 0.0), weight(d * d, lambda_bt);
  for (std::size_t i = 0; i < d; ++i) {
    eye[i * d + i] = 1.0;
    weight[i * d + i] = 1.0;
  }
  Tensor diff = tape.sub(corr, Tensor::constant({d, d}, std::move(eye)));
  return tape.sum(tape.mul(tape.mul(diff, diff), Tensor::constant({d, d}, std::move(weight))));
}

void ema_update(Mlp& target, const Mlp& online, double momentum) {
  if (target.num_layers() != online.num_layers()) throw DimensionError("EMA target architecture mismatch");
  auto blend = [momentum](Tensor& dst, const Tensor& src) {
    if (dst.shape() != src.shape()) throw DimensionError("EMA target architecture mismatch");
    auto d = dst.mutable_values();
    auto s = src.values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = momentum * d[i] + (1.0 - momentum) * s[i];
  };
  for (std::size_t l = 0; l < target.num_layers(); ++l) {
    blend(target.layers()[l].weight, online.layers()[l].weight);
    blend(target.layers()[l].bias, online.layers()[l].bias);
  }
}

namespace {
Tensor augmented_view(const Dataset& data, std::span<const std::size_t> batch, const AugmentationSpec& aug,
                      std::uint64_t seed, std::uint64_t epoch, std::uint64_t view) {
  std::vector<double> v;
  v.reserve(batch.size() * data.dim());
  for (std::size_t i : batch) {
    auto x = augment(data.row(i), aug, augmentation_seed(seed, epoch, i, view));
    v.insert(v.end(), x.begin(), x.end());
  }
  return Tensor::constant({batch.size(), data.dim()}, std::move(v));
}
}  // namespace

PairEncoding encode_pair(Tape& tape, const Model& model, const Dataset& data, std::span<const std::size_t> batch,
                         const SslConfig& config, std::uint64_t seed, std::uint64_t epoch) {
  if (batch.empty()) throw PreconditionError("encode_pair: empty batch");
  if ((config.method == SslMethod::simclr || config.method == SslMethod::barlow_twins) && batch.size() < 2) {
    throw PreconditionError(std::string("encode_pair: ") + ssl_method_name(config.method) +
                            " needs a batch of at least 2");
  }
  if (data.dim() != model.encoder.input_dim()) {
    throw ConfigError("encode_pair: data dimension " + std::to_string(data.dim()) + " does not match encoder input " +
                      std::to_string(model.encoder.input_dim()));
  }
  Tensor xa = augmented_view(data, batch, config.augmentation, seed, epoch, 0);
  Tensor xb = augmented_view(data, batch, config.augmentation, seed, epoch, 1);
  PairEncoding enc;
  enc.z_a = model.projector.forward(tape, model.encoder.forward(tape, xa));
  enc.z_b = model.projector.forward(tape, model.encoder.forward(tape, xb));
  if (uses_predictor(config.method)) {
    if (!model.predictor) throw ConfigError("encode_pair: method requires a predictor head");
    enc.p_a = model.predictor->forward(tape, enc.z_a);
    enc.p_b = model.predictor->forward(tape, enc.z_b);
  }
  if (config.method == SslMethod::byol) {
    if (!model.target_encoder || !model.target_projector) throw ConfigError("BYOL requires an EMA target network");
    enc.target_z_a = tape.stop_gradient(model.target_projector->forward(tape, model.target_encoder->forward(tape, xa)));
    enc.target_z_b = tape.stop_gradient(model.target_projector->forward(tape, model.target_encoder->forward(tape, xb)));
  }
  return enc;
}

Tensor ssl_loss(Tape& tape, const PairEncoding& enc, const SslConfig& config) {
  switch (config.method) {
    case SslMethod::simclr: return nt_xent_loss(tape, enc.z_a, enc.z_b, config.temperature);
    case SslMethod::simsiam: return simsiam_loss(tape, enc.p_a, enc.z_a, enc.p_b, enc.z_b, config.stop_gradient);
    case SslMethod::byol: return byol_loss(tape, enc.p_a, enc.target_z_a, enc.p_b, enc.target_z_b);
    case SslMethod::barlow_twins: return barlow_twins_loss(tape, enc.z_a, enc.z_b, config.lambda_bt);
  }
  throw ConfigError("unknown pretraining method");
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::size_t min_batch,
                                                    std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {seed_purpose::shuffle, epoch}));
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    if (end - start < min_batch) break;
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

double pretrain_epoch(Model& model, const Dataset& data, const SslConfig& config, Optimizer& optimizer, double lr,
                      std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch) {
  config.validate();
  const auto batches = epoch_batches(data.size(), batch_size, 2, seed, epoch);
  if (batches.empty()) throw PreconditionError("pretrain_epoch: dataset too small for one batch of 2");
  double total = 0.0;
  for (const auto& batch : batches) {
    Tape tape;
    PairEncoding enc = encode_pair(tape, model, data, batch, config, seed, epoch);
    Tensor loss = ssl_loss(tape, enc, config);
    optimizer.zero_grad();
    tape.backward(loss);
    optimizer.step(lr);
    if (config.method == SslMethod::byol) {
      ema_update(*model.target_encoder, model.encoder, config.ema_momentum);
      ema_update(*model.target_projector, model.projector, config.ema_momentum);
    }
    total += loss.item();
  }
  return total / static_cast<double>(batches.size());
}

}  // namespace tailspin
