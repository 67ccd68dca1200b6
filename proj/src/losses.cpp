#include "tailspin/losses.hpp"

#include <cmath>
#include <numbers>

#include "tailspin/error.hpp"

namespace tailspin {

namespace {
constexpr double kInvE = 0.36787944117144232160;  // 1/e, nearest double
constexpr double kBranchSlack = 1e-12;
}  // namespace

Priors Priors::uniform(std::size_t num_classes) {
  if (num_classes == 0) throw ConfigError("priors need at least one class");
  return Priors{std::vector<double>(num_classes, 1.0 / static_cast<double>(num_classes))};
}

void Priors::validate() const {
  if (pi.empty()) throw ConfigError("priors are empty");
  double total = 0.0;
  for (double p : pi) {
    if (!(p > 0.0) || !std::isfinite(p)) throw DomainError("prior entries must be strictly positive and finite");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw DomainError("priors must sum to one");
}

double lambert_w0(double x) {
  if (std::isnan(x)) throw DomainError("lambert_w0: NaN argument");
  if (x < -kInvE - kBranchSlack) throw DomainError("lambert_w0: argument below -1/e");
  if (x <= -kInvE) return -1.0;
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return x;

  double w;
  if (x < -0.32) {
    // branch-point series in p = sqrt(2(ex + 1))
    const double p = std::sqrt(2.0 * (std::numbers::e * x + 1.0));
    w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p;
  } else if (x < 3.0) {
    const double l = std::log1p(x);
    w = l * (1.0 - std::log1p(l) / (2.0 + l));
  } else {
    const double l1 = std::log(x);
    const double l2 = std::log(l1);
    w = l1 - l2 + l2 / l1;
  }

  // Halley iteration on f(w) = w e^w - x.
  for (int iter = 0; iter < 64; ++iter) {
    const double ew = std::exp(w);
    const double f = w * ew - x;
    const double wp1 = w + 1.0;
    if (wp1 == 0.0 || f == 0.0) break;
    const double step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
    w -= step;
    if (std::abs(step) <= 1e-16 * (1.0 + std::abs(w))) break;
  }
  return w < -1.0 ? -1.0 : w;
}

SuperLossParams SuperLossParams::defaults_for(std::size_t num_classes) {
  return SuperLossParams{std::log(static_cast<double>(num_classes)), 4.0, ClampMode::lower_bound};
}

void SuperLossParams::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("superloss lambda must be positive");
  if (!std::isfinite(tau)) throw ConfigError("superloss tau must be finite");
}

double superloss_sigma(double ell, const SuperLossParams& params) {
  if (!std::isfinite(ell)) throw NumericError("superloss_sigma: non-finite loss value");
  params.validate();
  const double beta = (ell - params.tau) / params.lambda;
  const double floor = params.clamp == ClampMode::lower_bound ? -2.0 * kInvE : 2.0 * kInvE;
  const double arg = beta > floor ? beta : floor;
  return std::exp(-lambert_w0(0.5 * arg));
}

Tensor logit_adjust(Tape& tape, const Tensor& logits, const Priors& priors) {
  if (logits.rank() != 2 || logits.cols() != priors.num_classes()) {
    throw DimensionError("logit_adjust: logits " + shape_string(logits.shape()) + " vs " +
                         std::to_string(priors.num_classes()) + " priors");
  }
  std::vector<double> log_pi(priors.pi.size());
  for (std::size_t c = 0; c < log_pi.size(); ++c) log_pi[c] = std::log(priors.pi[c]);
  const std::size_t c = log_pi.size();
  return tape.add_row_vector(logits, Tensor::constant({c}, std::move(log_pi)));
}

Tensor cross_entropy(Tape& tape, const Tensor& logits, std::span<const std::uint32_t> labels) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy: logits must be [B,C], got " + shape_string(logits.shape()));
  return tape.scale(tape.gather_columns(tape.log_softmax_rows(logits), labels), -1.0);
}

Tensor la_loss(Tape& tape, const Tensor& logits, std::span<const std::uint32_t> labels, const Priors& priors) {
  return cross_entropy(tape, logit_adjust(tape, logits, priors), labels);
}

ConfidenceReport superloss_with_sigma(Tape& tape, const Tensor& base_losses, std::span<const double> sigma,
                                      const SuperLossParams& params) {
  const auto ell = base_losses.values();
  if (base_losses.rank() != 1 || sigma.size() != ell.size()) {
    throw DimensionError("superloss: base losses " + shape_string(base_losses.shape()) + " vs " +
                         std::to_string(sigma.size()) + " confidences");
  }
  const std::size_t b = ell.size();
  std::vector<double> reg(b);
  for (std::size_t i = 0; i < b; ++i) {
    const double ls = std::log(sigma[i]);
    reg[i] = params.lambda * ls * ls;
  }
  Tensor weights = Tensor::constant({b}, std::vector<double>(sigma.begin(), sigma.end()));
  Tensor per_sample = tape.add(tape.mul(tape.add_scalar(base_losses, -params.tau), weights),
                               Tensor::constant({b}, std::move(reg)));
  return ConfidenceReport{std::vector<double>(ell.begin(), ell.end()), std::vector<double>(sigma.begin(), sigma.end()),
                          tape.mean(per_sample)};
}

ConfidenceReport superloss(Tape& tape, const Tensor& base_losses, const SuperLossParams& params) {
  params.validate();
  const auto ell = base_losses.values();
  std::vector<double> sigma(ell.size());
  for (std::size_t i = 0; i < ell.size(); ++i) sigma[i] = superloss_sigma(ell[i], params);
  return superloss_with_sigma(tape, base_losses, sigma, params);
}

ConfidenceReport la_sl_loss(Tape& tape, const Tensor& logits, std::span<const std::uint32_t> labels,
                            const Priors& priors, const SuperLossParams& params) {
  return superloss(tape, la_loss(tape, logits, labels, priors), params);
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "ce") return LossKind::ce;
  if (name == "ce_sl") return LossKind::ce_sl;
  if (name == "la") return LossKind::la;
  if (name == "la_sl") return LossKind::la_sl;
  throw ConfigError("unknown loss '" + name + "' (expected ce, ce_sl, la or la_sl)");
}

const char* loss_kind_name(LossKind kind) noexcept {
  switch (kind) {
    case LossKind::ce: return "ce";
    case LossKind::ce_sl: return "ce_sl";
    case LossKind::la: return "la";
    case LossKind::la_sl: return "la_sl";
  }
  return "?";
}

Tensor classification_loss(Tape& tape, const Tensor& logits, std::span<const std::uint32_t> labels,
                           const Priors& priors, const LossConfig& config) {
  switch (config.kind) {
    case LossKind::ce: return tape.mean(cross_entropy(tape, logits, labels));
    case LossKind::ce_sl: return superloss(tape, cross_entropy(tape, logits, labels), config.superloss).loss;
    case LossKind::la: return tape.mean(la_loss(tape, logits, labels, priors));
    case LossKind::la_sl: return la_sl_loss(tape, logits, labels, priors, config.superloss).loss;
  }
  throw ConfigError("unknown loss kind");
}

}  // namespace tailspin
