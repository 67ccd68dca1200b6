#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tailspin/tensor.hpp"

namespace tailspin {

// Observed class distribution; entries strictly positive, summing to one.
struct Priors {
  std::vector<double> pi;

  static Priors uniform(std::size_t num_classes);
  std::size_t num_classes() const noexcept { return pi.size(); }
  void validate() const;
};

// Principal branch W0 of the Lambert W function (inverse of w -> w e^w) on
// [-1/e, inf). Inputs within 1e-12 below the branch point are clamped to it.
double lambert_w0(double x);

enum class ClampMode {
  lower_bound,  // argument floored at -2/e, sigma* in (0, e]
  as_written,   // argument floored at +2/e, sigma* in (0, exp(-W(1/e))]
};

struct SuperLossParams {
  double tau = 0.0;
  double lambda = 4.0;
  ClampMode clamp = ClampMode::lower_bound;

  // tau = log(C), lambda = 4.
  static SuperLossParams defaults_for(std::size_t num_classes);
  void validate() const;
};

// sigma* = exp(-W(0.5 * clamp((ell - tau) / lambda))).
double superloss_sigma(double ell, const SuperLossParams& params);

struct ConfidenceReport {
  std::vector<double> base_loss;
  std::vector<double> sigma;
  Tensor loss;  // scalar batch mean, differentiable w.r.t. the base losses

  double value() const { return loss.item(); }
};

// logits[:, y] += log(pi_y)
Tensor logit_adjust(Tape& tape, const Tensor& logits, const Priors& priors);

// Per-sample -log softmax(logits)[y], shape [B].
Tensor cross_entropy(Tape& tape, const Tensor& logits, std::span<const std::uint32_t> labels);
Tensor la_loss(Tape& tape, const Tensor& logits, std::span<const std::uint32_t> labels, const Priors& priors);

// Per-sample (ell - tau) * sigma* + lambda * log(sigma*)^2, averaged. sigma* is
// a constant on the tape, so d(loss)/d(ell_i) = sigma*_i / B.
ConfidenceReport superloss(Tape& tape, const Tensor& base_losses, const SuperLossParams& params);
// Same composition with externally supplied confidences (held fixed).
ConfidenceReport superloss_with_sigma(Tape& tape, const Tensor& base_losses, std::span<const double> sigma,
                                      const SuperLossParams& params);
ConfidenceReport la_sl_loss(Tape& tape, const Tensor& logits, std::span<const std::uint32_t> labels,
                            const Priors& priors, const SuperLossParams& params);

enum class LossKind { ce, ce_sl, la, la_sl };

LossKind parse_loss_kind(const std::string& name);
const char* loss_kind_name(LossKind kind) noexcept;

struct LossConfig {
  LossKind kind = LossKind::la_sl;
  SuperLossParams superloss;
};

// Scalar batch loss for any of the four fine-tuning configurations.
Tensor classification_loss(Tape& tape, const Tensor& logits, std::span<const std::uint32_t> labels,
                           const Priors& priors, const LossConfig& config);

}  // namespace tailspin
