#include "tailspin/optim.hpp"

#include <cmath>
#include <numbers>

#include "tailspin/error.hpp"

namespace tailspin {

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

const char* optimizer_kind_name(OptimizerKind kind) noexcept { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

void OptimizerConfig::validate() const {
  if (!(base_lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
}

void sgd_step(std::span<double> theta, std::span<const double> grad, std::span<double> velocity, double lr,
              double momentum, double weight_decay) {
  for (std::size_t i = 0; i < theta.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grad[i] + weight_decay * theta[i];
    theta[i] -= lr * velocity[i];
  }
}

void adam_step(std::span<double> theta, std::span<const double> grad, std::span<double> m, std::span<double> v,
               std::size_t step, double lr, double beta1, double beta2, double eps, double weight_decay) {
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i] + weight_decay * theta[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    theta[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

Optimizer::Optimizer(OptimizerConfig config, std::vector<Tensor> params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  for (const auto& p : params_) {
    if (!p.requires_grad() || !p.is_leaf()) throw PreconditionError("optimizer parameters must be trainable leaves");
    first_.emplace_back(p.size(), 0.0);
    second_.emplace_back(config_.kind == OptimizerKind::adam ? p.size() : 0, 0.0);
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Optimizer::step(double lr) {
  for (const auto& p : params_) {
    for (double g : p.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient; aborting optimizer step");
    }
  }
  ++steps_;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto theta = params_[k].mutable_values();
    auto grad = params_[k].grad();
    if (config_.kind == OptimizerKind::sgd) {
      sgd_step(theta, grad, first_[k], lr, config_.momentum, config_.weight_decay);
    } else {
      adam_step(theta, grad, first_[k], second_[k], steps_, lr, config_.beta1, config_.beta2, config_.eps,
                config_.weight_decay);
    }
  }
}

double scaled_lr(double base_lr, std::size_t batch_size) {
  return base_lr * static_cast<double>(batch_size) / 256.0;
}

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "constant") return ScheduleKind::constant;
  if (name == "cosine") return ScheduleKind::cosine;
  throw ConfigError("unknown schedule '" + name + "' (expected constant or cosine)");
}

void ScheduleConfig::validate() const {
  if (total_epochs == 0) throw ConfigError("schedule needs at least one epoch");
  if (warmup_epochs >= total_epochs) throw ConfigError("warmup epochs must be fewer than total epochs");
}

double lr_at(const ScheduleConfig& schedule, std::size_t epoch, double effective_lr) {
  schedule.validate();
  if (epoch >= schedule.total_epochs) {
    throw PreconditionError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(schedule.total_epochs) + ")");
  }
  if (epoch < schedule.warmup_epochs) {
    return effective_lr * static_cast<double>(epoch + 1) / static_cast<double>(schedule.warmup_epochs);
  }
  if (schedule.kind == ScheduleKind::constant) return effective_lr;
  const double progress = static_cast<double>(epoch - schedule.warmup_epochs) /
                          static_cast<double>(schedule.total_epochs - schedule.warmup_epochs);
  return effective_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace tailspin
