#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tailspin/tensor.hpp"

namespace tailspin {

enum class OptimizerKind { sgd, adam };

OptimizerKind parse_optimizer_kind(const std::string& name);
const char* optimizer_kind_name(OptimizerKind kind) noexcept;

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double base_lr = 0.001;
  double weight_decay = 0.0;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 256;

  void validate() const;
};

// v <- mu v + g + wd theta;  theta <- theta - lr v
void sgd_step(std::span<double> theta, std::span<const double> grad, std::span<double> velocity, double lr,
              double momentum, double weight_decay);

// Bias-corrected Adam with the weight decay added to the gradient. `step` is
// the 1-based update count.
void adam_step(std::span<double> theta, std::span<const double> grad, std::span<double> m, std::span<double> v,
               std::size_t step, double lr, double beta1, double beta2, double eps, double weight_decay);

// Owns momentum/moment buffers for a fixed list of leaf parameters.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::vector<Tensor> params);

  void zero_grad();
  // Throws NumericError if any gradient is non-finite; parameters are left untouched then.
  void step(double lr);

  const OptimizerConfig& config() const noexcept { return config_; }
  const std::vector<Tensor>& params() const noexcept { return params_; }
  std::size_t steps_taken() const noexcept { return steps_; }

 private:
  OptimizerConfig config_;
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::size_t steps_ = 0;
};

// base_lr * batch_size / 256
double scaled_lr(double base_lr, std::size_t batch_size);

enum class ScheduleKind { constant, cosine };

ScheduleKind parse_schedule_kind(const std::string& name);

struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::cosine;
  std::size_t warmup_epochs = 0;
  std::size_t total_epochs = 1;

  void validate() const;
};

// Linear warmup lr*(epoch+1)/warmup, then cosine decay (or constant).
double lr_at(const ScheduleConfig& schedule, std::size_t epoch, double effective_lr);

}  // namespace tailspin
