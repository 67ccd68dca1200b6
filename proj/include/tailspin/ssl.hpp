#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "tailspin/data.hpp"
#include "tailspin/model.hpp"
#include "tailspin/optim.hpp"
#include "tailspin/tensor.hpp"

namespace tailspin {

enum class SslMethod { simclr, simsiam, byol, barlow_twins };

SslMethod parse_ssl_method(const std::string& name);
const char* ssl_method_name(SslMethod method) noexcept;
bool uses_predictor(SslMethod method) noexcept;

struct SslConfig {
  SslMethod method = SslMethod::simsiam;
  double temperature = 0.5;
  double ema_momentum = 0.99;
  double lambda_bt = 0.005;
  bool stop_gradient = true;  // SimSiam ablation switch
  AugmentationSpec augmentation{0.5, 0.2, 0.2};

  void validate() const;
};

// -(cos(p_a, sg(z_b)) + cos(p_b, sg(z_a))) / 2, averaged over the batch.
Tensor simsiam_loss(Tape& tape, const Tensor& p_a, const Tensor& z_a, const Tensor& p_b, const Tensor& z_b,
                    bool stop_gradient = true);

// Same form with regression targets from the EMA network (never differentiated).
Tensor byol_loss(Tape& tape, const Tensor& p_a, const Tensor& target_z_a, const Tensor& p_b,
                 const Tensor& target_z_b);

// NT-Xent over the 2B embeddings; requires B >= 2.
Tensor nt_xent_loss(Tape& tape, const Tensor& z_a, const Tensor& z_b, double temperature);

// Sum_i (1 - C_ii)^2 + lambda * Sum_{i != j} C_ij^2 over the cross-correlation
// of batch-standardized embeddings.
Tensor barlow_twins_loss(Tape& tape, const Tensor& z_a, const Tensor& z_b, double lambda_bt);

// xi <- m xi + (1 - m) theta, layer by layer.
void ema_update(Mlp& target, const Mlp& online, double momentum);

struct PairEncoding {
  Tensor z_a, z_b;
  Tensor p_a, p_b;                // predictor outputs (SimSiam / BYOL)
  Tensor target_z_a, target_z_b;  // EMA target projections (BYOL)
};

// Two augmented views of the batch through encoder and projector (and the
// predictor / EMA target where the method uses them).
PairEncoding encode_pair(Tape& tape, const Model& model, const Dataset& data, std::span<const std::size_t> batch,
                         const SslConfig& config, std::uint64_t seed, std::uint64_t epoch);

Tensor ssl_loss(Tape& tape, const PairEncoding& enc, const SslConfig& config);

// One pass over shuffled minibatches. Reads features only; labels are never touched.
double pretrain_epoch(Model& model, const Dataset& data, const SslConfig& config, Optimizer& optimizer, double lr,
                      std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch);

// Shuffled minibatches of `batch_size`; a trailing batch smaller than
// `min_batch` is dropped.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::size_t min_batch,
                                                    std::uint64_t seed, std::uint64_t epoch);

}  // namespace tailspin
