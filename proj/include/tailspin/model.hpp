#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tailspin/rng.hpp"
#include "tailspin/tensor.hpp"

namespace tailspin {

// Fully connected layer y = x W + b with W stored [in, out].
struct Linear {
  Tensor weight;
  Tensor bias;
};

// Stack of Linear layers with ReLU between them and, optionally, after the last.
class Mlp {
 public:
  Mlp() = default;
  // He-normal weights, zero biases.
  Mlp(const std::vector<std::size_t>& dims, bool relu_output, Rng& rng);
  Mlp(std::vector<Linear> layers, bool relu_output);

  Tensor forward(Tape& tape, const Tensor& x) const;
  std::vector<Tensor> parameters() const;

  std::size_t num_layers() const noexcept { return layers_.size(); }
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::vector<std::size_t> dims() const;
  bool relu_output() const noexcept { return relu_output_; }

  const std::vector<Linear>& layers() const noexcept { return layers_; }
  std::vector<Linear>& layers() noexcept { return layers_; }

  Mlp clone() const;
  Mlp clone_frozen() const;

 private:
  std::vector<Linear> layers_;
  bool relu_output_ = false;
};

struct Architecture {
  std::size_t input_dim = 8;
  std::size_t encoder_hidden = 64;
  std::size_t representation_dim = 32;
  std::size_t projector_hidden = 32;
  std::size_t projector_dim = 32;
  std::size_t projector_layers = 2;  // 1 to 3 FC layers
  std::size_t predictor_hidden = 16;

  void validate() const;
};

// Siamese model: encoder -> projector (-> predictor). The EMA target copies
// (encoder, projector) and holds untracked parameters.
struct Model {
  Mlp encoder;
  Mlp projector;
  std::optional<Mlp> predictor;
  std::optional<Mlp> target_encoder;
  std::optional<Mlp> target_projector;

  std::vector<Tensor> online_parameters() const;
};

Model make_model(const Architecture& arch, bool with_predictor, bool with_ema_target, std::uint64_t init_seed);

// FNV-1a over the raw bytes of every value, in order.
std::uint64_t parameter_checksum(std::span<const Tensor> params);

// Feature rows [i0, i1, ...] as a constant [B, d] tensor.
Tensor rows_as_tensor(std::span<const float> features, std::size_t dim, std::span<const std::size_t> rows);

}  // namespace tailspin
