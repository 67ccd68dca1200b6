#include "tailspin/model.hpp"

#include <cmath>
#include <cstring>

#include "tailspin/error.hpp"

namespace tailspin {

Mlp::Mlp(const std::vector<std::size_t>& dims, bool relu_output, Rng& rng) : relu_output_(relu_output) {
  if (dims.size() < 2) throw ConfigError("an MLP needs at least an input and an output width");
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t in = dims[l], out = dims[l + 1];
    if (in == 0 || out == 0) throw ConfigError("MLP layer widths must be positive");
    const double std_dev = std::sqrt(2.0 / static_cast<double>(in));
    std::vector<double> w(in * out);
    for (double& v : w) v = std_dev * rng.normal();
    layers_.push_back(Linear{Tensor::parameter({in, out}, std::move(w)),
                             Tensor::parameter({out}, std::vector<double>(out, 0.0))});
  }
}

Mlp::Mlp(std::vector<Linear> layers, bool relu_output) : layers_(std::move(layers)), relu_output_(relu_output) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& w = layers_[l].weight.shape();
    const auto& b = layers_[l].bias.shape();
    if (w.size() != 2 || b.size() != 1 || b[0] != w[1]) throw DimensionError("malformed linear layer");
    if (l > 0 && layers_[l - 1].weight.shape()[1] != w[0]) throw DimensionError("MLP layer widths do not chain");
  }
}

Tensor Mlp::forward(Tape& tape, const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != input_dim()) {
    throw DimensionError("MLP expects [B," + std::to_string(input_dim()) + "] input, got " + shape_string(x.shape()));
  }
  Tensor h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    h = tape.add_row_vector(tape.matmul(h, layers_[l].weight), layers_[l].bias);
    if (l + 1 < layers_.size() || relu_output_) h = tape.relu(h);
  }
  return h;
}

std::vector<Tensor> Mlp::parameters() const {
  std::vector<Tensor> out;
  for (const auto& l : layers_) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

std::size_t Mlp::input_dim() const {
  if (layers_.empty()) throw PreconditionError("empty MLP");
  return layers_.front().weight.shape()[0];
}

std::size_t Mlp::output_dim() const {
  if (layers_.empty()) throw PreconditionError("empty MLP");
  return layers_.back().weight.shape()[1];
}

std::vector<std::size_t> Mlp::dims() const {
  std::vector<std::size_t> d;
  if (layers_.empty()) return d;
  d.push_back(input_dim());
  for (const auto& l : layers_) d.push_back(l.weight.shape()[1]);
  return d;
}

Mlp Mlp::clone() const {
  std::vector<Linear> copy;
  for (const auto& l : layers_) copy.push_back(Linear{l.weight.clone(), l.bias.clone()});
  return Mlp(std::move(copy), relu_output_);
}

Mlp Mlp::clone_frozen() const {
  std::vector<Linear> copy;
  for (const auto& l : layers_) copy.push_back(Linear{l.weight.clone_constant(), l.bias.clone_constant()});
  return Mlp(std::move(copy), relu_output_);
}

void Architecture::validate() const {
  if (input_dim == 0 || encoder_hidden == 0 || representation_dim == 0 || projector_hidden == 0 ||
      projector_dim == 0 || predictor_hidden == 0) {
    throw ConfigError("architecture widths must be positive");
  }
  if (projector_layers < 1 || projector_layers > 3) throw ConfigError("projector must have 1 to 3 FC layers");
}

std::vector<Tensor> Model::online_parameters() const {
  auto params = encoder.parameters();
  for (auto& p : projector.parameters()) params.push_back(p);
  if (predictor) {
    for (auto& p : predictor->parameters()) params.push_back(p);
  }
  return params;
}

Model make_model(const Architecture& arch, bool with_predictor, bool with_ema_target, std::uint64_t init_seed) {
  arch.validate();
  Rng rng(init_seed);
  Model m;
  m.encoder = Mlp({arch.input_dim, arch.encoder_hidden, arch.representation_dim}, true, rng);
  std::vector<std::size_t> proj{arch.representation_dim};
  for (std::size_t l = 0; l + 1 < arch.projector_layers; ++l) proj.push_back(arch.projector_hidden);
  proj.push_back(arch.projector_dim);
  m.projector = Mlp(proj, false, rng);
  if (with_predictor) m.predictor = Mlp({arch.projector_dim, arch.predictor_hidden, arch.projector_dim}, false, rng);
  if (with_ema_target) {
    m.target_encoder = m.encoder.clone_frozen();
    m.target_projector = m.projector.clone_frozen();
  }
  return m;
}

std::uint64_t parameter_checksum(std::span<const Tensor> params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params) {
    for (double v : p.values()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof v);
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

Tensor rows_as_tensor(std::span<const float> features, std::size_t dim, std::span<const std::size_t> rows) {
  std::vector<double> v;
  v.reserve(rows.size() * dim);
  for (std::size_t r : rows) {
    for (std::size_t j = 0; j < dim; ++j) v.push_back(features[r * dim + j]);
  }
  return Tensor::constant({rows.size(), dim}, std::move(v));
}

}  // namespace tailspin
