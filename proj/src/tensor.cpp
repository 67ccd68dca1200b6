#include "tailspin/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tailspin/error.hpp"

namespace tailspin {

using detail::Node;

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

namespace {

std::shared_ptr<Node> make_node(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_string(shape) + " holds " + std::to_string(shape_size(shape)) +
                         " values but " + std::to_string(values.size()) + " were given");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->value.size(), 0.0);
  return node;
}

std::vector<double>& grad_buffer(Node& n) {
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + " tensor, got " +
                         shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

constexpr double kNormFloor = 1e-12;

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return Tensor(make_node(std::move(shape), std::move(values), false));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  return Tensor(make_node(std::move(shape), std::move(values), true));
}

Tensor Tensor::zeros(Shape shape) {
  std::size_t n = shape_size(shape);
  return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::scalar(double value) { return constant({}, {value}); }

const Shape& Tensor::shape() const {
  if (!node_) throw PreconditionError("use of an undefined tensor");
  return node_->shape;
}

std::size_t Tensor::size() const { return shape_size(shape()); }

std::size_t Tensor::rows() const {
  require_rank(*this, 2, "rows");
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  require_rank(*this, 2, "cols");
  return node_->shape[1];
}

std::span<const double> Tensor::values() const {
  shape();
  return node_->value;
}

std::span<double> Tensor::mutable_values() {
  if (!is_leaf()) throw TapeError("only leaf tensors may be modified in place");
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1) throw PreconditionError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t i, std::size_t j) const { return node_->value[i * cols() + j]; }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::is_leaf() const {
  shape();
  return node_->tape == nullptr;
}

std::span<const double> Tensor::grad() const {
  shape();
  if (node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() {
  shape();
  if (node_->requires_grad) node_->grad.assign(node_->value.size(), 0.0);
}

Tensor Tensor::clone() const { return Tensor(make_node(shape(), node_->value, node_->requires_grad)); }

Tensor Tensor::clone_constant() const { return Tensor(make_node(shape(), node_->value, false)); }

// ---------------------------------------------------------------------------
// Tape

void Tape::check_input(const Tensor& t, const char* op) const {
  if (consumed_) throw TapeError(std::string(op) + ": tape already consumed by backward()");
  if (!t.defined()) throw PreconditionError(std::string(op) + ": undefined input tensor");
  const Node& n = *t.node_;
  if (n.tape != nullptr && n.tape != this && n.requires_grad) {
    throw TapeError(std::string(op) + ": input was recorded on a different tape");
  }
  for (double v : n.value) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input value");
  }
}

Tensor Tape::record(Shape shape, std::vector<double> value, std::vector<std::shared_ptr<Node>> inputs,
                    std::function<void(Node& out)> pullback) {
  bool tracked = std::any_of(inputs.begin(), inputs.end(), [](const auto& n) { return n->requires_grad; });
  auto out = make_node(std::move(shape), std::move(value), false);
  out->tape = this;
  out->requires_grad = tracked;
  if (tracked) {
    Node* raw = out.get();
    entries_.push_back(Entry{out, std::move(inputs), [fn = std::move(pullback), raw] { fn(*raw); }});
  }
  return Tensor(std::move(out));
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  check_input(a, "matmul");
  check_input(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  const auto& av = a.node_->value;
  const auto& bv = b.node_->value;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  Node* an = a.node_.get();
  Node* bn = b.node_.get();
  return record({m, n}, std::move(out), {a.node_, b.node_}, [an, bn, m, k, n](Node& o) {
    const auto& g = o.grad;
    if (an->requires_grad) {
      auto& ga = grad_buffer(*an);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bn->value[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    if (bn->requires_grad) {
      auto& gb = grad_buffer(*bn);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = an->value[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

Tensor Tape::transpose(const Tensor& a) {
  check_input(a, "transpose");
  require_rank(a, 2, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.node_->value[i * n + j];
  Node* an = a.node_.get();
  return record({n, m}, std::move(out), {a.node_}, [an, m, n](Node& o) {
    auto& ga = grad_buffer(*an);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += o.grad[j * m + i];
  });
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  check_input(a, "add");
  check_input(b, "add");
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.node_->value[i] + b.node_->value[i];
  Node* an = a.node_.get();
  Node* bn = b.node_.get();
  return record(a.shape(), std::move(out), {a.node_, b.node_}, [an, bn](Node& o) {
    for (Node* in : {an, bn}) {
      if (!in->requires_grad) continue;
      auto& gi = grad_buffer(*in);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += o.grad[i];
    }
  });
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  check_input(a, "sub");
  check_input(b, "sub");
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.node_->value[i] - b.node_->value[i];
  Node* an = a.node_.get();
  Node* bn = b.node_.get();
  return record(a.shape(), std::move(out), {a.node_, b.node_}, [an, bn](Node& o) {
    if (an->requires_grad) {
      auto& ga = grad_buffer(*an);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
    }
    if (bn->requires_grad) {
      auto& gb = grad_buffer(*bn);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= o.grad[i];
    }
  });
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  check_input(a, "mul");
  check_input(b, "mul");
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.node_->value[i] * b.node_->value[i];
  Node* an = a.node_.get();
  Node* bn = b.node_.get();
  return record(a.shape(), std::move(out), {a.node_, b.node_}, [an, bn](Node& o) {
    if (an->requires_grad) {
      auto& ga = grad_buffer(*an);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      auto& gb = grad_buffer(*bn);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += o.grad[i] * an->value[i];
    }
  });
}

Tensor Tape::add_row_vector(const Tensor& a, const Tensor& v) {
  check_input(a, "add_row_vector");
  check_input(v, "add_row_vector");
  require_rank(a, 2, "add_row_vector");
  if (v.rank() != 1 || v.size() != a.cols()) {
    throw DimensionError("add_row_vector: shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(v.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.node_->value);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += v.node_->value[j];
  Node* an = a.node_.get();
  Node* vn = v.node_.get();
  return record(a.shape(), std::move(out), {a.node_, v.node_}, [an, vn, m, n](Node& o) {
    if (an->requires_grad) {
      auto& ga = grad_buffer(*an);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
    }
    if (vn->requires_grad) {
      auto& gv = grad_buffer(*vn);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gv[j] += o.grad[i * n + j];
    }
  });
}

Tensor Tape::scale(const Tensor& a, double factor) {
  check_input(a, "scale");
  std::vector<double> out(a.node_->value);
  for (double& x : out) x *= factor;
  Node* an = a.node_.get();
  return record(a.shape(), std::move(out), {a.node_}, [an, factor](Node& o) {
    auto& ga = grad_buffer(*an);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor * o.grad[i];
  });
}

Tensor Tape::add_scalar(const Tensor& a, double offset) {
  check_input(a, "add_scalar");
  std::vector<double> out(a.node_->value);
  for (double& x : out) x += offset;
  Node* an = a.node_.get();
  return record(a.shape(), std::move(out), {a.node_}, [an](Node& o) {
    auto& ga = grad_buffer(*an);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
  });
}

Tensor Tape::relu(const Tensor& a) {
  check_input(a, "relu");
  std::vector<double> out(a.node_->value);
  for (double& x : out) x = x > 0.0 ? x : 0.0;
  Node* an = a.node_.get();
  return record(a.shape(), std::move(out), {a.node_}, [an](Node& o) {
    auto& ga = grad_buffer(*an);
    for (std::size_t i = 0; i < ga.size(); ++i)
      if (an->value[i] > 0.0) ga[i] += o.grad[i];
  });
}

Tensor Tape::sum(const Tensor& a) {
  check_input(a, "sum");
  double s = 0.0;
  for (double x : a.node_->value) s += x;
  Node* an = a.node_.get();
  return record({}, {s}, {a.node_}, [an](Node& o) {
    auto& ga = grad_buffer(*an);
    for (double& g : ga) g += o.grad[0];
  });
}

Tensor Tape::mean(const Tensor& a) {
  check_input(a, "mean");
  if (a.size() == 0) throw PreconditionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor Tape::row_sum(const Tensor& a) {
  check_input(a, "row_sum");
  require_rank(a, 2, "row_sum");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += a.node_->value[i * n + j];
  Node* an = a.node_.get();
  return record({m}, std::move(out), {a.node_}, [an, m, n](Node& o) {
    auto& ga = grad_buffer(*an);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += o.grad[i];
  });
}

Tensor Tape::concat_rows(const Tensor& a, const Tensor& b) {
  check_input(a, "concat_rows");
  check_input(b, "concat_rows");
  require_rank(a, 2, "concat_rows");
  require_rank(b, 2, "concat_rows");
  if (a.cols() != b.cols()) {
    throw DimensionError("concat_rows: column mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(a.node_->value);
  out.insert(out.end(), b.node_->value.begin(), b.node_->value.end());
  const std::size_t split = a.size();
  Node* an = a.node_.get();
  Node* bn = b.node_.get();
  return record({a.rows() + b.rows(), a.cols()}, std::move(out), {a.node_, b.node_}, [an, bn, split](Node& o) {
    if (an->requires_grad) {
      auto& ga = grad_buffer(*an);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
    }
    if (bn->requires_grad) {
      auto& gb = grad_buffer(*bn);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += o.grad[split + i];
    }
  });
}

Tensor Tape::gather_columns(const Tensor& a, std::span<const std::uint32_t> index) {
  check_input(a, "gather_columns");
  require_rank(a, 2, "gather_columns");
  const std::size_t m = a.rows(), n = a.cols();
  if (index.size() != m) {
    throw DimensionError("gather_columns: " + std::to_string(index.size()) + " indices for " +
                         shape_string(a.shape()));
  }
  std::vector<std::uint32_t> idx(index.begin(), index.end());
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (idx[i] >= n) throw DimensionError("gather_columns: index " + std::to_string(idx[i]) + " out of range");
    out[i] = a.node_->value[i * n + idx[i]];
  }
  Node* an = a.node_.get();
  return record({m}, std::move(out), {a.node_}, [an, idx = std::move(idx), n](Node& o) {
    auto& ga = grad_buffer(*an);
    for (std::size_t i = 0; i < idx.size(); ++i) ga[i * n + idx[i]] += o.grad[i];
  });
}

Tensor Tape::standardize_columns(const Tensor& a, double eps) {
  check_input(a, "standardize_columns");
  require_rank(a, 2, "standardize_columns");
  const std::size_t b = a.rows(), n = a.cols();
  if (b == 0) throw PreconditionError("standardize_columns: empty batch");
  const auto& x = a.node_->value;
  std::vector<double> inv_std(n), out(b * n);
  for (std::size_t j = 0; j < n; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < b; ++i) mu += x[i * n + j];
    mu /= static_cast<double>(b);
    double var = 0.0;
    for (std::size_t i = 0; i < b; ++i) var += (x[i * n + j] - mu) * (x[i * n + j] - mu);
    var /= static_cast<double>(b);
    inv_std[j] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < b; ++i) out[i * n + j] = (x[i * n + j] - mu) * inv_std[j];
  }
  Node* an = a.node_.get();
  auto y = std::make_shared<std::vector<double>>(out);
  // dx = inv_std * (g - mean(g) - y * mean(g*y)), exact with eps inside the sqrt.
  return record(a.shape(), std::move(out), {a.node_}, [an, y, inv_std = std::move(inv_std), b, n](Node& o) {
    auto& ga = grad_buffer(*an);
    const auto& g = o.grad;
    for (std::size_t j = 0; j < n; ++j) {
      double mg = 0.0, mgy = 0.0;
      for (std::size_t i = 0; i < b; ++i) {
        mg += g[i * n + j];
        mgy += g[i * n + j] * (*y)[i * n + j];
      }
      mg /= static_cast<double>(b);
      mgy /= static_cast<double>(b);
      for (std::size_t i = 0; i < b; ++i)
        ga[i * n + j] += inv_std[j] * (g[i * n + j] - mg - (*y)[i * n + j] * mgy);
    }
  });
}

Tensor Tape::l2_normalize_rows(const Tensor& a) {
  check_input(a, "l2_normalize_rows");
  require_rank(a, 2, "l2_normalize_rows");
  const std::size_t m = a.rows(), n = a.cols();
  const auto& x = a.node_->value;
  std::vector<double> norms(m), out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += x[i * n + j] * x[i * n + j];
    norms[i] = std::sqrt(s);
    if (norms[i] < kNormFloor) continue;
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] / norms[i];
  }
  Node* an = a.node_.get();
  auto y = std::make_shared<std::vector<double>>(out);
  return record(a.shape(), std::move(out), {a.node_}, [an, y, norms = std::move(norms), m, n](Node& o) {
    auto& ga = grad_buffer(*an);
    const auto& g = o.grad;
    for (std::size_t i = 0; i < m; ++i) {
      if (norms[i] < kNormFloor) continue;
      double gy = 0.0;
      for (std::size_t j = 0; j < n; ++j) gy += g[i * n + j] * (*y)[i * n + j];
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += (g[i * n + j] - (*y)[i * n + j] * gy) / norms[i];
    }
  });
}

namespace {
// Row-wise softmax and log-sum-exp with max shifting.
void softmax_rows_impl(const std::vector<double>& x, std::size_t m, std::size_t n, std::vector<double>& prob,
                       std::vector<double>& lse) {
  prob.assign(m * n, 0.0);
  lse.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = x[i * n];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[i * n + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      prob[i * n + j] = std::exp(x[i * n + j] - mx);
      s += prob[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) prob[i * n + j] /= s;
    lse[i] = mx + std::log(s);
  }
}
}  // namespace

Tensor Tape::log_sum_exp_rows(const Tensor& a) {
  check_input(a, "log_sum_exp_rows");
  require_rank(a, 2, "log_sum_exp_rows");
  const std::size_t m = a.rows(), n = a.cols();
  if (n == 0) throw DimensionError("log_sum_exp_rows: zero columns");
  std::vector<double> prob, lse;
  softmax_rows_impl(a.node_->value, m, n, prob, lse);
  Node* an = a.node_.get();
  return record({m}, std::move(lse), {a.node_}, [an, prob = std::move(prob), m, n](Node& o) {
    auto& ga = grad_buffer(*an);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += o.grad[i] * prob[i * n + j];
  });
}

Tensor Tape::log_softmax_rows(const Tensor& a) {
  check_input(a, "log_softmax_rows");
  require_rank(a, 2, "log_softmax_rows");
  const std::size_t m = a.rows(), n = a.cols();
  if (n == 0) throw DimensionError("log_softmax_rows: zero columns");
  std::vector<double> prob, lse;
  softmax_rows_impl(a.node_->value, m, n, prob, lse);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.node_->value[i * n + j] - lse[i];
  Node* an = a.node_.get();
  return record(a.shape(), std::move(out), {a.node_}, [an, prob = std::move(prob), m, n](Node& o) {
    auto& ga = grad_buffer(*an);
    for (std::size_t i = 0; i < m; ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < n; ++j) gs += o.grad[i * n + j];
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += o.grad[i * n + j] - prob[i * n + j] * gs;
    }
  });
}

Tensor Tape::softmax_rows(const Tensor& a) {
  check_input(a, "softmax_rows");
  require_rank(a, 2, "softmax_rows");
  const std::size_t m = a.rows(), n = a.cols();
  if (n == 0) throw DimensionError("softmax_rows: zero columns");
  std::vector<double> prob, lse;
  softmax_rows_impl(a.node_->value, m, n, prob, lse);
  Node* an = a.node_.get();
  auto p = std::make_shared<std::vector<double>>(prob);
  return record(a.shape(), std::move(prob), {a.node_}, [an, p, m, n](Node& o) {
    auto& ga = grad_buffer(*an);
    for (std::size_t i = 0; i < m; ++i) {
      double gp = 0.0;
      for (std::size_t j = 0; j < n; ++j) gp += o.grad[i * n + j] * (*p)[i * n + j];
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += (*p)[i * n + j] * (o.grad[i * n + j] - gp);
    }
  });
}

Tensor Tape::cosine_similarity_rows(const Tensor& a, const Tensor& b) {
  check_input(a, "cosine_similarity_rows");
  check_input(b, "cosine_similarity_rows");
  require_rank(a, 2, "cosine_similarity_rows");
  require_same_shape(a, b, "cosine_similarity_rows");
  const std::size_t m = a.rows(), n = a.cols();
  const auto& x = a.node_->value;
  const auto& y = b.node_->value;
  std::vector<double> na(m), nb(m), out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double sa = 0.0, sb = 0.0, d = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      sa += x[i * n + j] * x[i * n + j];
      sb += y[i * n + j] * y[i * n + j];
      d += x[i * n + j] * y[i * n + j];
    }
    na[i] = std::sqrt(sa);
    nb[i] = std::sqrt(sb);
    if (na[i] >= kNormFloor && nb[i] >= kNormFloor) out[i] = d / (na[i] * nb[i]);
  }
  Node* an = a.node_.get();
  Node* bn = b.node_.get();
  auto c = std::make_shared<std::vector<double>>(out);
  return record({m}, std::move(out), {a.node_, b.node_},
                [an, bn, c, na = std::move(na), nb = std::move(nb), m, n](Node& o) {
                  for (std::size_t i = 0; i < m; ++i) {
                    if (na[i] < kNormFloor || nb[i] < kNormFloor) continue;
                    const double g = o.grad[i];
                    const double inv = 1.0 / (na[i] * nb[i]);
                    if (an->requires_grad) {
                      auto& ga = grad_buffer(*an);
                      const double k = (*c)[i] / (na[i] * na[i]);
                      for (std::size_t j = 0; j < n; ++j)
                        ga[i * n + j] += g * (bn->value[i * n + j] * inv - k * an->value[i * n + j]);
                    }
                    if (bn->requires_grad) {
                      auto& gb = grad_buffer(*bn);
                      const double k = (*c)[i] / (nb[i] * nb[i]);
                      for (std::size_t j = 0; j < n; ++j)
                        gb[i * n + j] += g * (an->value[i * n + j] * inv - k * bn->value[i * n + j]);
                    }
                  }
                });
}

Tensor Tape::stop_gradient(const Tensor& a) {
  check_input(a, "stop_gradient");
  // Untracked output: the pullback is identically zero, so no entry is needed.
  return record(a.shape(), a.node_->value, {}, {});
}

void Tape::backward(const Tensor& scalar_output) {
  if (!scalar_output.defined()) throw PreconditionError("backward: undefined output");
  if (scalar_output.size() != 1) {
    throw PreconditionError("backward: output must be scalar, got shape " + shape_string(scalar_output.shape()));
  }
  Node& out = *scalar_output.node_;
  if (consumed_) throw TapeError("backward: tape already consumed; re-run the forward pass");
  if (out.tape != this) throw TapeError("backward: output was not produced on this tape");
  if (!out.requires_grad) throw TapeError("backward: output is detached from every parameter");
  consumed_ = true;
  out.grad.assign(1, 1.0);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->out->grad.empty()) continue;
    it->pullback();
  }
  for (auto& e : entries_) {
    e.out->grad.clear();
    e.out->grad.shrink_to_fit();
  }
}

// ---------------------------------------------------------------------------

double finite_diff_check(const std::function<Tensor(Tape&)>& loss, std::span<Tensor> params, double step) {
  if (!(step > 0.0)) throw PreconditionError("finite_diff_check: step must be positive");
  for (auto& p : params) {
    if (!p.requires_grad() || !p.is_leaf()) throw PreconditionError("finite_diff_check: params must be leaves");
    p.zero_grad();
  }
  auto evaluate = [&] {
    Tape t;
    return loss(t).item();
  };
  {
    Tape t;
    Tensor out = loss(t);
    t.backward(out);
  }
  const double first = evaluate();
  const double second = evaluate();
  if (first != second) throw OracleError("finite_diff_check: loss is not deterministic");

  double worst = 0.0;
  for (auto& p : params) {
    std::vector<double> analytic(p.grad().begin(), p.grad().end());
    auto vals = p.mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + step;
      const double up = evaluate();
      vals[i] = orig - step;
      const double down = evaluate();
      vals[i] = orig;
      const double fd = (up - down) / (2.0 * step);
      worst = std::max(worst, std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i])));
    }
  }
  return worst;
}

}  // namespace tailspin
