#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tailspin {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

class Tape;

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  const Tape* tape = nullptr;  // null for leaves
};
}  // namespace detail

// Dense row-major double tensor. Copies share storage; use clone() for a deep
// copy. Leaves created with parameter() accumulate gradients on backward.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor parameter(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor scalar(double value);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  // Only leaves may be written in place (optimizer updates, EMA).
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t i, std::size_t j) const;

  bool requires_grad() const;
  bool is_leaf() const;
  // Gradient of a leaf parameter; zeros if nothing has flowed into it.
  std::span<const double> grad() const;
  void zero_grad();

  Tensor clone() const;            // deep copy, same requires_grad, detached
  Tensor clone_constant() const;   // deep copy without gradient tracking

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
  friend class Tape;
};

// Define-by-run record of one forward pass. Each op appends an entry holding a
// pullback; backward() replays entries in exact reverse order, once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor transpose(const Tensor& a);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  // a[m,n] + v[n] broadcast over rows.
  Tensor add_row_vector(const Tensor& a, const Tensor& v);
  Tensor scale(const Tensor& a, double factor);
  Tensor add_scalar(const Tensor& a, double offset);
  Tensor relu(const Tensor& a);
  Tensor sum(const Tensor& a);
  Tensor mean(const Tensor& a);
  Tensor row_sum(const Tensor& a);
  Tensor concat_rows(const Tensor& a, const Tensor& b);
  // out[i] = a[i, index[i]]
  Tensor gather_columns(const Tensor& a, std::span<const std::uint32_t> index);

  // Per-column (x - mean) / sqrt(biased var + eps) over the batch axis.
  Tensor standardize_columns(const Tensor& a, double eps);
  // Rows with norm < 1e-12 map to zero with zero gradient.
  Tensor l2_normalize_rows(const Tensor& a);
  Tensor log_sum_exp_rows(const Tensor& a);
  Tensor log_softmax_rows(const Tensor& a);
  Tensor softmax_rows(const Tensor& a);
  // Row-wise cosine similarity of two [m,n] matrices, result [m].
  Tensor cosine_similarity_rows(const Tensor& a, const Tensor& b);
  Tensor stop_gradient(const Tensor& a);

  void backward(const Tensor& scalar_output);

  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  struct Entry {
    std::shared_ptr<detail::Node> out;
    std::vector<std::shared_ptr<detail::Node>> inputs;
    std::function<void()> pullback;
  };

  Tensor record(Shape shape, std::vector<double> value, std::vector<std::shared_ptr<detail::Node>> inputs,
                std::function<void(detail::Node& out)> pullback);
  void check_input(const Tensor& t, const char* op) const;

  std::vector<Entry> entries_;
  bool consumed_ = false;
};

// Max over parameter entries of |analytic - central difference| / max(1, |analytic|).
// `loss` builds a scalar on the tape it is handed; it is re-run for every
// perturbation and must be deterministic (checked by repeated evaluation).
double finite_diff_check(const std::function<Tensor(Tape&)>& loss, std::span<Tensor> params, double step = 1e-5);

}  // namespace tailspin
