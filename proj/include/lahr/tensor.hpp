#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "lahr/errors.hpp"

namespace lahr {

using Shape = std::vector<size_t>;

std::string shape_str(const Shape& shape);
size_t shape_size(const Shape& shape);

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated lazily, same length as values
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Pulls this node's grad into its parents' grads. Set only on op outputs.
  std::function<void(TensorNode&)> backprop;
  std::string op_name;

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

}  // namespace detail

// Dense row-major tensor of doubles participating in a dynamically built
// computation graph. Copies are shallow handles to the same node, so a
// parameter updated in place is seen by every holder.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  size_t size() const;
  size_t rank() const;
  // Rank-2 accessors; rank-1 tensors are treated as a single row.
  size_t rows() const;
  size_t cols() const;

  bool requires_grad() const;
  const std::vector<double>& values() const;
  // In-place mutation for optimizers and initializers. Using this on a tensor
  // that is an op output invalidates any graph built from it.
  std::vector<double>& mutable_values();

  bool has_grad() const;
  const std::vector<double>& grad() const;
  void zero_grad();

  double at(size_t i) const;
  double at(size_t r, size_t c) const;
  double scalar_value() const;

  std::shared_ptr<detail::TensorNode> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::TensorNode> node);

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// Reverse-mode sweep from a scalar loss. Accumulates into .grad of every
// reachable tensor with requires_grad set; repeated calls without zero_grad
// accumulate. Traversal order is a deterministic depth-first post-order.
void backward(const Tensor& loss);

// When debug checks are on, every op output is screened for NaN/Inf and the
// offending op is named in the error. Off by default; tests switch it on.
void set_debug_checks(bool enabled);
bool debug_checks_enabled();

// Suppresses graph construction on the current thread while alive. Forward
// values are computed as usual; nothing records parents or backprop closures.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_enabled();

// Rectangular boolean mask used by attention. allowed(i, j) says whether
// query row i may attend to key column j.
class AttentionMask {
 public:
  AttentionMask() = default;
  AttentionMask(size_t rows, size_t cols, bool initially_allowed = false);

  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }
  bool allowed(size_t r, size_t c) const { return cells_[r * cols_ + c] != 0; }
  void set(size_t r, size_t c, bool allowed);
  // Every query row must be able to attend somewhere or softmax degenerates.
  void validate_rows_nonempty() const;

 private:
  size_t rows_ = 0;
  size_t cols_ = 0;
  std::vector<uint8_t> cells_;
};

// ---- Elementwise and structural ops ----
// Shape rules for binary ops: identical shapes; or b is a scalar; or a is
// [m,n] and b is a row vector [n] or [1,n] broadcast across rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// a * x + b with constant coefficients.
Tensor affine(const Tensor& x, double a, double b);
Tensor scale(const Tensor& x, double a);
Tensor neg(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor log_elem(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);

Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
Tensor layer_norm_rows(const Tensor& x, double eps = 1e-12);

// Replaces disallowed cells with fill_value (typically a large negative
// number fed to softmax). Gradient flows only through allowed cells.
Tensor masked_fill(const Tensor& x, const AttentionMask& mask,
                   double fill_value);

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, size_t begin, size_t end);
Tensor slice_cols(const Tensor& x, size_t begin, size_t end);

// Gathers x[r, c] for each (r, c) pair into a column vector [k, 1].
Tensor take(const Tensor& x, const std::vector<std::pair<size_t, size_t>>& rc);

// Gathers whole rows (duplicates allowed) into a [k, n] tensor.
Tensor gather_rows(const Tensor& x, const std::vector<size_t>& rows);

Tensor reduce_sum(const Tensor& x);
Tensor reduce_mean(const Tensor& x);
Tensor mean_rows(const Tensor& x);  // [m,n] -> [1,n]

// Numerically stable log((1/n) * sum(exp(x_i))) over all elements -> scalar.
Tensor log_mean_exp(const Tensor& x);

// Value used to blank masked attention scores. Finite (so debug screening
// passes) yet small enough that exp underflows to exactly zero after the
// row-max shift, which is what makes block isolation bit-exact.
inline constexpr double kMaskFill = -1e30;

}  // namespace lahr
