#include "lahr/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace lahr {

namespace {

std::atomic<bool> g_debug_checks{false};
thread_local int g_no_grad_depth = 0;

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void check_values_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string(op) + ": produced a non-finite value");
    }
  }
}

std::shared_ptr<detail::TensorNode> make_node(Shape shape,
                                              std::vector<double> values,
                                              const char* op) {
  if (shape_size(shape) != values.size()) {
    throw ContractError(std::string(op) + ": value count " +
                        std::to_string(values.size()) +
                        " does not match shape " + shape_str(shape));
  }
  if (g_debug_checks.load(std::memory_order_relaxed)) {
    check_values_finite(values, op);
  }
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->op_name = op;
  return node;
}

const Tensor& req(const Tensor& t, const char* op) {
  if (!t.defined()) {
    throw ContractError(std::string(op) + ": undefined tensor argument");
  }
  return t;
}

bool wants_grad(std::initializer_list<const Tensor*> inputs) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Row-major [m,k] x [k,n] -> [m,n]. Fixed i-k-j loop order: each output row
// is accumulated with an identical instruction sequence regardless of which
// other rows exist, which the block-isolation equivalence relies on.
void matmul_raw(const double* a, const double* b, double* c, size_t m,
                size_t k, size_t n, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

enum class Broadcast { same, scalar_b, row_b };

Broadcast broadcast_mode(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::same;
  if (b.size() == 1) return Broadcast::scalar_b;
  if (a.rank() == 2 && b.cols() == a.cols() && b.rows() == 1 &&
      b.rank() <= 2) {
    return Broadcast::row_b;
  }
  throw ContractError(std::string(op) + ": incompatible shapes " +
                      shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

struct RowsCols {
  size_t rows;
  size_t cols;
};

RowsCols as_matrix(const Tensor& t, const char* op) {
  if (t.rank() == 1) return {1, t.shape()[0]};
  if (t.rank() == 2) return {t.shape()[0], t.shape()[1]};
  throw ContractError(std::string(op) + ": expected rank 1 or 2, got shape " +
                      shape_str(t.shape()));
}

template <typename Fwd, typename Bwd>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* op, Fwd fwd,
                 Bwd bwd_pair) {
  req(a, op);
  req(b, op);
  Broadcast mode = broadcast_mode(a, b, op);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(av.size());
  const size_t n = av.size();
  const size_t bc = bv.size();
  switch (mode) {
    case Broadcast::same:
      for (size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i]);
      break;
    case Broadcast::scalar_b:
      for (size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[0]);
      break;
    case Broadcast::row_b:
      for (size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i % bc]);
      break;
  }
  auto node = make_node(a.shape(), std::move(out), op);
  if (wants_grad({&a, &b})) {
    node->requires_grad = true;
    auto an = a.node();
    auto bn = b.node();
    node->parents = {an, bn};
    node->backprop = [an, bn, mode, bwd_pair](detail::TensorNode& self) {
      const size_t n = self.values.size();
      const size_t bc = bn->values.size();
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < n; ++i) {
          size_t bi = mode == Broadcast::same
                          ? i
                          : (mode == Broadcast::scalar_b ? 0 : i % bc);
          an->grad[i] +=
              self.grad[i] * bwd_pair.first(an->values[i], bn->values[bi]);
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < n; ++i) {
          size_t bi = mode == Broadcast::same
                          ? i
                          : (mode == Broadcast::scalar_b ? 0 : i % bc);
          bn->grad[bi] +=
              self.grad[i] * bwd_pair.second(an->values[i], bn->values[bi]);
        }
      }
    };
  }
  return Tensor::wrap(node);
}

template <typename Fwd, typename Dfn>
Tensor unary_op(const Tensor& x, const char* op, Fwd fwd, Dfn dfn) {
  req(x, op);
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  auto node = make_node(x.shape(), std::move(out), op);
  if (wants_grad({&x})) {
    node->requires_grad = true;
    auto xn = x.node();
    node->parents = {xn};
    node->backprop = [xn, dfn](detail::TensorNode& self) {
      xn->ensure_grad();
      for (size_t i = 0; i < self.values.size(); ++i) {
        xn->grad[i] += self.grad[i] * dfn(xn->values[i], self.values[i]);
      }
    };
  }
  return Tensor::wrap(node);
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

size_t shape_size(const Shape& shape) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return n;
}

// ---- Tensor ----

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> v(shape_size(shape), value);
  return from_values(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  for (double x : values) {
    if (!std::isfinite(x)) {
      throw ContractError("Tensor: non-finite value at construction");
    }
  }
  auto node = make_node(std::move(shape), std::move(values), "leaf");
  node->requires_grad = requires_grad;
  return wrap(node);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({}, {value}, requires_grad);
}

Tensor Tensor::wrap(std::shared_ptr<detail::TensorNode> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("Tensor::shape: undefined tensor");
  return node_->shape;
}

size_t Tensor::size() const { return shape_size(shape()); }
size_t Tensor::rank() const { return shape().size(); }

size_t Tensor::rows() const {
  const Shape& s = shape();
  if (s.size() == 2) return s[0];
  if (s.size() == 1) return 1;
  throw ContractError("Tensor::rows: shape " + shape_str(s) +
                      " is not a matrix");
}

size_t Tensor::cols() const {
  const Shape& s = shape();
  if (s.size() == 2) return s[1];
  if (s.size() == 1) return s[0];
  throw ContractError("Tensor::cols: shape " + shape_str(s) +
                      " is not a matrix");
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

const std::vector<double>& Tensor::values() const {
  if (!node_) throw ContractError("Tensor::values: undefined tensor");
  return node_->values;
}

std::vector<double>& Tensor::mutable_values() {
  if (!node_) throw ContractError("Tensor::mutable_values: undefined tensor");
  return node_->values;
}

bool Tensor::has_grad() const {
  return node_ && node_->grad.size() == node_->values.size();
}

const std::vector<double>& Tensor::grad() const {
  if (!node_) throw ContractError("Tensor::grad: undefined tensor");
  if (!has_grad()) {
    throw ContractError("Tensor::grad: gradient not populated; call backward");
  }
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_) throw ContractError("Tensor::zero_grad: undefined tensor");
  node_->grad.clear();
}

double Tensor::at(size_t i) const {
  const auto& v = values();
  if (i >= v.size()) {
    throw ContractError("Tensor::at: index " + std::to_string(i) +
                        " out of range for shape " + shape_str(shape()));
  }
  return v[i];
}

double Tensor::at(size_t r, size_t c) const {
  if (r >= rows() || c >= cols()) {
    throw ContractError("Tensor::at: index (" + std::to_string(r) + "," +
                        std::to_string(c) + ") out of range for shape " +
                        shape_str(shape()));
  }
  return values()[r * cols() + c];
}

double Tensor::scalar_value() const {
  if (size() != 1) {
    throw ContractError("Tensor::scalar_value: shape " + shape_str(shape()) +
                        " is not a scalar");
  }
  return values()[0];
}

// ---- Autodiff machinery ----

void backward(const Tensor& loss) {
  req(loss, "backward");
  if (loss.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        shape_str(loss.shape()));
  }
  auto root = loss.node();
  if (!root->requires_grad) {
    throw ContractError(
        "backward: loss does not require grad; no parameters reachable");
  }

  // Iterative depth-first post-order. Children (parents in graph terms) are
  // visited in their stored order, so the sweep is deterministic.
  std::vector<detail::TensorNode*> order;
  std::unordered_set<detail::TensorNode*> visited;
  struct Frame {
    detail::TensorNode* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({root.get(), 0});
  visited.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::TensorNode* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && visited.insert(p).second) {
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  // Interior grads are per-sweep scratch; only leaf grads accumulate across
  // repeated backward calls.
  for (detail::TensorNode* n : order) {
    if (n->backprop) {
      n->ensure_grad();
      std::fill(n->grad.begin(), n->grad.end(), 0.0);
    }
  }
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorNode* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

void set_debug_checks(bool enabled) {
  g_debug_checks.store(enabled, std::memory_order_relaxed);
}

bool debug_checks_enabled() {
  return g_debug_checks.load(std::memory_order_relaxed);
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

// ---- AttentionMask ----

AttentionMask::AttentionMask(size_t rows, size_t cols, bool initially_allowed)
    : rows_(rows),
      cols_(cols),
      cells_(rows * cols, initially_allowed ? 1 : 0) {}

void AttentionMask::set(size_t r, size_t c, bool allowed) {
  if (r >= rows_ || c >= cols_) {
    throw ContractError("AttentionMask::set: index (" + std::to_string(r) +
                        "," + std::to_string(c) + ") out of range for " +
                        std::to_string(rows_) + "x" + std::to_string(cols_));
  }
  cells_[r * cols_ + c] = allowed ? 1 : 0;
}

void AttentionMask::validate_rows_nonempty() const {
  for (size_t r = 0; r < rows_; ++r) {
    bool any = false;
    for (size_t c = 0; c < cols_; ++c) {
      if (cells_[r * cols_ + c]) {
        any = true;
        break;
      }
    }
    if (!any) {
      throw ContractError("AttentionMask: row " + std::to_string(r) +
                          " attends to nothing");
    }
  }
}

// ---- Ops ----

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      std::make_pair([](double, double) { return 1.0; },
                     [](double, double) { return 1.0; }));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      std::make_pair([](double, double) { return 1.0; },
                     [](double, double) { return -1.0; }));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      std::make_pair([](double, double y) { return y; },
                     [](double x, double) { return x; }));
}

Tensor affine(const Tensor& x, double a, double b) {
  return unary_op(
      x, "affine", [a, b](double v) { return a * v + b; },
      [a](double, double) { return a; });
}

Tensor scale(const Tensor& x, double a) { return affine(x, a, 0.0); }
Tensor neg(const Tensor& x) { return affine(x, -1.0, 0.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  req(a, "matmul");
  req(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2) {
    throw ContractError("matmul: expects rank-2 operands, got " +
                        shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const size_t m = a.shape()[0], k = a.shape()[1];
  const size_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    throw ContractError("matmul: inner dimensions disagree, " +
                        shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  matmul_raw(a.values().data(), b.values().data(), out.data(), m, k, n, false);
  auto node = make_node({m, n}, std::move(out), "matmul");
  if (wants_grad({&a, &b})) {
    node->requires_grad = true;
    auto an = a.node();
    auto bn = b.node();
    node->parents = {an, bn};
    node->backprop = [an, bn, m, k, n](detail::TensorNode& self) {
      if (an->requires_grad) {
        an->ensure_grad();
        // dA[i,p] += sum_j dC[i,j] * B[p,j]
        for (size_t i = 0; i < m; ++i) {
          for (size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* crow = self.grad.data() + i * n;
            const double* brow = bn->values.data() + p * n;
            for (size_t j = 0; j < n; ++j) acc += crow[j] * brow[j];
            an->grad[i * k + p] += acc;
          }
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        // dB[p,j] += sum_i A[i,p] * dC[i,j]
        for (size_t i = 0; i < m; ++i) {
          const double* arow = an->values.data() + i * k;
          const double* crow = self.grad.data() + i * n;
          for (size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            double* brow = bn->grad.data() + p * n;
            for (size_t j = 0; j < n; ++j) brow[j] += av * crow[j];
          }
        }
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor transpose(const Tensor& x) {
  req(x, "transpose");
  if (x.rank() != 2) {
    throw ContractError("transpose: expects rank-2, got " +
                        shape_str(x.shape()));
  }
  const size_t m = x.shape()[0], n = x.shape()[1];
  std::vector<double> out(m * n);
  const auto& xv = x.values();
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = 0; j < n; ++j) out[j * m + i] = xv[i * n + j];
  }
  auto node = make_node({n, m}, std::move(out), "transpose");
  if (wants_grad({&x})) {
    node->requires_grad = true;
    auto xn = x.node();
    node->parents = {xn};
    node->backprop = [xn, m, n](detail::TensorNode& self) {
      xn->ensure_grad();
      for (size_t i = 0; i < m; ++i) {
        for (size_t j = 0; j < n; ++j) {
          xn->grad[i * n + j] += self.grad[j * m + i];
        }
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  // Exact erf form: y = x * Phi(x).
  return unary_op(
      x, "gelu",
      [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        double phi_cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        double phi_pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        return phi_cdf + v * phi_pdf;
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0) {
          return 1.0 / (1.0 + std::exp(-v));
        }
        double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor log_elem(const Tensor& x) {
  for (double v : x.values()) {
    if (v <= 0.0) {
      throw NumericError("log: non-positive input " + std::to_string(v));
    }
  }
  return unary_op(
      x, "log", [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (!(lo <= hi)) {
    throw ContractError("clamp: lo " + std::to_string(lo) +
                        " exceeds hi " + std::to_string(hi));
  }
  return unary_op(
      x, "clamp",
      [lo, hi](double v) { return v < lo ? lo : (v > hi ? hi : v); },
      [lo, hi](double v, double) {
        return (v >= lo && v <= hi) ? 1.0 : 0.0;
      });
}

Tensor softmax_rows(const Tensor& x) {
  req(x, "softmax_rows");
  RowsCols rc = as_matrix(x, "softmax_rows");
  const size_t m = rc.rows, n = rc.cols;
  if (n == 0) throw ContractError("softmax_rows: zero-width rows");
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < m; ++i) {
    const double* row = xv.data() + i * n;
    double* orow = out.data() + i * n;
    double mx = row[0];
    for (size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (size_t j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    if (sum <= 0.0) {
      throw NumericError("softmax_rows: row " + std::to_string(i) +
                         " sums to zero");
    }
    for (size_t j = 0; j < n; ++j) orow[j] /= sum;
  }
  auto node = make_node(x.shape(), std::move(out), "softmax_rows");
  if (wants_grad({&x})) {
    node->requires_grad = true;
    auto xn = x.node();
    node->parents = {xn};
    node->backprop = [xn, m, n](detail::TensorNode& self) {
      xn->ensure_grad();
      for (size_t i = 0; i < m; ++i) {
        const double* y = self.values.data() + i * n;
        const double* dy = self.grad.data() + i * n;
        double dot = 0.0;
        for (size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
        double* dx = xn->grad.data() + i * n;
        for (size_t j = 0; j < n; ++j) dx[j] += y[j] * (dy[j] - dot);
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor log_softmax_rows(const Tensor& x) {
  req(x, "log_softmax_rows");
  RowsCols rc = as_matrix(x, "log_softmax_rows");
  const size_t m = rc.rows, n = rc.cols;
  if (n == 0) throw ContractError("log_softmax_rows: zero-width rows");
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < m; ++i) {
    const double* row = xv.data() + i * n;
    double* orow = out.data() + i * n;
    double mx = row[0];
    for (size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (size_t j = 0; j < n; ++j) sum += std::exp(row[j] - mx);
    double lse = mx + std::log(sum);
    for (size_t j = 0; j < n; ++j) orow[j] = row[j] - lse;
  }
  auto node = make_node(x.shape(), std::move(out), "log_softmax_rows");
  if (wants_grad({&x})) {
    node->requires_grad = true;
    auto xn = x.node();
    node->parents = {xn};
    node->backprop = [xn, m, n](detail::TensorNode& self) {
      xn->ensure_grad();
      for (size_t i = 0; i < m; ++i) {
        const double* y = self.values.data() + i * n;
        const double* dy = self.grad.data() + i * n;
        double total = 0.0;
        for (size_t j = 0; j < n; ++j) total += dy[j];
        double* dx = xn->grad.data() + i * n;
        for (size_t j = 0; j < n; ++j) {
          dx[j] += dy[j] - std::exp(y[j]) * total;
        }
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor layer_norm_rows(const Tensor& x, double eps) {
  req(x, "layer_norm_rows");
  if (eps <= 0.0) throw ContractError("layer_norm_rows: eps must be positive");
  RowsCols rc = as_matrix(x, "layer_norm_rows");
  const size_t m = rc.rows, n = rc.cols;
  if (n == 0) throw ContractError("layer_norm_rows: zero-width rows");
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  std::vector<double> inv_std(m);
  for (size_t i = 0; i < m; ++i) {
    const double* row = xv.data() + i * n;
    double mean = 0.0;
    for (size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (size_t j = 0; j < n; ++j) {
      double d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    double* orow = out.data() + i * n;
    for (size_t j = 0; j < n; ++j) orow[j] = (row[j] - mean) * is;
  }
  auto node = make_node(x.shape(), std::move(out), "layer_norm_rows");
  if (wants_grad({&x})) {
    node->requires_grad = true;
    auto xn = x.node();
    node->parents = {xn};
    node->backprop = [xn, m, n, inv_std](detail::TensorNode& self) {
      xn->ensure_grad();
      for (size_t i = 0; i < m; ++i) {
        const double* y = self.values.data() + i * n;
        const double* dy = self.grad.data() + i * n;
        double mean_dy = 0.0, mean_dyy = 0.0;
        for (size_t j = 0; j < n; ++j) {
          mean_dy += dy[j];
          mean_dyy += dy[j] * y[j];
        }
        mean_dy /= static_cast<double>(n);
        mean_dyy /= static_cast<double>(n);
        double* dx = xn->grad.data() + i * n;
        for (size_t j = 0; j < n; ++j) {
          dx[j] += inv_std[i] * (dy[j] - mean_dy - y[j] * mean_dyy);
        }
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor masked_fill(const Tensor& x, const AttentionMask& mask,
                   double fill_value) {
  req(x, "masked_fill");
  RowsCols rc = as_matrix(x, "masked_fill");
  if (mask.rows() != rc.rows || mask.cols() != rc.cols) {
    throw ContractError(
        "masked_fill: mask " + std::to_string(mask.rows()) + "x" +
        std::to_string(mask.cols()) + " does not match tensor " +
        shape_str(x.shape()));
  }
  const size_t m = rc.rows, n = rc.cols;
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  std::vector<uint8_t> allowed(m * n);
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = 0; j < n; ++j) {
      bool a = mask.allowed(i, j);
      allowed[i * n + j] = a ? 1 : 0;
      out[i * n + j] = a ? xv[i * n + j] : fill_value;
    }
  }
  auto node = make_node(x.shape(), std::move(out), "masked_fill");
  if (wants_grad({&x})) {
    node->requires_grad = true;
    auto xn = x.node();
    node->parents = {xn};
    node->backprop = [xn, allowed](detail::TensorNode& self) {
      xn->ensure_grad();
      for (size_t i = 0; i < self.values.size(); ++i) {
        if (allowed[i]) xn->grad[i] += self.grad[i];
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids) {
  req(table, "embedding_rows");
  if (table.rank() != 2) {
    throw ContractError("embedding_rows: table must be rank-2, got " +
                        shape_str(table.shape()));
  }
  const size_t v = table.shape()[0], d = table.shape()[1];
  if (ids.empty()) throw ContractError("embedding_rows: empty id list");
  std::vector<double> out(ids.size() * d);
  const auto& tv = table.values();
  for (size_t i = 0; i < ids.size(); ++i) {
    int id = ids[i];
    if (id < 0 || static_cast<size_t>(id) >= v) {
      throw ContractError("embedding_rows: id " + std::to_string(id) +
                          " out of range for table with " + std::to_string(v) +
                          " rows");
    }
    std::copy(tv.begin() + id * d, tv.begin() + (id + 1) * d,
              out.begin() + i * d);
  }
  auto node = make_node({ids.size(), d}, std::move(out), "embedding_rows");
  if (wants_grad({&table})) {
    node->requires_grad = true;
    auto tn = table.node();
    node->parents = {tn};
    node->backprop = [tn, ids, d](detail::TensorNode& self) {
      tn->ensure_grad();
      for (size_t i = 0; i < ids.size(); ++i) {
        const double* src = self.grad.data() + i * d;
        double* dst = tn->grad.data() + static_cast<size_t>(ids[i]) * d;
        for (size_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no parts");
  size_t cols = 0, total_rows = 0;
  for (const Tensor& p : parts) {
    req(p, "concat_rows");
    RowsCols rc = as_matrix(p, "concat_rows");
    if (cols == 0) {
      cols = rc.cols;
    } else if (rc.cols != cols) {
      throw ContractError("concat_rows: column mismatch, expected " +
                          std::to_string(cols) + " got shape " +
                          shape_str(p.shape()));
    }
    total_rows += rc.rows;
  }
  std::vector<double> out;
  out.reserve(total_rows * cols);
  bool any_grad = false;
  for (const Tensor& p : parts) {
    out.insert(out.end(), p.values().begin(), p.values().end());
    any_grad = any_grad || p.requires_grad();
  }
  auto node = make_node({total_rows, cols}, std::move(out), "concat_rows");
  if (grad_enabled() && any_grad) {
    node->requires_grad = true;
    std::vector<std::shared_ptr<detail::TensorNode>> ps;
    ps.reserve(parts.size());
    for (const Tensor& p : parts) ps.push_back(p.node());
    node->parents = ps;
    node->backprop = [ps](detail::TensorNode& self) {
      size_t offset = 0;
      for (const auto& p : ps) {
        size_t len = p->values.size();
        if (p->requires_grad) {
          p->ensure_grad();
          for (size_t i = 0; i < len; ++i) {
            p->grad[i] += self.grad[offset + i];
          }
        }
        offset += len;
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no parts");
  size_t rows = 0, total_cols = 0;
  std::vector<size_t> widths;
  for (const Tensor& p : parts) {
    req(p, "concat_cols");
    RowsCols rc = as_matrix(p, "concat_cols");
    if (rows == 0) {
      rows = rc.rows;
    } else if (rc.rows != rows) {
      throw ContractError("concat_cols: row mismatch, expected " +
                          std::to_string(rows) + " got shape " +
                          shape_str(p.shape()));
    }
    widths.push_back(rc.cols);
    total_cols += rc.cols;
  }
  std::vector<double> out(rows * total_cols);
  bool any_grad = false;
  size_t col_offset = 0;
  for (size_t pi = 0; pi < parts.size(); ++pi) {
    const auto& pv = parts[pi].values();
    size_t w = widths[pi];
    for (size_t r = 0; r < rows; ++r) {
      std::copy(pv.begin() + r * w, pv.begin() + (r + 1) * w,
                out.begin() + r * total_cols + col_offset);
    }
    col_offset += w;
    any_grad = any_grad || parts[pi].requires_grad();
  }
  auto node = make_node({rows, total_cols}, std::move(out), "concat_cols");
  if (grad_enabled() && any_grad) {
    node->requires_grad = true;
    std::vector<std::shared_ptr<detail::TensorNode>> ps;
    for (const Tensor& p : parts) ps.push_back(p.node());
    node->parents = ps;
    node->backprop = [ps, widths, rows, total_cols](detail::TensorNode& self) {
      size_t col_offset = 0;
      for (size_t pi = 0; pi < ps.size(); ++pi) {
        size_t w = widths[pi];
        if (ps[pi]->requires_grad) {
          ps[pi]->ensure_grad();
          for (size_t r = 0; r < rows; ++r) {
            for (size_t c = 0; c < w; ++c) {
              ps[pi]->grad[r * w + c] +=
                  self.grad[r * total_cols + col_offset + c];
            }
          }
        }
        col_offset += w;
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor slice_rows(const Tensor& x, size_t begin, size_t end) {
  req(x, "slice_rows");
  RowsCols rc = as_matrix(x, "slice_rows");
  if (begin >= end || end > rc.rows) {
    throw ContractError("slice_rows: range [" + std::to_string(begin) + "," +
                        std::to_string(end) + ") invalid for " +
                        std::to_string(rc.rows) + " rows");
  }
  const size_t n = rc.cols;
  std::vector<double> out(x.values().begin() + begin * n,
                          x.values().begin() + end * n);
  auto node = make_node({end - begin, n}, std::move(out), "slice_rows");
  if (wants_grad({&x})) {
    node->requires_grad = true;
    auto xn = x.node();
    node->parents = {xn};
    node->backprop = [xn, begin, n](detail::TensorNode& self) {
      xn->ensure_grad();
      for (size_t i = 0; i < self.values.size(); ++i) {
        xn->grad[begin * n + i] += self.grad[i];
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor slice_cols(const Tensor& x, size_t begin, size_t end) {
  req(x, "slice_cols");
  RowsCols rc = as_matrix(x, "slice_cols");
  if (begin >= end || end > rc.cols) {
    throw ContractError("slice_cols: range [" + std::to_string(begin) + "," +
                        std::to_string(end) + ") invalid for " +
                        std::to_string(rc.cols) + " cols");
  }
  const size_t m = rc.rows, n = rc.cols, w = end - begin;
  std::vector<double> out(m * w);
  const auto& xv = x.values();
  for (size_t r = 0; r < m; ++r) {
    std::copy(xv.begin() + r * n + begin, xv.begin() + r * n + end,
              out.begin() + r * w);
  }
  auto node = make_node({m, w}, std::move(out), "slice_cols");
  if (wants_grad({&x})) {
    node->requires_grad = true;
    auto xn = x.node();
    node->parents = {xn};
    node->backprop = [xn, begin, m, n, w](detail::TensorNode& self) {
      xn->ensure_grad();
      for (size_t r = 0; r < m; ++r) {
        for (size_t c = 0; c < w; ++c) {
          xn->grad[r * n + begin + c] += self.grad[r * w + c];
        }
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor take(const Tensor& x,
            const std::vector<std::pair<size_t, size_t>>& rc) {
  req(x, "take");
  RowsCols dims = as_matrix(x, "take");
  if (rc.empty()) throw ContractError("take: empty index list");
  std::vector<double> out(rc.size());
  const auto& xv = x.values();
  for (size_t i = 0; i < rc.size(); ++i) {
    auto [r, c] = rc[i];
    if (r >= dims.rows || c >= dims.cols) {
      throw ContractError("take: index (" + std::to_string(r) + "," +
                          std::to_string(c) + ") out of range for shape " +
                          shape_str(x.shape()));
    }
    out[i] = xv[r * dims.cols + c];
  }
  auto node = make_node({rc.size(), 1}, std::move(out), "take");
  if (wants_grad({&x})) {
    node->requires_grad = true;
    auto xn = x.node();
    size_t cols = dims.cols;
    node->parents = {xn};
    node->backprop = [xn, rc, cols](detail::TensorNode& self) {
      xn->ensure_grad();
      for (size_t i = 0; i < rc.size(); ++i) {
        xn->grad[rc[i].first * cols + rc[i].second] += self.grad[i];
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor gather_rows(const Tensor& x, const std::vector<size_t>& rows) {
  req(x, "gather_rows");
  RowsCols dims = as_matrix(x, "gather_rows");
  if (rows.empty()) throw ContractError("gather_rows: empty row list");
  const size_t n = dims.cols;
  std::vector<double> out(rows.size() * n);
  const auto& xv = x.values();
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= dims.rows) {
      throw ContractError("gather_rows: row " + std::to_string(rows[i]) +
                          " out of range for shape " + shape_str(x.shape()));
    }
    std::copy(xv.begin() + rows[i] * n, xv.begin() + (rows[i] + 1) * n,
              out.begin() + i * n);
  }
  auto node = make_node({rows.size(), n}, std::move(out), "gather_rows");
  if (wants_grad({&x})) {
    node->requires_grad = true;
    auto xn = x.node();
    node->parents = {xn};
    node->backprop = [xn, rows, n](detail::TensorNode& self) {
      xn->ensure_grad();
      for (size_t i = 0; i < rows.size(); ++i) {
        const double* src = self.grad.data() + i * n;
        double* dst = xn->grad.data() + rows[i] * n;
        for (size_t j = 0; j < n; ++j) dst[j] += src[j];
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor reduce_sum(const Tensor& x) {
  req(x, "reduce_sum");
  double total = 0.0;
  for (double v : x.values()) total += v;
  auto node = make_node({}, {total}, "reduce_sum");
  if (wants_grad({&x})) {
    node->requires_grad = true;
    auto xn = x.node();
    node->parents = {xn};
    node->backprop = [xn](detail::TensorNode& self) {
      xn->ensure_grad();
      for (double& g : xn->grad) g += self.grad[0];
    };
  }
  return Tensor::wrap(node);
}

Tensor reduce_mean(const Tensor& x) {
  req(x, "reduce_mean");
  const size_t n = x.size();
  if (n == 0) throw ContractError("reduce_mean: empty tensor");
  return scale(reduce_sum(x), 1.0 / static_cast<double>(n));
}

Tensor mean_rows(const Tensor& x) {
  req(x, "mean_rows");
  RowsCols rc = as_matrix(x, "mean_rows");
  const size_t m = rc.rows, n = rc.cols;
  if (m == 0) throw ContractError("mean_rows: no rows");
  std::vector<double> out(n, 0.0);
  const auto& xv = x.values();
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = 0; j < n; ++j) out[j] += xv[i * n + j];
  }
  for (size_t j = 0; j < n; ++j) out[j] /= static_cast<double>(m);
  auto node = make_node({1, n}, std::move(out), "mean_rows");
  if (wants_grad({&x})) {
    node->requires_grad = true;
    auto xn = x.node();
    node->parents = {xn};
    node->backprop = [xn, m, n](detail::TensorNode& self) {
      xn->ensure_grad();
      for (size_t i = 0; i < m; ++i) {
        for (size_t j = 0; j < n; ++j) {
          xn->grad[i * n + j] += self.grad[j] / static_cast<double>(m);
        }
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor log_mean_exp(const Tensor& x) {
  req(x, "log_mean_exp");
  const auto& xv = x.values();
  const size_t n = xv.size();
  if (n == 0) throw ContractError("log_mean_exp: empty tensor");
  double mx = xv[0];
  for (double v : xv) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : xv) sum += std::exp(v - mx);
  double result = mx + std::log(sum / static_cast<double>(n));
  auto node = make_node({}, {result}, "log_mean_exp");
  if (wants_grad({&x})) {
    node->requires_grad = true;
    auto xn = x.node();
    node->parents = {xn};
    node->backprop = [xn, mx](detail::TensorNode& self) {
      xn->ensure_grad();
      // d/dx_i = exp(x_i) / sum_j exp(x_j); the 1/n cancels.
      double sum = 0.0;
      for (double v : xn->values) sum += std::exp(v - mx);
      for (size_t i = 0; i < xn->values.size(); ++i) {
        xn->grad[i] += self.grad[0] * std::exp(xn->values[i] - mx) / sum;
      }
    };
  }
  return Tensor::wrap(node);
}

}  // namespace lahr
