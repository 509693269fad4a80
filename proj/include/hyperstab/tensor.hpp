#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hyperstab/errors.hpp"

namespace hyperstab {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  if (shape.size() == 1) os << ',';
  os << ')';
  return os.str();
}

namespace detail {

// One recorded value in the define-by-run graph. `backward` reads `grad` and
// accumulates into the grads of `parents`; it may read parent data, which
// stays immutable for the lifetime of the graph.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool retain_grad = false;
  bool leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

/// Dense row-major f64 tensor participating in reverse-mode differentiation.
///
/// A Tensor is a cheap handle; copies alias the same storage. Leaves are
/// created with `Tensor::from`/`zeros`/`full`; every op returns a fresh
/// non-leaf that remembers its inputs when any of them requires a gradient.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
    for (auto d : shape) {
      if (d == 0) throw DimensionError("tensor dimension must be positive, got shape " + shape_str(shape));
    }
    if (data.size() != numel_of(shape)) {
      throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                           shape_str(shape));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = numel_of(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    const auto n = numel_of(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) { return from({}, {value}, requires_grad); }

  // Build an op result. `backward` is dropped when no parent needs a gradient.
  static Tensor make_op(const char* op, Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                        std::function<void(detail::Node&)> backward) {
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->leaf = false;
    node->op = op;
    for (const auto& t : inputs) node->requires_grad = node->requires_grad || t.requires_grad();
    if (node->requires_grad) {
      node->parents.reserve(inputs.size());
      for (auto& t : inputs) node->parents.push_back(t.node_);
      node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim() const { return node_->shape.size(); }
  std::size_t size(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }
  std::span<const double> data() const { return node_->data; }
  const std::vector<double>& values() const { return node_->data; }
  double operator[](std::size_t i) const { return node_->data[i]; }
  double item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool is_leaf() const { return node_->leaf; }
  const char* op_name() const { return node_->op; }

  // Leaf parameters are updated in place by optimizers between steps.
  std::span<double> mutable_data() {
    if (!node_->leaf) throw ConfigError("only leaf tensors may be modified in place");
    return node_->data;
  }

  void set_requires_grad(bool value) {
    if (!node_->leaf) throw ConfigError("requires_grad can only be changed on leaf tensors");
    node_->requires_grad = value;
  }

  // Keep the adjoint of a non-leaf after backward().
  void retain_grad() { node_->retain_grad = true; }

  bool has_grad() const { return node_->grad.size() == node_->data.size() && !node_->data.empty(); }

  std::optional<std::span<const double>> grad() const {
    if (!has_grad()) return std::nullopt;
    return std::span<const double>(node_->grad);
  }

  void zero_grad() {
    if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  // Same values, no history, no gradient.
  Tensor detach() const { return from(shape(), node_->data, false); }

  // Deep copy as a fresh leaf.
  Tensor clone(bool requires_grad) const { return from(shape(), node_->data, requires_grad); }

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  detail::Node& node() const { return *node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

inline void require_matrix(const Tensor& a, const char* op) {
  if (a.dim() != 2) throw DimensionError(std::string(op) + ": expected a 2-D tensor, got " + shape_str(a.shape()));
}

// Accumulate `scale * src` into the parent's grad, if it wants one.
inline void accumulate(Node& parent, std::span<const double> src, double scale = 1.0) {
  if (!parent.requires_grad) return;
  parent.ensure_grad();
  for (std::size_t i = 0; i < src.size(); ++i) parent.grad[i] += scale * src[i];
}

// C[m×n] += A[m×k] · B[k×n]
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m×n] += A[m×k] · B[n×k]ᵀ
inline void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// C[k×n] += A[m×k]ᵀ · B[m×n]
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

/// Matrix product of a[m×k] and b[k×n].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.size(0), k = a.size(1), n = b.size(1);
  if (b.size(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  detail::gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return Tensor::make_op("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      // dA = dC · Bᵀ
      detail::gemm_nt(self.grad.data(), pb.data.data(), pa.grad.data(), m, n, k);
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      // dB = Aᵀ · dC
      detail::gemm_tn(pa.data.data(), self.grad.data(), pb.grad.data(), m, k, n);
    }
  });
}

/// a[m×k] · b[n×k]ᵀ, the layout of a fully connected layer with W stored (out, in).
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul_nt");
  detail::require_matrix(b, "matmul_nt");
  const std::size_t m = a.size(0), k = a.size(1), n = b.size(0);
  if (b.size(1) != k) {
    throw DimensionError("matmul_nt: inner dimensions disagree for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + "ᵀ");
  }
  std::vector<double> out(m * n, 0.0);
  detail::gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  return Tensor::make_op("matmul_nt", {m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      // dA = dC · B
      detail::gemm_nn(self.grad.data(), pb.data.data(), pa.grad.data(), m, n, k);
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      // dB = dCᵀ · A
      detail::gemm_tn(self.grad.data(), pa.data.data(), pb.grad.data(), m, n, k);
    }
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tensor::make_op("add", a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    detail::accumulate(*self.parents[0], self.grad);
    detail::accumulate(*self.parents[1], self.grad);
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return Tensor::make_op("sub", a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    detail::accumulate(*self.parents[0], self.grad);
    detail::accumulate(*self.parents[1], self.grad, -1.0);
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return Tensor::make_op("mul", a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.data[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * a[i];
  return Tensor::make_op("scale", a.shape(), std::move(out), {a},
                         [s](detail::Node& self) { detail::accumulate(*self.parents[0], self.grad, s); });
}

/// a[batch×d] + bias[d] broadcast over rows; a 1-D `a` of length d is also accepted.
inline Tensor add_bias(const Tensor& a, const Tensor& bias) {
  if (bias.dim() != 1) throw DimensionError("add_bias: bias must be 1-D, got " + shape_str(bias.shape()));
  const std::size_t d = bias.size(0);
  const bool ok = (a.dim() == 2 && a.size(1) == d) || (a.dim() == 1 && a.size(0) == d);
  if (!ok) {
    throw DimensionError("add_bias: cannot broadcast bias " + shape_str(bias.shape()) + " over " +
                         shape_str(a.shape()));
  }
  const std::size_t rows = a.numel() / d;
  std::vector<double> out(a.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = a[r * d + j] + bias[j];
  return Tensor::make_op("add_bias", a.shape(), std::move(out), {a, bias}, [rows, d](detail::Node& self) {
    detail::accumulate(*self.parents[0], self.grad);
    auto& pb = *self.parents[1];
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) pb.grad[j] += self.grad[r * d + j];
    }
  });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (numel_of(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  return Tensor::make_op("reshape", std::move(shape), a.values(), {a},
                         [](detail::Node& self) { detail::accumulate(*self.parents[0], self.grad); });
}

/// Rows [begin, end) of a 2-D tensor.
inline Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  detail::require_matrix(a, "slice_rows");
  if (begin >= end || end > a.size(0)) {
    throw DimensionError("slice_rows: invalid range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") for " + shape_str(a.shape()));
  }
  const std::size_t cols = a.size(1);
  std::vector<double> out(a.values().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                          a.values().begin() + static_cast<std::ptrdiff_t>(end * cols));
  return Tensor::make_op("slice_rows", {end - begin, cols}, std::move(out), {a}, [begin, cols](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[begin * cols + i] += self.grad[i];
  });
}

/// Stack 2-D tensors with equal column counts along the row axis.
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  for (const auto& p : parts) detail::require_matrix(p, "concat_rows");
  const std::size_t cols = parts[0].size(1);
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.size(1) != cols) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    rows += p.size(0);
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return Tensor::make_op("concat_rows", {rows, cols}, std::move(out), parts, [](detail::Node& self) {
    std::size_t offset = 0;
    for (auto& parent : self.parents) {
      const auto n = parent->data.size();
      detail::accumulate(*parent, std::span<const double>(self.grad).subspan(offset, n));
      offset += n;
    }
  });
}

enum class Reduce { Sum, Mean, SumSquares, L2Norm, Variance, Stdev };

/// Reduction over `axes` (all axes when empty). Variance and stdev use the
/// population convention (divide by N). Reduced axes are dropped from the
/// result shape.
inline Tensor reduce(Reduce op, const Tensor& a, std::vector<std::size_t> axes = {}) {
  const auto& shape = a.shape();
  std::vector<bool> reduced(shape.size(), axes.empty());
  for (auto ax : axes) {
    if (ax >= shape.size()) {
      throw DimensionError("reduce: axis " + std::to_string(ax) + " out of range for " + shape_str(shape));
    }
    if (reduced[ax]) throw DimensionError("reduce: axis " + std::to_string(ax) + " listed twice");
    reduced[ax] = true;
  }
  Shape out_shape;
  std::size_t group = 1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (reduced[i]) group *= shape[i];
    else out_shape.push_back(shape[i]);
  }
  const std::size_t out_n = numel_of(out_shape);

  // Flat input index -> flat output index.
  std::vector<std::size_t> target(a.numel());
  {
    std::vector<std::size_t> idx(shape.size(), 0);
    for (std::size_t flat = 0; flat < a.numel(); ++flat) {
      std::size_t o = 0;
      for (std::size_t d = 0; d < shape.size(); ++d)
        if (!reduced[d]) o = o * shape[d] + idx[d];
      target[flat] = o;
      for (std::size_t d = shape.size(); d-- > 0;) {
        if (++idx[d] < shape[d]) break;
        idx[d] = 0;
      }
    }
  }

  const double n = static_cast<double>(group);
  std::vector<double> sum(out_n, 0.0), sumsq(out_n, 0.0);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    sum[target[i]] += a[i];
    sumsq[target[i]] += a[i] * a[i];
  }
  std::vector<double> mean(out_n);
  for (std::size_t o = 0; o < out_n; ++o) mean[o] = sum[o] / n;

  std::vector<double> out(out_n);
  switch (op) {
    case Reduce::Sum: out = sum; break;
    case Reduce::Mean: out = mean; break;
    case Reduce::SumSquares: out = sumsq; break;
    case Reduce::L2Norm:
      for (std::size_t o = 0; o < out_n; ++o) out[o] = std::sqrt(sumsq[o]);
      break;
    case Reduce::Variance:
    case Reduce::Stdev: {
      // Two-pass for accuracy.
      std::vector<double> acc(out_n, 0.0);
      for (std::size_t i = 0; i < a.numel(); ++i) {
        const double dev = a[i] - mean[target[i]];
        acc[target[i]] += dev * dev;
      }
      for (std::size_t o = 0; o < out_n; ++o) out[o] = op == Reduce::Variance ? acc[o] / n : std::sqrt(acc[o] / n);
      break;
    }
  }

  const std::vector<double> result = out;
  return Tensor::make_op(
      "reduce", std::move(out_shape), std::move(out), {a},
      [op, n, target = std::move(target), mean = std::move(mean), result](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < p.data.size(); ++i) {
          const std::size_t o = target[i];
          const double g = self.grad[o];
          double local = 0.0;
          switch (op) {
            case Reduce::Sum: local = 1.0; break;
            case Reduce::Mean: local = 1.0 / n; break;
            case Reduce::SumSquares: local = 2.0 * p.data[i]; break;
            case Reduce::L2Norm: local = result[o] > 0.0 ? p.data[i] / result[o] : 0.0; break;
            case Reduce::Variance: local = 2.0 * (p.data[i] - mean[o]) / n; break;
            case Reduce::Stdev: local = result[o] > 0.0 ? (p.data[i] - mean[o]) / (n * result[o]) : 0.0; break;
          }
          p.grad[i] += g * local;
        }
      });
}

inline Tensor sum(const Tensor& a) { return reduce(Reduce::Sum, a); }
inline Tensor mean(const Tensor& a) { return reduce(Reduce::Mean, a); }
inline Tensor sum_squares(const Tensor& a) { return reduce(Reduce::SumSquares, a); }
inline Tensor l2_norm(const Tensor& a) { return reduce(Reduce::L2Norm, a); }
inline Tensor variance(const Tensor& a) { return reduce(Reduce::Variance, a); }
inline Tensor stdev(const Tensor& a) { return reduce(Reduce::Stdev, a); }

/// Reverse sweep from a scalar loss. Leaf grads accumulate across calls;
/// intermediate grads are recomputed per call and released unless retained.
inline void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw DimensionError("backward: loss must be a scalar, got shape " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  detail::Node* root = &loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS -> topological order (inputs before outputs).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* node : order) {
    if (!node->leaf) node->grad.assign(node->data.size(), 0.0);
  }
  root->ensure_grad();
  root->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (!node->leaf && node->backward) node->backward(*node);
  }
  for (auto* node : order) {
    if (!node->leaf && !node->retain_grad) {
      node->grad.clear();
      node->grad.shrink_to_fit();
    }
  }
}

}  // namespace hyperstab
