#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "hyperstab/errors.hpp"
#include "hyperstab/tensor.hpp"

namespace hyperstab {

/// Mean categorical cross-entropy of logits[batch×classes] against labels,
/// log-sum-exp stabilized.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.dim() != 2 || logits.size(0) != labels.size()) {
    throw DimensionError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = logits.size(0), classes = logits.size(1);
  std::vector<double> probs(logits.numel());
  double total = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    const auto label = static_cast<std::size_t>(labels[r]);
    if (labels[r] < 0 || label >= classes) throw DimensionError("cross_entropy: label out of range");
    const double* row = logits.data().data() + r * classes;
    const double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] = std::exp(row[c] - lse);
    total += lse - row[label];
  }
  return Tensor::make_op("cross_entropy", {}, {total / static_cast<double>(batch)}, {logits},
                         [probs = std::move(probs), labels, batch, classes](detail::Node& self) {
                           auto& p = *self.parents[0];
                           if (!p.requires_grad) return;
                           p.ensure_grad();
                           const double g = self.grad[0] / static_cast<double>(batch);
                           for (std::size_t r = 0; r < batch; ++r)
                             for (std::size_t c = 0; c < classes; ++c) {
                               const double onehot = static_cast<std::size_t>(labels[r]) == c ? 1.0 : 0.0;
                               p.grad[r * classes + c] += g * (probs[r * classes + c] - onehot);
                             }
                         });
}

inline Tensor loss_task1(const Tensor& logits, const std::vector<int>& labels) { return cross_entropy(logits, labels); }

/// Fraction of rows whose argmax equals the label; ties go to the lowest index.
inline double accuracy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.dim() != 2 || logits.size(0) != labels.size()) {
    throw DimensionError("accuracy: logits " + shape_str(logits.shape()) + " vs " + std::to_string(labels.size()) +
                         " labels");
  }
  const std::size_t batch = logits.size(0), classes = logits.size(1);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < batch; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c)
      if (logits[r * classes + c] > logits[r * classes + best]) best = c;
    if (static_cast<int>(best) == labels[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(batch);
}

/// Mean over all elements of (pred − target)².
inline Tensor mse(const Tensor& pred, const Tensor& target) {
  return scale(sum_squares(sub(pred, target)), 1.0 / static_cast<double>(pred.numel()));
}

/// Mean over rows of Σᵢ |x[i+1] − x[i]|. The subgradient at a zero
/// difference is 0.
inline Tensor total_variation(const Tensor& x) {
  if (x.dim() != 2) throw DimensionError("total_variation: expected 2-D input, got " + shape_str(x.shape()));
  const std::size_t rows = x.size(0), d = x.size(1);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i + 1 < d; ++i) total += std::abs(x[r * d + i + 1] - x[r * d + i]);
  return Tensor::make_op("total_variation", {}, {total / static_cast<double>(rows)}, {x},
                         [rows, d](detail::Node& self) {
                           auto& p = *self.parents[0];
                           if (!p.requires_grad) return;
                           p.ensure_grad();
                           const double g = self.grad[0] / static_cast<double>(rows);
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t i = 0; i + 1 < d; ++i) {
                               const double diff = p.data[r * d + i + 1] - p.data[r * d + i];
                               const double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                               p.grad[r * d + i + 1] += g * s;
                               p.grad[r * d + i] -= g * s;
                             }
                         });
}

/// (1 − γ)·MSE(pred, clean) + γ·TV(pred)
inline Tensor loss_task2(const Tensor& pred, const Tensor& clean, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("loss_task2: gamma must lie in [0,1]");
  return add(scale(mse(pred, clean), 1.0 - gamma), scale(total_variation(pred), gamma));
}

}  // namespace hyperstab
