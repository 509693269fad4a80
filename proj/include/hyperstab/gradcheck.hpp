#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "hyperstab/tensor.hpp"

namespace hyperstab {

/// max_i |a_i − c_i| / (|a_i| + |c_i| + 1e-12) between the reverse-mode
/// gradient a and the central difference c of a scalar function.
inline double relative_gradient_error(std::span<const double> analytic, std::span<const double> numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double err = std::abs(analytic[i] - numeric[i]) / (std::abs(analytic[i]) + std::abs(numeric[i]) + 1e-12);
    worst = std::max(worst, err);
  }
  return worst;
}

/// Check df/dx for a scalar-valued `f` at `x`.
inline double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h = 1e-6) {
  const Tensor leaf = x.clone(true);
  backward(f(leaf));
  std::vector<double> analytic(x.numel(), 0.0);
  if (auto g = leaf.grad()) analytic.assign(g->begin(), g->end());

  std::vector<double> numeric(x.numel());
  std::vector<double> probe = x.values();
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(Tensor::from(x.shape(), probe)).item();
    probe[i] = orig - h;
    const double down = f(Tensor::from(x.shape(), probe)).item();
    probe[i] = orig;
    numeric[i] = (up - down) / (2.0 * h);
  }
  return relative_gradient_error(analytic, numeric);
}

/// Check the gradient of `loss()` w.r.t. every leaf in `params`, perturbing
/// them in place. Existing grads on `params` are cleared.
inline double finite_diff_check_params(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                                       double h = 1e-6) {
  for (auto& p : params) p.zero_grad();
  backward(loss());
  double worst = 0.0;
  for (auto& p : params) {
    std::vector<double> analytic(p.numel(), 0.0);
    if (auto g = p.grad()) analytic.assign(g->begin(), g->end());
    std::vector<double> numeric(p.numel());
    auto data = p.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + h;
      const double up = loss().item();
      data[i] = orig - h;
      const double down = loss().item();
      data[i] = orig;
      numeric[i] = (up - down) / (2.0 * h);
    }
    worst = std::max(worst, relative_gradient_error(analytic, numeric));
    p.zero_grad();
  }
  return worst;
}

}  // namespace hyperstab
