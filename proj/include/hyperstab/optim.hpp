#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hyperstab/errors.hpp"
#include "hyperstab/tensor.hpp"

namespace hyperstab {

struct SgdNesterovOptions {
  double lr = 3e-4;
  double momentum = 0.9;
};

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Per-parameter slots: SGD keeps its momentum buffer in `first`; AdamW
/// keeps first and second moment estimates.
struct OptimizerState {
  std::vector<std::vector<double>> first;
  std::vector<std::vector<double>> second;
  std::uint64_t step = 0;

  void ensure(const std::vector<Tensor>& params, bool with_second) {
    if (first.empty()) {
      for (const auto& p : params) first.emplace_back(p.numel(), 0.0);
      if (with_second)
        for (const auto& p : params) second.emplace_back(p.numel(), 0.0);
    }
    if (first.size() != params.size() || (with_second && second.size() != params.size())) {
      throw DimensionError("optimizer state has " + std::to_string(first.size()) + " slots for " +
                           std::to_string(params.size()) + " parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (first[i].size() != params[i].numel() || (with_second && second[i].size() != params[i].numel())) {
        throw DimensionError("optimizer slot " + std::to_string(i) + " does not match parameter shape " +
                             shape_str(params[i].shape()));
      }
    }
  }

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

namespace detail {

inline std::span<const double> require_grad(const Tensor& p, std::size_t index) {
  auto g = p.grad();
  if (!g) throw ConfigError("parameter " + std::to_string(index) + " has no gradient; run backward() first");
  return *g;
}

}  // namespace detail

/// v ← βv + g;  p ← p − η(g + βv)
inline void sgd_nesterov_step(std::vector<Tensor>& params, OptimizerState& state, const SgdNesterovOptions& opt) {
  for (std::size_t i = 0; i < params.size(); ++i) detail::require_grad(params[i], i);
  state.ensure(params, false);
  ++state.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto g = *params[i].grad();
    auto p = params[i].mutable_data();
    auto& v = state.first[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = opt.momentum * v[j] + g[j];
      p[j] -= opt.lr * (g[j] + opt.momentum * v[j]);
    }
  }
}

/// Adam with bias correction and decoupled weight decay:
/// p ← p − η(m̂/(√v̂ + ε) + λp)
inline void adamw_step(std::vector<Tensor>& params, OptimizerState& state, const AdamWOptions& opt) {
  for (std::size_t i = 0; i < params.size(); ++i) detail::require_grad(params[i], i);
  state.ensure(params, true);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto g = *params[i].grad();
    auto p = params[i].mutable_data();
    auto& m = state.first[i];
    auto& v = state.second[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * g[j];
      v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= opt.lr * (mhat / (std::sqrt(vhat) + opt.eps) + opt.weight_decay * p[j]);
    }
  }
}

/// Owns hyperparameters and state for one parameter list.
class Optimizer {
 public:
  enum class Kind { SgdNesterov, AdamW };

  static Optimizer sgd_nesterov(std::vector<Tensor> params, SgdNesterovOptions opt) {
    Optimizer o(Kind::SgdNesterov, std::move(params));
    o.sgd_ = opt;
    return o;
  }

  static Optimizer adamw(std::vector<Tensor> params, AdamWOptions opt) {
    Optimizer o(Kind::AdamW, std::move(params));
    o.adam_ = opt;
    return o;
  }

  Kind kind() const { return kind_; }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() {
    if (kind_ == Kind::SgdNesterov) sgd_nesterov_step(params_, state_, sgd_);
    else adamw_step(params_, state_, adam_);
  }

  const OptimizerState& state() const { return state_; }
  OptimizerState& state() { return state_; }
  const std::vector<Tensor>& params() const { return params_; }

  /// Named f64 arrays for checkpointing: "opt.step", "opt.m.<i>", "opt.v.<i>".
  std::vector<std::pair<std::string, std::vector<double>>> export_state() const {
    std::vector<std::pair<std::string, std::vector<double>>> out;
    out.emplace_back("opt.step", std::vector<double>{static_cast<double>(state_.step)});
    for (std::size_t i = 0; i < state_.first.size(); ++i) out.emplace_back("opt.m." + std::to_string(i), state_.first[i]);
    for (std::size_t i = 0; i < state_.second.size(); ++i)
      out.emplace_back("opt.v." + std::to_string(i), state_.second[i]);
    return out;
  }

  void import_state(const std::vector<std::pair<std::string, std::vector<double>>>& arrays) {
    OptimizerState s;
    for (const auto& [name, values] : arrays) {
      if (name == "opt.step") {
        if (values.size() != 1) throw DimensionError("opt.step must hold one value");
        s.step = static_cast<std::uint64_t>(values[0]);
      } else if (name.rfind("opt.m.", 0) == 0) {
        s.first.push_back(values);
      } else if (name.rfind("opt.v.", 0) == 0) {
        s.second.push_back(values);
      }
    }
    if (!s.first.empty()) s.ensure(params_, kind_ == Kind::AdamW);
    state_ = std::move(s);
  }

 private:
  Optimizer(Kind kind, std::vector<Tensor> params) : kind_(kind), params_(std::move(params)) {}

  Kind kind_;
  std::vector<Tensor> params_;
  OptimizerState state_;
  SgdNesterovOptions sgd_;
  AdamWOptions adam_;
};

}  // namespace hyperstab
