#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "hyperstab/errors.hpp"
#include "hyperstab/tensor.hpp"

namespace hyperstab {

struct Activation {
  enum class Kind { Linear, ReLU, LeakyReLU, Tanh, GELU, SiLU };

  Kind kind = Kind::LeakyReLU;
  double slope = 0.01;  // LeakyReLU negative slope

  static Activation linear() { return {Kind::Linear, 0.0}; }
  static Activation relu() { return {Kind::ReLU, 0.0}; }
  static Activation leaky_relu(double slope = 0.01) { return {Kind::LeakyReLU, slope}; }
  static Activation tanh() { return {Kind::Tanh, 0.0}; }
  static Activation gelu() { return {Kind::GELU, 0.0}; }
  static Activation silu() { return {Kind::SiLU, 0.0}; }

  // A(αx) = αA(x) for α > 0.
  bool positively_homogeneous() const {
    return kind == Kind::Linear || kind == Kind::ReLU || kind == Kind::LeakyReLU;
  }

  /// Kaiming gain². GELU and SiLU use the ReLU entry.
  double gain_squared() const {
    switch (kind) {
      case Kind::Linear:
      case Kind::Tanh: return 1.0;
      case Kind::ReLU:
      case Kind::GELU:
      case Kind::SiLU: return 2.0;
      case Kind::LeakyReLU: return 2.0 / (1.0 + slope * slope);
    }
    return 1.0;
  }

  std::string name() const {
    switch (kind) {
      case Kind::Linear: return "linear";
      case Kind::ReLU: return "relu";
      case Kind::LeakyReLU: return "leaky_relu";
      case Kind::Tanh: return "tanh";
      case Kind::GELU: return "gelu";
      case Kind::SiLU: return "silu";
    }
    return "?";
  }

  static Activation parse(const std::string& s, double slope = 0.01) {
    if (s == "linear") return linear();
    if (s == "relu") return relu();
    if (s == "leaky_relu") return leaky_relu(slope);
    if (s == "tanh") return tanh();
    if (s == "gelu") return gelu();
    if (s == "silu") return silu();
    throw ConfigError("unknown activation '" + s + "'");
  }

  friend bool operator==(const Activation&, const Activation&) = default;
};

namespace detail {

inline double activation_value(const Activation& act, double x) {
  using K = Activation::Kind;
  switch (act.kind) {
    case K::Linear: return x;
    case K::ReLU: return x > 0.0 ? x : 0.0;
    case K::LeakyReLU: return x >= 0.0 ? x : act.slope * x;
    case K::Tanh: return std::tanh(x);
    case K::GELU: return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
    case K::SiLU: return x / (1.0 + std::exp(-x));
  }
  return x;
}

inline double activation_derivative(const Activation& act, double x) {
  using K = Activation::Kind;
  switch (act.kind) {
    case K::Linear: return 1.0;
    case K::ReLU: return x > 0.0 ? 1.0 : 0.0;
    case K::LeakyReLU: return x >= 0.0 ? 1.0 : act.slope;
    case K::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case K::GELU: {
      const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
      const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
      return cdf + x * pdf;
    }
    case K::SiLU: {
      const double s = 1.0 / (1.0 + std::exp(-x));
      return s * (1.0 + x * (1.0 - s));
    }
  }
  return 1.0;
}

}  // namespace detail

inline Tensor activation_apply(const Activation& act, const Tensor& x) {
  if (act.kind == Activation::Kind::Linear) return x;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::activation_value(act, x[i]);
  return Tensor::make_op("activation", x.shape(), std::move(out), {x}, [act](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * detail::activation_derivative(act, p.data[i]);
  });
}

}  // namespace hyperstab
