#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "hyperstab/errors.hpp"
#include "hyperstab/layers.hpp"
#include "hyperstab/rng.hpp"
#include "hyperstab/tensor.hpp"

namespace hyperstab {

/// How hypernetwork output becomes primary parameters.
///  Default:    θ = h(γ)
///  NPA:        θ = θ⁰ + h(E(γ))
///  InputOnly:  θ = h(E(γ))
///  OutputOnly: θ = θ⁰ + h(γ)
/// where E is the per-dimension (cos, sin) encoding.
enum class Parametrization { Default, NPA, InputOnly, OutputOnly };

inline std::string to_string(Parametrization p) {
  switch (p) {
    case Parametrization::Default: return "default";
    case Parametrization::NPA: return "npa";
    case Parametrization::InputOnly: return "input_only";
    case Parametrization::OutputOnly: return "output_only";
  }
  return "?";
}

inline Parametrization parse_parametrization(const std::string& s) {
  if (s == "default") return Parametrization::Default;
  if (s == "npa") return Parametrization::NPA;
  if (s == "input_only") return Parametrization::InputOnly;
  if (s == "output_only") return Parametrization::OutputOnly;
  throw ConfigError("unknown parametrization '" + s + "'");
}

inline bool uses_encoding(Parametrization p) { return p == Parametrization::NPA || p == Parametrization::InputOnly; }
inline bool uses_theta0(Parametrization p) { return p == Parametrization::NPA || p == Parametrization::OutputOnly; }

enum class GammaRange { Unit, Symmetric };  // [0,1] and [-1,1]

struct GammaSample {
  std::vector<double> values;
  GammaRange range = GammaRange::Unit;

  GammaSample() = default;
  GammaSample(std::vector<double> v, GammaRange r = GammaRange::Unit) : values(std::move(v)), range(r) {
    const double lo = range == GammaRange::Unit ? 0.0 : -1.0;
    for (double x : values) {
      if (!(x >= lo && x <= 1.0)) {
        throw ConfigError("gamma component " + std::to_string(x) + " outside declared range [" +
                          std::to_string(lo) + ",1]");
      }
    }
  }

  static GammaSample filled(std::size_t d, double value, GammaRange r = GammaRange::Unit) {
    return GammaSample(std::vector<double>(d, value), r);
  }

  std::size_t dim() const { return values.size(); }
};

/// [cos(γᵢπ/2), sin(γᵢπ/2)] for each dimension i, pairs laid out in order.
inline std::vector<double> encode_l2(const GammaSample& gamma) {
  if (gamma.dim() == 0) throw DimensionError("encode_l2: gamma must have at least one dimension");
  std::vector<double> out;
  out.reserve(2 * gamma.dim());
  for (double g : gamma.values) {
    const double angle = g * std::numbers::pi / 2.0;
    out.push_back(std::cos(angle));
    out.push_back(std::sin(angle));
  }
  return out;
}

inline std::string head_weight_name(const std::string& target) { return "head." + target + ".W"; }
inline std::string head_bias_name(const std::string& target) { return "head." + target + ".b"; }
inline const std::string kTrunkPrefix = "trunk.";

/// Trunk of hidden layers shared by one linear head per primary tensor.
struct HypernetModel {
  Parametrization mode = Parametrization::Default;
  std::size_t input_dim = 1;
  Arch trunk;
  std::vector<ParamShape> targets;
  ParamSet omega{ParamRole::HypernetOmega};
  std::optional<ParamSet> theta0;
  bool folded = false;  // θ⁰ lives in the head biases

  std::size_t trunk_input_width() const { return uses_encoding(mode) ? 2 * input_dim : input_dim; }
  std::size_t feature_width() const { return trunk.back().out_dim; }

  std::vector<Tensor> parameters() const {
    auto out = omega.tensors();
    if (theta0) {
      for (const auto& t : theta0->tensors()) out.push_back(t);
    }
    return out;
  }

  std::size_t parameter_count() const { return omega.scalar_count() + (theta0 ? theta0->scalar_count() : 0); }
};

struct HypernetOptions {
  Activation trunk_activation = Activation::leaky_relu(0.01);
  FanMode fan_mode = FanMode::FanOut;
  FanMode theta0_fan_mode = FanMode::FanIn;
};

inline HypernetModel hypernet_init(const Arch& primary_arch, const std::vector<std::size_t>& trunk_widths,
                                   Parametrization mode, Rng& rng, std::size_t input_dim = 1,
                                   const HypernetOptions& options = {}) {
  if (trunk_widths.empty()) throw ConfigError("hypernet_init: trunk_widths must be nonempty");
  if (input_dim == 0) throw ConfigError("hypernet_init: input_dim must be positive");
  validate_arch(primary_arch);

  HypernetModel model;
  model.mode = mode;
  model.input_dim = input_dim;
  model.targets = param_spec_of(primary_arch);
  model.trunk = make_arch(model.trunk_input_width(), trunk_widths, options.trunk_activation, options.trunk_activation);

  const auto& act = options.trunk_activation;
  for (std::size_t k = 0; k < model.trunk.size(); ++k) {
    auto layer = kaiming_init(model.trunk[k].out_dim, model.trunk[k].in_dim, options.fan_mode, act, rng);
    model.omega.add(kTrunkPrefix + weight_name(k), std::move(layer.weight));
    model.omega.add(kTrunkPrefix + bias_name(k), std::move(layer.bias));
  }
  // Each head is its own linear layer (feature width -> target element count).
  for (const auto& target : model.targets) {
    auto layer = kaiming_init(numel_of(target.shape), model.feature_width(), options.fan_mode, act, rng);
    model.omega.add(head_weight_name(target.name), std::move(layer.weight));
    model.omega.add(head_bias_name(target.name), std::move(layer.bias));
  }
  if (uses_theta0(mode)) {
    model.theta0 = init_network(primary_arch, options.theta0_fan_mode, rng, ParamRole::IndependentTheta0);
  }
  return model;
}

/// Raw or encoded hypernetwork input as a 1×width row.
inline Tensor hypernet_input(const HypernetModel& model, const GammaSample& gamma) {
  if (gamma.dim() != model.input_dim) {
    throw DimensionError("gamma has " + std::to_string(gamma.dim()) + " dimensions, model expects " +
                         std::to_string(model.input_dim));
  }
  auto row = uses_encoding(model.mode) ? encode_l2(gamma) : gamma.values;
  const auto width = row.size();
  return Tensor::from({1, width}, std::move(row));
}

/// Trunk features for `gamma`; `hook` sees each hidden pre-activation.
inline Tensor hypernet_features(const HypernetModel& model, const GammaSample& gamma,
                                const PreActivationHook& hook = {}) {
  return mlp_forward(model.omega, model.trunk, hypernet_input(model, gamma), hook, kTrunkPrefix);
}

/// Primary parameters θ predicted for `gamma`, differentiable w.r.t. ω and θ⁰.
inline ParamSet predict_params(const HypernetModel& model, const GammaSample& gamma,
                               const PreActivationHook& trunk_hook = {}) {
  const Tensor features = hypernet_features(model, gamma, trunk_hook);
  ParamSet theta(ParamRole::PrimaryTheta);
  for (const auto& target : model.targets) {
    const Tensor raw = matmul_nt(features, model.omega.get(head_weight_name(target.name)));
    Tensor offset = model.omega.get(head_bias_name(target.name));
    if (model.theta0) {
      // h(e) + θ⁰ with the head bias and θ⁰ summed first; the folded model
      // stores exactly this sum as its bias, so both paths round identically.
      offset = add(offset, reshape(model.theta0->get(target.name), {numel_of(target.shape)}));
    }
    theta.add(target.name, reshape(add_bias(raw, offset), target.shape));
  }
  return theta;
}

/// Move θ⁰ into the head biases. The result predicts the same θ for every γ
/// and has one parameter tensor fewer per target.
inline HypernetModel fold_theta0_into_bias(const HypernetModel& model) {
  if (!uses_theta0(model.mode)) {
    throw ConfigError("fold_theta0_into_bias: mode '" + to_string(model.mode) + "' has no θ⁰");
  }
  if (model.folded || !model.theta0) throw ConfigError("fold_theta0_into_bias: model is already folded");

  HypernetModel out;
  out.mode = model.mode;
  out.input_dim = model.input_dim;
  out.trunk = model.trunk;
  out.targets = model.targets;
  out.folded = true;
  for (const auto& [name, tensor] : model.omega) out.omega.add(name, tensor.clone(tensor.requires_grad()));
  for (const auto& target : model.targets) {
    const auto& bias = model.omega.get(head_bias_name(target.name));
    const auto& t0 = model.theta0->get(target.name);
    std::vector<double> folded(bias.numel());
    for (std::size_t i = 0; i < folded.size(); ++i) folded[i] = bias[i] + t0[i];
    out.omega.replace(head_bias_name(target.name), Tensor::from(bias.shape(), std::move(folded), true));
  }
  return out;
}

struct GammaStrategy {
  enum class Kind { Uniform01, GaussianSigmoid, UniformRange };
  Kind kind = Kind::Uniform01;
  double lo = 0.0;
  double hi = 1.0;

  static GammaStrategy uniform01() { return {Kind::Uniform01, 0.0, 1.0}; }
  static GammaStrategy gaussian_sigmoid() { return {Kind::GaussianSigmoid, 0.0, 1.0}; }
  static GammaStrategy uniform_range(double lo, double hi) { return {Kind::UniformRange, lo, hi}; }

  GammaRange declared_range() const {
    return kind == Kind::UniformRange && lo < 0.0 ? GammaRange::Symmetric : GammaRange::Unit;
  }
};

inline GammaSample sample_gamma(const GammaStrategy& strategy, std::size_t d, Rng& rng) {
  if (d == 0) throw ConfigError("sample_gamma: dimension must be at least 1");
  std::vector<double> values(d);
  switch (strategy.kind) {
    case GammaStrategy::Kind::Uniform01:
      for (auto& v : values) v = rng.uniform();
      break;
    case GammaStrategy::Kind::GaussianSigmoid:
      for (auto& v : values) v = 1.0 / (1.0 + std::exp(-rng.normal()));
      break;
    case GammaStrategy::Kind::UniformRange:
      if (!(strategy.lo < strategy.hi)) {
        throw ConfigError("sample_gamma: uniform_range requires lo < hi, got [" + std::to_string(strategy.lo) + "," +
                          std::to_string(strategy.hi) + "]");
      }
      if (strategy.lo < -1.0 || strategy.hi > 1.0) {
        throw ConfigError("sample_gamma: uniform_range must lie within [-1,1]");
      }
      for (auto& v : values) v = rng.uniform(strategy.lo, strategy.hi);
      break;
  }
  return GammaSample(std::move(values), strategy.declared_range());
}

}  // namespace hyperstab
