#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "hyperstab/activation.hpp"
#include "hyperstab/errors.hpp"
#include "hyperstab/rng.hpp"
#include "hyperstab/tensor.hpp"

namespace hyperstab {

struct LayerSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Activation activation = Activation::leaky_relu();

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

using Arch = std::vector<LayerSpec>;

/// Fully connected stack in→widths[0]→…→widths.back(), `hidden` on every
/// layer except the last, which gets `last`.
inline Arch make_arch(std::size_t in_dim, const std::vector<std::size_t>& widths, Activation hidden,
                      Activation last = Activation::linear()) {
  Arch arch;
  std::size_t prev = in_dim;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    arch.push_back({prev, widths[i], i + 1 == widths.size() ? last : hidden});
    prev = widths[i];
  }
  return arch;
}

/// Dimension chain must connect and only the final layer may be Linear.
inline void validate_arch(const Arch& arch) {
  for (std::size_t k = 0; k < arch.size(); ++k) {
    if (arch[k].in_dim == 0 || arch[k].out_dim == 0) {
      throw DimensionError("layer " + std::to_string(k) + ": dimensions must be positive");
    }
    if (k > 0 && arch[k].in_dim != arch[k - 1].out_dim) {
      throw DimensionError("layer " + std::to_string(k) + ": in_dim " + std::to_string(arch[k].in_dim) +
                           " does not match previous out_dim " + std::to_string(arch[k - 1].out_dim));
    }
    if (arch[k].activation.kind == Activation::Kind::Linear && k + 1 != arch.size()) {
      throw ConfigError("layer " + std::to_string(k) + ": Linear activation is only allowed on the last layer");
    }
  }
}

enum class ParamRole { PrimaryTheta, IndependentTheta0, HypernetOmega, NormAffine };

/// Ordered, uniquely named tensors.
class ParamSet {
 public:
  using Entry = std::pair<std::string, Tensor>;

  ParamSet() = default;
  explicit ParamSet(ParamRole role) : role_(role) {}

  ParamRole role() const { return role_; }

  void add(std::string name, Tensor tensor) {
    if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    entries_.emplace_back(std::move(name), std::move(tensor));
  }

  bool contains(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.first == name) return true;
    return false;
  }

  const Tensor& get(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.first == name) return e.second;
    throw ConfigError("no parameter named '" + name + "'");
  }

  Tensor& get(const std::string& name) {
    for (auto& e : entries_)
      if (e.first == name) return e.second;
    throw ConfigError("no parameter named '" + name + "'");
  }

  // Swap in a same-shaped tensor for an existing entry.
  void replace(const std::string& name, Tensor tensor) {
    auto& slot = get(name);
    if (slot.shape() != tensor.shape()) {
      throw DimensionError("replace '" + name + "': shape " + shape_str(tensor.shape()) + " vs " +
                           shape_str(slot.shape()));
    }
    slot = std::move(tensor);
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  Entry& operator[](std::size_t i) { return entries_[i]; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.numel();
    return n;
  }

  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    for (const auto& e : entries_) out.push_back(e.second);
    return out;
  }

  // All values concatenated in entry order.
  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(scalar_count());
    for (const auto& e : entries_) out.insert(out.end(), e.second.values().begin(), e.second.values().end());
    return out;
  }

  void zero_grad() {
    for (auto& e : entries_) e.second.zero_grad();
  }

 private:
  ParamRole role_ = ParamRole::PrimaryTheta;
  std::vector<Entry> entries_;
};

struct ParamShape {
  std::string name;
  Shape shape;

  friend bool operator==(const ParamShape&, const ParamShape&) = default;
};

inline std::string weight_name(std::size_t layer) { return "L" + std::to_string(layer) + ".W"; }
inline std::string bias_name(std::size_t layer) { return "L" + std::to_string(layer) + ".b"; }

/// Every weight and bias of `arch` in layer order: L{k}.W (out,in), L{k}.b (out).
inline std::vector<ParamShape> param_spec_of(const Arch& arch) {
  std::vector<ParamShape> out;
  for (std::size_t k = 0; k < arch.size(); ++k) {
    out.push_back({weight_name(k), {arch[k].out_dim, arch[k].in_dim}});
    out.push_back({bias_name(k), {arch[k].out_dim}});
  }
  return out;
}

enum class FanMode { FanIn, FanOut };

struct LinearInit {
  Tensor weight;
  Tensor bias;
};

/// He-normal weights of shape (out, in) with σ² = gain²/fan and zero biases.
inline LinearInit kaiming_init(std::size_t out_dim, std::size_t in_dim, FanMode mode, const Activation& gain_activation,
                               Rng& rng, bool requires_grad = true) {
  if (out_dim == 0 || in_dim == 0) {
    throw DimensionError("kaiming_init: zero dimension in shape (" + std::to_string(out_dim) + "," +
                         std::to_string(in_dim) + ")");
  }
  const double fan = static_cast<double>(mode == FanMode::FanIn ? in_dim : out_dim);
  const double sigma = std::sqrt(gain_activation.gain_squared() / fan);
  std::vector<double> w(out_dim * in_dim);
  for (auto& v : w) v = sigma * rng.normal();
  return {Tensor::from({out_dim, in_dim}, std::move(w), requires_grad), Tensor::zeros({out_dim}, requires_grad)};
}

/// Initialize a standalone network with Kaiming weights and zero biases;
/// each layer uses its own activation for the gain.
inline ParamSet init_network(const Arch& arch, FanMode mode, Rng& rng, ParamRole role = ParamRole::PrimaryTheta,
                             const std::string& prefix = "") {
  validate_arch(arch);
  ParamSet params(role);
  for (std::size_t k = 0; k < arch.size(); ++k) {
    auto layer = kaiming_init(arch[k].out_dim, arch[k].in_dim, mode, arch[k].activation, rng);
    params.add(prefix + weight_name(k), std::move(layer.weight));
    params.add(prefix + bias_name(k), std::move(layer.bias));
  }
  return params;
}

/// x[batch×in] · Wᵀ + b
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add_bias(matmul_nt(x, weight), bias);
}

/// Applied to the pre-activation of every non-Linear layer (after the affine
/// map, before the activation).
using PreActivationHook = std::function<Tensor(std::size_t layer, const Tensor& pre)>;

namespace detail {

inline void check_layer_params(const Tensor& w, const Tensor& b, const LayerSpec& spec, std::size_t k) {
  const Shape ws{spec.out_dim, spec.in_dim};
  const Shape bs{spec.out_dim};
  if (w.shape() != ws || b.shape() != bs) {
    throw DimensionError("layer " + std::to_string(k) + ": expected W" + shape_str(ws) + " b" + shape_str(bs) +
                         ", got W" + shape_str(w.shape()) + " b" + shape_str(b.shape()));
  }
}

}  // namespace detail

/// Functional forward pass: parameters are arguments, so predicted weights
/// stay on the differentiation path of whatever produced them.
///
/// `groups` holds one parameter set per contiguous, equally sized block of
/// rows in `x` (one set for the whole batch is the common case). Hidden
/// pre-activations are assembled over the full batch before `hook` runs,
/// which is what batch-statistics normalization needs.
inline Tensor mlp_forward_grouped(const std::vector<const ParamSet*>& groups, const Arch& arch, const Tensor& x,
                                  const PreActivationHook& hook = {}, const std::string& prefix = "") {
  if (groups.empty()) throw ConfigError("mlp_forward: no parameter sets");
  if (x.dim() != 2) throw DimensionError("mlp_forward: input must be 2-D, got " + shape_str(x.shape()));
  const std::size_t batch = x.size(0);
  if (batch % groups.size() != 0) {
    throw DimensionError("mlp_forward: batch " + std::to_string(batch) + " not divisible into " +
                         std::to_string(groups.size()) + " parameter groups");
  }
  const std::size_t rows = batch / groups.size();
  Tensor h = x;
  for (std::size_t k = 0; k < arch.size(); ++k) {
    if (h.size(1) != arch[k].in_dim) {
      throw DimensionError("layer " + std::to_string(k) + ": input width " + std::to_string(h.size(1)) +
                           " but layer expects " + std::to_string(arch[k].in_dim));
    }
    Tensor pre;
    if (groups.size() == 1) {
      const auto& w = groups[0]->get(prefix + weight_name(k));
      const auto& b = groups[0]->get(prefix + bias_name(k));
      detail::check_layer_params(w, b, arch[k], k);
      pre = linear(h, w, b);
    } else {
      std::vector<Tensor> parts;
      parts.reserve(groups.size());
      for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto& w = groups[g]->get(prefix + weight_name(k));
        const auto& b = groups[g]->get(prefix + bias_name(k));
        detail::check_layer_params(w, b, arch[k], k);
        parts.push_back(linear(slice_rows(h, g * rows, (g + 1) * rows), w, b));
      }
      pre = concat_rows(parts);
    }
    if (hook && arch[k].activation.kind != Activation::Kind::Linear) pre = hook(k, pre);
    h = activation_apply(arch[k].activation, pre);
  }
  return h;
}

inline Tensor mlp_forward(const ParamSet& params, const Arch& arch, const Tensor& x, const PreActivationHook& hook = {},
                          const std::string& prefix = "") {
  return mlp_forward_grouped({&params}, arch, x, hook, prefix);
}

}  // namespace hyperstab
