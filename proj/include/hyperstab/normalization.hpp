#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hyperstab/errors.hpp"
#include "hyperstab/hypernet.hpp"
#include "hyperstab/layers.hpp"
#include "hyperstab/tensor.hpp"

namespace hyperstab {

struct NormVariant {
  enum class Kind { BatchNormP, LayerNormP, LayerNormH, WeightNorm };

  Kind kind = Kind::LayerNormH;
  double epsilon = 1e-5;
  bool affine = true;
  double momentum = 0.1;  // BatchNorm running statistics

  std::string name() const {
    switch (kind) {
      case Kind::BatchNormP: return "batchnorm_p";
      case Kind::LayerNormP: return "layernorm_p";
      case Kind::LayerNormH: return "layernorm_h";
      case Kind::WeightNorm: return "weightnorm";
    }
    return "?";
  }

  static NormVariant parse(const std::string& s) {
    if (s == "batchnorm_p") return {Kind::BatchNormP};
    if (s == "layernorm_p") return {Kind::LayerNormP};
    if (s == "layernorm_h") return {Kind::LayerNormH};
    if (s == "weightnorm") return {Kind::WeightNorm};
    throw ConfigError("unknown normalization '" + s + "'");
  }
};

/// x[rows×d] ↦ x·gain + shift, per column.
inline Tensor affine_columns(const Tensor& x, const Tensor& gain, const Tensor& shift) {
  if (x.dim() != 2 || gain.shape() != Shape{x.size(1)} || shift.shape() != Shape{x.size(1)}) {
    throw DimensionError("affine_columns: gain/shift must be (" + std::to_string(x.dim() == 2 ? x.size(1) : 0) +
                         ",) for input " + shape_str(x.shape()));
  }
  const std::size_t rows = x.size(0), d = x.size(1);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = x[r * d + j] * gain[j] + shift[j];
  return Tensor::make_op("affine_columns", x.shape(), std::move(out), {x, gain, shift}, [rows, d](detail::Node& self) {
    auto& px = *self.parents[0];
    auto& pg = *self.parents[1];
    auto& ps = *self.parents[2];
    if (px.requires_grad) px.ensure_grad();
    if (pg.requires_grad) pg.ensure_grad();
    if (ps.requires_grad) ps.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < d; ++j) {
        const double g = self.grad[r * d + j];
        if (px.requires_grad) px.grad[r * d + j] += g * pg.data[j];
        if (pg.requires_grad) pg.grad[j] += g * px.data[r * d + j];
        if (ps.requires_grad) ps.grad[j] += g;
      }
    }
  });
}

namespace detail {

// `groups` independent sets of `n` elements; element i of group g sits at
// g·outer_step + i·inner_step. Backward uses the batch-statistics adjoint
// unless the mean/scale were fixed constants (BatchNorm eval mode).
struct Standardizer {
  std::size_t groups, n, outer_step, inner_step;

  std::size_t at(std::size_t g, std::size_t i) const { return g * outer_step + i * inner_step; }
};

inline Tensor standardize(const char* op, const Tensor& x, const Standardizer& layout,
                          const std::vector<double>& mean, const std::vector<double>& inv_std, bool batch_stats) {
  std::vector<double> out(x.numel());
  for (std::size_t g = 0; g < layout.groups; ++g)
    for (std::size_t i = 0; i < layout.n; ++i) {
      const auto idx = layout.at(g, i);
      out[idx] = (x[idx] - mean[g]) * inv_std[g];
    }
  std::vector<double> xhat = out;
  return Tensor::make_op(op, x.shape(), std::move(out), {x},
                         [layout, inv_std, batch_stats, xhat = std::move(xhat)](detail::Node& self) {
                           auto& p = *self.parents[0];
                           if (!p.requires_grad) return;
                           p.ensure_grad();
                           const double n = static_cast<double>(layout.n);
                           for (std::size_t g = 0; g < layout.groups; ++g) {
                             if (!batch_stats) {
                               for (std::size_t i = 0; i < layout.n; ++i) {
                                 const auto idx = layout.at(g, i);
                                 p.grad[idx] += self.grad[idx] * inv_std[g];
                               }
                               continue;
                             }
                             double sum_g = 0.0, sum_gx = 0.0;
                             for (std::size_t i = 0; i < layout.n; ++i) {
                               const auto idx = layout.at(g, i);
                               sum_g += self.grad[idx];
                               sum_gx += self.grad[idx] * xhat[idx];
                             }
                             for (std::size_t i = 0; i < layout.n; ++i) {
                               const auto idx = layout.at(g, i);
                               p.grad[idx] += inv_std[g] / n * (n * self.grad[idx] - sum_g - xhat[idx] * sum_gx);
                             }
                           }
                         });
}

}  // namespace detail

/// Per-row (x − μ)/√(σ² + ε), population variance.
inline Tensor layer_norm(const Tensor& x, double eps = 1e-5) {
  if (x.dim() != 2) throw DimensionError("layer_norm: expected 2-D input, got " + shape_str(x.shape()));
  if (x.size(1) < 2) throw DimensionError("layer_norm: need at least 2 features, got " + std::to_string(x.size(1)));
  if (!(eps > 0.0)) throw ConfigError("layer_norm: epsilon must be positive");
  const std::size_t rows = x.size(0), d = x.size(1);
  std::vector<double> mean(rows, 0.0), inv_std(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += x[r * d + j];
    mean[r] = s / static_cast<double>(d);
    double v = 0.0;
    for (std::size_t j = 0; j < d; ++j) v += (x[r * d + j] - mean[r]) * (x[r * d + j] - mean[r]);
    inv_std[r] = 1.0 / std::sqrt(v / static_cast<double>(d) + eps);
  }
  return detail::standardize("layer_norm", x, {rows, d, d, 1}, mean, inv_std, true);
}

struct BatchNormStats {
  std::vector<double> running_mean;
  std::vector<double> running_var;

  explicit BatchNormStats(std::size_t d = 0) : running_mean(d, 0.0), running_var(d, 1.0) {}
};

/// Per-feature standardization over the batch. Training mode uses batch
/// statistics and updates `stats` with `momentum`; eval mode uses `stats`.
inline Tensor batch_norm(const Tensor& x, BatchNormStats& stats, bool training, double eps = 1e-5,
                         double momentum = 0.1) {
  if (x.dim() != 2) throw DimensionError("batch_norm: expected 2-D input, got " + shape_str(x.shape()));
  if (!(eps > 0.0)) throw ConfigError("batch_norm: epsilon must be positive");
  const std::size_t rows = x.size(0), d = x.size(1);
  if (stats.running_mean.size() != d) {
    throw DimensionError("batch_norm: running stats have " + std::to_string(stats.running_mean.size()) +
                         " features, input has " + std::to_string(d));
  }
  std::vector<double> mean(d, 0.0), inv_std(d, 0.0);
  if (training) {
    if (rows < 2) throw DimensionError("batch_norm: training mode needs batch >= 2, got " + std::to_string(rows));
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < rows; ++r) s += x[r * d + j];
      mean[j] = s / static_cast<double>(rows);
      double v = 0.0;
      for (std::size_t r = 0; r < rows; ++r) v += (x[r * d + j] - mean[j]) * (x[r * d + j] - mean[j]);
      v /= static_cast<double>(rows);
      inv_std[j] = 1.0 / std::sqrt(v + eps);
      stats.running_mean[j] = (1.0 - momentum) * stats.running_mean[j] + momentum * mean[j];
      stats.running_var[j] = (1.0 - momentum) * stats.running_var[j] + momentum * v;
    }
  } else {
    for (std::size_t j = 0; j < d; ++j) {
      mean[j] = stats.running_mean[j];
      inv_std[j] = 1.0 / std::sqrt(stats.running_var[j] + eps);
    }
  }
  return detail::standardize("batch_norm", x, {d, rows, 1, d}, mean, inv_std, training);
}

/// g·v/‖v‖ for a tensor v and a scalar gain g.
inline Tensor weight_norm_tensor(const Tensor& v, const Tensor& g) {
  if (g.numel() != 1) throw DimensionError("weight_norm: gain must be a scalar, got " + shape_str(g.shape()));
  double sq = 0.0;
  for (double x : v.values()) sq += x * x;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0)) throw ConfigError("weight_norm: zero-norm direction is undefined");
  const double gain = g[0];
  std::vector<double> out(v.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gain * v[i] / norm;
  return Tensor::make_op("weight_norm", v.shape(), std::move(out), {v, g}, [norm, gain](detail::Node& self) {
    auto& pv = *self.parents[0];
    auto& pg = *self.parents[1];
    double dot = 0.0;  // v · dL/dy
    for (std::size_t i = 0; i < self.grad.size(); ++i) dot += pv.data[i] * self.grad[i];
    if (pv.requires_grad) {
      pv.ensure_grad();
      const double c = gain / norm;
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pv.grad[i] += c * (self.grad[i] - dot * pv.data[i] / (norm * norm));
    }
    if (pg.requires_grad) {
      pg.ensure_grad();
      pg.grad[0] += dot / norm;
    }
  });
}

inline std::string weight_norm_gain_name(const std::string& target) { return "wn." + target; }

/// Apply weight_norm_tensor to every entry of θ using gains "wn.<name>".
inline ParamSet weight_norm(const ParamSet& theta, const ParamSet& gains) {
  ParamSet out(ParamRole::PrimaryTheta);
  for (const auto& [name, v] : theta) out.add(name, weight_norm_tensor(v, gains.get(weight_norm_gain_name(name))));
  return out;
}

struct NormSite {
  enum class Where { HypernetTrunk, Primary, PredictedTheta };
  Where where;
  std::string name;   // layer name or target tensor
  std::size_t width;  // features normalized (1 for weight-norm gains)
};

/// A hypernetwork + primary architecture, optionally instrumented with one
/// normalization strategy. Normalization parameters are trained directly.
struct InstrumentedModel {
  HypernetModel hypernet;
  Arch primary;
  std::optional<NormVariant> norm;
  std::vector<NormSite> sites;
  ParamSet norm_params{ParamRole::NormAffine};
  std::map<std::size_t, BatchNormStats> bn_stats;  // keyed by primary layer

  std::vector<Tensor> parameters() const {
    auto out = hypernet.parameters();
    for (const auto& t : norm_params.tensors()) out.push_back(t);
    return out;
  }

  std::size_t parameter_count() const { return hypernet.parameter_count() + norm_params.scalar_count(); }
};

inline std::string norm_gain_name(const std::string& site) { return "norm." + site + ".gain"; }
inline std::string norm_shift_name(const std::string& site) { return "norm." + site + ".shift"; }
inline std::string trunk_site(std::size_t k) { return "trunk.L" + std::to_string(k); }
inline std::string primary_site(std::size_t k) { return "primary.L" + std::to_string(k); }

namespace detail {

inline PreActivationHook trunk_norm_hook(const InstrumentedModel& m) {
  if (!m.norm || m.norm->kind != NormVariant::Kind::LayerNormH) return {};
  return [&m](std::size_t k, const Tensor& pre) {
    Tensor y = layer_norm(pre, m.norm->epsilon);
    if (m.norm->affine) {
      y = affine_columns(y, m.norm_params.get(norm_gain_name(trunk_site(k))),
                         m.norm_params.get(norm_shift_name(trunk_site(k))));
    }
    return y;
  };
}

}  // namespace detail

/// θ for one γ, with LayerNorm-H and WeightNorm applied when attached.
inline ParamSet predict(const InstrumentedModel& m, const GammaSample& gamma) {
  ParamSet theta = predict_params(m.hypernet, gamma, detail::trunk_norm_hook(m));
  if (m.norm && m.norm->kind == NormVariant::Kind::WeightNorm) return weight_norm(theta, m.norm_params);
  return theta;
}

namespace detail {

inline PreActivationHook primary_norm_hook(InstrumentedModel& m, bool training) {
  if (!m.norm || (m.norm->kind != NormVariant::Kind::BatchNormP && m.norm->kind != NormVariant::Kind::LayerNormP)) {
    return {};
  }
  return [&m, training](std::size_t k, const Tensor& pre) {
    const auto& nv = *m.norm;
    Tensor y = nv.kind == NormVariant::Kind::BatchNormP
                   ? batch_norm(pre, m.bn_stats.at(k), training, nv.epsilon, nv.momentum)
                   : layer_norm(pre, nv.epsilon);
    if (nv.affine) {
      y = affine_columns(y, m.norm_params.get(norm_gain_name(primary_site(k))),
                         m.norm_params.get(norm_shift_name(primary_site(k))));
    }
    return y;
  };
}

}  // namespace detail

/// Primary forward with θ groups (see mlp_forward_grouped); BatchNorm-P and
/// LayerNorm-P are applied to hidden pre-activations. Training mode updates
/// the BatchNorm running statistics.
inline Tensor primary_forward(InstrumentedModel& m, const std::vector<const ParamSet*>& thetas, const Tensor& x,
                              bool training) {
  return mlp_forward_grouped(thetas, m.primary, x, detail::primary_norm_hook(m, training));
}

/// Wrap a hypernetwork/primary pair, inserting `variant` (if any) at its
/// sites: LayerNorm-H after every trunk linear layer, BatchNorm-P and
/// LayerNorm-P after every hidden primary layer, WeightNorm on each
/// predicted tensor with gain initialized to ‖θ‖ at γ = 1.
inline InstrumentedModel attach_norm(std::optional<NormVariant> variant, HypernetModel hypernet, Arch primary) {
  validate_arch(primary);
  InstrumentedModel m;
  m.hypernet = std::move(hypernet);
  m.primary = std::move(primary);
  if (!variant) return m;
  if (!(variant->epsilon > 0.0)) throw ConfigError("normalization epsilon must be positive");

  auto add_affine = [&m](const std::string& site, std::size_t width) {
    m.norm_params.add(norm_gain_name(site), Tensor::full({width}, 1.0, true));
    m.norm_params.add(norm_shift_name(site), Tensor::zeros({width}, true));
  };

  switch (variant->kind) {
    case NormVariant::Kind::LayerNormH:
      for (std::size_t k = 0; k < m.hypernet.trunk.size(); ++k) {
        const auto width = m.hypernet.trunk[k].out_dim;
        if (width < 2) throw ConfigError("layernorm_h: trunk layer " + std::to_string(k) + " has width < 2");
        m.sites.push_back({NormSite::Where::HypernetTrunk, trunk_site(k), width});
        if (variant->affine) add_affine(trunk_site(k), width);
      }
      break;
    case NormVariant::Kind::BatchNormP:
    case NormVariant::Kind::LayerNormP:
      if (m.primary.size() < 2) throw ConfigError(variant->name() + ": primary network has no hidden layers");
      for (std::size_t k = 0; k + 1 < m.primary.size(); ++k) {
        const auto width = m.primary[k].out_dim;
        if (variant->kind == NormVariant::Kind::LayerNormP && width < 2) {
          throw ConfigError("layernorm_p: primary layer " + std::to_string(k) + " has width < 2");
        }
        m.sites.push_back({NormSite::Where::Primary, primary_site(k), width});
        if (variant->affine) add_affine(primary_site(k), width);
        if (variant->kind == NormVariant::Kind::BatchNormP) m.bn_stats.emplace(k, BatchNormStats(width));
      }
      break;
    case NormVariant::Kind::WeightNorm: {
      const auto theta = predict_params(m.hypernet, GammaSample::filled(m.hypernet.input_dim, 1.0));
      for (const auto& [name, v] : theta) {
        double sq = 0.0;
        for (double x : v.values()) sq += x * x;
        if (!(sq > 0.0)) throw ConfigError("weightnorm: predicted tensor '" + name + "' has zero norm at gamma = 1");
        m.sites.push_back({NormSite::Where::PredictedTheta, name, 1});
        m.norm_params.add(weight_norm_gain_name(name), Tensor::scalar(std::sqrt(sq), true));
      }
      break;
    }
  }
  m.norm = variant;
  return m;
}

}  // namespace hyperstab
