#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "hyperstab/errors.hpp"
#include "hyperstab/hypernet.hpp"
#include "hyperstab/normalization.hpp"
#include "hyperstab/tensor.hpp"

namespace hyperstab {

struct TensorStats {
  std::string name;
  double stdev = 0.0;
  double l2 = 0.0;
};

struct SweepRow {
  double gamma = 0.0;
  std::vector<TensorStats> tensors;
  double stdev = 0.0;  // over all predicted scalars
  double l2 = 0.0;
  std::vector<double> activation_stdev;  // one per primary layer, when probed
  std::vector<std::pair<std::string, std::vector<double>>> samples;
};

struct SweepOptions {
  std::optional<Tensor> probe;
  std::size_t sample_cap = 0;  // raw θ values exported per tensor
};

namespace detail {

inline TensorStats stats_of(const std::string& name, std::span<const double> v) {
  double s = 0.0, sq = 0.0;
  for (double x : v) {
    s += x;
    sq += x * x;
  }
  const double n = static_cast<double>(v.size());
  const double mu = s / n;
  double var = 0.0;
  for (double x : v) var += (x - mu) * (x - mu);
  return {name, std::sqrt(var / n), std::sqrt(sq)};
}

inline std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace detail

/// FNV-1a over every parameter name and value plus BatchNorm running stats.
inline std::uint64_t state_hash(const InstrumentedModel& m) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto mix = [&h](const ParamSet& ps) {
    for (const auto& [name, t] : ps) {
      h = detail::fnv1a(h, name.data(), name.size());
      h = detail::fnv1a(h, t.data().data(), t.numel() * sizeof(double));
    }
  };
  mix(m.hypernet.omega);
  if (m.hypernet.theta0) mix(*m.hypernet.theta0);
  mix(m.norm_params);
  for (const auto& [k, s] : m.bn_stats) {
    h = detail::fnv1a(h, &k, sizeof(k));
    h = detail::fnv1a(h, s.running_mean.data(), s.running_mean.size() * sizeof(double));
    h = detail::fnv1a(h, s.running_var.data(), s.running_var.size() * sizeof(double));
  }
  return h;
}

/// Stdev of every primary layer's output on `x` (eval-mode normalization).
inline std::vector<double> activation_stdevs(const InstrumentedModel& model, const ParamSet& theta, const Tensor& x) {
  InstrumentedModel local = model;  // BatchNorm stats are copied; parameters are only read
  std::vector<double> out;
  const auto norm_hook = detail::primary_norm_hook(local, false);
  PreActivationHook hook = [&](std::size_t k, const Tensor& pre) {
    Tensor y = norm_hook ? norm_hook(k, pre) : pre;
    const Tensor a = activation_apply(local.primary[k].activation, y);
    out.push_back(detail::stats_of("", a.data()).stdev);
    return y;
  };
  const Tensor y = mlp_forward(theta, local.primary, x, hook);
  out.push_back(detail::stats_of("", y.data()).stdev);
  return out;
}

/// θ statistics for each γ in `grid`; γ fills every input dimension.
inline std::vector<SweepRow> weight_std_sweep(const InstrumentedModel& model, const std::vector<double>& grid,
                                              const SweepOptions& options = {}) {
  if (grid.empty()) throw ConfigError("weight_std_sweep: gamma grid is empty");
  std::vector<SweepRow> rows;
  for (double g : grid) {
    const GammaRange range = g < 0.0 ? GammaRange::Symmetric : GammaRange::Unit;
    const ParamSet theta = predict(model, GammaSample::filled(model.hypernet.input_dim, g, range));
    SweepRow row;
    row.gamma = g;
    const auto flat = theta.flatten();
    const auto all = detail::stats_of("all", flat);
    row.stdev = all.stdev;
    row.l2 = all.l2;
    for (const auto& [name, t] : theta) {
      row.tensors.push_back(detail::stats_of(name, t.data()));
      if (options.sample_cap > 0) {
        const auto n = std::min(options.sample_cap, t.numel());
        row.samples.emplace_back(name, std::vector<double>(t.data().begin(), t.data().begin() + static_cast<std::ptrdiff_t>(n)));
      }
    }
    if (options.probe) row.activation_stdev = activation_stdevs(model, theta, *options.probe);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<SweepRow> weight_std_sweep(const HypernetModel& model, const std::vector<double>& grid,
                                              const SweepOptions& options = {}) {
  InstrumentedModel m;
  m.hypernet = model;
  return weight_std_sweep(m, grid, options);
}

struct ProportionalityFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double mean = 0.0;  // mean stdev over the rows
};

/// Ordinary least squares of row stdev on γ. r² is 0 when the stdev column
/// has no variance.
inline ProportionalityFit fit_proportionality(const std::vector<SweepRow>& rows) {
  if (rows.size() < 3) throw ConfigError("fit_proportionality: need at least 3 rows, got " + std::to_string(rows.size()));
  const double n = static_cast<double>(rows.size());
  double mx = 0.0, my = 0.0;
  for (const auto& r : rows) {
    mx += r.gamma;
    my += r.stdev;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& r : rows) {
    sxx += (r.gamma - mx) * (r.gamma - mx);
    sxy += (r.gamma - mx) * (r.stdev - my);
    syy += (r.stdev - my) * (r.stdev - my);
  }
  if (!(sxx > 0.0)) throw ConfigError("fit_proportionality: degenerate grid, all gamma values equal");
  ProportionalityFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 0.0;
  fit.mean = my;
  return fit;
}

/// Per-minibatch ‖∇θ L‖₂ for one epoch.
struct GradNormTrace {
  std::size_t epoch = 0;
  std::vector<double> norms;
  double mean = 0.0;
  double stdev = 0.0;
  double cv = 0.0;  // stdev / mean, 0 when the mean is 0
};

inline GradNormTrace summarize_grad_norms(std::size_t epoch, std::vector<double> norms) {
  GradNormTrace t;
  t.epoch = epoch;
  t.norms = std::move(norms);
  if (t.norms.empty()) return t;
  const double n = static_cast<double>(t.norms.size());
  for (double x : t.norms) t.mean += x;
  t.mean /= n;
  for (double x : t.norms) t.stdev += (x - t.mean) * (x - t.mean);
  t.stdev = std::sqrt(t.stdev / n);
  t.cv = t.mean > 0.0 ? t.stdev / t.mean : 0.0;
  return t;
}

/// ‖∇θ L‖₂ across every tensor of every θ set, read from retained grads.
/// Tensors without a gradient contribute 0.
inline double theta_grad_norm(const std::vector<ParamSet>& thetas) {
  double sq = 0.0;
  for (const auto& theta : thetas)
    for (const auto& [name, t] : theta)
      if (auto g = t.grad())
        for (double x : *g) sq += x * x;
  return std::sqrt(sq);
}

/// Split a flat (epoch, norm) record into one trace per epoch.
inline std::vector<GradNormTrace> grad_norm_trace(const std::vector<std::pair<std::size_t, double>>& per_batch) {
  std::vector<GradNormTrace> out;
  std::vector<double> current;
  std::size_t epoch = 0;
  for (std::size_t i = 0; i < per_batch.size(); ++i) {
    if (i > 0 && per_batch[i].first != epoch) {
      out.push_back(summarize_grad_norms(epoch, std::move(current)));
      current.clear();
    }
    epoch = per_batch[i].first;
    current.push_back(per_batch[i].second);
  }
  if (!current.empty()) out.push_back(summarize_grad_norms(epoch, std::move(current)));
  return out;
}

}  // namespace hyperstab
