#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hyperstab/gradcheck.hpp"
#include "hyperstab/hypernet.hpp"
#include "hyperstab/layers.hpp"
#include "hyperstab/losses.hpp"
#include "hyperstab/normalization.hpp"
#include "hyperstab/rng.hpp"

namespace hyperstab {

struct GradcheckCase {
  std::string name;
  double error = 0.0;
};

namespace detail {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(shape, std::move(v));
}

// Values bounded away from zero, for ops with a kink at 0.
inline Tensor random_offzero(const Shape& shape, Rng& rng) {
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0);
  return Tensor::from(shape, std::move(v));
}

// Σ w ⊙ y with fixed random weights, so every output element matters.
inline std::function<Tensor(const Tensor&)> weighted(std::function<Tensor(const Tensor&)> f, const Shape& out_shape,
                                                     Rng& rng) {
  const Tensor w = random_tensor(out_shape, rng);
  return [f = std::move(f), w](const Tensor& x) {
    const Tensor y = f(x);
    return sum(mul(y, reshape(w, y.shape())));
  };
}

}  // namespace detail

/// Finite-difference check of every differentiable op and of a full
/// hypernetwork-through-primary loss in each parametrization and
/// normalization variant. Deterministic under `seed`.
inline std::vector<GradcheckCase> run_gradcheck_suite(std::uint64_t seed = 0, double h = 1e-6) {
  using detail::random_offzero;
  using detail::random_tensor;
  using detail::weighted;
  Rng rng(seed);
  std::vector<GradcheckCase> out;
  auto check = [&](const std::string& name, const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
    out.push_back({name, finite_diff_check(f, x, h)});
  };

  const Tensor a = random_tensor({3, 4}, rng);
  const Tensor b = random_tensor({4, 5}, rng);
  const Tensor c = random_tensor({3, 4}, rng);
  const Tensor bt = random_tensor({5, 4}, rng);
  const Tensor bias = random_tensor({4}, rng);

  check("sum", [](const Tensor& x) { return sum(x); }, a);
  check("matmul.lhs", weighted([b](const Tensor& x) { return matmul(x, b); }, {3, 5}, rng), a);
  check("matmul.rhs", weighted([a](const Tensor& x) { return matmul(a, x); }, {3, 5}, rng), b);
  check("matmul_nt.lhs", weighted([bt](const Tensor& x) { return matmul_nt(x, bt); }, {3, 5}, rng), a);
  check("matmul_nt.rhs", weighted([a](const Tensor& x) { return matmul_nt(a, x); }, {3, 5}, rng), bt);
  check("add", weighted([c](const Tensor& x) { return add(x, c); }, {3, 4}, rng), a);
  check("sub", weighted([c](const Tensor& x) { return sub(c, x); }, {3, 4}, rng), a);
  check("mul", weighted([c](const Tensor& x) { return mul(x, c); }, {3, 4}, rng), a);
  check("mul.self", weighted([](const Tensor& x) { return mul(x, x); }, {3, 4}, rng), a);
  check("scale", weighted([](const Tensor& x) { return scale(x, -2.5); }, {3, 4}, rng), a);
  check("add_bias.input", weighted([bias](const Tensor& x) { return add_bias(x, bias); }, {3, 4}, rng), a);
  check("add_bias.bias", weighted([a](const Tensor& x) { return add_bias(a, x); }, {3, 4}, rng), bias);
  check("reshape", weighted([](const Tensor& x) { return reshape(x, {2, 6}); }, {2, 6}, rng), a);
  check("slice_rows", weighted([](const Tensor& x) { return slice_rows(x, 1, 3); }, {2, 4}, rng), a);
  check("concat_rows", weighted([c](const Tensor& x) { return concat_rows({x, c, x}); }, {9, 4}, rng), a);

  const std::vector<std::pair<std::string, Reduce>> reductions{
      {"mean", Reduce::Mean},         {"sum_squares", Reduce::SumSquares}, {"l2_norm", Reduce::L2Norm},
      {"variance", Reduce::Variance}, {"stdev", Reduce::Stdev},            {"sum.reduce", Reduce::Sum}};
  for (const auto& [name, op] : reductions) {
    check(name, [op](const Tensor& x) { return reduce(op, x); }, a);
    check(name + ".axis1", weighted([op](const Tensor& x) { return reduce(op, x, {1}); }, {3}, rng), a);
  }

  const std::vector<Activation> acts{Activation::linear(), Activation::relu(), Activation::leaky_relu(0.01),
                                     Activation::tanh(),   Activation::gelu(), Activation::silu()};
  const Tensor off = random_offzero({3, 4}, rng);
  for (const auto& act : acts) {
    check("activation." + act.name(), weighted([act](const Tensor& x) { return activation_apply(act, x); }, {3, 4}, rng),
          off);
  }

  const std::vector<int> labels{2, 0, 3};
  check("cross_entropy", [labels](const Tensor& x) { return loss_task1(x, labels); }, a);
  check("mse", [c](const Tensor& x) { return mse(x, c); }, a);
  check("total_variation", [](const Tensor& x) { return total_variation(x); }, a);
  check("loss_task2", [c](const Tensor& x) { return loss_task2(x, c, 0.3); }, a);

  const Tensor gain = random_tensor({4}, rng, 0.5, 1.5);
  const Tensor shift = random_tensor({4}, rng);
  check("layer_norm", weighted([](const Tensor& x) { return layer_norm(x); }, {3, 4}, rng), a);
  check("batch_norm", weighted([](const Tensor& x) {
          BatchNormStats stats(4);
          return batch_norm(x, stats, true);
        }, {3, 4}, rng),
        a);
  check("affine_columns.input", weighted([gain, shift](const Tensor& x) { return affine_columns(x, gain, shift); },
                                         {3, 4}, rng),
        a);
  check("affine_columns.gain", weighted([a, shift](const Tensor& x) { return affine_columns(a, x, shift); },
                                        {3, 4}, rng),
        gain);
  const Tensor g = Tensor::scalar(1.7);
  check("weight_norm.v", weighted([g](const Tensor& x) { return weight_norm_tensor(x, g); }, {3, 4}, rng), a);
  check("weight_norm.g", weighted([a](const Tensor& x) { return weight_norm_tensor(a, x); }, {3, 4}, rng), g);

  // Three-layer MLP, gradient w.r.t. the input.
  {
    const Arch arch = make_arch(4, {6, 5, 3}, Activation::tanh(), Activation::linear());
    const ParamSet params = init_network(arch, FanMode::FanIn, rng, ParamRole::PrimaryTheta);
    check("mlp3", weighted([arch, params](const Tensor& x) { return mlp_forward(params, arch, x); }, {3, 3}, rng), a);
  }

  // Full hypernetwork-through-primary loss w.r.t. ω, θ⁰ and norm parameters.
  const Tensor x = random_tensor({6, 4}, rng);
  const std::vector<int> y{0, 1, 2, 1, 0, 2};
  const Arch cls = make_arch(4, {5, 3}, Activation::tanh(), Activation::linear());
  const std::vector<std::pair<std::string, std::optional<NormVariant>>> variants{
      {"", std::nullopt},
      {".layernorm_h", NormVariant::parse("layernorm_h")},
      {".batchnorm_p", NormVariant::parse("batchnorm_p")},
      {".layernorm_p", NormVariant::parse("layernorm_p")},
      {".weightnorm", NormVariant::parse("weightnorm")}};
  for (auto mode : {Parametrization::Default, Parametrization::NPA, Parametrization::InputOnly,
                    Parametrization::OutputOnly}) {
    for (const auto& [suffix, variant] : variants) {
      if (variant && mode != Parametrization::Default) continue;
      HypernetOptions opts;
      opts.trunk_activation = Activation::tanh();
      auto hn = hypernet_init(cls, {4, 6}, mode, rng, 2, opts);
      // Nonzero biases so every path carries gradient.
      for (auto& [name, t] : hn.omega) {
        auto d = t.mutable_data();
        for (auto& v : d) v += 0.1 * rng.uniform(-1.0, 1.0);
      }
      auto m = attach_norm(variant, std::move(hn), cls);
      const GammaSample gamma({0.3, 0.8});
      auto loss = [&m, &gamma, &x, &y]() {
        const ParamSet theta = predict(m, gamma);
        return loss_task1(primary_forward(m, {&theta}, x, true), y);
      };
      out.push_back({"hypernet." + to_string(mode) + suffix, finite_diff_check_params(loss, m.parameters(), h)});
    }
  }
  return out;
}

}  // namespace hyperstab
