#include <gtest/gtest.h>

#include <cmath>

#include "hyperstab/diagnostics.hpp"

using namespace hyperstab;

namespace {

const Arch kPrimary = make_arch(10, {12, 4}, Activation::relu(), Activation::linear());

InstrumentedModel model(Parametrization mode, std::uint64_t seed) {
  Rng rng(seed);
  return attach_norm(std::nullopt, hypernet_init(kPrimary, {16, 128}, mode, rng), kPrimary);
}

std::vector<double> grid() {
  std::vector<double> g;
  for (int i = 1; i <= 10; ++i) g.push_back(0.1 * i);
  return g;
}

}  // namespace

TEST(Sweep, DefaultRowsScaleWithGamma) {
  const auto m = model(Parametrization::Default, 0);
  const auto rows = weight_std_sweep(m, grid());
  const double s1 = rows.back().stdev;
  for (const auto& r : rows) EXPECT_LE(std::abs(r.stdev - r.gamma * s1), 1e-10 * r.gamma * s1) << r.gamma;
  const auto zero = weight_std_sweep(m, {0.0});
  EXPECT_EQ(zero[0].stdev, 0.0);
  EXPECT_EQ(zero[0].l2, 0.0);
}

TEST(Sweep, NpaRowsAreNearlyFlat) {
  const auto rows = weight_std_sweep(model(Parametrization::NPA, 1), grid());
  double lo = 1e300, hi = 0.0;
  for (const auto& r : rows) {
    lo = std::min(lo, r.stdev);
    hi = std::max(hi, r.stdev);
  }
  EXPECT_LT(hi / lo, 2.0);
}

TEST(Sweep, ProbeAndSamples) {
  const auto m = model(Parametrization::Default, 2);
  SweepOptions opts;
  std::vector<double> xv(30);
  for (std::size_t i = 0; i < xv.size(); ++i) xv[i] = std::sin(static_cast<double>(i));
  opts.probe = Tensor::from({3, 10}, xv);
  opts.sample_cap = 5;
  const auto rows = weight_std_sweep(m, {0.5, 1.0}, opts);
  ASSERT_EQ(rows[0].activation_stdev.size(), 2u);
  ASSERT_EQ(rows[0].samples.size(), 4u);
  EXPECT_EQ(rows[0].samples[0].second.size(), 5u);
  EXPECT_EQ(rows[0].samples[1].second.size(), 5u);
  // θ (weights and biases) is linear in γ, so the first ReLU layer is too
  EXPECT_NEAR(rows[0].activation_stdev[0], 0.5 * rows[1].activation_stdev[0], 1e-12 * rows[1].activation_stdev[0]);
  EXPECT_THROW(weight_std_sweep(m, {}), ConfigError);
}

TEST(Sweep, DoesNotMutateModelAndIsReproducible) {
  auto m = attach_norm(NormVariant::parse("batchnorm_p"), model(Parametrization::NPA, 3).hypernet, kPrimary);
  const auto before = state_hash(m);
  SweepOptions opts;
  opts.probe = Tensor::full({4, 10}, 0.5);
  const auto a = weight_std_sweep(m, grid(), opts);
  const auto b = weight_std_sweep(m, grid(), opts);
  EXPECT_EQ(state_hash(m), before);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].stdev, b[i].stdev);
    EXPECT_EQ(a[i].activation_stdev, b[i].activation_stdev);
  }
}

TEST(Fit, DefaultIsAnExactLine) {
  const auto fit = fit_proportionality(weight_std_sweep(model(Parametrization::Default, 4), grid()));
  EXPECT_GT(fit.r2, 0.9999);
  EXPECT_LT(std::abs(fit.intercept), 1e-8 * fit.slope);
}

TEST(Fit, NpaSlopeIsSmallRelativeToMean) {
  const auto fit = fit_proportionality(weight_std_sweep(model(Parametrization::NPA, 5), grid()));
  EXPECT_LT(std::abs(fit.slope) / fit.mean, 0.5);
}

TEST(Fit, ConventionsAndErrors) {
  std::vector<SweepRow> constant(4);
  for (std::size_t i = 0; i < 4; ++i) {
    constant[i].gamma = 0.1 * static_cast<double>(i + 1);
    constant[i].stdev = 0.3;
  }
  const auto fit = fit_proportionality(constant);
  EXPECT_EQ(fit.slope, 0.0);
  EXPECT_EQ(fit.r2, 0.0);
  EXPECT_THROW(fit_proportionality({constant[0], constant[1]}), ConfigError);
  std::vector<SweepRow> same(3);
  for (auto& r : same) r.gamma = 0.5;
  EXPECT_THROW(fit_proportionality(same), ConfigError);
}

TEST(GradTrace, Summaries) {
  const auto zero = summarize_grad_norms(0, {0.0, 0.0, 0.0});
  EXPECT_EQ(zero.mean, 0.0);
  EXPECT_EQ(zero.cv, 0.0);
  const auto single = summarize_grad_norms(1, {2.5});
  EXPECT_EQ(single.stdev, 0.0);
  const auto t = summarize_grad_norms(0, {1.0, 3.0});
  EXPECT_DOUBLE_EQ(t.mean, 2.0);
  EXPECT_DOUBLE_EQ(t.stdev, 1.0);
  EXPECT_DOUBLE_EQ(t.cv, 0.5);
  const auto traces = grad_norm_trace({{0, 1.0}, {0, 3.0}, {1, 2.0}});
  ASSERT_EQ(traces.size(), 2u);
  EXPECT_EQ(traces[0].norms.size(), 2u);
  EXPECT_EQ(traces[1].epoch, 1u);
}

TEST(GradTrace, ThetaGradNormReadsRetainedGradients) {
  auto m = model(Parametrization::Default, 6);
  std::vector<ParamSet> thetas{predict(m, GammaSample({0.5}))};
  for (auto& [name, t] : thetas[0]) t.retain_grad();
  backward(scale(sum(thetas[0].get("L1.b")), 2.0));
  // only L1.b (4 entries) has gradient 2 each
  EXPECT_DOUBLE_EQ(theta_grad_norm(thetas), 4.0);
}
