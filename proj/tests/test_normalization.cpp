#include <gtest/gtest.h>

#include <cmath>

#include "hyperstab/gradcheck.hpp"
#include "hyperstab/normalization.hpp"

using namespace hyperstab;

namespace {

const Arch kPrimary = make_arch(784, {64, 10}, Activation::relu(), Activation::linear());

HypernetModel hn(Parametrization mode, std::uint64_t seed, const Arch& primary = kPrimary) {
  Rng rng(seed);
  return hypernet_init(primary, {16, 128}, mode, rng);
}

}  // namespace

TEST(BatchNorm, TwoRowExample) {
  BatchNormStats stats(1);
  const auto y = batch_norm(Tensor::from({2, 1}, {1.0, 3.0}), stats, true);
  // (±1)/sqrt(1 + 1e-5)
  EXPECT_NEAR(y[0], -1.0 / std::sqrt(1.0 + 1e-5), 1e-15);
  EXPECT_NEAR(y[1], 1.0 / std::sqrt(1.0 + 1e-5), 1e-15);
  EXPECT_NEAR(stats.running_mean[0], 0.2, 1e-15);
  EXPECT_NEAR(stats.running_var[0], 0.9 + 0.1 * 1.0, 1e-15);
}

TEST(BatchNorm, ScaleInvariantAndBatchOfOneRejected) {
  BatchNormStats s1(3), s2(3);
  const auto x = Tensor::from({4, 3}, {1, 2, 3, -1, 0.5, 2, 0.3, -2, 1, 4, 1, -1});
  const auto a = batch_norm(x, s1, true, 1e-12);
  const auto b = batch_norm(scale(x, 7.5), s2, true, 1e-12);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-10);
  EXPECT_THROW(batch_norm(Tensor::zeros({1, 3}), s1, true), DimensionError);
  EXPECT_NO_THROW(batch_norm(Tensor::zeros({1, 3}), s1, false));
}

TEST(BatchNorm, EvalUsesRunningStats) {
  BatchNormStats stats(1);
  stats.running_mean = {2.0};
  stats.running_var = {4.0};
  const auto y = batch_norm(Tensor::from({1, 1}, {6.0}), stats, false, 1e-5);
  EXPECT_NEAR(y[0], 4.0 / std::sqrt(4.0 + 1e-5), 1e-15);
}

TEST(LayerNorm, TwoFeatureExample) {
  const auto y = layer_norm(Tensor::from({1, 2}, {2.0, 4.0}));
  EXPECT_NEAR(y[0], -1.0 / std::sqrt(1.0 + 1e-5), 1e-15);
  EXPECT_NEAR(y[1], 1.0 / std::sqrt(1.0 + 1e-5), 1e-15);
  EXPECT_THROW(layer_norm(Tensor::zeros({3, 1})), DimensionError);
}

TEST(WeightNorm, ValuesAndZeroNorm) {
  const auto y = weight_norm_tensor(Tensor::from({2}, {3.0, 4.0}), Tensor::scalar(5.0));
  EXPECT_DOUBLE_EQ(y[0], 3.0);
  EXPECT_DOUBLE_EQ(y[1], 4.0);
  EXPECT_THROW(weight_norm_tensor(Tensor::zeros({2}), Tensor::scalar(1.0)), ConfigError);
}

TEST(Normalization, Gradients) {
  const auto x = Tensor::from({3, 4}, {0.1, -0.5, 0.9, 0.3, 1.2, 0.4, -0.7, 0.05, -1.1, 0.6, 0.2, 0.8});
  const auto w = Tensor::from({3, 4}, {1, -2, 0.5, 3, 0.25, 1, -1, 2, 0.7, -0.3, 1.5, -0.8});
  EXPECT_LT(finite_diff_check([&](const Tensor& t) { return sum(mul(layer_norm(t), w)); }, x), 1e-6);
  EXPECT_LT(finite_diff_check([&](const Tensor& t) {
              BatchNormStats s(4);
              return sum(mul(batch_norm(t, s, true), w));
            }, x),
            1e-6);
  EXPECT_LT(finite_diff_check([&](const Tensor& t) { return sum(mul(weight_norm_tensor(t, Tensor::scalar(2.0)), w)); },
                              x),
            1e-6);
}

TEST(AttachNorm, SiteCounts) {
  const auto ln_h = attach_norm(NormVariant::parse("layernorm_h"), hn(Parametrization::Default, 0), kPrimary);
  EXPECT_EQ(ln_h.sites.size(), 2u);
  EXPECT_EQ(ln_h.norm_params.size(), 4u);  // gain and shift per site

  const auto wn = attach_norm(NormVariant::parse("weightnorm"), hn(Parametrization::Default, 0), kPrimary);
  EXPECT_EQ(wn.sites.size(), 4u);
  EXPECT_EQ(wn.norm_params.size(), 4u);

  const auto bn = attach_norm(NormVariant::parse("batchnorm_p"), hn(Parametrization::Default, 0), kPrimary);
  EXPECT_EQ(bn.sites.size(), 1u);
  EXPECT_EQ(bn.bn_stats.size(), 1u);

  const Arch linear_only = make_arch(4, {3}, Activation::relu(), Activation::linear());
  EXPECT_THROW(attach_norm(NormVariant::parse("batchnorm_p"), hn(Parametrization::Default, 0, linear_only),
                           linear_only),
               ConfigError);
  EXPECT_THROW(NormVariant::parse("groupnorm"), ConfigError);
}

TEST(AttachNorm, NoVariantLeavesModelUnchanged) {
  auto base = hn(Parametrization::Default, 1);
  const auto m = attach_norm(std::nullopt, base, kPrimary);
  EXPECT_EQ(m.parameter_count(), base.parameter_count());
  EXPECT_EQ(predict(m, GammaSample({0.4})).flatten(), predict_params(base, GammaSample({0.4})).flatten());
}

TEST(AttachNorm, LayerNormHRemovesGammaDependence) {
  NormVariant v = NormVariant::parse("layernorm_h");
  v.epsilon = 1e-20;
  const auto m = attach_norm(v, hn(Parametrization::Default, 2), kPrimary);
  const auto ref = predict(m, GammaSample({1.0})).flatten();
  for (int i = 1; i < 10; ++i) {
    const auto theta = predict(m, GammaSample({0.1 * i})).flatten();
    double worst = 0.0;
    for (std::size_t k = 0; k < theta.size(); ++k) worst = std::max(worst, std::abs(theta[k] - ref[k]));
    EXPECT_LE(worst, 1e-9);
  }
}

TEST(AttachNorm, WeightNormGainStartsAtPredictedNorm) {
  const auto m = attach_norm(NormVariant::parse("weightnorm"), hn(Parametrization::Default, 3), kPrimary);
  const auto raw = predict_params(m.hypernet, GammaSample({1.0}));
  const auto normed = predict(m, GammaSample({1.0}));
  for (const auto& [name, t] : raw) {
    const auto& n = normed.get(name);
    for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_NEAR(n[i], t[i], 1e-12 * std::max(1.0, std::abs(t[i])));
  }
}

TEST(AttachNorm, AffineParametersReceiveGradients) {
  const Arch small = make_arch(5, {4, 3}, Activation::relu(), Activation::linear());
  Rng rng(4);
  auto m = attach_norm(NormVariant::parse("batchnorm_p"), hypernet_init(small, {6, 8}, Parametrization::Default, rng),
                       small);
  const auto theta = predict(m, GammaSample({0.5}));
  const auto x = Tensor::from({3, 5}, {1, 2, 3, 4, 5, -1, 0, 1, 2, 0.5, 0.1, 0.2, -0.3, 0.4, 0.5});
  backward(sum_squares(primary_forward(m, {&theta}, x, true)));
  for (const auto& [name, t] : m.norm_params) EXPECT_TRUE(t.has_grad()) << name;
}
