#include <gtest/gtest.h>

#include <cmath>

#include "hyperstab/activation.hpp"
#include "hyperstab/layers.hpp"

using namespace hyperstab;

namespace {

double sample_stdev(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

TEST(Activation, GainTable) {
  EXPECT_DOUBLE_EQ(Activation::linear().gain_squared(), 1.0);
  EXPECT_DOUBLE_EQ(Activation::tanh().gain_squared(), 1.0);
  EXPECT_DOUBLE_EQ(Activation::relu().gain_squared(), 2.0);
  EXPECT_DOUBLE_EQ(Activation::leaky_relu(0.01).gain_squared(), 2.0 / (1.0 + 0.01 * 0.01));
}

TEST(Activation, LeakyReluValues) {
  const auto y = activation_apply(Activation::leaky_relu(0.01), Tensor::from({2}, {-1.0, 2.0}));
  EXPECT_DOUBLE_EQ(y[0], -0.01);
  EXPECT_DOUBLE_EQ(y[1], 2.0);
}

TEST(Activation, HomogeneityOfPiecewiseLinear) {
  const std::vector<double> xs{-3.0, -0.25, 0.0, 0.7, 5.0};
  for (const auto& act : {Activation::relu(), Activation::leaky_relu(0.01)}) {
    EXPECT_TRUE(act.positively_homogeneous());
    for (double alpha : {0.1, 0.5, 3.0})
      for (double x : xs) {
        const double lhs = detail::activation_value(act, alpha * x);
        const double rhs = alpha * detail::activation_value(act, x);
        EXPECT_LE(std::abs(lhs - rhs), 1e-15 * std::max(1.0, std::abs(rhs)));
      }
  }
}

TEST(Activation, SmoothActivationsAreNotHomogeneous) {
  EXPECT_FALSE(Activation::tanh().positively_homogeneous());
  EXPECT_FALSE(Activation::gelu().positively_homogeneous());
  EXPECT_FALSE(Activation::silu().positively_homogeneous());
  EXPECT_NEAR(detail::activation_value(Activation::tanh(), 2.0), 0.96403, 1e-5);
  EXPECT_NEAR(2.0 * detail::activation_value(Activation::tanh(), 1.0), 1.52318, 1e-5);
}

TEST(Activation, GeluIsTheErfForm) {
  for (double x : {-2.0, -0.5, 0.0, 0.3, 1.7}) {
    const double expected = 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
    EXPECT_DOUBLE_EQ(detail::activation_value(Activation::gelu(), x), expected);
  }
}

TEST(Activation, ParseRoundTrip) {
  for (const auto& act : {Activation::linear(), Activation::relu(), Activation::leaky_relu(0.01), Activation::tanh(),
                          Activation::gelu(), Activation::silu()}) {
    EXPECT_EQ(Activation::parse(act.name()), act);
  }
  EXPECT_THROW(Activation::parse("swish2"), ConfigError);
}

TEST(Kaiming, StdevMatchesGainOverFan) {
  Rng rng(1);
  const auto fan_in = kaiming_init(128, 16, FanMode::FanIn, Activation::relu(), rng);
  const auto fan_out = kaiming_init(128, 16, FanMode::FanOut, Activation::relu(), rng);
  // σ = sqrt(2/16) and sqrt(2/128); 2048 samples here, the 1e5 check is below
  EXPECT_NEAR(sample_stdev(fan_in.weight.data()), 0.3536, 0.3536 * 0.05);
  EXPECT_NEAR(sample_stdev(fan_out.weight.data()), 0.125, 0.125 * 0.05);
  for (double b : fan_in.bias.values()) EXPECT_EQ(b, 0.0);
}

TEST(Kaiming, LargeSampleWithinTwoPercent) {
  Rng rng(2);
  const auto layer = kaiming_init(400, 250, FanMode::FanIn, Activation::relu(), rng);  // 1e5 samples
  const double expected = std::sqrt(2.0 / 250.0);
  EXPECT_NEAR(sample_stdev(layer.weight.data()), expected, 0.02 * expected);
  const auto out = kaiming_init(400, 250, FanMode::FanOut, Activation::leaky_relu(0.01), rng);
  const double expected_out = std::sqrt(2.0 / (1.0 + 1e-4) / 400.0);
  EXPECT_NEAR(sample_stdev(out.weight.data()), expected_out, 0.02 * expected_out);
}

TEST(Layers, ParamSpecNamesAndShapes) {
  const Arch arch = make_arch(784, {64, 10}, Activation::relu(), Activation::linear());
  const auto spec = param_spec_of(arch);
  ASSERT_EQ(spec.size(), 4u);
  EXPECT_EQ(spec[0].name, "L0.W");
  EXPECT_EQ(spec[0].shape, (Shape{64, 784}));
  EXPECT_EQ(spec[1].name, "L0.b");
  EXPECT_EQ(spec[1].shape, (Shape{64}));
  EXPECT_EQ(spec[2].name, "L1.W");
  EXPECT_EQ(spec[2].shape, (Shape{10, 64}));
  EXPECT_EQ(spec[3].name, "L1.b");
  EXPECT_EQ(spec[3].shape, (Shape{10}));
}

TEST(Layers, ValidateArchRejectsBrokenChain) {
  Arch arch = make_arch(4, {3, 2}, Activation::relu(), Activation::linear());
  arch[1].in_dim = 5;
  EXPECT_THROW(validate_arch(arch), DimensionError);
}

TEST(Layers, MlpForwardMatchesHandComputation) {
  const Arch arch = make_arch(2, {2, 1}, Activation::relu(), Activation::linear());
  ParamSet p;
  p.add("L0.W", Tensor::from({2, 2}, {1, -1, 2, 0.5}));
  p.add("L0.b", Tensor::from({2}, {0.0, -1.0}));
  p.add("L1.W", Tensor::from({1, 2}, {3, -2}));
  p.add("L1.b", Tensor::from({1}, {0.5}));
  const auto y = mlp_forward(p, arch, Tensor::from({1, 2}, {1.0, 2.0}));
  // hidden = relu([1-2, 2+1-1]) = [0, 2]; out = 0*3 + 2*(-2) + 0.5
  EXPECT_DOUBLE_EQ(y.item(), -3.5);
}

TEST(Layers, MlpForwardErrorNamesLayer) {
  const Arch arch = make_arch(3, {4, 2}, Activation::relu(), Activation::linear());
  Rng rng(0);
  ParamSet p = init_network(arch, FanMode::FanIn, rng);
  p.replace("L1.b", Tensor::zeros({2}));
  ParamSet bad;
  bad.add("L0.W", p.get("L0.W"));
  bad.add("L0.b", p.get("L0.b"));
  bad.add("L1.W", Tensor::zeros({2, 5}));
  bad.add("L1.b", p.get("L1.b"));
  try {
    mlp_forward(bad, arch, Tensor::zeros({1, 3}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos) << e.what();
  }
}

TEST(Layers, ZeroBiasReluNetIsHomogeneous) {
  Rng rng(3);
  for (const auto& act : {Activation::relu(), Activation::leaky_relu(0.01)}) {
    const Arch arch = make_arch(5, {8, 8, 3}, act, Activation::linear());
    const ParamSet p = init_network(arch, FanMode::FanIn, rng);
    std::vector<double> xv(10);
    for (auto& v : xv) v = rng.uniform(-1.0, 1.0);
    const auto x = Tensor::from({2, 5}, xv);
    const auto base = mlp_forward(p, arch, x);
    for (double alpha : {0.1, 0.37, 2.5}) {
      const auto scaled = mlp_forward(p, arch, scale(x, alpha));
      for (std::size_t i = 0; i < base.numel(); ++i) {
        EXPECT_LE(std::abs(scaled[i] - alpha * base[i]), 1e-12 * std::abs(alpha * base[i]))
            << act.name() << " alpha " << alpha;
      }
    }
  }
}

TEST(Layers, GroupedForwardMatchesPerGroupForward) {
  Rng rng(4);
  const Arch arch = make_arch(3, {4, 2}, Activation::relu(), Activation::linear());
  const ParamSet p1 = init_network(arch, FanMode::FanIn, rng);
  const ParamSet p2 = init_network(arch, FanMode::FanIn, rng);
  const auto x = Tensor::from({4, 3}, {1, 2, 3, -1, 0, 1, 0.5, 0.5, 0.5, 2, -2, 1});
  const auto y = mlp_forward_grouped({&p1, &p2}, arch, x);
  const auto top = mlp_forward(p1, arch, slice_rows(x, 0, 2));
  const auto bottom = mlp_forward(p2, arch, slice_rows(x, 2, 4));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(y[i], top[i]);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(y[4 + i], bottom[i]);
  EXPECT_THROW(mlp_forward_grouped({&p1, &p2, &p1}, arch, x), DimensionError);
}
