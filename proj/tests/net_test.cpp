// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <vector>

#include "hybridnet/error.hpp"
#include "hybridnet/kernels.hpp"
#include "hybridnet/models.hpp"
#include "hybridnet/net_config.hpp"
#include "hybridnet/network.hpp"
#include "hybridnet/random.hpp"
#include "testing.hpp"

namespace hybridnet {
namespace {

using testing::random_tensor;

std::map<std::string, std::size_t> weights_by_name(const LayerSpec& root) {
  std::map<std::string, std::size_t> out;
  for (const auto& l : flatten(root)) {
    if (l.kind() == LayerKind::Conv || l.kind() == LayerKind::Linear) out[l.name] = weight_count(l);
  }
  return out;
}

TEST(Models, VggVariantMatchesPublishedWeightCounts) {
  const auto w = weights_by_name(build_vgg_variant().root);
  const std::map<std::string, std::size_t> table{
      {"Conv0", 1728},   {"Conv1", 36864},  {"Conv2", 73728},     {"Conv3", 147456},
      {"Conv4", 294912}, {"Conv5", 589824}, {"Conv6", 589824},    {"FC0", 4194304},
      {"FC1", 1048576},  {"FC2", 10240},
  };
  EXPECT_EQ(w, table);
}

TEST(Models, VggBiasesAreCountedSeparately) {
  const auto root = build_vgg_variant().root;
  std::size_t weights = 0, params = 0;
  for (const auto& l : flatten(root)) {
    weights += weight_count(l);
    params += parameter_count(l);
  }
  EXPECT_EQ(weights, 6987456u);
  EXPECT_EQ(params - weights, 64u + 64 + 128 + 128 + 256 + 256 + 256 + 1024 + 1024 + 10);
}

TEST(Models, ShapesFlowToTheClassifier) {
  const auto m = build_vgg_variant(32);
  EXPECT_EQ(output_shape(m.root, m.input), (Shape{10}));
  const auto small = build_vgg_variant(8);
  EXPECT_EQ(output_shape(small.root, small.input), (Shape{10}));
  EXPECT_THROW(build_vgg_variant(12), ValueError);
  const auto toy = build_toy_cnn();
  std::size_t params = 0;
  for (const auto& l : flatten(toy.root)) params += parameter_count(l);
  EXPECT_GT(params, 45000u);
  EXPECT_LT(params, 60000u);
}

TEST(Models, MismatchedLayerShapesThrow) {
  const auto bad = LayerSpec::seq({LayerSpec::reshape(), LayerSpec::linear(10, 4)});
  EXPECT_THROW(output_shape(bad, Shape{3, 2, 2}), ShapeError);
}

TEST(Network, OutputRowsAreNormalized) {
  const auto m = build_vgg_variant();
  Network<float> net(m.root, m.input, 3);
  const auto out = net.fprop(testing::random_tensor_f(m.input.prepend(1), 1), StepContext{false, false});
  ASSERT_EQ(out.shape(), (Shape{1, 10}));
  double s = 0;
  for (float v : out.vec()) s += std::exp(static_cast<double>(v));
  EXPECT_NEAR(s, 1.0, 1e-6);
}

TEST(Network, ZeroWeightsGiveUniformLogProbs) {
  const auto m = build_toy_cnn();
  Network<double> net(m.root, m.input, 3);
  for (auto* p : net.parameters()) p->value.fill(0.0);
  const auto out = net.fprop(random_tensor(m.input.prepend(2), 4));
  for (double v : out.vec()) EXPECT_NEAR(v, -std::log(8.0), 1e-15);
  const std::vector<std::size_t> t{1, 5};
  EXPECT_NEAR(net.bprop(t), std::log(8.0), 1e-15);
}

TEST(Network, FixedSeedIsBitReproducible) {
  const auto m = build_toy_cnn();
  const auto x = testing::random_tensor_f(m.input.prepend(4), 5);
  Network<float> a(m.root, m.input, 11);
  Network<float> b(m.root, m.input, 11);
  const StepContext ctx{true, true, 9, 0, 0, 0};
  EXPECT_EQ(a.fprop(x, ctx).vec(), b.fprop(x, ctx).vec());
  Network<float> c(m.root, m.input, 12);
  EXPECT_NE(a.fprop(x, ctx).vec(), c.fprop(x, ctx).vec());
}

TEST(Network, BpropWithoutFpropThrows) {
  const auto m = build_toy_cnn();
  Network<double> net(m.root, m.input, 1);
  const std::vector<std::size_t> t{0};
  EXPECT_THROW(net.bprop(t), StateError);
  EXPECT_THROW(net.fprop(Tensor<double>(Shape{1, 3, 8, 8})), ShapeError);
}

// Every parameter gradient of a small conv+linear net against central
// differences of the loss.
TEST(Network, ParameterGradientsMatchFiniteDifferences) {
  using L = LayerSpec;
  const auto root = L::seq({L::conv(2, 3, 3, 1, 1, "c"), L::relu(), L::pooling(2, 2), L::reshape(),
                            L::linear(12, 5, "f0"), L::relu(), L::linear(5, 3, "f1"), L::log_softmax()});
  const Shape input{2, 4, 4};
  Network<double> net(root, input, 21);
  const auto x = random_tensor(input.prepend(3), 22);
  const std::vector<std::size_t> t{0, 2, 1};
  const StepContext ctx{true, false};
  net.zero_grad();
  net.fprop(x, ctx);
  net.bprop(t);
  for (auto* p : net.parameters()) {
    const Tensor<double> analytic = p->grad;
    auto loss_at = [&](const Tensor<double>& v) {
      const Tensor<double> keep = p->value;
      p->value = v;
      const auto out = net.fprop(x, ctx);
      p->value = keep;
      return kernels::nll_loss(out, std::span<const std::size_t>(t));
    };
    const auto numeric = testing::numeric_gradient(loss_at, p->value);
    EXPECT_LT(testing::rel_error(analytic.vec(), numeric, 1e-2), 1e-5);
  }
}

TEST(Network, ZeroLearningRateLeavesParameters) {
  const auto m = build_toy_cnn();
  Network<double> net(m.root, m.input, 2);
  std::vector<Tensor<double>> before;
  for (auto* p : net.parameters()) before.push_back(p->value);
  net.fprop(random_tensor(m.input.prepend(2), 3));
  const std::vector<std::size_t> t{0, 1};
  net.bprop(t);
  net.sgd_step(0.0);
  std::size_t i = 0;
  for (auto* p : net.parameters()) EXPECT_EQ(p->value.vec(), before[i++].vec());
}

TEST(Network, SgdStepOnAScalar) {
  Network<double> net(LayerSpec::seq({LayerSpec::linear(1, 1), LayerSpec::log_softmax()}), Shape{1}, 0);
  auto params = net.parameters();
  params[0]->value[0] = 1.0;
  params[0]->grad[0] = 2.0;
  params[1]->grad.fill(0.0);
  net.sgd_step(0.1);
  EXPECT_DOUBLE_EQ(params[0]->value[0], 0.8);
}

TEST(Network, LearnsALinearlySeparableToy) {
  const auto root = LayerSpec::seq({LayerSpec::linear(2, 8), LayerSpec::relu(), LayerSpec::linear(8, 2),
                                    LayerSpec::log_softmax()});
  Network<double> net(root, Shape{2}, 4, 0.1);
  Rng rng(99);
  Tensor<double> x(Shape{64, 2});
  std::vector<std::size_t> y(64);
  for (std::size_t i = 0; i < 64; ++i) {
    x.at(i, 0) = rng.uniform(-1, 1);
    x.at(i, 1) = rng.uniform(-1, 1);
    y[i] = x.at(i, 0) + 0.5 * x.at(i, 1) > 0 ? 1 : 0;
  }
  const StepContext ctx{true, false};
  for (int s = 0; s < 200; ++s) {
    net.zero_grad();
    net.fprop(x, ctx);
    net.bprop(y);
    net.sgd_step();
  }
  EXPECT_GE(accuracy(net.fprop(x, ctx), std::span<const std::size_t>(y)), 0.95);
}

TEST(NetConfig, RoundTripsTheVggVariant) {
  const auto m = build_vgg_variant(16);
  const std::string text = to_net_config(m);
  const auto back = parse_net_config_string(text);
  EXPECT_EQ(back.input, m.input);
  EXPECT_EQ(back.classes, 10u);
  EXPECT_EQ(to_net_config(back), text);
  EXPECT_EQ(weights_by_name(back.root), weights_by_name(m.root));
}

TEST(NetConfig, ErrorsCarryLineNumbers) {
  try {
    parse_net_config_string("input 3 8 8\nconv in=3 out=4 kernel=3\nwobble\n");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_net_config_string("conv in=3 out=4 kernel=3\n"), FormatError);
}

TEST(NetConfig, ResolvesBuiltInNames) {
  EXPECT_EQ(resolve_model("vgg").input, (Shape{3, 32, 32}));
  EXPECT_EQ(resolve_model("vgg:8").input, (Shape{3, 8, 8}));
  EXPECT_EQ(resolve_model("toy").classes, 8u);
  EXPECT_THROW(resolve_model("vgg:x"), ConfigError);
  EXPECT_THROW(resolve_model("/nonexistent/net.txt"), ConfigError);
}

}  // namespace
}  // namespace hybridnet
