#include <gtest/gtest.h>

#include <cmath>

#include "pavepci/backbones.hpp"
#include "pavepci/gradient_check.hpp"
#include "test_util.hpp"

namespace pavepci {
namespace {

using testing::random_tensor;

// Published torchvision counts for the 1000-class models; the scalar head
// replaces the last layer's (features*1000 + 1000) with (features + 1).
constexpr std::size_t kTorchvisionResnet50 = 25'557'032;
constexpr std::size_t kTorchvisionDensenet161 = 28'681'000;

std::size_t scalar_head_count(std::size_t published, std::size_t features) {
  return published - (features * 1000 + 1000) + (features + 1);
}

Model make(Family f, std::uint64_t seed = 5) {
  return build_model(ArchitectureSpec::for_family(f), seed);
}

TEST(Backbones, FamilyNamesRoundTrip) {
  for (Family f : {Family::resnet50, Family::resnet50_cbam, Family::densenet161}) {
    EXPECT_EQ(parse_family(to_string(f)), f);
  }
  EXPECT_THROW(parse_family("vgg16"), ConfigError);
}

TEST(Backbones, SpecValidation) {
  auto spec = ArchitectureSpec::for_family(Family::resnet50);
  spec.stage_depths = {3, 4, 23, 3};
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = ArchitectureSpec::for_family(Family::resnet50_cbam);
  spec.spatial_kernel = 4;
  EXPECT_THROW(build_model(spec), ConfigError);
}

TEST(Backbones, SixteenBottlenecksAndCbamBlocks) {
  Model plain = make(Family::resnet50);
  Model cbam = make(Family::resnet50_cbam);
  auto& plain_net = dynamic_cast<ResNet<float>&>(plain.network());
  auto& cbam_net = dynamic_cast<ResNet<float>&>(cbam.network());
  EXPECT_EQ(plain_net.bottlenecks().size(), 3u + 4 + 6 + 3);
  EXPECT_EQ(cbam_net.bottlenecks().size(), 16u);
  EXPECT_EQ(plain.cbam_blocks().size(), 0u);
  ASSERT_EQ(cbam.cbam_blocks().size(), 16u);
  for (Bottleneck<float>* b : cbam_net.bottlenecks()) {
    ASSERT_NE(b->cbam(), nullptr);
    EXPECT_EQ(b->cbam()->channels(), b->spec().out_channels);
    EXPECT_EQ(b->spec().out_channels, 4 * b->spec().mid_channels);
  }
}

TEST(Backbones, ResnetFeatureShapeAt224) {
  Model model = make(Family::resnet50_cbam);
  model.set_training(false);
  const auto x = random_tensor<float>({1, 3, 224, 224}, 3);
  EXPECT_EQ(model.network().features(x).shape(), (Shape{1, 2048, 7, 7}));
}

TEST(Backbones, DensenetFeatureShapeAt224) {
  Model model = make(Family::densenet161);
  model.set_training(false);
  const auto x = random_tensor<float>({1, 3, 224, 224}, 3);
  EXPECT_EQ(model.network().features(x).shape(), (Shape{1, 2208, 7, 7}));
}

TEST(Backbones, ParameterCountsMatchPublishedArchitectures) {
  Model r = make(Family::resnet50);
  Model d = make(Family::densenet161);
  EXPECT_EQ(count_parameters(r).total, scalar_head_count(kTorchvisionResnet50, 2048));
  EXPECT_EQ(count_parameters(r).total, 23'510'081u);
  EXPECT_EQ(count_parameters(r).head, 2049u);
  EXPECT_EQ(count_parameters(d).total, scalar_head_count(kTorchvisionDensenet161, 2208));
  EXPECT_EQ(count_parameters(d).head, 2209u);
}

TEST(Backbones, CbamOverheadMatchesClosedForm) {
  Model r = make(Family::resnet50);
  Model c = make(Family::resnet50_cbam);
  std::size_t closed = 0;
  const int channels[] = {256, 512, 1024, 2048};
  const int depths[] = {3, 4, 6, 3};
  for (int s = 0; s < 4; ++s) {
    const std::size_t ch = channels[s];
    closed += depths[s] * (2 * ch * ch / 16 + 7 * 7 * 2 + 1);
  }
  const auto rc = count_parameters(r);
  const auto cc = count_parameters(c);
  EXPECT_EQ(cc.total - rc.total, closed);
  EXPECT_EQ(cc.cbam, closed);
  EXPECT_EQ(resnet50_cbam_overhead(16, 7), closed);
  EXPECT_EQ(cc.backbone, rc.backbone);
  EXPECT_NEAR(static_cast<double>(closed), 2.53e6, 0.02e6);
  EXPECT_LT(static_cast<double>(closed) / rc.total, 0.12);
}

TEST(Backbones, BreakdownSumsToTotal) {
  Model c = make(Family::resnet50_cbam);
  const auto count = count_parameters(c);
  std::size_t sum = 0;
  for (const auto& [name, n] : count.by_submodule) sum += n;
  EXPECT_EQ(sum, count.total);
  EXPECT_EQ(count.by_submodule.at("fc"), 2049u);
}

TEST(Backbones, DenseLayerInputsGrowByGrowthRate) {
  Model d = make(Family::densenet161);
  auto& net = dynamic_cast<DenseNet<float>&>(d.network());
  const auto inputs = net.dense_layer_input_channels();
  const int layers[] = {6, 12, 36, 24};
  int initial = 96;
  ASSERT_EQ(inputs.size(), 4u);
  for (int b = 0; b < 4; ++b) {
    ASSERT_EQ(inputs[b].size(), static_cast<std::size_t>(layers[b]));
    for (int i = 0; i < layers[b]; ++i) EXPECT_EQ(inputs[b][i], initial + i * 48);
    const int out = initial + layers[b] * 48;
    initial = b < 3 ? out / 2 : out;
  }
  EXPECT_EQ(initial, 2208);
}

TEST(Backbones, DenseBlockConcatenatesInputs) {
  DenseBlock<double> block(3, 5, 4, 2);
  initialize_parameters(block, 8);
  const auto x = random_tensor<double>({2, 5, 4, 4}, 4);
  const auto y = block.forward(x);
  ASSERT_EQ(y.shape(), (Shape{2, 5 + 3 * 4, 4, 4}));
  // The block input is carried through unchanged as the first channels.
  for (int b = 0; b < 2; ++b) {
    for (int c = 0; c < 5; ++c) {
      for (int i = 0; i < 16; ++i) EXPECT_EQ(y.plane(b, c)[i], x.plane(b, c)[i]);
    }
  }
}

TEST(Backbones, BottleneckShapes) {
  BottleneckSpec same{16, 4, 16, 1, true, false, 4, 7};
  Bottleneck<float> keep(same);
  EXPECT_EQ(keep.forward(random_tensor<float>({2, 16, 9, 9}, 1)).shape(), (Shape{2, 16, 9, 9}));
  BottleneckSpec down{16, 8, 32, 2, false, true, 16, 7};
  Bottleneck<float> halve(down);
  initialize_parameters(halve, 3);
  EXPECT_EQ(halve.forward(random_tensor<float>({2, 16, 10, 10}, 1)).shape(),
            (Shape{2, 32, 5, 5}));
}

TEST(Backbones, BottleneckWithCbamGradientCheck) {
  BottleneckSpec spec{8, 2, 8, 1, true, false, 2, 3};
  Bottleneck<double> block(spec);
  initialize_parameters(block, 21);
  GradientCheckOptions opts;
  opts.projection_seed = 5;
  const auto report = gradient_check(block, random_tensor<double>({2, 8, 5, 5}, 9), opts);
  EXPECT_TRUE(report.passed) << report.max_relative_error << " at " << report.worst_coordinate;
}

TEST(Backbones, StridedProjectionBottleneckGradientCheck) {
  BottleneckSpec spec{4, 2, 8, 2, true, true, 4, 3};
  Bottleneck<double> block(spec);
  initialize_parameters(block, 22);
  GradientCheckOptions opts;
  opts.projection_seed = 6;
  const auto report = gradient_check(block, random_tensor<double>({2, 4, 6, 6}, 10), opts);
  EXPECT_TRUE(report.passed) << report.max_relative_error << " at " << report.worst_coordinate;
}

TEST(Backbones, DenseBlockGradientCheck) {
  DenseBlock<double> block(2, 4, 3, 2);
  initialize_parameters(block, 23);
  GradientCheckOptions opts;
  opts.projection_seed = 7;
  const auto report = gradient_check(block, random_tensor<double>({2, 4, 4, 4}, 11), opts);
  EXPECT_TRUE(report.passed) << report.max_relative_error << " at " << report.worst_coordinate;
}

TEST(Backbones, SameSeedSameParameters) {
  Model a = make(Family::resnet50_cbam, 9);
  Model b = make(Family::resnet50_cbam, 9);
  Model plain = make(Family::resnet50, 9);
  auto pa = a.network().named_parameters();
  auto pb = b.network().named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].param->value.storage(), pb[i].param->value.storage()) << pa[i].name;
  }
  // Backbone tensors are keyed by name, so the plain network shares them.
  std::map<std::string, const Tensor<float>*> by_name;
  for (auto& np : pa) by_name[np.name] = &np.param->value;
  for (auto& np : plain.network().named_parameters()) {
    ASSERT_TRUE(by_name.count(np.name)) << np.name;
    EXPECT_EQ(by_name[np.name]->storage(), np.param->value.storage()) << np.name;
  }
}

TEST(Backbones, CbamIdentityMatchesBaseline) {
  Model plain = make(Family::resnet50, 13);
  Model cbam = make(Family::resnet50_cbam, 13);
  cbam.set_attention_identity(true);
  const auto x = random_tensor<float>({2, 3, 64, 64}, 4);
  const auto p = plain.predict(x);
  const auto c = cbam.predict(x);
  ASSERT_EQ(p.size(), 2u);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], c[i], 1e-6);

  plain.set_training(true);
  cbam.set_training(true);
  const auto rp = plain.forward(x);
  const auto rc = cbam.forward(x);
  for (std::size_t i = 0; i < rp.size(); ++i) EXPECT_NEAR(rp[i], rc[i], 1e-6);
}

TEST(Backbones, PredictContract) {
  Model model = make(Family::resnet50_cbam);
  const auto out = model.predict(random_tensor<float>({2, 3, 48, 48}, 1, -3.0, 3.0));
  ASSERT_EQ(out.size(), 2u);
  for (double v : out) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 100.0);
  }
  EXPECT_EQ(model.predict(random_tensor<float>({2, 3, 48, 48}, 1)),
            model.predict(random_tensor<float>({2, 3, 48, 48}, 1)));
  EXPECT_FALSE(model.training());
  EXPECT_THROW(model.predict(Tensor<float>(1, 1, 64, 64)), InputError);
  EXPECT_THROW(model.predict(Tensor<float>(1, 3, 16, 64)), InputError);
}

TEST(Backbones, PredictClampsOnlyAtInference) {
  Model model = make(Family::resnet50);
  auto params = model.network().named_parameters();
  for (auto& np : params) {
    if (np.name == "fc.bias") np.param->value[0] = 250.0f;
  }
  const auto x = random_tensor<float>({1, 3, 32, 32}, 2);
  EXPECT_EQ(model.predict(x)[0], 100.0);
  model.set_training(false);
  EXPECT_GT(model.forward(x)[0], 100.0f);
}

}  // namespace
}  // namespace pavepci
