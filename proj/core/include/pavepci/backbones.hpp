#pragma once

// ResNet50, ResNet50 with a CBAM in every bottleneck, and DenseNet161, each
// ending in global average pooling and a single linear unit that regresses
// PCI. Parameter names follow the usual torchvision layout
// ("layer3.4.conv2.weight", "features.denseblock2.denselayer7.norm1.bias")
// so backbone weights can be mapped by name.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pavepci/attention.hpp"
#include "pavepci/layers.hpp"

namespace pavepci {

enum class Family { resnet50, resnet50_cbam, densenet161 };

std::string to_string(Family family);
// Throws ConfigError for unknown names.
Family parse_family(const std::string& name);

struct RegressionHeadSpec {
  int pooled_features = 2048;
  int output_dim = 1;
  double clamp_min = 0.0;
  double clamp_max = 100.0;
  // Initial bias of the output unit; the midpoint of the PCI range.
  double bias_init = 50.0;

  bool operator==(const RegressionHeadSpec&) const = default;
};

struct ArchitectureSpec {
  Family family = Family::resnet50_cbam;
  std::array<int, 4> stage_depths{3, 4, 6, 3};
  int reduction_ratio = kDefaultReductionRatio;
  int spatial_kernel = kDefaultSpatialKernel;
  // DenseNet161 configuration.
  int growth_rate = 48;
  std::array<int, 4> block_config{6, 12, 36, 24};
  int init_features = 96;
  int bottleneck_width = 4;
  RegressionHeadSpec head;
  bool pretrained_backbone = false;

  static ArchitectureSpec for_family(Family family);
  void validate() const;
  bool operator==(const ArchitectureSpec&) const = default;
};

// Channels leaving the last dense block.
int densenet_feature_channels(const ArchitectureSpec& spec);

struct BottleneckSpec {
  int in_channels = 0;
  int mid_channels = 0;
  int out_channels = 0;  // 4 * mid_channels
  int stride = 1;
  bool has_cbam = false;
  bool projection_on_skip = false;
  int reduction_ratio = kDefaultReductionRatio;
  int spatial_kernel = kDefaultSpatialKernel;
};

// 1x1 reduce -> 3x3 (carries the stride) -> 1x1 restore, each followed by
// batch norm; optional CBAM on the restored features; skip addition; ReLU.
template <typename T>
class Bottleneck : public Module<T> {
 public:
  explicit Bottleneck(const BottleneckSpec& spec);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

  const BottleneckSpec& spec() const { return spec_; }
  CbamBlock<T>* cbam() { return cbam_.get(); }

 private:
  BottleneckSpec spec_;
  Conv2d<T> conv1_;
  BatchNorm2d<T> bn1_;
  ReLU<T> relu1_;
  Conv2d<T> conv2_;
  BatchNorm2d<T> bn2_;
  ReLU<T> relu2_;
  Conv2d<T> conv3_;
  BatchNorm2d<T> bn3_;
  std::unique_ptr<CbamBlock<T>> cbam_;
  std::unique_ptr<Sequential<T>> downsample_;
  ReLU<T> relu_out_;
};

// Backbone + pooled linear head producing (B, output_dim, 1, 1).
template <typename T>
class RegressionNetwork : public Module<T> {
 public:
  // Feature map entering the global pooling of the head.
  virtual Tensor<T> features(const Tensor<T>& x) = 0;
  virtual std::vector<CbamBlock<T>*> cbam_blocks() { return {}; }
  // Dotted-name prefix of the head's parameters ("fc." or "classifier.").
  virtual std::string head_prefix() const = 0;
};

template <typename T>
class ResNet : public RegressionNetwork<T> {
 public:
  explicit ResNet(const ArchitectureSpec& spec);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Tensor<T> features(const Tensor<T>& x) override;
  std::vector<CbamBlock<T>*> cbam_blocks() override;
  std::string head_prefix() const override { return "fc."; }

  std::vector<Bottleneck<T>*> bottlenecks();

 private:
  Conv2d<T> conv1_;
  BatchNorm2d<T> bn1_;
  ReLU<T> relu_;
  MaxPool2d<T> maxpool_;
  std::array<Sequential<T>, 4> stages_;
  GlobalAvgPool<T> avgpool_;
  Linear<T> fc_;
};

// BN -> ReLU -> 1x1 conv -> BN -> ReLU -> 3x3 conv producing growth_rate
// channels from the concatenation of every earlier feature map in the block.
template <typename T>
class DenseLayer : public Module<T> {
 public:
  DenseLayer(int in_channels, int growth_rate, int bottleneck_width);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  int in_channels() const { return in_channels_; }

 private:
  int in_channels_;
  BatchNorm2d<T> norm1_;
  ReLU<T> relu1_;
  Conv2d<T> conv1_;
  BatchNorm2d<T> norm2_;
  ReLU<T> relu2_;
  Conv2d<T> conv2_;
};

template <typename T>
class DenseBlock : public Module<T> {
 public:
  DenseBlock(int layers, int in_channels, int growth_rate, int bottleneck_width);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

  std::vector<int> layer_input_channels() const;
  int out_channels() const;

 private:
  std::vector<std::unique_ptr<DenseLayer<T>>> layers_;
  int in_channels_;
  int growth_;
};

template <typename T>
class DenseNet : public RegressionNetwork<T> {
 public:
  explicit DenseNet(const ArchitectureSpec& spec);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Tensor<T> features(const Tensor<T>& x) override;
  std::string head_prefix() const override { return "classifier."; }

  // Input channel count of every dense layer, one vector per dense block.
  std::vector<std::vector<int>> dense_layer_input_channels() const;

 private:
  Sequential<T> features_;
  std::vector<DenseBlock<T>*> blocks_;
  ReLU<T> relu_;
  GlobalAvgPool<T> avgpool_;
  Linear<T> classifier_;
};

// Builds the network and initializes every parameter from (seed, name).
template <typename T>
std::unique_ptr<RegressionNetwork<T>> build_network(const ArchitectureSpec& spec,
                                                    std::uint64_t seed);

// A regression model: architecture description plus a float network.
// Inference through predict() runs in eval mode and clamps to the head's
// [clamp_min, clamp_max]; forward()/backward() return raw outputs.
class Model {
 public:
  Model(ArchitectureSpec spec, std::uint64_t seed);

  const ArchitectureSpec& spec() const { return spec_; }
  RegressionNetwork<float>& network() { return *net_; }

  Tensor<float> forward(const Tensor<float>& batch);
  Tensor<float> backward(const Tensor<float>& grad_out);
  void set_training(bool on) { net_->set_training(on); }
  bool training() const { return net_->training(); }

  // B clamped predictions. Throws InputError unless batch is (B,3,H,W) with
  // H,W >= 32.
  std::vector<double> predict(const Tensor<float>& batch);

  std::vector<CbamBlock<float>*> cbam_blocks() { return net_->cbam_blocks(); }
  // Pins every CBAM map to 1.0 (test hook for baseline equivalence).
  void set_attention_identity(bool on);

 private:
  ArchitectureSpec spec_;
  std::unique_ptr<RegressionNetwork<float>> net_;
};

Model build_model(const ArchitectureSpec& spec, std::uint64_t seed = 0);

struct ParameterCount {
  std::size_t total = 0;
  std::size_t cbam = 0;
  std::size_t head = 0;
  std::size_t backbone = 0;  // total - cbam - head
  std::map<std::string, std::size_t> by_submodule;  // keyed by top-level name
};

ParameterCount count_parameters(Model& model);

// Closed-form parameter count of all CBAM blocks in a ResNet50 with the
// given reduction ratio and spatial kernel.
std::size_t resnet50_cbam_overhead(int reduction_ratio, int spatial_kernel);

void validate_input_batch(const Tensor<float>& batch);

}  // namespace pavepci
