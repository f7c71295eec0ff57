#include "pavepci/backbones.hpp"

#include <algorithm>

namespace pavepci {

std::string to_string(Family family) {
  switch (family) {
    case Family::resnet50:
      return "resnet50";
    case Family::resnet50_cbam:
      return "resnet50_cbam";
    case Family::densenet161:
      return "densenet161";
  }
  return "unknown";
}

Family parse_family(const std::string& name) {
  if (name == "resnet50") return Family::resnet50;
  if (name == "resnet50_cbam") return Family::resnet50_cbam;
  if (name == "densenet161") return Family::densenet161;
  throw ConfigError("unknown model family '" + name +
                    "' (expected resnet50, resnet50_cbam or densenet161)");
}

int densenet_feature_channels(const ArchitectureSpec& spec) {
  int channels = spec.init_features;
  for (std::size_t i = 0; i < spec.block_config.size(); ++i) {
    channels += spec.block_config[i] * spec.growth_rate;
    if (i + 1 < spec.block_config.size()) channels /= 2;
  }
  return channels;
}

ArchitectureSpec ArchitectureSpec::for_family(Family family) {
  ArchitectureSpec spec;
  spec.family = family;
  spec.head.pooled_features =
      family == Family::densenet161 ? densenet_feature_channels(spec) : 2048;
  return spec;
}

void ArchitectureSpec::validate() const {
  if (family != Family::densenet161 && stage_depths != std::array<int, 4>{3, 4, 6, 3}) {
    throw ConfigError("resnet50 stage depths are fixed to 3,4,6,3");
  }
  if (reduction_ratio < 1) throw ConfigError("reduction_ratio must be >= 1");
  if (spatial_kernel < 1 || spatial_kernel % 2 == 0) {
    throw ConfigError("spatial_kernel must be odd and positive");
  }
  if (head.output_dim < 1) throw ConfigError("head output_dim must be >= 1");
  if (!(head.clamp_min < head.clamp_max)) throw ConfigError("head clamp range is empty");
  if (family == Family::densenet161 &&
      (growth_rate < 1 || init_features < 1 || bottleneck_width < 1)) {
    throw ConfigError("invalid densenet configuration");
  }
}

// ---------------------------------------------------------------------------
// Bottleneck

template <typename T>
Bottleneck<T>::Bottleneck(const BottleneckSpec& spec)
    : spec_(spec),
      conv1_(spec.in_channels, spec.mid_channels, 1),
      bn1_(spec.mid_channels),
      conv2_(spec.mid_channels, spec.mid_channels, 3, spec.stride, 1),
      bn2_(spec.mid_channels),
      conv3_(spec.mid_channels, spec.out_channels, 1),
      bn3_(spec.out_channels) {
  if (spec.out_channels != 4 * spec.mid_channels) {
    throw ConfigError("bottleneck out_channels must be 4 * mid_channels");
  }
  if (spec.stride != 1 && spec.stride != 2) throw ConfigError("bottleneck stride must be 1 or 2");
  const bool needs_projection = spec.stride != 1 || spec.in_channels != spec.out_channels;
  if (needs_projection && !spec.projection_on_skip) {
    throw ConfigError("bottleneck changes shape but has no projection on the skip path");
  }
  this->register_child("conv1", &conv1_);
  this->register_child("bn1", &bn1_);
  this->register_child("relu1", &relu1_);
  this->register_child("conv2", &conv2_);
  this->register_child("bn2", &bn2_);
  this->register_child("relu2", &relu2_);
  this->register_child("conv3", &conv3_);
  this->register_child("bn3", &bn3_);
  if (spec.has_cbam) {
    cbam_ = std::make_unique<CbamBlock<T>>(spec.out_channels, spec.reduction_ratio,
                                           spec.spatial_kernel);
    this->register_child("cbam", cbam_.get());
  }
  if (spec.projection_on_skip) {
    downsample_ = std::make_unique<Sequential<T>>();
    downsample_->template add<Conv2d<T>>("0", spec.in_channels, spec.out_channels, 1,
                                         spec.stride, 0);
    downsample_->template add<BatchNorm2d<T>>("1", spec.out_channels);
    this->register_child("downsample", downsample_.get());
  }
  this->register_child("relu", &relu_out_);
}

template <typename T>
Tensor<T> Bottleneck<T>::forward(const Tensor<T>& x) {
  Tensor<T> h = relu1_.forward(bn1_.forward(conv1_.forward(x)));
  h = relu2_.forward(bn2_.forward(conv2_.forward(h)));
  h = bn3_.forward(conv3_.forward(h));
  if (cbam_) h = cbam_->forward(h);
  if (downsample_) {
    h += downsample_->forward(x);
  } else {
    h += x;
  }
  return relu_out_.forward(h);
}

template <typename T>
Tensor<T> Bottleneck<T>::backward(const Tensor<T>& grad_out) {
  const Tensor<T> g = relu_out_.backward(grad_out);
  Tensor<T> gh = cbam_ ? cbam_->backward(g) : g;
  gh = conv3_.backward(bn3_.backward(gh));
  gh = conv2_.backward(bn2_.backward(relu2_.backward(gh)));
  gh = conv1_.backward(bn1_.backward(relu1_.backward(gh)));
  if (downsample_) {
    gh += downsample_->backward(g);
  } else {
    gh += g;
  }
  return gh;
}

// ---------------------------------------------------------------------------
// ResNet

template <typename T>
ResNet<T>::ResNet(const ArchitectureSpec& spec)
    : conv1_(3, 64, 7, 2, 3),
      bn1_(64),
      maxpool_(3, 2, 1),
      fc_(2048, spec.head.output_dim) {
  spec.validate();
  this->register_child("conv1", &conv1_);
  this->register_child("bn1", &bn1_);
  this->register_child("relu", &relu_);
  this->register_child("maxpool", &maxpool_);
  const bool cbam = spec.family == Family::resnet50_cbam;
  const std::array<int, 4> mids{64, 128, 256, 512};
  int in = 64;
  for (int s = 0; s < 4; ++s) {
    for (int b = 0; b < spec.stage_depths[s]; ++b) {
      BottleneckSpec bs;
      bs.in_channels = in;
      bs.mid_channels = mids[s];
      bs.out_channels = 4 * mids[s];
      bs.stride = (b == 0 && s > 0) ? 2 : 1;
      bs.has_cbam = cbam;
      bs.projection_on_skip = (b == 0);
      bs.reduction_ratio = spec.reduction_ratio;
      bs.spatial_kernel = spec.spatial_kernel;
      stages_[s].template add<Bottleneck<T>>(std::to_string(b), bs);
      in = bs.out_channels;
    }
    this->register_child("layer" + std::to_string(s + 1), &stages_[s]);
  }
  this->register_child("avgpool", &avgpool_);
  this->register_child("fc", &fc_);
  if (fc_.bias) fc_.bias->init = Parameter<T>::Init::keep;
  if (fc_.bias) fc_.bias->value.fill(static_cast<T>(spec.head.bias_init));
}

template <typename T>
Tensor<T> ResNet<T>::features(const Tensor<T>& x) {
  Tensor<T> h = maxpool_.forward(relu_.forward(bn1_.forward(conv1_.forward(x))));
  for (auto& stage : stages_) h = stage.forward(h);
  return h;
}

template <typename T>
Tensor<T> ResNet<T>::forward(const Tensor<T>& x) {
  return fc_.forward(avgpool_.forward(features(x)));
}

template <typename T>
Tensor<T> ResNet<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = avgpool_.backward(fc_.backward(grad_out));
  for (int s = 3; s >= 0; --s) g = stages_[s].backward(g);
  return conv1_.backward(bn1_.backward(relu_.backward(maxpool_.backward(g))));
}

template <typename T>
std::vector<Bottleneck<T>*> ResNet<T>::bottlenecks() {
  std::vector<Bottleneck<T>*> out;
  for (auto& stage : stages_) {
    for (std::size_t i = 0; i < stage.size(); ++i) {
      out.push_back(static_cast<Bottleneck<T>*>(&stage[i]));
    }
  }
  return out;
}

template <typename T>
std::vector<CbamBlock<T>*> ResNet<T>::cbam_blocks() {
  std::vector<CbamBlock<T>*> out;
  for (Bottleneck<T>* b : bottlenecks()) {
    if (b->cbam() != nullptr) out.push_back(b->cbam());
  }
  return out;
}

// ---------------------------------------------------------------------------
// DenseNet

template <typename T>
DenseLayer<T>::DenseLayer(int in_channels, int growth_rate, int bottleneck_width)
    : in_channels_(in_channels),
      norm1_(in_channels),
      conv1_(in_channels, bottleneck_width * growth_rate, 1),
      norm2_(bottleneck_width * growth_rate),
      conv2_(bottleneck_width * growth_rate, growth_rate, 3, 1, 1) {
  this->register_child("norm1", &norm1_);
  this->register_child("relu1", &relu1_);
  this->register_child("conv1", &conv1_);
  this->register_child("norm2", &norm2_);
  this->register_child("relu2", &relu2_);
  this->register_child("conv2", &conv2_);
}

template <typename T>
Tensor<T> DenseLayer<T>::forward(const Tensor<T>& x) {
  Tensor<T> h = conv1_.forward(relu1_.forward(norm1_.forward(x)));
  return conv2_.forward(relu2_.forward(norm2_.forward(h)));
}

template <typename T>
Tensor<T> DenseLayer<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = norm2_.backward(relu2_.backward(conv2_.backward(grad_out)));
  return norm1_.backward(relu1_.backward(conv1_.backward(g)));
}

template <typename T>
DenseBlock<T>::DenseBlock(int layers, int in_channels, int growth_rate, int bottleneck_width)
    : in_channels_(in_channels), growth_(growth_rate) {
  for (int i = 0; i < layers; ++i) {
    const int channels = in_channels + i * growth_rate;
    layers_.push_back(std::make_unique<DenseLayer<T>>(channels, growth_rate, bottleneck_width));
    this->register_child("denselayer" + std::to_string(i + 1), layers_.back().get());
  }
}

template <typename T>
std::vector<int> DenseBlock<T>::layer_input_channels() const {
  std::vector<int> out;
  for (const auto& l : layers_) out.push_back(l->in_channels());
  return out;
}

template <typename T>
int DenseBlock<T>::out_channels() const {
  return in_channels_ + static_cast<int>(layers_.size()) * growth_;
}

template <typename T>
Tensor<T> DenseBlock<T>::forward(const Tensor<T>& x) {
  Tensor<T> current = x;
  for (auto& layer : layers_) {
    current = concat_channels(current, layer->forward(current));
  }
  return current;
}

template <typename T>
Tensor<T> DenseBlock<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    auto [g_prev, g_new] = split_channels(g, layers_[i]->in_channels());
    g_prev += layers_[i]->backward(g_new);
    g = std::move(g_prev);
  }
  return g;
}

template <typename T>
DenseNet<T>::DenseNet(const ArchitectureSpec& spec)
    : classifier_(densenet_feature_channels(spec), spec.head.output_dim) {
  spec.validate();
  features_.template add<Conv2d<T>>("conv0", 3, spec.init_features, 7, 2, 3);
  features_.template add<BatchNorm2d<T>>("norm0", spec.init_features);
  features_.template add<ReLU<T>>("relu0");
  features_.template add<MaxPool2d<T>>("pool0", 3, 2, 1);
  int channels = spec.init_features;
  for (std::size_t i = 0; i < spec.block_config.size(); ++i) {
    auto& block = features_.template add<DenseBlock<T>>(
        "denseblock" + std::to_string(i + 1), spec.block_config[i], channels, spec.growth_rate,
        spec.bottleneck_width);
    blocks_.push_back(&block);
    channels = block.out_channels();
    if (i + 1 < spec.block_config.size()) {
      auto& transition = features_.template add<Sequential<T>>("transition" + std::to_string(i + 1));
      transition.template add<BatchNorm2d<T>>("norm", channels);
      transition.template add<ReLU<T>>("relu");
      transition.template add<Conv2d<T>>("conv", channels, channels / 2, 1);
      transition.template add<AvgPool2d<T>>("pool", 2, 2);
      channels /= 2;
    }
  }
  features_.template add<BatchNorm2d<T>>("norm5", channels);
  this->register_child("features", &features_);
  this->register_child("relu", &relu_);
  this->register_child("avgpool", &avgpool_);
  this->register_child("classifier", &classifier_);
  if (classifier_.bias) {
    classifier_.bias->init = Parameter<T>::Init::keep;
    classifier_.bias->value.fill(static_cast<T>(spec.head.bias_init));
  }
}

template <typename T>
Tensor<T> DenseNet<T>::features(const Tensor<T>& x) {
  return relu_.forward(features_.forward(x));
}

template <typename T>
Tensor<T> DenseNet<T>::forward(const Tensor<T>& x) {
  return classifier_.forward(avgpool_.forward(features(x)));
}

template <typename T>
Tensor<T> DenseNet<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = avgpool_.backward(classifier_.backward(grad_out));
  return features_.backward(relu_.backward(g));
}

template <typename T>
std::vector<std::vector<int>> DenseNet<T>::dense_layer_input_channels() const {
  std::vector<std::vector<int>> out;
  for (const DenseBlock<T>* b : blocks_) out.push_back(b->layer_input_channels());
  return out;
}

// ---------------------------------------------------------------------------
// Construction and accounting

template <typename T>
std::unique_ptr<RegressionNetwork<T>> build_network(const ArchitectureSpec& spec,
                                                    std::uint64_t seed) {
  spec.validate();
  std::unique_ptr<RegressionNetwork<T>> net;
  switch (spec.family) {
    case Family::resnet50:
    case Family::resnet50_cbam:
      net = std::make_unique<ResNet<T>>(spec);
      break;
    case Family::densenet161:
      net = std::make_unique<DenseNet<T>>(spec);
      break;
  }
  if (!net) throw ConfigError("unknown model family");
  initialize_parameters(*net, seed);
  return net;
}

Model::Model(ArchitectureSpec spec, std::uint64_t seed)
    : spec_(spec), net_(build_network<float>(spec, seed)) {}

Model build_model(const ArchitectureSpec& spec, std::uint64_t seed) { return Model(spec, seed); }

void validate_input_batch(const Tensor<float>& batch) {
  if (batch.n() < 1 || batch.c() != 3 || batch.h() < 32 || batch.w() < 32) {
    throw InputError("model input must be (B,3,H,W) with B >= 1 and H,W >= 32; got " +
                     batch.shape().str());
  }
}

Tensor<float> Model::forward(const Tensor<float>& batch) {
  validate_input_batch(batch);
  return net_->forward(batch);
}

Tensor<float> Model::backward(const Tensor<float>& grad_out) { return net_->backward(grad_out); }

std::vector<double> Model::predict(const Tensor<float>& batch) {
  validate_input_batch(batch);
  const bool was_training = net_->training();
  net_->set_training(false);
  const Tensor<float> out = net_->forward(batch);
  net_->set_training(was_training);
  std::vector<double> preds(static_cast<std::size_t>(batch.n()));
  for (int b = 0; b < batch.n(); ++b) {
    preds[b] = std::clamp(static_cast<double>(out.at(b, 0, 0, 0)), spec_.head.clamp_min,
                          spec_.head.clamp_max);
  }
  return preds;
}

void Model::set_attention_identity(bool on) {
  for (CbamBlock<float>* block : net_->cbam_blocks()) block->set_identity(on);
}

ParameterCount count_parameters(Model& model) {
  ParameterCount count;
  const std::string head = model.network().head_prefix();
  for (const auto& np : model.network().named_parameters()) {
    const std::size_t n = np.param->value.size();
    count.total += n;
    if (np.name.find(".cbam.") != std::string::npos) count.cbam += n;
    if (np.name.rfind(head, 0) == 0) count.head += n;
    count.by_submodule[np.name.substr(0, np.name.find('.'))] += n;
  }
  count.backbone = count.total - count.cbam - count.head;
  return count;
}

std::size_t resnet50_cbam_overhead(int reduction_ratio, int spatial_kernel) {
  const std::array<int, 4> depths{3, 4, 6, 3};
  const std::array<int, 4> channels{256, 512, 1024, 2048};
  std::size_t total = 0;
  for (int s = 0; s < 4; ++s) {
    total += depths[s] * cbam_parameter_count(channels[s], reduction_ratio, spatial_kernel);
  }
  return total;
}

#define PAVEPCI_INSTANTIATE_BACKBONES(T)                   \
  template class Bottleneck<T>;                            \
  template class ResNet<T>;                                \
  template class DenseLayer<T>;                            \
  template class DenseBlock<T>;                            \
  template class DenseNet<T>;                              \
  template std::unique_ptr<RegressionNetwork<T>> build_network<T>(const ArchitectureSpec&, \
                                                                  std::uint64_t);

PAVEPCI_INSTANTIATE_BACKBONES(float)
PAVEPCI_INSTANTIATE_BACKBONES(double)

#undef PAVEPCI_INSTANTIATE_BACKBONES

}  // namespace pavepci
