#pragma once

// Channel attention, spatial attention, and their sequential composition
// (CBAM). The free functions are pure and templated on the scalar type so
// the same code runs in float for training and in double for gradient
// checking. CbamBlock wraps them as a network layer.
//
// Spatial attention is sigma(conv_kxk([mean_c(F); max_c(F)]) + b): the
// channel-axis average and max are stacked as two channels and convolved to a
// single-channel 2D map.

#include <functional>
#include <string>
#include <vector>

#include "pavepci/layers.hpp"
#include "pavepci/tensor.hpp"

namespace pavepci {

constexpr int kDefaultReductionRatio = 16;
constexpr int kDefaultSpatialKernel = 7;

// max(1, floor(channels / r)).
int channel_attention_hidden(int channels, int reduction_ratio);

// 2*C*hidden + 2*k*k + 1.
std::size_t cbam_parameter_count(int channels, int reduction_ratio, int kernel_size);

// Shared bias-free MLP C -> hidden -> C applied to both pooled descriptors.
template <typename T>
struct ChannelAttentionParams {
  int channels = 0;
  int reduction_ratio = kDefaultReductionRatio;
  Tensor<T> fc1;  // (hidden, C, 1, 1)
  Tensor<T> fc2;  // (C, hidden, 1, 1)

  ChannelAttentionParams() = default;
  ChannelAttentionParams(int c, int r);
  int hidden() const { return channel_attention_hidden(channels, reduction_ratio); }
};

// k x k convolution from the 2-channel [avg; max] stack to one channel.
template <typename T>
struct SpatialAttentionParams {
  int kernel_size = kDefaultSpatialKernel;
  Tensor<T> kernel;  // (1, 2, k, k)
  T bias = T(0);

  SpatialAttentionParams() : SpatialAttentionParams(kDefaultSpatialKernel) {}
  explicit SpatialAttentionParams(int k);
  int padding() const { return (kernel_size - 1) / 2; }
};

// Non-owning views used by CbamBlock so its Parameter storage is not copied.
template <typename T>
struct ChannelAttentionView {
  int channels;
  int hidden;
  const T* fc1;
  const T* fc2;
};

template <typename T>
struct SpatialAttentionView {
  int kernel_size;
  const T* kernel;
  T bias;
};

template <typename T>
ChannelAttentionView<T> view_of(const ChannelAttentionParams<T>& p);
template <typename T>
SpatialAttentionView<T> view_of(const SpatialAttentionParams<T>& p);

// Sigmoid output: (B,C,1,1) for channel maps, (B,1,H,W) for spatial maps.
template <typename T>
struct AttentionMap {
  enum class Kind { channel, spatial };
  Kind kind = Kind::channel;
  Tensor<T> values;
};

// Intermediates kept by the forward pass for the backward pass.
template <typename T>
struct ChannelAttentionTape {
  Shape input{};
  Tensor<T> avg;                  // (B,C,1,1)
  Tensor<T> max;                  // (B,C,1,1)
  std::vector<std::int32_t> argmax;  // flat H*W index per (b,c)
  std::vector<T> hidden_avg;      // pre-ReLU, B*hidden
  std::vector<T> hidden_max;
  Tensor<T> map;
};

template <typename T>
struct SpatialAttentionTape {
  Shape input{};
  Tensor<T> pooled;                  // (B,2,H,W)
  std::vector<std::int32_t> argmax;  // channel index per (b,y,x)
  Tensor<T> map;
};

template <typename T>
struct CbamTape {
  Tensor<T> input;
  Tensor<T> refined;  // channel-refined features F'
  ChannelAttentionTape<T> channel;
  SpatialAttentionTape<T> spatial;
};

template <typename T>
struct ChannelAttentionGrads {
  Tensor<T> input;
  Tensor<T> fc1;
  Tensor<T> fc2;
};

template <typename T>
struct SpatialAttentionGrads {
  Tensor<T> input;
  Tensor<T> kernel;
  T bias = T(0);
};

template <typename T>
struct CbamGrads {
  Tensor<T> input;
  ChannelAttentionGrads<T> channel;
  SpatialAttentionGrads<T> spatial;
};

template <typename T>
AttentionMap<T> channel_attention(const Tensor<T>& f, const ChannelAttentionView<T>& p,
                                  ChannelAttentionTape<T>* tape = nullptr);
template <typename T>
AttentionMap<T> channel_attention(const Tensor<T>& f, const ChannelAttentionParams<T>& p,
                                  ChannelAttentionTape<T>* tape = nullptr) {
  if (f.c() != p.channels) {
    throw ConfigError("channel_attention: input has " + std::to_string(f.c()) +
                      " channels, params expect " + std::to_string(p.channels));
  }
  return channel_attention(f, view_of(p), tape);
}

template <typename T>
ChannelAttentionGrads<T> channel_attention_backward(const Tensor<T>& grad_map,
                                                    const ChannelAttentionView<T>& p,
                                                    const ChannelAttentionTape<T>& tape);

template <typename T>
AttentionMap<T> spatial_attention(const Tensor<T>& f, const SpatialAttentionView<T>& p,
                                  SpatialAttentionTape<T>* tape = nullptr);
template <typename T>
AttentionMap<T> spatial_attention(const Tensor<T>& f, const SpatialAttentionParams<T>& p,
                                  SpatialAttentionTape<T>* tape = nullptr) {
  return spatial_attention(f, view_of(p), tape);
}

template <typename T>
SpatialAttentionGrads<T> spatial_attention_backward(const Tensor<T>& grad_map,
                                                    const SpatialAttentionView<T>& p,
                                                    const SpatialAttentionTape<T>& tape);

// Elementwise scaling helpers with broadcasting: (B,C,1,1) over H,W and
// (B,1,H,W) over C.
template <typename T>
Tensor<T> scale_by_channel(const Tensor<T>& f, const Tensor<T>& channel_map);
template <typename T>
Tensor<T> scale_by_location(const Tensor<T>& f, const Tensor<T>& spatial_map);

// out = Ms(F') * F' with F' = Mc(F) * F.
template <typename T>
Tensor<T> cbam_apply(const Tensor<T>& f, const ChannelAttentionView<T>& cp,
                     const SpatialAttentionView<T>& sp, CbamTape<T>* tape = nullptr);
template <typename T>
Tensor<T> cbam_apply(const Tensor<T>& f, const ChannelAttentionParams<T>& cp,
                     const SpatialAttentionParams<T>& sp, CbamTape<T>* tape = nullptr) {
  if (f.c() != cp.channels) {
    throw ConfigError("cbam_apply: input has " + std::to_string(f.c()) +
                      " channels, params expect " + std::to_string(cp.channels));
  }
  return cbam_apply(f, view_of(cp), view_of(sp), tape);
}

template <typename T>
CbamGrads<T> cbam_backward(const Tensor<T>& grad_out, const ChannelAttentionView<T>& cp,
                           const SpatialAttentionView<T>& sp, const CbamTape<T>& tape);

// Channel attention alone as a layer; its output is the (B,C,1,1) map.
template <typename T>
class ChannelAttentionLayer : public Module<T> {
 public:
  explicit ChannelAttentionLayer(int channels, int reduction_ratio = kDefaultReductionRatio);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_map) override;

  ChannelAttentionView<T> view() const {
    return {channels_, channel_attention_hidden(channels_, reduction_), fc1.value.data(),
            fc2.value.data()};
  }

  Parameter<T> fc1;
  Parameter<T> fc2;

 private:
  int channels_, reduction_;
  ChannelAttentionTape<T> tape_;
};

// Spatial attention alone as a layer; its output is the (B,1,H,W) map.
template <typename T>
class SpatialAttentionLayer : public Module<T> {
 public:
  explicit SpatialAttentionLayer(int kernel_size = kDefaultSpatialKernel);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_map) override;

  SpatialAttentionView<T> view() const {
    return {kernel_, weight.value.data(), bias.value[0]};
  }

  Parameter<T> weight;
  Parameter<T> bias;

 private:
  int kernel_;
  SpatialAttentionTape<T> tape_;
};

// Called once per CBAM block per forward pass when tracing is enabled.
template <typename T>
using AttentionObserver = std::function<void(const std::string& block,
                                             const AttentionMap<T>& channel,
                                             const AttentionMap<T>& spatial)>;

// CBAM as a network layer. Parameter names: channel.fc1.weight,
// channel.fc2.weight, spatial.conv.weight, spatial.conv.bias.
template <typename T>
class CbamBlock : public Module<T> {
 public:
  CbamBlock(int channels, int reduction_ratio = kDefaultReductionRatio,
            int kernel_size = kDefaultSpatialKernel);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

  // Test hook: when set, both maps are pinned to 1.0 and the block is an
  // exact identity.
  void set_identity(bool on) { identity_ = on; }
  bool identity() const { return identity_; }

  void set_observer(AttentionObserver<T> observer, std::string name) {
    observer_ = std::move(observer);
    name_ = std::move(name);
  }
  void clear_observer() { observer_ = nullptr; }

  int channels() const { return channels_; }
  int reduction_ratio() const { return reduction_; }
  int kernel_size() const { return kernel_; }

  ChannelAttentionView<T> channel_view() const {
    return {channels_, channel_attention_hidden(channels_, reduction_), fc1.value.data(),
            fc2.value.data()};
  }
  SpatialAttentionView<T> spatial_view() const {
    return {kernel_, spatial_weight.value.data(), spatial_bias.value[0]};
  }

  Parameter<T> fc1;
  Parameter<T> fc2;
  Parameter<T> spatial_weight;
  Parameter<T> spatial_bias;

 private:
  int channels_, reduction_, kernel_;
  bool identity_ = false;
  AttentionObserver<T> observer_;
  std::string name_;
  CbamTape<T> tape_;
  bool has_tape_ = false;
};

}  // namespace pavepci
