#include "pavepci/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pavepci {

namespace {

// Kept inside the open interval: in float, 1/(1+exp(-z)) rounds to exactly 1
// once z exceeds about 17.
template <typename T>
T sigmoid(T z) {
  static const T hi = std::nextafter(T(1), T(0));
  return std::clamp(T(1) / (T(1) + std::exp(-z)), std::numeric_limits<T>::min(), hi);
}

void require_spatial_extent(const Shape& s, const char* op) {
  if (s.n < 1 || s.h < 1 || s.w < 1) {
    throw InputError(std::string(op) + ": empty spatial extent " + s.str());
  }
}

}  // namespace

int channel_attention_hidden(int channels, int reduction_ratio) {
  if (channels < 1 || reduction_ratio < 1) {
    throw ConfigError("channel attention needs channels >= 1 and reduction ratio >= 1");
  }
  return std::max(1, channels / reduction_ratio);
}

std::size_t cbam_parameter_count(int channels, int reduction_ratio, int kernel_size) {
  const std::size_t hidden = channel_attention_hidden(channels, reduction_ratio);
  return 2 * static_cast<std::size_t>(channels) * hidden +
         2 * static_cast<std::size_t>(kernel_size) * kernel_size + 1;
}

template <typename T>
ChannelAttentionParams<T>::ChannelAttentionParams(int c, int r)
    : channels(c),
      reduction_ratio(r),
      fc1(channel_attention_hidden(c, r), c, 1, 1),
      fc2(c, channel_attention_hidden(c, r), 1, 1) {}

template <typename T>
SpatialAttentionParams<T>::SpatialAttentionParams(int k) : kernel_size(k), kernel(1, 2, k, k) {
  if (k < 1 || k % 2 == 0) throw ConfigError("spatial attention kernel must be odd and positive");
}

template <typename T>
ChannelAttentionView<T> view_of(const ChannelAttentionParams<T>& p) {
  const int hidden = p.hidden();
  if (p.fc1.size() != static_cast<std::size_t>(hidden) * p.channels ||
      p.fc2.size() != static_cast<std::size_t>(hidden) * p.channels) {
    throw ConfigError("channel attention weights do not match channels/reduction ratio");
  }
  return {p.channels, hidden, p.fc1.data(), p.fc2.data()};
}

template <typename T>
SpatialAttentionView<T> view_of(const SpatialAttentionParams<T>& p) {
  if (p.kernel.size() != 2u * p.kernel_size * p.kernel_size) {
    throw ConfigError("spatial attention kernel must have shape (1,2,k,k)");
  }
  return {p.kernel_size, p.kernel.data(), p.bias};
}

// ---------------------------------------------------------------------------
// Channel attention

template <typename T>
AttentionMap<T> channel_attention(const Tensor<T>& f, const ChannelAttentionView<T>& p,
                                  ChannelAttentionTape<T>* tape) {
  if (f.c() != p.channels) {
    throw ConfigError("channel_attention: input has " + std::to_string(f.c()) +
                      " channels, params expect " + std::to_string(p.channels));
  }
  require_spatial_extent(f.shape(), "channel_attention");
  const int batch = f.n(), channels = f.c(), hidden = p.hidden;
  const std::size_t plane = f.shape().plane();

  Tensor<T> avg(batch, channels, 1, 1);
  Tensor<T> mx(batch, channels, 1, 1);
  std::vector<std::int32_t> argmax(static_cast<std::size_t>(batch) * channels);
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < channels; ++c) {
      const T* src = f.plane(b, c);
      double sum = 0.0;
      T best = src[0];
      std::int32_t best_idx = 0;
      for (std::size_t i = 0; i < plane; ++i) {
        sum += src[i];
        if (src[i] > best) {
          best = src[i];
          best_idx = static_cast<std::int32_t>(i);
        }
      }
      avg.at(b, c, 0, 0) = static_cast<T>(sum / static_cast<double>(plane));
      mx.at(b, c, 0, 0) = best;
      argmax[static_cast<std::size_t>(b) * channels + c] = best_idx;
    }
  }

  std::vector<T> h_avg(static_cast<std::size_t>(batch) * hidden);
  std::vector<T> h_max(h_avg.size());
  Tensor<T> map(batch, channels, 1, 1);
  AttentionMap<T> out;
  out.kind = AttentionMap<T>::Kind::channel;
  std::vector<T> a_avg(hidden), a_max(hidden);
  for (int b = 0; b < batch; ++b) {
    const T* da = avg.image(b);
    const T* dm = mx.image(b);
    for (int j = 0; j < hidden; ++j) {
      const T* w = p.fc1 + static_cast<std::size_t>(j) * channels;
      T sa = 0, sm = 0;
      for (int c = 0; c < channels; ++c) {
        sa += w[c] * da[c];
        sm += w[c] * dm[c];
      }
      h_avg[static_cast<std::size_t>(b) * hidden + j] = sa;
      h_max[static_cast<std::size_t>(b) * hidden + j] = sm;
      a_avg[j] = sa > T(0) ? sa : T(0);
      a_max[j] = sm > T(0) ? sm : T(0);
    }
    for (int c = 0; c < channels; ++c) {
      const T* w = p.fc2 + static_cast<std::size_t>(c) * hidden;
      T z = 0;
      for (int j = 0; j < hidden; ++j) z += w[j] * (a_avg[j] + a_max[j]);
      map.at(b, c, 0, 0) = sigmoid(z);
    }
  }
  out.values = map;
  if (tape != nullptr) {
    tape->input = f.shape();
    tape->avg = std::move(avg);
    tape->max = std::move(mx);
    tape->argmax = std::move(argmax);
    tape->hidden_avg = std::move(h_avg);
    tape->hidden_max = std::move(h_max);
    tape->map = std::move(map);
  }
  return out;
}

template <typename T>
ChannelAttentionGrads<T> channel_attention_backward(const Tensor<T>& grad_map,
                                                    const ChannelAttentionView<T>& p,
                                                    const ChannelAttentionTape<T>& tape) {
  const Shape& in = tape.input;
  const int batch = in.n, channels = in.c, hidden = p.hidden;
  grad_map.require_same_shape(tape.map, "channel_attention_backward");
  const std::size_t plane = in.plane();

  ChannelAttentionGrads<T> g{Tensor<T>(in), Tensor<T>(hidden, channels, 1, 1),
                             Tensor<T>(channels, hidden, 1, 1)};
  std::vector<T> dz(channels), dh_avg(hidden), dh_max(hidden), dd_avg(channels), dd_max(channels);
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < channels; ++c) {
      const T s = tape.map.at(b, c, 0, 0);
      dz[c] = grad_map.at(b, c, 0, 0) * s * (T(1) - s);
    }
    const T* ha = tape.hidden_avg.data() + static_cast<std::size_t>(b) * hidden;
    const T* hm = tape.hidden_max.data() + static_cast<std::size_t>(b) * hidden;
    // Both paths share fc2, so dz flows into each one's post-ReLU hidden.
    for (int j = 0; j < hidden; ++j) {
      T da = 0;
      for (int c = 0; c < channels; ++c) da += p.fc2[static_cast<std::size_t>(c) * hidden + j] * dz[c];
      dh_avg[j] = ha[j] > T(0) ? da : T(0);
      dh_max[j] = hm[j] > T(0) ? da : T(0);
    }
    for (int c = 0; c < channels; ++c) {
      T* gw = g.fc2.data() + static_cast<std::size_t>(c) * hidden;
      for (int j = 0; j < hidden; ++j) {
        const T a = (ha[j] > T(0) ? ha[j] : T(0)) + (hm[j] > T(0) ? hm[j] : T(0));
        gw[j] += dz[c] * a;
      }
    }
    const T* da = tape.avg.image(b);
    const T* dm = tape.max.image(b);
    std::fill(dd_avg.begin(), dd_avg.end(), T(0));
    std::fill(dd_max.begin(), dd_max.end(), T(0));
    for (int j = 0; j < hidden; ++j) {
      const T* w = p.fc1 + static_cast<std::size_t>(j) * channels;
      T* gw = g.fc1.data() + static_cast<std::size_t>(j) * channels;
      for (int c = 0; c < channels; ++c) {
        gw[c] += dh_avg[j] * da[c] + dh_max[j] * dm[c];
        dd_avg[c] += w[c] * dh_avg[j];
        dd_max[c] += w[c] * dh_max[j];
      }
    }
    const T inv_plane = T(1) / static_cast<T>(plane);
    for (int c = 0; c < channels; ++c) {
      T* dst = g.input.plane(b, c);
      const T share = dd_avg[c] * inv_plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] = share;
      dst[tape.argmax[static_cast<std::size_t>(b) * channels + c]] += dd_max[c];
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Spatial attention

template <typename T>
AttentionMap<T> spatial_attention(const Tensor<T>& f, const SpatialAttentionView<T>& p,
                                  SpatialAttentionTape<T>* tape) {
  require_spatial_extent(f.shape(), "spatial_attention");
  if (f.c() < 1) throw InputError("spatial_attention: input needs at least one channel");
  if (p.kernel_size < 1 || p.kernel_size % 2 == 0) {
    throw ConfigError("spatial_attention: kernel must be odd and positive");
  }
  const int batch = f.n(), channels = f.c(), h = f.h(), w = f.w();
  const int k = p.kernel_size, pad = (k - 1) / 2;
  const std::size_t plane = f.shape().plane();

  Tensor<T> pooled(batch, 2, h, w);
  std::vector<std::int32_t> argmax(static_cast<std::size_t>(batch) * plane);
  for (int b = 0; b < batch; ++b) {
    T* avg = pooled.plane(b, 0);
    T* mx = pooled.plane(b, 1);
    std::int32_t* am = argmax.data() + static_cast<std::size_t>(b) * plane;
    const T* first = f.plane(b, 0);
    std::copy_n(first, plane, avg);
    std::copy_n(first, plane, mx);
    std::fill(am, am + plane, 0);
    for (int c = 1; c < channels; ++c) {
      const T* src = f.plane(b, c);
      for (std::size_t i = 0; i < plane; ++i) {
        avg[i] += src[i];
        if (src[i] > mx[i]) {
          mx[i] = src[i];
          am[i] = c;
        }
      }
    }
    const T inv = T(1) / static_cast<T>(channels);
    for (std::size_t i = 0; i < plane; ++i) avg[i] *= inv;
  }

  Tensor<T> map(batch, 1, h, w);
  for (int b = 0; b < batch; ++b) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        T z = p.bias;
        for (int ch = 0; ch < 2; ++ch) {
          const T* src = pooled.plane(b, ch);
          const T* kern = p.kernel + static_cast<std::size_t>(ch) * k * k;
          for (int ky = 0; ky < k; ++ky) {
            const int iy = y + ky - pad;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = x + kx - pad;
              if (ix < 0 || ix >= w) continue;
              z += kern[ky * k + kx] * src[iy * w + ix];
            }
          }
        }
        map.at(b, 0, y, x) = sigmoid(z);
      }
    }
  }
  AttentionMap<T> out{AttentionMap<T>::Kind::spatial, map};
  if (tape != nullptr) {
    tape->input = f.shape();
    tape->pooled = std::move(pooled);
    tape->argmax = std::move(argmax);
    tape->map = std::move(map);
  }
  return out;
}

template <typename T>
SpatialAttentionGrads<T> spatial_attention_backward(const Tensor<T>& grad_map,
                                                    const SpatialAttentionView<T>& p,
                                                    const SpatialAttentionTape<T>& tape) {
  grad_map.require_same_shape(tape.map, "spatial_attention_backward");
  const Shape& in = tape.input;
  const int batch = in.n, channels = in.c, h = in.h, w = in.w;
  const int k = p.kernel_size, pad = (k - 1) / 2;
  const std::size_t plane = in.plane();

  SpatialAttentionGrads<T> g{Tensor<T>(in), Tensor<T>(1, 2, k, k), T(0)};
  Tensor<T> dpooled(batch, 2, h, w);
  double dbias = 0.0;
  for (int b = 0; b < batch; ++b) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const T s = tape.map.at(b, 0, y, x);
        const T dz = grad_map.at(b, 0, y, x) * s * (T(1) - s);
        dbias += dz;
        for (int ch = 0; ch < 2; ++ch) {
          const T* src = tape.pooled.plane(b, ch);
          T* dsrc = dpooled.plane(b, ch);
          const T* kern = p.kernel + static_cast<std::size_t>(ch) * k * k;
          T* gk = g.kernel.data() + static_cast<std::size_t>(ch) * k * k;
          for (int ky = 0; ky < k; ++ky) {
            const int iy = y + ky - pad;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = x + kx - pad;
              if (ix < 0 || ix >= w) continue;
              gk[ky * k + kx] += dz * src[iy * w + ix];
              dsrc[iy * w + ix] += dz * kern[ky * k + kx];
            }
          }
        }
      }
    }
  }
  g.bias = static_cast<T>(dbias);
  const T inv = T(1) / static_cast<T>(channels);
  for (int b = 0; b < batch; ++b) {
    const T* da = dpooled.plane(b, 0);
    const T* dm = dpooled.plane(b, 1);
    const std::int32_t* am = tape.argmax.data() + static_cast<std::size_t>(b) * plane;
    for (int c = 0; c < channels; ++c) {
      T* dst = g.input.plane(b, c);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = da[i] * inv;
    }
    for (std::size_t i = 0; i < plane; ++i) g.input.plane(b, am[i])[i] += dm[i];
  }
  return g;
}

// ---------------------------------------------------------------------------
// Composition

template <typename T>
Tensor<T> scale_by_channel(const Tensor<T>& f, const Tensor<T>& channel_map) {
  if (channel_map.n() != f.n() || channel_map.c() != f.c() || channel_map.h() != 1 ||
      channel_map.w() != 1) {
    throw InputError("scale_by_channel: map " + channel_map.shape().str() +
                     " does not broadcast over " + f.shape().str());
  }
  Tensor<T> out(f.shape());
  const std::size_t plane = f.shape().plane();
  for (int b = 0; b < f.n(); ++b) {
    for (int c = 0; c < f.c(); ++c) {
      const T s = channel_map.at(b, c, 0, 0);
      const T* src = f.plane(b, c);
      T* dst = out.plane(b, c);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * s;
    }
  }
  return out;
}

template <typename T>
Tensor<T> scale_by_location(const Tensor<T>& f, const Tensor<T>& spatial_map) {
  if (spatial_map.n() != f.n() || spatial_map.c() != 1 || spatial_map.h() != f.h() ||
      spatial_map.w() != f.w()) {
    throw InputError("scale_by_location: map " + spatial_map.shape().str() +
                     " does not broadcast over " + f.shape().str());
  }
  Tensor<T> out(f.shape());
  const std::size_t plane = f.shape().plane();
  for (int b = 0; b < f.n(); ++b) {
    const T* s = spatial_map.plane(b, 0);
    for (int c = 0; c < f.c(); ++c) {
      const T* src = f.plane(b, c);
      T* dst = out.plane(b, c);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * s[i];
    }
  }
  return out;
}

template <typename T>
Tensor<T> cbam_apply(const Tensor<T>& f, const ChannelAttentionView<T>& cp,
                     const SpatialAttentionView<T>& sp, CbamTape<T>* tape) {
  ChannelAttentionTape<T>* ct = tape != nullptr ? &tape->channel : nullptr;
  SpatialAttentionTape<T>* st = tape != nullptr ? &tape->spatial : nullptr;
  const AttentionMap<T> mc = channel_attention(f, cp, ct);
  Tensor<T> refined = scale_by_channel(f, mc.values);
  const AttentionMap<T> ms = spatial_attention(refined, sp, st);
  Tensor<T> out = scale_by_location(refined, ms.values);
  if (tape != nullptr) {
    tape->input = f;
    tape->refined = std::move(refined);
  }
  return out;
}

template <typename T>
CbamGrads<T> cbam_backward(const Tensor<T>& grad_out, const ChannelAttentionView<T>& cp,
                           const SpatialAttentionView<T>& sp, const CbamTape<T>& tape) {
  grad_out.require_same_shape(tape.refined, "cbam_backward");
  const Tensor<T>& f = tape.input;
  const Tensor<T>& refined = tape.refined;
  const Tensor<T>& ms = tape.spatial.map;
  const Tensor<T>& mc = tape.channel.map;
  const std::size_t plane = f.shape().plane();

  // out = ms * refined
  Tensor<T> grad_ms(ms.shape());
  Tensor<T> grad_refined = scale_by_location(grad_out, ms);
  for (int b = 0; b < f.n(); ++b) {
    T* gm = grad_ms.plane(b, 0);
    for (int c = 0; c < f.c(); ++c) {
      const T* g = grad_out.plane(b, c);
      const T* r = refined.plane(b, c);
      for (std::size_t i = 0; i < plane; ++i) gm[i] += g[i] * r[i];
    }
  }
  CbamGrads<T> grads;
  grads.spatial = spatial_attention_backward(grad_ms, sp, tape.spatial);
  grad_refined += grads.spatial.input;

  // refined = mc * f
  Tensor<T> grad_mc(mc.shape());
  for (int b = 0; b < f.n(); ++b) {
    for (int c = 0; c < f.c(); ++c) {
      const T* g = grad_refined.plane(b, c);
      const T* x = f.plane(b, c);
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += static_cast<double>(g[i]) * x[i];
      grad_mc.at(b, c, 0, 0) = static_cast<T>(acc);
    }
  }
  grads.input = scale_by_channel(grad_refined, mc);
  grads.channel = channel_attention_backward(grad_mc, cp, tape.channel);
  grads.input += grads.channel.input;
  return grads;
}

// ---------------------------------------------------------------------------
// CbamBlock

template <typename T>
CbamBlock<T>::CbamBlock(int channels, int reduction_ratio, int kernel_size)
    : fc1(Shape{channel_attention_hidden(channels, reduction_ratio), channels, 1, 1}),
      fc2(Shape{channels, channel_attention_hidden(channels, reduction_ratio), 1, 1}),
      spatial_weight(Shape{1, 2, kernel_size, kernel_size}),
      spatial_bias(Shape{1, 1, 1, 1}),
      channels_(channels),
      reduction_(reduction_ratio),
      kernel_(kernel_size) {
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw ConfigError("CBAM spatial kernel must be odd and positive");
  }
  fc1.fan_in = channels;
  fc2.fan_in = channel_attention_hidden(channels, reduction_ratio);
  spatial_weight.fan_in = 2 * kernel_size * kernel_size;
  // Zero bias: a fresh block maps an all-zero input to exactly 0.5.
  spatial_bias.init = Parameter<T>::Init::zeros;
  this->register_parameter("channel.fc1.weight", &fc1);
  this->register_parameter("channel.fc2.weight", &fc2);
  this->register_parameter("spatial.conv.weight", &spatial_weight);
  this->register_parameter("spatial.conv.bias", &spatial_bias);
}

template <typename T>
Tensor<T> CbamBlock<T>::forward(const Tensor<T>& x) {
  if (identity_) {
    has_tape_ = false;
    if (observer_) {
      observer_(name_,
                {AttentionMap<T>::Kind::channel, Tensor<T>(x.n(), x.c(), 1, 1, T(1))},
                {AttentionMap<T>::Kind::spatial, Tensor<T>(x.n(), 1, x.h(), x.w(), T(1))});
    }
    return x;
  }
  const bool keep = this->training_ || static_cast<bool>(observer_);
  CbamTape<T> tape;
  Tensor<T> out = cbam_apply(x, channel_view(), spatial_view(), keep ? &tape : nullptr);
  if (observer_) {
    observer_(name_, {AttentionMap<T>::Kind::channel, tape.channel.map},
              {AttentionMap<T>::Kind::spatial, tape.spatial.map});
  }
  if (this->training_) {
    tape_ = std::move(tape);
    has_tape_ = true;
  }
  return out;
}

template <typename T>
Tensor<T> CbamBlock<T>::backward(const Tensor<T>& grad_out) {
  if (identity_) return grad_out;
  if (!has_tape_) throw InputError("CbamBlock::backward without cached forward");
  CbamGrads<T> g = cbam_backward(grad_out, channel_view(), spatial_view(), tape_);
  fc1.grad += g.channel.fc1;
  fc2.grad += g.channel.fc2;
  spatial_weight.grad += g.spatial.kernel;
  spatial_bias.grad[0] += g.spatial.bias;
  tape_ = CbamTape<T>();
  has_tape_ = false;
  return std::move(g.input);
}

// ---------------------------------------------------------------------------
// Standalone layers

template <typename T>
ChannelAttentionLayer<T>::ChannelAttentionLayer(int channels, int reduction_ratio)
    : fc1(Shape{channel_attention_hidden(channels, reduction_ratio), channels, 1, 1}),
      fc2(Shape{channels, channel_attention_hidden(channels, reduction_ratio), 1, 1}),
      channels_(channels),
      reduction_(reduction_ratio) {
  fc1.fan_in = channels;
  fc2.fan_in = channel_attention_hidden(channels, reduction_ratio);
  this->register_parameter("fc1.weight", &fc1);
  this->register_parameter("fc2.weight", &fc2);
}

template <typename T>
Tensor<T> ChannelAttentionLayer<T>::forward(const Tensor<T>& x) {
  return channel_attention(x, view(), this->training_ ? &tape_ : nullptr).values;
}

template <typename T>
Tensor<T> ChannelAttentionLayer<T>::backward(const Tensor<T>& grad_map) {
  ChannelAttentionGrads<T> g = channel_attention_backward(grad_map, view(), tape_);
  fc1.grad += g.fc1;
  fc2.grad += g.fc2;
  return std::move(g.input);
}

template <typename T>
SpatialAttentionLayer<T>::SpatialAttentionLayer(int kernel_size)
    : weight(Shape{1, 2, kernel_size, kernel_size}), bias(Shape{1, 1, 1, 1}), kernel_(kernel_size) {
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw ConfigError("spatial attention kernel must be odd and positive");
  }
  weight.fan_in = 2 * kernel_size * kernel_size;
  bias.init = Parameter<T>::Init::zeros;
  this->register_parameter("conv.weight", &weight);
  this->register_parameter("conv.bias", &bias);
}

template <typename T>
Tensor<T> SpatialAttentionLayer<T>::forward(const Tensor<T>& x) {
  return spatial_attention(x, view(), this->training_ ? &tape_ : nullptr).values;
}

template <typename T>
Tensor<T> SpatialAttentionLayer<T>::backward(const Tensor<T>& grad_map) {
  SpatialAttentionGrads<T> g = spatial_attention_backward(grad_map, view(), tape_);
  weight.grad += g.kernel;
  bias.grad[0] += g.bias;
  return std::move(g.input);
}

#define PAVEPCI_INSTANTIATE_ATTENTION(T)                                                   \
  template struct ChannelAttentionParams<T>;                                               \
  template struct SpatialAttentionParams<T>;                                               \
  template ChannelAttentionView<T> view_of(const ChannelAttentionParams<T>&);              \
  template SpatialAttentionView<T> view_of(const SpatialAttentionParams<T>&);              \
  template AttentionMap<T> channel_attention(const Tensor<T>&, const ChannelAttentionView<T>&, \
                                             ChannelAttentionTape<T>*);                    \
  template ChannelAttentionGrads<T> channel_attention_backward(                            \
      const Tensor<T>&, const ChannelAttentionView<T>&, const ChannelAttentionTape<T>&);   \
  template AttentionMap<T> spatial_attention(const Tensor<T>&, const SpatialAttentionView<T>&, \
                                             SpatialAttentionTape<T>*);                    \
  template SpatialAttentionGrads<T> spatial_attention_backward(                            \
      const Tensor<T>&, const SpatialAttentionView<T>&, const SpatialAttentionTape<T>&);   \
  template Tensor<T> scale_by_channel(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> scale_by_location(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> cbam_apply(const Tensor<T>&, const ChannelAttentionView<T>&,          \
                                const SpatialAttentionView<T>&, CbamTape<T>*);             \
  template CbamGrads<T> cbam_backward(const Tensor<T>&, const ChannelAttentionView<T>&,    \
                                      const SpatialAttentionView<T>&, const CbamTape<T>&); \
  template class CbamBlock<T>;                                                             \
  template class ChannelAttentionLayer<T>;                                                 \
  template class SpatialAttentionLayer<T>;

PAVEPCI_INSTANTIATE_ATTENTION(float)
PAVEPCI_INSTANTIATE_ATTENTION(double)

#undef PAVEPCI_INSTANTIATE_ATTENTION

}  // namespace pavepci
