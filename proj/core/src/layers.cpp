#include "pavepci/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gemm.hpp"

namespace pavepci {

// ---------------------------------------------------------------------------
// Module

template <typename T>
void Module<T>::set_training(bool on) {
  training_ = on;
  for (auto& [name, child] : children_) child->set_training(on);
}

template <typename T>
void Module<T>::collect(const std::string& prefix,
                        std::vector<NamedParameter<T>>& ps,
                        std::vector<NamedBuffer<T>>* bs) {
  for (auto& [name, p] : params_) ps.push_back({prefix + name, p});
  if (bs != nullptr) {
    for (auto& [name, b] : buffers_) bs->push_back({prefix + name, b});
  }
  for (auto& [name, child] : children_) child->collect(prefix + name + ".", ps, bs);
}

template <typename T>
std::vector<NamedParameter<T>> Module<T>::named_parameters() {
  std::vector<NamedParameter<T>> ps;
  collect("", ps, nullptr);
  return ps;
}

template <typename T>
std::vector<NamedBuffer<T>> Module<T>::named_buffers() {
  std::vector<NamedParameter<T>> ps;
  std::vector<NamedBuffer<T>> bs;
  collect("", ps, &bs);
  return bs;
}

template <typename T>
void Module<T>::zero_grad() {
  for (auto& np : named_parameters()) np.param->grad.fill(T(0));
}

template <typename T>
std::size_t Module<T>::parameter_count() {
  std::size_t total = 0;
  for (auto& np : named_parameters()) total += np.param->value.size();
  return total;
}

template <typename T>
void Module<T>::visit(const std::function<void(const std::string&, Module&)>& fn,
                      const std::string& prefix) {
  fn(prefix, *this);
  for (auto& [name, child] : children_) {
    child->visit(fn, prefix.empty() ? name : prefix + "." + name);
  }
}

template <typename T>
void initialize_parameters(Module<T>& net, std::uint64_t seed) {
  using Init = typename Parameter<T>::Init;
  for (auto& np : net.named_parameters()) {
    Parameter<T>& p = *np.param;
    Rng rng(derive_seed(seed, np.name));
    const double fan_in = std::max(1, p.fan_in);
    switch (p.init) {
      case Init::kaiming_uniform: {
        const double bound = std::sqrt(6.0 / fan_in);
        for (auto& v : p.value.storage()) v = static_cast<T>(rng.uniform(-bound, bound));
        break;
      }
      case Init::uniform_fan_in: {
        const double bound = 1.0 / std::sqrt(fan_in);
        for (auto& v : p.value.storage()) v = static_cast<T>(rng.uniform(-bound, bound));
        break;
      }
      case Init::ones:
        p.value.fill(T(1));
        break;
      case Init::zeros:
        p.value.fill(T(0));
        break;
      case Init::keep:
        break;
    }
    p.grad.fill(T(0));
  }
}

// ---------------------------------------------------------------------------
// Conv2d

namespace {

// Upper bound on GEMM columns per chunk; small feature maps batch several
// images into one product.
constexpr std::size_t kColumnBudget = 8192;

template <typename T>
void im2col(const Tensor<T>& x, int b0, int nb, int k, int stride, int pad,
            int ho, int wo, T* col) {
  const int cin = x.c(), h = x.h(), w = x.w();
  const std::size_t p = static_cast<std::size_t>(ho) * wo;
  const std::size_t ncols = p * nb;
  for (int ci = 0; ci < cin; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + (static_cast<std::size_t>(ci * k + ky) * k + kx) * ncols;
        for (int j = 0; j < nb; ++j) {
          const T* src = x.plane(b0 + j, ci);
          T* dst = row + j * p;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride - pad + ky;
            T* drow = dst + static_cast<std::size_t>(oy) * wo;
            if (iy < 0 || iy >= h) {
              std::fill(drow, drow + wo, T(0));
              continue;
            }
            const T* srow = src + static_cast<std::size_t>(iy) * w;
            if (stride == 1) {
              for (int ox = 0; ox < wo; ++ox) {
                const int ix = ox - pad + kx;
                drow[ox] = (ix >= 0 && ix < w) ? srow[ix] : T(0);
              }
            } else {
              for (int ox = 0; ox < wo; ++ox) {
                const int ix = ox * stride - pad + kx;
                drow[ox] = (ix >= 0 && ix < w) ? srow[ix] : T(0);
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int b0, int nb, int k, int stride, int pad, int ho,
            int wo, Tensor<T>& dx) {
  const int cin = dx.c(), h = dx.h(), w = dx.w();
  const std::size_t p = static_cast<std::size_t>(ho) * wo;
  const std::size_t ncols = p * nb;
  for (int ci = 0; ci < cin; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + (static_cast<std::size_t>(ci * k + ky) * k + kx) * ncols;
        for (int j = 0; j < nb; ++j) {
          T* dst = dx.plane(b0 + j, ci);
          const T* src = row + j * p;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            T* drow = dst + static_cast<std::size_t>(iy) * w;
            const T* srow = src + static_cast<std::size_t>(oy) * wo;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < w) drow[ix] += srow[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Conv2d<T>::Conv2d(int in_channels, int out_channels, int kernel, int stride,
                  int padding, bool with_bias)
    : weight(Shape{out_channels, in_channels, kernel, kernel}),
      in_(in_channels),
      out_(out_channels),
      k_(kernel),
      stride_(stride),
      pad_(padding) {
  if (in_channels < 1 || out_channels < 1 || kernel < 1 || stride < 1 || padding < 0) {
    throw ConfigError("Conv2d: invalid geometry");
  }
  weight.fan_in = in_channels * kernel * kernel;
  this->register_parameter("weight", &weight);
  if (with_bias) {
    bias = std::make_unique<Parameter<T>>(Shape{1, out_channels, 1, 1});
    bias->fan_in = weight.fan_in;
    bias->init = Parameter<T>::Init::uniform_fan_in;
    this->register_parameter("bias", bias.get());
  }
}

template <typename T>
Shape Conv2d<T>::output_shape(const Shape& in) const {
  const int ho = (in.h + 2 * pad_ - k_) / stride_ + 1;
  const int wo = (in.w + 2 * pad_ - k_) / stride_ + 1;
  return Shape{in.n, out_, ho, wo};
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  if (x.c() != in_) {
    throw InputError("Conv2d: expected " + std::to_string(in_) +
                     " input channels, got " + x.shape().str());
  }
  if (x.h() + 2 * pad_ < k_ || x.w() + 2 * pad_ < k_) {
    throw InputError("Conv2d: input " + x.shape().str() + " smaller than kernel");
  }
  const Shape os = output_shape(x.shape());
  Tensor<T> out(os);
  const int kk = in_ * k_ * k_;
  const std::size_t p = os.plane();
  const int per_chunk =
      static_cast<int>(std::max<std::size_t>(1, kColumnBudget / std::max<std::size_t>(p, 1)));
  const bool direct = (k_ == 1 && stride_ == 1 && pad_ == 0);

  std::vector<T> col;
  std::vector<T> result;
  for (int b0 = 0; b0 < x.n(); b0 += per_chunk) {
    const int nb = std::min(per_chunk, x.n() - b0);
    const std::size_t ncols = p * nb;
    if (direct && nb == 1) {
      detail::gemm_nn<T>(out_, static_cast<int>(p), kk, weight.value.data(),
                         x.image(b0), out.image(b0));
    } else {
      col.resize(static_cast<std::size_t>(kk) * ncols);
      im2col(x, b0, nb, k_, stride_, pad_, os.h, os.w, col.data());
      result.resize(static_cast<std::size_t>(out_) * ncols);
      detail::gemm_nn<T>(out_, static_cast<int>(ncols), kk, weight.value.data(),
                         col.data(), result.data());
      for (int co = 0; co < out_; ++co) {
        for (int j = 0; j < nb; ++j) {
          std::copy_n(result.data() + co * ncols + j * p, p, out.plane(b0 + j, co));
        }
      }
    }
  }
  if (bias) {
    for (int b = 0; b < os.n; ++b) {
      for (int co = 0; co < out_; ++co) {
        T* dst = out.plane(b, co);
        const T bv = bias->value[co];
        for (std::size_t i = 0; i < p; ++i) dst[i] += bv;
      }
    }
  }
  if (this->training_) input_ = x;
  return out;
}


template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
  if (input_.empty()) throw InputError("Conv2d::backward without cached forward");
  const Tensor<T> x = std::move(input_);
  input_ = Tensor<T>();
  const Shape os = output_shape(x.shape());
  if (!(grad_out.shape() == os)) {
    throw InputError("Conv2d::backward: gradient shape " + grad_out.shape().str() +
                     " does not match output " + os.str());
  }
  Tensor<T> dx(x.shape());
  const int kk = in_ * k_ * k_;
  const std::size_t p = os.plane();
  const int per_chunk =
      static_cast<int>(std::max<std::size_t>(1, kColumnBudget / std::max<std::size_t>(p, 1)));
  const bool direct = (k_ == 1 && stride_ == 1 && pad_ == 0);

  std::vector<T> col;
  std::vector<T> dcol;
  std::vector<T> dres;
  for (int b0 = 0; b0 < x.n(); b0 += per_chunk) {
    const int nb = std::min(per_chunk, x.n() - b0);
    const std::size_t ncols = p * nb;
    if (direct && nb == 1) {
      detail::gemm_nt_acc<T>(out_, kk, static_cast<int>(p), grad_out.image(b0),
                             x.image(b0), weight.grad.data());
      detail::gemm_tn<T>(kk, static_cast<int>(p), out_, weight.value.data(),
                         grad_out.image(b0), dx.image(b0));
      continue;
    }
    dres.resize(static_cast<std::size_t>(out_) * ncols);
    for (int co = 0; co < out_; ++co) {
      for (int j = 0; j < nb; ++j) {
        std::copy_n(grad_out.plane(b0 + j, co), p, dres.data() + co * ncols + j * p);
      }
    }
    col.resize(static_cast<std::size_t>(kk) * ncols);
    im2col(x, b0, nb, k_, stride_, pad_, os.h, os.w, col.data());
    detail::gemm_nt_acc<T>(out_, kk, static_cast<int>(ncols), dres.data(), col.data(),
                           weight.grad.data());
    dcol.resize(col.size());
    detail::gemm_tn<T>(kk, static_cast<int>(ncols), out_, weight.value.data(),
                       dres.data(), dcol.data());
    col2im(dcol.data(), b0, nb, k_, stride_, pad_, os.h, os.w, dx);
  }
  if (bias) {
    for (int co = 0; co < out_; ++co) {
      double acc = 0.0;
      for (int b = 0; b < os.n; ++b) {
        const T* g = grad_out.plane(b, co);
        for (std::size_t i = 0; i < p; ++i) acc += g[i];
      }
      bias->grad[co] += static_cast<T>(acc);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(int channels, double eps, double momentum)
    : weight(Shape{1, channels, 1, 1}),
      bias(Shape{1, channels, 1, 1}),
      running_mean(Shape{1, channels, 1, 1}, T(0)),
      running_var(Shape{1, channels, 1, 1}, T(1)),
      channels_(channels),
      eps_(eps),
      momentum_(momentum) {
  weight.init = Parameter<T>::Init::ones;
  bias.init = Parameter<T>::Init::zeros;
  weight.value.fill(T(1));
  this->register_parameter("weight", &weight);
  this->register_parameter("bias", &bias);
  this->register_buffer("running_mean", &running_mean);
  this->register_buffer("running_var", &running_var);
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x) {
  if (x.c() != channels_) {
    throw InputError("BatchNorm2d: expected " + std::to_string(channels_) +
                     " channels, got " + x.shape().str());
  }
  Tensor<T> out(x.shape());
  const std::size_t p = x.shape().plane();
  if (!this->training_) {
    for (int c = 0; c < channels_; ++c) {
      const double inv = 1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps_);
      const T scale = static_cast<T>(weight.value[c] * inv);
      const T shift = static_cast<T>(bias.value[c] - running_mean[c] * weight.value[c] * inv);
      for (int b = 0; b < x.n(); ++b) {
        const T* src = x.plane(b, c);
        T* dst = out.plane(b, c);
        for (std::size_t i = 0; i < p; ++i) dst[i] = src[i] * scale + shift;
      }
    }
    return out;
  }

  const double m = static_cast<double>(x.n()) * p;
  xhat_ = Tensor<T>(x.shape());
  inv_std_.assign(channels_, 0.0);
  for (int c = 0; c < channels_; ++c) {
    double sum = 0.0;
    for (int b = 0; b < x.n(); ++b) sum += detail::plane_sum(x.plane(b, c), p);
    const double mean = sum / m;
    double sq = 0.0;
    for (int b = 0; b < x.n(); ++b) {
      sq += detail::plane_centered_sq(x.plane(b, c), p, static_cast<T>(mean));
    }
    const double var = sq / m;
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[c] = inv;
    const T g = weight.value[c];
    const T be = bias.value[c];
    for (int b = 0; b < x.n(); ++b) {
      auto src = detail::carr(x.plane(b, c), p);
      auto xh = detail::arr(xhat_.plane(b, c), p);
      xh = (src - static_cast<T>(mean)) * static_cast<T>(inv);
      detail::arr(out.plane(b, c), p) = xh * g + be;
    }
    const double unbiased = m > 1 ? var * m / (m - 1) : var;
    running_mean[c] = static_cast<T>((1 - momentum_) * running_mean[c] + momentum_ * mean);
    running_var[c] = static_cast<T>((1 - momentum_) * running_var[c] + momentum_ * unbiased);
  }
  return out;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& grad_out) {
  if (xhat_.empty()) throw InputError("BatchNorm2d::backward without cached forward");
  grad_out.require_same_shape(xhat_, "BatchNorm2d::backward");
  Tensor<T> dx(grad_out.shape());
  const std::size_t p = grad_out.shape().plane();
  const double m = static_cast<double>(grad_out.n()) * p;
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int b = 0; b < grad_out.n(); ++b) {
      const T* g = grad_out.plane(b, c);
      sum_dy += detail::plane_sum(g, p);
      sum_dy_xhat += detail::plane_dot(g, xhat_.plane(b, c), p);
    }
    weight.grad[c] += static_cast<T>(sum_dy_xhat);
    bias.grad[c] += static_cast<T>(sum_dy);
    const T k = static_cast<T>(weight.value[c] * inv_std_[c]);
    const T mean_dy = static_cast<T>(sum_dy / m);
    const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / m);
    for (int b = 0; b < grad_out.n(); ++b) {
      auto g = detail::carr(grad_out.plane(b, c), p);
      auto xh = detail::carr(xhat_.plane(b, c), p);
      detail::arr(dx.plane(b, c), p) = k * (g - mean_dy - xh * mean_dy_xhat);
    }
  }
  xhat_ = Tensor<T>();
  return dx;
}

// ---------------------------------------------------------------------------
// ReLU

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const std::size_t n = x.size();
  const T* src = x.data();
  T* dst = out.data();
  for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] > T(0) ? src[i] : T(0);
  if (this->training_) {
    shape_ = x.shape();
    mask_.resize(n);
    for (std::size_t i = 0; i < n; ++i) mask_[i] = src[i] > T(0);
  }
  return out;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& grad_out) {
  if (!(grad_out.shape() == shape_) || mask_.size() != grad_out.size()) {
    throw InputError("ReLU::backward: no matching cached forward");
  }
  Tensor<T> dx(grad_out.shape());
  const T* g = grad_out.data();
  T* d = dx.data();
  for (std::size_t i = 0; i < mask_.size(); ++i) d[i] = mask_[i] ? g[i] : T(0);
  mask_.clear();
  mask_.shrink_to_fit();
  return dx;
}

// ---------------------------------------------------------------------------
// Pooling

template <typename T>
MaxPool2d<T>::MaxPool2d(int kernel, int stride, int padding)
    : k_(kernel), stride_(stride), pad_(padding) {}

template <typename T>
Tensor<T> MaxPool2d<T>::forward(const Tensor<T>& x) {
  const int ho = (x.h() + 2 * pad_ - k_) / stride_ + 1;
  const int wo = (x.w() + 2 * pad_ - k_) / stride_ + 1;
  if (ho < 1 || wo < 1) throw InputError("MaxPool2d: input " + x.shape().str() + " too small");
  Tensor<T> out(x.n(), x.c(), ho, wo);
  const bool keep = this->training_;
  if (keep) {
    in_shape_ = x.shape();
    argmax_.assign(out.size(), -1);
  }
  std::size_t o = 0;
  for (int b = 0; b < x.n(); ++b) {
    for (int c = 0; c < x.c(); ++c) {
      const T* src = x.plane(b, c);
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox, ++o) {
          T best = -std::numeric_limits<T>::infinity();
          int best_idx = -1;
          for (int ky = 0; ky < k_; ++ky) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= x.h()) continue;
            for (int kx = 0; kx < k_; ++kx) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix < 0 || ix >= x.w()) continue;
              const T v = src[iy * x.w() + ix];
              if (best_idx < 0 || v > best) {
                best = v;
                best_idx = iy * x.w() + ix;
              }
            }
          }
          out[o] = best;
          if (keep) argmax_[o] = best_idx;
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> MaxPool2d<T>::backward(const Tensor<T>& grad_out) {
  if (argmax_.size() != grad_out.size()) throw InputError("MaxPool2d::backward: no cached forward");
  Tensor<T> dx(in_shape_);
  const std::size_t per_plane = grad_out.shape().plane();
  for (std::size_t o = 0; o < grad_out.size(); ++o) {
    const std::size_t plane = o / per_plane;
    dx[plane * in_shape_.plane() + argmax_[o]] += grad_out[o];
  }
  argmax_.clear();
  return dx;
}

template <typename T>
AvgPool2d<T>::AvgPool2d(int kernel, int stride) : k_(kernel), stride_(stride) {}

template <typename T>
Tensor<T> AvgPool2d<T>::forward(const Tensor<T>& x) {
  const int ho = (x.h() - k_) / stride_ + 1;
  const int wo = (x.w() - k_) / stride_ + 1;
  if (x.h() < k_ || x.w() < k_) throw InputError("AvgPool2d: input " + x.shape().str() + " too small");
  Tensor<T> out(x.n(), x.c(), ho, wo);
  const T scale = T(1) / static_cast<T>(k_ * k_);
  for (int b = 0; b < x.n(); ++b) {
    for (int c = 0; c < x.c(); ++c) {
      const T* src = x.plane(b, c);
      T* dst = out.plane(b, c);
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          T acc = 0;
          for (int ky = 0; ky < k_; ++ky) {
            for (int kx = 0; kx < k_; ++kx) {
              acc += src[(oy * stride_ + ky) * x.w() + ox * stride_ + kx];
            }
          }
          dst[oy * wo + ox] = acc * scale;
        }
      }
    }
  }
  if (this->training_) in_shape_ = x.shape();
  return out;
}

template <typename T>
Tensor<T> AvgPool2d<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx(in_shape_);
  const T scale = T(1) / static_cast<T>(k_ * k_);
  const int ho = grad_out.h(), wo = grad_out.w();
  for (int b = 0; b < grad_out.n(); ++b) {
    for (int c = 0; c < grad_out.c(); ++c) {
      const T* g = grad_out.plane(b, c);
      T* d = dx.plane(b, c);
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          const T v = g[oy * wo + ox] * scale;
          for (int ky = 0; ky < k_; ++ky) {
            for (int kx = 0; kx < k_; ++kx) {
              d[(oy * stride_ + ky) * in_shape_.w + ox * stride_ + kx] += v;
            }
          }
        }
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(const Tensor<T>& x) {
  if (x.shape().plane() == 0) throw InputError("GlobalAvgPool: empty spatial extent");
  Tensor<T> out(x.n(), x.c(), 1, 1);
  const std::size_t p = x.shape().plane();
  for (int b = 0; b < x.n(); ++b) {
    for (int c = 0; c < x.c(); ++c) {
      const T* src = x.plane(b, c);
      double acc = 0.0;
      for (std::size_t i = 0; i < p; ++i) acc += src[i];
      out.at(b, c, 0, 0) = static_cast<T>(acc / static_cast<double>(p));
    }
  }
  if (this->training_) in_shape_ = x.shape();
  return out;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx(in_shape_);
  const std::size_t p = in_shape_.plane();
  const T scale = T(1) / static_cast<T>(p);
  for (int b = 0; b < in_shape_.n; ++b) {
    for (int c = 0; c < in_shape_.c; ++c) {
      const T v = grad_out.at(b, c, 0, 0) * scale;
      T* d = dx.plane(b, c);
      std::fill(d, d + p, v);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Linear

template <typename T>
Linear<T>::Linear(int in_features, int out_features, bool with_bias)
    : weight(Shape{out_features, in_features, 1, 1}), in_(in_features), out_(out_features) {
  if (in_features < 1 || out_features < 1) throw ConfigError("Linear: invalid size");
  weight.fan_in = in_features;
  this->register_parameter("weight", &weight);
  if (with_bias) {
    bias = std::make_unique<Parameter<T>>(Shape{1, out_features, 1, 1});
    bias->fan_in = in_features;
    bias->init = Parameter<T>::Init::uniform_fan_in;
    this->register_parameter("bias", bias.get());
  }
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) {
  const std::size_t features = static_cast<std::size_t>(x.c()) * x.shape().plane();
  if (features != static_cast<std::size_t>(in_)) {
    throw InputError("Linear: expected " + std::to_string(in_) + " features, got " +
                     x.shape().str());
  }
  Tensor<T> out(x.n(), out_, 1, 1);
  // out(B x out) = x(B x in) * W^T
  detail::gemm_nt_acc<T>(x.n(), out_, in_, x.data(), weight.value.data(), out.data());
  if (bias) {
    for (int b = 0; b < x.n(); ++b) {
      for (int o = 0; o < out_; ++o) out.at(b, o, 0, 0) += bias->value[o];
    }
  }
  if (this->training_) input_ = x;
  return out;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& grad_out) {
  if (input_.empty()) throw InputError("Linear::backward without cached forward");
  if (grad_out.n() != input_.n() || grad_out.c() != out_) {
    throw InputError("Linear::backward: gradient shape " + grad_out.shape().str());
  }
  const int batch = input_.n();
  // dW(out x in) += g^T(out x B) * x(B x in)
  {
    std::vector<T> gt(static_cast<std::size_t>(out_) * batch);
    for (int b = 0; b < batch; ++b) {
      for (int o = 0; o < out_; ++o) gt[o * batch + b] = grad_out.at(b, o, 0, 0);
    }
    detail::gemm_nn<T>(out_, in_, batch, gt.data(), input_.data(), weight.grad.data(), true);
  }
  if (bias) {
    for (int o = 0; o < out_; ++o) {
      double acc = 0.0;
      for (int b = 0; b < batch; ++b) acc += grad_out.at(b, o, 0, 0);
      bias->grad[o] += static_cast<T>(acc);
    }
  }
  Tensor<T> dx(input_.shape());
  // dx(B x in) = g(B x out) * W(out x in)
  detail::gemm_nn<T>(batch, in_, out_, grad_out.data(), weight.value.data(), dx.data());
  input_ = Tensor<T>();
  return dx;
}

// ---------------------------------------------------------------------------
// Sequential

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x) {
  if (layers_.empty()) return x;
  Tensor<T> h = layers_.front().second->forward(x);
  for (std::size_t i = 1; i < layers_.size(); ++i) h = layers_[i].second->forward(h);
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& grad_out) {
  if (layers_.empty()) return grad_out;
  Tensor<T> g = layers_.back().second->backward(grad_out);
  for (std::size_t i = layers_.size() - 1; i-- > 0;) g = layers_[i].second->backward(g);
  return g;
}

#define PAVEPCI_INSTANTIATE_LAYERS(T)                       \
  template class Module<T>;                                 \
  template void initialize_parameters<T>(Module<T>&, std::uint64_t); \
  template class Conv2d<T>;                                 \
  template class BatchNorm2d<T>;                            \
  template class ReLU<T>;                                   \
  template class MaxPool2d<T>;                              \
  template class AvgPool2d<T>;                              \
  template class GlobalAvgPool<T>;                          \
  template class Linear<T>;                                 \
  template class Sequential<T>;

PAVEPCI_INSTANTIATE_LAYERS(float)
PAVEPCI_INSTANTIATE_LAYERS(double)

#undef PAVEPCI_INSTANTIATE_LAYERS

}  // namespace pavepci
