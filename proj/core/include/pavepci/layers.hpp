#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pavepci/random.hpp"
#include "pavepci/tensor.hpp"

namespace pavepci {

template <typename T>
struct Parameter {
  Tensor<T> value;
  Tensor<T> grad;
  // Fan-in used by initialize_parameters(); 0 means "leave as constructed".
  int fan_in = 0;
  enum class Init { kaiming_uniform, uniform_fan_in, ones, zeros, keep } init =
      Init::kaiming_uniform;

  explicit Parameter(Shape shape) : value(shape), grad(shape) {}
};

template <typename T>
struct NamedParameter {
  std::string name;
  Parameter<T>* param;
};

template <typename T>
struct NamedBuffer {
  std::string name;
  Tensor<T>* tensor;
};

// Base class for differentiable layers.
//
// forward() caches whatever backward() needs only while the module is in
// training mode. backward() takes dLoss/dOutput, accumulates parameter
// gradients into Parameter::grad and returns dLoss/dInput. Modules register
// their parameters, buffers and children by name so that a whole network can
// be traversed with dotted names ("layer1.0.conv1.weight").
//
// Modules are neither copyable nor movable: registries hold raw pointers to
// members.
template <typename T>
class Module {
 public:
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  virtual ~Module() = default;

  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;

  void set_training(bool on);
  bool training() const { return training_; }

  std::vector<NamedParameter<T>> named_parameters();
  std::vector<NamedBuffer<T>> named_buffers();
  void zero_grad();
  std::size_t parameter_count();

  // Visits every module in the tree (pre-order) with its dotted path.
  void visit(const std::function<void(const std::string&, Module&)>& fn,
             const std::string& prefix = "");

 protected:
  void register_parameter(std::string name, Parameter<T>* p) {
    params_.emplace_back(std::move(name), p);
  }
  void register_buffer(std::string name, Tensor<T>* t) {
    buffers_.emplace_back(std::move(name), t);
  }
  void register_child(std::string name, Module* m) {
    children_.emplace_back(std::move(name), m);
  }

  bool training_ = false;

 private:
  void collect(const std::string& prefix, std::vector<NamedParameter<T>>& ps,
               std::vector<NamedBuffer<T>>* bs);

  std::vector<std::pair<std::string, Parameter<T>*>> params_;
  std::vector<std::pair<std::string, Tensor<T>*>> buffers_;
  std::vector<std::pair<std::string, Module*>> children_;
};

// Draws every parameter from a stream derived from (seed, dotted name), so
// two networks that share parameter names share their initial values.
template <typename T>
void initialize_parameters(Module<T>& net, std::uint64_t seed);

template <typename T>
class Conv2d : public Module<T> {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride = 1,
         int padding = 0, bool bias = false);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return k_; }
  int stride() const { return stride_; }
  int padding() const { return pad_; }
  Shape output_shape(const Shape& in) const;

  Parameter<T> weight;
  std::unique_ptr<Parameter<T>> bias;

 private:
  int in_, out_, k_, stride_, pad_;
  Tensor<T> input_;
};

template <typename T>
class BatchNorm2d : public Module<T> {
 public:
  explicit BatchNorm2d(int channels, double eps = 1e-5, double momentum = 0.1);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

  Parameter<T> weight;
  Parameter<T> bias;
  Tensor<T> running_mean;
  Tensor<T> running_var;

 private:
  int channels_;
  double eps_, momentum_;
  Tensor<T> xhat_;
  std::vector<double> inv_std_;
};

template <typename T>
class ReLU : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  Shape shape_{};
  std::vector<std::uint8_t> mask_;
};

// Max pooling; padded cells never win. Ties resolve to the first maximum in
// scan order.
template <typename T>
class MaxPool2d : public Module<T> {
 public:
  MaxPool2d(int kernel, int stride, int padding = 0);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  int k_, stride_, pad_;
  Shape in_shape_{};
  std::vector<std::int32_t> argmax_;
};

// Average pooling without padding.
template <typename T>
class AvgPool2d : public Module<T> {
 public:
  AvgPool2d(int kernel, int stride);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  int k_, stride_;
  Shape in_shape_{};
};

// (B,C,H,W) -> (B,C,1,1).
template <typename T>
class GlobalAvgPool : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  Shape in_shape_{};
};

// Dense layer over the flattened C*H*W features; output is (B,out,1,1).
template <typename T>
class Linear : public Module<T> {
 public:
  Linear(int in_features, int out_features, bool bias = true);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

  int in_features() const { return in_; }
  int out_features() const { return out_; }

  Parameter<T> weight;
  std::unique_ptr<Parameter<T>> bias;

 private:
  int in_, out_;
  Tensor<T> input_;
};

template <typename T>
class Identity : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override { return x; }
  Tensor<T> backward(const Tensor<T>& g) override { return g; }
};

template <typename T>
class Sequential : public Module<T> {
 public:
  template <typename M, typename... Args>
  M& add(std::string name, Args&&... args) {
    auto owned = std::make_unique<M>(std::forward<Args>(args)...);
    M& ref = *owned;
    this->register_child(name, owned.get());
    layers_.emplace_back(std::move(name), std::move(owned));
    return ref;
  }
  Module<T>& add_module(std::string name, std::unique_ptr<Module<T>> m) {
    Module<T>& ref = *m;
    this->register_child(name, m.get());
    layers_.emplace_back(std::move(name), std::move(m));
    return ref;
  }

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

  std::size_t size() const { return layers_.size(); }
  Module<T>& operator[](std::size_t i) { return *layers_[i].second; }
  const std::string& name_of(std::size_t i) const { return layers_[i].first; }

 private:
  std::vector<std::pair<std::string, std::unique_ptr<Module<T>>>> layers_;
};

}  // namespace pavepci
