#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "uigwm/rng.hpp"
#include "uigwm/tensor.hpp"

// Minimal trainable-layer stack: double precision, explicit forward/backward,
// CPU only. Layers cache what they need during forward; backward must be
// called on the most recent forward.
namespace uigwm::nn {

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m, v;  // Adam moments, sized lazily

  void zero_grad() { grad = Tensor::zeros_like(value); }
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x) = 0;
  // Gradient of the loss w.r.t. this layer's input; accumulates into param grads.
  virtual Tensor backward(const Tensor& gy) = 0;
  virtual void collect_params(std::vector<Param*>& out) {}
};

class Conv2d : public Layer {
 public:
  Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng,
         double init_scale = 1.0);
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& gy) override;
  void collect_params(std::vector<Param*>& out) override;

  int out_h(int h) const { return (h + 2 * pad_ - kernel_) / stride_ + 1; }
  int out_w(int w) const { return (w + 2 * pad_ - kernel_) / stride_ + 1; }

 private:
  int in_ch_, out_ch_, kernel_, stride_, pad_;
  Param w_, b_;
  Tensor x_;
};

class Linear : public Layer {
 public:
  Linear(int in_features, int out_features, Rng& rng, double init_scale = 1.0);
  Tensor forward(const Tensor& x) override;  // x: n x in x 1 x 1
  Tensor backward(const Tensor& gy) override;
  void collect_params(std::vector<Param*>& out) override;

 private:
  int in_, out_;
  Param w_, b_;
  Tensor x_;
};

class ReLU : public Layer {
 public:
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& gy) override;

 private:
  Tensor x_;
};

class LeakyReLU : public Layer {
 public:
  explicit LeakyReLU(double slope = 0.2) : slope_(slope) {}
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& gy) override;

 private:
  double slope_;
  Tensor x_;
};

class Sigmoid : public Layer {
 public:
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& gy) override;

 private:
  Tensor y_;
};

class Tanh : public Layer {
 public:
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& gy) override;

 private:
  Tensor y_;
};

// Clamp with pass-through gradient strictly inside [lo, hi].
class Clamp : public Layer {
 public:
  Clamp(double lo, double hi) : lo_(lo), hi_(hi) {}
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& gy) override;

 private:
  double lo_, hi_;
  Tensor x_;
};

class NearestUpsample2x : public Layer {
 public:
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& gy) override;

 private:
  int in_h_ = 0, in_w_ = 0;
};

// Normalizes over (C/G, H, W) per sample and group, then per-channel affine.
class GroupNorm : public Layer {
 public:
  GroupNorm(int groups, int channels, double eps = 1e-5);
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& gy) override;
  void collect_params(std::vector<Param*>& out) override;

 private:
  int groups_, channels_;
  double eps_;
  Param gamma_, beta_;
  Tensor xhat_;
  std::vector<double> inv_std_;  // n * groups
};

class GlobalAvgPool : public Layer {
 public:
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& gy) override;

 private:
  int in_h_ = 0, in_w_ = 0;
};

class Sequential : public Layer {
 public:
  Sequential() = default;
  Sequential& add(std::unique_ptr<Layer> layer) {
    layers_.push_back(std::move(layer));
    return *this;
  }
  template <typename L, typename... Args>
  Sequential& emplace(Args&&... args) {
    layers_.push_back(std::make_unique<L>(std::forward<Args>(args)...));
    return *this;
  }
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& gy) override;
  void collect_params(std::vector<Param*>& out) override;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  void step(std::span<Param* const> params);
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
};

inline void zero_grads(std::span<Param* const> params) {
  for (Param* p : params) p->zero_grad();
}

inline std::size_t param_count(std::span<Param* const> params) {
  std::size_t n = 0;
  for (const Param* p : params) n += p->value.size();
  return n;
}

// Gradient of mean-squared error w.r.t. `pred`: 2*(pred - target)/numel.
Tensor mse_grad(const Tensor& pred, const Tensor& target);
// Same with a single broadcast target image.
Tensor mse_grad_vs_single(const Tensor& pred, const Tensor& target);

}  // namespace uigwm::nn
