#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "uigwm/error.hpp"

namespace uigwm {

// Dense 4-D array in NCHW layout, double precision, contiguous.
// The universal image/batch currency of the project: values are pixel
// intensities in [0,1] when the tensor represents images, but the type
// itself does not enforce that (gradients and residuals share it).
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, double fill = 0.0)
      : n_(n), c_(c), h_(h), w_(w),
        v_(static_cast<std::size_t>(n) * c * h * w, fill) {}

  static Tensor zeros_like(const Tensor& o) { return Tensor(o.n_, o.c_, o.h_, o.w_); }

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  std::size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }
  // Elements per sample.
  std::size_t sample_size() const { return static_cast<std::size_t>(c_) * h_ * w_; }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }

  double& operator()(int i, int ch, int y, int x) {
    return v_[((static_cast<std::size_t>(i) * c_ + ch) * h_ + y) * w_ + x];
  }
  double operator()(int i, int ch, int y, int x) const {
    return v_[((static_cast<std::size_t>(i) * c_ + ch) * h_ + y) * w_ + x];
  }
  double& flat(std::size_t i) { return v_[i]; }
  double flat(std::size_t i) const { return v_[i]; }

  bool same_shape(const Tensor& o) const {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }
  std::string shape_str() const {
    return std::to_string(n_) + "x" + std::to_string(c_) + "x" +
           std::to_string(h_) + "x" + std::to_string(w_);
  }

  // Same storage, new dims; total size must match.
  Tensor reshaped(int n, int c, int h, int w) const {
    if (static_cast<std::size_t>(n) * c * h * w != size())
      throw ShapeMismatch("reshape size mismatch for " + shape_str());
    Tensor t = *this;
    t.n_ = n; t.c_ = c; t.h_ = h; t.w_ = w;
    return t;
  }

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<double> v_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
  if (!a.same_shape(b))
    throw ShapeMismatch(std::string(where) + ": " + a.shape_str() + " vs " + b.shape_str());
}

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
    throw ShapeMismatch("concat_channels: " + a.shape_str() + " vs " + b.shape_str());
  Tensor out(a.n(), a.c() + b.c(), a.h(), a.w());
  const std::size_t plane = static_cast<std::size_t>(a.h()) * a.w();
  for (int i = 0; i < a.n(); ++i) {
    std::copy(a.data() + i * a.sample_size(), a.data() + (i + 1) * a.sample_size(),
              out.data() + i * out.sample_size());
    std::copy(b.data() + i * b.sample_size(), b.data() + (i + 1) * b.sample_size(),
              out.data() + i * out.sample_size() + a.c() * plane);
  }
  return out;
}

inline Tensor slice_channels(const Tensor& x, int c0, int c1) {
  Tensor out(x.n(), c1 - c0, x.h(), x.w());
  const std::size_t plane = static_cast<std::size_t>(x.h()) * x.w();
  for (int i = 0; i < x.n(); ++i)
    std::copy(x.data() + i * x.sample_size() + c0 * plane,
              x.data() + i * x.sample_size() + c1 * plane,
              out.data() + i * out.sample_size());
  return out;
}

// Rows [i0, i1) of the batch.
inline Tensor slice_batch(const Tensor& x, int i0, int i1) {
  Tensor out(i1 - i0, x.c(), x.h(), x.w());
  std::copy(x.data() + i0 * x.sample_size(), x.data() + i1 * x.sample_size(), out.data());
  return out;
}

inline Tensor gather_batch(const Tensor& x, std::span<const int> idx) {
  Tensor out(static_cast<int>(idx.size()), x.c(), x.h(), x.w());
  for (std::size_t k = 0; k < idx.size(); ++k)
    std::copy(x.data() + idx[k] * x.sample_size(),
              x.data() + (idx[k] + 1) * x.sample_size(),
              out.data() + k * x.sample_size());
  return out;
}

inline Tensor concat_batch(const Tensor& a, const Tensor& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.c() != b.c() || a.h() != b.h() || a.w() != b.w())
    throw ShapeMismatch("concat_batch: " + a.shape_str() + " vs " + b.shape_str());
  Tensor out(a.n() + b.n(), a.c(), a.h(), a.w());
  std::copy(a.data(), a.data() + a.size(), out.data());
  std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
  return out;
}

// Single image (n=1) replicated n times.
inline Tensor repeat_batch(const Tensor& one, int n) {
  Tensor out(n, one.c(), one.h(), one.w());
  for (int i = 0; i < n; ++i)
    std::copy(one.data(), one.data() + one.sample_size(), out.data() + i * one.sample_size());
  return out;
}

inline void clamp01_inplace(Tensor& t) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    double v = t.flat(i);
    t.flat(i) = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  }
}

inline Tensor clamp01(Tensor t) {
  clamp01_inplace(t);
  return t;
}

inline double mean(const Tensor& t) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) s += t.flat(i);
  return t.size() ? s / static_cast<double>(t.size()) : 0.0;
}

// Mean squared error over every element (batch, channels, pixels).
inline double mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.flat(i) - b.flat(i);
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

// MSE of a batch against one broadcast target image.
inline double mse_vs_single(const Tensor& batch, const Tensor& target) {
  if (batch.c() != target.c() || batch.h() != target.h() || batch.w() != target.w() ||
      target.n() != 1)
    throw ShapeMismatch("mse_vs_single: " + batch.shape_str() + " vs " + target.shape_str());
  double s = 0.0;
  const std::size_t m = batch.sample_size();
  for (int i = 0; i < batch.n(); ++i) {
    const double* p = batch.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double d = p[j] - target.data()[j];
      s += d * d;
    }
  }
  return s / static_cast<double>(batch.size());
}

inline bool all_finite(const Tensor& t) {
  for (std::size_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(t.flat(i))) return false;
  return true;
}

inline bool in_unit_range(const Tensor& t) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double v = t.flat(i);
    if (!(v >= 0.0 && v <= 1.0)) return false;
  }
  return true;
}

}  // namespace uigwm
