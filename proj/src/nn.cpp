#include "uigwm/nn.hpp"

#include <Eigen/Core>

#include <cmath>

namespace uigwm::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using MapRowC = Eigen::Map<const RowMat>;

void fill_normal(Tensor& t, Rng& rng, double stddev) {
  for (std::size_t i = 0; i < t.size(); ++i) t.flat(i) = rng.normal(0.0, stddev);
}

// Patch matrix of one sample: rows (ic*k*k), cols (oh*ow). Zero padding.
void im2col(const Tensor& x, int sample, int kernel, int stride, int pad, int oh, int ow,
            RowMat& cols) {
  const int ic = x.c(), h = x.h(), w = x.w();
  cols.resize(ic * kernel * kernel, oh * ow);
  for (int ci = 0; ci < ic; ++ci)
    for (int ky = 0; ky < kernel; ++ky)
      for (int kx = 0; kx < kernel; ++kx) {
        const int row = (ci * kernel + ky) * kernel + kx;
        double* dst = cols.data() + static_cast<std::size_t>(row) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int y = oy * stride - pad + ky;
          if (y < 0 || y >= h) {
            std::fill(dst + oy * ow, dst + (oy + 1) * ow, 0.0);
            continue;
          }
          for (int ox = 0; ox < ow; ++ox) {
            const int px = ox * stride - pad + kx;
            dst[oy * ow + ox] = (px < 0 || px >= w) ? 0.0 : x(sample, ci, y, px);
          }
        }
      }
}

void col2im_add(const RowMat& cols, Tensor& dx, int sample, int kernel, int stride, int pad,
                int oh, int ow) {
  const int ic = dx.c(), h = dx.h(), w = dx.w();
  for (int ci = 0; ci < ic; ++ci)
    for (int ky = 0; ky < kernel; ++ky)
      for (int kx = 0; kx < kernel; ++kx) {
        const int row = (ci * kernel + ky) * kernel + kx;
        const double* src = cols.data() + static_cast<std::size_t>(row) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int y = oy * stride - pad + ky;
          if (y < 0 || y >= h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int px = ox * stride - pad + kx;
            if (px >= 0 && px < w) dx(sample, ci, y, px) += src[oy * ow + ox];
          }
        }
      }
}

}  // namespace

// ---- Conv2d ----

Conv2d::Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng,
               double init_scale)
    : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride), pad_(pad) {
  w_.value = Tensor(out_ch, in_ch, kernel, kernel);
  b_.value = Tensor(1, out_ch, 1, 1);
  const double stddev = init_scale * std::sqrt(2.0 / (in_ch * kernel * kernel));
  fill_normal(w_.value, rng, stddev);
  w_.zero_grad();
  b_.zero_grad();
}

Tensor Conv2d::forward(const Tensor& x) {
  if (x.c() != in_ch_)
    throw ShapeMismatch("Conv2d: expected " + std::to_string(in_ch_) + " channels, got " +
                        x.shape_str());
  x_ = x;
  const int oh = out_h(x.h()), ow = out_w(x.w());
  Tensor y(x.n(), out_ch_, oh, ow);
  MapRowC wmat(w_.value.data(), out_ch_, in_ch_ * kernel_ * kernel_);
  RowMat cols;
  for (int i = 0; i < x.n(); ++i) {
    im2col(x, i, kernel_, stride_, pad_, oh, ow, cols);
    MapRow ymat(y.data() + i * y.sample_size(), out_ch_, oh * ow);
    ymat.noalias() = wmat * cols;
    for (int o = 0; o < out_ch_; ++o)
      ymat.row(o).array() += b_.value.flat(static_cast<std::size_t>(o));
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& gy) {
  const int oh = gy.h(), ow = gy.w();
  Tensor dx = Tensor::zeros_like(x_);
  MapRowC wmat(w_.value.data(), out_ch_, in_ch_ * kernel_ * kernel_);
  MapRow dwmat(w_.grad.data(), out_ch_, in_ch_ * kernel_ * kernel_);
  RowMat cols, dcols;
  for (int i = 0; i < x_.n(); ++i) {
    MapRowC gmat(gy.data() + i * gy.sample_size(), out_ch_, oh * ow);
    im2col(x_, i, kernel_, stride_, pad_, oh, ow, cols);
    dwmat.noalias() += gmat * cols.transpose();
    dcols.noalias() = wmat.transpose() * gmat;
    col2im_add(dcols, dx, i, kernel_, stride_, pad_, oh, ow);
    for (int o = 0; o < out_ch_; ++o)
      b_.grad.flat(static_cast<std::size_t>(o)) += gmat.row(o).sum();
  }
  return dx;
}

void Conv2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&w_);
  out.push_back(&b_);
}

// ---- Linear ----

Linear::Linear(int in_features, int out_features, Rng& rng, double init_scale)
    : in_(in_features), out_(out_features) {
  w_.value = Tensor(out_features, in_features, 1, 1);
  b_.value = Tensor(1, out_features, 1, 1);
  fill_normal(w_.value, rng, init_scale * std::sqrt(2.0 / in_features));
  w_.zero_grad();
  b_.zero_grad();
}

Tensor Linear::forward(const Tensor& x) {
  if (static_cast<int>(x.sample_size()) != in_)
    throw ShapeMismatch("Linear: expected " + std::to_string(in_) + " features, got " +
                        x.shape_str());
  x_ = x;
  Tensor y(x.n(), out_, 1, 1);
  MapRowC xmat(x.data(), x.n(), in_);
  MapRowC wmat(w_.value.data(), out_, in_);
  MapRow ymat(y.data(), x.n(), out_);
  ymat.noalias() = xmat * wmat.transpose();
  for (int o = 0; o < out_; ++o)
    ymat.col(o).array() += b_.value.flat(static_cast<std::size_t>(o));
  return y;
}

Tensor Linear::backward(const Tensor& gy) {
  Tensor dx = Tensor::zeros_like(x_);
  MapRowC gmat(gy.data(), gy.n(), out_);
  MapRowC xmat(x_.data(), x_.n(), in_);
  MapRowC wmat(w_.value.data(), out_, in_);
  MapRow dwmat(w_.grad.data(), out_, in_);
  MapRow dxmat(dx.data(), dx.n(), in_);
  dwmat.noalias() += gmat.transpose() * xmat;
  dxmat.noalias() = gmat * wmat;
  for (int o = 0; o < out_; ++o)
    b_.grad.flat(static_cast<std::size_t>(o)) += gmat.col(o).sum();
  return dx;
}

void Linear::collect_params(std::vector<Param*>& out) {
  out.push_back(&w_);
  out.push_back(&b_);
}

// ---- activations ----

Tensor ReLU::forward(const Tensor& x) {
  x_ = x;
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y.flat(i) < 0.0) y.flat(i) = 0.0;
  return y;
}

Tensor ReLU::backward(const Tensor& gy) {
  Tensor dx = gy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (x_.flat(i) <= 0.0) dx.flat(i) = 0.0;
  return dx;
}

Tensor LeakyReLU::forward(const Tensor& x) {
  x_ = x;
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y.flat(i) < 0.0) y.flat(i) *= slope_;
  return y;
}

Tensor LeakyReLU::backward(const Tensor& gy) {
  Tensor dx = gy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (x_.flat(i) <= 0.0) dx.flat(i) *= slope_;
  return dx;
}

Tensor Sigmoid::forward(const Tensor& x) {
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y.flat(i) = 1.0 / (1.0 + std::exp(-y.flat(i)));
  y_ = y;
  return y;
}

Tensor Sigmoid::backward(const Tensor& gy) {
  Tensor dx = gy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    const double s = y_.flat(i);
    dx.flat(i) *= s * (1.0 - s);
  }
  return dx;
}

Tensor Tanh::forward(const Tensor& x) {
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y.flat(i) = std::tanh(y.flat(i));
  y_ = y;
  return y;
}

Tensor Tanh::backward(const Tensor& gy) {
  Tensor dx = gy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    const double t = y_.flat(i);
    dx.flat(i) *= 1.0 - t * t;
  }
  return dx;
}

Tensor Clamp::forward(const Tensor& x) {
  x_ = x;
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i)
    y.flat(i) = std::clamp(y.flat(i), lo_, hi_);
  return y;
}

Tensor Clamp::backward(const Tensor& gy) {
  Tensor dx = gy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    const double v = x_.flat(i);
    if (v < lo_ || v > hi_) dx.flat(i) = 0.0;
  }
  return dx;
}

// ---- upsample / pool ----

Tensor NearestUpsample2x::forward(const Tensor& x) {
  in_h_ = x.h();
  in_w_ = x.w();
  Tensor y(x.n(), x.c(), x.h() * 2, x.w() * 2);
  for (int i = 0; i < x.n(); ++i)
    for (int c = 0; c < x.c(); ++c)
      for (int yy = 0; yy < y.h(); ++yy)
        for (int xx = 0; xx < y.w(); ++xx)
          y(i, c, yy, xx) = x(i, c, yy / 2, xx / 2);
  return y;
}

Tensor NearestUpsample2x::backward(const Tensor& gy) {
  Tensor dx(gy.n(), gy.c(), in_h_, in_w_);
  for (int i = 0; i < gy.n(); ++i)
    for (int c = 0; c < gy.c(); ++c)
      for (int yy = 0; yy < gy.h(); ++yy)
        for (int xx = 0; xx < gy.w(); ++xx)
          dx(i, c, yy / 2, xx / 2) += gy(i, c, yy, xx);
  return dx;
}

Tensor GlobalAvgPool::forward(const Tensor& x) {
  in_h_ = x.h();
  in_w_ = x.w();
  Tensor y(x.n(), x.c(), 1, 1);
  const double inv = 1.0 / (x.h() * x.w());
  for (int i = 0; i < x.n(); ++i)
    for (int c = 0; c < x.c(); ++c) {
      double s = 0.0;
      for (int yy = 0; yy < x.h(); ++yy)
        for (int xx = 0; xx < x.w(); ++xx) s += x(i, c, yy, xx);
      y(i, c, 0, 0) = s * inv;
    }
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& gy) {
  Tensor dx(gy.n(), gy.c(), in_h_, in_w_);
  const double inv = 1.0 / (in_h_ * in_w_);
  for (int i = 0; i < gy.n(); ++i)
    for (int c = 0; c < gy.c(); ++c) {
      const double g = gy(i, c, 0, 0) * inv;
      for (int yy = 0; yy < in_h_; ++yy)
        for (int xx = 0; xx < in_w_; ++xx) dx(i, c, yy, xx) = g;
    }
  return dx;
}

// ---- GroupNorm ----

GroupNorm::GroupNorm(int groups, int channels, double eps)
    : groups_(groups), channels_(channels), eps_(eps) {
  if (channels % groups != 0)
    throw ShapeMismatch("GroupNorm: channels " + std::to_string(channels) +
                        " not divisible by groups " + std::to_string(groups));
  gamma_.value = Tensor(1, channels, 1, 1, 1.0);
  beta_.value = Tensor(1, channels, 1, 1, 0.0);
  gamma_.zero_grad();
  beta_.zero_grad();
}

Tensor GroupNorm::forward(const Tensor& x) {
  const int cpg = channels_ / groups_;
  const std::size_t group_size = static_cast<std::size_t>(cpg) * x.h() * x.w();
  xhat_ = Tensor::zeros_like(x);
  inv_std_.assign(static_cast<std::size_t>(x.n()) * groups_, 0.0);
  Tensor y = Tensor::zeros_like(x);
  const std::size_t plane = static_cast<std::size_t>(x.h()) * x.w();
  for (int i = 0; i < x.n(); ++i)
    for (int g = 0; g < groups_; ++g) {
      const double* src = x.data() + i * x.sample_size() + g * cpg * plane;
      double sum = 0.0, sq = 0.0;
      for (std::size_t j = 0; j < group_size; ++j) {
        sum += src[j];
        sq += src[j] * src[j];
      }
      const double mu = sum / static_cast<double>(group_size);
      const double var = sq / static_cast<double>(group_size) - mu * mu;
      const double istd = 1.0 / std::sqrt(var + eps_);
      inv_std_[static_cast<std::size_t>(i) * groups_ + g] = istd;
      double* xh = xhat_.data() + i * x.sample_size() + g * cpg * plane;
      double* dst = y.data() + i * x.sample_size() + g * cpg * plane;
      for (int cc = 0; cc < cpg; ++cc) {
        const int c = g * cpg + cc;
        const double gam = gamma_.value.flat(static_cast<std::size_t>(c));
        const double bet = beta_.value.flat(static_cast<std::size_t>(c));
        for (std::size_t j = 0; j < plane; ++j) {
          const double v = (src[cc * plane + j] - mu) * istd;
          xh[cc * plane + j] = v;
          dst[cc * plane + j] = gam * v + bet;
        }
      }
    }
  return y;
}

Tensor GroupNorm::backward(const Tensor& gy) {
  const int cpg = channels_ / groups_;
  const std::size_t plane = static_cast<std::size_t>(gy.h()) * gy.w();
  const std::size_t group_size = static_cast<std::size_t>(cpg) * plane;
  Tensor dx = Tensor::zeros_like(gy);
  for (int i = 0; i < gy.n(); ++i)
    for (int g = 0; g < groups_; ++g) {
      const double istd = inv_std_[static_cast<std::size_t>(i) * groups_ + g];
      const double* gsrc = gy.data() + i * gy.sample_size() + g * cpg * plane;
      const double* xh = xhat_.data() + i * gy.sample_size() + g * cpg * plane;
      // dxhat and the two group means it needs
      double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
      for (int cc = 0; cc < cpg; ++cc) {
        const int c = g * cpg + cc;
        const double gam = gamma_.value.flat(static_cast<std::size_t>(c));
        for (std::size_t j = 0; j < plane; ++j) {
          const double dxh = gsrc[cc * plane + j] * gam;
          mean_dxhat += dxh;
          mean_dxhat_xhat += dxh * xh[cc * plane + j];
        }
      }
      mean_dxhat /= static_cast<double>(group_size);
      mean_dxhat_xhat /= static_cast<double>(group_size);
      double* dst = dx.data() + i * gy.sample_size() + g * cpg * plane;
      for (int cc = 0; cc < cpg; ++cc) {
        const int c = g * cpg + cc;
        const double gam = gamma_.value.flat(static_cast<std::size_t>(c));
        for (std::size_t j = 0; j < plane; ++j) {
          const double dxh = gsrc[cc * plane + j] * gam;
          dst[cc * plane + j] =
              istd * (dxh - mean_dxhat - xh[cc * plane + j] * mean_dxhat_xhat);
        }
      }
      // affine grads
      for (int cc = 0; cc < cpg; ++cc) {
        const int c = g * cpg + cc;
        double dg = 0.0, db = 0.0;
        for (std::size_t j = 0; j < plane; ++j) {
          dg += gsrc[cc * plane + j] * xh[cc * plane + j];
          db += gsrc[cc * plane + j];
        }
        gamma_.grad.flat(static_cast<std::size_t>(c)) += dg;
        beta_.grad.flat(static_cast<std::size_t>(c)) += db;
      }
    }
  return dx;
}

void GroupNorm::collect_params(std::vector<Param*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

// ---- Sequential ----

Tensor Sequential::forward(const Tensor& x) {
  Tensor t = x;
  for (auto& l : layers_) t = l->forward(t);
  return t;
}

Tensor Sequential::backward(const Tensor& gy) {
  Tensor g = gy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

void Sequential::collect_params(std::vector<Param*>& out) {
  for (auto& l : layers_) l->collect_params(out);
}

// ---- Adam ----

void Adam::step(std::span<Param* const> params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Param* p : params) {
    if (p->m.size() != p->value.size()) {
      p->m = Tensor::zeros_like(p->value);
      p->v = Tensor::zeros_like(p->value);
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad.flat(i);
      p->m.flat(i) = cfg_.beta1 * p->m.flat(i) + (1.0 - cfg_.beta1) * g;
      p->v.flat(i) = cfg_.beta2 * p->v.flat(i) + (1.0 - cfg_.beta2) * g * g;
      const double mhat = p->m.flat(i) / bc1;
      const double vhat = p->v.flat(i) / bc2;
      p->value.flat(i) -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

// ---- loss gradients ----

Tensor mse_grad(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse_grad");
  Tensor g = Tensor::zeros_like(pred);
  const double scale = 2.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i)
    g.flat(i) = scale * (pred.flat(i) - target.flat(i));
  return g;
}

Tensor mse_grad_vs_single(const Tensor& pred, const Tensor& target) {
  if (pred.c() != target.c() || pred.h() != target.h() || pred.w() != target.w() ||
      target.n() != 1)
    throw ShapeMismatch("mse_grad_vs_single: " + pred.shape_str() + " vs " +
                        target.shape_str());
  Tensor g = Tensor::zeros_like(pred);
  const double scale = 2.0 / static_cast<double>(pred.size());
  const std::size_t m = pred.sample_size();
  for (int i = 0; i < pred.n(); ++i)
    for (std::size_t j = 0; j < m; ++j)
      g.flat(i * m + j) = scale * (pred.flat(i * m + j) - target.flat(j));
  return g;
}

}  // namespace uigwm::nn
