#include "uigwm/uigmodels.hpp"

#include <cmath>
#include <memory>

#include "uigwm/checkpoint.hpp"
#include "uigwm/error.hpp"
#include "uigwm/losses.hpp"
#include "uigwm/nn.hpp"

namespace uigwm {

const char* generator_kind_name(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::kTinyVae: return "TINY_VAE";
    case GeneratorKind::kTinyGan: return "TINY_GAN";
    case GeneratorKind::kTinyDdpm: return "TINY_DDPM";
    case GeneratorKind::kTinyDdpmFast: return "TINY_DDPM_FAST";
  }
  return "unknown";
}

GeneratorKind parse_generator_kind(const std::string& name) {
  if (name == "TINY_VAE") return GeneratorKind::kTinyVae;
  if (name == "TINY_GAN") return GeneratorKind::kTinyGan;
  if (name == "TINY_DDPM") return GeneratorKind::kTinyDdpm;
  if (name == "TINY_DDPM_FAST") return GeneratorKind::kTinyDdpmFast;
  throw Error("unknown generator kind: " + name);
}

nlohmann::json GenTrainConfig::to_json() const {
  return {{"epochs", epochs},           {"batch_size", batch_size},
          {"lr", lr},                   {"base_channels", base_channels},
          {"latent_dim", latent_dim},   {"kl_weight", kl_weight},
          {"timesteps", timesteps},     {"sample_stride", sample_stride}};
}

GenTrainConfig GenTrainConfig::from_json(const nlohmann::json& j) {
  GenTrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.lr = j.at("lr").get<double>();
  c.base_channels = j.at("base_channels").get<int>();
  c.latent_dim = j.at("latent_dim").get<int>();
  c.kl_weight = j.at("kl_weight").get<double>();
  c.timesteps = j.at("timesteps").get<int>();
  c.sample_stride = j.at("sample_stride").get<int>();
  return c;
}

namespace {

// Sum over the spatial extent, keeping (n,c,1,1). Used for bias gradients.
Tensor spatial_sum(const Tensor& g) {
  Tensor out(g.n(), g.c(), 1, 1);
  for (int i = 0; i < g.n(); ++i)
    for (int ch = 0; ch < g.c(); ++ch) {
      double s = 0.0;
      for (int y = 0; y < g.h(); ++y)
        for (int x = 0; x < g.w(); ++x) s += g(i, ch, y, x);
      out(i, ch, 0, 0) = s;
    }
  return out;
}

void add_channel_bias(Tensor& t, const Tensor& bias) {
  for (int i = 0; i < t.n(); ++i)
    for (int ch = 0; ch < t.c(); ++ch) {
      const double b = bias(i, ch, 0, 0);
      for (int y = 0; y < t.h(); ++y)
        for (int x = 0; x < t.w(); ++x) t(i, ch, y, x) += b;
    }
}

void add_inplace(Tensor& a, const Tensor& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

Tensor gaussian_tensor(int n, int c, int h, int w, Rng& rng) {
  Tensor t(n, c, h, w);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.normal();
  return t;
}

Rng image_stream(std::uint64_t seed, int image_index) {
  return Rng(seed).fork("img" + std::to_string(image_index));
}

}  // namespace

namespace detail {

class GenImpl {
 public:
  virtual ~GenImpl() = default;
  // Images for global indices [i0, i0+n); image i draws from its own stream.
  virtual Tensor sample_block(int i0, int n, std::uint64_t seed) = 0;
  virtual double train_epoch(const Tensor& images, Rng& rng) = 0;
  virtual void collect_params(std::vector<nn::Param*>& out) = 0;
};

// Convolutional VAE; samples by decoding latent draws from the prior.
class VaeImpl : public GenImpl {
 public:
  VaeImpl(ImageShape s, const GenTrainConfig& cfg, Rng& rng)
      : s_(s),
        z_(cfg.latent_dim),
        f_(cfg.base_channels),
        h4_(s.h / 4),
        w4_(s.w / 4),
        flat_(2 * cfg.base_channels * (s.h / 4) * (s.w / 4)),
        kl_weight_(cfg.kl_weight),
        enc1_(s.c, f_, 3, 2, 1, rng),
        enc2_(f_, 2 * f_, 3, 2, 1, rng),
        lin_stats_(flat_, 2 * z_, rng),
        lin_dec_(z_, flat_, rng),
        dec1_(2 * f_, f_, 3, 1, 1, rng),
        dec2_(f_, f_, 3, 1, 1, rng),
        out_(f_, s.c, 3, 1, 1, rng),
        adam_({cfg.lr}) {
    collect_params(params_);
  }

  Tensor decode(const Tensor& z) {
    Tensor t = rd_.forward(lin_dec_.forward(z));
    t = t.reshaped(z.n(), 2 * f_, h4_, w4_);
    t = r1_.forward(dec1_.forward(up1_.forward(t)));
    t = r2_.forward(dec2_.forward(up2_.forward(t)));
    return sig_.forward(out_.forward(t));
  }

  Tensor decode_backward(const Tensor& gy) {
    Tensor g = dec2_.backward(r2_.backward(out_.backward(sig_.backward(gy))));
    g = dec1_.backward(r1_.backward(up2_.backward(g)));
    g = up1_.backward(g).reshaped(gy.n(), flat_, 1, 1);
    return lin_dec_.backward(rd_.backward(g));
  }

  Tensor sample_block(int i0, int n, std::uint64_t seed) override {
    Tensor z(n, z_, 1, 1);
    for (int i = 0; i < n; ++i) {
      Rng stream = image_stream(seed, i0 + i);
      for (int k = 0; k < z_; ++k) z(i, k, 0, 0) = stream.normal();
    }
    return decode(z);
  }

  double train_epoch(const Tensor& images, Rng& rng) override {
    const auto perm = rng.permutation(images.n());
    double total = 0.0;
    int steps = 0;
    for (int b = 0; b + batch_ <= images.n(); b += batch_) {
      std::span<const int> idx(perm.data() + b, static_cast<std::size_t>(batch_));
      const Tensor x = gather_batch(images, idx);
      total += train_step(x, rng);
      ++steps;
    }
    return steps > 0 ? total / steps : 0.0;
  }

  void collect_params(std::vector<nn::Param*>& out) override {
    enc1_.collect_params(out);
    enc2_.collect_params(out);
    lin_stats_.collect_params(out);
    lin_dec_.collect_params(out);
    dec1_.collect_params(out);
    dec2_.collect_params(out);
    out_.collect_params(out);
  }

  void set_batch(int bs) { batch_ = bs; }

 private:
  double train_step(const Tensor& x, Rng& rng) {
    const int n = x.n();
    Tensor t = re2_.forward(enc2_.forward(re1_.forward(enc1_.forward(x))));
    t = t.reshaped(n, flat_, 1, 1);
    const Tensor stats = lin_stats_.forward(t);
    Tensor mu = slice_channels(stats, 0, z_);
    Tensor lv = slice_channels(stats, z_, 2 * z_);
    std::vector<char> lv_in_range(lv.size());
    for (std::size_t i = 0; i < lv.size(); ++i) {
      lv_in_range[i] = lv.data()[i] > -8.0 && lv.data()[i] < 8.0;
      lv.data()[i] = std::clamp(lv.data()[i], -8.0, 8.0);
    }

    Tensor eps(n, z_, 1, 1);
    for (std::size_t i = 0; i < eps.size(); ++i) eps.data()[i] = rng.normal();
    Tensor zt = mu;
    for (std::size_t i = 0; i < zt.size(); ++i)
      zt.data()[i] += std::exp(0.5 * lv.data()[i]) * eps.data()[i];

    const Tensor y = decode(zt);

    double recon = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double d = y.data()[i] - x.data()[i];
      recon += d * d;
    }
    recon /= n;
    double kl = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i)
      kl += -0.5 * (1.0 + lv.data()[i] - mu.data()[i] * mu.data()[i] -
                    std::exp(lv.data()[i]));
    kl /= n;
    const double loss = recon + kl_weight_ * kl;

    Tensor dy = Tensor::zeros_like(y);
    for (std::size_t i = 0; i < y.size(); ++i)
      dy.data()[i] = 2.0 * (y.data()[i] - x.data()[i]) / n;
    const Tensor dz = decode_backward(dy);

    Tensor dmu = dz;
    Tensor dlv = Tensor::zeros_like(lv);
    for (std::size_t i = 0; i < dlv.size(); ++i) {
      dmu.data()[i] += kl_weight_ * mu.data()[i] / n;
      double g = dz.data()[i] * eps.data()[i] * 0.5 * std::exp(0.5 * lv.data()[i]);
      g += kl_weight_ * 0.5 * (std::exp(lv.data()[i]) - 1.0) / n;
      dlv.data()[i] = lv_in_range[i] ? g : 0.0;
    }

    Tensor g = lin_stats_.backward(concat_channels(dmu, dlv));
    g = g.reshaped(n, 2 * f_, h4_, w4_);
    g = enc1_.backward(re1_.backward(enc2_.backward(re2_.backward(g))));

    adam_.step(params_);
    nn::zero_grads(params_);
    return loss;
  }

  ImageShape s_;
  int z_, f_, h4_, w4_, flat_;
  double kl_weight_;
  int batch_ = 16;
  nn::Conv2d enc1_, enc2_;
  nn::Linear lin_stats_, lin_dec_;
  nn::Conv2d dec1_, dec2_, out_;
  nn::ReLU re1_, re2_, rd_, r1_, r2_;
  nn::Sigmoid sig_;
  nn::NearestUpsample2x up1_, up2_;
  nn::Adam adam_;
  std::vector<nn::Param*> params_;
};

// DCGAN-style generator/discriminator pair; only the generator is persisted.
class GanImpl : public GenImpl {
 public:
  GanImpl(ImageShape s, const GenTrainConfig& cfg, Rng& rng)
      : s_(s),
        z_(cfg.latent_dim),
        f_(cfg.base_channels),
        h4_(s.h / 4),
        w4_(s.w / 4),
        flat_(2 * cfg.base_channels * (s.h / 4) * (s.w / 4)),
        lin_g_(cfg.latent_dim, flat_, rng),
        g1_(2 * f_, f_, 3, 1, 1, rng),
        g2_(f_, f_, 3, 1, 1, rng),
        g_out_(f_, s.c, 3, 1, 1, rng),
        adam_g_({cfg.lr}),
        adam_d_({cfg.lr}) {
    disc_.emplace<nn::Conv2d>(s.c, f_, 3, 2, 1, rng).emplace<nn::LeakyReLU>();
    disc_.emplace<nn::Conv2d>(f_, 2 * f_, 3, 2, 1, rng).emplace<nn::LeakyReLU>();
    disc_.emplace<nn::GlobalAvgPool>();
    disc_.emplace<nn::Linear>(2 * f_, 1, rng);
    disc_.emplace<nn::Clamp>(-15.0, 15.0);
    disc_.emplace<nn::Sigmoid>();
    collect_params(params_g_);
    disc_.collect_params(params_d_);
  }

  Tensor generate(const Tensor& z) {
    Tensor t = rg_.forward(lin_g_.forward(z));
    t = t.reshaped(z.n(), 2 * f_, h4_, w4_);
    t = r1_.forward(g1_.forward(up1_.forward(t)));
    t = r2_.forward(g2_.forward(up2_.forward(t)));
    return sig_.forward(g_out_.forward(t));
  }

  void generate_backward(const Tensor& gy) {
    Tensor g = g2_.backward(r2_.backward(g_out_.backward(sig_.backward(gy))));
    g = g1_.backward(r1_.backward(up2_.backward(g)));
    g = up1_.backward(g).reshaped(gy.n(), flat_, 1, 1);
    lin_g_.backward(rg_.backward(g));
  }

  Tensor sample_block(int i0, int n, std::uint64_t seed) override {
    Tensor z(n, z_, 1, 1);
    for (int i = 0; i < n; ++i) {
      Rng stream = image_stream(seed, i0 + i);
      for (int k = 0; k < z_; ++k) z(i, k, 0, 0) = stream.normal();
    }
    return generate(z);
  }

  double train_epoch(const Tensor& images, Rng& rng) override {
    const auto perm = rng.permutation(images.n());
    double total = 0.0;
    int steps = 0;
    for (int b = 0; b + batch_ <= images.n(); b += batch_) {
      std::span<const int> idx(perm.data() + b, static_cast<std::size_t>(batch_));
      const Tensor real = gather_batch(images, idx);
      Tensor z(batch_, z_, 1, 1);
      for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] = rng.normal();
      const Tensor fake = generate(z);

      const Tensor d_real = disc_.forward(real);
      disc_.backward(sadv_disc_grad_real(d_real));
      const Tensor d_fake = disc_.forward(fake);
      disc_.backward(sadv_disc_grad_fake(d_fake));
      adam_d_.step(params_d_);
      nn::zero_grads(params_d_);

      const Tensor d_fake2 = disc_.forward(fake);
      total += sadv_gen_value(d_fake2);
      const Tensor dfake = disc_.backward(sadv_gen_grad(d_fake2));
      nn::zero_grads(params_d_);
      generate_backward(dfake);
      adam_g_.step(params_g_);
      nn::zero_grads(params_g_);
      ++steps;
    }
    return steps > 0 ? total / steps : 0.0;
  }

  void collect_params(std::vector<nn::Param*>& out) override {
    lin_g_.collect_params(out);
    g1_.collect_params(out);
    g2_.collect_params(out);
    g_out_.collect_params(out);
  }

  void set_batch(int bs) { batch_ = bs; }

 private:
  ImageShape s_;
  int z_, f_, h4_, w4_, flat_;
  int batch_ = 16;
  nn::Linear lin_g_;
  nn::Conv2d g1_, g2_, g_out_;
  nn::ReLU rg_, r1_, r2_;
  nn::Sigmoid sig_;
  nn::NearestUpsample2x up1_, up2_;
  nn::Sequential disc_;
  nn::Adam adam_g_, adam_d_;
  std::vector<nn::Param*> params_g_, params_d_;
};

// Denoising diffusion model with a small timestep-conditioned UNet. The
// sampler walks an arbitrary subsequence of the chain with the eta=1
// posterior, so a stride of 1 reproduces the full ancestral sampler exactly.
class DdpmImpl : public GenImpl {
 public:
  static constexpr int kTimeDim = 32;

  DdpmImpl(ImageShape s, const GenTrainConfig& cfg, Rng& rng)
      : s_(s),
        f_(cfg.base_channels),
        t_(cfg.timesteps),
        stride_(cfg.sample_stride),
        conv_in_(s.c, f_, 3, 1, 1, rng),
        conv_d1_(f_, 2 * f_, 3, 2, 1, rng),
        conv_d2_(2 * f_, 2 * f_, 3, 2, 1, rng),
        conv_m_(2 * f_, 2 * f_, 3, 1, 1, rng),
        conv_u1_(4 * f_, f_, 3, 1, 1, rng),
        conv_u2_(2 * f_, f_, 3, 1, 1, rng),
        conv_out_(f_, s.c, 3, 1, 1, rng, 0.1),
        lin_t_(kTimeDim, kTimeDim, rng),
        b0_(kTimeDim, f_, rng),
        b1_(kTimeDim, 2 * f_, rng),
        b2_(kTimeDim, 2 * f_, rng),
        bm_(kTimeDim, 2 * f_, rng),
        bu1_(kTimeDim, f_, rng),
        bu2_(kTimeDim, f_, rng),
        adam_({cfg.lr}) {
    betas_.resize(t_);
    abar_.resize(t_);
    double prod = 1.0;
    for (int i = 0; i < t_; ++i) {
      betas_[i] = 1e-4 + (0.02 - 1e-4) * (t_ > 1 ? static_cast<double>(i) / (t_ - 1) : 0.0);
      prod *= 1.0 - betas_[i];
      abar_[i] = prod;
    }
    collect_params(params_);
  }

  // Predicted noise for x_t at per-sample timesteps.
  Tensor forward_eps(const Tensor& x, const std::vector<int>& tsteps) {
    const Tensor temb = time_embedding(tsteps);
    tproj_ = rt_.forward(lin_t_.forward(temb));

    Tensor d0 = conv_in_.forward(x);
    add_channel_bias(d0, b0_.forward(tproj_));
    d0 = r0_.forward(d0);

    Tensor d1 = conv_d1_.forward(d0);
    add_channel_bias(d1, b1_.forward(tproj_));
    d1 = r1_.forward(d1);

    Tensor d2 = conv_d2_.forward(d1);
    add_channel_bias(d2, b2_.forward(tproj_));
    d2 = r2_.forward(d2);

    Tensor m = conv_m_.forward(d2);
    add_channel_bias(m, bm_.forward(tproj_));
    m = rm_.forward(m);

    Tensor u1 = conv_u1_.forward(concat_channels(up_m_.forward(m), d1));
    add_channel_bias(u1, bu1_.forward(tproj_));
    u1 = ru1_.forward(u1);

    Tensor u2 = conv_u2_.forward(concat_channels(up_u1_.forward(u1), d0));
    add_channel_bias(u2, bu2_.forward(tproj_));
    u2 = ru2_.forward(u2);

    return conv_out_.forward(u2);
  }

  void backward_eps(const Tensor& gy) {
    Tensor gt_total(tproj_.n(), kTimeDim, 1, 1);

    Tensor g = ru2_.backward(conv_out_.backward(gy));
    add_inplace(gt_total, bu2_.backward(spatial_sum(g)));
    Tensor gcat = conv_u2_.backward(g);
    Tensor g_d0_skip = slice_channels(gcat, f_, 2 * f_);
    g = ru1_.backward(up_u1_.backward(slice_channels(gcat, 0, f_)));
    add_inplace(gt_total, bu1_.backward(spatial_sum(g)));
    gcat = conv_u1_.backward(g);
    Tensor g_d1_skip = slice_channels(gcat, 2 * f_, 4 * f_);
    g = rm_.backward(up_m_.backward(slice_channels(gcat, 0, 2 * f_)));
    add_inplace(gt_total, bm_.backward(spatial_sum(g)));
    g = r2_.backward(conv_m_.backward(g));
    add_inplace(gt_total, b2_.backward(spatial_sum(g)));
    g = conv_d2_.backward(g);
    add_inplace(g, g_d1_skip);
    g = r1_.backward(g);
    add_inplace(gt_total, b1_.backward(spatial_sum(g)));
    g = conv_d1_.backward(g);
    add_inplace(g, g_d0_skip);
    g = r0_.backward(g);
    add_inplace(gt_total, b0_.backward(spatial_sum(g)));
    conv_in_.backward(g);

    lin_t_.backward(rt_.backward(gt_total));
  }

  Tensor sample_block(int i0, int n, std::uint64_t seed) override {
    std::vector<int> ts;
    for (int t = t_ - 1; t > 0; t -= stride_) ts.push_back(t);
    ts.push_back(0);

    std::vector<Rng> streams;
    streams.reserve(n);
    for (int i = 0; i < n; ++i) streams.push_back(image_stream(seed, i0 + i));

    Tensor x(n, s_.c, s_.h, s_.w);
    const int per = s_.c * s_.h * s_.w;
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < per; ++k) x.data()[i * per + k] = streams[i].normal();

    for (std::size_t step = 0; step < ts.size(); ++step) {
      const int t_cur = ts[step];
      const int t_prev = step + 1 < ts.size() ? ts[step + 1] : -1;
      const std::vector<int> tvec(n, t_cur);
      const Tensor eps = forward_eps(x, tvec);

      const double abar_c = abar_[t_cur];
      const double abar_p = t_prev >= 0 ? abar_[t_prev] : 1.0;
      const double inv_sqrt_abar_c = 1.0 / std::sqrt(abar_c);
      const double sqrt_one_minus_c = std::sqrt(1.0 - abar_c);

      Tensor x0 = Tensor::zeros_like(x);
      for (std::size_t k = 0; k < x.size(); ++k) {
        double v = (x.data()[k] - sqrt_one_minus_c * eps.data()[k]) * inv_sqrt_abar_c;
        x0.data()[k] = std::clamp(v, -1.0, 1.0);
      }
      if (t_prev < 0) {
        x = x0;
        break;
      }

      const double sigma2 =
          (1.0 - abar_p) / (1.0 - abar_c) * (1.0 - abar_c / abar_p);
      const double sigma = std::sqrt(std::max(sigma2, 0.0));
      const double dir = std::sqrt(std::max(1.0 - abar_p - sigma2, 0.0));
      const double sqrt_abar_p = std::sqrt(abar_p);
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < per; ++k) {
          const std::size_t off = static_cast<std::size_t>(i) * per + k;
          x.data()[off] = sqrt_abar_p * x0.data()[off] + dir * eps.data()[off] +
                          sigma * streams[i].normal();
        }
    }

    for (std::size_t k = 0; k < x.size(); ++k)
      x.data()[k] = (x.data()[k] + 1.0) * 0.5;
    clamp01_inplace(x);
    return x;
  }

  double train_epoch(const Tensor& images, Rng& rng) override {
    const auto perm = rng.permutation(images.n());
    double total = 0.0;
    int steps = 0;
    for (int b = 0; b + batch_ <= images.n(); b += batch_) {
      std::span<const int> idx(perm.data() + b, static_cast<std::size_t>(batch_));
      Tensor x = gather_batch(images, idx);
      for (std::size_t k = 0; k < x.size(); ++k) x.data()[k] = 2.0 * x.data()[k] - 1.0;

      std::vector<int> tvec(batch_);
      for (int i = 0; i < batch_; ++i) tvec[i] = rng.uniform_int(0, t_ - 1);
      const Tensor eps = gaussian_tensor(batch_, s_.c, s_.h, s_.w, rng);

      Tensor xt = Tensor::zeros_like(x);
      const int per = s_.c * s_.h * s_.w;
      for (int i = 0; i < batch_; ++i) {
        const double sa = std::sqrt(abar_[tvec[i]]);
        const double sb = std::sqrt(1.0 - abar_[tvec[i]]);
        for (int k = 0; k < per; ++k) {
          const std::size_t off = static_cast<std::size_t>(i) * per + k;
          xt.data()[off] = sa * x.data()[off] + sb * eps.data()[off];
        }
      }

      const Tensor pred = forward_eps(xt, tvec);
      total += mse(pred, eps);
      backward_eps(nn::mse_grad(pred, eps));
      adam_.step(params_);
      nn::zero_grads(params_);
      ++steps;
    }
    return steps > 0 ? total / steps : 0.0;
  }

  void collect_params(std::vector<nn::Param*>& out) override {
    conv_in_.collect_params(out);
    conv_d1_.collect_params(out);
    conv_d2_.collect_params(out);
    conv_m_.collect_params(out);
    conv_u1_.collect_params(out);
    conv_u2_.collect_params(out);
    conv_out_.collect_params(out);
    lin_t_.collect_params(out);
    b0_.collect_params(out);
    b1_.collect_params(out);
    b2_.collect_params(out);
    bm_.collect_params(out);
    bu1_.collect_params(out);
    bu2_.collect_params(out);
  }

  void set_batch(int bs) { batch_ = bs; }
  void set_stride(int s) { stride_ = s; }

 private:
  Tensor time_embedding(const std::vector<int>& tsteps) const {
    const int half = kTimeDim / 2;
    Tensor e(static_cast<int>(tsteps.size()), kTimeDim, 1, 1);
    for (std::size_t i = 0; i < tsteps.size(); ++i)
      for (int k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(10000.0) * k / half);
        e(static_cast<int>(i), 2 * k, 0, 0) = std::sin(tsteps[i] * freq);
        e(static_cast<int>(i), 2 * k + 1, 0, 0) = std::cos(tsteps[i] * freq);
      }
    return e;
  }

  ImageShape s_;
  int f_, t_, stride_;
  int batch_ = 16;
  std::vector<double> betas_, abar_;
  nn::Conv2d conv_in_, conv_d1_, conv_d2_, conv_m_, conv_u1_, conv_u2_, conv_out_;
  nn::Linear lin_t_, b0_, b1_, b2_, bm_, bu1_, bu2_;
  nn::ReLU rt_, r0_, r1_, r2_, rm_, ru1_, ru2_;
  nn::NearestUpsample2x up_m_, up_u1_;
  nn::Adam adam_;
  std::vector<nn::Param*> params_;
  Tensor tproj_;
};

}  // namespace detail

GeneratorHandle::GeneratorHandle() = default;
GeneratorHandle::GeneratorHandle(GeneratorHandle&&) noexcept = default;
GeneratorHandle& GeneratorHandle::operator=(GeneratorHandle&&) noexcept = default;
GeneratorHandle::~GeneratorHandle() = default;

Tensor GeneratorHandle::sample(int n, std::uint64_t seed) {
  if (!impl_) throw Error("sample on an empty generator handle");
  if (n <= 0) throw EmptyInput("sample: n must be positive");
  constexpr int kChunk = 64;
  Tensor out;
  for (int i0 = 0; i0 < n; i0 += kChunk) {
    const int take = std::min(kChunk, n - i0);
    out = concat_batch(out, impl_->sample_block(i0, take, seed));
  }
  return out;
}

namespace {

std::unique_ptr<detail::GenImpl> build_impl(GeneratorKind kind, ImageShape shape,
                                            const GenTrainConfig& cfg, Rng init) {
  switch (kind) {
    case GeneratorKind::kTinyVae: {
      auto impl = std::make_unique<detail::VaeImpl>(shape, cfg, init);
      impl->set_batch(cfg.batch_size);
      return impl;
    }
    case GeneratorKind::kTinyGan: {
      auto impl = std::make_unique<detail::GanImpl>(shape, cfg, init);
      impl->set_batch(cfg.batch_size);
      return impl;
    }
    case GeneratorKind::kTinyDdpm:
    case GeneratorKind::kTinyDdpmFast: {
      auto impl = std::make_unique<detail::DdpmImpl>(shape, cfg, init);
      impl->set_batch(cfg.batch_size);
      impl->set_stride(kind == GeneratorKind::kTinyDdpmFast ? cfg.sample_stride : 1);
      return impl;
    }
  }
  throw Error("unknown generator kind");
}

void validate_gen_config(ImageShape shape, const GenTrainConfig& cfg) {
  if (shape.h < 16 || shape.w < 16 || shape.h % 4 != 0 || shape.w % 4 != 0)
    throw ArchConfigError("generator images must be at least 16x16 and divisible by 4");
  if (cfg.epochs < 1) throw ArchConfigError("epochs must be at least 1");
  if (cfg.batch_size < 2) throw ArchConfigError("batch_size must be at least 2");
  if (!(cfg.lr > 0.0)) throw ArchConfigError("lr must be positive");
  if (cfg.base_channels < 2) throw ArchConfigError("base_channels must be at least 2");
  if (cfg.latent_dim < 1) throw ArchConfigError("latent_dim must be at least 1");
  if (cfg.timesteps < 2) throw ArchConfigError("timesteps must be at least 2");
  if (cfg.sample_stride < 1) throw ArchConfigError("sample_stride must be at least 1");
}

}  // namespace

GeneratorHandle train_generator(GeneratorKind kind, const LabeledDataset& dataset,
                                const GenTrainConfig& config, std::uint64_t seed) {
  const Tensor& imgs = dataset.images;
  if (imgs.empty()) throw EmptyInput("train_generator: empty dataset");
  if (imgs.n() < config.batch_size)
    throw InsufficientData("generator training", config.batch_size, imgs.n());
  const ImageShape shape{imgs.c(), imgs.h(), imgs.w()};
  validate_gen_config(shape, config);

  GeneratorHandle gen;
  gen.kind_ = kind;
  gen.shape_ = shape;
  gen.cfg_ = config;
  gen.meta_.seed = seed;

  Rng root(seed);
  gen.impl_ = build_impl(kind, shape, config, root.fork("init"));
  Rng train_rng = root.fork("train");
  for (int e = 0; e < config.epochs; ++e) {
    const double el = gen.impl_->train_epoch(imgs, train_rng);
    gen.meta_.epoch_loss.push_back(el);
    gen.meta_.epochs_run = e + 1;
    if (!std::isfinite(el))
      throw TrainingDiverged(std::string(generator_kind_name(kind)) +
                             " loss went non-finite at epoch " + std::to_string(e + 1));
  }
  return gen;
}

std::string save_generator(GeneratorHandle& gen, const std::filesystem::path& path) {
  if (!gen.valid()) throw Error("cannot checkpoint an empty generator handle");
  CheckpointData data;
  const ImageShape s = gen.image_shape();
  data.header = {{"format", "uigwm-gen"},
                 {"kind", generator_kind_name(gen.kind())},
                 {"image_shape", {{"c", s.c}, {"h", s.h}, {"w", s.w}}},
                 {"config", gen.config().to_json()},
                 {"meta",
                  {{"seed", gen.meta().seed},
                   {"epochs_run", gen.meta().epochs_run},
                   {"epoch_loss", gen.meta().epoch_loss}}}};
  std::vector<nn::Param*> params;
  gen.impl_->collect_params(params);
  int idx = 0;
  for (nn::Param* prm : params) {
    std::vector<double> values(prm->value.data(), prm->value.data() + prm->value.size());
    data.blobs.emplace_back("p" + std::to_string(idx++), std::move(values));
  }
  return write_checkpoint_file(path, data);
}

GeneratorHandle load_generator(const std::filesystem::path& path) {
  const CheckpointData data = read_checkpoint_file(path);
  GeneratorHandle gen;
  try {
    if (data.header.at("format").get<std::string>() != "uigwm-gen")
      throw CheckpointCorrupt("checkpoint does not hold a generator: " + path.string());
    gen.kind_ = parse_generator_kind(data.header.at("kind").get<std::string>());
    const auto& sj = data.header.at("image_shape");
    gen.shape_ = {sj.at("c").get<int>(), sj.at("h").get<int>(), sj.at("w").get<int>()};
    gen.cfg_ = GenTrainConfig::from_json(data.header.at("config"));
    const auto& mj = data.header.at("meta");
    gen.meta_.seed = mj.at("seed").get<std::uint64_t>();
    gen.meta_.epochs_run = mj.at("epochs_run").get<int>();
    gen.meta_.epoch_loss = mj.at("epoch_loss").get<std::vector<double>>();
  } catch (const nlohmann::json::exception&) {
    throw CheckpointCorrupt("malformed generator checkpoint header: " + path.string());
  }

  gen.impl_ = build_impl(gen.kind_, gen.shape_, gen.cfg_, Rng(0));
  std::vector<nn::Param*> params;
  gen.impl_->collect_params(params);
  if (params.size() != data.blobs.size())
    throw CheckpointCorrupt("parameter count mismatch in " + path.string());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& values = data.blobs[i].second;
    if (values.size() != params[i]->value.size())
      throw CheckpointCorrupt("parameter size mismatch in " + path.string());
    std::copy(values.begin(), values.end(), params[i]->value.data());
  }
  return gen;
}

}  // namespace uigwm
