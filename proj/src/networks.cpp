#include "uigwm/networks.hpp"

#include <algorithm>
#include <utility>

#include "uigwm/checkpoint.hpp"
#include "uigwm/error.hpp"

namespace uigwm {

const char* net_role_name(NetRole role) {
  switch (role) {
    case NetRole::kEncoder: return "encoder";
    case NetRole::kDecoder: return "decoder";
    case NetRole::kDiscriminator: return "discriminator";
  }
  return "unknown";
}

nlohmann::json ArchConfig::to_json() const {
  return {{"base_channels", base_channels}, {"depth", depth}, {"kernel", kernel}};
}

ArchConfig ArchConfig::from_json(const nlohmann::json& j) {
  ArchConfig cfg;
  cfg.base_channels = j.at("base_channels").get<int>();
  cfg.depth = j.at("depth").get<int>();
  cfg.kernel = j.at("kernel").get<int>();
  return cfg;
}

namespace detail {

class NetImpl {
 public:
  virtual ~NetImpl() = default;
  virtual Tensor forward(const Tensor& x) = 0;
  virtual Tensor backward(const Tensor& gy) = 0;
  virtual void collect_params(std::vector<nn::Param*>& out) = 0;
};

// Widest group count that divides the channels, capped at 4.
int norm_groups(int channels) {
  if (channels % 4 == 0) return 4;
  if (channels % 2 == 0) return 2;
  return 1;
}

// Conv -> GroupNorm -> LeakyReLU. The norm keeps activations centered and the
// leak keeps every unit trainable; plain ReLU trunks collapse to a constant
// output under the mean-target pressure both training stages start with.
class ConvBlock {
 public:
  ConvBlock(int in_ch, int out_ch, int kernel, int stride, Rng& rng)
      : conv_(in_ch, out_ch, kernel, stride, kernel / 2, rng),
        norm_(norm_groups(out_ch), out_ch) {}

  Tensor forward(const Tensor& x) { return act_.forward(norm_.forward(conv_.forward(x))); }
  Tensor backward(const Tensor& gy) {
    return conv_.backward(norm_.backward(act_.backward(gy)));
  }
  void collect_params(std::vector<nn::Param*>& out) {
    conv_.collect_params(out);
    norm_.collect_params(out);
  }

 private:
  nn::Conv2d conv_;
  nn::GroupNorm norm_;
  nn::LeakyReLU act_;
};

// Predicts a residual and adds it onto the cover (first c channels of the
// input), so the identity embedding is in easy reach from the start. A skip
// connection keeps full-resolution texture available to the final convs.
class EncoderImpl : public NetImpl {
 public:
  EncoderImpl(ImageShape s, const ArchConfig& cfg, Rng& rng)
      : c_(s.c),
        block1_(2 * s.c, cfg.base_channels, cfg.kernel, 1, rng),
        block2_(cfg.base_channels, 2 * cfg.base_channels, cfg.kernel, 2, rng),
        block3_(2 * cfg.base_channels, cfg.base_channels, cfg.kernel, 1, rng),
        block4_(2 * cfg.base_channels, cfg.base_channels, cfg.kernel, 1, rng),
        head_(cfg.base_channels, s.c, cfg.kernel, 1, cfg.kernel / 2, rng, 0.1) {
    for (int i = 0; i < cfg.depth; ++i)
      mid_.push_back(std::make_unique<ConvBlock>(2 * cfg.base_channels,
                                                 2 * cfg.base_channels, cfg.kernel, 1, rng));
  }

  Tensor forward(const Tensor& x) override {
    cover_ = slice_channels(x, 0, c_);
    Tensor t1 = block1_.forward(x);
    Tensor t = block2_.forward(t1);
    for (auto& m : mid_) t = m->forward(t);
    t = up_.forward(t);
    t = block3_.forward(t);
    t = block4_.forward(concat_channels(t, t1));
    pre_ = head_.forward(t);
    for (std::size_t i = 0; i < pre_.size(); ++i) pre_.data()[i] += cover_.data()[i];
    return clamp01(pre_);
  }

  Tensor backward(const Tensor& gy) override {
    Tensor g = gy;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = pre_.data()[i];
      if (!(v > 0.0 && v < 1.0)) g.data()[i] = 0.0;
    }
    const Tensor dcover = g;
    Tensor gcat = block4_.backward(head_.backward(g));
    const int f = gcat.c() / 2;
    Tensor gmain = block3_.backward(slice_channels(gcat, 0, f));
    gmain = up_.backward(gmain);
    for (std::size_t i = mid_.size(); i-- > 0;) gmain = mid_[i]->backward(gmain);
    Tensor gt1 = block2_.backward(gmain);
    const Tensor gskip = slice_channels(gcat, f, 2 * f);
    for (std::size_t i = 0; i < gt1.size(); ++i) gt1.data()[i] += gskip.data()[i];
    Tensor gx = block1_.backward(gt1);
    for (int i = 0; i < gx.n(); ++i)
      for (int ch = 0; ch < c_; ++ch)
        for (int y = 0; y < gx.h(); ++y)
          for (int xx = 0; xx < gx.w(); ++xx) gx(i, ch, y, xx) += dcover(i, ch, y, xx);
    return gx;
  }

  void collect_params(std::vector<nn::Param*>& out) override {
    block1_.collect_params(out);
    block2_.collect_params(out);
    for (auto& m : mid_) m->collect_params(out);
    block3_.collect_params(out);
    block4_.collect_params(out);
    head_.collect_params(out);
  }

 private:
  int c_;
  ConvBlock block1_, block2_, block3_, block4_;
  nn::Conv2d head_;
  std::vector<std::unique_ptr<ConvBlock>> mid_;
  nn::NearestUpsample2x up_;
  Tensor cover_, pre_;
};

class SequentialImpl : public NetImpl {
 public:
  Tensor forward(const Tensor& x) override { return seq_.forward(x); }
  Tensor backward(const Tensor& gy) override { return seq_.backward(gy); }
  void collect_params(std::vector<nn::Param*>& out) override { seq_.collect_params(out); }

 protected:
  nn::Sequential seq_;
};

class DecoderImpl : public SequentialImpl {
 public:
  DecoderImpl(ImageShape s, const ArchConfig& cfg, Rng& rng) {
    const int f = cfg.base_channels;
    const int k = cfg.kernel, p = cfg.kernel / 2;
    const auto block = [&](int in_ch, int out_ch, int stride) {
      seq_.emplace<nn::Conv2d>(in_ch, out_ch, k, stride, p, rng);
      seq_.emplace<nn::GroupNorm>(norm_groups(out_ch), out_ch);
      seq_.emplace<nn::LeakyReLU>();
    };
    block(s.c, f, 1);
    block(f, 2 * f, 2);
    for (int i = 0; i < cfg.depth; ++i) block(2 * f, 2 * f, 1);
    seq_.emplace<nn::NearestUpsample2x>();
    block(2 * f, f, 1);
    seq_.emplace<nn::Conv2d>(f, s.c, k, 1, p, rng);
  }
};

class DiscImpl : public SequentialImpl {
 public:
  DiscImpl(ImageShape s, const ArchConfig& cfg, Rng& rng) {
    const int f = cfg.base_channels;
    const int k = cfg.kernel, p = cfg.kernel / 2;
    seq_.emplace<nn::Conv2d>(s.c, f, k, 1, p, rng).emplace<nn::LeakyReLU>();
    seq_.emplace<nn::Conv2d>(f, f, k, 1, p, rng).emplace<nn::LeakyReLU>();
    seq_.emplace<nn::Conv2d>(f, 2 * f, k, 2, p, rng).emplace<nn::LeakyReLU>();
    seq_.emplace<nn::Conv2d>(2 * f, 2 * f, k, 2, p, rng).emplace<nn::LeakyReLU>();
    for (int i = 0; i < cfg.depth; ++i)
      seq_.emplace<nn::Conv2d>(2 * f, 2 * f, k, 1, p, rng).emplace<nn::LeakyReLU>();
    seq_.emplace<nn::GlobalAvgPool>();
    seq_.emplace<nn::Linear>(2 * f, 1, rng);
    // Bound the logit so the sigmoid stays strictly inside (0,1) in doubles.
    seq_.emplace<nn::Clamp>(-15.0, 15.0);
    seq_.emplace<nn::Sigmoid>();
  }
};

}  // namespace detail

NetworkHandle::NetworkHandle() = default;
NetworkHandle::NetworkHandle(NetworkHandle&&) noexcept = default;
NetworkHandle& NetworkHandle::operator=(NetworkHandle&&) noexcept = default;
NetworkHandle::~NetworkHandle() = default;

Tensor NetworkHandle::forward(const Tensor& x) {
  if (!impl_) throw Error("forward on an empty network handle");
  const ImageShape in = input_shape();
  if (x.c() != in.c || x.h() != in.h || x.w() != in.w)
    throw ShapeMismatch(std::string(net_role_name(role_)) + " expects input c=" +
                        std::to_string(in.c) + " h=" + std::to_string(in.h) + " w=" +
                        std::to_string(in.w) + ", got " + x.shape_str());
  return impl_->forward(x);
}

Tensor NetworkHandle::backward(const Tensor& gy) {
  if (!impl_) throw Error("backward on an empty network handle");
  return impl_->backward(gy);
}

std::span<nn::Param* const> NetworkHandle::params() {
  return {params_.data(), params_.size()};
}

std::size_t NetworkHandle::param_count() { return nn::param_count(params()); }

void NetworkHandle::zero_grads() { nn::zero_grads(params()); }

ImageShape NetworkHandle::input_shape() const {
  if (role_ == NetRole::kEncoder) return {2 * shape_.c, shape_.h, shape_.w};
  return shape_;
}

ImageShape NetworkHandle::output_shape() const {
  if (role_ == NetRole::kDiscriminator) return {1, 1, 1};
  return shape_;
}

namespace {

void validate_arch(ImageShape s, const ArchConfig& cfg) {
  if (s.c != 1 && s.c != 3)
    throw ArchConfigError("image channels must be 1 or 3, got " + std::to_string(s.c));
  if (s.h < 16 || s.w < 16)
    throw ArchConfigError("image spatial dims must be at least 16, got " +
                          std::to_string(s.h) + "x" + std::to_string(s.w));
  if (s.h % 4 != 0 || s.w % 4 != 0)
    throw ArchConfigError("image spatial dims must be divisible by 4, got " +
                          std::to_string(s.h) + "x" + std::to_string(s.w));
  if (cfg.base_channels < 2 || cfg.base_channels > 256)
    throw ArchConfigError("base_channels must be in [2, 256], got " +
                          std::to_string(cfg.base_channels));
  if (cfg.depth < 0 || cfg.depth > 8)
    throw ArchConfigError("depth must be in [0, 8], got " + std::to_string(cfg.depth));
  if (cfg.kernel != 1 && cfg.kernel != 3 && cfg.kernel != 5)
    throw ArchConfigError("kernel must be 1, 3 or 5, got " + std::to_string(cfg.kernel));
}

NetworkHandle build_by_role(NetRole role, ImageShape s, const ArchConfig& cfg,
                            std::uint64_t seed) {
  switch (role) {
    case NetRole::kEncoder: return make_encoder(s, cfg, seed);
    case NetRole::kDecoder: return make_decoder(s, cfg, seed);
    case NetRole::kDiscriminator: return make_discriminator(s, cfg, seed);
  }
  throw Error("unknown network role");
}

}  // namespace

NetworkHandle make_encoder(ImageShape image_shape, const ArchConfig& config,
                           std::uint64_t seed) {
  validate_arch(image_shape, config);
  NetworkHandle h;
  h.role_ = NetRole::kEncoder;
  h.shape_ = image_shape;
  h.cfg_ = config;
  Rng rng = Rng(seed).fork("encoder");
  h.impl_ = std::make_unique<detail::EncoderImpl>(image_shape, config, rng);
  h.impl_->collect_params(h.params_);
  return h;
}

NetworkHandle make_decoder(ImageShape image_shape, const ArchConfig& config,
                           std::uint64_t seed) {
  validate_arch(image_shape, config);
  NetworkHandle h;
  h.role_ = NetRole::kDecoder;
  h.shape_ = image_shape;
  h.cfg_ = config;
  Rng rng = Rng(seed).fork("decoder");
  h.impl_ = std::make_unique<detail::DecoderImpl>(image_shape, config, rng);
  h.impl_->collect_params(h.params_);
  return h;
}

NetworkHandle make_discriminator(ImageShape image_shape, const ArchConfig& config,
                                 std::uint64_t seed) {
  validate_arch(image_shape, config);
  NetworkHandle h;
  h.role_ = NetRole::kDiscriminator;
  h.shape_ = image_shape;
  h.cfg_ = config;
  Rng rng = Rng(seed).fork("discriminator");
  h.impl_ = std::make_unique<detail::DiscImpl>(image_shape, config, rng);
  h.impl_->collect_params(h.params_);
  return h;
}

NetworkHandle NetworkHandle::clone() const {
  if (!impl_) return {};
  NetworkHandle copy = build_by_role(role_, shape_, cfg_, 0);
  auto* self = const_cast<NetworkHandle*>(this);
  auto src = self->params();
  auto dst = copy.params();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
  return copy;
}

std::string save_checkpoint(NetworkHandle& handle, const std::filesystem::path& path) {
  if (!handle.valid()) throw Error("cannot checkpoint an empty network handle");
  CheckpointData data;
  const ImageShape s = handle.image_shape();
  data.header = {{"format", "uigwm-net"},
                 {"role", net_role_name(handle.role())},
                 {"image_shape", {{"c", s.c}, {"h", s.h}, {"w", s.w}}},
                 {"arch", handle.arch_config().to_json()}};
  int idx = 0;
  for (nn::Param* prm : handle.params()) {
    std::vector<double> values(prm->value.data(), prm->value.data() + prm->value.size());
    data.blobs.emplace_back("p" + std::to_string(idx++), std::move(values));
  }
  return write_checkpoint_file(path, data);
}

NetworkHandle load_checkpoint(const std::filesystem::path& path) {
  const CheckpointData data = read_checkpoint_file(path);
  NetRole role;
  ImageShape shape;
  ArchConfig cfg;
  try {
    if (data.header.at("format").get<std::string>() != "uigwm-net")
      throw CheckpointCorrupt("checkpoint does not hold a network: " + path.string());
    const std::string role_name = data.header.at("role").get<std::string>();
    if (role_name == "encoder")
      role = NetRole::kEncoder;
    else if (role_name == "decoder")
      role = NetRole::kDecoder;
    else if (role_name == "discriminator")
      role = NetRole::kDiscriminator;
    else
      throw CheckpointCorrupt("unknown network role: " + role_name);
    const auto& sj = data.header.at("image_shape");
    shape = {sj.at("c").get<int>(), sj.at("h").get<int>(), sj.at("w").get<int>()};
    cfg = ArchConfig::from_json(data.header.at("arch"));
  } catch (const nlohmann::json::exception&) {
    throw CheckpointCorrupt("malformed network checkpoint header: " + path.string());
  }

  NetworkHandle net = build_by_role(role, shape, cfg, 0);
  auto params = net.params();
  if (params.size() != data.blobs.size())
    throw CheckpointCorrupt("parameter count mismatch in " + path.string());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& values = data.blobs[i].second;
    if (values.size() != params[i]->value.size())
      throw CheckpointCorrupt("parameter size mismatch in " + path.string());
    std::copy(values.begin(), values.end(), params[i]->value.data());
  }
  return net;
}

NetworkHandle load_checkpoint_as(const std::filesystem::path& path, NetRole expected) {
  NetworkHandle net = load_checkpoint(path);
  if (net.role() != expected)
    throw CheckpointRoleMismatch(net_role_name(expected), net_role_name(net.role()));
  return net;
}

}  // namespace uigwm
