#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "uigwm/nn.hpp"
#include "uigwm/tensor.hpp"

namespace uigwm {

enum class NetRole { kEncoder, kDecoder, kDiscriminator };

const char* net_role_name(NetRole role);

struct ImageShape {
  int c = 3, h = 32, w = 32;
  bool operator==(const ImageShape&) const = default;
};

// Layer widths/depths of the configurable convolutional stand-ins.
struct ArchConfig {
  int base_channels = 16;
  int depth = 1;  // extra 3x3 conv blocks at the bottleneck
  int kernel = 3;

  nlohmann::json to_json() const;
  static ArchConfig from_json(const nlohmann::json& j);
};

namespace detail {
class NetImpl;
}

// A parameterized function with a fixed I/O contract:
//   encoder        (cover || watermark, 2c channels) -> watermarked image in [0,1]
//   decoder        image -> extracted watermark estimate (raw, not clamped)
//   discriminator  image -> probability in (0,1) that it carries no watermark
class NetworkHandle {
 public:
  NetworkHandle();
  NetworkHandle(NetworkHandle&&) noexcept;
  NetworkHandle& operator=(NetworkHandle&&) noexcept;
  ~NetworkHandle();

  Tensor forward(const Tensor& x);
  // Gradient w.r.t. the last forward's input; accumulates parameter grads.
  Tensor backward(const Tensor& gy);

  std::span<nn::Param* const> params();
  std::size_t param_count();
  void zero_grads();

  NetRole role() const { return role_; }
  ImageShape image_shape() const { return shape_; }
  const ArchConfig& arch_config() const { return cfg_; }
  ImageShape input_shape() const;   // per-role input contract
  ImageShape output_shape() const;  // per-role output contract

  bool valid() const { return impl_ != nullptr; }

  // Deep copy (same parameters, independent training state).
  NetworkHandle clone() const;

 private:
  friend NetworkHandle make_encoder(ImageShape, const ArchConfig&, std::uint64_t);
  friend NetworkHandle make_decoder(ImageShape, const ArchConfig&, std::uint64_t);
  friend NetworkHandle make_discriminator(ImageShape, const ArchConfig&, std::uint64_t);

  NetRole role_ = NetRole::kDecoder;
  ImageShape shape_;
  ArchConfig cfg_;
  std::unique_ptr<detail::NetImpl> impl_;
  std::vector<nn::Param*> params_;
};

// Builders. Spatial dims must be >= 16 and divisible by 4; channels 1 or 3.
NetworkHandle make_encoder(ImageShape image_shape, const ArchConfig& config = {},
                           std::uint64_t seed = 0);
NetworkHandle make_decoder(ImageShape image_shape, const ArchConfig& config = {},
                           std::uint64_t seed = 0);
NetworkHandle make_discriminator(ImageShape image_shape, const ArchConfig& config = {},
                                 std::uint64_t seed = 0);

// Checkpoint persistence. Returns the checkpoint id (SHA-256 of the file).
std::string save_checkpoint(NetworkHandle& handle, const std::filesystem::path& path);
NetworkHandle load_checkpoint(const std::filesystem::path& path);
// Same, but requires the stored role to match.
NetworkHandle load_checkpoint_as(const std::filesystem::path& path, NetRole expected);

}  // namespace uigwm
