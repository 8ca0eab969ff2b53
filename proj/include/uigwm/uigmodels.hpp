#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "uigwm/imaging.hpp"
#include "uigwm/networks.hpp"
#include "uigwm/tensor.hpp"

// Small unconditional image generators that stand in for the models whose
// outputs get watermarked and for the surrogates trained on stolen data.
// All of them train on CPU in minutes at 32x32 and sample deterministically
// from a seed.
namespace uigwm {

enum class GeneratorKind { kTinyVae, kTinyGan, kTinyDdpm, kTinyDdpmFast };

const char* generator_kind_name(GeneratorKind kind);
GeneratorKind parse_generator_kind(const std::string& name);

struct GenTrainConfig {
  int epochs = 20;
  int batch_size = 16;
  double lr = 1e-3;
  int base_channels = 16;
  int latent_dim = 32;     // TINY_VAE / TINY_GAN
  double kl_weight = 1.0;  // TINY_VAE
  int timesteps = 200;     // TINY_DDPM denoising chain length
  int sample_stride = 4;   // TINY_DDPM_FAST step stride (1 = full chain)

  nlohmann::json to_json() const;
  static GenTrainConfig from_json(const nlohmann::json& j);
};

struct GenTrainMeta {
  std::uint64_t seed = 0;
  int epochs_run = 0;
  std::vector<double> epoch_loss;  // one entry per epoch
};

namespace detail {
class GenImpl;
}

class GeneratorHandle {
 public:
  GeneratorHandle();
  GeneratorHandle(GeneratorHandle&&) noexcept;
  GeneratorHandle& operator=(GeneratorHandle&&) noexcept;
  ~GeneratorHandle();

  // n images (n,c,h,w) in [0,1]. Image i draws from its own noise stream, so
  // results depend only on (parameters, seed, i), not on n or internal
  // batching, up to last-ulp float reduction order; identical once quantized
  // to 8 bits.
  Tensor sample(int n, std::uint64_t seed);

  GeneratorKind kind() const { return kind_; }
  ImageShape image_shape() const { return shape_; }
  const GenTrainConfig& config() const { return cfg_; }
  const GenTrainMeta& meta() const { return meta_; }

  bool valid() const { return impl_ != nullptr; }

 private:
  friend GeneratorHandle train_generator(GeneratorKind, const LabeledDataset&,
                                         const GenTrainConfig&, std::uint64_t);
  friend GeneratorHandle load_generator(const std::filesystem::path&);
  friend std::string save_generator(GeneratorHandle&, const std::filesystem::path&);

  GeneratorKind kind_ = GeneratorKind::kTinyVae;
  ImageShape shape_;
  GenTrainConfig cfg_;
  GenTrainMeta meta_;
  std::unique_ptr<detail::GenImpl> impl_;
};

// Trains a generator of the given kind on the dataset images. Throws
// TrainingDiverged when the loss goes non-finite, InsufficientData when the
// dataset is smaller than one batch.
GeneratorHandle train_generator(GeneratorKind kind, const LabeledDataset& dataset,
                                const GenTrainConfig& config, std::uint64_t seed);

// Checkpoint persistence; returns the checkpoint id (SHA-256 of the file).
std::string save_generator(GeneratorHandle& gen, const std::filesystem::path& path);
GeneratorHandle load_generator(const std::filesystem::path& path);

}  // namespace uigwm
