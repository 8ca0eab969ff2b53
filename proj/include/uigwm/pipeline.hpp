#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "uigwm/imaging.hpp"
#include "uigwm/losses.hpp"
#include "uigwm/metrics.hpp"
#include "uigwm/networks.hpp"

// End-to-end orchestration: joint embedding training, watermarked release,
// verifier fine-tuning on the four-part validation set, and the final
// theft verdict on a suspicious model's outputs.
namespace uigwm {

struct Stage1Config {
  int epochs = 20;
  int batch_size = 8;
  double lr = 1e-3;
  LossWeights weights;
  bool use_adversarial = true;    // drop the steganalysis term when false
  double quality_floor_db = 28.0; // held-out PSNR floor; <= 0 disables the check
  int holdout_count = 64;         // covers reserved for the quality evaluation
  std::filesystem::path checkpoint_dir;  // empty = keep everything in memory
};

struct Stage1History {
  std::vector<double> total, embed, sadv, ext;  // per-epoch batch means
};

struct Stage1Result {
  Stage1History history;
  double holdout_psnr_db = 0.0;       // cover vs watermarked, held-out covers
  double holdout_ssim = 0.0;
  double holdout_extract_ssim = 0.0;  // decoded watermarked output vs the mark
  std::string encoder_checkpoint, decoder_checkpoint, discriminator_checkpoint;
};

// Trains encoder/decoder/discriminator jointly on domain-A images, 1:1
// alternation between the discriminator ascent and the embed/extract descent.
// Throws QualityFloorUnmet when the held-out PSNR ends below the floor and
// TrainingDiverged when any loss goes non-finite.
Stage1Result run_stage1(const LabeledDataset& domain_a, const WatermarkPair& wm,
                        NetworkHandle& encoder, NetworkHandle& decoder,
                        NetworkHandle& discriminator, const Stage1Config& config,
                        std::uint64_t seed);

struct ReleaseResult {
  LabeledDataset released;  // 8-bit-quantized watermarked images, tagged A'
  double mean_psnr_db = 0.0;
  double mean_ssim = 0.0;
};

// Runs covers through the encoder and quantizes to 8-bit, the form in which
// images leave the owner's hands. Manifest entries link each released image
// to its cover. Writes PNGs plus manifest.json when out_dir is nonempty.
ReleaseResult release_watermarked(NetworkHandle& encoder, const LabeledDataset& covers,
                                  const WatermarkPair& wm,
                                  const std::filesystem::path& out_dir = {});

struct Stage2Config {
  int epochs_max = 40;
  int batch_size = 8;
  double lr = 5e-4;
  double rel_tol = 1e-4;  // stop after `patience` epochs of < rel_tol improvement
  int patience = 5;
  bool include_blank_loss = true;  // ablation: drop the blank-side objective
  double image_threshold = 0.9;    // per-image extraction SSIM threshold
};

struct Stage2Result {
  std::vector<double> loss_curve;
  int epochs_run = 0;
  // Extraction stats on the fresh evaluation sets, before and after tuning.
  double er_before = 0.0, er_after = 0.0;
  double fpr_before = 0.0, fpr_after = 0.0;
};

// Fine-tunes the decoder on the validation set so suspicious-model outputs
// decode to the mark while originals and unrelated models stay blank.
// fresh_b / fresh_clean are evaluation-only images never seen in training.
Stage2Result run_stage2(NetworkHandle& decoder, const ValidationSet& vset,
                        const WatermarkPair& wm, const Stage2Config& config,
                        const Tensor& fresh_b, const Tensor& fresh_clean,
                        std::uint64_t seed);

struct VerificationVerdict {
  double extraction_rate = 0.0;
  bool theft = false;  // extraction_rate strictly above model_threshold
  double image_threshold = 0.9;
  double model_threshold = 0.05;
  int n_images = 0;
  std::vector<ExtractionOutcome> outcomes;

  nlohmann::json to_json() const;
};

// Decodes every suspicious image and turns the per-image successes into a
// model-level verdict.
VerificationVerdict verify(NetworkHandle& decoder, const Tensor& suspicious_images,
                           const WatermarkPair& wm, double image_threshold = 0.9,
                           double model_threshold = 0.05);

// Amplified absolute difference, for eyeballing where the mark lives.
Tensor residual_visualization(const Tensor& cover, const Tensor& watermarked,
                              double gain = 20.0);

// Decoder outputs for a batch of images, clamped to [0,1], chunked to bound
// peak memory.
Tensor decode_images(NetworkHandle& decoder, const Tensor& images);

// Per-image extraction outcomes of decoder(images) against the mark.
std::vector<ExtractionOutcome> extraction_outcomes(NetworkHandle& decoder,
                                                   const Tensor& images,
                                                   const Tensor& delta1,
                                                   double image_threshold = 0.9);

}  // namespace uigwm
