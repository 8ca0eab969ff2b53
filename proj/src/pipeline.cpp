#include "uigwm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "uigwm/error.hpp"
#include "uigwm/hash.hpp"
#include "uigwm/nn.hpp"
#include "uigwm/rng.hpp"

namespace uigwm {

namespace {

constexpr int kChunk = 64;

void require_wm_matches(const WatermarkPair& wm, const Tensor& images, const char* where) {
  if (images.empty()) throw EmptyInput(std::string(where) + ": no images");
  if (wm.delta1.c() != images.c() || wm.delta1.h() != images.h() ||
      wm.delta1.w() != images.w())
    throw ShapeMismatch(std::string(where) + ": watermark " + wm.delta1.shape_str() +
                        " does not match images " + images.shape_str());
}

void require_net_shape(NetworkHandle& net, const Tensor& images, const char* where) {
  const ImageShape s = net.image_shape();
  if (s.c != images.c() || s.h != images.h() || s.w != images.w())
    throw ShapeMismatch(std::string(where) + ": network built for c=" +
                        std::to_string(s.c) + " h=" + std::to_string(s.h) + " w=" +
                        std::to_string(s.w) + ", images are " + images.shape_str());
}

Tensor encode_batch(NetworkHandle& encoder, const Tensor& covers, const Tensor& delta1) {
  return encoder.forward(concat_channels(covers, repeat_batch(delta1, covers.n())));
}

Tensor encode_images(NetworkHandle& encoder, const Tensor& covers, const Tensor& delta1) {
  Tensor out;
  for (int i0 = 0; i0 < covers.n(); i0 += kChunk) {
    const int i1 = std::min(covers.n(), i0 + kChunk);
    out = concat_batch(out, encode_batch(encoder, slice_batch(covers, i0, i1), delta1));
  }
  return out;
}

double mean_image_psnr(const Tensor& a, const Tensor& b) {
  double total = 0.0;
  for (int i = 0; i < a.n(); ++i)
    total += psnr(slice_batch(a, i, i + 1), slice_batch(b, i, i + 1));
  return total / a.n();
}

double mean_image_ssim(const Tensor& a, const Tensor& b) {
  double total = 0.0;
  for (int i = 0; i < a.n(); ++i)
    total += ssim(slice_batch(a, i, i + 1), slice_batch(b, i, i + 1));
  return total / a.n();
}

}  // namespace

Tensor decode_images(NetworkHandle& decoder, const Tensor& images) {
  Tensor out;
  for (int i0 = 0; i0 < images.n(); i0 += kChunk) {
    const int i1 = std::min(images.n(), i0 + kChunk);
    out = concat_batch(out, clamp01(decoder.forward(slice_batch(images, i0, i1))));
  }
  return out;
}

std::vector<ExtractionOutcome> extraction_outcomes(NetworkHandle& decoder,
                                                   const Tensor& images,
                                                   const Tensor& delta1,
                                                   double image_threshold) {
  const Tensor decoded = decode_images(decoder, images);
  std::vector<ExtractionOutcome> outcomes;
  outcomes.reserve(decoded.n());
  for (int i = 0; i < decoded.n(); ++i)
    outcomes.push_back(
        extraction_success(slice_batch(decoded, i, i + 1), delta1, image_threshold));
  return outcomes;
}

Stage1Result run_stage1(const LabeledDataset& domain_a, const WatermarkPair& wm,
                        NetworkHandle& encoder, NetworkHandle& decoder,
                        NetworkHandle& discriminator, const Stage1Config& config,
                        std::uint64_t seed) {
  require_wm_matches(wm, domain_a.images, "run_stage1");
  require_net_shape(encoder, domain_a.images, "run_stage1");
  const int n_total = domain_a.images.n();
  if (config.holdout_count < 1 || config.holdout_count >= n_total)
    throw InsufficientData("stage-1 training", config.holdout_count + config.batch_size,
                           n_total);
  const int n_train = n_total - config.holdout_count;
  if (n_train < config.batch_size)
    throw InsufficientData("stage-1 training", config.batch_size, n_train);
  if (config.epochs < 0) throw ArchConfigError("epochs must be non-negative");

  const Tensor train = slice_batch(domain_a.images, 0, n_train);
  const Tensor holdout = slice_batch(domain_a.images, n_train, n_total);

  nn::Adam adam_h({config.lr}), adam_r({config.lr}), adam_d({config.lr});
  Rng root(seed);
  Rng train_rng = root.fork("train");

  const auto save_all = [&](Stage1Result& r) {
    if (config.checkpoint_dir.empty()) return;
    std::filesystem::create_directories(config.checkpoint_dir);
    r.encoder_checkpoint = (config.checkpoint_dir / "encoder.ckpt").string();
    r.decoder_checkpoint = (config.checkpoint_dir / "decoder.ckpt").string();
    r.discriminator_checkpoint = (config.checkpoint_dir / "discriminator.ckpt").string();
    save_checkpoint(encoder, r.encoder_checkpoint);
    save_checkpoint(decoder, r.decoder_checkpoint);
    save_checkpoint(discriminator, r.discriminator_checkpoint);
  };

  Stage1Result result;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto perm = train_rng.permutation(n_train);
    double sum_total = 0, sum_embed = 0, sum_sadv = 0, sum_ext = 0;
    int steps = 0;
    for (int b = 0; b + config.batch_size <= n_train; b += config.batch_size) {
      std::span<const int> idx(perm.data() + b,
                               static_cast<std::size_t>(config.batch_size));
      const Tensor a = gather_batch(train, idx);
      const Tensor a_prime = encode_batch(encoder, a, wm.delta1);

      double l_sadv_value = 0.0;
      if (config.use_adversarial) {
        const Tensor d_real = discriminator.forward(a);
        discriminator.backward(sadv_disc_grad_real(d_real));
        const Tensor d_fake = discriminator.forward(a_prime);
        discriminator.backward(sadv_disc_grad_fake(d_fake));
        adam_d.step(discriminator.params());
        discriminator.zero_grads();
        l_sadv_value = loss_sadv(d_real, d_fake);
      }

      // Embed/extract step. Gradients w.r.t. a_prime accumulate from the
      // imperceptibility term, the (non-saturating) adversarial term, and
      // the extraction term, then flow into the encoder in one pass.
      const double l_embed_value = loss_embed(a, a_prime);
      Tensor ga = nn::mse_grad(a_prime, a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] *= config.weights.lambda1;

      if (config.use_adversarial) {
        const Tensor d_fake2 = discriminator.forward(a_prime);
        Tensor gd = sadv_gen_grad(d_fake2);
        for (std::size_t i = 0; i < gd.size(); ++i)
          gd.data()[i] *= config.weights.lambda2;
        const Tensor ga_sadv = discriminator.backward(gd);
        discriminator.zero_grads();
        for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += ga_sadv.data()[i];
      }

      const Tensor r_fake = decoder.forward(a_prime);
      const double l_ext_fake = mse_vs_single(r_fake, wm.delta1);
      const Tensor ga_ext = decoder.backward(nn::mse_grad_vs_single(r_fake, wm.delta1));
      for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += ga_ext.data()[i];

      const Tensor r_real = decoder.forward(a);
      const double l_ext_real = mse_vs_single(r_real, wm.delta0);
      decoder.backward(nn::mse_grad_vs_single(r_real, wm.delta0));

      encoder.backward(ga);
      adam_h.step(encoder.params());
      adam_r.step(decoder.params());
      encoder.zero_grads();
      decoder.zero_grads();

      const double l_ext_value = l_ext_real + l_ext_fake;
      const double l_total =
          loss_total_stage1(l_embed_value, l_sadv_value, l_ext_value, config.weights);
      if (!std::isfinite(l_total)) {
        Stage1Result partial;
        save_all(partial);
        throw TrainingDiverged("stage-1 loss went non-finite at epoch " +
                                   std::to_string(epoch + 1),
                               partial.encoder_checkpoint);
      }
      sum_total += l_total;
      sum_embed += l_embed_value;
      sum_sadv += l_sadv_value;
      sum_ext += l_ext_value;
      ++steps;
    }
    if (steps > 0) {
      result.history.total.push_back(sum_total / steps);
      result.history.embed.push_back(sum_embed / steps);
      result.history.sadv.push_back(sum_sadv / steps);
      result.history.ext.push_back(sum_ext / steps);
    }
    save_all(result);
  }

  const Tensor wm_holdout = encode_images(encoder, holdout, wm.delta1);
  result.holdout_psnr_db = mean_image_psnr(holdout, wm_holdout);
  result.holdout_ssim = mean_image_ssim(holdout, wm_holdout);
  const Tensor extracted = decode_images(decoder, wm_holdout);
  double ext_ssim = 0.0;
  for (int i = 0; i < extracted.n(); ++i)
    ext_ssim += ssim(slice_batch(extracted, i, i + 1), wm.delta1);
  result.holdout_extract_ssim = ext_ssim / extracted.n();

  save_all(result);
  if (config.quality_floor_db > 0.0 && result.holdout_psnr_db < config.quality_floor_db)
    throw QualityFloorUnmet(result.holdout_psnr_db, config.quality_floor_db);
  return result;
}

ReleaseResult release_watermarked(NetworkHandle& encoder, const LabeledDataset& covers,
                                  const WatermarkPair& wm,
                                  const std::filesystem::path& out_dir) {
  require_wm_matches(wm, covers.images, "release_watermarked");
  require_net_shape(encoder, covers.images, "release_watermarked");

  ReleaseResult result;
  result.released.tag = DomainTag::kAPrime;
  result.released.images = quantize8(encode_images(encoder, covers.images, wm.delta1));

  result.mean_psnr_db = mean_image_psnr(covers.images, result.released.images);
  result.mean_ssim = mean_image_ssim(covers.images, result.released.images);

  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  char name[32];
  for (int i = 0; i < result.released.images.n(); ++i) {
    std::snprintf(name, sizeof(name), "ap_%05d.png", i);
    ManifestEntry entry;
    entry.path = name;
    entry.sha256 = sha256_hex(encode_png(result.released.images, i));
    entry.cover_sha256 = i < static_cast<int>(covers.manifest.size())
                             ? covers.manifest[i].sha256
                             : sha256_hex(encode_png(covers.images, i));
    result.released.manifest.push_back(std::move(entry));
    if (!out_dir.empty()) save_image_png(out_dir / name, result.released.images, i);
  }
  if (!out_dir.empty()) result.released.save_manifest(out_dir / "manifest.json");
  return result;
}

Stage2Result run_stage2(NetworkHandle& decoder, const ValidationSet& vset,
                        const WatermarkPair& wm, const Stage2Config& config,
                        const Tensor& fresh_b, const Tensor& fresh_clean,
                        std::uint64_t seed) {
  for (DomainTag tag :
       {DomainTag::kA, DomainTag::kAPrime, DomainTag::kB, DomainTag::kX}) {
    const auto it = vset.parts.find(tag);
    if (it == vset.parts.end() || it->second.images.empty())
      throw IncompleteValidationSet(std::string("validation set is missing part ") +
                                    domain_tag_name(tag));
  }
  const Tensor& va = vset.part(DomainTag::kA).images;
  const Tensor& vap = vset.part(DomainTag::kAPrime).images;
  const Tensor& vb = vset.part(DomainTag::kB).images;
  const Tensor& vx = vset.part(DomainTag::kX).images;
  require_wm_matches(wm, va, "run_stage2");
  require_net_shape(decoder, va, "run_stage2");
  if (fresh_b.empty() || fresh_clean.empty())
    throw EmptyInput("run_stage2: fresh evaluation sets must be non-empty");

  const int per_part = std::min(std::min(va.n(), vap.n()), std::min(vb.n(), vx.n()));
  if (per_part < config.batch_size)
    throw InsufficientData("stage-2 fine-tuning", config.batch_size, per_part);
  if (config.epochs_max < 1) throw ArchConfigError("epochs_max must be at least 1");

  Stage2Result result;
  {
    const auto ob = extraction_outcomes(decoder, fresh_b, wm.delta1, config.image_threshold);
    const auto oc =
        extraction_outcomes(decoder, fresh_clean, wm.delta1, config.image_threshold);
    result.er_before = extraction_rate(ob);
    result.fpr_before = false_positive_rate(oc);
  }

  nn::Adam adam({config.lr});
  Rng root(seed);
  Rng train_rng = root.fork("train");

  const auto tune_batch = [&](const Tensor& part, std::span<const int> idx,
                              const Tensor& target) {
    const Tensor batch = gather_batch(part, idx);
    const Tensor out = decoder.forward(batch);
    const double value = mse_vs_single(out, target);
    decoder.backward(nn::mse_grad_vs_single(out, target));
    return value;
  };

  int quiet_epochs = 0;
  for (int epoch = 0; epoch < config.epochs_max; ++epoch) {
    const auto perm_a = train_rng.permutation(per_part);
    const auto perm_ap = train_rng.permutation(per_part);
    const auto perm_b = train_rng.permutation(per_part);
    const auto perm_x = train_rng.permutation(per_part);
    double sum_loss = 0.0;
    int steps = 0;
    for (int b = 0; b + config.batch_size <= per_part; b += config.batch_size) {
      const auto take = [&](const std::vector<int>& perm) {
        return std::span<const int>(perm.data() + b,
                                    static_cast<std::size_t>(config.batch_size));
      };
      double loss = 0.0;
      loss += tune_batch(vap, take(perm_ap), wm.delta1);
      loss += tune_batch(vb, take(perm_b), wm.delta1);
      if (config.include_blank_loss) {
        loss += tune_batch(va, take(perm_a), wm.delta0);
        loss += tune_batch(vx, take(perm_x), wm.delta0);
      }
      adam.step(decoder.params());
      decoder.zero_grads();
      if (!std::isfinite(loss))
        throw TrainingDiverged("stage-2 loss went non-finite at epoch " +
                               std::to_string(epoch + 1));
      sum_loss += loss;
      ++steps;
    }
    const double epoch_loss = steps > 0 ? sum_loss / steps : 0.0;
    result.loss_curve.push_back(epoch_loss);
    result.epochs_run = epoch + 1;

    if (epoch > 0) {
      const double prev = result.loss_curve[epoch - 1];
      const double rel = (prev - epoch_loss) / std::max(std::abs(prev), 1e-12);
      quiet_epochs = rel < config.rel_tol ? quiet_epochs + 1 : 0;
      if (quiet_epochs >= config.patience) break;
    }
  }

  {
    const auto ob = extraction_outcomes(decoder, fresh_b, wm.delta1, config.image_threshold);
    const auto oc =
        extraction_outcomes(decoder, fresh_clean, wm.delta1, config.image_threshold);
    result.er_after = extraction_rate(ob);
    result.fpr_after = false_positive_rate(oc);
  }
  return result;
}

nlohmann::json VerificationVerdict::to_json() const {
  nlohmann::json per_image = nlohmann::json::array();
  for (const auto& o : outcomes)
    per_image.push_back({{"ssim_vs_mark", o.ssim_vs_delta1}, {"success", o.success}});
  return {{"extraction_rate", extraction_rate},
          {"verdict", theft ? "THEFT" : "NO_THEFT"},
          {"image_threshold", image_threshold},
          {"model_threshold", model_threshold},
          {"n_images", n_images},
          {"per_image", std::move(per_image)}};
}

VerificationVerdict verify(NetworkHandle& decoder, const Tensor& suspicious_images,
                           const WatermarkPair& wm, double image_threshold,
                           double model_threshold) {
  if (suspicious_images.empty()) throw EmptyInput("verify: no suspicious images");
  require_wm_matches(wm, suspicious_images, "verify");
  require_net_shape(decoder, suspicious_images, "verify");
  if (!(image_threshold >= 0.0 && image_threshold <= 1.0))
    throw NumericalDomainError("image_threshold must be in [0,1]");
  if (!(model_threshold >= 0.0 && model_threshold <= 1.0))
    throw NumericalDomainError("model_threshold must be in [0,1]");

  VerificationVerdict verdict;
  verdict.image_threshold = image_threshold;
  verdict.model_threshold = model_threshold;
  verdict.outcomes =
      extraction_outcomes(decoder, suspicious_images, wm.delta1, image_threshold);
  verdict.n_images = static_cast<int>(verdict.outcomes.size());
  verdict.extraction_rate = extraction_rate(verdict.outcomes);
  verdict.theft = verdict.extraction_rate > model_threshold;
  return verdict;
}

Tensor residual_visualization(const Tensor& cover, const Tensor& watermarked,
                              double gain) {
  require_same_shape(cover, watermarked, "residual_visualization");
  if (!(gain > 0.0)) throw NumericalDomainError("gain must be positive");
  Tensor out = Tensor::zeros_like(cover);
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = std::abs(watermarked.data()[i] - cover.data()[i]) * gain;
  clamp01_inplace(out);
  return out;
}

}  // namespace uigwm
