#include <unistd.h>

#include <cmath>
#include <filesystem>

#include <doctest.h>

#include <json.hpp>

#include "oracles.hpp"
#include "uigwm/error.hpp"
#include "uigwm/hash.hpp"
#include "uigwm/pipeline.hpp"
#include "uigwm/rng.hpp"
#include "uigwm/toydata.hpp"

using namespace uigwm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("uigwm_pipe_" + tag + "_" +
                                        std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

constexpr int kHW = 16;
const ImageShape kShape{3, kHW, kHW};
const ArchConfig kSmall{.base_channels = 4, .depth = 1, .kernel = 3};

LabeledDataset toy(int n, std::uint64_t seed, DomainTag tag = DomainTag::kA) {
  LabeledDataset ds;
  ds.images = make_toy_images(n, kHW, kHW, seed);
  ds.tag = tag;
  ds.manifest.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    ds.manifest[static_cast<std::size_t>(i)].path = "t" + std::to_string(i);
    ds.manifest[static_cast<std::size_t>(i)].sha256 = sha256_hex(encode_png(ds.images, i));
  }
  return ds;
}

WatermarkPair mark() { return make_watermark_pair(make_toy_watermark(kHW, kHW)); }

// Images stamped with a strong checkerboard: a pattern a small decoder can
// learn to map to the mark, standing in for surrogate-model outputs.
Tensor stamped(int n, std::uint64_t seed) {
  Tensor imgs = make_toy_images(n, kHW, kHW, seed);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < kHW; ++y)
        for (int x = 0; x < kHW; ++x) {
          const double v = ((x / 2 + y / 2) % 2 == 0) ? 0.85 : 0.15;
          imgs(i, c, y, x) = 0.3 * imgs(i, c, y, x) + 0.7 * v;
        }
  return imgs;
}

ValidationSet stamped_vset(int per_part, std::uint64_t seed) {
  LabeledDataset a = toy(per_part, seed, DomainTag::kA);
  LabeledDataset ap = toy(per_part, seed + 1, DomainTag::kAPrime);
  ap.images = stamped(per_part, seed + 1);
  LabeledDataset b = toy(per_part, seed + 2, DomainTag::kB);
  b.images = stamped(per_part, seed + 2);
  LabeledDataset x = toy(per_part, seed + 3, DomainTag::kX);
  return build_validation_set(a, ap, b, x, per_part, seed);
}

}  // namespace

TEST_SUITE("embedding training stage") {
  TEST_CASE("zero epochs still evaluates the holdout") {
    const LabeledDataset a = toy(24, 201);
    const WatermarkPair wm = mark();
    NetworkHandle enc = make_encoder(kShape, kSmall, 1);
    NetworkHandle dec = make_decoder(kShape, kSmall, 2);
    NetworkHandle disc = make_discriminator(kShape, kSmall, 3);

    Stage1Config cfg;
    cfg.epochs = 0;
    cfg.quality_floor_db = 0.0;
    cfg.holdout_count = 8;
    const Stage1Result res = run_stage1(a, wm, enc, dec, disc, cfg, 5);
    CHECK(res.history.total.empty());
    CHECK(std::isfinite(res.holdout_psnr_db));
    CHECK(res.holdout_ssim > 0.0);
    CHECK(res.holdout_ssim <= 1.0);
    // A fresh residual encoder stays close to its cover.
    CHECK(res.holdout_psnr_db > 15.0);
  }

  TEST_CASE("an unreachable quality floor raises") {
    const LabeledDataset a = toy(24, 203);
    const WatermarkPair wm = mark();
    NetworkHandle enc = make_encoder(kShape, kSmall, 1);
    NetworkHandle dec = make_decoder(kShape, kSmall, 2);
    NetworkHandle disc = make_discriminator(kShape, kSmall, 3);

    Stage1Config cfg;
    cfg.epochs = 0;
    cfg.quality_floor_db = 99.0;
    cfg.holdout_count = 8;
    CHECK_THROWS_AS(run_stage1(a, wm, enc, dec, disc, cfg, 5), QualityFloorUnmet);
  }

  TEST_CASE("a short run drives the joint loss down and checkpoints everything") {
    TempDir tmp("stage1");
    const LabeledDataset a = toy(40, 205);
    const WatermarkPair wm = mark();
    NetworkHandle enc = make_encoder(kShape, kSmall, 11);
    NetworkHandle dec = make_decoder(kShape, kSmall, 12);
    NetworkHandle disc = make_discriminator(kShape, kSmall, 13);

    Stage1Config cfg;
    cfg.epochs = 4;
    cfg.batch_size = 8;
    cfg.quality_floor_db = 0.0;
    cfg.holdout_count = 8;
    cfg.checkpoint_dir = tmp.path;
    const Stage1Result res = run_stage1(a, wm, enc, dec, disc, cfg, 7);

    REQUIRE(res.history.total.size() == 4);
    REQUIRE(res.history.embed.size() == 4);
    REQUIRE(res.history.sadv.size() == 4);
    REQUIRE(res.history.ext.size() == 4);
    for (double l : res.history.total) CHECK(std::isfinite(l));
    // The extraction term must fall: it starts near mse(0, delta1).
    CHECK(res.history.ext.back() < res.history.ext.front());

    CHECK(fs::exists(res.encoder_checkpoint));
    CHECK(fs::exists(res.decoder_checkpoint));
    CHECK(fs::exists(res.discriminator_checkpoint));
    NetworkHandle enc2 = load_checkpoint_as(res.encoder_checkpoint, NetRole::kEncoder);
    const Tensor x = concat_channels(slice_batch(a.images, 0, 2),
                                     repeat_batch(wm.delta1, 2));
    CHECK(mse(enc2.forward(x), enc.forward(x)) == 0.0);
  }

  TEST_CASE("the adversarial term can be switched off") {
    const LabeledDataset a = toy(16, 207);
    const WatermarkPair wm = mark();
    NetworkHandle enc = make_encoder(kShape, kSmall, 21);
    NetworkHandle dec = make_decoder(kShape, kSmall, 22);
    NetworkHandle disc = make_discriminator(kShape, kSmall, 23);

    Stage1Config cfg;
    cfg.epochs = 1;
    cfg.batch_size = 8;
    cfg.use_adversarial = false;
    cfg.quality_floor_db = 0.0;
    cfg.holdout_count = 8;
    const Stage1Result res = run_stage1(a, wm, enc, dec, disc, cfg, 9);
    REQUIRE(res.history.sadv.size() == 1);
    CHECK(res.history.sadv[0] == 0.0);
  }
}

TEST_SUITE("watermarked release") {
  TEST_CASE("released images are 8-bit clean and trace their covers") {
    TempDir tmp("release");
    const LabeledDataset covers = toy(6, 209);
    const WatermarkPair wm = mark();
    NetworkHandle enc = make_encoder(kShape, kSmall, 31);

    const ReleaseResult rel = release_watermarked(enc, covers, wm, tmp.path);
    REQUIRE(rel.released.size() == 6);
    CHECK(rel.released.tag == DomainTag::kAPrime);
    CHECK(rel.mean_psnr_db > 15.0);
    CHECK(rel.mean_ssim > 0.5);

    // Every value sits on the 8-bit grid.
    for (std::size_t i = 0; i < rel.released.images.size(); ++i) {
      const double v = rel.released.images.flat(i) * 255.0;
      CHECK(std::abs(v - std::lround(v)) < 1e-9);
    }

    for (int i = 0; i < 6; ++i) {
      const auto& e = rel.released.manifest[static_cast<std::size_t>(i)];
      CHECK(e.cover_sha256 == covers.manifest[static_cast<std::size_t>(i)].sha256);
      CHECK(e.sha256 == sha256_hex(encode_png(rel.released.images, i)));
      CHECK(fs::exists(tmp.path / e.path));
    }
    CHECK(fs::exists(tmp.path / "manifest.json"));

    // Reloading the PNGs reproduces the released tensor exactly.
    const LabeledDataset back = load_dataset(tmp.path, kHW, kHW, 3, DomainTag::kAPrime);
    CHECK(mse(back.images, rel.released.images) == 0.0);

    const ReleaseResult again = release_watermarked(enc, covers, wm);
    CHECK(again.released.content_hash() == rel.released.content_hash());
  }
}

TEST_SUITE("verifier fine-tuning stage") {
  TEST_CASE("tuning teaches the decoder the surrogate's tell") {
    const WatermarkPair wm = mark();
    NetworkHandle dec = make_decoder(kShape, {.base_channels = 8, .depth = 1}, 41);

    const ValidationSet vset = stamped_vset(16, 301);
    const Tensor fresh_b = stamped(12, 401);
    const Tensor fresh_clean = make_toy_images(12, kHW, kHW, 403);

    Stage2Config cfg;
    cfg.epochs_max = 200;
    cfg.batch_size = 8;
    cfg.lr = 1e-2;
    cfg.image_threshold = 0.5;  // a deliberately small decoder, so a soft bar
    const Stage2Result res = run_stage2(dec, vset, wm, cfg, fresh_b, fresh_clean, 11);

    REQUIRE(res.epochs_run >= 1);
    REQUIRE(res.loss_curve.size() == static_cast<std::size_t>(res.epochs_run));
    CHECK(res.loss_curve.back() < res.loss_curve.front());
    // The stamped pattern is strong and the decoder small: extraction on the
    // fresh stamped set must end far above where it started.
    CHECK(res.er_after >= res.er_before);
    CHECK(res.er_after > 0.5);
    CHECK(res.fpr_after <= 0.25);

    const VerificationVerdict verdict = verify(dec, fresh_b, wm, 0.5, 0.05);
    CHECK(verdict.extraction_rate == doctest::Approx(res.er_after));
    CHECK(verdict.theft);
    CHECK(verdict.to_json().at("verdict") == "THEFT");
  }

  TEST_CASE("incomplete inputs are rejected") {
    const WatermarkPair wm = mark();
    NetworkHandle dec = make_decoder(kShape, kSmall, 43);
    const Tensor fresh = make_toy_images(4, kHW, kHW, 405);

    ValidationSet missing = stamped_vset(8, 303);
    missing.parts.erase(DomainTag::kB);
    CHECK_THROWS_AS(run_stage2(dec, missing, wm, {}, fresh, fresh, 1),
                    IncompleteValidationSet);

    const ValidationSet vset = stamped_vset(8, 305);
    CHECK_THROWS_AS(run_stage2(dec, vset, wm, {}, Tensor(), fresh, 1), EmptyInput);
    CHECK_THROWS_AS(run_stage2(dec, vset, wm, {}, fresh, Tensor(), 1), EmptyInput);

    Stage2Config big;
    big.batch_size = 16;
    CHECK_THROWS_AS(run_stage2(dec, vset, wm, big, fresh, fresh, 1), InsufficientData);
  }
}

TEST_SUITE("verdicts") {
  TEST_CASE("the verdict is a strict comparison against the model threshold") {
    const WatermarkPair wm = mark();
    NetworkHandle dec = make_decoder(kShape, kSmall, 47);
    const Tensor imgs = make_toy_images(10, kHW, kHW, 407);

    // An untuned decoder extracts nothing: rate 0, and 0 > 0 is false.
    const VerificationVerdict v0 = verify(dec, imgs, wm, 0.9, 0.0);
    CHECK(v0.extraction_rate == 0.0);
    CHECK_FALSE(v0.theft);
    CHECK(v0.n_images == 10);
    REQUIRE(v0.outcomes.size() == 10);

    // A model threshold of 1 can never be strictly exceeded.
    const VerificationVerdict v1 = verify(dec, imgs, wm, 0.9, 1.0);
    CHECK_FALSE(v1.theft);

    CHECK_THROWS_AS(verify(dec, imgs, wm, -0.1, 0.5), NumericalDomainError);
    CHECK_THROWS_AS(verify(dec, imgs, wm, 0.9, 1.5), NumericalDomainError);

    const nlohmann::json j = v0.to_json();
    CHECK(j.at("verdict") == "NO_THEFT");
    CHECK(j.at("n_images") == 10);
    CHECK(j.at("per_image").size() == 10);
  }

  TEST_CASE("residual visualization amplifies the embedding difference") {
    Tensor cover(1, 1, 16, 16, 0.5);
    Tensor marked = cover;
    marked(0, 0, 3, 3) = 0.52;
    const Tensor vis = residual_visualization(cover, marked, 20.0);
    CHECK(vis(0, 0, 3, 3) == doctest::Approx(0.4).epsilon(1e-9));
    CHECK(vis(0, 0, 0, 0) == 0.0);
    const Tensor sat = residual_visualization(cover, marked, 100.0);
    CHECK(sat(0, 0, 3, 3) == 1.0);
    CHECK_THROWS_AS(residual_visualization(cover, marked, 0.0), NumericalDomainError);
  }
}
