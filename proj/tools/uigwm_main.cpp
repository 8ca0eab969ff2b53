#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "uigwm/error.hpp"
#include "uigwm/imaging.hpp"
#include "uigwm/losses.hpp"
#include "uigwm/metrics.hpp"
#include "uigwm/networks.hpp"
#include "uigwm/pipeline.hpp"
#include "uigwm/toydata.hpp"
#include "uigwm/uigmodels.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw uigwm::Error("cannot read " + path.string());
  return json::parse(in);
}

// Shared flags; every subcommand uses the subset it needs.
struct CommonArgs {
  std::string out_dir;
  std::string watermark_path;
  int image_size = 32;
  std::uint64_t seed = 0;
  double dtr = 1.0;
  std::string kind = "TINY_VAE";
  double image_threshold = 0.9;
  double model_threshold = 0.05;
};

void add_common(CLI::App* cmd, CommonArgs& c, bool out_required) {
  cmd->set_config("--config", "", "Read options from an INI/TOML file");
  auto* out = cmd->add_option("--out-dir", c.out_dir, "Directory for outputs");
  if (out_required) out->required();
  cmd->add_option("--seed", c.seed, "RNG seed");
  cmd->add_option("--image-size", c.image_size, "Square image size in pixels")
      ->check(CLI::Range(16, 256));
  cmd->add_option("--watermark", c.watermark_path,
                  "Mark image file (default: built-in procedural mark)");
}

uigwm::WatermarkPair load_mark(const CommonArgs& c) {
  uigwm::Tensor d1 = c.watermark_path.empty()
                         ? uigwm::make_toy_watermark(c.image_size, c.image_size)
                         : uigwm::load_image(c.watermark_path, c.image_size,
                                             c.image_size, 3);
  return uigwm::make_watermark_pair(std::move(d1));
}

int cmd_train_stage1(const CommonArgs& c, const std::string& data_dir,
                     uigwm::Stage1Config cfg, int base_channels, int disc_channels) {
  const uigwm::LabeledDataset ds =
      uigwm::load_dataset(data_dir, c.image_size, c.image_size, 3, uigwm::DomainTag::kA);
  const uigwm::WatermarkPair wm = load_mark(c);

  const uigwm::ImageShape shape{3, c.image_size, c.image_size};
  uigwm::ArchConfig arch;
  arch.base_channels = base_channels;
  uigwm::ArchConfig disc_arch;
  disc_arch.base_channels = disc_channels;
  auto encoder = uigwm::make_encoder(shape, arch, c.seed);
  auto decoder = uigwm::make_decoder(shape, arch, c.seed);
  auto discriminator = uigwm::make_discriminator(shape, disc_arch, c.seed);

  cfg.checkpoint_dir = c.out_dir;
  const uigwm::Stage1Result res =
      uigwm::run_stage1(ds, wm, encoder, decoder, discriminator, cfg, c.seed);

  const fs::path out(c.out_dir);
  uigwm::save_image_png(out / "watermark.png", wm.delta1);
  const int n_prev = std::min(8, ds.images.n());
  const uigwm::Tensor covers = uigwm::slice_batch(ds.images, 0, n_prev);
  const uigwm::Tensor marked = uigwm::quantize8(
      encoder.forward(uigwm::concat_channels(covers, uigwm::repeat_batch(wm.delta1, n_prev))));
  uigwm::save_grid_png(out / "preview_cover.png", covers, 4);
  uigwm::save_grid_png(out / "preview_watermarked.png", marked, 4);
  uigwm::save_grid_png(out / "preview_residual.png",
                       uigwm::residual_visualization(covers, marked), 4);
  uigwm::save_grid_png(out / "preview_extracted.png",
                       uigwm::decode_images(decoder, marked), 4);
  fs::create_directories(out / "preview");
  for (int i = 0; i < std::min(4, n_prev); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "cover_%d.png", i);
    uigwm::save_image_png(out / "preview" / name, covers, i);
    std::snprintf(name, sizeof(name), "watermarked_%d.png", i);
    uigwm::save_image_png(out / "preview" / name, marked, i);
  }

  write_json(out / "stage1.json",
             {{"dataset", {{"dir", data_dir}, {"count", ds.size()}}},
              {"epochs", cfg.epochs},
              {"image_size", c.image_size},
              {"history",
               {{"total", res.history.total},
                {"embed", res.history.embed},
                {"sadv", res.history.sadv},
                {"ext", res.history.ext}}},
              {"holdout_psnr_db", uigwm::metric_to_json(res.holdout_psnr_db)},
              {"holdout_ssim", res.holdout_ssim},
              {"holdout_extract_ssim", res.holdout_extract_ssim},
              {"adversarial", cfg.use_adversarial},
              {"seed", c.seed}});
  std::printf("stage-1 done: holdout PSNR %.2f dB, SSIM %.4f, extract SSIM %.4f\n",
              res.holdout_psnr_db, res.holdout_ssim, res.holdout_extract_ssim);
  return 0;
}

int cmd_release(const CommonArgs& c, const std::string& encoder_path,
                const std::string& data_dir, int count) {
  auto encoder = uigwm::load_checkpoint_as(encoder_path, uigwm::NetRole::kEncoder);
  uigwm::LabeledDataset covers =
      uigwm::load_dataset(data_dir, c.image_size, c.image_size, 3, uigwm::DomainTag::kA);
  if (count > 0 && count < covers.size()) {
    std::vector<int> idx(count);
    for (int i = 0; i < count; ++i) idx[i] = i;
    covers = uigwm::subset(covers, idx);
  }
  const uigwm::WatermarkPair wm = load_mark(c);
  const uigwm::ReleaseResult res =
      uigwm::release_watermarked(encoder, covers, wm, c.out_dir);
  write_json(fs::path(c.out_dir) / "release.json",
             {{"count", res.released.size()},
              {"mean_psnr_db", uigwm::metric_to_json(res.mean_psnr_db)},
              {"mean_ssim", res.mean_ssim},
              {"content_hash", res.released.content_hash()}});
  std::printf("released %d watermarked images: PSNR %.2f dB, SSIM %.4f\n",
              res.released.size(), res.mean_psnr_db, res.mean_ssim);
  return 0;
}

int cmd_train_surrogate(const CommonArgs& c, const std::string& stolen_dir,
                        const std::string& private_dir, int total,
                        uigwm::GenTrainConfig gcfg, int sample_count) {
  const auto kind = uigwm::parse_generator_kind(c.kind);
  const uigwm::LabeledDataset stolen = uigwm::load_dataset(
      stolen_dir, c.image_size, c.image_size, 3, uigwm::DomainTag::kAPrime);
  uigwm::LabeledDataset priv;
  if (!private_dir.empty())
    priv = uigwm::load_dataset(private_dir, c.image_size, c.image_size, 3,
                               uigwm::DomainTag::kA);
  const uigwm::LabeledDataset mix =
      uigwm::mix_by_dtr(stolen, priv, c.dtr, total, c.seed);

  auto gen = uigwm::train_generator(kind, mix, gcfg, c.seed);
  const fs::path out(c.out_dir);
  fs::create_directories(out);
  const std::string ckpt_id = uigwm::save_generator(gen, out / "generator.ckpt");

  if (sample_count > 0) {
    const uigwm::Tensor samples = gen.sample(sample_count, c.seed + 1);
    fs::create_directories(out / "samples");
    char name[32];
    for (int i = 0; i < samples.n(); ++i) {
      std::snprintf(name, sizeof(name), "b_%05d.png", i);
      uigwm::save_image_png(out / "samples" / name, samples, i);
    }
  }

  write_json(out / "surrogate.json", {{"kind", c.kind},
                                      {"dtr", c.dtr},
                                      {"total", total},
                                      {"epochs", gcfg.epochs},
                                      {"epoch_loss", gen.meta().epoch_loss},
                                      {"checkpoint_id", ckpt_id},
                                      {"train_data_hash", mix.content_hash()},
                                      {"samples", sample_count},
                                      {"seed", c.seed}});
  std::printf("trained %s on %d images (dtr=%.2f), wrote %d samples\n", c.kind.c_str(),
              mix.size(), c.dtr, sample_count);
  return 0;
}

int cmd_finetune(const CommonArgs& c, const std::string& decoder_path,
                 const std::string& a_dir, const std::string& ap_dir,
                 const std::string& b_dir, const std::string& x_dir, int per_part,
                 const std::string& fresh_b_dir, const std::string& fresh_clean_dir,
                 uigwm::Stage2Config cfg) {
  auto decoder = uigwm::load_checkpoint_as(decoder_path, uigwm::NetRole::kDecoder);
  const int s = c.image_size;
  const auto a = uigwm::load_dataset(a_dir, s, s, 3, uigwm::DomainTag::kA);
  const auto ap = uigwm::load_dataset(ap_dir, s, s, 3, uigwm::DomainTag::kAPrime);
  const auto b = uigwm::load_dataset(b_dir, s, s, 3, uigwm::DomainTag::kB);
  const auto x = uigwm::load_dataset(x_dir, s, s, 3, uigwm::DomainTag::kX);
  const uigwm::ValidationSet vset =
      uigwm::build_validation_set(a, ap, b, x, per_part, c.seed);
  const uigwm::Tensor fresh_b =
      uigwm::load_dataset(fresh_b_dir, s, s, 3, uigwm::DomainTag::kB).images;
  const uigwm::Tensor fresh_clean =
      uigwm::load_dataset(fresh_clean_dir, s, s, 3, uigwm::DomainTag::kX).images;

  const uigwm::WatermarkPair wm = load_mark(c);
  cfg.image_threshold = c.image_threshold;
  const uigwm::Stage2Result res =
      uigwm::run_stage2(decoder, vset, wm, cfg, fresh_b, fresh_clean, c.seed);

  const fs::path out(c.out_dir);
  fs::create_directories(out);
  uigwm::save_checkpoint(decoder, out / "decoder_tuned.ckpt");
  write_json(out / "stage2.json", {{"epochs_run", res.epochs_run},
                                   {"loss_curve", res.loss_curve},
                                   {"er_before", res.er_before},
                                   {"er_after", res.er_after},
                                   {"fpr_before", res.fpr_before},
                                   {"fpr_after", res.fpr_after},
                                   {"image_threshold", cfg.image_threshold},
                                   {"include_blank_loss", cfg.include_blank_loss},
                                   {"seed", c.seed}});
  std::printf("fine-tuned in %d epochs: ER %.4f -> %.4f, FPR %.4f -> %.4f\n",
              res.epochs_run, res.er_before, res.er_after, res.fpr_before,
              res.fpr_after);
  return 0;
}

int cmd_verify(const CommonArgs& c, const std::string& decoder_path,
               const std::string& suspicious_dir) {
  auto decoder = uigwm::load_checkpoint_as(decoder_path, uigwm::NetRole::kDecoder);
  const uigwm::Tensor suspicious =
      uigwm::load_dataset(suspicious_dir, c.image_size, c.image_size, 3,
                          uigwm::DomainTag::kB)
          .images;
  const uigwm::WatermarkPair wm = load_mark(c);
  const uigwm::VerificationVerdict v =
      uigwm::verify(decoder, suspicious, wm, c.image_threshold, c.model_threshold);

  std::printf("verdict: %s (extraction_rate=%.4f, model_threshold=%.4f, n=%d)\n",
              v.theft ? "THEFT" : "NO_THEFT", v.extraction_rate, v.model_threshold,
              v.n_images);
  if (!c.out_dir.empty()) write_json(fs::path(c.out_dir) / "verdict.json", v.to_json());
  return 0;
}

// The run directory that produced a stage2.json also holds (or sits next to)
// the surrogate.json describing which model was tuned against.
json find_surrogate_meta(const fs::path& stage2_dir) {
  std::vector<fs::path> candidates = {stage2_dir / "surrogate.json",
                                      stage2_dir.parent_path() / "surrogate.json"};
  for (const auto& p : candidates)
    if (fs::exists(p)) return read_json(p);
  std::vector<fs::path> siblings;
  if (fs::exists(stage2_dir.parent_path()))
    for (const auto& e : fs::directory_iterator(stage2_dir.parent_path()))
      if (e.is_directory() && fs::exists(e.path() / "surrogate.json"))
        siblings.push_back(e.path() / "surrogate.json");
  if (siblings.size() == 1) return read_json(siblings.front());
  return json::object();
}

std::string path_label(const fs::path& dir) {
  std::string s = dir.filename().string();
  for (char& ch : s)
    if (!std::isalnum(static_cast<unsigned char>(ch))) ch = '_';
  return s.empty() ? std::string("run") : s;
}

int cmd_report(const std::string& in_dir, const std::string& out_file) {
  std::string md = "# Watermark verification report\n\n";
  const auto metric = [](const json& j, const char* key) {
    return j.contains(key) ? uigwm::metric_from_json(j.at(key)) : 0.0;
  };
  const auto append_file = [&](const fs::path& p) {
    const json j = read_json(p);
    const std::string name = p.filename().string();
    if (name == "stage1.json") {
      md += "## Embedding training\n\n";
      md += "| holdout PSNR (dB) | holdout SSIM | extracted-mark SSIM |\n";
      md += "|---|---|---|\n";
      char row[160];
      std::snprintf(row, sizeof(row), "| %.2f | %.4f | %.4f |\n\n",
                    metric(j, "holdout_psnr_db"), j.value("holdout_ssim", 0.0),
                    j.value("holdout_extract_ssim", 0.0));
      md += row;
    } else if (name == "release.json") {
      md += "## Released images\n\n";
      char row[160];
      std::snprintf(row, sizeof(row),
                    "%d images, mean PSNR %.2f dB, mean SSIM %.4f\n\n",
                    j.value("count", 0), metric(j, "mean_psnr_db"),
                    j.value("mean_ssim", 0.0));
      md += row;
    } else if (name == "surrogate.json") {
      md += "## Surrogate: " + j.value("kind", std::string("?")) + "\n\n";
      char row[160];
      std::snprintf(row, sizeof(row), "dtr=%.2f, %d training images\n\n",
                    j.value("dtr", 0.0), j.value("total", 0));
      md += row;
    } else if (name == "stage2.json") {
      md += "## Verifier fine-tuning\n\n";
      char row[200];
      std::snprintf(row, sizeof(row),
                    "ER %.4f -> %.4f, FPR %.4f -> %.4f (%d epochs)\n\n",
                    j.value("er_before", 0.0), j.value("er_after", 0.0),
                    j.value("fpr_before", 0.0), j.value("fpr_after", 0.0),
                    j.value("epochs_run", 0));
      md += row;
    } else if (name == "verdict.json") {
      md += "## Verdict: " + j.value("verdict", std::string("?")) + "\n\n";
      char row[160];
      std::snprintf(row, sizeof(row), "extraction_rate %.4f vs threshold %.4f on %d images\n\n",
                    j.value("extraction_rate", 0.0), j.value("model_threshold", 0.0),
                    j.value("n_images", 0));
      md += row;
    }
  };

  std::vector<fs::path> found;
  for (const auto& entry : fs::recursive_directory_iterator(in_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name == "stage1.json" || name == "release.json" || name == "surrogate.json" ||
        name == "stage2.json" || name == "verdict.json")
      found.push_back(entry.path());
  }
  std::sort(found.begin(), found.end());
  for (const auto& p : found) append_file(p);
  if (found.empty()) md += "No result files found under " + in_dir + ".\n";

  // Aggregated exports live next to the markdown file.
  std::vector<std::string> exported;
  if (!out_file.empty()) {
    const fs::path export_dir = fs::path(out_file).parent_path();
    fs::create_directories(export_dir);

    struct TunedRun {
      std::string kind;
      double dtr = 0.0;
      bool has_meta = false;
      json stage2;
    };
    std::vector<TunedRun> runs;
    for (const auto& p : found) {
      if (p.filename() != "stage2.json") continue;
      TunedRun r;
      r.stage2 = read_json(p);
      const json meta = find_surrogate_meta(p.parent_path());
      if (meta.contains("kind")) {
        r.kind = meta.value("kind", std::string("?"));
        r.dtr = meta.value("dtr", 0.0);
        r.has_meta = true;
      }
      runs.push_back(std::move(r));
    }
    std::stable_sort(runs.begin(), runs.end(), [](const TunedRun& a, const TunedRun& b) {
      return a.kind != b.kind ? a.kind < b.kind : a.dtr > b.dtr;
    });

    const auto write_csv = [&](const std::string& name, const std::string& header,
                               auto&& row_fn) {
      std::ofstream csv(export_dir / name);
      csv << header << "\n";
      int rows = 0;
      for (const auto& r : runs) rows += row_fn(csv, r) ? 1 : 0;
      if (rows > 0) exported.push_back(name);
    };
    char row[200];
    write_csv("er_vs_dtr.csv", "kind,dtr,er_after", [&](std::ofstream& csv, const TunedRun& r) {
      if (!r.has_meta || !r.stage2.value("include_blank_loss", true)) return false;
      std::snprintf(row, sizeof(row), "%s,%.2f,%.4f\n", r.kind.c_str(), r.dtr,
                    r.stage2.value("er_after", 0.0));
      csv << row;
      return true;
    });
    write_csv("stage1_vs_stage2_er.csv", "kind,dtr,er_before,er_after",
              [&](std::ofstream& csv, const TunedRun& r) {
                if (!r.has_meta || !r.stage2.value("include_blank_loss", true)) return false;
                std::snprintf(row, sizeof(row), "%s,%.2f,%.4f,%.4f\n", r.kind.c_str(), r.dtr,
                              r.stage2.value("er_before", 0.0), r.stage2.value("er_after", 0.0));
                csv << row;
                return true;
              });
    write_csv("fpr_ablation.csv", "kind,dtr,include_blank_loss,fpr_before,fpr_after",
              [&](std::ofstream& csv, const TunedRun& r) {
                std::snprintf(row, sizeof(row), "%s,%.2f,%d,%.4f,%.4f\n",
                              r.has_meta ? r.kind.c_str() : "?", r.dtr,
                              r.stage2.value("include_blank_loss", true) ? 1 : 0,
                              r.stage2.value("fpr_before", 0.0),
                              r.stage2.value("fpr_after", 0.0));
                csv << row;
                return true;
              });

    // Amplified embedding residuals, one PNG per training run.
    for (const auto& p : found) {
      if (p.filename() != "stage1.json") continue;
      const json j = read_json(p);
      const int size = j.value("image_size", 0);
      const fs::path pair_dir = p.parent_path() / "preview";
      if (size <= 0 || !fs::exists(pair_dir / "cover_0.png")) continue;
      std::vector<uigwm::Tensor> res;
      for (int i = 0; i < 4; ++i) {
        const fs::path cp = pair_dir / ("cover_" + std::to_string(i) + ".png");
        const fs::path wp = pair_dir / ("watermarked_" + std::to_string(i) + ".png");
        if (!fs::exists(cp) || !fs::exists(wp)) break;
        res.push_back(uigwm::residual_visualization(uigwm::load_image(cp, size, size, 3),
                                                    uigwm::load_image(wp, size, size, 3)));
      }
      if (res.empty()) continue;
      uigwm::Tensor grid = res.front();
      for (std::size_t i = 1; i < res.size(); ++i)
        grid = uigwm::concat_batch(grid, res[i]);
      const std::string name = "residual_" + path_label(p.parent_path()) + ".png";
      uigwm::save_grid_png(export_dir / name, grid, static_cast<int>(res.size()));
      exported.push_back(name);
    }

    if (!exported.empty()) {
      md += "## Exports\n\n";
      for (const auto& name : exported) md += "- " + name + "\n";
      md += "\n";
    }
  }

  if (out_file.empty()) {
    std::fputs(md.c_str(), stdout);
  } else {
    std::ofstream out(out_file);
    out << md;
    std::printf("wrote %s\n", out_file.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uigwm: image watermarking and model-theft verification"};
  app.require_subcommand(1);

  CommonArgs c;
  std::function<int()> run;

  // train-stage1
  {
    auto* cmd = app.add_subcommand(
        "train-stage1", "Train the embedding encoder, extraction decoder and "
                        "steganalysis discriminator on original images");
    static std::string data_dir;
    static uigwm::Stage1Config cfg;
    static int base_channels = 16, disc_channels = 8;
    add_common(cmd, c, true);
    cmd->add_option("--data-dir", data_dir, "Directory of original images")->required();
    cmd->add_option("--epochs", cfg.epochs, "Training epochs");
    cmd->add_option("--batch-size", cfg.batch_size, "Batch size");
    cmd->add_option("--lr", cfg.lr, "Adam learning rate");
    cmd->add_option("--lambda1", cfg.weights.lambda1, "Imperceptibility weight");
    cmd->add_option("--lambda2", cfg.weights.lambda2, "Adversarial weight");
    cmd->add_flag_callback("--no-adversarial",
                           [] { cfg.use_adversarial = false; },
                           "Train without the steganalysis term");
    cmd->add_option("--quality-floor", cfg.quality_floor_db,
                    "Minimum held-out PSNR in dB (<= 0 disables)");
    cmd->add_option("--holdout", cfg.holdout_count, "Held-out cover count");
    cmd->add_option("--base-channels", base_channels, "Encoder/decoder width");
    cmd->add_option("--disc-channels", disc_channels, "Discriminator width");
    cmd->callback([&] {
      run = [&] { return cmd_train_stage1(c, data_dir, cfg, base_channels, disc_channels); };
    });
  }

  // release
  {
    auto* cmd = app.add_subcommand(
        "release", "Embed the mark into covers and write 8-bit PNGs plus manifest");
    static std::string encoder_path, data_dir;
    static int count = 0;
    add_common(cmd, c, true);
    cmd->add_option("--encoder", encoder_path, "Encoder checkpoint")->required();
    cmd->add_option("--data-dir", data_dir, "Directory of cover images")->required();
    cmd->add_option("--count", count, "Release only the first N covers (0 = all)");
    cmd->callback([&] { run = [&] { return cmd_release(c, encoder_path, data_dir, count); }; });
  }

  // train-surrogate
  {
    auto* cmd = app.add_subcommand(
        "train-surrogate",
        "Train a generator on a stolen/private mix and sample from it");
    static std::string stolen_dir, private_dir;
    static int total = 1000, sample_count = 200;
    static uigwm::GenTrainConfig gcfg;
    add_common(cmd, c, true);
    cmd->add_option("--stolen-dir", stolen_dir, "Directory of released (stolen) images")
        ->required();
    cmd->add_option("--private-dir", private_dir,
                    "Directory of the stealer's clean images (required when dtr < 1)");
    cmd->add_option("--dtr", c.dtr, "Fraction of training data that is stolen")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--total", total, "Total training images after mixing")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--kind", c.kind,
                    "Generator kind: TINY_VAE, TINY_GAN, TINY_DDPM, TINY_DDPM_FAST");
    cmd->add_option("--epochs", gcfg.epochs, "Training epochs");
    cmd->add_option("--batch-size", gcfg.batch_size, "Batch size");
    cmd->add_option("--lr", gcfg.lr, "Adam learning rate");
    cmd->add_option("--base-channels", gcfg.base_channels, "Generator width");
    cmd->add_option("--timesteps", gcfg.timesteps, "Denoising chain length");
    cmd->add_option("--sample-stride", gcfg.sample_stride,
                    "Step stride for TINY_DDPM_FAST sampling");
    cmd->add_option("--sample-count", sample_count, "Samples to write after training");
    cmd->callback([&] {
      run = [&] {
        return cmd_train_surrogate(c, stolen_dir, private_dir, total, gcfg, sample_count);
      };
    });
  }

  // finetune
  {
    auto* cmd = app.add_subcommand(
        "finetune", "Fine-tune the decoder on the four-part validation set");
    static std::string decoder_path, a_dir, ap_dir, b_dir, x_dir;
    static std::string fresh_b_dir, fresh_clean_dir;
    static int per_part = 100;
    static uigwm::Stage2Config cfg;
    add_common(cmd, c, true);
    cmd->add_option("--decoder", decoder_path, "Decoder checkpoint")->required();
    cmd->add_option("--a-dir", a_dir, "Original images (part A)")->required();
    cmd->add_option("--ap-dir", ap_dir, "Watermarked images (part A')")->required();
    cmd->add_option("--b-dir", b_dir, "Suspicious-model outputs (part B)")->required();
    cmd->add_option("--x-dir", x_dir, "Unrelated-model outputs (part X)")->required();
    cmd->add_option("--per-part", per_part, "Images used from each part")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--fresh-b-dir", fresh_b_dir,
                    "Fresh suspicious outputs for evaluation")->required();
    cmd->add_option("--fresh-clean-dir", fresh_clean_dir,
                    "Fresh clean images for evaluation")->required();
    cmd->add_option("--epochs-max", cfg.epochs_max, "Epoch cap");
    cmd->add_option("--batch-size", cfg.batch_size, "Batch size");
    cmd->add_option("--lr", cfg.lr, "Adam learning rate");
    cmd->add_option("--image-threshold", c.image_threshold,
                    "Per-image extraction SSIM threshold")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_flag_callback("--no-blank-loss",
                           [] { cfg.include_blank_loss = false; },
                           "Drop the blank-side objective");
    cmd->callback([&] {
      run = [&] {
        return cmd_finetune(c, decoder_path, a_dir, ap_dir, b_dir, x_dir, per_part,
                            fresh_b_dir, fresh_clean_dir, cfg);
      };
    });
  }

  // verify
  {
    auto* cmd = app.add_subcommand(
        "verify", "Judge whether a suspicious model's outputs carry the mark");
    static std::string decoder_path, suspicious_dir;
    add_common(cmd, c, false);
    cmd->add_option("--decoder", decoder_path, "Fine-tuned decoder checkpoint")
        ->required();
    cmd->add_option("--suspicious-dir", suspicious_dir,
                    "Directory of suspicious-model outputs")->required();
    cmd->add_option("--image-threshold", c.image_threshold,
                    "Per-image extraction SSIM threshold")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--model-threshold", c.model_threshold,
                    "Extraction-rate threshold for the THEFT verdict")
        ->check(CLI::Range(0.0, 1.0));
    cmd->callback([&] { run = [&] { return cmd_verify(c, decoder_path, suspicious_dir); }; });
  }

  // report
  {
    auto* cmd = app.add_subcommand(
        "report", "Summarize result JSON files from a workspace directory");
    static std::string in_dir, out_file;
    cmd->add_option("--in-dir", in_dir, "Workspace to scan")->required();
    cmd->add_option("--out", out_file, "Markdown output file (default: stdout)");
    cmd->callback([&] { run = [&] { return cmd_report(in_dir, out_file); }; });
  }

  CLI11_PARSE(app, argc, argv);
  try {
    return run ? run() : 1;
  } catch (const uigwm::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
