#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "uigwm/error.hpp"
#include "uigwm/imaging.hpp"
#include "uigwm/toydata.hpp"

// Materializes the synthetic dataset (and optionally the procedural mark) as
// PNG files so the main CLI can run on plain image directories.
int main(int argc, char** argv) {
  CLI::App app{"uigwm-toydata: write a synthetic image dataset to disk"};
  std::string out_dir;
  int count = 1000;
  int size = 32;
  std::uint64_t seed = 0;
  std::string watermark_path;
  app.add_option("--out-dir", out_dir, "Directory for the PNG files")->required();
  app.add_option("--count", count, "Number of images")->check(CLI::PositiveNumber);
  app.add_option("--image-size", size, "Square image size in pixels")
      ->check(CLI::Range(16, 256));
  app.add_option("--seed", seed, "RNG seed");
  app.add_option("--watermark-out", watermark_path,
                 "Also write the procedural mark image to this path");
  CLI11_PARSE(app, argc, argv);

  try {
    const uigwm::Tensor images = uigwm::make_toy_images(count, size, size, seed);
    uigwm::write_toy_dataset(out_dir, images);
    std::printf("wrote %d images (%dx%d) to %s\n", count, size, size, out_dir.c_str());
    if (!watermark_path.empty()) {
      uigwm::save_image_png(watermark_path, uigwm::make_toy_watermark(size, size));
      std::printf("wrote mark image to %s\n", watermark_path.c_str());
    }
  } catch (const uigwm::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
