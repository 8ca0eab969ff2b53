#pragma once

#include <cstdint>
#include <filesystem>

#include "uigwm/tensor.hpp"

namespace uigwm {

// Synthetic image distribution for tests and the demo pipeline: a smooth
// two-color gradient background with one solid shape (disc or square) on
// top. Low intrinsic dimension, so the tiny generators can model it on CPU.
// Pixel values stay inside [0.04, 0.96]; image i depends only on (seed, i).
Tensor make_toy_images(int n, int h, int w, std::uint64_t seed);

// Procedural low-frequency mark (rings plus a diagonal ramp) used as the
// owner's secret image. Smooth enough to survive generative re-synthesis.
Tensor make_toy_watermark(int h, int w);

// Writes images as zero-padded PNGs (img_00000.png, ...) under dir.
void write_toy_dataset(const std::filesystem::path& dir, const Tensor& images);

}  // namespace uigwm
