#include "uigwm/toydata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "uigwm/error.hpp"
#include "uigwm/imaging.hpp"
#include "uigwm/rng.hpp"

namespace uigwm {

namespace {

constexpr double kLo = 0.04;
constexpr double kHi = 0.96;

void render_toy_image(Tensor& out, int i, Rng& rng) {
  const int h = out.h(), w = out.w(), c = out.c();

  double c0[3], c1[3], cs[3];
  for (int k = 0; k < 3; ++k) c0[k] = rng.uniform(0.10, 0.90);
  for (int k = 0; k < 3; ++k) c1[k] = rng.uniform(0.10, 0.90);
  for (int k = 0; k < 3; ++k) cs[k] = rng.uniform(0.10, 0.90);
  const bool horizontal = rng.uniform() < 0.5;
  const bool disc = rng.uniform() < 0.5;
  const double cx = rng.uniform(0.25, 0.75) * w;
  const double cy = rng.uniform(0.25, 0.75) * h;
  const double radius = rng.uniform(0.12, 0.30) * std::min(h, w);

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double t = horizontal ? static_cast<double>(x) / (w - 1)
                                  : static_cast<double>(y) / (h - 1);
      // Soft-edged shape mask; one pixel of falloff keeps edges learnable.
      double m;
      if (disc) {
        const double d = std::hypot(x - cx, y - cy);
        m = std::clamp(radius - d + 0.5, 0.0, 1.0);
      } else {
        const double dx = radius - std::abs(x - cx);
        const double dy = radius - std::abs(y - cy);
        m = std::clamp(std::min(dx, dy) + 0.5, 0.0, 1.0);
      }
      for (int ch = 0; ch < c; ++ch) {
        const double bg = c0[ch] + (c1[ch] - c0[ch]) * t;
        const double v = bg * (1.0 - m) + cs[ch] * m;
        out(i, ch, y, x) = std::clamp(v, kLo, kHi);
      }
    }
}

}  // namespace

Tensor make_toy_images(int n, int h, int w, std::uint64_t seed) {
  if (n <= 0) throw EmptyInput("make_toy_images: n must be positive");
  if (h < 8 || w < 8) throw Error("make_toy_images: images must be at least 8x8");
  Tensor out(n, 3, h, w);
  const Rng root(seed);
  for (int i = 0; i < n; ++i) {
    Rng rng = root.fork("img" + std::to_string(i));
    render_toy_image(out, i, rng);
  }
  return out;
}

Tensor make_toy_watermark(int h, int w) {
  Tensor wm(1, 3, h, w);
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  const double scale = std::min(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double d = std::hypot(x - cx, y - cy) / scale;
      const double ramp = 0.5 * (static_cast<double>(x) / (w - 1) +
                                 static_cast<double>(y) / (h - 1));
      for (int ch = 0; ch < 3; ++ch) {
        const double rings = std::cos(2.0 * std::numbers::pi * (2.5 * d - 0.2 * ch));
        const double v = 0.5 + 0.32 * rings + 0.12 * (ramp - 0.5) * (ch == 1 ? -1.0 : 1.0);
        wm(0, ch, y, x) = std::clamp(v, 0.05, 0.95);
      }
    }
  return wm;
}

void write_toy_dataset(const std::filesystem::path& dir, const Tensor& images) {
  if (images.empty()) throw EmptyInput("write_toy_dataset: no images");
  std::filesystem::create_directories(dir);
  char name[32];
  for (int i = 0; i < images.n(); ++i) {
    std::snprintf(name, sizeof(name), "img_%05d.png", i);
    save_image_png(dir / name, images, i);
  }
}

}  // namespace uigwm
