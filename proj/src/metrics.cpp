#include "uigwm/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>

namespace uigwm {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;
constexpr double kL = 1.0;

std::array<double, kWindow> gaussian_kernel() {
  std::array<double, kWindow> k{};
  const int half = kWindow / 2;
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - half;
    k[i] = std::exp(-(d * d) / (2.0 * kSigma * kSigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable valid-mode Gaussian filter of one channel plane.
// in: h*w, out: (h-10)*(w-10).
void gauss_valid(const double* in, int h, int w, const std::array<double, kWindow>& k,
                 std::vector<double>& tmp, std::vector<double>& out) {
  const int ow = w - kWindow + 1;
  const int oh = h - kWindow + 1;
  tmp.assign(static_cast<std::size_t>(h) * ow, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int t = 0; t < kWindow; ++t) s += k[t] * in[y * w + x + t];
      tmp[y * ow + x] = s;
    }
  out.assign(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int t = 0; t < kWindow; ++t) s += k[t] * tmp[(y + t) * ow + x];
      out[y * ow + x] = s;
    }
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "psnr");
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

double ssim(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "ssim");
  if (a.h() < kWindow || a.w() < kWindow) throw ImageTooSmall(a.h(), a.w(), kWindow);

  static const std::array<double, kWindow> kernel = gaussian_kernel();
  const double c1 = (kK1 * kL) * (kK1 * kL);
  const double c2 = (kK2 * kL) * (kK2 * kL);

  const int h = a.h(), w = a.w();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> xx(plane), yy(plane), xy(plane);
  std::vector<double> tmp, mu_x, mu_y, m_xx, m_yy, m_xy;

  double total = 0.0;
  std::size_t count = 0;
  for (int i = 0; i < a.n(); ++i)
    for (int ch = 0; ch < a.c(); ++ch) {
      const double* px = a.data() + (static_cast<std::size_t>(i) * a.c() + ch) * plane;
      const double* py = b.data() + (static_cast<std::size_t>(i) * b.c() + ch) * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        xx[j] = px[j] * px[j];
        yy[j] = py[j] * py[j];
        xy[j] = px[j] * py[j];
      }
      gauss_valid(px, h, w, kernel, tmp, mu_x);
      gauss_valid(py, h, w, kernel, tmp, mu_y);
      gauss_valid(xx.data(), h, w, kernel, tmp, m_xx);
      gauss_valid(yy.data(), h, w, kernel, tmp, m_yy);
      gauss_valid(xy.data(), h, w, kernel, tmp, m_xy);
      for (std::size_t j = 0; j < mu_x.size(); ++j) {
        const double mx = mu_x[j], my = mu_y[j];
        const double vx = m_xx[j] - mx * mx;
        const double vy = m_yy[j] - my * my;
        const double cov = m_xy[j] - mx * my;
        const double v = ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
                         ((mx * mx + my * my + c1) * (vx + vy + c2));
        total += v;
      }
      count += mu_x.size();
    }
  return total / static_cast<double>(count);
}

ExtractionOutcome extraction_success(const Tensor& extracted, const Tensor& delta1,
                                     double threshold) {
  require_same_shape(extracted, delta1, "extraction_success");
  ExtractionOutcome out;
  out.ssim_vs_delta1 = ssim(extracted, delta1);
  out.success = out.ssim_vs_delta1 > threshold;
  return out;
}

double extraction_rate(std::span<const ExtractionOutcome> outcomes) {
  if (outcomes.empty()) throw EmptyInput("extraction_rate: no outcomes");
  std::size_t ok = 0;
  for (const auto& o : outcomes) ok += o.success ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(outcomes.size());
}

double false_positive_rate(std::span<const ExtractionOutcome> outcomes_on_clean) {
  if (outcomes_on_clean.empty()) throw EmptyInput("false_positive_rate: no outcomes");
  return extraction_rate(outcomes_on_clean);
}

nlohmann::json metric_to_json(double value) {
  if (std::isinf(value) && value > 0.0) return "inf";
  return value;
}

double metric_from_json(const nlohmann::json& j) {
  if (j.is_string() && j.get<std::string>() == "inf")
    return std::numeric_limits<double>::infinity();
  return j.get<double>();
}

}  // namespace uigwm
