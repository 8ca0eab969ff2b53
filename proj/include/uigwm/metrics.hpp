#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

#include "uigwm/tensor.hpp"

namespace uigwm {

struct MetricReport {
  double psnr_db = 0.0;  // +inf when images are identical
  double ssim = 0.0;
};

struct ExtractionOutcome {
  double ssim_vs_delta1 = 0.0;
  bool success = false;  // ssim_vs_delta1 strictly above the threshold
};

// Peak signal-to-noise ratio for [0,1] images: 10*log10(1/MSE).
// Identical inputs return +infinity.
double psnr(const Tensor& a, const Tensor& b);

// Mean local SSIM, Gaussian window 11x11 sigma 1.5, K1=0.01, K2=0.03, L=1.
// Windows are taken fully inside the image (valid mode) and channels are
// averaged. This exact variant is part of the verification contract: the
// per-image success rule below is sensitive to it.
double ssim(const Tensor& a, const Tensor& b);

// Per-image success rule: SSIM against the true watermark strictly above
// `threshold` (default 0.9).
ExtractionOutcome extraction_success(const Tensor& extracted, const Tensor& delta1,
                                     double threshold = 0.9);

// Fraction of successful extractions.
double extraction_rate(std::span<const ExtractionOutcome> outcomes);

// Extraction rate measured on images from sources that never saw watermarked
// data. The caller is responsible for the provenance of the inputs.
double false_positive_rate(std::span<const ExtractionOutcome> outcomes_on_clean);

// JSON encoding for possibly-infinite metric values: +inf maps to the string
// "inf" (plain JSON numbers cannot carry it), everything else to a number.
nlohmann::json metric_to_json(double value);
double metric_from_json(const nlohmann::json& j);

}  // namespace uigwm
