#include "uigwm/losses.hpp"

#include <cmath>

#include "uigwm/error.hpp"

namespace uigwm {

namespace {

void require_probabilities(const Tensor& d, const char* where) {
  if (d.empty()) throw EmptyInput(std::string(where) + ": empty discriminator output");
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double v = d.data()[i];
    if (!(v > 0.0 && v < 1.0))
      throw NumericalDomainError(std::string(where) +
                                 ": discriminator output outside (0,1): " + std::to_string(v));
  }
}

}  // namespace

double loss_embed(const Tensor& a, const Tensor& a_prime) { return mse(a, a_prime); }

double loss_sadv(const Tensor& d_a, const Tensor& d_a_prime) {
  require_probabilities(d_a, "loss_sadv");
  require_probabilities(d_a_prime, "loss_sadv");
  double sum_real = 0.0;
  for (std::size_t i = 0; i < d_a.size(); ++i) sum_real += std::log(d_a.data()[i]);
  double sum_fake = 0.0;
  for (std::size_t i = 0; i < d_a_prime.size(); ++i)
    sum_fake += std::log(1.0 - d_a_prime.data()[i]);
  return sum_real / static_cast<double>(d_a.size()) +
         sum_fake / static_cast<double>(d_a_prime.size());
}

double loss_ext(const Tensor& r_a, const Tensor& r_a_prime, const Tensor& delta0,
                const Tensor& delta1) {
  return mse_vs_single(r_a, delta0) + mse_vs_single(r_a_prime, delta1);
}

double loss_total_stage1(double l_embed, double l_sadv, double l_ext,
                         const LossWeights& weights) {
  const double total = weights.lambda1 * l_embed + weights.lambda2 * l_sadv + l_ext;
  if (!std::isfinite(l_embed) || !std::isfinite(l_sadv) || !std::isfinite(l_ext) ||
      !std::isfinite(total))
    throw NumericalDomainError("non-finite stage-one loss");
  return total;
}

double loss_finetune_watermark(const Tensor& r_a_prime, const Tensor& r_b,
                               const Tensor& delta1) {
  return mse_vs_single(r_a_prime, delta1) + mse_vs_single(r_b, delta1);
}

double loss_finetune_blank(const Tensor& r_a, const Tensor& r_x, const Tensor& delta0) {
  return mse_vs_single(r_a, delta0) + mse_vs_single(r_x, delta0);
}

Tensor sadv_disc_grad_real(const Tensor& d_a) {
  require_probabilities(d_a, "sadv_disc_grad_real");
  Tensor g = Tensor::zeros_like(d_a);
  const double n = static_cast<double>(d_a.size());
  for (std::size_t i = 0; i < d_a.size(); ++i) g.data()[i] = -1.0 / (n * d_a.data()[i]);
  return g;
}

Tensor sadv_disc_grad_fake(const Tensor& d_a_prime) {
  require_probabilities(d_a_prime, "sadv_disc_grad_fake");
  Tensor g = Tensor::zeros_like(d_a_prime);
  const double n = static_cast<double>(d_a_prime.size());
  for (std::size_t i = 0; i < d_a_prime.size(); ++i)
    g.data()[i] = 1.0 / (n * (1.0 - d_a_prime.data()[i]));
  return g;
}

double sadv_gen_value(const Tensor& d_a_prime) {
  require_probabilities(d_a_prime, "sadv_gen_value");
  double sum = 0.0;
  for (std::size_t i = 0; i < d_a_prime.size(); ++i) sum -= std::log(d_a_prime.data()[i]);
  return sum / static_cast<double>(d_a_prime.size());
}

Tensor sadv_gen_grad(const Tensor& d_a_prime) {
  require_probabilities(d_a_prime, "sadv_gen_grad");
  Tensor g = Tensor::zeros_like(d_a_prime);
  const double n = static_cast<double>(d_a_prime.size());
  for (std::size_t i = 0; i < d_a_prime.size(); ++i)
    g.data()[i] = -1.0 / (n * d_a_prime.data()[i]);
  return g;
}

}  // namespace uigwm
