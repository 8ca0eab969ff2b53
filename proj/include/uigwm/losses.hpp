#pragma once

#include "uigwm/tensor.hpp"

// Training objectives for the embedding/extraction stage and the verifier
// fine-tuning stage. All MSE terms average over every element of the batch.
namespace uigwm {

struct LossWeights {
  double lambda1 = 1.0;  // weight of the imperceptibility term
  double lambda2 = 1.0;  // weight of the adversarial term
};

// Imperceptibility: MSE between cover images and their watermarked versions.
double loss_embed(const Tensor& a, const Tensor& a_prime);

// Adversarial value as seen by the steganalysis discriminator:
//   mean log D(a) + mean log(1 - D(a'))
// Inputs are discriminator outputs, shape (n,1,1,1), strictly inside (0,1).
double loss_sadv(const Tensor& d_a, const Tensor& d_a_prime);

// Extraction: decoded clean images should match the blank mark, decoded
// watermarked images the real mark. Marks are single images (1,c,h,w).
double loss_ext(const Tensor& r_a, const Tensor& r_a_prime, const Tensor& delta0,
                const Tensor& delta1);

// Combined stage-one objective: lambda1*l_embed + lambda2*l_sadv + l_ext.
// Throws NumericalDomainError when any term is non-finite.
double loss_total_stage1(double l_embed, double l_sadv, double l_ext,
                         const LossWeights& weights = {});

// Fine-tuning, watermark side: both watermarked outputs and the suspicious
// model's outputs should decode to the real mark.
double loss_finetune_watermark(const Tensor& r_a_prime, const Tensor& r_b,
                               const Tensor& delta1);

// Fine-tuning, blank side: originals and unrelated models' outputs should
// decode to the blank mark.
double loss_finetune_blank(const Tensor& r_a, const Tensor& r_x, const Tensor& delta0);

// Gradients consumed by the training loops. The discriminator gradients come
// in two halves so each forward pass can be backpropagated immediately.

// Descent gradients of -loss_sadv for the discriminator update.
Tensor sadv_disc_grad_real(const Tensor& d_a);
Tensor sadv_disc_grad_fake(const Tensor& d_a_prime);

// Non-saturating encoder objective mean(-log D(a')) and its gradient.
double sadv_gen_value(const Tensor& d_a_prime);
Tensor sadv_gen_grad(const Tensor& d_a_prime);

}  // namespace uigwm
