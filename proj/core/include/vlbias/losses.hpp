#pragma once

// Training objectives.
//
//   L_ba       mean KL between the text-bias and image-bias pseudo
//              distributions over the frozen queues.
//   L_cd^t     cross-entropy between the frozen text-to-image similarity row
//              of the original text and the row of the debiased alternated
//              text (original or counterfactual, Bernoulli(1/2) per sample).
//   L_cd^v     the image-side analogue; images have no counterfactuals.
//   L          alpha * (L_cd^t + L_cd^v)/2 + (1 - alpha) * L_ba.
//
// Target similarity rows are constants: no gradient flows through the frozen
// branch. Gradients w.r.t. the net parameters accumulate into BAParams.

#include <cstdint>
#include <vector>

#include "vlbias/bias_align.hpp"
#include "vlbias/similarity.hpp"
#include "vlbias/vec.hpp"

namespace vlbias {

struct LossWeights {
  double alpha = 0.5;  // ConfigError outside [0, 1] where validated
};

/// -sum target_i * log_probs_i
double soft_cross_entropy(const Vec& target_probs, const Vec& log_probs);

/// Frozen batch inputs for one optimization step. beta[i] == 1 selects the
/// original text, 0 its counterfactual.
struct LossBatch {
  std::vector<Vec> text;     // f(t_i), frozen
  std::vector<Vec> image;    // g(v_i), frozen
  std::vector<Vec> text_cf;  // f(t_i'), frozen
  std::vector<std::uint8_t> beta;
};

struct BiasPairGrads {
  std::vector<Vec> text, image;
};

/// (1/N) sum KL(p(t_i) || p(v_i)) over bias embeddings, plus (optionally)
/// gradients w.r.t. each bias embedding. QueueNotWarmError unless both
/// queues are full.
double loss_ba(const std::vector<Vec>& text_bias, const std::vector<Vec>& image_bias,
               const EmbeddingQueue& queue_text, const EmbeddingQueue& queue_image,
               const SimilarityConfig& cfg, BiasPairGrads* grads = nullptr);

// Batch-level losses that run the net themselves and accumulate
// grad_scale * dL/dtheta into params. grad_scale == 0 skips the backward pass.
double batch_loss_ba(const LossBatch& batch, BAParams& params,
                     const EmbeddingQueue& queue_text, const EmbeddingQueue& queue_image,
                     const SimilarityConfig& cfg, double grad_scale);
double batch_loss_cd_text(const LossBatch& batch, BAParams& params,
                          const EmbeddingQueue& queue_image, const SimilarityConfig& cfg,
                          double grad_scale);
double batch_loss_cd_image(const LossBatch& batch, BAParams& params,
                           const EmbeddingQueue& queue_text, const SimilarityConfig& cfg,
                           double grad_scale);

double loss_total(double l_cd, double l_ba, const LossWeights& weights);

struct LossTerms {
  double l_ba = 0.0;
  double l_cd_text = 0.0;
  double l_cd_image = 0.0;
  double l_cd() const { return 0.5 * (l_cd_text + l_cd_image); }
  double total(const LossWeights& w) const { return loss_total(l_cd(), l_ba, w); }
};

/// Evaluates all three losses; when with_grads is set, accumulates the
/// gradient of the combined loss into params.
LossTerms evaluate_losses(const LossBatch& batch, BAParams& params,
                          const EmbeddingQueue& queue_text, const EmbeddingQueue& queue_image,
                          const SimilarityConfig& cfg, const LossWeights& weights,
                          bool with_grads);

}  // namespace vlbias
