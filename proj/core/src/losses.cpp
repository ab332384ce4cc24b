#include "vlbias/losses.hpp"

#include <cmath>
#include <string>

#include "vlbias/errors.hpp"

namespace vlbias {

double soft_cross_entropy(const Vec& target_probs, const Vec& log_probs) {
  if (target_probs.size() != log_probs.size())
    throw DimError("soft_cross_entropy: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < target_probs.size(); ++i)
    s -= target_probs[i] * log_probs[i];
  return s;
}

namespace {

void require_full(const EmbeddingQueue& q, const char* name) {
  if (!q.full())
    throw QueueNotWarmError(std::string(name) + " holds " + std::to_string(q.size()) +
                            " of " + std::to_string(q.capacity()) + " entries");
}

// sum_m coeff_m * queue_m / temperature, i.e. the pullback of per-logit
// gradients onto the embedding that produced the logits
Vec logits_grad_to_embedding(const Vec& coeff, const EmbeddingQueue& queue, double tau) {
  Vec out(queue.vector_at(0).size(), 0.0);
  for (std::size_t m = 0; m < coeff.size(); ++m) {
    if (coeff[m] == 0.0) continue;
    axpy(coeff[m] / tau, queue.vector_at(m), out);
  }
  return out;
}

}  // namespace

double loss_ba(const std::vector<Vec>& text_bias, const std::vector<Vec>& image_bias,
               const EmbeddingQueue& queue_text, const EmbeddingQueue& queue_image,
               const SimilarityConfig& cfg, BiasPairGrads* grads) {
  if (text_bias.size() != image_bias.size())
    throw DimError("loss_ba: batch sizes differ");
  if (text_bias.empty()) throw DomainError("loss_ba: empty batch");
  require_full(queue_text, "text queue");
  require_full(queue_image, "image queue");

  const std::size_t n = text_bias.size();
  const double tau = cfg.temperature;
  if (grads) {
    grads->text.assign(n, Vec());
    grads->image.assign(n, Vec());
  }

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec la = queue_logits(text_bias[i], queue_text, tau);
    const Vec lb = queue_logits(image_bias[i], queue_image, tau);
    const Vec p = softmax(la);
    const Vec q = softmax(lb);
    const Vec logp = log_softmax(la);
    const Vec logq = log_softmax(lb);

    double kl = 0.0;
    for (std::size_t m = 0; m < p.size(); ++m) kl += p[m] * (logp[m] - logq[m]);
    total += kl;

    if (grads) {
      const std::size_t cap = p.size();
      Vec da(cap), db(cap);
      for (std::size_t m = 0; m < cap; ++m) {
        da[m] = p[m] * ((logp[m] - logq[m]) - kl) / static_cast<double>(n);
        db[m] = (q[m] - p[m]) / static_cast<double>(n);
      }
      grads->text[i] = logits_grad_to_embedding(da, queue_text, tau);
      grads->image[i] = logits_grad_to_embedding(db, queue_image, tau);
    }
  }
  return total / static_cast<double>(n);
}

double batch_loss_ba(const LossBatch& batch, BAParams& params,
                     const EmbeddingQueue& queue_text, const EmbeddingQueue& queue_image,
                     const SimilarityConfig& cfg, double grad_scale) {
  if (batch.text.size() != batch.image.size())
    throw DimError("batch_loss_ba: text/image batch sizes differ");

  const std::size_t n = batch.text.size();
  std::vector<BAForwardCache> caches_t(n), caches_v(n);
  std::vector<Vec> text_bias(n), image_bias(n);
  for (std::size_t i = 0; i < n; ++i) {
    text_bias[i] = ba_forward(batch.text[i], params, caches_t[i]);
    image_bias[i] = ba_forward(batch.image[i], params, caches_v[i]);
  }

  BiasPairGrads grads;
  const double value = loss_ba(text_bias, image_bias, queue_text, queue_image, cfg,
                               grad_scale != 0.0 ? &grads : nullptr);
  if (grad_scale != 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      Vec up_t = grads.text[i];
      Vec up_v = grads.image[i];
      for (double& v : up_t) v *= grad_scale;
      for (double& v : up_v) v *= grad_scale;
      ba_backward(batch.text[i], caches_t[i], up_t, params);
      ba_backward(batch.image[i], caches_v[i], up_v, params);
    }
  }
  return value;
}

namespace {

// shared core of the two counterfactual-debiasing losses: cross-entropy of a
// frozen target row against the row produced by the debiased embedding
double debias_cross_entropy(const Vec& frozen_target_source, const Vec& debias_input,
                            BAParams& params, const EmbeddingQueue& queue,
                            const SimilarityConfig& cfg, double per_sample_scale) {
  const double tau = cfg.temperature;

  const Vec target = softmax(queue_logits(frozen_target_source, queue, tau));

  BAForwardCache cache;
  const Vec bias = ba_forward(debias_input, params, cache);
  Vec debiased(debias_input.size());
  for (std::size_t c = 0; c < debiased.size(); ++c)
    debiased[c] = debias_input[c] - bias[c];

  const Vec logits = queue_logits(debiased, queue, tau);
  const Vec logprobs = log_softmax(logits);
  const double ce = soft_cross_entropy(target, logprobs);

  if (per_sample_scale != 0.0) {
    const Vec probs = softmax(logits);
    Vec dlogits(probs.size());
    for (std::size_t m = 0; m < probs.size(); ++m)
      dlogits[m] = (probs[m] - target[m]) * per_sample_scale;
    Vec ddebiased = logits_grad_to_embedding(dlogits, queue, tau);
    // debiased = input - BA(input), so the net sees the negated gradient
    for (double& v : ddebiased) v = -v;
    ba_backward(debias_input, cache, ddebiased, params);
  }
  return ce;
}

}  // namespace

double batch_loss_cd_text(const LossBatch& batch, BAParams& params,
                          const EmbeddingQueue& queue_image, const SimilarityConfig& cfg,
                          double grad_scale) {
  const std::size_t n = batch.text.size();
  if (n == 0) throw DomainError("batch_loss_cd_text: empty batch");
  if (batch.text_cf.size() != n || batch.beta.size() != n)
    throw PairingError("batch_loss_cd_text: counterfactual embeddings or draws missing");
  require_full(queue_image, "image queue");

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec& selected = batch.beta[i] ? batch.text[i] : batch.text_cf[i];
    total += debias_cross_entropy(batch.text[i], selected, params, queue_image, cfg,
                                  grad_scale / static_cast<double>(n));
  }
  return total / static_cast<double>(n);
}

double batch_loss_cd_image(const LossBatch& batch, BAParams& params,
                           const EmbeddingQueue& queue_text, const SimilarityConfig& cfg,
                           double grad_scale) {
  const std::size_t n = batch.image.size();
  if (n == 0) throw DomainError("batch_loss_cd_image: empty batch");
  require_full(queue_text, "text queue");

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    total += debias_cross_entropy(batch.image[i], batch.image[i], params, queue_text, cfg,
                                  grad_scale / static_cast<double>(n));
  return total / static_cast<double>(n);
}

double loss_total(double l_cd, double l_ba, const LossWeights& weights) {
  if (weights.alpha < 0.0 || weights.alpha > 1.0)
    throw ConfigError("alpha must lie in [0, 1]");
  return weights.alpha * l_cd + (1.0 - weights.alpha) * l_ba;
}

LossTerms evaluate_losses(const LossBatch& batch, BAParams& params,
                          const EmbeddingQueue& queue_text, const EmbeddingQueue& queue_image,
                          const SimilarityConfig& cfg, const LossWeights& weights,
                          bool with_grads) {
  if (weights.alpha < 0.0 || weights.alpha > 1.0)
    throw ConfigError("alpha must lie in [0, 1]");
  LossTerms terms;
  const double ba_scale = with_grads ? (1.0 - weights.alpha) : 0.0;
  const double cd_scale = with_grads ? 0.5 * weights.alpha : 0.0;
  terms.l_ba = batch_loss_ba(batch, params, queue_text, queue_image, cfg, ba_scale);
  terms.l_cd_text = batch_loss_cd_text(batch, params, queue_image, cfg, cd_scale);
  terms.l_cd_image = batch_loss_cd_image(batch, params, queue_text, cfg, cd_scale);
  return terms;
}

}  // namespace vlbias
