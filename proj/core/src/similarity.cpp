#include "vlbias/similarity.hpp"

#include <algorithm>
#include <cmath>

#include "vlbias/errors.hpp"

namespace vlbias {

Vec softmax(const Vec& logits) {
  if (logits.empty()) throw DomainError("softmax of empty logits");
  const double m = *std::max_element(logits.begin(), logits.end());
  Vec out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

Vec log_softmax(const Vec& logits) {
  if (logits.empty()) throw DomainError("log_softmax of empty logits");
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - m);
  const double lse = std::log(sum);
  Vec out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = (logits[i] - m) - lse;
  return out;
}

Vec softmax_sim(const Vec& query, const std::vector<Vec>& keys, const SimilarityConfig& cfg) {
  if (keys.empty()) throw DomainError("softmax_sim with no keys");
  if (cfg.temperature <= 0.0) throw ConfigError("temperature must be positive");
  Vec logits(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i)
    logits[i] = dot(query, keys[i]) / cfg.temperature;
  return softmax(logits);
}

EmbeddingQueue::EmbeddingQueue(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("queue capacity must be positive");
}

void EmbeddingQueue::push(const std::vector<std::pair<std::string, Vec>>& batch) {
  if (batch.size() > capacity_)
    throw ConfigError("batch of " + std::to_string(batch.size()) +
                      " exceeds queue capacity " + std::to_string(capacity_));
  for (const auto& e : batch) entries_.push_back(e);
  while (entries_.size() > capacity_) entries_.pop_front();
}

std::vector<std::string> EmbeddingQueue::ids() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [id, v] : entries_) out.push_back(id);
  return out;
}

Vec queue_logits(const Vec& x, const EmbeddingQueue& queue, double temperature) {
  if (temperature <= 0.0) throw ConfigError("temperature must be positive");
  Vec logits(queue.size());
  for (std::size_t i = 0; i < queue.size(); ++i)
    logits[i] = dot(x, queue.vector_at(i)) / temperature;
  return logits;
}

Vec pseudo_distribution(const Vec& bias, const EmbeddingQueue& queue,
                        const SimilarityConfig& cfg) {
  if (!queue.full())
    throw QueueNotWarmError("queue holds " + std::to_string(queue.size()) + " of " +
                            std::to_string(queue.capacity()) + " entries");
  return softmax(queue_logits(bias, queue, cfg.temperature));
}

double kl_div(const Vec& p, const Vec& q) {
  if (p.size() != q.size()) throw DimError("kl_div: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;  // 0 ln 0 = 0
    if (q[i] <= 0.0) throw DomainError("kl_div: q has a zero where p does not");
    sum += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return sum;
}

}  // namespace vlbias
