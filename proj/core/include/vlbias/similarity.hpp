#pragma once

// Temperature-scaled softmax similarity, the fixed-capacity embedding queues,
// and KL divergence between probability rows. KL is in nats everywhere.

#include <cstddef>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "vlbias/vec.hpp"

namespace vlbias {

struct SimilarityConfig {
  /// Frozen softmax temperature. 0.01 mimics a converged CLIP logit scale.
  double temperature = 0.01;
};

/// Stable softmax (max-subtraction). DomainError on empty input.
Vec softmax(const Vec& logits);
/// log of the above, computed directly as (l - max) - log(sum exp).
Vec log_softmax(const Vec& logits);

/// softmax over <query, key_m> / temperature.
Vec softmax_sim(const Vec& query, const std::vector<Vec>& keys, const SimilarityConfig& cfg);

/// <x, entry_m> / temperature for every queue entry, in queue order.
class EmbeddingQueue;
Vec queue_logits(const Vec& x, const EmbeddingQueue& queue, double temperature);

/// FIFO of frozen (id, embedding) entries with strict oldest-first eviction.
class EmbeddingQueue {
 public:
  explicit EmbeddingQueue(std::size_t capacity);  // ConfigError on 0

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool full() const { return entries_.size() == capacity_; }

  /// Appends a batch (at most `capacity` entries), evicting oldest entries
  /// once the capacity is exceeded. ConfigError if the batch alone is larger
  /// than the queue.
  void push(const std::vector<std::pair<std::string, Vec>>& batch);

  const std::deque<std::pair<std::string, Vec>>& entries() const { return entries_; }
  const Vec& vector_at(std::size_t i) const { return entries_.at(i).second; }
  std::vector<std::string> ids() const;

 private:
  std::size_t capacity_;
  std::deque<std::pair<std::string, Vec>> entries_;
};

/// softmax of a bias embedding's similarities against the queue's frozen
/// entries. QueueNotWarmError unless the queue is filled to capacity.
Vec pseudo_distribution(const Vec& bias, const EmbeddingQueue& queue,
                        const SimilarityConfig& cfg);

/// sum p_i ln(p_i / q_i), in nats. Terms with p_i = 0 contribute 0.
double kl_div(const Vec& p, const Vec& q);

}  // namespace vlbias
