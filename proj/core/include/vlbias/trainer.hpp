#pragma once

// End-to-end optimization of the bias-alignment net over a matched
// text/image embedding set. Everything random is derived from
// (seed, epoch, step, index), so a (seed, config, dataset) triple fixes the
// parameter trajectory bit-for-bit and training can resume from a state file
// with an identical continuation.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vlbias/bias_align.hpp"
#include "vlbias/embedding_set.hpp"
#include "vlbias/losses.hpp"

namespace vlbias {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t queue_size = 256;
  double alpha = 0.5;
  double temperature = 0.01;
  double learning_rate = 1e-4;
  std::uint64_t steps = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> axes;  // attribute axes varied in counterfactuals

  void validate() const;  // ConfigError
};

struct AdamState {
  Vec m, v;
  std::uint64_t t = 0;  // completed updates, for bias correction
};

struct LossRecord {
  std::uint64_t step = 0;
  double l_ba = 0.0, l_cd = 0.0, l_total = 0.0;
};

/// text row index <-> image row index of one matched pair.
struct MatchedPair {
  std::size_t text_index = 0;
  std::size_t image_index = 0;
};

/// Pairs text and image rows sharing (concept, attributes); within a group,
/// rows are zipped in ascending-id order. PairingError when group sizes
/// disagree.
std::vector<MatchedPair> match_pairs(const LabeledEmbeddingSet& text_set,
                                     const LabeledEmbeddingSet& image_set);

struct TrainState {
  TrainConfig cfg;
  BAParams params;
  AdamState adam;
  std::uint64_t step = 0;    // completed optimization steps
  std::uint64_t epoch = 0;   // current epoch of the batch cursor
  std::uint64_t cursor = 0;  // next unread position in the epoch order
  std::vector<std::string> queue_text_ids;   // oldest first
  std::vector<std::string> queue_image_ids;
};

struct TrainResult {
  BAParams params;
  std::vector<LossRecord> history;
  TrainState state;
};

TrainResult train(const LabeledEmbeddingSet& text_set, const LabeledEmbeddingSet& image_set,
                  const TrainConfig& cfg);

/// Continues a run until state.cfg.steps total steps are done. The
/// trajectory is identical to an uninterrupted run of the same config.
TrainResult resume_train(const LabeledEmbeddingSet& text_set,
                         const LabeledEmbeddingSet& image_set, TrainState state);

/// Full-precision training state file: JSON header line + LEB8 blobs
/// (params, Adam moments). Queues are stored as id lists and rehydrated from
/// the dataset on resume.
void save_train_state(const TrainState& state, const std::filesystem::path& path);
TrainState load_train_state(const std::filesystem::path& path);

void write_loss_history_csv(const std::vector<LossRecord>& history,
                            const std::filesystem::path& path);

/// Replaces every row by its neutral part x - BA(x). Labels are preserved;
/// rows are not renormalized.
LabeledEmbeddingSet apply_debias(const LabeledEmbeddingSet& set, const BAParams& params);

}  // namespace vlbias
