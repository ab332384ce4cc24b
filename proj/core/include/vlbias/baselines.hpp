#pragma once

// The two comparison debiasers.
//
//   CLIP-clip      ranks embedding dimensions by mutual information with an
//                  attribute label (quantile binning, 8 bins, nats) and
//                  deletes the top-m dimensions from both modalities.
//   Biased-prompts orthogonal projection away from the span of counterfactual
//                  prompt-pair differences (uncalibrated).

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "vlbias/embedding_set.hpp"
#include "vlbias/vec.hpp"

namespace vlbias {

struct ClipDims {
  std::vector<std::size_t> removed_dims;  // every dimension, descending MI
  Vec mi_scores;                          // indexed by dimension, nats
};

/// Per-dimension MI between quantile-binned dimension values of the image
/// rows and the label on `axis`. DomainError with fewer than two label
/// classes; LabelError when an image row lacks the axis.
ClipDims mi_rank(const LabeledEmbeddingSet& set, const std::string& axis, int bins = 8,
                 unsigned threads = 1);

/// Deletes the top-m ranked dimensions from every row (both modalities) and
/// renormalizes. ConfigError when m >= dim.
LabeledEmbeddingSet clip_apply(const LabeledEmbeddingSet& set, const ClipDims& dims,
                               std::size_t m);

struct BiasProjection {
  std::size_t dim = 0;
  Vec p;  // row-major dim x dim, symmetric idempotent
};

/// P = I - B B^T with B an orthonormal basis of span{a_i - b_i}.
/// DegenerateError when every difference vector is ~0.
BiasProjection projection_fit(const std::vector<std::pair<Vec, Vec>>& prompt_pairs);

enum class ModalityFilter { text_only, image_only, both };

struct ProjectionResult {
  LabeledEmbeddingSet set;
  /// Rows that projected to ~0 keep their original values and are listed here.
  std::vector<std::string> flagged_ids;
};

ProjectionResult projection_apply(const LabeledEmbeddingSet& set, const BiasProjection& proj,
                                  ModalityFilter filter);

Vec project(const BiasProjection& proj, const Vec& x);  // P x

void save_clip_dims(const ClipDims& dims, const std::filesystem::path& path);
ClipDims load_clip_dims(const std::filesystem::path& path);

/// JSON descriptor at `path`, matrix blob at `path` with extension .leb1.
void save_projection(const BiasProjection& proj, const std::filesystem::path& path);
BiasProjection load_projection(const std::filesystem::path& path);

}  // namespace vlbias
