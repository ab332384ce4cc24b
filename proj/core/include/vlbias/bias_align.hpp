#pragma once

// The shared bias-alignment network: a 2-layer MLP (d -> d -> d, gelu) applied
// identically to text and image embeddings. The output layer starts at exactly
// zero, so an untrained module extracts a zero bias and debiasing is the
// identity. Gradients are accumulated into explicit buffers by ba_backward.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>

#include "vlbias/vec.hpp"

namespace vlbias {

struct BAParams {
  std::size_t dim = 0;
  Vec w1, b1, w2, b2;      // w* are row-major dim x dim
  Vec gw1, gb1, gw2, gb2;  // gradient accumulators, same shapes

  /// W1 random orthogonal (seeded), b1 = 0, W2 = 0, b2 = 0.
  static BAParams zero_init(std::size_t dim, std::uint64_t seed);

  void zero_grads();
  std::size_t param_count() const { return 2 * dim * dim + 2 * dim; }

  // flat views over (w1, b1, w2, b2); used by the optimizer and the
  // finite-difference oracle
  double& param(std::size_t i);
  double param(std::size_t i) const;
  double& grad(std::size_t i);
};

double gelu(double x);
double gelu_grad(double x);

struct BAForwardCache {
  Vec pre_activation;  // W1 x + b1
  Vec hidden;          // gelu of the above
  bool valid = false;
};

/// W2 gelu(W1 x + b1) + b2. DimError on shape mismatch.
Vec ba_forward(const Vec& x, const BAParams& params);
Vec ba_forward(const Vec& x, const BAParams& params, BAForwardCache& cache);

/// Accumulates d(out)/d(theta)^T upstream into the gradient buffers and
/// returns d(out)/d(x)^T upstream. StateError without a valid cache for x.
Vec ba_backward(const Vec& x, const BAForwardCache& cache, const Vec& upstream,
                BAParams& params);

struct BiasDecomposition {
  Vec bias;     // BA(x)
  Vec neutral;  // x - BA(x); bias + neutral == x exactly
};

BiasDecomposition decompose(const Vec& x, const BAParams& params);

struct CheckpointMeta {
  std::size_t dim = 0;
  std::string arch = "mlp2-gelu";
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

/// Checkpoint file: one JSON header line {dim, arch, seed, step} followed by
/// four LEB1 float32 blobs (W1, b1, W2, b2).
void save_checkpoint(const BAParams& params, const CheckpointMeta& meta,
                     const std::filesystem::path& path);
std::pair<BAParams, CheckpointMeta> load_checkpoint(const std::filesystem::path& path);

}  // namespace vlbias
