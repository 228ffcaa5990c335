#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "coolgp/posterior.hpp"
#include "coolgp/rng.hpp"

namespace coolgp {

/// Two streams observed through different warps of one latent function u drawn
/// from the unit-scale GP: f_1(x) = sigma_s u(W_1 x), f_2(x) = sigma_s u(W_2 x).
struct SyntheticSpec {
  Eigen::Index dim = 2;
  Matrix projection1;
  Matrix projection2;
  double signal_scale = 1.0;
  double noise_std = 0.1;
  std::size_t blocks_per_stream = 50;
  std::size_t block_size = 20;
  std::size_t n_test = 400;
  std::uint64_t seed = 0;
  double jitter = 1e-8;
  /// Points per conditional chunk; pools up to this size are drawn in one shot.
  std::size_t chunk_size = 6000;

  /// W_1, W_2 are seeded random orthogonal matrices scaled by 1.5 and 0.7.
  static SyntheticSpec with_defaults(Eigen::Index dim, std::uint64_t seed);
  void validate() const;
};

struct SyntheticData {
  std::vector<Block> stream1;
  std::vector<Block> stream2;
  /// Noise-free latent values matching each stream block's targets.
  std::vector<Vector> latent1;
  std::vector<Vector> latent2;
  /// Test set as two blocks (domain 1 then domain 2); targets are the
  /// noise-free latent values.
  std::vector<Block> test;
};

/// Exact joint draw of all training and test latents, then observation noise.
/// Throws FactorizationError if the pooled covariance is not positive definite.
SyntheticData generate(const SyntheticSpec& spec);

/// Draws N(0, signal_scale^2 K_uu(points) + jitter I) chunk by chunk, each
/// chunk conditioned on all previous ones (blocked Cholesky).
Vector sample_latent(const Matrix& points, double signal_scale, double jitter, std::size_t chunk_size,
                     Rng& rng);

/// Plain-text comma-separated dataset: header `block_id,x1,...,xd,y`, one row
/// per observation. `dim` is only consulted when `blocks` is empty.
void write_dataset(const std::vector<Block>& blocks, const std::filesystem::path& path,
                   Eigen::Index dim = 0);

/// Inverse of write_dataset; blocks come back in ascending block_id order.
/// Throws ParseError with the offending line number on malformed input.
std::vector<Block> read_dataset(const std::filesystem::path& path);

/// Stacks blocks into one (inputs, targets) block.
Block concatenate(const std::vector<Block>& blocks);

}  // namespace coolgp
