#pragma once

#include <cstdint>
#include <vector>

#include "coolgp/kernel.hpp"

namespace coolgp {

/// Natural parameters of q(u): precision S^{-1} and precision-weighted mean S^{-1} m.
///
/// This is the constant-size summary agents exchange. Streaming updates and
/// fusion are plain additions in this coordinate system.
struct NaturalRepresentation {
  Matrix precision;
  Vector shift;

  Eigen::Index size() const { return shift.size(); }
  /// Throws ContractViolation on shape mismatch or a non-symmetric precision
  /// (relative tolerance 1e-10).
  void validate() const;
};

/// Moment form of q(u) = N(mean, cov).
struct MomentParameters {
  Vector mean;
  Matrix cov;
};

/// Factored Gaussian q(W) over the q x d projection: independent N(mu_ij, sigma_ij^2).
struct ProjectionPosterior {
  Matrix mu;
  Matrix sigma;

  /// mu = 0, sigma = 1: the standard-normal prior p(W).
  static ProjectionPosterior prior(Eigen::Index rows, Eigen::Index cols);
  void validate() const;
};

/// One streamed block of observations: inputs as rows of `inputs`.
struct Block {
  Matrix inputs;
  Vector targets;

  Eigen::Index size() const { return targets.size(); }
  Eigen::Index dim() const { return inputs.cols(); }
};

/// The fixed projection samples W_1..W_k drawn from p(W) together with
/// per-sample kernel aggregates accumulated over every absorbed block:
///
///   A_t = sum_i K^(t)_{U D_i} K^(t)_{D_i U},   b_t = sum_i K^(t)_{U D_i} y_{D_i}
///
/// Memory is O(k m^2) regardless of how many blocks have been absorbed.
/// Single-owner mutable state.
class SampleBank {
 public:
  /// k samples of shape rows x cols, reproducible from the seed.
  SampleBank(Eigen::Index k, Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
             Eigen::Index vocab_size);

  /// A single caller-chosen projection (k = 1). Used for the deterministic mode
  /// where every downstream identity is exact.
  static SampleBank pinned(const Matrix& projection, Eigen::Index vocab_size);

  Eigen::Index count() const { return static_cast<Eigen::Index>(samples_.size()); }
  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<Matrix>& samples() const { return samples_; }
  const std::vector<Matrix>& outer_sums() const { return outer_; }
  const std::vector<Vector>& target_sums() const { return target_; }
  std::size_t blocks_absorbed() const { return blocks_absorbed_; }

  /// Adds one block's K^(t) products to every per-sample aggregate.
  /// Throws ContractViolation on dimension mismatch; the bank is then unchanged.
  void absorb(const Block& block, const StandardizedVocabulary& vocab, double signal_scale);

 private:
  SampleBank() = default;

  std::vector<Matrix> samples_;
  std::vector<Matrix> outer_;
  std::vector<Vector> target_;
  Eigen::Index rows_ = 0;
  Eigen::Index cols_ = 0;
  std::uint64_t seed_ = 0;
  std::size_t blocks_absorbed_ = 0;
};

/// Block summary E = [E1; E2] in natural coordinates.
struct BlockSummary {
  Matrix e1;
  Vector e2;
};

NaturalRepresentation natural_from_moments(const MomentParameters& moments);
/// Throws FactorizationError if the precision is not positive definite.
MomentParameters moments_from_natural(const NaturalRepresentation& rep);

/// Natural representation of p(u) = N(0, Kuu + jitter*I).
NaturalRepresentation prior_natural(const StandardizedVocabulary& vocab);

/// log q(W_t) - log p(W_t) for every sample in the bank.
Vector log_importance_weights(const ProjectionPosterior& qw, const SampleBank& bank);

/// Raw (unnormalized) ratios q(W_t)/p(W_t). Throws std::domain_error naming the
/// first sample whose log-density ratio or weight is not finite.
Vector importance_weights(const ProjectionPosterior& qw, const SampleBank& bank);

/// (sum w)^2 / sum w^2, computed from log weights.
double effective_sample_size(const Vector& log_weights);

/// Self-normalized weights w_t / sum w, computed stably from log weights.
Vector normalized_weights(const Vector& log_weights);

/// Weighted combination of the bank's aggregates into R = prior + sum_i E_i.
/// Cost O(k m^2 + m^3), independent of the data absorbed so far.
NaturalRepresentation representation_from_caches(const SampleBank& bank, const Vector& weights,
                                                  const StandardizedVocabulary& vocab,
                                                  double noise_std);

/// Importance-sampled summary of one block, without touching the bank caches.
BlockSummary block_summary(const Block& block, const SampleBank& bank, const Vector& weights,
                           const StandardizedVocabulary& vocab, double signal_scale,
                           double noise_std);

/// Direct Monte Carlo estimate of the block summary with W drawn from q(W).
///
/// Reference estimator used to check the importance-sampled one; it does not
/// share any cache with the bank.
BlockSummary exact_block_E(const Block& block, const ProjectionPosterior& qw,
                           const StandardizedVocabulary& vocab, double signal_scale,
                           double noise_std, std::size_t mc_samples, std::uint64_t seed);

}  // namespace coolgp
