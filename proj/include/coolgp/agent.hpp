#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "coolgp/posterior.hpp"

namespace coolgp {

/// Stochastic-gradient settings for learning q(W).
struct LearnConfig {
  double learning_rate = 1e-2;
  /// Rate at step s is learning_rate / (1 + rate_decay * s).
  double rate_decay = 0.1;
  std::size_t grad_samples = 1;
  /// Total number of blocks N in the stream; unset means unbounded, in which
  /// case the agent's own block count stands in for N.
  std::optional<std::size_t> stream_length;
  bool hyperlearning = true;
  /// A hyper step runs on every `hyper_every`-th ingested block.
  std::size_t hyper_every = 1;
  /// Per-coordinate cap on |rate * gradient| at step 0, decayed like the
  /// rate; zero disables the cap.
  double max_step = 0.01;

  double rate(std::size_t step) const {
    return learning_rate / (1.0 + rate_decay * static_cast<double>(step));
  }
  void validate() const;
};

struct AgentConfig {
  Eigen::Index input_dim = 2;
  double signal_scale = 1.0;
  double noise_std = 0.1;
  std::size_t bank_size = 10;
  std::uint64_t bank_seed = 0;
  std::uint64_t grad_seed = 0;
  LearnConfig learn;
  /// Deterministic mode: k = 1 with W_1 = this projection and weight 1.
  /// Hyperlearning is disabled in this mode.
  std::optional<Matrix> pinned_projection;
  /// Starting q(W); defaults to the prior.
  std::optional<ProjectionPosterior> initial_qw;
};

/// Gradient of the ELBO with respect to the q(W) means and standard deviations.
struct ProjectionGradient {
  Matrix d_mu;
  Matrix d_sigma;
};

/// Reparameterization draws eps ~ N(0, I) shared by value and gradient.
std::vector<Matrix> reparam_noise(std::uint64_t seed, std::uint64_t step, std::size_t count,
                                  Eigen::Index rows, Eigen::Index cols);

/// KL(q(W) || p(W)) for the factored Gaussian against standard normals.
double kl_qw(const ProjectionPosterior& qw);

/// KL(q(u) || p(u)) with p(u) = N(0, Kuu + jitter*I).
double kl_qu(const NaturalRepresentation& qu, const StandardizedVocabulary& vocab);

/// Everything the ELBO needs besides the blocks.
struct ElboInputs {
  const ProjectionPosterior& qw;
  const NaturalRepresentation& qu;
  const StandardizedVocabulary& vocab;
  double signal_scale;
  double noise_std;
  std::span<const Matrix> noise;
};

/// (scale_N / |blocks|) * sum_i L_{D_i}(q) - KL(q(u)||p(u)) - KL(q(W)||p(W)).
///
/// Each block term averages, over the reparameterized projections
/// W = mu + sigma * eps, the closed-form Gaussian expectation over q(u) of the
/// expected log-likelihood. With scale_N equal to the number of blocks this is
/// the plain sum. q(u) is held fixed; only q(W) is differentiated.
double elbo(const ElboInputs& in, std::span<const Block> blocks, double scale_N);

ProjectionGradient elbo_gradient(const ElboInputs& in, std::span<const Block> blocks,
                                 double scale_N);

/// Predictive means and variances (observation noise included).
struct Prediction {
  Vector mean;
  Vector variance;
};

/// A streaming learner holding a constant-size summary of everything it has seen.
class Agent {
 public:
  Agent(std::size_t id, std::shared_ptr<const StandardizedVocabulary> vocab, AgentConfig config);

  std::size_t id() const { return id_; }
  const StandardizedVocabulary& vocab() const { return *vocab_; }
  const std::shared_ptr<const StandardizedVocabulary>& shared_vocab() const { return vocab_; }
  const AgentConfig& config() const { return config_; }
  const ProjectionPosterior& qw() const { return qw_; }
  const SampleBank& bank() const { return bank_; }
  const NaturalRepresentation& rep() const { return rep_; }
  const std::optional<NaturalRepresentation>& fused_rep() const { return fused_; }
  std::size_t blocks_seen() const { return blocks_seen_; }
  std::size_t hyper_steps() const { return hyper_steps_; }
  bool pinned() const { return config_.pinned_projection.has_value(); }
  bool hyperlearning() const { return config_.learn.hyperlearning && !pinned(); }
  /// Set when the most recent hyper step was rejected (non-finite gradient or weights).
  bool last_step_skipped() const { return last_step_skipped_; }

  /// Current importance weights (all ones in deterministic mode).
  Vector weights() const;
  double ess() const;

  /// Absorbs the block into the bank caches, optionally takes one hyper step
  /// with this block as D_*, then recomputes the representation. Throws
  /// ContractViolation on malformed input, leaving the agent unchanged.
  void ingest_block(const Block& block);

  /// One stochastic gradient ascent step on q(W) using `block` as D_*.
  void hyper_step(const Block& block);

  /// Recomputes the representation from the caches and current q(W).
  void refresh();

  void set_fused(NaturalRepresentation rep) { fused_ = std::move(rep); }
  void clear_fused() { fused_.reset(); }
  void set_qw(ProjectionPosterior qw);

  Prediction predict(const Matrix& inputs, bool use_fused = false) const;

  /// ELBO of the current state on the given blocks using the agent's fixed
  /// evaluation noise.
  double elbo(std::span<const Block> blocks, double scale_N) const;
  ProjectionGradient elbo_gradient(std::span<const Block> blocks, double scale_N) const;

  /// N used to scale the stochastic gradient.
  double gradient_scale() const;

 private:
  void check_block(const Block& block) const;
  ElboInputs inputs(std::span<const Matrix> noise) const;

  std::size_t id_;
  std::shared_ptr<const StandardizedVocabulary> vocab_;
  AgentConfig config_;
  ProjectionPosterior qw_;
  SampleBank bank_;
  NaturalRepresentation rep_;
  std::optional<NaturalRepresentation> fused_;
  std::vector<Matrix> eval_noise_;
  std::size_t blocks_seen_ = 0;
  std::size_t hyper_steps_ = 0;
  bool last_step_skipped_ = false;
};

/// Root-mean-square error of predicted means against targets.
double rmse(const Vector& predicted, const Vector& truth);

}  // namespace coolgp
