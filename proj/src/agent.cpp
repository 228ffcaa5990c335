#include "coolgp/agent.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "coolgp/errors.hpp"
#include "coolgp/rng.hpp"

namespace coolgp {

namespace {

// q(u) seen from the kernel side: alpha = Kuu^{-1} m, and
// inner = Kuu^{-1} S Kuu^{-1} obtained as (Kuu R1 Kuu)^{-1}, which stays well
// scaled even when Kuu is poorly conditioned. Rounding in R1 can still leave
// the product a hair short of positive definite; a ridge of at most 1e-6 of
// its mean diagonal is added in that case.
struct InducingView {
  Vector alpha;
  Eigen::LLT<Matrix> inner_factor;
  Matrix inner;
  double ridge = 0.0;

  InducingView(const NaturalRepresentation& qu, const StandardizedVocabulary& vocab) {
    qu.validate();
    if (qu.size() != vocab.size())
      throw ContractViolation("representation size does not match the vocabulary");
    const Matrix& k = vocab.jittered_gram();
    Matrix p = k * qu.precision * k;
    p = 0.5 * (p + p.transpose()).eval();
    inner_factor.compute(p);
    const double scale = p.diagonal().mean();
    for (double r = 1e-12; inner_factor.info() != Eigen::Success && r <= 1e-6; r *= 10.0) {
      ridge = r * scale;
      inner_factor.compute(p + ridge * Matrix::Identity(p.rows(), p.cols()));
    }
    if (inner_factor.info() != Eigen::Success)
      throw FactorizationError("precision is not positive definite");
    inner = inner_factor.solve(Matrix::Identity(vocab.size(), vocab.size()));
    inner = 0.5 * (inner + inner.transpose()).eval();
    alpha = inner_factor.solve(k * qu.shift);
  }

  double log_det() const { return 2.0 * inner_factor.matrixLLT().diagonal().array().log().sum(); }
};

struct BlockTerm {
  double value = 0.0;
  Matrix d_projection;
};

// Expected log-likelihood of one block under a fixed projection, with the
// q(u) expectation done in closed form.
BlockTerm block_term(const Block& block, const Matrix& projection, const InducingView& view,
                     const Matrix& middle, const StandardizedVocabulary& vocab,
                     double signal_scale, double noise_std, bool want_gradient) {
  const double noise_var = noise_std * noise_std;
  const auto n = static_cast<double>(block.size());
  const Matrix kdu = cross_gram(block.inputs, projection, vocab.points(), signal_scale);
  const Vector resid = block.targets - kdu * view.alpha;
  const Matrix km = kdu * middle;
  const double quad = km.cwiseProduct(kdu).sum();
  BlockTerm out;
  out.value = -0.5 * n * std::log(2.0 * std::numbers::pi * noise_var) -
              (resid.squaredNorm() + n * signal_scale * signal_scale + quad) / (2.0 * noise_var);
  if (want_gradient) {
    const Matrix dk = (resid * view.alpha.transpose() - km) / noise_var;
    const Matrix h = dk.cwiseProduct(kdu);
    const Vector row_sums = h.rowwise().sum();
    const Matrix& x = block.inputs;
    out.d_projection = vocab.points().transpose() * h.transpose() * x -
                       projection * (x.transpose() * row_sums.asDiagonal() * x);
  }
  return out;
}

struct ElboResult {
  double value = 0.0;
  ProjectionGradient grad;
};

ElboResult evaluate_elbo(const ElboInputs& in, std::span<const Block> blocks, double scale_N,
                         bool want_gradient) {
  in.qw.validate();
  if (in.noise.empty()) throw ContractViolation("ELBO needs at least one reparameterization draw");
  for (const auto& eps : in.noise)
    if (eps.rows() != in.qw.mu.rows() || eps.cols() != in.qw.mu.cols())
      throw ContractViolation("reparameterization noise shape does not match q(W)");
  if (in.vocab.dim() != in.qw.mu.rows())
    throw ContractViolation("q(W) output dimension does not match the vocabulary");

  ElboResult out;
  out.grad.d_mu = Matrix::Zero(in.qw.mu.rows(), in.qw.mu.cols());
  out.grad.d_sigma = Matrix::Zero(in.qw.mu.rows(), in.qw.mu.cols());
  if (!blocks.empty()) {
    const InducingView view(in.qu, in.vocab);
    const Matrix middle = view.inner - in.vocab.gram_inverse();
    const double weight =
        scale_N / (static_cast<double>(blocks.size()) * static_cast<double>(in.noise.size()));
    for (const auto& block : blocks) {
      if (block.inputs.cols() != in.qw.mu.cols() || block.inputs.rows() != block.targets.size())
        throw ContractViolation("block shape does not match q(W)");
      for (const auto& eps : in.noise) {
        const Matrix w = in.qw.mu + in.qw.sigma.cwiseProduct(eps);
        const BlockTerm term = block_term(block, w, view, middle, in.vocab, in.signal_scale,
                                          in.noise_std, want_gradient);
        out.value += weight * term.value;
        if (want_gradient) {
          out.grad.d_mu += weight * term.d_projection;
          out.grad.d_sigma += weight * term.d_projection.cwiseProduct(eps);
        }
      }
    }
  }
  out.value -= kl_qu(in.qu, in.vocab) + kl_qw(in.qw);
  if (want_gradient) {
    out.grad.d_mu -= in.qw.mu;
    out.grad.d_sigma -= (in.qw.sigma - in.qw.sigma.cwiseInverse());
  }
  return out;
}

}  // namespace

void LearnConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ContractViolation("learning rate must be finite and nonnegative");
  if (grad_samples < 1) throw ContractViolation("grad_samples must be >= 1");
  if (hyper_every < 1) throw ContractViolation("hyper_every must be >= 1");
  if (rate_decay < 0.0 || max_step < 0.0) throw ContractViolation("rate_decay and max_step must be >= 0");
}

std::vector<Matrix> reparam_noise(std::uint64_t seed, std::uint64_t step, std::size_t count,
                                  Eigen::Index rows, Eigen::Index cols) {
  Rng rng(substream_seed(seed, "reparam", step));
  std::vector<Matrix> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) out.push_back(standard_normal(rng, rows, cols));
  return out;
}

double kl_qw(const ProjectionPosterior& qw) {
  qw.validate();
  const auto mu = qw.mu.array();
  const auto sigma = qw.sigma.array();
  return 0.5 * (mu.square() + sigma.square() - 1.0 - 2.0 * sigma.log()).sum();
}

double kl_qu(const NaturalRepresentation& qu, const StandardizedVocabulary& vocab) {
  // With P = K R1 K: tr(K^{-1} S) = tr(P^{-1} K), m' K^{-1} m = alpha' K alpha
  // and log|K| - log|S| = log|P| - log|K|.
  const InducingView view(qu, vocab);
  const Matrix& k = vocab.jittered_gram();
  const double logdet_prior = 2.0 * vocab.factor().matrixLLT().diagonal().array().log().sum();
  const double trace = view.inner.cwiseProduct(k).sum();
  const double quad = view.alpha.dot(k * view.alpha);
  return 0.5 * (trace + quad - static_cast<double>(vocab.size()) + view.log_det() - logdet_prior);
}

double elbo(const ElboInputs& in, std::span<const Block> blocks, double scale_N) {
  return evaluate_elbo(in, blocks, scale_N, false).value;
}

ProjectionGradient elbo_gradient(const ElboInputs& in, std::span<const Block> blocks,
                                 double scale_N) {
  return evaluate_elbo(in, blocks, scale_N, true).grad;
}

Agent::Agent(std::size_t id, std::shared_ptr<const StandardizedVocabulary> vocab,
             AgentConfig config)
    : id_(id),
      vocab_(vocab ? std::move(vocab) : throw ContractViolation("agent needs a vocabulary")),
      config_(std::move(config)),
      qw_(config_.initial_qw.value_or(ProjectionPosterior::prior(vocab_->dim(), config_.input_dim))),
      bank_(config_.pinned_projection
                ? SampleBank::pinned(*config_.pinned_projection, vocab_->size())
                : SampleBank(static_cast<Eigen::Index>(config_.bank_size), vocab_->dim(),
                             config_.input_dim, config_.bank_seed, vocab_->size())) {
  DomainParams{Matrix(), config_.signal_scale, config_.noise_std}.validate();
  config_.learn.validate();
  if (config_.pinned_projection) {
    const Matrix& w = *config_.pinned_projection;
    if (w.rows() != vocab_->dim() || w.cols() != config_.input_dim)
      throw ContractViolation("pinned projection must be q x d");
    qw_.mu = w;
  }
  qw_.validate();
  if (qw_.mu.rows() != vocab_->dim() || qw_.mu.cols() != config_.input_dim)
    throw ContractViolation("initial q(W) must be q x d");
  eval_noise_ = reparam_noise(config_.grad_seed, ~std::uint64_t{0}, config_.learn.grad_samples,
                              qw_.mu.rows(), qw_.mu.cols());
  rep_ = prior_natural(*vocab_);
}

Vector Agent::weights() const {
  if (pinned()) return Vector::Ones(1);
  return importance_weights(qw_, bank_);
}

double Agent::ess() const {
  if (pinned()) return 1.0;
  return effective_sample_size(log_importance_weights(qw_, bank_));
}

void Agent::check_block(const Block& block) const {
  if (block.size() == 0) throw ContractViolation("cannot ingest an empty block");
  if (block.inputs.rows() != block.targets.size() || block.inputs.cols() != config_.input_dim)
    throw ContractViolation("block shape does not match agent input dimension " +
                            std::to_string(config_.input_dim));
}

void Agent::refresh() {
  rep_ = representation_from_caches(bank_, weights(), *vocab_, config_.noise_std);
}

void Agent::set_qw(ProjectionPosterior qw) {
  qw.validate();
  if (qw.mu.rows() != qw_.mu.rows() || qw.mu.cols() != qw_.mu.cols())
    throw ContractViolation("q(W) shape mismatch");
  qw_ = std::move(qw);
  refresh();
}

void Agent::ingest_block(const Block& block) {
  check_block(block);
  bank_.absorb(block, *vocab_, config_.signal_scale);
  ++blocks_seen_;
  refresh();
  if (hyperlearning() && blocks_seen_ % config_.learn.hyper_every == 0) {
    hyper_step(block);
    refresh();
  }
}

double Agent::gradient_scale() const {
  if (config_.learn.stream_length) return static_cast<double>(*config_.learn.stream_length);
  return static_cast<double>(std::max<std::size_t>(blocks_seen_, 1));
}

ElboInputs Agent::inputs(std::span<const Matrix> noise) const {
  return ElboInputs{qw_, rep_, *vocab_, config_.signal_scale, config_.noise_std, noise};
}

void Agent::hyper_step(const Block& block) {
  if (!hyperlearning()) throw ContractViolation("hyper_step requires hyperlearning to be enabled");
  check_block(block);
  const auto noise = reparam_noise(config_.grad_seed, hyper_steps_, config_.learn.grad_samples,
                                   qw_.mu.rows(), qw_.mu.cols());
  const std::span<const Block> one(&block, 1);
  const ProjectionGradient g = coolgp::elbo_gradient(inputs(noise), one, gradient_scale());
  const double rate = config_.learn.rate(hyper_steps_);
  ++hyper_steps_;

  last_step_skipped_ = true;
  if (!g.d_mu.allFinite() || !g.d_sigma.allFinite()) return;

  // sigma is stepped in log space; d/dlog(sigma) = sigma * d/dsigma.
  Matrix step_mu = rate * g.d_mu;
  Matrix step_log_sigma = rate * g.d_sigma.cwiseProduct(qw_.sigma);
  if (config_.learn.max_step > 0.0) {
    // The cap decays on the same schedule as the rate, so saturated steps
    // still shrink over time.
    const double cap = config_.learn.max_step / (1.0 + config_.learn.rate_decay * static_cast<double>(hyper_steps_ - 1));
    step_mu = step_mu.cwiseMax(-cap).cwiseMin(cap);
    step_log_sigma = step_log_sigma.cwiseMax(-cap).cwiseMin(cap);
  }
  ProjectionPosterior next{qw_.mu + step_mu,
                           (qw_.sigma.array().log() + step_log_sigma.array()).exp().matrix()};
  if (!next.mu.allFinite() || !next.sigma.allFinite() || !(next.sigma.array() > 0.0).all()) return;
  try {
    (void)importance_weights(next, bank_);
  } catch (const std::domain_error&) {
    return;
  }
  qw_ = std::move(next);
  last_step_skipped_ = false;
}

Prediction Agent::predict(const Matrix& inputs, bool use_fused) const {
  if (inputs.cols() != config_.input_dim)
    throw ContractViolation("prediction inputs do not match agent input dimension");
  const NaturalRepresentation& qu = (use_fused && fused_) ? *fused_ : rep_;
  const InducingView view(qu, *vocab_);
  const Vector w = pinned() ? Vector::Ones(1) : normalized_weights(log_importance_weights(qw_, bank_));
  const double s2 = config_.signal_scale * config_.signal_scale;

  Prediction out{Vector::Zero(inputs.rows()), Vector::Zero(inputs.rows())};
  for (Eigen::Index t = 0; t < bank_.count(); ++t) {
    if (w(t) == 0.0) continue;
    const Matrix kxu = cross_gram(inputs, bank_.samples()[static_cast<std::size_t>(t)],
                                  vocab_->points(), config_.signal_scale);
    const Matrix prior_part = vocab_->factor().matrixL().solve(kxu.transpose());
    const Matrix post_part = view.inner_factor.matrixL().solve(kxu.transpose());
    const Vector latent = (s2 - prior_part.colwise().squaredNorm().array() +
                           post_part.colwise().squaredNorm().array())
                              .cwiseMax(0.0)
                              .matrix()
                              .transpose();
    out.mean += w(t) * (kxu * view.alpha);
    out.variance += w(t) * latent;
  }
  out.variance.array() += config_.noise_std * config_.noise_std;
  return out;
}

double Agent::elbo(std::span<const Block> blocks, double scale_N) const {
  return coolgp::elbo(inputs(eval_noise_), blocks, scale_N);
}

ProjectionGradient Agent::elbo_gradient(std::span<const Block> blocks, double scale_N) const {
  return coolgp::elbo_gradient(inputs(eval_noise_), blocks, scale_N);
}

double rmse(const Vector& predicted, const Vector& truth) {
  if (predicted.size() != truth.size()) throw ContractViolation("rmse: size mismatch");
  if (predicted.size() == 0) return 0.0;
  return std::sqrt((predicted - truth).squaredNorm() / static_cast<double>(predicted.size()));
}

}  // namespace coolgp
