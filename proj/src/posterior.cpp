#include "coolgp/posterior.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "coolgp/errors.hpp"
#include "coolgp/rng.hpp"

namespace coolgp {

namespace {

Matrix symmetrized(const Matrix& a) { return 0.5 * (a + a.transpose()); }

Eigen::LLT<Matrix> factorize(const Matrix& a, const char* what) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success)
    throw FactorizationError(std::string(what) + " is not positive definite");
  return llt;
}

void check_block(const Block& block, Eigen::Index cols) {
  if (block.inputs.rows() != block.targets.size())
    throw ContractViolation("block has " + std::to_string(block.inputs.rows()) + " inputs but " +
                            std::to_string(block.targets.size()) + " targets");
  if (block.inputs.cols() != cols)
    throw ContractViolation("block input dimension " + std::to_string(block.inputs.cols()) +
                            " does not match projection width " + std::to_string(cols));
}

}  // namespace

void NaturalRepresentation::validate() const {
  const Eigen::Index m = shift.size();
  if (precision.rows() != m || precision.cols() != m)
    throw ContractViolation("natural representation: precision is not m x m");
  const double scale = std::max(precision.cwiseAbs().maxCoeff(), 1.0);
  if ((precision - precision.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw ContractViolation("natural representation: precision is not symmetric");
}

ProjectionPosterior ProjectionPosterior::prior(Eigen::Index rows, Eigen::Index cols) {
  return {Matrix::Zero(rows, cols), Matrix::Ones(rows, cols)};
}

void ProjectionPosterior::validate() const {
  if (mu.rows() != sigma.rows() || mu.cols() != sigma.cols())
    throw ContractViolation("projection posterior: mu and sigma shapes differ");
  if (!(sigma.array() > 0.0).all() || !sigma.allFinite() || !mu.allFinite())
    throw ContractViolation("projection posterior: sigma must be positive and all entries finite");
}

SampleBank::SampleBank(Eigen::Index k, Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                       Eigen::Index vocab_size)
    : rows_(rows), cols_(cols), seed_(seed) {
  if (k < 1) throw ContractViolation("sample bank needs k >= 1");
  if (rows < 1 || cols < 1 || vocab_size < 1)
    throw ContractViolation("sample bank dimensions must be positive");
  Rng rng(seed);
  samples_.reserve(static_cast<std::size_t>(k));
  for (Eigen::Index t = 0; t < k; ++t) samples_.push_back(standard_normal(rng, rows, cols));
  outer_.assign(static_cast<std::size_t>(k), Matrix::Zero(vocab_size, vocab_size));
  target_.assign(static_cast<std::size_t>(k), Vector::Zero(vocab_size));
}

SampleBank SampleBank::pinned(const Matrix& projection, Eigen::Index vocab_size) {
  SampleBank bank;
  bank.rows_ = projection.rows();
  bank.cols_ = projection.cols();
  bank.samples_.push_back(projection);
  bank.outer_.push_back(Matrix::Zero(vocab_size, vocab_size));
  bank.target_.push_back(Vector::Zero(vocab_size));
  return bank;
}

void SampleBank::absorb(const Block& block, const StandardizedVocabulary& vocab,
                        double signal_scale) {
  check_block(block, cols_);
  if (block.size() == 0) throw ContractViolation("cannot absorb an empty block");
  if (vocab.dim() != rows_ || vocab.size() != outer_.front().rows())
    throw ContractViolation("vocabulary does not match the sample bank");

  // Compute every increment first so a failure leaves the caches untouched.
  std::vector<Matrix> kud(samples_.size());
  for (std::size_t t = 0; t < samples_.size(); ++t)
    kud[t] = cross_gram(block.inputs, samples_[t], vocab.points(), signal_scale);
  for (std::size_t t = 0; t < samples_.size(); ++t) {
    outer_[t].noalias() += kud[t].transpose() * kud[t];
    target_[t].noalias() += kud[t].transpose() * block.targets;
  }
  ++blocks_absorbed_;
}

NaturalRepresentation natural_from_moments(const MomentParameters& moments) {
  const Eigen::Index m = moments.mean.size();
  if (moments.cov.rows() != m || moments.cov.cols() != m)
    throw ContractViolation("moment parameters: covariance is not m x m");
  const auto llt = factorize(moments.cov, "covariance");
  return {symmetrized(llt.solve(Matrix::Identity(m, m))), llt.solve(moments.mean)};
}

MomentParameters moments_from_natural(const NaturalRepresentation& rep) {
  rep.validate();
  const Eigen::Index m = rep.size();
  const auto llt = factorize(rep.precision, "precision (corrupted or inconsistent representation)");
  return {llt.solve(rep.shift), symmetrized(llt.solve(Matrix::Identity(m, m)))};
}

NaturalRepresentation prior_natural(const StandardizedVocabulary& vocab) {
  return {vocab.gram_inverse(), Vector::Zero(vocab.size())};
}

Vector log_importance_weights(const ProjectionPosterior& qw, const SampleBank& bank) {
  qw.validate();
  if (qw.mu.rows() != bank.rows() || qw.mu.cols() != bank.cols())
    throw ContractViolation("projection posterior shape does not match the sample bank");
  const double log_sigma_sum = qw.sigma.array().log().sum();
  Vector out(bank.count());
  for (Eigen::Index t = 0; t < bank.count(); ++t) {
    const auto& w = bank.samples()[static_cast<std::size_t>(t)].array();
    const double quad_q = ((w - qw.mu.array()) / qw.sigma.array()).square().sum();
    const double quad_p = w.square().sum();
    out(t) = -log_sigma_sum - 0.5 * quad_q + 0.5 * quad_p;
  }
  return out;
}

Vector importance_weights(const ProjectionPosterior& qw, const SampleBank& bank) {
  const Vector logw = log_importance_weights(qw, bank);
  Vector w(logw.size());
  for (Eigen::Index t = 0; t < logw.size(); ++t) {
    w(t) = std::exp(logw(t));
    if (!std::isfinite(logw(t)) || !std::isfinite(w(t)))
      throw std::domain_error("importance weight of sample " + std::to_string(t) +
                              " is not finite (log ratio " + std::to_string(logw(t)) + ")");
  }
  return w;
}

double effective_sample_size(const Vector& log_weights) {
  if (log_weights.size() == 0) return 0.0;
  const double top = log_weights.maxCoeff();
  const Eigen::ArrayXd scaled = (log_weights.array() - top).exp();
  return scaled.sum() * scaled.sum() / scaled.square().sum();
}

Vector normalized_weights(const Vector& log_weights) {
  const double top = log_weights.maxCoeff();
  Vector w = (log_weights.array() - top).exp().matrix();
  return w / w.sum();
}

NaturalRepresentation representation_from_caches(const SampleBank& bank, const Vector& weights,
                                                  const StandardizedVocabulary& vocab,
                                                  double noise_std) {
  if (weights.size() != bank.count())
    throw ContractViolation("weight count does not match the sample bank");
  const Eigen::Index m = vocab.size();
  Matrix outer = Matrix::Zero(m, m);
  Vector target = Vector::Zero(m);
  for (Eigen::Index t = 0; t < bank.count(); ++t) {
    outer += weights(t) * bank.outer_sums()[static_cast<std::size_t>(t)];
    target += weights(t) * bank.target_sums()[static_cast<std::size_t>(t)];
  }
  const double scale = 1.0 / (static_cast<double>(bank.count()) * noise_std * noise_std);
  const Matrix& inv = vocab.gram_inverse();
  NaturalRepresentation rep;
  rep.precision = inv + symmetrized(scale * (inv * outer * inv));
  rep.shift = scale * (inv * target);
  return rep;
}

BlockSummary block_summary(const Block& block, const SampleBank& bank, const Vector& weights,
                           const StandardizedVocabulary& vocab, double signal_scale,
                           double noise_std) {
  check_block(block, bank.cols());
  if (weights.size() != bank.count())
    throw ContractViolation("weight count does not match the sample bank");
  const Eigen::Index m = vocab.size();
  Matrix outer = Matrix::Zero(m, m);
  Vector target = Vector::Zero(m);
  for (Eigen::Index t = 0; t < bank.count(); ++t) {
    const Matrix k = cross_gram(block.inputs, bank.samples()[static_cast<std::size_t>(t)],
                                vocab.points(), signal_scale);
    outer += weights(t) * (k.transpose() * k);
    target += weights(t) * (k.transpose() * block.targets);
  }
  const double scale = 1.0 / (static_cast<double>(bank.count()) * noise_std * noise_std);
  const Matrix& inv = vocab.gram_inverse();
  return {symmetrized(scale * (inv * outer * inv)), scale * (inv * target)};
}

BlockSummary exact_block_E(const Block& block, const ProjectionPosterior& qw,
                           const StandardizedVocabulary& vocab, double signal_scale,
                           double noise_std, std::size_t mc_samples, std::uint64_t seed) {
  qw.validate();
  check_block(block, qw.mu.cols());
  if (mc_samples < 1) throw ContractViolation("exact_block_E needs at least one sample");
  const Eigen::Index m = vocab.size();
  Rng rng(seed);
  Matrix outer = Matrix::Zero(m, m);
  Vector target = Vector::Zero(m);
  for (std::size_t s = 0; s < mc_samples; ++s) {
    const Matrix w = qw.mu + qw.sigma.cwiseProduct(standard_normal(rng, qw.mu.rows(), qw.mu.cols()));
    const Matrix k = cross_gram(block.inputs, w, vocab.points(), signal_scale);
    outer.noalias() += k.transpose() * k;
    target.noalias() += k.transpose() * block.targets;
  }
  const double scale = 1.0 / (static_cast<double>(mc_samples) * noise_std * noise_std);
  const Matrix& inv = vocab.gram_inverse();
  return {symmetrized(scale * (inv * outer * inv)), scale * (inv * target)};
}

}  // namespace coolgp
