#include "coolgp/kernel.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "coolgp/errors.hpp"
#include "coolgp/rng.hpp"

namespace coolgp {

namespace {

void require_same_dim(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b)
    throw ContractViolation(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                            " vs " + std::to_string(b) + ")");
}

// Pairwise squared distances between rows of a and rows of b, computed from
// explicit differences so coincident points give exactly zero.
Matrix squared_distances(const Matrix& a, const Matrix& b) {
  Matrix d(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j)
    d.col(j) = (a.rowwise() - b.row(j)).rowwise().squaredNorm();
  return d;
}

}  // namespace

StandardizedVocabulary::StandardizedVocabulary(Matrix points, double jitter)
    : points_(std::move(points)), jitter_(jitter) {
  if (points_.rows() == 0 || points_.cols() == 0)
    throw ContractViolation("vocabulary needs at least one point of positive dimension");
  if (!(jitter_ >= 0.0) || !std::isfinite(jitter_))
    throw ContractViolation("vocabulary jitter must be finite and nonnegative");
  const Eigen::Index m = points_.rows();
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j)
      if (points_.row(i) == points_.row(j))
        throw ContractViolation("vocabulary points " + std::to_string(i) + " and " +
                                std::to_string(j) + " coincide");

  gram_.resize(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    gram_(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = k_uu(points_.row(i).transpose(), points_.row(j).transpose());
      gram_(i, j) = v;
      gram_(j, i) = v;
    }
  }
  jittered_gram_ = gram_;
  jittered_gram_.diagonal().array() += jitter_;
  factor_.compute(jittered_gram_);
  if (factor_.info() != Eigen::Success)
    throw FactorizationError("Kuu + jitter*I is not positive definite; increase the jitter");
  gram_inverse_ = factor_.solve(Matrix::Identity(m, m));
  gram_inverse_ = 0.5 * (gram_inverse_ + gram_inverse_.transpose()).eval();
}

StandardizedVocabulary StandardizedVocabulary::sample(Eigen::Index size, Eigen::Index dim,
                                                      std::uint64_t seed, double jitter) {
  if (size < 1 || dim < 1) throw ContractViolation("vocabulary size and dimension must be >= 1");
  Rng rng(seed);
  const Eigen::Index pool = 2 * size;
  const Matrix candidates = standard_normal(rng, pool, dim);

  // Farthest-point thinning, starting from the candidate closest to the origin.
  std::vector<Eigen::Index> chosen;
  chosen.reserve(static_cast<std::size_t>(size));
  Eigen::Index first = 0;
  candidates.rowwise().squaredNorm().minCoeff(&first);
  chosen.push_back(first);
  Vector nearest = (candidates.rowwise() - candidates.row(first)).rowwise().squaredNorm();
  while (static_cast<Eigen::Index>(chosen.size()) < size) {
    Eigen::Index next = 0;
    nearest.maxCoeff(&next);
    chosen.push_back(next);
    nearest = nearest.cwiseMin((candidates.rowwise() - candidates.row(next)).rowwise().squaredNorm());
  }

  Matrix points(size, dim);
  for (Eigen::Index i = 0; i < size; ++i) points.row(i) = candidates.row(chosen[static_cast<std::size_t>(i)]);
  return StandardizedVocabulary(std::move(points), jitter);
}

void DomainParams::validate() const {
  if (!(signal_scale > 0.0) || !std::isfinite(signal_scale))
    throw ContractViolation("signal scale must be positive");
  if (!(noise_std > 0.0) || !std::isfinite(noise_std))
    throw ContractViolation("noise std must be positive");
}

double k_uu(ConstVectorRef z, ConstVectorRef z2) {
  require_same_dim(z.size(), z2.size(), "k_uu");
  return std::exp(-0.5 * (z - z2).squaredNorm());
}

double k_fu(ConstVectorRef x, ConstVectorRef z, const DomainParams& params) {
  require_same_dim(params.projection.cols(), x.size(), "k_fu input");
  require_same_dim(params.projection.rows(), z.size(), "k_fu projection");
  const Vector wx = params.projection * x;
  return params.signal_scale * std::exp(-0.5 * (wx - z).squaredNorm());
}

double k_ff(ConstVectorRef x, ConstVectorRef x2, const DomainParams& params) {
  require_same_dim(x.size(), x2.size(), "k_ff");
  require_same_dim(params.projection.cols(), x.size(), "k_ff input");
  const Vector diff = params.projection * (x - x2);
  return params.signal_scale * params.signal_scale * std::exp(-0.5 * diff.squaredNorm());
}

Matrix gram_uu(const Matrix& a, const Matrix& b) {
  require_same_dim(a.cols(), b.cols(), "gram_uu");
  return (-0.5 * squared_distances(a, b)).array().exp().matrix();
}

Matrix cross_gram(const Matrix& inputs, const Matrix& projection, const Matrix& inducing,
                  double signal_scale) {
  require_same_dim(projection.cols(), inputs.cols(), "cross_gram input");
  require_same_dim(projection.rows(), inducing.cols(), "cross_gram projection");
  if (inputs.rows() == 0) return Matrix(0, inducing.rows());
  const Matrix warped = inputs * projection.transpose();
  return signal_scale * (-0.5 * squared_distances(warped, inducing)).array().exp().matrix();
}

Matrix gram_cross(const Matrix& inputs, const StandardizedVocabulary& vocab,
                  const DomainParams& params) {
  return cross_gram(inputs, params.projection, vocab.points(), params.signal_scale);
}

}  // namespace coolgp
