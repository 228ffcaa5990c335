#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace coolgp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ConstVectorRef = Eigen::Ref<const Eigen::VectorXd>;
using ConstMatrixRef = Eigen::Ref<const Eigen::MatrixXd>;

inline constexpr double kDefaultJitter = 1e-8;

/// The m inducing inputs shared by every agent, together with the unit-scale
/// Gram matrix over them and its factorization.
///
/// Immutable after construction. The jittered Gram matrix `Kuu + jitter*I` is
/// what every solve uses; its explicit inverse is kept because the natural
/// parameter algebra is written in terms of it.
class StandardizedVocabulary {
 public:
  /// Rows of `points` are the inducing inputs. Throws ContractViolation on an
  /// empty or duplicated point set and FactorizationError if the jittered Gram
  /// matrix is not positive definite.
  explicit StandardizedVocabulary(Matrix points, double jitter = kDefaultJitter);

  /// Seeded construction: a pool of standard-normal candidates in R^dim is
  /// greedily thinned (farthest-point order) down to `size` points.
  static StandardizedVocabulary sample(Eigen::Index size, Eigen::Index dim, std::uint64_t seed,
                                       double jitter = kDefaultJitter);

  Eigen::Index size() const { return points_.rows(); }
  Eigen::Index dim() const { return points_.cols(); }
  double jitter() const { return jitter_; }

  const Matrix& points() const { return points_; }
  /// Unjittered Gram matrix, unit diagonal.
  const Matrix& gram() const { return gram_; }
  /// Gram matrix with jitter on the diagonal.
  const Matrix& jittered_gram() const { return jittered_gram_; }
  const Eigen::LLT<Matrix>& factor() const { return factor_; }
  /// Lower-triangular Cholesky factor of the jittered Gram matrix.
  Matrix lower_factor() const { return factor_.matrixL(); }
  /// (Kuu + jitter*I)^{-1}, symmetric.
  const Matrix& gram_inverse() const { return gram_inverse_; }

 private:
  Matrix points_;
  double jitter_;
  Matrix gram_;
  Matrix jittered_gram_;
  Eigen::LLT<Matrix> factor_;
  Matrix gram_inverse_;
};

/// Per-domain warp into the standardized domain plus signal and noise scales.
struct DomainParams {
  Matrix projection;  ///< q x d
  double signal_scale = 1.0;
  double noise_std = 0.1;

  /// Throws ContractViolation unless both scales are positive and finite.
  void validate() const;
};

/// Unit-scale squared-exponential kernel on the standardized domain.
double k_uu(ConstVectorRef z, ConstVectorRef z2);

/// Cross-covariance between f(x) in the domain and u(z) in the standardized domain.
double k_fu(ConstVectorRef x, ConstVectorRef z, const DomainParams& params);

/// Warped domain kernel, sigma_s^2 * k_uu(Wx, Wx2).
double k_ff(ConstVectorRef x, ConstVectorRef x2, const DomainParams& params);

/// Gram matrix of the unit-scale kernel between the rows of `a` and `b`.
Matrix gram_uu(const Matrix& a, const Matrix& b);

/// K_DU for inputs X (rows) under an explicit projection and signal scale.
Matrix cross_gram(const Matrix& inputs, const Matrix& projection, const Matrix& inducing,
                  double signal_scale);

/// K_DU, n x m, entry (i, j) = k_fu(X[i], Z[j]).
Matrix gram_cross(const Matrix& inputs, const StandardizedVocabulary& vocab,
                  const DomainParams& params);

}  // namespace coolgp
