#include "oracles.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/LU>

namespace oracle {

double kfu(const Vector& x, const Vector& z, const Matrix& W, double signal_scale) {
  double sq = 0.0;
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    double wx = 0.0;
    for (Eigen::Index j = 0; j < W.cols(); ++j) wx += W(i, j) * x(j);
    sq += (wx - z(i)) * (wx - z(i));
  }
  return signal_scale * std::exp(-0.5 * sq);
}

Matrix kdu(const Matrix& X, const Matrix& W, const Matrix& Z, double signal_scale) {
  Matrix out(X.rows(), Z.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < Z.rows(); ++j)
      out(i, j) = kfu(X.row(i).transpose(), Z.row(j).transpose(), W, signal_scale);
  return out;
}

Matrix jittered_kuu(const Matrix& Z, double jitter) {
  Matrix k(Z.rows(), Z.rows());
  for (Eigen::Index i = 0; i < Z.rows(); ++i)
    for (Eigen::Index j = 0; j < Z.rows(); ++j) {
      double sq = 0.0;
      for (Eigen::Index c = 0; c < Z.cols(); ++c) sq += (Z(i, c) - Z(j, c)) * (Z(i, c) - Z(j, c));
      k(i, j) = std::exp(-0.5 * sq) + (i == j ? jitter : 0.0);
    }
  return k;
}

Matrix inverse3(const Matrix& a) {
  Matrix c(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const int r0 = (i + 1) % 3, r1 = (i + 2) % 3, c0 = (j + 1) % 3, c1 = (j + 2) % 3;
      c(i, j) = a(r0, c0) * a(r1, c1) - a(r0, c1) * a(r1, c0);
    }
  const double det = a(0, 0) * c(0, 0) + a(0, 1) * c(0, 1) + a(0, 2) * c(0, 2);
  return c.transpose() / det;
}

coolgp::MomentParameters direct_posterior(const Matrix& X, const Vector& y, const Matrix& W, const Matrix& Z,
                                          double jitter, double signal_scale, double noise_std) {
  const double s2 = noise_std * noise_std;
  const Matrix K = jittered_kuu(Z, jitter);
  const Matrix Kdu = kdu(X, W, Z, signal_scale);
  const Matrix C = Kdu.transpose() * Kdu;
  const Matrix middle = (s2 * K + C).fullPivLu().inverse();
  return {K * middle * Kdu.transpose() * y, s2 * K * middle * K};
}

Predictive direct_predictive(const Matrix& Xs, const coolgp::MomentParameters& q, const Matrix& W, const Matrix& Z,
                             double jitter, double signal_scale, double noise_std) {
  const Matrix Kinv = jittered_kuu(Z, jitter).fullPivLu().inverse();
  const Matrix Ksu = kdu(Xs, W, Z, signal_scale);
  Predictive out{Vector(Xs.rows()), Vector(Xs.rows())};
  for (Eigen::Index i = 0; i < Xs.rows(); ++i) {
    const Vector k = Ksu.row(i).transpose();
    out.mean(i) = k.dot(Kinv * q.mean);
    out.variance(i) = signal_scale * signal_scale - k.dot(Kinv * k) + k.dot(Kinv * q.cov * Kinv * k) +
                      noise_std * noise_std;
  }
  return out;
}

double expected_loglik(const Block& block, const Matrix& W, const coolgp::MomentParameters& q, const Matrix& Z,
                       double jitter, double signal_scale, double noise_std) {
  const double s2 = noise_std * noise_std;
  const auto n = static_cast<double>(block.size());
  const Matrix Kinv = jittered_kuu(Z, jitter).fullPivLu().inverse();
  const Matrix Kdu = kdu(block.inputs, W, Z, signal_scale);
  const Matrix A = Kdu * Kinv;
  const Vector r = block.targets - A * q.mean;
  const double nystrom_gap = n * signal_scale * signal_scale - (A * Kdu.transpose()).trace();
  const double spread = (A * q.cov * A.transpose()).trace();
  return -0.5 * n * std::log(2.0 * std::numbers::pi * s2) - r.squaredNorm() / (2.0 * s2) -
         (nystrom_gap + spread) / (2.0 * s2);
}

double kl_factored(const Matrix& mu, const Matrix& sigma) {
  double kl = 0.0;
  for (Eigen::Index i = 0; i < mu.rows(); ++i)
    for (Eigen::Index j = 0; j < mu.cols(); ++j)
      kl += 0.5 * (mu(i, j) * mu(i, j) + sigma(i, j) * sigma(i, j) - 1.0 - 2.0 * std::log(sigma(i, j)));
  return kl;
}

Matrix random_spd(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = g(rng);
  return a.transpose() * a + Matrix::Identity(n, n);
}

std::vector<Block> random_blocks(std::size_t count, Eigen::Index block_size, Eigen::Index dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> g(0.0, 0.1);
  std::vector<Block> out;
  for (std::size_t b = 0; b < count; ++b) {
    Block block{Matrix(block_size, dim), Vector(block_size)};
    for (Eigen::Index i = 0; i < block_size; ++i) {
      double s = 0.0;
      for (Eigen::Index j = 0; j < dim; ++j) s += (block.inputs(i, j) = u(rng));
      block.targets(i) = std::sin(2.0 * s) + g(rng);
    }
    out.push_back(std::move(block));
  }
  return out;
}

Block stack(const std::vector<Block>& blocks) {
  Eigen::Index n = 0;
  for (const auto& b : blocks) n += b.size();
  Block out{Matrix(n, blocks.front().dim()), Vector(n)};
  Eigen::Index row = 0;
  for (const auto& b : blocks) {
    for (Eigen::Index i = 0; i < b.size(); ++i, ++row) {
      out.inputs.row(row) = b.inputs.row(i);
      out.targets(row) = b.targets(i);
    }
  }
  return out;
}

double rel_max_diff(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

double rel_max_diff(const Vector& a, const Vector& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

double rel_fro(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

}  // namespace oracle
