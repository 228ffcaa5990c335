#include <doctest.h>

#include <cmath>
#include <random>

#include "coolgp/errors.hpp"
#include "coolgp/kernel.hpp"
#include "oracles.hpp"

using namespace coolgp;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST_CASE("k_uu closed-form values") {
  CHECK(k_uu(vec({0.3, -1.2}), vec({0.3, -1.2})) == 1.0);
  CHECK(k_uu(vec({0.0, 0.0}), vec({1.0, 1.0})) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(k_uu(vec({0.0, 0.0}), vec({1.0, 0.0})) == doctest::Approx(0.606531).epsilon(1e-6));
  CHECK_THROWS_AS(k_uu(vec({0.0}), vec({0.0, 1.0})), ContractViolation);
}

TEST_CASE("k_fu at zero distance, identity reduction and scaled value") {
  DomainParams p{Matrix::Identity(2, 2), 1.7, 0.1};
  CHECK(k_fu(vec({0.4, 0.2}), vec({0.4, 0.2}), p) == 1.7);

  Matrix w(2, 2);
  w << 0.3, -1.1, 2.0, 0.5;
  p.projection = w;
  const Vector x = vec({0.7, -0.4});
  CHECK(k_fu(x, w * x, p) == 1.7);

  DomainParams unit{Matrix::Identity(2, 2), 1.0, 0.1};
  CHECK(k_fu(vec({0.1, 0.9}), vec({-0.5, 0.2}), unit) == k_uu(vec({0.1, 0.9}), vec({-0.5, 0.2})));

  DomainParams two{Matrix::Identity(2, 2), 2.0, 0.1};
  CHECK(k_fu(vec({0.0, 0.0}), vec({1.0, 1.0}), two) == doctest::Approx(0.735759).epsilon(1e-6));
  CHECK_THROWS_AS(k_fu(vec({0.0, 0.0}), vec({1.0}), unit), ContractViolation);
}

TEST_CASE("k_ff matches the warped identity") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 200; ++trial) {
    Matrix w(3, 3);
    for (Eigen::Index i = 0; i < 9; ++i) w.data()[i] = g(rng);
    const double s = 0.5 + std::abs(g(rng));
    DomainParams p{w, s, 0.1};
    Vector x(3), x2(3);
    for (int i = 0; i < 3; ++i) x(i) = g(rng), x2(i) = g(rng);
    CHECK(std::abs(k_ff(x, x2, p) - s * s * k_uu(w * x, w * x2)) <= 1e-12);
    CHECK(k_ff(x, x, p) == s * s);
    CHECK(k_uu(x, x2) == k_uu(x2, x));
  }
}

TEST_CASE("gram_cross agrees with the scalar kernel") {
  const auto vocab = StandardizedVocabulary::sample(4, 2, 11);
  Matrix w(2, 2);
  w << 1.2, -0.3, 0.4, 0.9;
  DomainParams p{w, 1.3, 0.1};

  SUBCASE("empty input gives an empty matrix") {
    const Matrix k = gram_cross(Matrix(0, 2), vocab, p);
    CHECK(k.rows() == 0);
    CHECK(k.cols() == 4);
  }
  SUBCASE("point mapped onto an inducing input") {
    Matrix x(1, 2);
    x.row(0) = w.inverse() * vocab.points().row(0).transpose();
    const Matrix k = gram_cross(x, vocab, p);
    CHECK(k(0, 0) == doctest::Approx(1.3).epsilon(1e-14));
  }
  SUBCASE("random inputs, entrywise loop oracle") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-2, 2);
    for (int trial = 0; trial < 20; ++trial) {
      Matrix x(3, 2);
      for (Eigen::Index i = 0; i < 6; ++i) x.data()[i] = u(rng);
      const Matrix k = gram_cross(x, vocab, p);
      const Matrix ref = oracle::kdu(x, w, vocab.points(), 1.3);
      CHECK((k - ref).cwiseAbs().maxCoeff() <= 1e-14);
      for (Eigen::Index i = 0; i < 3; ++i)
        for (Eigen::Index j = 0; j < 4; ++j)
          CHECK(k(i, j) == doctest::Approx(k_fu(x.row(i).transpose(), vocab.points().row(j).transpose(), p)).epsilon(1e-14));
    }
  }
}

TEST_CASE("vocabulary invariants") {
  const auto vocab = StandardizedVocabulary::sample(6, 3, 2);
  CHECK(vocab.size() == 6);
  CHECK(vocab.dim() == 3);
  for (Eigen::Index i = 0; i < 6; ++i) {
    CHECK(vocab.gram()(i, i) == 1.0);
    for (Eigen::Index j = 0; j < 6; ++j) {
      CHECK(vocab.gram()(i, j) == vocab.gram()(j, i));
      CHECK(vocab.gram()(i, j) == doctest::Approx(k_uu(vocab.points().row(i).transpose(), vocab.points().row(j).transpose())));
    }
  }
  CHECK(oracle::rel_max_diff(Matrix(vocab.gram_inverse() * vocab.jittered_gram()), Matrix::Identity(6, 6)) < 1e-10);

  SUBCASE("duplicates and empty sets are rejected") {
    Matrix dup(2, 2);
    dup << 0.1, 0.2, 0.1, 0.2;
    CHECK_THROWS_AS(StandardizedVocabulary{dup}, ContractViolation);
    CHECK_THROWS_AS(StandardizedVocabulary(Matrix(0, 2)), ContractViolation);
  }
  SUBCASE("same seed, same points") {
    CHECK(StandardizedVocabulary::sample(6, 3, 2).points() == vocab.points());
    CHECK(StandardizedVocabulary::sample(6, 3, 3).points() != vocab.points());
  }
}

TEST_CASE("jittered gram factorizes up to 512 inducing inputs") {
  for (Eigen::Index m : {16, 64, 256, 512}) {
    for (Eigen::Index q : {2, 6}) {
      CAPTURE(m);
      CAPTURE(q);
      CHECK_NOTHROW(StandardizedVocabulary::sample(m, q, 99));
    }
  }
}
