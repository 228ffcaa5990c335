#include <doctest.h>

#include <cmath>
#include <numeric>

#include "coolgp/errors.hpp"
#include "coolgp/posterior.hpp"
#include "coolgp/rng.hpp"
#include "oracles.hpp"

using namespace coolgp;

TEST_CASE("natural and moment parameters round trip") {
  SUBCASE("identity") {
    const auto r = natural_from_moments({Vector::Zero(3), Matrix::Identity(3, 3)});
    CHECK(r.precision == Matrix::Identity(3, 3));
    CHECK(r.shift == Vector::Zero(3));
    const auto m = moments_from_natural(r);
    CHECK(m.cov == Matrix::Identity(3, 3));
    CHECK(m.mean == Vector::Zero(3));
  }
  SUBCASE("diagonal") {
    const auto r = natural_from_moments({Vector::Constant(4, 2.0), 2.0 * Matrix::Identity(4, 4)});
    CHECK(oracle::rel_max_diff(r.precision, Matrix(0.5 * Matrix::Identity(4, 4))) < 1e-15);
    CHECK(oracle::rel_max_diff(r.shift, Vector(Vector::Ones(4))) < 1e-15);
  }
  SUBCASE("random SPD") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Matrix cov = oracle::random_spd(5, seed);
      const Vector mean = oracle::random_spd(5, seed + 100).col(0);
      const auto back = moments_from_natural(natural_from_moments({mean, cov}));
      CHECK(oracle::rel_fro(back.cov, cov) < 1e-8);
      CHECK((back.mean - mean).norm() / mean.norm() < 1e-8);
    }
  }
  SUBCASE("singular and indefinite inputs") {
    Matrix singular = Matrix::Zero(2, 2);
    singular(0, 0) = 1.0;
    CHECK_THROWS_AS(natural_from_moments({Vector::Zero(2), singular}), FactorizationError);
    NaturalRepresentation bad{-Matrix::Identity(2, 2), Vector::Zero(2)};
    CHECK_THROWS_AS(moments_from_natural(bad), FactorizationError);
  }
}

TEST_CASE("prior representation") {
  SUBCASE("single inducing input") {
    Matrix z(1, 2);
    z << 0.3, -0.2;
    const StandardizedVocabulary vocab(z, 1e-8);
    const auto r = prior_natural(vocab);
    CHECK(r.precision(0, 0) == doctest::Approx(1.0 / (1.0 + 1e-8)).epsilon(1e-15));
    CHECK(r.shift(0) == 0.0);
  }
  SUBCASE("three inducing inputs against a cofactor inverse") {
    Matrix z(3, 2);
    z << 0.0, 0.0, 1.0, 0.5, -0.7, 1.2;
    const StandardizedVocabulary vocab(z, 1e-8);
    const auto r = prior_natural(vocab);
    CHECK(oracle::rel_max_diff(r.precision, oracle::inverse3(oracle::jittered_kuu(z, 1e-8))) < 1e-12);
    CHECK(r.shift.cwiseAbs().maxCoeff() == 0.0);
    const auto m = moments_from_natural(r);
    CHECK(oracle::rel_max_diff(m.cov, oracle::jittered_kuu(z, 1e-8)) < 1e-8);
  }
}

TEST_CASE("sample bank construction") {
  SampleBank a(5, 2, 3, 42, 4), b(5, 2, 3, 42, 4), c(5, 2, 3, 43, 4);
  for (std::size_t t = 0; t < 5; ++t) CHECK(a.samples()[t] == b.samples()[t]);
  bool differs = false;
  for (std::size_t t = 0; t < 5; ++t) differs = differs || a.samples()[t] != c.samples()[t];
  CHECK(differs);
  for (const auto& o : a.outer_sums()) CHECK(o.cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(SampleBank(0, 2, 2, 1, 4), ContractViolation);

  SampleBank big(10'000, 2, 2, 7, 1);
  double sum = 0.0, sum_sq = 0.0;
  for (const auto& w : big.samples()) {
    sum += w.sum();
    sum_sq += w.squaredNorm();
  }
  const double n = 40'000.0;
  const double mean = sum / n;
  CHECK(std::abs(mean) <= 0.05);
  CHECK(std::abs(sum_sq / n - mean * mean - 1.0) <= 0.05);
}

TEST_CASE("absorbing blocks into the bank") {
  Matrix z(2, 2);
  z << 0.0, 0.0, 1.0, -0.5;
  const StandardizedVocabulary vocab(z);
  Matrix w(2, 2);
  w << 0.8, 0.1, -0.3, 1.1;

  SUBCASE("hand instance with one projection") {
    SampleBank bank = SampleBank::pinned(w, 2);
    Block block{Matrix(2, 2), Vector(2)};
    block.inputs << 0.2, -0.4, 0.9, 0.3;
    block.targets << 1.5, -0.25;
    bank.absorb(block, vocab, 1.4);
    const Matrix k = oracle::kdu(block.inputs, w, z, 1.4);
    Matrix outer(2, 2);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) outer(i, j) = k(0, i) * k(0, j) + k(1, i) * k(1, j);
    Vector target(2);
    for (int i = 0; i < 2; ++i) target(i) = k(0, i) * 1.5 + k(1, i) * -0.25;
    CHECK(oracle::rel_max_diff(bank.outer_sums()[0], outer) < 1e-14);
    CHECK(oracle::rel_max_diff(bank.target_sums()[0], target) < 1e-14);
    CHECK(bank.blocks_absorbed() == 1);
  }
  SUBCASE("zero observation leaves the target sums at zero") {
    SampleBank bank(4, 2, 2, 9, 2);
    Block block{Matrix(1, 2), Vector::Zero(1)};
    block.inputs << 0.5, 0.5;
    bank.absorb(block, vocab, 1.0);
    for (const auto& t : bank.target_sums()) CHECK(t.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("order of blocks does not matter") {
    const auto blocks = oracle::random_blocks(2, 5, 2, 17);
    SampleBank ab(6, 2, 2, 3, 2), ba(6, 2, 2, 3, 2);
    ab.absorb(blocks[0], vocab, 1.0);
    ab.absorb(blocks[1], vocab, 1.0);
    ba.absorb(blocks[1], vocab, 1.0);
    ba.absorb(blocks[0], vocab, 1.0);
    for (std::size_t t = 0; t < 6; ++t) {
      CHECK(oracle::rel_max_diff(ab.outer_sums()[t], ba.outer_sums()[t]) < 1e-12);
      CHECK(oracle::rel_max_diff(ab.target_sums()[t], ba.target_sums()[t]) < 1e-12);
    }
  }
  SUBCASE("mismatched block leaves the bank unchanged") {
    SampleBank bank(3, 2, 2, 1, 2);
    Block bad{Matrix::Zero(2, 3), Vector::Zero(2)};
    CHECK_THROWS_AS(bank.absorb(bad, vocab, 1.0), ContractViolation);
    CHECK(bank.blocks_absorbed() == 0);
    for (const auto& o : bank.outer_sums()) CHECK(o.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("importance weights") {
  SUBCASE("q equal to p gives unit weights") {
    SampleBank bank(20, 2, 3, 5, 1);
    const Vector w = importance_weights(ProjectionPosterior::prior(2, 3), bank);
    CHECK((w.array() - 1.0).abs().maxCoeff() <= 1e-15);
    CHECK(effective_sample_size(log_importance_weights(ProjectionPosterior::prior(2, 3), bank)) ==
          doctest::Approx(20.0));
  }
  SUBCASE("scalar ratio at the mode") {
    SampleBank bank = SampleBank::pinned(Matrix::Zero(1, 1), 1);
    ProjectionPosterior qw{Matrix::Zero(1, 1), Matrix::Constant(1, 1, 2.0)};
    CHECK(importance_weights(qw, bank)(0) == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("weights average to one under the prior") {
    Rng rng(77);
    ProjectionPosterior qw{0.4 * standard_normal(rng, 2, 2), Matrix::Constant(2, 2, 0.85)};
    SampleBank bank(100'000, 2, 2, 8, 1);
    CHECK(std::abs(importance_weights(qw, bank).mean() - 1.0) <= 0.05);
  }
  SUBCASE("non-finite weight names the sample") {
    SampleBank bank = SampleBank::pinned(Matrix::Zero(1, 1), 1);
    ProjectionPosterior qw{Matrix::Zero(1, 1), Matrix::Constant(1, 1, 1e-320)};
    CHECK_THROWS_WITH_AS(importance_weights(qw, bank), doctest::Contains("sample 0"), std::domain_error);
  }
}

TEST_CASE("representation from caches") {
  const auto vocab = StandardizedVocabulary::sample(5, 2, 21);
  const auto prior = prior_natural(vocab);

  SUBCASE("no data gives exactly the prior") {
    SampleBank bank(7, 2, 2, 4, 5);
    const auto r = representation_from_caches(bank, Vector::Ones(7), vocab, 0.2);
    CHECK(r.precision == prior.precision);
    CHECK(r.shift == prior.shift);
  }
  SUBCASE("pinned projection matches the full-data posterior") {
    Matrix w(2, 2);
    w << 1.1, 0.2, -0.4, 0.7;
    SampleBank bank = SampleBank::pinned(w, 5);
    Block block{Matrix(2, 2), Vector(2)};
    block.inputs << 0.3, -0.8, -0.1, 0.6;
    block.targets << 0.9, -1.3;
    bank.absorb(block, vocab, 1.0);
    const auto m = moments_from_natural(representation_from_caches(bank, Vector::Ones(1), vocab, 0.3));
    const auto ref = oracle::direct_posterior(block.inputs, block.targets, w, vocab.points(), vocab.jitter(), 1.0, 0.3);
    CHECK(oracle::rel_fro(m.cov, ref.cov) < 1e-8);
    CHECK((m.mean - ref.mean).norm() / ref.mean.norm() < 1e-8);
  }
  SUBCASE("doubling the noise scales the data terms by a quarter") {
    SampleBank bank(6, 2, 2, 12, 5);
    for (const auto& b : oracle::random_blocks(2, 4, 2, 5)) bank.absorb(b, vocab, 1.0);
    const Vector w = Vector::LinSpaced(6, 0.5, 1.5);
    const auto r1 = representation_from_caches(bank, w, vocab, 0.2);
    const auto r2 = representation_from_caches(bank, w, vocab, 0.4);
    const Matrix d1 = r1.precision - prior.precision, d2 = r2.precision - prior.precision;
    CHECK(oracle::rel_max_diff(Matrix(4.0 * d2), d1) < 1e-12);
    CHECK(oracle::rel_max_diff(Vector(4.0 * r2.shift), r1.shift) < 1e-12);
  }
}

TEST_CASE("Monte Carlo block summary") {
  const auto vocab = StandardizedVocabulary::sample(4, 2, 8);
  const Block block = oracle::random_blocks(1, 6, 2, 31).front();

  SUBCASE("point-mass q(W) collapses to the pinned summary") {
    Matrix mu(2, 2);
    mu << 0.6, -0.2, 0.3, 1.0;
    ProjectionPosterior qw{mu, Matrix::Constant(2, 2, 1e-12)};
    const auto e = exact_block_E(block, qw, vocab, 1.0, 0.2, 50, 1);
    SampleBank bank = SampleBank::pinned(mu, 4);
    const auto ref = block_summary(block, bank, Vector::Ones(1), vocab, 1.0, 0.2);
    CHECK(oracle::rel_max_diff(e.e1, ref.e1) < 1e-6);
    CHECK(oracle::rel_max_diff(e.e2, ref.e2) < 1e-6);
  }
  SUBCASE("zero targets give a zero shift") {
    Block zero = block;
    zero.targets.setZero();
    const auto e = exact_block_E(zero, ProjectionPosterior::prior(2, 2), vocab, 1.0, 0.2, 20, 2);
    CHECK(e.e2.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("standard error halves when samples quadruple") {
    auto spread = [&](std::size_t samples) {
      std::vector<Vector> draws;
      for (std::uint64_t r = 0; r < 50; ++r) {
        const auto e = exact_block_E(block, ProjectionPosterior::prior(2, 2), vocab, 1.0, 0.2, samples, 1000 * samples + r);
        Vector flat(e.e1.size() + e.e2.size());
        flat << e.e1.reshaped(), e.e2;
        draws.push_back(flat);
      }
      Vector mean = Vector::Zero(draws.front().size());
      for (const auto& d : draws) mean += d / 50.0;
      Vector var = Vector::Zero(mean.size());
      for (const auto& d : draws) var += (d - mean).cwiseAbs2() / 49.0;
      return Vector(var.cwiseSqrt());
    };
    const Vector small = spread(100), large = spread(400);
    const double ratio = (large.array() / small.array()).mean();
    CHECK(ratio >= 0.35);
    CHECK(ratio <= 0.75);
  }
}
