#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coolgp/agent.hpp"
#include "coolgp/posterior.hpp"

namespace coolgp::verify {

/// One measured quantity compared against a pinned threshold.
struct Check {
  std::string name;
  double measured = 0.0;
  std::string relation;  ///< "<=", ">=", "in"
  double lower = 0.0;
  double upper = 0.0;
  bool passed = false;
  std::string detail;
};

Check at_most(std::string name, double measured, double bound, std::string detail = {});
Check at_least(std::string name, double measured, double bound, std::string detail = {});
Check within(std::string name, double measured, double lower, double upper, std::string detail = {});

struct SuiteReport {
  std::string suite;
  std::vector<Check> checks;
  double seconds = 0.0;

  bool passed() const;
  std::string format() const;
};

struct SuiteOptions {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

const std::vector<std::string>& suite_names();

/// Runs a named suite. Throws ConfigError for an unknown name.
SuiteReport run_suite(const std::string& name, const SuiteOptions& options);

/// Least-squares slope of log(y) against log(x).
double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Small regression problem shared by the suites: inputs uniform on
/// [-1, 1]^dim, targets a smooth function plus noise.
std::vector<Block> toy_blocks(std::size_t count, Eigen::Index block_size, Eigen::Index dim,
                              double noise_std, std::uint64_t seed);

/// q(W) with means N(0, mean_scale^2) and standard deviations uniform in
/// [sigma_low, sigma_high].
ProjectionPosterior random_qw(Eigen::Index rows, Eigen::Index cols, double mean_scale,
                              double sigma_low, double sigma_high, std::uint64_t seed);

/// Importance-sampled representation error against a Monte Carlo oracle.
struct RepresentationScaling {
  std::vector<std::size_t> bank_sizes = {8, 32, 128, 512};
  std::size_t trials = 50;
  std::size_t oracle_samples = 1'000'000;
  Eigen::Index vocab_size = 5;
  Eigen::Index dim = 2;
  Eigen::Index block_size = 20;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct ScalingResult {
  std::vector<double> x;
  std::vector<double> median_error;
  double slope = 0.0;
};

ScalingResult representation_scaling(const RepresentationScaling& params);

/// Error of the fused approximation against the fused oracle as the number of
/// agents grows at a fixed bank size.
struct FusionScaling {
  std::vector<std::size_t> agent_counts = {2, 4, 8, 16};
  std::size_t bank_size = 16;
  std::size_t trials = 30;
  std::size_t oracle_samples = 100'000;
  Eigen::Index vocab_size = 5;
  Eigen::Index dim = 2;
  Eigen::Index block_size = 20;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct FusionScalingResult {
  ScalingResult scaling;
  /// Largest ratio of fused error to the sum of per-agent errors (<= 1 expected).
  double max_triangle_ratio = 0.0;
};

FusionScalingResult fusion_scaling(const FusionScaling& params);

/// Per-coordinate comparison of the mean single-block stochastic gradient
/// against the full-batch gradient.
struct GradientUnbiasedness {
  std::size_t blocks = 5;
  std::size_t draws = 500;
  Eigen::Index vocab_size = 5;
  Eigen::Index dim = 2;
  Eigen::Index block_size = 10;
  std::uint64_t seed = 0;
};

struct UnbiasednessResult {
  /// max over coordinates of |mean - target| / standard error.
  double max_z = 0.0;
  std::size_t coordinates = 0;
  std::size_t within_3se = 0;
};

UnbiasednessResult gradient_unbiasedness(const GradientUnbiasedness& params);

/// Elementwise mean of the importance-sampled representation over many banks
/// against a Monte Carlo oracle of the same quantity.
struct RepresentationUnbiasedness {
  std::size_t banks = 200;
  std::size_t bank_size = 16;
  std::size_t oracle_samples = 100'000;
  Eigen::Index vocab_size = 4;
  Eigen::Index dim = 2;
  Eigen::Index block_size = 10;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

UnbiasednessResult representation_unbiasedness(const RepresentationUnbiasedness& params);

/// Analytic ELBO gradient against central finite differences.
struct GradientCheck {
  Eigen::Index vocab_size = 5;
  Eigen::Index dim = 2;
  Eigen::Index block_size = 20;
  std::size_t grad_samples = 2;
  double step = 1e-5;
  std::uint64_t seed = 0;
};

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

/// Relative error |a - b| / max(|a|, |b|, 1e-6).
double relative_error(double a, double b);

GradientCheckResult gradient_check(const GradientCheck& params);

/// Lossless message passing on random trees against direct fusion.
struct Consensus {
  std::vector<std::size_t> sizes = {2, 8, 32};
  std::size_t trees_per_size = 5;
  Eigen::Index vocab_size = 6;
  std::size_t extra_rounds = 3;
  std::uint64_t seed = 0;
};

struct ConsensusResult {
  /// max over agents of ||assembly - fuse_many||_max / ||fuse_many||_max.
  double max_error = 0.0;
  /// Largest change to any assembly caused by the extra rounds.
  double max_extra_round_change = 0.0;
  bool all_complete = true;
  std::size_t trees = 0;
};

ConsensusResult consensus(const Consensus& params);

/// Random natural representation: prior plus a random PSD data term.
NaturalRepresentation random_representation(const NaturalRepresentation& prior, std::uint64_t seed);

}  // namespace coolgp::verify
