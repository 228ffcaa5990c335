#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Dense>

namespace coolgp {

using Rng = std::mt19937_64;

/// Derives an independent 64-bit seed for a named sub-stream of a master seed.
///
/// Sub-streams let one component (dispatch, loss, bank, gradient, ...) be
/// varied without perturbing the draws seen by any other component. The
/// optional index splits a stream further, e.g. one bank per agent.
std::uint64_t substream_seed(std::uint64_t master, std::string_view name, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t master, std::string_view name, std::uint64_t index = 0) {
  return Rng(substream_seed(master, name, index));
}

/// Matrix of i.i.d. standard normal draws.
Eigen::MatrixXd standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols);

}  // namespace coolgp
