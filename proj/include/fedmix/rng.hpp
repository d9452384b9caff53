#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include <Eigen/Core>

namespace fedmix {

using Rng = std::mt19937_64;

// Stream tags. Values are part of the reproducibility contract; never renumber.
enum class Stream : std::uint64_t {
  kCenters = 1,
  kSizes = 2,
  kCovariances = 3,
  kClient = 4,
  kAnchors = 5,
  kFreshClients = 6,
  kOrthoStart = 7,
  kPowerStart = 8,
  kPhase2Start = 9,
};

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Stable hash of a master seed and a sequence of integer keys.
std::uint64_t derive_seed(std::uint64_t seed,
                          std::initializer_list<std::uint64_t> keys) noexcept;

/// Generator for the stream identified by (seed, tag, keys...).
Rng make_stream(std::uint64_t seed, Stream tag,
                std::initializer_list<std::uint64_t> keys = {});

/// Uniform double in [0, 1) built from the top 53 bits; portable across
/// standard libraries.
double uniform01(Rng& rng);

/// Standard normal variate.
double standard_normal(Rng& rng);

/// Vector of i.i.d. standard normals.
Eigen::VectorXd normal_vector(Rng& rng, Eigen::Index n);

/// Matrix of i.i.d. standard normals, filled column by column.
Eigen::MatrixXd normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols);

}  // namespace fedmix
