#pragma once

// Mixture-of-linear-regressions data model and the seeded instance generator.
//
// Client i holds n_i rows phi(x_ij) drawn with E[phi phi^T] = Sigma_{z_i} and
// responses y_ij = <phi(x_ij), theta*_{z_i}> + noise, where z_i is the client's
// hidden cluster label. Cluster indices are 0-based throughout the library.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace fedmix {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Maps a raw point to the regression features.
struct FeatureMap {
  enum class Kind { kIdentity, kPolynomial };
  Kind kind = Kind::kIdentity;
  std::size_t raw_dim = 0;  // identity: equals the feature dimension
  std::size_t degree = 1;   // polynomial only

  static FeatureMap identity(std::size_t dim);
  static FeatureMap polynomial(std::size_t raw_dim, std::size_t degree);

  /// Number of features produced. For the polynomial map this is the number
  /// of monomials of total degree <= degree in raw_dim variables.
  std::size_t output_dim() const;
};

/// Evaluates the feature map. Polynomial monomials are ordered by total
/// degree, then lexicographically by exponent of the first variable
/// (descending); a scalar input x gives (1, x, x^2, ...).
Vector feature_map(const Vector& raw_point, const FeatureMap& spec);

/// How client data counts are assigned.
struct SizeSpec {
  enum class Kind { kExplicit, kUniform, kZipf, kBlocks };
  struct Block {
    std::size_t count = 0;
    std::size_t n = 0;
  };
  Kind kind = Kind::kExplicit;
  std::vector<std::size_t> sizes;  // kExplicit
  std::size_t n_min = 1;           // kUniform, kZipf
  std::size_t n_max = 1;
  double zipf_exponent = 1.0;      // kZipf
  std::vector<Block> blocks;       // kBlocks, in client order
};

/// Per-cluster diagonal feature covariance.
struct CovarianceSpec {
  enum class Kind { kIdentity, kExplicit, kRandom };
  Kind kind = Kind::kIdentity;
  std::vector<Vector> diagonals;  // kExplicit: one per cluster, raw dimension
};

struct MixtureConfig {
  std::size_t k = 1;
  std::size_t d = 1;
  std::size_t M = 1;
  SizeSpec sizes;
  std::vector<double> p;  // empty means uniform
  double sigma = 0.0;
  CovarianceSpec covariances;
  double alpha = 1.0;
  double beta = 1.0;
  double R = 1.0;
  double radius = 0.0;        // sphere radius for centers; 0 means R
  double delta_target = 0.0;  // centers are resampled until separation >= this
  std::vector<Vector> thetas;  // explicit centers; overrides sampling
  FeatureMap feature_map = FeatureMap::identity(1);
  std::uint64_t seed = 0;
};

/// Throws ConfigError unless every MixtureConfig invariant holds.
void validate(const MixtureConfig& cfg);

/// Mixing weights with the empty-means-uniform default applied.
std::vector<double> mixing_weights(const MixtureConfig& cfg);

struct GroundTruth {
  std::vector<Vector> thetas;
  std::vector<std::size_t> labels;
  std::vector<double> p;
  std::vector<Vector> covariances;  // diagonal, raw-point dimension
  double delta = 0.0;  // min pairwise separation; delta_target when k == 1
  double p_min = 0.0;
};

struct ClientDataset {
  Matrix features;  // n_i x d, rows are phi(x_ij)
  Vector responses;

  std::size_t size() const { return static_cast<std::size_t>(responses.size()); }
};

struct Instance {
  std::vector<ClientDataset> clients;
  GroundTruth truth;

  std::size_t dim() const;
  std::size_t num_clusters() const { return truth.thetas.size(); }
  std::vector<std::size_t> sizes() const;
  std::size_t total_size() const;
};

/// Client data counts implied by the size spec (deterministic in cfg.seed).
std::vector<std::size_t> resolve_sizes(const MixtureConfig& cfg);

/// Covariance diagonals implied by the covariance spec.
std::vector<Vector> resolve_covariances(const MixtureConfig& cfg);

/// Cluster parameters: explicit thetas, or uniform on the sphere of the
/// configured radius with rejection until the separation target is met.
std::vector<Vector> draw_centers(const MixtureConfig& cfg);

/// Samples a full instance. Bit-reproducible from cfg.
Instance generate_instance(const MixtureConfig& cfg);

/// Minimum Euclidean distance over unordered pairs. Requires at least two.
double min_separation(const std::vector<Vector>& thetas);

}  // namespace fedmix
