#pragma once

// Federated orthogonal iteration: estimates the top-k left singular subspace
// of Y = sum_i w_i (1/n_i) sum_j a_ij b_ij^T without assembling Y, where each
// client i only ever touches its own pairs.

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "fedmix/linalg.hpp"
#include "fedmix/model.hpp"

namespace fedmix {

/// Bytes moved over the network, 8 bytes per real.
struct CommBytes {
  std::uint64_t up = 0;
  std::uint64_t down = 0;

  CommBytes& operator+=(const CommBytes& o) {
    up += o.up;
    down += o.down;
    return *this;
  }
};

inline constexpr std::uint64_t kBytesPerReal = 8;

/// One client's residual pairs, stored column-wise (d x n_i each).
struct ClientPairs {
  Matrix a;
  Matrix b;

  std::size_t size() const { return static_cast<std::size_t>(a.cols()); }
};

/// The pairs held by the participating clients, in ascending client order.
class ResidualPairProvider {
 public:
  ResidualPairProvider() = default;
  explicit ResidualPairProvider(std::vector<ClientPairs> clients);

  const std::vector<ClientPairs>& clients() const { return clients_; }
  /// w_i = n_i / sum_i n_i.
  const std::vector<double>& weights() const { return weights_; }
  Eigen::Index dim() const;
  /// Y = sum_i w_i (1/n_i) sum_j a_ij b_ij^T, assembled centrally (tests only).
  Matrix assemble() const;

 private:
  std::vector<ClientPairs> clients_;
  std::vector<double> weights_;
};

/// (y - <phi, theta>) * phi.
Vector residual_pair(const Eigen::Ref<const Vector>& phi, double y,
                     const Vector& theta);

/// Pairs built from rows (first[j], second[j]) of a client's data at theta.
ClientPairs make_client_pairs(const ClientDataset& client,
                              const std::vector<std::size_t>& first,
                              const std::vector<std::size_t>& second,
                              const Vector& theta);

struct FederatedOIResult {
  OrthonormalBasis basis;
  CommBytes comm;
};

/// Runs `rounds` (even) rounds of the federated orthogonal iteration from the
/// given orthonormal start. Throws DegenerateRoundError if the aggregate is
/// rank deficient in an odd round.
FederatedOIResult federated_orthogonal_iteration(const ResidualPairProvider& provider,
                                                 const OrthonormalBasis& start,
                                                 std::size_t rounds);

/// Same, with Q_0 drawn from `seed`.
FederatedOIResult federated_orthogonal_iteration(const ResidualPairProvider& provider,
                                                 Eigen::Index k, std::size_t rounds,
                                                 std::uint64_t seed);

/// E[Y] at theta: sum_j p_j Sigma_j (theta*_j - theta)(theta*_j - theta)^T Sigma_j.
/// Requires the identity feature map (covariance diagonals of dimension d).
Matrix expected_moment_matrix(const Vector& theta, const GroundTruth& truth);

}  // namespace fedmix
