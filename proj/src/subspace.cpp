#include "fedmix/subspace.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "fedmix/error.hpp"

namespace fedmix {

ResidualPairProvider::ResidualPairProvider(std::vector<ClientPairs> clients)
    : clients_(std::move(clients)) {
  if (clients_.empty()) throw DimensionError("ResidualPairProvider: no clients");
  const Eigen::Index d = clients_.front().a.rows();
  double total = 0.0;
  for (const auto& c : clients_) {
    if (c.a.rows() != d || c.b.rows() != d || c.a.cols() != c.b.cols() || c.a.cols() == 0)
      throw DimensionError("ResidualPairProvider: inconsistent pair shapes");
    total += static_cast<double>(c.size());
  }
  weights_.reserve(clients_.size());
  double sum = 0.0;
  for (const auto& c : clients_) {
    weights_.push_back(static_cast<double>(c.size()) / total);
    sum += weights_.back();
  }
  // Rounding in the running sum grows with the client count.
  if (std::abs(sum - 1.0) > 1e-12 + 4.0 * std::numeric_limits<double>::epsilon() *
                                        static_cast<double>(clients_.size()))
    throw DimensionError("ResidualPairProvider: weights do not sum to 1");
}

Eigen::Index ResidualPairProvider::dim() const {
  return clients_.empty() ? 0 : clients_.front().a.rows();
}

Matrix ResidualPairProvider::assemble() const {
  const Eigen::Index d = dim();
  Matrix y = Matrix::Zero(d, d);
  for (std::size_t i = 0; i < clients_.size(); ++i) {
    const auto& c = clients_[i];
    y += (weights_[i] / static_cast<double>(c.size())) * (c.a * c.b.transpose());
  }
  return y;
}

Vector residual_pair(const Eigen::Ref<const Vector>& phi, double y,
                     const Vector& theta) {
  if (phi.size() != theta.size())
    throw DimensionError("residual_pair: feature and parameter dimensions differ");
  return (y - phi.dot(theta)) * phi;
}

ClientPairs make_client_pairs(const ClientDataset& client,
                              const std::vector<std::size_t>& first,
                              const std::vector<std::size_t>& second,
                              const Vector& theta) {
  if (first.size() != second.size())
    throw DimensionError("make_client_pairs: index lists differ in length");
  const Eigen::Index d = client.features.cols();
  if (theta.size() != d) throw DimensionError("make_client_pairs: theta dimension");
  const auto n = static_cast<Eigen::Index>(first.size());
  ClientPairs pairs{Matrix(d, n), Matrix(d, n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto r1 = static_cast<Eigen::Index>(first[j]);
    const auto r2 = static_cast<Eigen::Index>(second[j]);
    pairs.a.col(j) = residual_pair(client.features.row(r1).transpose(),
                                   client.responses(r1), theta);
    pairs.b.col(j) = residual_pair(client.features.row(r2).transpose(),
                                   client.responses(r2), theta);
  }
  return pairs;
}

FederatedOIResult federated_orthogonal_iteration(const ResidualPairProvider& provider,
                                                 const OrthonormalBasis& start,
                                                 std::size_t rounds) {
  if (rounds % 2 != 0)
    throw DimensionError("federated_orthogonal_iteration: round count must be even");
  const Eigen::Index d = provider.dim();
  const Eigen::Index k = start.rank();
  if (start.dim() != d || k > d)
    throw DimensionError("federated_orthogonal_iteration: start basis shape");

  const auto& clients = provider.clients();
  const auto& weights = provider.weights();
  const std::uint64_t block = static_cast<std::uint64_t>(d * k) * kBytesPerReal;

  FederatedOIResult out;
  Matrix q = start.columns();
  Matrix aggregate(d, k);
  Matrix message(d, k);
  Matrix inner;
  for (std::size_t t = 0; t < rounds; ++t) {
    // Broadcast Q_t; each client answers with (1/n_i) sum_j b a^T Q on even
    // rounds and (1/n_i) sum_j a b^T Q on odd rounds.
    out.comm.down += block;
    const bool even = t % 2 == 0;
    aggregate.setZero();
    for (std::size_t i = 0; i < clients.size(); ++i) {
      const auto& c = clients[i];
      if (even) {
        inner.noalias() = c.a.transpose() * q;
        message.noalias() = c.b * inner;
      } else {
        inner.noalias() = c.b.transpose() * q;
        message.noalias() = c.a * inner;
      }
      aggregate += (weights[i] / static_cast<double>(c.size())) * message;
      out.comm.up += block;
    }
    if (even) {
      q = aggregate;
    } else {
      try {
        q = qr_orthonormalize(aggregate).columns();
      } catch (const RankDeficientError&) {
        throw DegenerateRoundError(
            t, "federated_orthogonal_iteration: rank-deficient aggregate at round " +
                   std::to_string(t));
      }
    }
  }
  out.basis = OrthonormalBasis(std::move(q));
  return out;
}

FederatedOIResult federated_orthogonal_iteration(const ResidualPairProvider& provider,
                                                 Eigen::Index k, std::size_t rounds,
                                                 std::uint64_t seed) {
  if (k < 1 || k > provider.dim())
    throw DimensionError("federated_orthogonal_iteration: need 1 <= k <= d");
  return federated_orthogonal_iteration(
      provider, random_orthonormal(provider.dim(), k, seed), rounds);
}

Matrix expected_moment_matrix(const Vector& theta, const GroundTruth& truth) {
  const Eigen::Index d = theta.size();
  if (truth.thetas.size() != truth.p.size() ||
      truth.thetas.size() != truth.covariances.size())
    throw DimensionError("expected_moment_matrix: inconsistent ground truth");
  Matrix e = Matrix::Zero(d, d);
  for (std::size_t j = 0; j < truth.thetas.size(); ++j) {
    if (truth.thetas[j].size() != d || truth.covariances[j].size() != d)
      throw DimensionError("expected_moment_matrix: dimension mismatch");
    const Vector v = truth.covariances[j].cwiseProduct(truth.thetas[j] - theta);
    e += truth.p[j] * (v * v.transpose());
  }
  return e;
}

}  // namespace fedmix
