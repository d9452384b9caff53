#pragma once

// Federated Moment Descent: coarse estimation of all k cluster models from a
// handful of anchor clients with enough local data.
//
// Each round, every active anchor i
//   1. estimates the k-dimensional subspace holding the residual directions
//      Sigma_j (theta*_j - theta_i) by a federated orthogonal iteration over
//      residual pairs of m fresh two-point clients,
//   2. projects 2*ell fresh local residuals onto that subspace, forms the
//      k x k moment matrix A, and extracts its leading singular pair,
//   3. steps theta_i along the recovered direction with size
//      alpha * sigma_hat / (2 beta^2), or freezes once sigma_hat <= eps * Delta.
// The server then groups the anchors' final iterates by single linkage at
// Delta / 2 and averages each group.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedmix/linalg.hpp"
#include "fedmix/model.hpp"
#include "fedmix/subspace.hpp"

namespace fedmix {

struct Phase1Config {
  std::size_t k = 1;
  std::size_t n_H = 1;
  std::size_t m = 1;
  std::size_t ell = 1;
  std::size_t T = 1;
  std::size_t T1 = 2;
  std::size_t T2 = 1;
  double epsilon = 0.1;
  double delta_hint = 1.0;
  double alpha = 1.0;
  double beta = 1.0;
  Vector theta0;  // empty means the zero vector
  bool allow_data_reuse = false;
  std::optional<std::size_t> min_local;  // default 2*ell*T, or 2*ell with reuse

  std::size_t resolved_min_local() const;
};

/// Throws ConfigError unless 0 < epsilon <= 1/4, T1 is even and all counts
/// and constants are in range.
void validate(const Phase1Config& cfg);

struct AnchorState {
  std::size_t client_index = 0;
  Vector theta;
  double sigma_hat = 0.0;
  bool frozen = false;
  std::size_t rounds_used = 0;  // fresh-data cursor, in units of 2*ell rows
};

struct Phase1TraceRow {
  std::size_t round = 0;
  std::size_t anchor = 0;  // client index
  double sigma_hat = 0.0;
  std::optional<double> residual_true;  // ||Sigma_z (theta*_z - theta_{i,t})||
  std::optional<double> residual_next;  // same at theta_{i,t+1}
  std::optional<double> delta_max;      // max_j ||theta*_j - theta_{i,t}||
  double theta_norm = 0.0;              // ||theta_{i,t+1}||
  bool frozen = false;
  bool updated = false;
  CommBytes message;     // this anchor's traffic in this round
  CommBytes cumulative;  // running total over the whole phase
};

/// Uniform sample without replacement of n_H clients among those holding at
/// least min_local points; returned in ascending order.
std::vector<std::size_t> select_anchors(const std::vector<std::size_t>& sizes,
                                        std::size_t n_H, std::size_t min_local,
                                        std::uint64_t seed);

/// Rows (first, second) of the ell pairs an anchor uses at the given cursor.
struct PairRows {
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
};
PairRows anchor_pair_rows(std::size_t n_rows, std::size_t ell, std::size_t cursor,
                          bool allow_reuse);

/// A = (1/ell) sum_j (U^T eps(x_j, y_j, theta)) (U^T eps(x~_j, y~_j, theta))^T.
Matrix build_A(const ClientDataset& anchor, const Vector& theta,
               const OrthonormalBasis& basis, const PairRows& rows);

/// Draws each round's m fresh clients without replacement from the pool of
/// non-anchor clients with at least two points.
class FreshClientSampler {
 public:
  FreshClientSampler(const std::vector<std::size_t>& sizes,
                     const std::vector<std::size_t>& anchors, bool allow_reuse,
                     std::uint64_t seed);
  /// Ascending client indices. Throws InsufficientDataError if the unused
  /// pool is smaller than m.
  std::vector<std::size_t> draw(std::size_t m, std::size_t round);
  std::size_t available() const { return pool_.size(); }

 private:
  std::vector<std::size_t> pool_;
  bool allow_reuse_;
  std::uint64_t seed_;
};

/// One FedMD round over all anchors. Frozen anchors are left bit-identical.
/// `truth` only feeds diagnostics in the trace.
std::vector<Phase1TraceRow> fedmd_round(std::vector<AnchorState>& states,
                                        const std::vector<ClientDataset>& clients,
                                        const std::vector<std::size_t>& fresh_clients,
                                        const Phase1Config& cfg, std::size_t round,
                                        std::uint64_t seed, const GroundTruth* truth,
                                        CommBytes& running);

struct GreedyClusters {
  std::vector<Vector> centers;            // ordered by smallest member
  std::vector<std::size_t> assignment;    // component of each input point
};

/// Single-linkage components of the graph joining points closer than
/// `threshold`. Throws ClusteringError unless there are exactly k components
/// and every within-component distance is below 2 * threshold.
GreedyClusters greedy_cluster(const std::vector<Vector>& points, double threshold,
                              std::size_t k);

struct Phase1Result {
  std::vector<std::size_t> anchors;
  std::vector<AnchorState> states;
  std::vector<Phase1TraceRow> trace;
  CommBytes comm;
  std::optional<std::vector<Vector>> centers;  // empty on clustering failure
  std::size_t components = 0;
  std::string failure;  // empty on success
};

/// Anchor selection, T rounds, then greedy clustering at delta_hint / 2.
/// Clustering failure is reported in the result; data shortages throw.
Phase1Result run_fedmd(const std::vector<ClientDataset>& clients, const Phase1Config& cfg,
                       std::uint64_t seed, const GroundTruth* truth = nullptr);

}  // namespace fedmix
