#include "fedmix/phase1.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedmix/error.hpp"
#include "fedmix/metrics.hpp"
#include "fedmix/rng.hpp"

namespace fedmix {
namespace {

std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
}

// Partial Fisher-Yates: moves a uniform m-subset of `items` to the front.
void shuffle_prefix(std::vector<std::size_t>& items, std::size_t m, Rng& rng) {
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + uniform_index(rng, items.size() - i);
    std::swap(items[i], items[j]);
  }
}

std::uint64_t stream_seed(std::uint64_t seed, Stream tag, std::size_t a, std::size_t b) {
  Rng rng = make_stream(seed, tag, {a, b});
  return rng();
}

struct Direction {
  Vector step;  // U * beta, unit norm
  double sigma_hat = 0.0;
};

// Leading singular pair of A read off the power method on A A^T. The power
// method returns the Rayleigh quotient s_1(A)^2; s_1(A) itself estimates
// ||Sigma_z (theta*_z - theta)||^2, so sigma_hat = sqrt(s_1(A)). beta is
// oriented along the anchor's projected first moment, which estimates
// U^T Sigma_z (theta*_z - theta) and fixes the sign the singular vector leaves open.
Direction moment_direction(const ClientDataset& anchor, const Vector& theta,
                           const OrthonormalBasis& basis, const PairRows& rows,
                           std::size_t iterations, std::uint64_t seed) {
  const Matrix a = build_A(anchor, theta, basis, rows);
  const Matrix op = a * a.transpose();
  const auto power = power_iteration(op, iterations, seed);

  Vector beta = power.vector;
  Vector mean = Vector::Zero(basis.dim());
  for (std::size_t j = 0; j < rows.first.size(); ++j) {
    for (std::size_t r : {rows.first[j], rows.second[j]}) {
      const auto row = static_cast<Eigen::Index>(r);
      mean += residual_pair(anchor.features.row(row).transpose(), anchor.responses(row),
                            theta);
    }
  }
  if (beta.dot(basis.columns().transpose() * mean) < 0.0) beta = -beta;

  Direction out;
  out.step = basis.columns() * beta;
  out.sigma_hat = power.degenerate ? 0.0 : std::sqrt(power.sigma);
  return out;
}

}  // namespace

std::size_t Phase1Config::resolved_min_local() const {
  if (min_local) return *min_local;
  return allow_data_reuse ? 2 * ell : 2 * ell * T;
}

void validate(const Phase1Config& cfg) {
  if (cfg.k == 0) throw ConfigError("phase1: k must be positive");
  if (!(cfg.epsilon > 0.0 && cfg.epsilon <= 0.25))
    throw ConfigError("phase1: epsilon must lie in (0, 1/4]");
  if (cfg.T1 % 2 != 0) throw ConfigError("phase1: T1 must be even");
  if (cfg.n_H == 0 || cfg.m == 0 || cfg.ell == 0 || cfg.T2 == 0)
    throw ConfigError("phase1: n_H, m, ell and T2 must be positive");
  if (!(cfg.delta_hint > 0.0)) throw ConfigError("phase1: delta_hint must be positive");
  if (!(cfg.alpha > 0.0) || !(cfg.alpha <= cfg.beta))
    throw ConfigError("phase1: need 0 < alpha <= beta");
  if (cfg.resolved_min_local() < 2 * cfg.ell)
    throw ConfigError("phase1: min_local must be at least 2*ell");
}

std::vector<std::size_t> select_anchors(const std::vector<std::size_t>& sizes,
                                        std::size_t n_H, std::size_t min_local,
                                        std::uint64_t seed) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < sizes.size(); ++i)
    if (sizes[i] >= min_local) eligible.push_back(i);
  if (eligible.size() < n_H)
    throw InsufficientDataError("select_anchors: " + std::to_string(eligible.size()) +
                                " eligible clients with n_i >= " +
                                std::to_string(min_local) + ", need " +
                                std::to_string(n_H));
  Rng rng = make_stream(seed, Stream::kAnchors);
  shuffle_prefix(eligible, n_H, rng);
  eligible.resize(n_H);
  std::sort(eligible.begin(), eligible.end());
  return eligible;
}

PairRows anchor_pair_rows(std::size_t n_rows, std::size_t ell, std::size_t cursor,
                          bool allow_reuse) {
  const std::size_t start = 2 * ell * cursor;
  if (!allow_reuse && start + 2 * ell > n_rows)
    throw InsufficientDataError("anchor has no fresh local data left: needs " +
                                std::to_string(start + 2 * ell) + " rows, holds " +
                                std::to_string(n_rows));
  if (allow_reuse && n_rows < 2 * ell)
    throw InsufficientDataError("anchor holds fewer than 2*ell rows");
  PairRows rows;
  rows.first.reserve(ell);
  rows.second.reserve(ell);
  for (std::size_t j = 0; j < ell; ++j) {
    rows.first.push_back((start + 2 * j) % n_rows);
    rows.second.push_back((start + 2 * j + 1) % n_rows);
  }
  return rows;
}

Matrix build_A(const ClientDataset& anchor, const Vector& theta,
               const OrthonormalBasis& basis, const PairRows& rows) {
  const ClientPairs pairs = make_client_pairs(anchor, rows.first, rows.second, theta);
  const Matrix& u = basis.columns();
  if (u.rows() != pairs.a.rows()) throw DimensionError("build_A: basis dimension");
  const Matrix pa = u.transpose() * pairs.a;
  const Matrix pb = u.transpose() * pairs.b;
  return (pa * pb.transpose()) / static_cast<double>(rows.first.size());
}

FreshClientSampler::FreshClientSampler(const std::vector<std::size_t>& sizes,
                                       const std::vector<std::size_t>& anchors,
                                       bool allow_reuse, std::uint64_t seed)
    : allow_reuse_(allow_reuse), seed_(seed) {
  std::vector<bool> is_anchor(sizes.size(), false);
  for (std::size_t a : anchors) is_anchor[a] = true;
  for (std::size_t i = 0; i < sizes.size(); ++i)
    if (!is_anchor[i] && sizes[i] >= 2) pool_.push_back(i);
}

std::vector<std::size_t> FreshClientSampler::draw(std::size_t m, std::size_t round) {
  if (pool_.size() < m)
    throw InsufficientDataError("round " + std::to_string(round) + ": only " +
                                std::to_string(pool_.size()) +
                                " unused two-point clients, need " + std::to_string(m));
  Rng rng = make_stream(seed_, Stream::kFreshClients, {round});
  std::vector<std::size_t> scratch = pool_;
  shuffle_prefix(scratch, m, rng);
  std::vector<std::size_t> chosen(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(m));
  std::sort(chosen.begin(), chosen.end());
  if (!allow_reuse_) {
    std::vector<std::size_t> rest;
    rest.reserve(pool_.size() - m);
    std::set_difference(pool_.begin(), pool_.end(), chosen.begin(), chosen.end(),
                        std::back_inserter(rest));
    pool_ = std::move(rest);
  }
  return chosen;
}

std::vector<Phase1TraceRow> fedmd_round(std::vector<AnchorState>& states,
                                        const std::vector<ClientDataset>& clients,
                                        const std::vector<std::size_t>& fresh_clients,
                                        const Phase1Config& cfg, std::size_t round,
                                        std::uint64_t seed, const GroundTruth* truth,
                                        CommBytes& running) {
  const double threshold = cfg.epsilon * cfg.delta_hint;
  const double step_scale = cfg.alpha / (2.0 * cfg.beta * cfg.beta);
  std::vector<Phase1TraceRow> rows;
  rows.reserve(states.size());

  for (auto& state : states) {
    Phase1TraceRow row;
    row.round = round;
    row.anchor = state.client_index;
    const auto d = state.theta.size();

    std::optional<std::size_t> z;
    if (truth) z = truth->labels.at(state.client_index);
    auto diagnostics = [&](const Vector& theta) -> std::optional<double> {
      if (!z) return std::nullopt;
      return residual_norm(truth->covariances[*z], truth->thetas[*z], theta);
    };
    row.residual_true = diagnostics(state.theta);
    if (truth) {
      double worst = 0.0;
      for (const auto& t : truth->thetas) worst = std::max(worst, (t - state.theta).norm());
      row.delta_max = worst;
    }

    if (!state.frozen) {
      if (fresh_clients.empty())
        throw InsufficientDataError("fedmd_round: no fresh clients for an active anchor");
      const ClientDataset& anchor = clients.at(state.client_index);
      const auto pair_rows = anchor_pair_rows(anchor.size(), cfg.ell, state.rounds_used,
                                              cfg.allow_data_reuse);
      ++state.rounds_used;

      // Server-side subspace estimate over the fresh clients' first two points.
      std::vector<ClientPairs> pairs;
      pairs.reserve(fresh_clients.size());
      for (std::size_t c : fresh_clients)
        pairs.push_back(make_client_pairs(clients.at(c), {0}, {1}, state.theta));
      const ResidualPairProvider provider(std::move(pairs));

      const std::uint64_t oi_seed =
          stream_seed(seed, Stream::kOrthoStart, state.client_index, round);
      const std::uint64_t pi_seed =
          stream_seed(seed, Stream::kPowerStart, state.client_index, round);
      const std::uint64_t block =
          static_cast<std::uint64_t>(d) * kBytesPerReal;

      // theta_{i,t} broadcast to the fresh clients.
      row.message.down += block;
      Direction dir;
      try {
        const auto oi = federated_orthogonal_iteration(
            provider, static_cast<Eigen::Index>(cfg.k), cfg.T1, oi_seed);
        row.message += oi.comm;
        // U_hat delivered to the anchor.
        row.message.down += block * static_cast<std::uint64_t>(oi.basis.rank());
        dir = moment_direction(anchor, state.theta, oi.basis, pair_rows, cfg.T2, pi_seed);
      } catch (const DegenerateRoundError&) {
        // Residual pairs vanish along some direction; measure sigma_hat in the
        // full space and accept only if the anchor is already converged.
        const OrthonormalBasis full(Matrix::Identity(d, d));
        dir = moment_direction(anchor, state.theta, full, pair_rows, cfg.T2, pi_seed);
        if (dir.sigma_hat > threshold) throw;
      }

      state.sigma_hat = dir.sigma_hat;
      if (dir.sigma_hat > threshold) {
        state.theta += (step_scale * dir.sigma_hat) * dir.step;
        row.updated = true;
      } else {
        state.frozen = true;
      }
      // The anchor reports theta_{i,t+1}.
      row.message.up += block;
    }

    running += row.message;
    row.cumulative = running;
    row.sigma_hat = state.sigma_hat;
    row.frozen = state.frozen;
    row.theta_norm = state.theta.norm();
    row.residual_next = diagnostics(state.theta);
    rows.push_back(std::move(row));
  }
  return rows;
}

GreedyClusters greedy_cluster(const std::vector<Vector>& points, double threshold,
                              std::size_t k) {
  if (!(threshold > 0.0)) throw ConfigError("greedy_cluster: threshold must be positive");
  const std::size_t n = points.size();
  if (n == 0) throw ClusteringError(0, "greedy_cluster: no anchors to cluster");

  // Union-find over the threshold graph.
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      if ((points[a] - points[b]).norm() < threshold) {
        const std::size_t ra = find(a), rb = find(b);
        if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
      }

  GreedyClusters out;
  out.assignment.assign(n, 0);
  std::vector<std::size_t> component_of_root(n, n);
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = find(i);
    if (component_of_root[r] == n) {
      component_of_root[r] = members.size();
      members.emplace_back();
    }
    out.assignment[i] = component_of_root[r];
    members[out.assignment[i]].push_back(i);
  }
  if (members.size() != k)
    throw ClusteringError(members.size(),
                          "greedy_cluster: found " + std::to_string(members.size()) +
                              " components, expected " + std::to_string(k));

  for (const auto& group : members) {
    for (std::size_t a = 0; a < group.size(); ++a)
      for (std::size_t b = a + 1; b < group.size(); ++b)
        if (!((points[group[a]] - points[group[b]]).norm() < 2.0 * threshold))
          throw ClusteringError(members.size(),
                                "greedy_cluster: component diameter exceeds 2 * threshold");
    Vector center = Vector::Zero(points[group.front()].size());
    for (std::size_t idx : group) center += points[idx];
    out.centers.push_back(center / static_cast<double>(group.size()));
  }
  return out;
}

Phase1Result run_fedmd(const std::vector<ClientDataset>& clients, const Phase1Config& cfg,
                       std::uint64_t seed, const GroundTruth* truth) {
  validate(cfg);
  if (clients.empty()) throw InsufficientDataError("run_fedmd: no clients");
  const auto d = clients.front().features.cols();
  if (cfg.k > static_cast<std::size_t>(d)) throw ConfigError("phase1: k exceeds d");
  Vector theta0 = cfg.theta0.size() == 0 ? Vector::Zero(d) : cfg.theta0;
  if (theta0.size() != d) throw ConfigError("phase1: theta0 has the wrong dimension");

  std::vector<std::size_t> sizes;
  sizes.reserve(clients.size());
  for (const auto& c : clients) sizes.push_back(c.size());

  Phase1Result result;
  result.anchors = select_anchors(sizes, cfg.n_H, cfg.resolved_min_local(), seed);
  for (std::size_t a : result.anchors) {
    AnchorState s;
    s.client_index = a;
    s.theta = theta0;
    result.states.push_back(std::move(s));
  }

  FreshClientSampler sampler(sizes, result.anchors, cfg.allow_data_reuse, seed);
  for (std::size_t t = 0; t < cfg.T; ++t) {
    const bool any_active = std::any_of(result.states.begin(), result.states.end(),
                                        [](const AnchorState& s) { return !s.frozen; });
    std::vector<std::size_t> fresh;
    if (any_active) fresh = sampler.draw(cfg.m, t);
    auto rows = fedmd_round(result.states, clients, fresh, cfg, t, seed, truth, result.comm);
    result.trace.insert(result.trace.end(), std::make_move_iterator(rows.begin()),
                        std::make_move_iterator(rows.end()));
  }

  std::vector<Vector> finals;
  finals.reserve(result.states.size());
  for (const auto& s : result.states) finals.push_back(s.theta);
  try {
    auto clusters = greedy_cluster(finals, cfg.delta_hint / 2.0, cfg.k);
    result.components = clusters.centers.size();
    result.centers = std::move(clusters.centers);
  } catch (const ClusteringError& e) {
    result.components = e.components();
    result.failure = e.what();
  }
  return result;
}

}  // namespace fedmix
