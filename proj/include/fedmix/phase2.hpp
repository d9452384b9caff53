#pragma once

// FedX + clustering: every round each client picks the cluster whose model
// best fits its data, refines only that model locally (FedAvg or FedProx),
// and the server takes the data-weighted average of all reports.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "fedmix/model.hpp"
#include "fedmix/subspace.hpp"

namespace fedmix {

enum class FedMode { kFedAvg, kFedProx };

const char* to_string(FedMode mode);
FedMode parse_fed_mode(const std::string& name);

/// Labels are always resolved to the lowest index on ties.
struct Phase2Config {
  FedMode mode = FedMode::kFedAvg;
  double eta = 0.1;
  std::size_t s = 1;  // FedAvg local steps
  std::size_t T_prime = 1;
  /// When set, eta is replaced by gamma_target / max_i ||phi(x_i)||^2 / n_i.
  std::optional<double> gamma_target;
};

void validate(const Phase2Config& cfg);

struct GlobalModel {
  std::vector<Vector> thetas;
  std::size_t round = 0;
};

struct LocalReport {
  std::size_t client_index = 0;
  std::size_t label = 0;
  std::vector<Vector> thetas;  // only `label` differs from the broadcast
  double weight = 0.0;         // n_i / N
  bool stability_warning = false;
};

/// argmin_j ||y - phi theta_j||, lowest index on ties.
std::size_t estimate_label(const ClientDataset& client, const GlobalModel& model);

/// gamma_i = eta * ||phi(x_i)||_op^2 / n_i.
double local_gamma(const ClientDataset& client, double eta);
/// max_i gamma_i.
double stability_gamma(const std::vector<ClientDataset>& clients, double eta);
/// Learning rate giving max_i gamma_i = gamma.
double eta_for_gamma(const std::vector<ClientDataset>& clients, double gamma);

/// s steps of theta <- theta - (eta/n_i) phi^T (phi theta - y) on slot `label`.
LocalReport local_fedavg(const ClientDataset& client, std::size_t client_index,
                         const GlobalModel& model, std::size_t label, double eta,
                         std::size_t s, double weight);

/// argmin_theta ||y - phi theta||^2 / (2 n_i) + ||theta - theta_label||^2 / (2 eta)
/// on slot `label`, solved directly.
LocalReport local_fedprox(const ClientDataset& client, std::size_t client_index,
                          const GlobalModel& model, std::size_t label, double eta,
                          double weight);

/// sum_i w_i theta_{i.}, accumulated in ascending client order. Throws
/// DimensionError if the weights do not sum to 1 within 1e-12.
GlobalModel aggregate(const std::vector<LocalReport>& reports, std::size_t round);

/// FedAvg: sum_{l<s} (I - eta phi phi^T / n_i)^l; FedProx: (I + eta phi phi^T / n_i)^-1.
Matrix build_P(const ClientDataset& client, double eta, std::size_t s, FedMode mode);

/// theta_j <- theta_j - eta B Lambda_j (phi theta_j - y), B = phi^T P / N, from
/// the stacked data of all clients and the supplied labels.
GlobalModel closed_form_step(const std::vector<ClientDataset>& clients,
                             const std::vector<std::size_t>& labels,
                             const GlobalModel& model, double eta, std::size_t s,
                             FedMode mode);

/// One full round: label estimation, local updates and aggregation.
struct RoundOutcome {
  GlobalModel model;
  std::vector<std::size_t> labels;
  std::size_t stability_warnings = 0;
};
RoundOutcome fedx_round(const std::vector<ClientDataset>& clients, const GlobalModel& model,
                        FedMode mode, double eta, std::size_t s);

struct Phase2TraceRow {
  std::size_t round = 0;  // 0 is the starting model
  std::optional<double> distance_to_truth;
  std::optional<double> misclustering_mass;
  FedMode mode = FedMode::kFedAvg;
  std::size_t stability_warnings = 0;
  CommBytes message;
  CommBytes cumulative;
};

struct Phase2Result {
  GlobalModel model;
  std::vector<std::size_t> labels;  // z_i from the last round
  double eta = 0.0;                 // learning rate actually used
  double gamma = 0.0;
  std::vector<Phase2TraceRow> trace;
  CommBytes comm;

  /// Client i's own estimate theta_{z_i}.
  const Vector& client_estimate(std::size_t i) const { return model.thetas[labels[i]]; }
};

Phase2Result run_fedx(const std::vector<ClientDataset>& clients, const GlobalModel& start,
                      const Phase2Config& cfg, const GroundTruth* truth = nullptr);

}  // namespace fedmix
