#include "fedmix/phase2.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "fedmix/error.hpp"
#include "fedmix/metrics.hpp"

namespace fedmix {
namespace {

std::size_t total_size(const std::vector<ClientDataset>& clients) {
  std::size_t n = 0;
  for (const auto& c : clients) n += c.size();
  return n;
}

void check_label(const GlobalModel& model, std::size_t label) {
  if (label >= model.thetas.size()) throw DimensionError("label out of range");
}

}  // namespace

const char* to_string(FedMode mode) {
  return mode == FedMode::kFedAvg ? "fedavg" : "fedprox";
}

FedMode parse_fed_mode(const std::string& name) {
  if (name == "fedavg" || name == "FedAvg") return FedMode::kFedAvg;
  if (name == "fedprox" || name == "FedProx") return FedMode::kFedProx;
  throw ConfigError("unknown phase2 mode '" + name + "'");
}

void validate(const Phase2Config& cfg) {
  if (cfg.gamma_target) {
    if (!(*cfg.gamma_target > 0.0)) throw ConfigError("phase2: gamma_target must be positive");
  } else if (!(cfg.eta > 0.0)) {
    throw ConfigError("phase2: eta must be positive");
  }
  if (cfg.mode == FedMode::kFedAvg && cfg.s == 0)
    throw ConfigError("phase2: FedAvg needs s >= 1");
}

std::size_t estimate_label(const ClientDataset& client, const GlobalModel& model) {
  if (model.thetas.empty()) throw DimensionError("estimate_label: empty model");
  std::size_t best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < model.thetas.size(); ++j) {
    const double err = (client.responses - client.features * model.thetas[j]).norm();
    if (err < best_err) {
      best_err = err;
      best = j;
    }
  }
  return best;
}

double local_gamma(const ClientDataset& client, double eta) {
  const Matrix& x = client.features;
  const Matrix gram = x.rows() <= x.cols() ? Matrix(x * x.transpose())
                                           : Matrix(x.transpose() * x);
  const double top =
      Eigen::SelfAdjointEigenSolver<Matrix>(gram, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  return eta * top / static_cast<double>(client.size());
}

double stability_gamma(const std::vector<ClientDataset>& clients, double eta) {
  double g = 0.0;
  for (const auto& c : clients) g = std::max(g, local_gamma(c, eta));
  return g;
}

double eta_for_gamma(const std::vector<ClientDataset>& clients, double gamma) {
  const double per_unit = stability_gamma(clients, 1.0);
  if (!(per_unit > 0.0)) throw DimensionError("eta_for_gamma: all features are zero");
  return gamma / per_unit;
}

LocalReport local_fedavg(const ClientDataset& client, std::size_t client_index,
                         const GlobalModel& model, std::size_t label, double eta,
                         std::size_t s, double weight) {
  check_label(model, label);
  LocalReport report{client_index, label, model.thetas, weight, false};
  report.stability_warning = local_gamma(client, eta) >= 1.0;
  const double rate = eta / static_cast<double>(client.size());
  Vector& theta = report.thetas[label];
  for (std::size_t step = 0; step < s; ++step) {
    const Vector residual = client.features * theta - client.responses;
    theta -= rate * (client.features.transpose() * residual);
  }
  return report;
}

LocalReport local_fedprox(const ClientDataset& client, std::size_t client_index,
                          const GlobalModel& model, std::size_t label, double eta,
                          double weight) {
  check_label(model, label);
  LocalReport report{client_index, label, model.thetas, weight, false};
  const double rate = eta / static_cast<double>(client.size());
  const Matrix& x = client.features;
  const Vector& anchor = model.thetas[label];
  Vector& theta = report.thetas[label];
  if (x.rows() >= x.cols()) {
    Matrix system = rate * (x.transpose() * x);
    system.diagonal().array() += 1.0;
    theta = system.llt().solve(anchor + rate * (x.transpose() * client.responses));
  } else {
    // (I + c X^T X)^-1 X^T = X^T (I + c X X^T)^-1 keeps the solve at n_i x n_i.
    Matrix system = rate * (x * x.transpose());
    system.diagonal().array() += 1.0;
    const Vector residual = x * anchor - client.responses;
    theta = anchor - rate * (x.transpose() * system.llt().solve(residual));
  }
  return report;
}

GlobalModel aggregate(const std::vector<LocalReport>& reports, std::size_t round) {
  if (reports.empty()) throw DimensionError("aggregate: no reports");
  double weight_sum = 0.0;
  for (const auto& r : reports) weight_sum += r.weight;
  if (std::abs(weight_sum - 1.0) > 1e-12 + 4.0 * std::numeric_limits<double>::epsilon() *
                                               static_cast<double>(reports.size()))
    throw DimensionError("aggregate: weights sum to " + std::to_string(weight_sum));

  GlobalModel out;
  out.round = round;
  const std::size_t k = reports.front().thetas.size();
  for (std::size_t j = 0; j < k; ++j)
    out.thetas.push_back(Vector::Zero(reports.front().thetas[j].size()));
  // Reports arrive in ascending client order.
  for (const auto& r : reports) {
    if (r.thetas.size() != k) throw DimensionError("aggregate: report has wrong k");
    for (std::size_t j = 0; j < k; ++j) out.thetas[j] += r.weight * r.thetas[j];
  }
  return out;
}

Matrix build_P(const ClientDataset& client, double eta, std::size_t s, FedMode mode) {
  const Eigen::Index n = static_cast<Eigen::Index>(client.size());
  const double rate = eta / static_cast<double>(client.size());
  const Matrix kernel = rate * (client.features * client.features.transpose());
  const Matrix identity = Matrix::Identity(n, n);
  if (mode == FedMode::kFedProx) return (identity + kernel).inverse();

  const Matrix contraction = identity - kernel;
  Matrix term = identity;
  Matrix sum = Matrix::Zero(n, n);
  for (std::size_t l = 0; l < s; ++l) {
    sum += term;
    term = term * contraction;
  }
  return sum;
}

GlobalModel closed_form_step(const std::vector<ClientDataset>& clients,
                             const std::vector<std::size_t>& labels,
                             const GlobalModel& model, double eta, std::size_t s,
                             FedMode mode) {
  if (labels.size() != clients.size())
    throw DimensionError("closed_form_step: one label per client required");
  const auto n_total = static_cast<Eigen::Index>(total_size(clients));
  const Eigen::Index d = clients.front().features.cols();

  Matrix phi(n_total, d);
  Vector y(n_total);
  Matrix p = Matrix::Zero(n_total, n_total);
  std::vector<Eigen::Index> offsets;
  Eigen::Index offset = 0;
  for (const auto& c : clients) {
    const auto n = static_cast<Eigen::Index>(c.size());
    offsets.push_back(offset);
    phi.middleRows(offset, n) = c.features;
    y.segment(offset, n) = c.responses;
    p.block(offset, offset, n, n) = build_P(c, eta, s, mode);
    offset += n;
  }
  const Matrix b = (phi.transpose() * p) / static_cast<double>(n_total);

  GlobalModel out;
  out.round = model.round + 1;
  for (std::size_t j = 0; j < model.thetas.size(); ++j) {
    Vector mask = Vector::Zero(n_total);
    for (std::size_t i = 0; i < clients.size(); ++i)
      if (labels[i] == j)
        mask.segment(offsets[i], static_cast<Eigen::Index>(clients[i].size())).setOnes();
    const Vector residual = mask.cwiseProduct(phi * model.thetas[j] - y);
    out.thetas.push_back(model.thetas[j] - eta * (b * residual));
  }
  return out;
}

RoundOutcome fedx_round(const std::vector<ClientDataset>& clients, const GlobalModel& model,
                        FedMode mode, double eta, std::size_t s) {
  const double n_total = static_cast<double>(total_size(clients));
  RoundOutcome out;
  out.labels.reserve(clients.size());
  std::vector<LocalReport> reports;
  reports.reserve(clients.size());
  for (std::size_t i = 0; i < clients.size(); ++i) {
    const auto& c = clients[i];
    const std::size_t label = estimate_label(c, model);
    out.labels.push_back(label);
    const double weight = static_cast<double>(c.size()) / n_total;
    reports.push_back(mode == FedMode::kFedAvg
                          ? local_fedavg(c, i, model, label, eta, s, weight)
                          : local_fedprox(c, i, model, label, eta, weight));
    if (reports.back().stability_warning) ++out.stability_warnings;
  }
  out.model = aggregate(reports, model.round + 1);
  return out;
}

Phase2Result run_fedx(const std::vector<ClientDataset>& clients, const GlobalModel& start,
                      const Phase2Config& cfg, const GroundTruth* truth) {
  validate(cfg);
  if (clients.empty()) throw InsufficientDataError("run_fedx: no clients");
  if (start.thetas.empty()) throw DimensionError("run_fedx: empty starting model");
  const auto d = clients.front().features.cols();
  for (const auto& t : start.thetas)
    if (t.size() != d) throw DimensionError("run_fedx: starting model dimension");

  Phase2Result result;
  result.eta = cfg.gamma_target ? eta_for_gamma(clients, *cfg.gamma_target) : cfg.eta;
  result.gamma = stability_gamma(clients, result.eta);
  const std::size_t s = cfg.mode == FedMode::kFedAvg ? cfg.s : 1;
  const std::uint64_t model_bytes =
      static_cast<std::uint64_t>(start.thetas.size()) * static_cast<std::uint64_t>(d) *
      kBytesPerReal;

  auto record = [&](const GlobalModel& model, const std::vector<std::size_t>* labels,
                    std::size_t warnings, CommBytes message) {
    Phase2TraceRow row;
    row.round = model.round;
    row.mode = cfg.mode;
    row.stability_warnings = warnings;
    row.message = message;
    result.comm += message;
    row.cumulative = result.comm;
    if (truth) {
      const auto match = permutation_distance(model.thetas, truth->thetas);
      row.distance_to_truth = match.distance;
      if (labels) {
        std::vector<std::size_t> sizes;
        sizes.reserve(clients.size());
        for (const auto& c : clients) sizes.push_back(c.size());
        row.misclustering_mass =
            misclustering_mass(*labels, truth->labels, match.permutation, sizes);
      }
    }
    result.trace.push_back(std::move(row));
  };

  GlobalModel model = start;
  model.round = 0;
  record(model, nullptr, 0, {});
  for (std::size_t t = 0; t < cfg.T_prime; ++t) {
    RoundOutcome outcome = fedx_round(clients, model, cfg.mode, result.eta, s);
    model = std::move(outcome.model);
    result.labels = std::move(outcome.labels);
    const CommBytes message{model_bytes * clients.size(), model_bytes};
    record(model, &result.labels, outcome.stability_warnings, message);
  }
  if (cfg.T_prime == 0) {
    result.labels.reserve(clients.size());
    for (const auto& c : clients) result.labels.push_back(estimate_label(c, model));
  }
  result.model = std::move(model);
  return result;
}

}  // namespace fedmix
