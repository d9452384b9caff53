#include "fedmix/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "fedmix/error.hpp"

namespace fedmix {

PermutationMatch permutation_distance(const std::vector<Vector>& estimate,
                                      const std::vector<Vector>& truth) {
  const std::size_t k = truth.size();
  if (estimate.size() != k) throw DimensionError("permutation_distance: k mismatch");
  if (k == 0) throw DimensionError("permutation_distance: empty model list");
  if (k > kMaxBruteForceClusters)
    throw UnsupportedSizeError("permutation_distance supports k <= 10, got " +
                               std::to_string(k));

  // dist[e][j] = ||estimate[e] - truth[j]||
  std::vector<std::vector<double>> dist(k, std::vector<double>(k));
  for (std::size_t e = 0; e < k; ++e)
    for (std::size_t j = 0; j < k; ++j) {
      if (estimate[e].size() != truth[j].size())
        throw DimensionError("permutation_distance: dimension mismatch");
      dist[e][j] = (estimate[e] - truth[j]).norm();
    }

  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  PermutationMatch best{std::numeric_limits<double>::infinity(), perm};
  do {
    double worst = 0.0;
    for (std::size_t j = 0; j < k && worst < best.distance; ++j)
      worst = std::max(worst, dist[perm[j]][j]);
    if (worst < best.distance) best = {worst, perm};
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double chi_squared_skew(const std::vector<std::size_t>& sizes) {
  if (sizes.empty()) throw DimensionError("chi_squared_skew: no clients");
  const double total = static_cast<double>(std::accumulate(sizes.begin(), sizes.end(),
                                                           std::size_t{0}));
  const double m = static_cast<double>(sizes.size());
  double chi2 = 0.0;
  for (std::size_t n : sizes) {
    if (n == 0) throw DimensionError("chi_squared_skew: client with n_i = 0");
    const double diff = static_cast<double>(n) / total - 1.0 / m;
    chi2 += diff * diff;
  }
  return chi2 * m;
}

double misclustering_mass(const std::vector<std::size_t>& estimated_labels,
                          const std::vector<std::size_t>& true_labels,
                          const std::vector<std::size_t>& permutation,
                          const std::vector<std::size_t>& sizes) {
  if (estimated_labels.size() != true_labels.size() ||
      sizes.size() != true_labels.size())
    throw DimensionError("misclustering_mass: length mismatch");
  double wrong = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (true_labels[i] >= permutation.size())
      throw DimensionError("misclustering_mass: label outside permutation");
    total += static_cast<double>(sizes[i]);
    if (estimated_labels[i] != permutation[true_labels[i]])
      wrong += static_cast<double>(sizes[i]);
  }
  return total > 0.0 ? wrong / total : 0.0;
}

double predicted_error_prob(double n, std::size_t k, double delta, double sigma,
                            double c_cal) {
  const double snr = sigma > 0.0 ? std::min(1.0, delta * delta / (sigma * sigma)) : 1.0;
  const double value = 4.0 * static_cast<double>(k) * std::exp(-c_cal * n * snr * snr);
  return std::min(1.0, value);
}

double residual_norm(const Vector& covariance_diag, const Vector& theta_star,
                     const Vector& theta) {
  if (covariance_diag.size() != theta.size() || theta_star.size() != theta.size())
    throw DimensionError("residual_norm: dimension mismatch");
  return covariance_diag.cwiseProduct(theta_star - theta).norm();
}

EvalReport evaluate(const std::vector<Vector>& estimate,
                    const std::vector<std::size_t>& estimated_labels,
                    const GroundTruth& truth, const std::vector<std::size_t>& sizes,
                    double sigma, double c_cal) {
  EvalReport r;
  const auto match = permutation_distance(estimate, truth.thetas);
  r.distance = match.distance;
  r.best_permutation = match.permutation;
  r.misclustering_mass =
      misclustering_mass(estimated_labels, truth.labels, match.permutation, sizes);
  r.chi2 = chi_squared_skew(sizes);

  const std::size_t k = truth.thetas.size();
  const double total =
      static_cast<double>(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}));
  r.per_cluster_mass.assign(k, 0.0);
  double pe_sum = 0.0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const double n = static_cast<double>(sizes[i]);
    r.per_cluster_mass[truth.labels[i]] += n / total;
    pe_sum += n * predicted_error_prob(n, k, truth.delta, sigma, c_cal);
  }
  r.rho = *std::min_element(r.per_cluster_mass.begin(), r.per_cluster_mass.end());
  r.pe_sum_term = pe_sum / total;

  const double d = static_cast<double>(truth.thetas.front().size());
  const double kk = static_cast<double>(k);
  const double m = static_cast<double>(sizes.size());
  r.nu_uniform_term = std::sqrt(d * kk * std::log(kk) / m * (r.chi2 + 1.0));
  return r;
}

}  // namespace fedmix
