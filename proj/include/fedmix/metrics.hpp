#pragma once

// Evaluation quantities: permutation-invariant distance, quantity skew and
// clustering-error diagnostics.

#include <cstddef>
#include <vector>

#include "fedmix/model.hpp"

namespace fedmix {

struct PermutationMatch {
  double distance = 0.0;
  /// permutation[j] is the estimated slot matched to true cluster j.
  std::vector<std::size_t> permutation;
};

inline constexpr std::size_t kMaxBruteForceClusters = 10;

/// min over permutations pi of max_j ||estimate[pi[j]] - truth[j]||.
/// Exhaustive over k! orderings; ties resolve to the lexicographically
/// smallest permutation. Throws UnsupportedSizeError for k > 10.
PermutationMatch permutation_distance(const std::vector<Vector>& estimate,
                                      const std::vector<Vector>& truth);

/// Chi-squared divergence between n_i/N and the uniform law over clients.
double chi_squared_skew(const std::vector<std::size_t>& sizes);

/// Data mass of clients whose estimated label is not the slot matched to
/// their true cluster, i.e. est[i] != permutation[truth[i]].
double misclustering_mass(const std::vector<std::size_t>& estimated_labels,
                          const std::vector<std::size_t>& true_labels,
                          const std::vector<std::size_t>& permutation,
                          const std::vector<std::size_t>& sizes);

/// p_e(n) = min(1, 4k exp(-c n (1 ^ Delta^2/sigma^2)^2)); sigma = 0 caps the
/// signal-to-noise factor at 1.
double predicted_error_prob(double n, std::size_t k, double delta, double sigma,
                            double c_cal = 1.0);

/// ||Sigma (theta_star - theta)|| for a diagonal covariance.
double residual_norm(const Vector& covariance_diag, const Vector& theta_star,
                     const Vector& theta);

struct EvalReport {
  double distance = 0.0;
  std::vector<std::size_t> best_permutation;
  double misclustering_mass = 0.0;
  double chi2 = 0.0;
  std::vector<double> per_cluster_mass;  // N_j / N under the true labels
  double rho = 0.0;
  double nu_uniform_term = 0.0;  // sqrt(d k log k / M * (chi2 + 1))
  double pe_sum_term = 0.0;      // (1/N) sum_i n_i p_e(n_i)
};

EvalReport evaluate(const std::vector<Vector>& estimate,
                    const std::vector<std::size_t>& estimated_labels,
                    const GroundTruth& truth, const std::vector<std::size_t>& sizes,
                    double sigma, double c_cal = 1.0);

}  // namespace fedmix
