#pragma once

// Slow reference implementations used only by tests. Written independently of
// the library's Eigen-backed decompositions.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fedmix/model.hpp"
#include "fedmix/rng.hpp"

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Modified Gram-Schmidt on the columns of a.
inline MatrixXd gram_schmidt(const MatrixXd& a) {
  MatrixXd q = a;
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    for (Eigen::Index i = 0; i < j; ++i) q.col(j) -= q.col(i).dot(q.col(j)) * q.col(i);
    q.col(j) /= q.col(j).norm();
  }
  return q;
}

// Cyclic Jacobi eigensolver for a symmetric matrix. Eigenpairs sorted by
// decreasing eigenvalue.
inline std::pair<VectorXd, MatrixXd> jacobi_eigen(MatrixXd a, int sweeps = 100) {
  const Eigen::Index n = a.rows();
  MatrixXd v = MatrixXd::Identity(n, n);
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index x, Eigen::Index y) { return a(x, x) > a(y, y); });
  VectorXd values(n);
  MatrixXd vectors(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    values(i) = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
    vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
  }
  return {values, vectors};
}

inline double spectral_norm_sym(const MatrixXd& a) {
  const auto [values, vectors] = jacobi_eigen(a);
  return std::max(std::abs(values(0)), std::abs(values(values.size() - 1)));
}

inline double spectral_norm(const MatrixXd& a) {
  return std::sqrt(std::max(0.0, jacobi_eigen(a * a.transpose()).first(0)));
}

// Every permutation of 0..k-1, scanned with Heap's algorithm (different
// enumeration order from the library), keeping the lexicographically smallest
// minimizer of max_j ||est[pi[j]] - truth[j]||.
inline std::pair<double, std::vector<std::size_t>> bottleneck_scan(
    const std::vector<VectorXd>& est, const std::vector<VectorXd>& truth) {
  const std::size_t k = truth.size();
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  std::vector<std::size_t> arg;
  auto visit = [&](const std::vector<std::size_t>& p) {
    double worst = 0.0;
    for (std::size_t j = 0; j < k; ++j) worst = std::max(worst, (est[p[j]] - truth[j]).norm());
    if (worst < best || (worst == best && p < arg)) {
      best = worst;
      arg = p;
    }
  };
  std::vector<std::size_t> c(k, 0);
  visit(perm);
  std::size_t i = 0;
  while (i < k) {
    if (c[i] < i) {
      std::swap(perm[i % 2 == 0 ? 0 : c[i]], perm[i]);
      visit(perm);
      ++c[i];
      i = 0;
    } else {
      c[i] = 0;
      ++i;
    }
  }
  return {best, arg};
}

inline fedmix::ClientDataset random_client(fedmix::Rng& rng, Eigen::Index n, Eigen::Index d,
                                           double scale = 1.0) {
  fedmix::ClientDataset c;
  c.features = scale * fedmix::normal_matrix(rng, n, d);
  c.responses = fedmix::normal_vector(rng, n);
  return c;
}

inline double relative_error(const VectorXd& a, const VectorXd& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

}  // namespace oracle
