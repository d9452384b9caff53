#include "fedmix/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "fedmix/error.hpp"
#include "fedmix/rng.hpp"

namespace fedmix {

OrthonormalBasis::OrthonormalBasis(Eigen::MatrixXd columns)
    : columns_(std::move(columns)) {
  const Eigen::Index r = columns_.cols();
  const double err =
      (columns_.transpose() * columns_ - Eigen::MatrixXd::Identity(r, r))
          .lpNorm<Eigen::Infinity>();
  if (!(err <= 1e-10))
    throw DimensionError("OrthonormalBasis: columns are not orthonormal");
}

OrthonormalBasis qr_orthonormalize(const Eigen::MatrixXd& a) {
  const Eigen::Index d = a.rows();
  const Eigen::Index r = a.cols();
  if (r == 0 || r > d)
    throw DimensionError("qr_orthonormalize: need 1 <= columns <= rows");

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  const Eigen::MatrixXd upper =
      qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(upper).singularValues();
  if (!(sv(0) > 0.0) || !(sv(r - 1) > 1e-12 * sv(0)))
    throw RankDeficientError("qr_orthonormalize: input is rank deficient");

  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, r);
  for (Eigen::Index j = 0; j < r; ++j)
    if (upper(j, j) < 0.0) q.col(j) = -q.col(j);
  return OrthonormalBasis(std::move(q));
}

OrthonormalBasis random_orthonormal(Eigen::Index d, Eigen::Index r,
                                    std::uint64_t seed) {
  Rng rng(seed);
  for (int attempt = 0;; ++attempt) {
    try {
      return qr_orthonormalize(normal_matrix(rng, d, r));
    } catch (const RankDeficientError&) {
      if (attempt > 0) throw;
    }
  }
}

PowerIterationResult power_iteration(const Eigen::MatrixXd& op,
                                     std::size_t iterations,
                                     std::uint64_t seed) {
  const Eigen::Index r = op.rows();
  if (r == 0 || op.cols() != r)
    throw DimensionError("power_iteration: operator must be square and non-empty");
  if (iterations == 0) throw DimensionError("power_iteration: need T2 >= 1");

  Rng rng(seed);
  Eigen::VectorXd v = normal_vector(rng, r);
  if (v.norm() < 1e-12) v = normal_vector(rng, r);
  v.normalize();

  PowerIterationResult out;
  if (op.isZero(0.0)) {
    out.vector = v;
    out.degenerate = true;
    return out;
  }

  bool redrawn = false;
  Eigen::VectorXd w(r);
  for (std::size_t t = 0; t < iterations; ++t) {
    w.noalias() = op * v;
    double norm = w.norm();
    if (norm < 1e-300) {
      // Start landed in the null space.
      if (redrawn) {
        out.vector = v;
        out.degenerate = true;
        return out;
      }
      redrawn = true;
      v = normal_vector(rng, r).normalized();
      w.noalias() = op * v;
      norm = w.norm();
      if (norm < 1e-300) {
        out.vector = v;
        out.degenerate = true;
        return out;
      }
    }
    v = w / norm;
  }
  out.vector = v;
  out.rayleigh = v.dot(op * v);
  out.sigma = std::sqrt(std::max(out.rayleigh, 0.0));
  return out;
}

OrthonormalBasis dense_top_k_left_singular(const Eigen::MatrixXd& a,
                                           Eigen::Index k) {
  if (k < 1 || k > std::min(a.rows(), a.cols()))
    throw DimensionError("dense_top_k_left_singular: k out of range");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullU);
  Eigen::MatrixXd u = svd.matrixU().leftCols(k);
  // Sign convention: largest-magnitude entry of each column is positive.
  for (Eigen::Index j = 0; j < k; ++j) {
    Eigen::Index idx;
    u.col(j).cwiseAbs().maxCoeff(&idx);
    if (u(idx, j) < 0.0) u.col(j) = -u.col(j);
  }
  return OrthonormalBasis(std::move(u));
}

OrthonormalBasis orthogonal_iteration(const Eigen::MatrixXd& y,
                                      const OrthonormalBasis& start,
                                      std::size_t rounds) {
  if (y.rows() != y.cols() || y.rows() != start.dim())
    throw DimensionError("orthogonal_iteration: shape mismatch");
  Eigen::MatrixXd q = start.columns();
  for (std::size_t t = 0; t < rounds; ++t) {
    if (t % 2 == 0) {
      q = y.transpose() * q;
    } else {
      try {
        q = qr_orthonormalize(y * q).columns();
      } catch (const RankDeficientError&) {
        throw DegenerateRoundError(t, "orthogonal_iteration: rank deficient at round " +
                                          std::to_string(t));
      }
    }
  }
  if (rounds % 2 == 1) q = qr_orthonormalize(q).columns();
  return OrthonormalBasis(std::move(q));
}

double projector_distance(const OrthonormalBasis& a, const OrthonormalBasis& b) {
  if (a.dim() != b.dim()) throw DimensionError("projector_distance: dimension mismatch");
  return operator_norm(a.projector() - b.projector());
}

double operator_norm(const Eigen::MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Eigen::MatrixXd>(a).singularValues()(0);
}

}  // namespace fedmix
