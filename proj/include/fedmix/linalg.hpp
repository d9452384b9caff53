#pragma once

// Dense linear-algebra primitives shared by both phases.

#include <cstddef>
#include <cstdint>

#include <Eigen/Core>

namespace fedmix {

/// d x r matrix with orthonormal columns.
class OrthonormalBasis {
 public:
  OrthonormalBasis() = default;
  /// Wraps columns that are already orthonormal (checked to 1e-10).
  explicit OrthonormalBasis(Eigen::MatrixXd columns);

  const Eigen::MatrixXd& columns() const { return columns_; }
  Eigen::Index dim() const { return columns_.rows(); }
  Eigen::Index rank() const { return columns_.cols(); }
  Eigen::MatrixXd projector() const { return columns_ * columns_.transpose(); }

 private:
  Eigen::MatrixXd columns_;
};

/// Householder QR with diag(R) >= 0. Throws RankDeficientError when the
/// smallest singular value of A is at most 1e-12 times the largest.
OrthonormalBasis qr_orthonormalize(const Eigen::MatrixXd& a);

/// Random d x r orthonormal start drawn from the given seed.
OrthonormalBasis random_orthonormal(Eigen::Index d, Eigen::Index r,
                                    std::uint64_t seed);

struct PowerIterationResult {
  Eigen::VectorXd vector;  // unit-norm iterate
  double rayleigh = 0.0;   // v^T op v
  double sigma = 0.0;      // sqrt(max(rayleigh, 0))
  bool degenerate = false;
};

/// T2 steps of the power method on a symmetric PSD operator from a seeded
/// random start. For op = A A^T, `rayleigh` estimates the squared leading
/// singular value of A and `sigma` the singular value itself.
PowerIterationResult power_iteration(const Eigen::MatrixXd& op,
                                     std::size_t iterations,
                                     std::uint64_t seed);

/// Exact top-k left singular vectors through a full SVD. Test oracle.
OrthonormalBasis dense_top_k_left_singular(const Eigen::MatrixXd& a,
                                           Eigen::Index k);

/// The alternating recursion of the federated orthogonal iteration run on a
/// single assembled matrix: even rounds Q <- Y^T Q, odd rounds Q <- qr(Y Q).
/// `rounds` even gives rounds/2 orthogonal-iteration steps on Y Y^T.
OrthonormalBasis orthogonal_iteration(const Eigen::MatrixXd& y,
                                      const OrthonormalBasis& start,
                                      std::size_t rounds);

/// Operator-norm distance between the projectors onto two subspaces.
double projector_distance(const OrthonormalBasis& a, const OrthonormalBasis& b);

/// Spectral norm (largest singular value).
double operator_norm(const Eigen::MatrixXd& a);

}  // namespace fedmix
