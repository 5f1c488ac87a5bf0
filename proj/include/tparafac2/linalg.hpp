#ifndef TPARAFAC2_LINALG_HPP_
#define TPARAFAC2_LINALG_HPP_

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace tparafac2::linalg {

// Relative cutoff below which singular values are treated as zero.
inline constexpr double kPinvCutoff = 1e-12;

/// Moore-Penrose pseudoinverse via SVD, truncating singular values below
/// cutoff * sigma_max.
inline Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m, double cutoff = kPinvCutoff) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double smax = s.size() > 0 ? s(0) : 0.0;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > cutoff * smax && s(i) > 0.0) inv(i) = 1.0 / s(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Orthonormal polar factor U V^T of a tall matrix (orthogonal Procrustes).
///
/// Well-conditioned inputs go through the small Gram matrix,
/// m (m^T m)^{-1/2}; the thin SVD is the fallback for nearly
/// rank-deficient ones, where squaring the condition number costs accuracy.
inline Eigen::MatrixXd polar_factor(const Eigen::MatrixXd& m) {
  if (m.cols() > 0 && m.rows() >= m.cols()) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m.transpose().lazyProduct(m));
    if (eig.info() == Eigen::Success) {
      const Eigen::VectorXd& ev = eig.eigenvalues();  // ascending
      if (ev(ev.size() - 1) > 0.0 && ev(0) > 1e-6 * ev(ev.size() - 1)) {
        const Eigen::MatrixXd& V = eig.eigenvectors();
        const Eigen::MatrixXd root = V * ev.cwiseSqrt().cwiseInverse().asDiagonal() * V.transpose();
        return m.lazyProduct(root);
      }
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return svd.matrixU() * svd.matrixV().transpose();
}

/// Cosine of the angle between two vectors; 0 when either is zero.
template <typename A, typename B>
double cosine(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

}  // namespace tparafac2::linalg

#endif  // TPARAFAC2_LINALG_HPP_
