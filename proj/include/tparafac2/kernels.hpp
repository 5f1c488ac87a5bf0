#ifndef TPARAFAC2_KERNELS_HPP_
#define TPARAFAC2_KERNELS_HPP_

// Sub-problem solvers for the AO-ADMM fit. All functions are pure; the
// solver owns the state and decides the update order.

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "tparafac2/core.hpp"
#include "tparafac2/linalg.hpp"

namespace tparafac2 {

inline constexpr double kRhoFloor = 1e-12;

/// Auxiliary, dual and step-size variables of one fit.
///
/// Z_B/mu_ZB belong to the smoothness split, Y_B/mu_DeltaB to the PARAFAC2
/// split, Z_D/mu_D to the non-negativity split on D. P and DeltaB carry the
/// projection's warm start between calls (Y_B[k] = P[k] * DeltaB).
struct AdmmState {
  std::vector<Matrix> Z_B;
  std::vector<Matrix> Y_B;
  std::vector<Matrix> mu_ZB;
  std::vector<Matrix> mu_DeltaB;
  std::vector<Vector> Z_D;
  std::vector<Vector> mu_D;
  std::vector<double> rho_B;
  std::vector<double> rho_D;
  std::vector<Matrix> P;
  Matrix DeltaB;
};

// ---------------------------------------------------------------------------
// Step sizes

inline double step_size_B(const Matrix& AtA, const Vector& Dk) {
  const Index R = AtA.rows();
  double tr = 0.0;
  for (Index r = 0; r < R; ++r) tr += Dk(r) * Dk(r) * AtA(r, r);
  return std::max(tr / static_cast<double>(R), kRhoFloor);
}

inline double step_size_D(const Matrix& AtA, const Matrix& BtB) {
  const Index R = AtA.rows();
  return std::max(AtA.diagonal().dot(BtB.diagonal()) / static_cast<double>(R), kRhoFloor);
}

// ---------------------------------------------------------------------------
// A update

/// Closed-form A given the products X_k B_k (I x R each).
inline Matrix update_A(const std::vector<Matrix>& XB, const std::vector<Matrix>& B,
                       const std::vector<Vector>& D, double lambda_A) {
  const Index R = B.front().cols();
  Matrix rhs = Matrix::Zero(XB.front().rows(), R);
  Matrix gram = Matrix::Zero(R, R);
  for (std::size_t k = 0; k < B.size(); ++k) {
    rhs.noalias() += XB[k] * D[k].asDiagonal();
    gram.noalias() += D[k].asDiagonal() * (B[k].transpose() * B[k]) * D[k].asDiagonal();
  }
  gram.diagonal().array() += lambda_A;
  return rhs * linalg::pseudo_inverse(gram);
}

/// (sum_k X_k B_k D_k)(sum_k D_k B_k^T B_k D_k + lambda_A I)^+.
inline Matrix update_A(const TensorSlices& data, const Parafac2Factors& f, double lambda_A) {
  check_shapes(f, &data);
  std::vector<Matrix> XB;
  XB.reserve(f.B.size());
  for (Index k = 0; k < data.K(); ++k) XB.push_back(data[k] * f.B[static_cast<std::size_t>(k)]);
  return update_A(XB, f.B, f.D, lambda_A);
}

// ---------------------------------------------------------------------------
// B_k update

/// Parts of the B_k normal equations that stay fixed while A and D_k do.
struct BkSystem {
  Matrix data_rhs;  // X_k^T A D_k
  Matrix inverse;   // (D_k A^T A D_k + (rho + ridge) I)^+
  double rho = 1.0;
};

inline BkSystem make_Bk_system(const Matrix& XtA, const Matrix& AtA, const Vector& Dk, double rho,
                               double ridge = 0.0) {
  BkSystem sys;
  sys.data_rhs = XtA * Dk.asDiagonal();
  Matrix lhs = Dk.asDiagonal() * AtA * Dk.asDiagonal();
  lhs.diagonal().array() += rho + ridge;
  sys.inverse = linalg::pseudo_inverse(lhs);
  sys.rho = rho;
  return sys;
}

/// Minimizer of the Lagrangian in B_k for the auxiliaries/duals given.
inline Matrix solve_Bk(const BkSystem& sys, const Matrix& Z, const Matrix& mu_Z, const Matrix& Y,
                       const Matrix& mu_Delta) {
  return (sys.data_rhs + 0.5 * sys.rho * (Z - mu_Z + Y - mu_Delta)).lazyProduct(sys.inverse);
}

/// (X_k^T A D_k + rho/2 M)(D_k A^T A D_k + (rho + ridge) I)^+ with
/// M = Z - mu_Z + Y - mu_Delta.
inline Matrix update_Bk(const Matrix& Xk, const Matrix& A, const Vector& Dk, const Matrix& Z,
                        const Matrix& mu_Z, const Matrix& Y, const Matrix& mu_Delta, double rho,
                        double ridge = 0.0) {
  if (!(rho > 0.0)) throw std::invalid_argument("update_Bk: rho must be positive");
  if (!(ridge >= 0.0)) throw std::invalid_argument("update_Bk: ridge must be non-negative");
  return solve_Bk(make_Bk_system(Xk.transpose() * A, A.transpose() * A, Dk, rho, ridge), Z, mu_Z, Y, mu_Delta);
}

// ---------------------------------------------------------------------------
// Smoothness auxiliaries

/// Solves the tridiagonal stationarity system of the Z_B sub-problem.
///
/// Row k: -2l Z_{k-1} + (c_k l + rho_k) Z_k - 2l Z_{k+1} = rho_k inputs[k],
/// with c_k = 2 on the two boundary rows and 4 inside. The coefficients are
/// scalars, so Thomas elimination runs on scalars with matrix right-hand sides.
inline std::vector<Matrix> solve_ZB_tridiagonal(double lambda_B, const std::vector<Matrix>& inputs,
                                                std::span<const double> rho) {
  const std::size_t K = inputs.size();
  if (K == 0) throw std::invalid_argument("solve_ZB_tridiagonal: K must be >= 1");
  if (rho.size() != K) throw std::invalid_argument("solve_ZB_tridiagonal: rho size mismatch");
  if (K == 1 || lambda_B == 0.0) return inputs;

  const double off = -2.0 * lambda_B;
  std::vector<double> upper(K, 0.0);
  std::vector<Matrix> rhs(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double coupling = (k == 0 || k + 1 == K) ? 2.0 : 4.0;
    const double diag = coupling * lambda_B + rho[k];
    Matrix b = rho[k] * inputs[k];
    double denom = diag;
    if (k > 0) {
      denom -= off * upper[k - 1];
      b -= off * rhs[k - 1];
    }
    upper[k] = off / denom;
    rhs[k] = b / denom;
  }
  std::vector<Matrix> Z(K);
  Z[K - 1] = rhs[K - 1];
  for (std::size_t k = K - 1; k-- > 0;) Z[k] = rhs[k] - upper[k] * Z[k + 1];
  return Z;
}

// ---------------------------------------------------------------------------
// Approximate projection onto the PARAFAC2 set

struct Projection {
  std::vector<Matrix> Y;
  std::vector<Matrix> P;
  Matrix DeltaB;
  bool reinitialized = false;  // DeltaB collapsed to zero and was reset
};

/// Alternates orthogonal-Procrustes updates of P_k with the rho-weighted
/// average DeltaB = sum rho_k P_k^T T_k / sum rho_k, n_inner times.
/// The returned Y_k = P_k DeltaB share one Gram matrix exactly.
inline Projection project_approx_P(const std::vector<Matrix>& targets, std::span<const double> rho,
                                   const Matrix& warm_DeltaB, int n_inner) {
  const std::size_t K = targets.size();
  if (K == 0) throw std::invalid_argument("project_approx_P: no targets");
  if (rho.size() != K) throw std::invalid_argument("project_approx_P: rho size mismatch");
  if (n_inner < 1) throw std::invalid_argument("project_approx_P: n_inner must be >= 1");
  const Index J = targets.front().rows();
  const Index R = targets.front().cols();
  if (R > J) throw std::invalid_argument("project_approx_P: requires R <= J");

  Projection out;
  out.P.resize(K);
  out.DeltaB = warm_DeltaB;
  if (out.DeltaB.rows() != R || out.DeltaB.cols() != R) {
    out.DeltaB = Matrix::Identity(R, R);
  } else if (out.DeltaB.squaredNorm() == 0.0) {
    out.DeltaB = Matrix::Identity(R, R);
    out.reinitialized = true;
  }
  double rho_sum = 0.0;
  for (double r : rho) rho_sum += r;

  for (int it = 0; it < n_inner; ++it) {
    for (std::size_t k = 0; k < K; ++k) out.P[k] = linalg::polar_factor(targets[k].lazyProduct(out.DeltaB.transpose()));
    Matrix avg = Matrix::Zero(R, R);
    for (std::size_t k = 0; k < K; ++k) avg.noalias() += rho[k] * out.P[k].transpose().lazyProduct(targets[k]);
    avg /= rho_sum;
    if (avg.squaredNorm() == 0.0) {
      avg = Matrix::Identity(R, R);
      out.reinitialized = true;
    }
    out.DeltaB = std::move(avg);
  }
  out.Y.resize(K);
  for (std::size_t k = 0; k < K; ++k) out.Y[k] = out.P[k].lazyProduct(out.DeltaB);
  return out;
}

// ---------------------------------------------------------------------------
// D_k update

struct DkUpdate {
  Vector d;
  Vector z;
  Vector mu;
};

/// One ADMM cycle for D_k: ridge-regularized least-squares solve for d,
/// non-negative projection for z, then dual ascent.
///
/// `gram` is (A^T A) o (B_k^T B_k); `diag_AtXB` is diag(A^T X_k B_k).
inline DkUpdate admm_cycle_Dk(const Matrix& gram, const Vector& diag_AtXB, const Vector& z, const Vector& mu,
                              double rho, double lambda_D) {
  if (!(rho > 0.0)) throw std::invalid_argument("admm_cycle_Dk: rho must be positive");
  Matrix lhs = 2.0 * gram;
  lhs.diagonal().array() += 2.0 * lambda_D + rho;
  const Vector rhs = 2.0 * diag_AtXB + rho * (z - mu);
  DkUpdate u;
  u.d = lhs.ldlt().solve(rhs);
  u.z = (u.d + mu).cwiseMax(0.0);
  u.mu = u.d - u.z + mu;
  return u;
}

struct DUpdate {
  std::vector<Vector> D;
  std::vector<Vector> Z_D;
  std::vector<Vector> mu_D;
};

inline DUpdate admm_cycle_D(const TensorSlices& data, const Matrix& A, const std::vector<Matrix>& B,
                            const std::vector<Vector>& Z_D, const std::vector<Vector>& mu_D,
                            std::span<const double> rho_D, double lambda_D) {
  const Matrix AtA = A.transpose() * A;
  DUpdate out;
  for (Index k = 0; k < data.K(); ++k) {
    const auto kk = static_cast<std::size_t>(k);
    const Matrix gram = AtA.cwiseProduct(B[kk].transpose() * B[kk]);
    const Vector diag = (A.transpose() * data[k] * B[kk]).diagonal();
    DkUpdate u = admm_cycle_Dk(gram, diag, Z_D[kk], mu_D[kk], rho_D[kk], lambda_D);
    out.D.push_back(std::move(u.d));
    out.Z_D.push_back(std::move(u.z));
    out.mu_D.push_back(std::move(u.mu));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dual ascent for the two B splits

inline std::pair<Matrix, Matrix> dual_step_B(const Matrix& Bk, const Matrix& Z, const Matrix& Y,
                                             const Matrix& mu_Z, const Matrix& mu_Delta) {
  return {Bk - Z + mu_Z, Bk - Y + mu_Delta};
}

}  // namespace tparafac2

#endif  // TPARAFAC2_KERNELS_HPP_
