#ifndef TPARAFAC2_CMF_HPP_
#define TPARAFAC2_CMF_HPP_

// Coupled matrix factorization with temporal smoothness (tCMF) and its
// variant with non-negative A (NNtCMF):
//
//   min sum_k ||X_k - A B_k^T||^2 + lambda_B sum_k ||B_k - B_{k-1}||^2
//       + lambda_A ||A||^2 + ridge_B sum_k ||B_k||^2
//
// fitted with the same AO-ADMM machinery as the PARAFAC2 solver but
// without strengths or the PARAFAC2 constraint.

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "tparafac2/core.hpp"
#include "tparafac2/evaluation.hpp"
#include "tparafac2/kernels.hpp"
#include "tparafac2/linalg.hpp"
#include "tparafac2/solver.hpp"

namespace tparafac2::cmf {

struct CmfFactors {
  Matrix A;
  std::vector<Matrix> B;

  Index rank() const { return A.cols(); }
  Index num_slices() const { return static_cast<Index>(B.size()); }
};

struct CmfFitResult {
  CmfFactors factors;
  std::vector<double> loss_trace;
  int outer_iters = 0;
  bool converged = false;
  double feas_gap_B_Z = 0.0;
  double feas_gap_A = 0.0;  // only for non-negative A
  ExitReason exit_reason = ExitReason::max_iterations;

  double final_loss() const { return loss_trace.empty() ? std::numeric_limits<double>::quiet_NaN() : loss_trace.back(); }
};

inline void check_shapes(const TensorSlices& data, const CmfFactors& f) {
  if (f.B.size() != static_cast<std::size_t>(data.K()) || f.A.rows() != data.I())
    throw std::invalid_argument("CmfFactors: shapes do not match data");
  for (const auto& b : f.B)
    if (b.rows() != data.J() || b.cols() != f.rank()) throw std::invalid_argument("CmfFactors: B_k has wrong shape");
}

inline double data_fit(const TensorSlices& data, const CmfFactors& f) {
  check_shapes(data, f);
  double s = 0.0;
  for (Index k = 0; k < data.K(); ++k) s += (data[k] - f.A * f.B[static_cast<std::size_t>(k)].transpose()).squaredNorm();
  return s;
}

/// Data fit plus temporal smoothness, plus optional ridges on A and B_k.
inline double objective(const TensorSlices& data, const CmfFactors& f, double lambda_B, double lambda_A = 0.0,
                        double ridge_B = 0.0) {
  double loss = data_fit(data, f) + lambda_B * smoothness_penalty(f.B) + lambda_A * f.A.squaredNorm();
  if (ridge_B != 0.0)
    for (const auto& b : f.B) loss += ridge_B * b.squaredNorm();
  return loss;
}

/// Rescales a_r by alpha and every b_{k,r} by 1/alpha so that the A ridge
/// and the B penalties of each component are equal. The model is unchanged
/// and the penalty can only decrease. Auxiliaries and duals follow their
/// factor so the ADMM state stays consistent.
inline void balance_component_scales(CmfFactors& f, std::vector<Matrix>& Z_B, std::vector<Matrix>& mu_B, Matrix& Z_A,
                                     Matrix& mu_A, double lambda_A, double lambda_B, double ridge_B) {
  const std::size_t K = f.B.size();
  for (Index r = 0; r < f.rank(); ++r) {
    const double a = lambda_A * f.A.col(r).squaredNorm();
    double b = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      b += ridge_B * f.B[k].col(r).squaredNorm();
      if (k > 0) b += lambda_B * (f.B[k].col(r) - f.B[k - 1].col(r)).squaredNorm();
    }
    if (!(a > 0.0) || !(b > 0.0)) continue;
    const double alpha = std::sqrt(std::sqrt(b / a));
    if (!std::isfinite(alpha) || !std::isfinite(1.0 / alpha)) continue;
    f.A.col(r) *= alpha;
    Z_A.col(r) *= alpha;
    mu_A.col(r) *= alpha;
    for (std::size_t k = 0; k < K; ++k) {
      f.B[k].col(r) /= alpha;
      Z_B[k].col(r) /= alpha;
      mu_B[k].col(r) /= alpha;
    }
  }
}

/// CMF view of a PARAFAC2 model: the strengths are absorbed into B_k.
inline CmfFactors from_parafac2(const Parafac2Factors& f) {
  CmfFactors out;
  out.A = f.A;
  for (std::size_t k = 0; k < f.B.size(); ++k) out.B.push_back(f.B[k] * f.D[k].asDiagonal());
  return out;
}

/// A -> A Q^{-T}, B_k -> B_k Q for every k. Leaves every product A B_k^T
/// unchanged.
inline CmfFactors apply_gauge(const CmfFactors& f, const Matrix& Q) {
  CmfFactors out;
  out.A = f.A * Q.inverse().transpose();
  for (const auto& b : f.B) out.B.push_back(b * Q);
  return out;
}

/// Factor match score over the A and concatenated-B modes only.
inline MatchReport fms_cmf(const CmfFactors& estimate, const CmfFactors& truth) {
  if (estimate.rank() != truth.rank()) throw std::invalid_argument("fms_cmf: component counts differ");
  if (estimate.A.rows() != truth.A.rows() || estimate.B.size() != truth.B.size() || estimate.B.empty() ||
      estimate.B.front().rows() != truth.B.front().rows())
    throw std::invalid_argument("fms_cmf: factor shapes differ");
  auto stack = [](const CmfFactors& f) {
    const Index J = f.B.front().rows();
    Matrix b(f.num_slices() * J, f.rank());
    for (Index k = 0; k < f.num_slices(); ++k) b.middleRows(k * J, J) = f.B[static_cast<std::size_t>(k)];
    return b;
  };
  const Matrix eb = stack(estimate);
  const Matrix tb = stack(truth);
  std::vector<int> zero_norm;
  MatchReport rep = match_from_scores(congruence_scores({&estimate.A, &eb}, {&truth.A, &tb}, &zero_norm));
  std::sort(zero_norm.begin(), zero_norm.end());
  rep.zero_norm_components = std::move(zero_norm);
  return rep;
}

inline MatchReport fms_cmf(const CmfFactors& estimate, const Parafac2Factors& truth) {
  return fms_cmf(estimate, from_parafac2(truth));
}

/// Fits tCMF (nonneg_A = false) or NNtCMF (nonneg_A = true).
///
/// Uses config.R, config.reg.lambda_A, lambda_B and ridge_B; the D
/// penalties are ignored. Without an explicit init, A and B are taken from
/// random_factors(config.seed), so CMF runs share initializations with the
/// PARAFAC2 runs of the same seed.
inline CmfFitResult fit_cmf(const TensorSlices& data, const SolverConfig& config, bool nonneg_A,
                            const std::optional<CmfFactors>& init = std::nullopt) {
  config.validate();
  if (config.R > std::min(data.I(), data.J())) throw std::invalid_argument("fit_cmf: R must not exceed min(I, J)");
  const double lambda_A = config.reg.lambda_A;
  const double lambda_B = config.reg.lambda_B;
  const double ridge_B = config.reg.ridge_B;
  const Index R = config.R;
  const std::size_t K = static_cast<std::size_t>(data.K());

  CmfFactors f;
  if (init) {
    f = *init;
  } else {
    Parafac2Factors p = random_factors(data.I(), data.J(), data.K(), R, config.seed);
    f.A = std::move(p.A);
    f.B = std::move(p.B);
  }
  check_shapes(data, f);

  std::vector<Matrix> Z_B = f.B;
  std::vector<Matrix> mu_B(K, Matrix::Zero(data.J(), R));
  std::vector<double> rho_B(K, 1.0);
  Matrix Z_A = nonneg_A ? Matrix(f.A.cwiseMax(0.0)) : f.A;
  Matrix mu_A = Matrix::Zero(f.A.rows(), R);

  CmfFitResult res;
  const double initial_loss = objective(data, f, lambda_B, lambda_A, ridge_B);
  const double blowup = 1e6 * std::max(initial_loss, std::numeric_limits<double>::min());
  double prev_loss = initial_loss;
  CmfFactors last_good = f;
  std::vector<Matrix> XtA(K), XB(K), inputs(K);
  res.exit_reason = ExitReason::max_iterations;

  for (int it = 1; it <= config.max_outer; ++it) {
    // B cycle against the smoothness split.
    const Matrix AtA = f.A.transpose() * f.A;
    const double rho = std::max(AtA.trace() / static_cast<double>(R), kRhoFloor);
    std::fill(rho_B.begin(), rho_B.end(), rho);
    Matrix lhs = AtA;
    lhs.diagonal().array() += 0.5 * rho + ridge_B;
    const Matrix inv = linalg::pseudo_inverse(lhs);
    for (std::size_t k = 0; k < K; ++k) XtA[k] = data[static_cast<Index>(k)].transpose() * f.A;
    for (int inner = 0; inner < config.max_inner_B; ++inner) {
      for (std::size_t k = 0; k < K; ++k) f.B[k] = (XtA[k] + 0.5 * rho * (Z_B[k] - mu_B[k])) * inv;
      for (std::size_t k = 0; k < K; ++k) inputs[k] = f.B[k] + mu_B[k];
      Z_B = solve_ZB_tridiagonal(lambda_B, inputs, rho_B);
      double gap = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        mu_B[k] += f.B[k] - Z_B[k];
        gap = std::max(gap, detail::relative_distance(f.B[k], Z_B[k]));
      }
      if (gap <= config.inner_tol) break;
    }

    // A update, with a non-negativity split when requested.
    Matrix rhs = Matrix::Zero(data.I(), R);
    Matrix gram = Matrix::Zero(R, R);
    for (std::size_t k = 0; k < K; ++k) {
      XB[k] = data[static_cast<Index>(k)] * f.B[k];
      rhs += XB[k];
      gram += f.B[k].transpose() * f.B[k];
    }
    if (!nonneg_A) {
      gram.diagonal().array() += lambda_A;
      f.A = rhs * linalg::pseudo_inverse(gram);
    } else {
      const double rho_A = std::max(gram.trace() / static_cast<double>(R), kRhoFloor);
      Matrix lhs_A = gram;
      lhs_A.diagonal().array() += lambda_A + 0.5 * rho_A;
      const Matrix inv_A = linalg::pseudo_inverse(lhs_A);
      for (int inner = 0; inner < config.max_inner_B; ++inner) {
        f.A = (rhs + 0.5 * rho_A * (Z_A - mu_A)) * inv_A;
        Z_A = (f.A + mu_A).cwiseMax(0.0);
        mu_A += f.A - Z_A;
        if (detail::relative_distance(f.A, Z_A) <= config.inner_tol) break;
      }
    }
    balance_component_scales(f, Z_B, mu_B, Z_A, mu_A, lambda_A, lambda_B, ridge_B);

    const double loss = objective(data, f, lambda_B, lambda_A, ridge_B);
    res.outer_iters = it;
    if (!std::isfinite(loss) || loss > blowup) {
      res.exit_reason = ExitReason::diverged;
      f = std::move(last_good);
      if (res.loss_trace.empty()) res.loss_trace.push_back(loss);
      break;
    }
    res.loss_trace.push_back(loss);
    res.feas_gap_B_Z = detail::stacked_relative_gap(f.B, Z_B);
    res.feas_gap_A = nonneg_A ? detail::relative_distance(f.A, Z_A) : 0.0;
    const double change = std::abs(prev_loss - loss);
    const bool loss_ok = change <= config.abs_tol_loss || change <= config.rel_tol_loss * std::abs(prev_loss);
    if (loss_ok && res.feas_gap_B_Z <= config.feas_tol && res.feas_gap_A <= config.feas_tol) {
      res.exit_reason = ExitReason::loss_tolerance;
      break;
    }
    prev_loss = loss;
    last_good = f;
  }

  res.converged = res.exit_reason == ExitReason::loss_tolerance;
  if (nonneg_A && res.exit_reason != ExitReason::diverged) f.A = Z_A;
  res.factors = std::move(f);
  return res;
}

/// Signed-congruence degeneracy check on the A and concatenated-B modes.
inline bool detect_degenerate(const CmfFactors& f, double threshold = kDefaultDegeneracyThreshold) {
  const Index J = f.B.front().rows();
  Matrix b(f.num_slices() * J, f.rank());
  for (Index k = 0; k < f.num_slices(); ++k) b.middleRows(k * J, J) = f.B[static_cast<std::size_t>(k)];
  for (Index i = 0; i < f.rank(); ++i)
    for (Index j = i + 1; j < f.rank(); ++j)
      if (linalg::cosine(f.A.col(i), f.A.col(j)) * linalg::cosine(b.col(i), b.col(j)) < -threshold) return true;
  return false;
}

}  // namespace tparafac2::cmf

#endif  // TPARAFAC2_CMF_HPP_
