#ifndef TPARAFAC2_SOLVER_HPP_
#define TPARAFAC2_SOLVER_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tparafac2/core.hpp"
#include "tparafac2/kernels.hpp"

namespace tparafac2 {

enum class ExitReason { loss_tolerance, max_iterations, diverged };

inline std::string_view to_string(ExitReason r) {
  switch (r) {
    case ExitReason::loss_tolerance: return "loss-tolerance";
    case ExitReason::max_iterations: return "max-iterations";
    case ExitReason::diverged: return "diverged";
  }
  return "unknown";
}

inline ExitReason exit_reason_from_string(std::string_view s) {
  if (s == "loss-tolerance") return ExitReason::loss_tolerance;
  if (s == "max-iterations") return ExitReason::max_iterations;
  if (s == "diverged") return ExitReason::diverged;
  throw std::invalid_argument("unknown exit reason: " + std::string(s));
}

struct SolverConfig {
  Index R = 3;
  RegularizationConfig reg;
  int max_outer = 2000;
  int max_inner_B = 5;
  double abs_tol_loss = 1e-10;
  double rel_tol_loss = 1e-8;
  double feas_tol = 1e-4;
  double inner_tol = 1e-5;
  int projection_inner = 5;  // Procrustes/averaging sweeps per projection
  std::uint64_t seed = 0;

  void validate() const {
    reg.validate();
    if (R < 1) throw std::invalid_argument("SolverConfig: R must be >= 1");
    if (max_outer < 1) throw std::invalid_argument("SolverConfig: max_outer must be >= 1");
    if (max_inner_B < 1) throw std::invalid_argument("SolverConfig: max_inner_B must be >= 1");
    if (projection_inner < 1) throw std::invalid_argument("SolverConfig: projection_inner must be >= 1");
    if (!(abs_tol_loss > 0) || !(rel_tol_loss > 0) || !(feas_tol > 0) || !(inner_tol > 0))
      throw std::invalid_argument("SolverConfig: tolerances must be positive");
  }
};

struct FitResult {
  Parafac2Factors factors;
  AdmmState state;
  std::vector<double> loss_trace;
  int outer_iters = 0;
  bool converged = false;
  double feas_gap_B_Z = 0.0;
  double feas_gap_B_Y = 0.0;
  double feas_gap_D = 0.0;
  ExitReason exit_reason = ExitReason::max_iterations;

  double final_loss() const { return loss_trace.empty() ? std::numeric_limits<double>::quiet_NaN() : loss_trace.back(); }
};

namespace detail {

/// ||a - b|| / ||b||, falling back to the absolute distance when b = 0.
inline double relative_distance(const Matrix& a, const Matrix& b) {
  const double diff = (a - b).norm();
  const double den = b.norm();
  return den > 0.0 ? diff / den : diff;
}

template <typename M>
double stacked_relative_gap(const std::vector<M>& x, const std::vector<M>& aux) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    num += (x[k] - aux[k]).squaredNorm();
    den += aux[k].squaredNorm();
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

inline Matrix uniform_matrix(std::mt19937_64& rng, Index rows, Index cols) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = unif(rng);
  return m;
}

inline std::vector<BkSystem> make_B_systems(const TensorSlices& data, const Parafac2Factors& f,
                                            std::span<const double> rho_B, double ridge_B = 0.0) {
  const Matrix AtA = f.A.transpose() * f.A;
  std::vector<BkSystem> systems;
  systems.reserve(f.B.size());
  for (Index k = 0; k < data.K(); ++k) {
    const auto kk = static_cast<std::size_t>(k);
    systems.push_back(make_Bk_system(data[k].transpose() * f.A, AtA, f.D[kk], rho_B[kk], ridge_B));
  }
  return systems;
}

struct InnerBOutcome {
  int iterations = 0;
};

// Algorithm body of the B cycle, operating on precomputed B_k systems.
inline InnerBOutcome run_inner_B(const std::vector<BkSystem>& systems, std::vector<Matrix>& B, AdmmState& st,
                                 double lambda_B, int max_inner, double inner_tol, int projection_inner) {
  const std::size_t K = systems.size();
  InnerBOutcome out;
  std::vector<Matrix> inputs(K);
  for (int it = 0; it < max_inner; ++it) {
    for (std::size_t k = 0; k < K; ++k) B[k] = solve_Bk(systems[k], st.Z_B[k], st.mu_ZB[k], st.Y_B[k], st.mu_DeltaB[k]);

    for (std::size_t k = 0; k < K; ++k) inputs[k] = B[k] + st.mu_ZB[k];
    st.Z_B = solve_ZB_tridiagonal(lambda_B, inputs, st.rho_B);

    for (std::size_t k = 0; k < K; ++k) inputs[k] = B[k] + st.mu_DeltaB[k];
    Projection proj = project_approx_P(inputs, st.rho_B, st.DeltaB, projection_inner);
    st.Y_B = std::move(proj.Y);
    st.P = std::move(proj.P);
    st.DeltaB = std::move(proj.DeltaB);

    double gap_Z = 0.0;
    double gap_Y = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      auto [mu_Z, mu_D] = dual_step_B(B[k], st.Z_B[k], st.Y_B[k], st.mu_ZB[k], st.mu_DeltaB[k]);
      st.mu_ZB[k] = std::move(mu_Z);
      st.mu_DeltaB[k] = std::move(mu_D);
      gap_Z = std::max(gap_Z, relative_distance(B[k], st.Z_B[k]));
      gap_Y = std::max(gap_Y, relative_distance(B[k], st.Y_B[k]));
    }
    out.iterations = it + 1;
    if (gap_Z <= inner_tol && gap_Y <= inner_tol) break;
  }
  return out;
}

}  // namespace detail

/// Fresh ADMM state around the given factors: auxiliaries equal to the
/// primal variables (Y_B after one projection pass), zero duals, step sizes
/// from the Gram-trace rule.
inline AdmmState initial_state(const Parafac2Factors& f, int projection_inner = 5) {
  const std::size_t K = f.B.size();
  const Index J = f.B.front().rows();
  const Index R = f.rank();
  AdmmState st;
  const Matrix AtA = f.A.transpose() * f.A;
  for (std::size_t k = 0; k < K; ++k) {
    st.rho_B.push_back(step_size_B(AtA, f.D[k]));
    st.rho_D.push_back(step_size_D(AtA, f.B[k].transpose() * f.B[k]));
  }
  st.Z_B = f.B;
  st.mu_ZB.assign(K, Matrix::Zero(J, R));
  st.mu_DeltaB.assign(K, Matrix::Zero(J, R));
  Projection proj = project_approx_P(f.B, st.rho_B, Matrix(), projection_inner);
  st.Y_B = std::move(proj.Y);
  st.P = std::move(proj.P);
  st.DeltaB = std::move(proj.DeltaB);
  st.Z_D = f.D;
  st.mu_D.assign(K, Vector::Zero(R));
  return st;
}

/// Uniform(0,1) factors drawn in the order A, B_1..B_K, D_1..D_K from a
/// 64-bit Mersenne twister seeded with `seed`.
inline Parafac2Factors random_factors(Index I, Index J, Index K, Index R, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Parafac2Factors f;
  f.A = detail::uniform_matrix(rng, I, R);
  for (Index k = 0; k < K; ++k) f.B.push_back(detail::uniform_matrix(rng, J, R));
  for (Index k = 0; k < K; ++k) f.D.push_back(detail::uniform_matrix(rng, R, 1).col(0));
  return f;
}

inline std::pair<Parafac2Factors, AdmmState> initialize(const TensorSlices& data, const SolverConfig& config,
                                                        const std::optional<Parafac2Factors>& init = std::nullopt) {
  config.validate();
  Parafac2Factors f = init ? *init : random_factors(data.I(), data.J(), data.K(), config.R, config.seed);
  check_shapes(f, &data);
  AdmmState st = initial_state(f, config.projection_inner);
  return {std::move(f), std::move(st)};
}

/// Rescales each component as a_r -> alpha a_r, b_r -> beta b_r,
/// d_r -> gamma d_r with alpha beta gamma = 1, so every reconstruction is
/// unchanged, choosing the factors that minimize the penalty terms
/// (they become equal). ADMM auxiliaries and scaled duals follow their
/// primal variables. Components with a vanishing penalty term are left alone.
///
/// Without this the outer loop spends thousands of iterations drifting
/// along the scale directions, where the loss is nearly flat.
inline void balance_component_scales(Parafac2Factors& f, AdmmState& st, const RegularizationConfig& reg) {
  const std::size_t K = f.B.size();
  for (Index r = 0; r < f.rank(); ++r) {
    const double a = reg.lambda_A * f.A.col(r).squaredNorm();
    double b = 0.0, d = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      b += reg.ridge_B * f.B[k].col(r).squaredNorm();
      if (k > 0) b += reg.lambda_B * (f.B[k].col(r) - f.B[k - 1].col(r)).squaredNorm();
      d += reg.lambda_D * f.D[k](r) * f.D[k](r);
    }
    if (!(a > 0.0) || !(b > 0.0) || !(d > 0.0)) continue;
    const double g = std::cbrt(a * b * d);
    const double alpha = std::sqrt(g / a), beta = std::sqrt(g / b), gamma = std::sqrt(g / d);
    if (!std::isfinite(alpha * beta * gamma)) continue;
    f.A.col(r) *= alpha;
    for (std::size_t k = 0; k < K; ++k) {
      f.B[k].col(r) *= beta;
      st.Z_B[k].col(r) *= beta;
      st.Y_B[k].col(r) *= beta;
      st.mu_ZB[k].col(r) *= beta;
      st.mu_DeltaB[k].col(r) *= beta;
      f.D[k](r) *= gamma;
      st.Z_D[k](r) *= gamma;
      st.mu_D[k](r) *= gamma;
    }
    if (st.DeltaB.cols() == f.rank()) st.DeltaB.col(r) *= beta;
  }
}

struct InnerBResult {
  std::vector<Matrix> B;
  AdmmState state;
  int iterations = 0;
};

/// ADMM cycle for the evolving-mode factors with A and D held fixed:
/// B_k closed forms, smoothness auxiliaries, approximate PARAFAC2
/// projection, dual steps. Uses the step sizes already stored in `state`.
inline InnerBResult inner_admm_B(const TensorSlices& data, const Parafac2Factors& factors, AdmmState state,
                                 double lambda_B, int max_inner_B, double inner_tol, int projection_inner = 5,
                                 double ridge_B = 0.0) {
  check_shapes(factors, &data);
  if (max_inner_B < 1) throw std::invalid_argument("inner_admm_B: max_inner_B must be >= 1");
  InnerBResult res;
  res.B = factors.B;
  const auto systems = detail::make_B_systems(data, factors, state.rho_B, ridge_B);
  res.iterations =
      detail::run_inner_B(systems, res.B, state, lambda_B, max_inner_B, inner_tol, projection_inner).iterations;
  res.state = std::move(state);
  return res;
}

/// Fits a (t)PARAFAC2 model by AO-ADMM. lambda_B = 0 gives plain PARAFAC2
/// with ridge penalties on A and D.
///
/// Each outer iteration runs the B cycle, one D cycle and the closed-form A
/// update, in that order. The run converges when the change of the
/// regularized loss meets the absolute or relative tolerance and every
/// feasibility gap is at most feas_tol.
inline FitResult fit(const TensorSlices& data, const SolverConfig& config,
                     const std::optional<Parafac2Factors>& init = std::nullopt) {
  config.validate();
  if (config.R > std::min(data.I(), data.J()))
    throw std::invalid_argument("fit: R must not exceed min(I, J)");
  const RegularizationConfig& reg = config.reg;
  auto [f, st] = initialize(data, config, init);
  const std::size_t K = f.B.size();

  FitResult res;
  const double initial_loss = objective(data, f, reg);
  double prev_loss = initial_loss;
  const double blowup = 1e6 * std::max(initial_loss, std::numeric_limits<double>::min());
  Parafac2Factors last_good = f;
  AdmmState last_good_state = st;

  std::vector<Matrix> XB(K);
  res.exit_reason = ExitReason::max_iterations;
  for (int it = 1; it <= config.max_outer; ++it) {
    Matrix AtA = f.A.transpose() * f.A;
    for (std::size_t k = 0; k < K; ++k) st.rho_B[k] = step_size_B(AtA, f.D[k]);
    const auto systems = detail::make_B_systems(data, f, st.rho_B, reg.ridge_B);
    detail::run_inner_B(systems, f.B, st, reg.lambda_B, config.max_inner_B, config.inner_tol,
                        config.projection_inner);

    for (std::size_t k = 0; k < K; ++k) {
      XB[k] = data[static_cast<Index>(k)] * f.B[k];
      const Matrix gram = AtA.cwiseProduct(f.B[k].transpose() * f.B[k]);
      st.rho_D[k] = step_size_D(AtA, f.B[k].transpose() * f.B[k]);
      const Vector diag = f.A.cwiseProduct(XB[k]).colwise().sum().transpose();
      DkUpdate u = admm_cycle_Dk(gram, diag, st.Z_D[k], st.mu_D[k], st.rho_D[k], reg.lambda_D);
      f.D[k] = std::move(u.d);
      st.Z_D[k] = std::move(u.z);
      st.mu_D[k] = std::move(u.mu);
    }

    f.A = update_A(XB, f.B, f.D, reg.lambda_A);
    balance_component_scales(f, st, reg);

    const double loss = objective(data, f, reg);
    res.outer_iters = it;
    if (!std::isfinite(loss) || loss > blowup) {
      res.exit_reason = ExitReason::diverged;
      f = std::move(last_good);
      st = std::move(last_good_state);
      if (res.loss_trace.empty()) res.loss_trace.push_back(loss);
      break;
    }
    res.loss_trace.push_back(loss);

    res.feas_gap_B_Z = detail::stacked_relative_gap(f.B, st.Z_B);
    res.feas_gap_B_Y = detail::stacked_relative_gap(f.B, st.Y_B);
    res.feas_gap_D = detail::stacked_relative_gap(f.D, st.Z_D);
    const double change = std::abs(prev_loss - loss);
    const bool loss_ok = change <= config.abs_tol_loss || change <= config.rel_tol_loss * std::abs(prev_loss);
    const bool feasible = res.feas_gap_B_Z <= config.feas_tol && res.feas_gap_B_Y <= config.feas_tol &&
                          res.feas_gap_D <= config.feas_tol;
    if (loss_ok && feasible) {
      res.exit_reason = ExitReason::loss_tolerance;
      break;
    }
    prev_loss = loss;
    if (it < config.max_outer) {
      last_good = f;
      last_good_state = st;
    }
  }

  res.converged = res.exit_reason == ExitReason::loss_tolerance;
  // The reported strengths are the non-negative auxiliary copy.
  f.D = st.Z_D;
  res.factors = std::move(f);
  res.state = std::move(st);
  return res;
}

}  // namespace tparafac2

#endif  // TPARAFAC2_SOLVER_HPP_
