#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "tparafac2/kernels.hpp"
#include "tparafac2/solver.hpp"

using namespace tparafac2;

namespace {

struct Rng {
  std::mt19937_64 eng;
  explicit Rng(std::uint64_t seed) : eng(seed) {}
  Matrix normal(Index r, Index c) {
    std::normal_distribution<double> g;
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = g(eng);
    return m;
  }
  Vector normal(Index n) { return normal(n, 1).col(0); }
  Vector positive(Index n, double lo = 0.5, double hi = 2.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = u(eng);
    return v;
  }
  Matrix orthonormal(Index rows, Index cols) {
    Eigen::HouseholderQR<Matrix> qr(normal(rows, cols));
    return qr.householderQ() * Matrix::Identity(rows, cols);
  }
};

double rel(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

// Dense oracle for the smoothness auxiliary: minimizes
// lambda sum ||Z_k - Z_{k-1}||^2 + sum rho_k/2 ||Z_k - in_k||^2 entrywise.
std::vector<Matrix> dense_ZB(double lambda, const std::vector<Matrix>& in, const std::vector<double>& rho) {
  const Index K = static_cast<Index>(in.size());
  Matrix diff = Matrix::Zero(std::max<Index>(K - 1, 0), K);
  for (Index k = 0; k + 1 < K; ++k) {
    diff(k, k) = -1.0;
    diff(k, k + 1) = 1.0;
  }
  Matrix H = 2.0 * lambda * diff.transpose() * diff;
  for (Index k = 0; k < K; ++k) H(k, k) += rho[static_cast<std::size_t>(k)];
  const Eigen::PartialPivLU<Matrix> lu(H);
  std::vector<Matrix> out(in.size(), Matrix::Zero(in[0].rows(), in[0].cols()));
  for (Index i = 0; i < in[0].rows(); ++i)
    for (Index j = 0; j < in[0].cols(); ++j) {
      Vector b(K);
      for (Index k = 0; k < K; ++k) b(k) = rho[static_cast<std::size_t>(k)] * in[static_cast<std::size_t>(k)](i, j);
      const Vector z = lu.solve(b);
      for (Index k = 0; k < K; ++k) out[static_cast<std::size_t>(k)](i, j) = z(k);
    }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Step sizes

TEST(StepSizes, GramTraceRule) {
  Rng rng(1);
  const Matrix A = rng.normal(6, 3);
  const Matrix B = rng.normal(5, 3);
  const Vector d = rng.positive(3);
  const Matrix AtA = A.transpose() * A;
  EXPECT_NEAR(step_size_B(AtA, d), (d.asDiagonal() * AtA * d.asDiagonal()).trace() / 3.0, 1e-12);
  EXPECT_NEAR(step_size_D(AtA, B.transpose() * B), AtA.cwiseProduct(B.transpose() * B).trace() / 3.0, 1e-12);
  EXPECT_EQ(step_size_B(Matrix::Zero(3, 3), d), kRhoFloor);
}

// ---------------------------------------------------------------------------
// A update

TEST(UpdateA, OrthonormalSingleSlice) {
  Rng rng(2);
  const Matrix B = rng.orthonormal(6, 3);
  const Matrix X = rng.normal(5, 6);
  const TensorSlices data({X});
  Parafac2Factors f;
  f.A = rng.normal(5, 3);
  f.B = {B};
  f.D = {Vector::Ones(3)};
  EXPECT_LE(rel(update_A(data, f, 0.0), X * B), 1e-12);
}

TEST(UpdateA, HugeRidgeShrinksToZero) {
  Rng rng(3);
  std::vector<Matrix> s{rng.normal(5, 4), rng.normal(5, 4)};
  Parafac2Factors f;
  f.A = rng.normal(5, 2);
  f.B = {rng.normal(4, 2), rng.normal(4, 2)};
  f.D = {rng.positive(2), rng.positive(2)};
  const Matrix A = update_A(TensorSlices(s), f, 1e12);
  const Matrix rhs = s[0] * f.B[0] * f.D[0].asDiagonal() + s[1] * f.B[1] * f.D[1].asDiagonal();
  EXPECT_LE(A.norm(), 1e-6 * rhs.norm());
}

TEST(UpdateA, StationarityResidual) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    const Index I = 5, J = 4, K = 3, R = 2;
    std::vector<Matrix> s;
    Parafac2Factors f;
    f.A = rng.normal(I, R);
    for (Index k = 0; k < K; ++k) {
      s.push_back(rng.normal(I, J));
      f.B.push_back(rng.normal(J, R));
      f.D.push_back(rng.normal(R));
    }
    const double lambda = seed % 2 == 0 ? 0.0 : 0.37;
    const Matrix A = update_A(TensorSlices(s), f, lambda);
    // Gradient of sum ||X_k - A D_k B_k^T||^2 + lambda ||A||^2.
    Matrix grad = 2.0 * lambda * A;
    Matrix scale = Matrix::Zero(I, R);
    for (Index k = 0; k < K; ++k) {
      const Matrix BD = f.B[k] * f.D[k].asDiagonal();
      grad -= 2.0 * (s[k] - A * BD.transpose()) * BD;
      scale += s[k] * BD;
    }
    EXPECT_LE(grad.norm(), 1e-9 * scale.norm()) << "seed " << seed;
  }
}

// ---------------------------------------------------------------------------
// B_k update

TEST(UpdateBk, ZeroDataTermGivesHalfM) {
  Rng rng(4);
  const Matrix X = rng.normal(5, 4);
  const Matrix Z = rng.normal(4, 2), muZ = rng.normal(4, 2), Y = rng.normal(4, 2), muY = rng.normal(4, 2);
  const Matrix M = Z - muZ + Y - muY;
  EXPECT_LE(rel(update_Bk(X, Matrix::Zero(5, 2), Vector::Ones(2), Z, muZ, Y, muY, 2.0), 0.5 * M), 1e-14);
  EXPECT_LE(rel(update_Bk(X, rng.normal(5, 2), Vector::Zero(2), Z, muZ, Y, muY, 2.0), 0.5 * M), 1e-14);
}

TEST(UpdateBk, StationarityResidual) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(200 + seed);
    const Matrix X = rng.normal(5, 4), A = rng.normal(5, 2);
    const Vector d = rng.normal(2);
    const Matrix Z = rng.normal(4, 2), muZ = rng.normal(4, 2), Y = rng.normal(4, 2), muY = rng.normal(4, 2);
    const double rho = 1.7;
    const double ridge = seed % 2 == 0 ? 0.0 : 0.01;
    const Matrix B = update_Bk(X, A, d, Z, muZ, Y, muY, rho, ridge);
    // Gradient of ||X - A D B^T||^2 + ridge ||B||^2 + rho/2 ||B - Z + muZ||^2 + rho/2 ||B - Y + muY||^2.
    const Matrix AD = A * d.asDiagonal();
    const Matrix grad = -2.0 * (X - AD * B.transpose()).transpose() * AD + 2.0 * ridge * B +
                        rho * (B - Z + muZ) + rho * (B - Y + muY);
    const double scale = (X.transpose() * AD).norm() + rho * (Z.norm() + Y.norm());
    EXPECT_LE(grad.norm(), 1e-9 * scale) << "seed " << seed;
  }
}

TEST(UpdateBk, RejectsBadStep) {
  const Matrix z = Matrix::Zero(3, 2);
  EXPECT_THROW(update_Bk(Matrix::Zero(4, 3), Matrix::Zero(4, 2), Vector::Ones(2), z, z, z, z, 0.0),
               std::invalid_argument);
  EXPECT_THROW(update_Bk(Matrix::Zero(4, 3), Matrix::Zero(4, 2), Vector::Ones(2), z, z, z, z, 1.0, -1.0),
               std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Smoothness auxiliaries

TEST(SolveZB, ZeroLambdaDecouples) {
  Rng rng(5);
  std::vector<Matrix> in{rng.normal(3, 2), rng.normal(3, 2), rng.normal(3, 2)};
  const std::vector<double> rho{1.0, 2.0, 3.0};
  const auto Z = solve_ZB_tridiagonal(0.0, in, rho);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(Z[k], in[k]);
}

TEST(SolveZB, TwoByTwoHandExample) {
  const std::vector<Matrix> in{Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 3.0)};
  const std::vector<double> rho{2.0, 2.0};
  const auto Z = solve_ZB_tridiagonal(1.0, in, rho);
  EXPECT_NEAR(Z[0](0, 0), 5.0 / 3.0, 1e-14);
  EXPECT_NEAR(Z[1](0, 0), 7.0 / 3.0, 1e-14);
}

TEST(SolveZB, StrongCouplingGivesWeightedMean) {
  const std::vector<Matrix> in{Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 3.0)};
  const std::vector<double> rho{1.5, 1.5};
  const auto Z = solve_ZB_tridiagonal(1e9, in, rho);
  EXPECT_NEAR(Z[0](0, 0), 2.0, 1e-6);
  EXPECT_NEAR(Z[1](0, 0), 2.0, 1e-6);
}

TEST(SolveZB, MatchesDenseSolve) {
  Rng rng(6);
  std::uniform_real_distribution<double> u(0.01, 10.0);
  int cases = 0;
  for (int K : {1, 2, 3, 5, 8})
    for (int rep = 0; rep < 20; ++rep, ++cases) {
      std::vector<Matrix> in;
      std::vector<double> rho;
      for (int k = 0; k < K; ++k) {
        in.push_back(rng.normal(4, 3));
        rho.push_back(u(rng.eng));
      }
      const double lambda = std::pow(10.0, u(rng.eng) * 0.6 - 3.0);
      const auto Z = solve_ZB_tridiagonal(lambda, in, rho);
      const auto ref = dense_ZB(lambda, in, rho);
      for (int k = 0; k < K; ++k) EXPECT_LE(rel(Z[k], ref[k]), 1e-10) << "K=" << K << " rep=" << rep;
    }
  EXPECT_EQ(cases, 100);
}

TEST(SolveZB, RejectsBadInput) {
  EXPECT_THROW(solve_ZB_tridiagonal(1.0, {}, std::vector<double>{}), std::invalid_argument);
  EXPECT_THROW(solve_ZB_tridiagonal(1.0, {Matrix::Zero(1, 1)}, std::vector<double>{1.0, 2.0}),
               std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Projection

TEST(Projection, FixedPointOnMembers) {
  Rng rng(7);
  const Matrix H = rng.normal(3, 3);
  std::vector<Matrix> targets;
  for (int k = 0; k < 4; ++k) targets.push_back(rng.orthonormal(6, 3) * H);
  const std::vector<double> rho(4, 1.0);
  const Projection p = project_approx_P(targets, rho, H, 5);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_LE(rel(p.Y[k], targets[k]), 1e-10);
    EXPECT_LE((p.Y[k].transpose() * p.Y[k] - p.DeltaB.transpose() * p.DeltaB).norm(), 1e-10);
  }
}

TEST(Projection, GramResidualAlwaysTiny) {
  Rng rng(8);
  for (int rep = 0; rep < 50; ++rep) {
    const int K = 1 + rep % 6;
    std::vector<Matrix> targets;
    std::vector<double> rho;
    for (int k = 0; k < K; ++k) {
      targets.push_back(rng.normal(7, 3) * (rep % 3 + 1));
      rho.push_back(rng.positive(1, 0.1, 5.0)(0));
    }
    const Projection p = project_approx_P(targets, rho, rep % 2 ? rng.normal(3, 3) : Matrix(), 1 + rep % 5);
    const Matrix G = p.DeltaB.transpose() * p.DeltaB;
    for (const auto& y : p.Y) EXPECT_LE((y.transpose() * y - G).norm(), 1e-9 * std::max(1.0, G.norm()));
  }
}

TEST(Projection, BeatsRandomCompetitorsForSingleSlice) {
  Rng rng(9);
  const Matrix target = rng.normal(6, 3);
  const std::vector<double> rho{1.0};
  const Projection p = project_approx_P({target}, rho, Matrix(), 5);
  EXPECT_LE((p.Y[0].transpose() * p.Y[0] - p.DeltaB.transpose() * p.DeltaB).norm(), 1e-12 * p.DeltaB.squaredNorm());
  const double dist = (p.Y[0] - target).norm();
  for (int c = 0; c < 20; ++c) {
    const Matrix competitor = rng.orthonormal(6, 3) * p.DeltaB;
    EXPECT_LE(dist, (competitor - target).norm() + 1e-12);
  }
}

TEST(Projection, ZeroTargetsReinitialize) {
  const std::vector<Matrix> targets(3, Matrix::Zero(5, 2));
  const std::vector<double> rho(3, 1.0);
  const Projection p = project_approx_P(targets, rho, Matrix::Zero(2, 2), 3);
  EXPECT_TRUE(p.reinitialized);
  EXPECT_TRUE(p.DeltaB.isApprox(Matrix::Identity(2, 2)));
  for (const auto& y : p.Y) EXPECT_LE((y.transpose() * y - Matrix::Identity(2, 2)).norm(), 1e-12);
}

TEST(Projection, RejectsBadInput) {
  const std::vector<double> rho{1.0};
  EXPECT_THROW(project_approx_P({}, std::vector<double>{}, Matrix(), 1), std::invalid_argument);
  EXPECT_THROW(project_approx_P({Matrix::Zero(2, 3)}, rho, Matrix(), 1), std::invalid_argument);
  EXPECT_THROW(project_approx_P({Matrix::Zero(4, 3)}, rho, Matrix(), 0), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// D update

TEST(UpdateD, RecoversKnownStrengths) {
  Rng rng(10);
  const Matrix A = rng.orthonormal(8, 3), B = rng.orthonormal(6, 3);
  const Vector delta = rng.positive(3);
  const Matrix X = A * delta.asDiagonal() * B.transpose();
  const double rho = 1e-8;
  const Vector z = delta, mu = Vector::Zero(3);
  const DkUpdate u = admm_cycle_Dk((A.transpose() * A).cwiseProduct(B.transpose() * B),
                                   (A.transpose() * X * B).diagonal(), z, mu, rho, 0.0);
  EXPECT_LE((u.d - delta).norm(), 1e-6);
}

TEST(UpdateD, NegativeInputsProjectToZero) {
  const Matrix gram = Matrix::Identity(2, 2);
  const DkUpdate u = admm_cycle_Dk(gram, Vector::Constant(2, -5.0), Vector::Zero(2), Vector::Constant(2, -1.0), 1.0, 0.0);
  EXPECT_TRUE((u.d + Vector::Constant(2, -1.0)).maxCoeff() < 0.0);
  EXPECT_EQ(u.z, Vector::Zero(2));
}

TEST(UpdateD, HugeRidgeShrinksToZero) {
  Rng rng(11);
  const Matrix A = rng.normal(5, 2), B = rng.normal(4, 2), X = rng.normal(5, 4);
  const DkUpdate u = admm_cycle_Dk((A.transpose() * A).cwiseProduct(B.transpose() * B),
                                   (A.transpose() * X * B).diagonal(), Vector::Ones(2), Vector::Zero(2), 1.0, 1e12);
  const DkUpdate free = admm_cycle_Dk((A.transpose() * A).cwiseProduct(B.transpose() * B),
                                      (A.transpose() * X * B).diagonal(), Vector::Ones(2), Vector::Zero(2), 1.0, 0.0);
  EXPECT_LE(u.d.norm(), 1e-6 * free.d.norm());
}

TEST(UpdateD, StationarityAndNonNegativity) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(300 + seed);
    const Index I = 5, J = 4, K = 3, R = 2;
    std::vector<Matrix> s, B;
    std::vector<Vector> Z, mu;
    std::vector<double> rho;
    const Matrix A = rng.normal(I, R);
    for (Index k = 0; k < K; ++k) {
      s.push_back(rng.normal(I, J));
      B.push_back(rng.normal(J, R));
      Z.push_back(rng.normal(R));
      mu.push_back(rng.normal(R));
      rho.push_back(rng.positive(1)(0));
    }
    const double lambda = 0.2;
    const DUpdate u = admm_cycle_D(TensorSlices(s), A, B, Z, mu, rho, lambda);
    for (Index k = 0; k < K; ++k) {
      const Vector& d = u.D[k];
      // Gradient of ||X - A diag(d) B^T||^2 + lambda ||d||^2 + rho/2 ||d - z + mu||^2.
      const Matrix resid = s[k] - A * d.asDiagonal() * B[k].transpose();
      const Vector grad = -2.0 * (A.transpose() * resid * B[k]).diagonal() + 2.0 * lambda * d +
                          rho[k] * (d - Z[k] + mu[k]);
      EXPECT_LE(grad.norm(), 1e-9 * (A.transpose() * s[k] * B[k]).diagonal().norm());
      EXPECT_GE(u.Z_D[k].minCoeff(), 0.0);
      EXPECT_LE((u.mu_D[k] - (mu[k] + d - u.Z_D[k])).norm(), 1e-14);
    }
  }
}

// ---------------------------------------------------------------------------
// Dual steps

TEST(DualStep, ConsensusKeepsZero) {
  Rng rng(12);
  const Matrix B = rng.normal(4, 2), zero = Matrix::Zero(4, 2);
  const auto [mz, my] = dual_step_B(B, B, B, zero, zero);
  EXPECT_EQ(mz, zero);
  EXPECT_EQ(my, zero);
}

TEST(DualStep, AccumulatesResidualLinearly) {
  Rng rng(13);
  const Matrix B = rng.normal(4, 2), Z = rng.normal(4, 2), E = B - Z;
  Matrix mu = Matrix::Zero(4, 2);
  const auto first = dual_step_B(B, Z, B, mu, mu);
  EXPECT_LE(rel(first.first, E), 1e-15);
  for (int n = 1; n <= 7; ++n) {
    mu = dual_step_B(B, Z, B, mu, Matrix::Zero(4, 2)).first;
    EXPECT_LE(rel(mu, n * E), 1e-13);
  }
}

// ---------------------------------------------------------------------------
// B cycle

TEST(BCycle, PrimalStepsDoNotIncreaseAugmentedLagrangian) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(400 + seed);
    const Index I = 6, J = 5, K = 4, R = 2;
    std::vector<Matrix> s;
    Parafac2Factors f;
    f.A = rng.normal(I, R);
    for (Index k = 0; k < K; ++k) {
      s.push_back(rng.normal(I, J));
      f.B.push_back(rng.normal(J, R));
      f.D.push_back(rng.positive(R));
    }
    const TensorSlices data(s);
    AdmmState st = initial_state(f);
    for (Index k = 0; k < K; ++k) {
      st.mu_ZB[k] = 0.1 * rng.normal(J, R);
      st.mu_DeltaB[k] = 0.1 * rng.normal(J, R);
    }
    auto lagrangian = [&](const std::vector<Matrix>& B, const std::vector<Matrix>& Z, const std::vector<Matrix>& Y) {
      double L = 0.0;
      for (Index k = 0; k < K; ++k) {
        L += (data[k] - f.A * f.D[k].asDiagonal() * B[k].transpose()).squaredNorm();
        L += 0.5 * st.rho_B[k] * ((B[k] - Z[k] + st.mu_ZB[k]).squaredNorm() + (B[k] - Y[k] + st.mu_DeltaB[k]).squaredNorm());
      }
      return L;
    };
    const double before = lagrangian(f.B, st.Z_B, st.Y_B);
    std::vector<Matrix> B(K), in(K);
    for (Index k = 0; k < K; ++k)
      B[k] = update_Bk(data[k], f.A, f.D[k], st.Z_B[k], st.mu_ZB[k], st.Y_B[k], st.mu_DeltaB[k], st.rho_B[k]);
    const double after_B = lagrangian(B, st.Z_B, st.Y_B);
    for (Index k = 0; k < K; ++k) in[k] = B[k] + st.mu_ZB[k];
    const auto Z = solve_ZB_tridiagonal(0.0, in, st.rho_B);
    const double after_Z = lagrangian(B, Z, st.Y_B);
    for (Index k = 0; k < K; ++k) in[k] = B[k] + st.mu_DeltaB[k];
    const Projection p = project_approx_P(in, st.rho_B, st.DeltaB, 5);
    const double after_Y = lagrangian(B, Z, p.Y);
    const double tol = 1e-12 * before;
    EXPECT_LE(after_B, before + tol);
    EXPECT_LE(after_Z, after_B + tol);
    EXPECT_LE(after_Y, after_Z + tol);
  }
}
