#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tparafac2/cmf.hpp"
#include "tparafac2/synthgen.hpp"

using namespace tparafac2;
using namespace tparafac2::cmf;

namespace {

Matrix normal(std::mt19937_64& rng, Index r, Index c) {
  std::normal_distribution<double> g;
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = g(rng);
  return m;
}

Matrix random_orthogonal(std::mt19937_64& rng, Index n) {
  return Eigen::HouseholderQR<Matrix>(normal(rng, n, n)).householderQ();
}

struct LowRank {
  TensorSlices data;
  CmfFactors truth;
};

LowRank low_rank(Index I, Index J, Index K, Index R, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LowRank p;
  p.truth.A = normal(rng, I, R);
  std::vector<Matrix> s;
  for (Index k = 0; k < K; ++k) {
    p.truth.B.push_back(normal(rng, J, R));
    s.push_back(p.truth.A * p.truth.B.back().transpose());
  }
  p.data = TensorSlices(s);
  return p;
}

}  // namespace

TEST(CmfObjective, TermsAddUp) {
  const LowRank p = low_rank(6, 5, 3, 2, 1);
  std::mt19937_64 rng(2);
  CmfFactors f{normal(rng, 6, 2), {normal(rng, 5, 2), normal(rng, 5, 2), normal(rng, 5, 2)}};
  double expected = 0.0;
  for (Index k = 0; k < 3; ++k) expected += (p.data[k] - f.A * f.B[k].transpose()).squaredNorm();
  expected += 0.5 * ((f.B[1] - f.B[0]).squaredNorm() + (f.B[2] - f.B[1]).squaredNorm()) + 0.1 * f.A.squaredNorm();
  EXPECT_NEAR(objective(p.data, f, 0.5, 0.1), expected, 1e-12 * expected);
}

TEST(CmfFit, ExactLowRankFit) {
  const LowRank p = low_rank(20, 15, 5, 3, 3);
  SolverConfig c;
  c.R = 3;
  c.reg.lambda_A = 0.0;
  c.reg.ridge_B = 0.0;
  c.max_outer = 5000;
  const CmfFitResult r = fit_cmf(p.data, c, false);
  EXPECT_LE(std::sqrt(data_fit(p.data, r.factors)) / p.data.norm(), 1e-6);
}

TEST(CmfFit, HugeSmoothnessEqualizesSlices) {
  const LowRank p = low_rank(20, 15, 5, 2, 4);
  SolverConfig c;
  c.R = 2;
  c.reg.lambda_B = 1e9;
  // The step size ignores lambda_B, so the smoothness split needs many
  // inner sweeps to reach consensus in this limit.
  c.max_inner_B = 50;
  const CmfFitResult r = fit_cmf(p.data, c, false);
  for (std::size_t k = 1; k < r.factors.B.size(); ++k)
    EXPECT_LE((r.factors.B[k] - r.factors.B[0]).norm(), 1e-4 * r.factors.B[0].norm());
  // The common factor fits the time-averaged slice.
  Matrix mean = Matrix::Zero(20, 15);
  for (Index k = 0; k < 5; ++k) mean += p.data[k] / 5.0;
  const Eigen::JacobiSVD<Matrix> svd(mean);
  const double best = std::sqrt(svd.singularValues().tail(13).squaredNorm());
  EXPECT_LE((mean - r.factors.A * r.factors.B[0].transpose()).norm(), best + 1e-2 * mean.norm());
}

TEST(CmfFit, LossNonIncreasing) {
  const auto ds = synth::generate(synth::overlap_preset(5, 0.2, synth::PresetShape::desk(), 0.5));
  SolverConfig c;
  c.reg.lambda_B = 10.0;
  c.max_outer = 300;
  for (bool nonneg : {false, true}) {
    const CmfFitResult r = fit_cmf(ds.noisy, c, nonneg);
    // NNtCMF carries a split on A whose primal iterate is not feasible; only
    // the unconstrained variant is a pure block-descent method.
    if (!nonneg)
      for (std::size_t i = 1; i < r.loss_trace.size(); ++i)
        EXPECT_LE(r.loss_trace[i], r.loss_trace[i - 1] * (1 + 1e-12));
    EXPECT_LE(r.loss_trace.back(), r.loss_trace.front());
  }
}

TEST(CmfFit, NonNegativeAIsNonNegative) {
  const auto ds = synth::generate(synth::overlap_preset(6, 0.2, synth::PresetShape::desk(), 0.5));
  SolverConfig c;
  c.reg.lambda_B = 10.0;
  const CmfFitResult r = fit_cmf(ds.noisy, c, true);
  EXPECT_GE(r.factors.A.minCoeff(), 0.0);
}

TEST(CmfFit, SharesInitializationWithParafac2) {
  const LowRank p = low_rank(10, 8, 4, 2, 7);
  SolverConfig c;
  c.R = 2;
  c.max_outer = 1;
  c.seed = 11;
  const Parafac2Factors init = random_factors(10, 8, 4, 2, 11);
  const CmfFitResult a = fit_cmf(p.data, c, false);
  const CmfFitResult b = fit_cmf(p.data, c, false, CmfFactors{init.A, init.B});
  EXPECT_EQ(a.factors.A, b.factors.A);
}

TEST(CmfFit, NonNegativeBeatsUnconstrainedOnMostSeeds) {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto ds = synth::generate(synth::overlap_preset(100 + seed, 0.2, synth::PresetShape::desk(), 0.0));
    SolverConfig c;
    c.reg.lambda_B = 10.0;
    c.seed = seed;
    const double plain = fms_cmf(fit_cmf(ds.noisy, c, false).factors, ds.truth).fms;
    const double nonneg = fms_cmf(fit_cmf(ds.noisy, c, true).factors, ds.truth).fms;
    if (nonneg >= plain) ++wins;
  }
  EXPECT_GE(wins, 16);
}

TEST(CmfGauge, ObjectiveInvariantUnderSharedTransform) {
  const LowRank p = low_rank(8, 6, 4, 3, 8);
  std::mt19937_64 rng(9);
  const CmfFactors f{normal(rng, 8, 3), {normal(rng, 6, 3), normal(rng, 6, 3), normal(rng, 6, 3), normal(rng, 6, 3)}};
  const double fit0 = data_fit(p.data, f);
  const double smooth0 = smoothness_penalty(f.B);
  for (int t = 0; t < 10; ++t) {
    const Matrix Q = normal(rng, 3, 3) + 3.0 * Matrix::Identity(3, 3);
    const CmfFactors g = apply_gauge(f, Q);
    EXPECT_NEAR(data_fit(p.data, g), fit0, 1e-10 * fit0);
    // Orthogonal transforms also keep the smoothness and ridge terms.
    const Matrix O = random_orthogonal(rng, 3);
    const CmfFactors h = apply_gauge(f, O);
    EXPECT_NEAR(smoothness_penalty(h.B), smooth0, 1e-10 * smooth0);
    EXPECT_NEAR(objective(p.data, h, 2.0, 0.1, 0.01), objective(p.data, f, 2.0, 0.1, 0.01),
                1e-10 * objective(p.data, f, 2.0, 0.1, 0.01));
  }
}

TEST(CmfFms, BasicCases) {
  const LowRank p = low_rank(8, 6, 4, 3, 10);
  EXPECT_NEAR(fms_cmf(p.truth, p.truth).fms, 1.0, 1e-12);
  CmfFactors perm;
  const std::vector<int> order{2, 0, 1};
  const Vector scale = (Vector(3) << 2.0, 0.5, 3.0).finished();
  perm.A = Matrix(8, 3);
  perm.B.assign(4, Matrix(6, 3));
  for (int r = 0; r < 3; ++r) {
    perm.A.col(r) = scale(r) * p.truth.A.col(order[r]);
    for (std::size_t k = 0; k < 4; ++k) perm.B[k].col(r) = p.truth.B[k].col(order[r]) / scale(r);
  }
  const MatchReport rep = fms_cmf(perm, p.truth);
  EXPECT_NEAR(rep.fms, 1.0, 1e-12);
  EXPECT_EQ(rep.permutation, order);

  // Components orthogonal to the truth in A score zero.
  CmfFactors ortho = p.truth;
  const Matrix basis = Eigen::HouseholderQR<Matrix>(p.truth.A).householderQ();
  ortho.A = basis.rightCols(3);
  EXPECT_LE(fms_cmf(ortho, p.truth).fms, 1e-12);
}

TEST(CmfFms, FromParafac2AbsorbsStrengths) {
  Parafac2Factors f;
  f.A = Matrix::Ones(3, 2);
  f.B = {Matrix::Ones(4, 2)};
  f.D = {Vector::Constant(2, 2.0)};
  const CmfFactors c = from_parafac2(f);
  EXPECT_EQ(c.B[0], Matrix::Constant(4, 2, 2.0));
}
