#ifndef TPARAFAC2_EVALUATION_HPP_
#define TPARAFAC2_EVALUATION_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tparafac2/core.hpp"
#include "tparafac2/linalg.hpp"
#include "tparafac2/solver.hpp"

namespace tparafac2 {

inline constexpr double kDefaultDegeneracyThreshold = 0.85;

enum class DiscardReason { max_iterations, degenerate };

inline std::string_view to_string(DiscardReason r) {
  return r == DiscardReason::max_iterations ? "max-iterations" : "degenerate";
}

struct MatchReport {
  double fms = 0.0;
  std::vector<int> permutation;  // estimate component i <-> truth component permutation[i]
  std::vector<double> per_component_scores;
  std::vector<int> zero_norm_components;  // estimate components with a vanished mode
  bool degenerate = false;
  std::optional<DiscardReason> discarded_reason;
};

/// One fit's outcome as persisted by the experiment harness.
struct RunRecord {
  std::string dataset_id;
  std::string group;
  double noise = 0.0;
  double overlap = 0.0;
  std::string method;
  double lambda_B = 0.0;
  std::uint64_t init_seed = 0;
  double final_loss = 0.0;
  int outer_iters = 0;
  ExitReason exit_reason = ExitReason::max_iterations;
  bool degenerate = false;
  std::optional<double> fms;
  double feas_gap_B_Z = 0.0;
  double feas_gap_B_Y = 0.0;
  double feas_gap_D = 0.0;
  double feas_gap_A = 0.0;  // NNtCMF only
  double wall_time_seconds = 0.0;
  std::optional<DiscardReason> discarded_reason;  // set by select_best on fallback
};

// ---------------------------------------------------------------------------
// Component matching

struct Assignment {
  std::vector<int> permutation;
  double total = 0.0;
};

/// Maximizes sum_i score(i, perm[i]) over permutations: exhaustive search
/// for R <= 6, Hungarian algorithm beyond.
inline Assignment best_assignment(const Matrix& score) {
  const int n = static_cast<int>(score.rows());
  if (score.cols() != score.rows()) throw std::invalid_argument("best_assignment: square score matrix required");
  Assignment best;
  if (n == 0) return best;
  if (n <= 6) {
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    best.total = -std::numeric_limits<double>::infinity();
    do {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += score(i, perm[static_cast<std::size_t>(i)]);
      if (s > best.total) {
        best.total = s;
        best.permutation = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
  }
  // Hungarian algorithm (potentials form) on cost = -score, 1-based.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<int> p(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
    std::vector<char> used(static_cast<std::size_t>(n + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = -score(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  best.permutation.assign(static_cast<std::size_t>(n), 0);
  for (int j = 1; j <= n; ++j) best.permutation[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  for (int i = 0; i < n; ++i) best.total += score(i, best.permutation[static_cast<std::size_t>(i)]);
  return best;
}

/// Component vectors per mode used for congruence: columns of A, K*J
/// concatenations of B_k columns, and stacked D_k entries.
struct ComponentModes {
  Matrix a;
  Matrix b;
  Matrix c;
};

inline ComponentModes component_modes(const Parafac2Factors& f) {
  const Index J = f.B.front().rows();
  const Index K = f.num_slices();
  ComponentModes m;
  m.a = f.A;
  m.b.resize(K * J, f.rank());
  for (Index k = 0; k < K; ++k) m.b.middleRows(k * J, J) = f.B[static_cast<std::size_t>(k)];
  m.c = f.strengths();
  return m;
}

/// Matrix of |cosine| products between every estimate/truth component pair.
inline Matrix congruence_scores(const std::vector<const Matrix*>& est, const std::vector<const Matrix*>& truth,
                                std::vector<int>* zero_norm = nullptr) {
  const Index R = est.front()->cols();
  Matrix s = Matrix::Ones(R, R);
  for (std::size_t mode = 0; mode < est.size(); ++mode) {
    for (Index i = 0; i < R; ++i) {
      const bool vanished = est[mode]->col(i).norm() == 0.0;
      if (vanished && zero_norm != nullptr &&
          std::find(zero_norm->begin(), zero_norm->end(), static_cast<int>(i)) == zero_norm->end())
        zero_norm->push_back(static_cast<int>(i));
      for (Index j = 0; j < R; ++j)
        s(i, j) *= std::abs(linalg::cosine(est[mode]->col(i), truth[mode]->col(j)));
    }
  }
  return s;
}

inline MatchReport match_from_scores(const Matrix& scores) {
  MatchReport rep;
  const Assignment asg = best_assignment(scores);
  rep.permutation = asg.permutation;
  for (Index i = 0; i < scores.rows(); ++i)
    rep.per_component_scores.push_back(scores(i, rep.permutation[static_cast<std::size_t>(i)]));
  rep.fms = scores.rows() > 0 ? asg.total / static_cast<double>(scores.rows()) : 0.0;
  return rep;
}

/// Factor match score over the A, concatenated-B and strength modes,
/// averaged over components under the best permutation.
inline MatchReport fms(const Parafac2Factors& estimate, const Parafac2Factors& truth) {
  check_shapes(estimate);
  check_shapes(truth);
  if (estimate.rank() != truth.rank()) throw std::invalid_argument("fms: component counts differ");
  if (estimate.A.rows() != truth.A.rows() || estimate.B.front().rows() != truth.B.front().rows() ||
      estimate.num_slices() != truth.num_slices())
    throw std::invalid_argument("fms: factor shapes differ");
  const ComponentModes e = component_modes(estimate);
  const ComponentModes t = component_modes(truth);
  std::vector<int> zero_norm;
  const Matrix scores = congruence_scores({&e.a, &e.b, &e.c}, {&t.a, &t.b, &t.c}, &zero_norm);
  MatchReport rep = match_from_scores(scores);
  std::sort(zero_norm.begin(), zero_norm.end());
  rep.zero_norm_components = std::move(zero_norm);
  return rep;
}

/// True when two components have signed triple congruence below
/// -threshold: strongly correlated in every mode but pointing in opposite
/// directions overall.
inline bool detect_degenerate(const Parafac2Factors& f, double threshold = kDefaultDegeneracyThreshold) {
  const ComponentModes m = component_modes(f);
  const Index R = f.rank();
  for (Index i = 0; i < R; ++i)
    for (Index j = i + 1; j < R; ++j) {
      const double triple = linalg::cosine(m.a.col(i), m.a.col(j)) * linalg::cosine(m.b.col(i), m.b.col(j)) *
                            linalg::cosine(m.c.col(i), m.c.col(j));
      if (triple < -threshold) return true;
    }
  return false;
}

/// Lowest-loss run among those that neither hit the iteration cap nor
/// degenerated. When every run is discarded, falls back to the lowest-loss
/// run overall and records why it would have been discarded.
inline RunRecord select_best(const std::vector<RunRecord>& runs) {
  if (runs.empty()) throw std::invalid_argument("select_best: no runs");
  auto loss_less = [](const RunRecord& a, const RunRecord& b) {
    // NaN losses sort last.
    if (std::isnan(a.final_loss)) return false;
    if (std::isnan(b.final_loss)) return true;
    return a.final_loss < b.final_loss;
  };
  const RunRecord* best = nullptr;
  for (const auto& r : runs) {
    if (r.exit_reason == ExitReason::max_iterations || r.degenerate) continue;
    if (best == nullptr || loss_less(r, *best)) best = &r;
  }
  if (best != nullptr) {
    RunRecord out = *best;
    out.discarded_reason.reset();
    return out;
  }
  RunRecord out = *std::min_element(runs.begin(), runs.end(), loss_less);
  out.discarded_reason = out.degenerate ? DiscardReason::degenerate : DiscardReason::max_iterations;
  return out;
}

}  // namespace tparafac2

#endif  // TPARAFAC2_EVALUATION_HPP_
