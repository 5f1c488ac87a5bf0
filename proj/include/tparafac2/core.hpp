#ifndef TPARAFAC2_CORE_HPP_
#define TPARAFAC2_CORE_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tparafac2 {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Third-order data stored as K dense frontal slices of identical I x J shape.
class TensorSlices {
 public:
  TensorSlices() = default;

  explicit TensorSlices(std::vector<Matrix> slices) : slices_(std::move(slices)) {
    if (slices_.empty()) throw std::invalid_argument("TensorSlices: K must be >= 1");
    const Index rows = slices_.front().rows();
    const Index cols = slices_.front().cols();
    for (const auto& s : slices_) {
      if (s.rows() != rows || s.cols() != cols)
        throw std::invalid_argument("TensorSlices: all slices must share I and J");
      if (!s.allFinite())
        throw std::invalid_argument("TensorSlices: non-finite entry");
    }
  }

  Index I() const { return slices_.empty() ? 0 : slices_.front().rows(); }
  Index J() const { return slices_.empty() ? 0 : slices_.front().cols(); }
  Index K() const { return static_cast<Index>(slices_.size()); }

  const Matrix& operator[](Index k) const { return slices_[static_cast<std::size_t>(k)]; }
  const std::vector<Matrix>& slices() const { return slices_; }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& x : slices_) s += x.squaredNorm();
    return s;
  }
  double norm() const { return std::sqrt(squared_norm()); }

 private:
  std::vector<Matrix> slices_;
};

/// PARAFAC2 factor set X_k ~ A diag(D[k]) B[k]^T.
///
/// D holds the diagonals of the D_k matrices; stacking them row-wise gives
/// the K x R strength matrix C.
struct Parafac2Factors {
  Matrix A;
  std::vector<Matrix> B;
  std::vector<Vector> D;

  Index rank() const { return A.cols(); }
  Index num_slices() const { return static_cast<Index>(B.size()); }

  /// K x R matrix whose k-th row is D[k].
  Matrix strengths() const {
    Matrix C(num_slices(), rank());
    for (Index k = 0; k < num_slices(); ++k) C.row(k) = D[static_cast<std::size_t>(k)].transpose();
    return C;
  }

  friend bool operator==(const Parafac2Factors& a, const Parafac2Factors& b) {
    if (a.A.rows() != b.A.rows() || a.A.cols() != b.A.cols() || a.A != b.A) return false;
    if (a.B.size() != b.B.size() || a.D.size() != b.D.size()) return false;
    for (std::size_t k = 0; k < a.B.size(); ++k) {
      if (a.B[k].rows() != b.B[k].rows() || a.B[k].cols() != b.B[k].cols() || a.B[k] != b.B[k])
        return false;
    }
    for (std::size_t k = 0; k < a.D.size(); ++k) {
      if (a.D[k].size() != b.D[k].size() || a.D[k] != b.D[k]) return false;
    }
    return true;
  }
};

struct RegularizationConfig {
  double lambda_A = 1e-3;
  double lambda_B = 0.0;
  double lambda_D = 1e-3;
  // Small ridge on every B_k. Without it, and with lambda_B = 0, the loss
  // keeps decreasing as A and D shrink while B grows, so there is no
  // minimizer to converge to.
  double ridge_B = 1e-3;
  bool nonneg_D = true;

  void validate() const {
    if (!(lambda_A >= 0.0) || !(lambda_B >= 0.0) || !(lambda_D >= 0.0) || !(ridge_B >= 0.0))
      throw std::invalid_argument("RegularizationConfig: penalties must be non-negative");
  }
};

/// Throws std::invalid_argument unless the factors have internally
/// consistent shapes; when `data` is given, also checks I, J and K.
inline void check_shapes(const Parafac2Factors& f, const TensorSlices* data = nullptr) {
  const Index R = f.rank();
  if (f.B.size() != f.D.size())
    throw std::invalid_argument("Parafac2Factors: B and D must have K entries each");
  if (f.B.empty()) throw std::invalid_argument("Parafac2Factors: K must be >= 1");
  const Index J = f.B.front().rows();
  for (std::size_t k = 0; k < f.B.size(); ++k) {
    if (f.B[k].rows() != J || f.B[k].cols() != R)
      throw std::invalid_argument("Parafac2Factors: B[" + std::to_string(k) + "] has wrong shape");
    if (f.D[k].size() != R)
      throw std::invalid_argument("Parafac2Factors: D[" + std::to_string(k) + "] has wrong length");
  }
  if (data != nullptr) {
    if (f.A.rows() != data->I() || J != data->J() || f.num_slices() != data->K())
      throw std::invalid_argument("Parafac2Factors: shapes do not match data");
  }
}

inline Matrix reconstruct_slice(const Parafac2Factors& f, Index k) {
  if (k < 0 || k >= f.num_slices()) throw std::out_of_range("reconstruct_slice: slice index out of range");
  const auto kk = static_cast<std::size_t>(k);
  return f.A * f.D[kk].asDiagonal() * f.B[kk].transpose();
}

inline double smoothness_penalty(const std::vector<Matrix>& B) {
  double s = 0.0;
  for (std::size_t k = 1; k < B.size(); ++k) s += (B[k] - B[k - 1]).squaredNorm();
  return s;
}

/// Sum of squared slice residuals.
inline double data_fit(const TensorSlices& data, const Parafac2Factors& f) {
  check_shapes(f, &data);
  double s = 0.0;
  for (Index k = 0; k < data.K(); ++k) {
    const auto kk = static_cast<std::size_t>(k);
    s += (data[k] - f.A * f.D[kk].asDiagonal() * f.B[kk].transpose()).squaredNorm();
  }
  return s;
}

/// Regularized tPARAFAC2 loss: data fit, ridges on A, B_k and D, temporal
/// smoothness on consecutive B_k. Non-negativity of D contributes nothing.
inline double objective(const TensorSlices& data, const Parafac2Factors& f, const RegularizationConfig& reg) {
  reg.validate();
  double loss = data_fit(data, f) + reg.lambda_A * f.A.squaredNorm();
  double dnorm = 0.0;
  for (const auto& d : f.D) dnorm += d.squaredNorm();
  loss += reg.lambda_D * dnorm;
  if (reg.lambda_B != 0.0) loss += reg.lambda_B * smoothness_penalty(f.B);
  if (reg.ridge_B != 0.0)
    for (const auto& b : f.B) loss += reg.ridge_B * b.squaredNorm();
  return loss;
}

/// Scale-free distance of {B_k} from the set of equal-Gram sequences.
/// Zero means every B_k^T B_k coincides.
inline double parafac2_residual(const std::vector<Matrix>& B) {
  if (B.size() < 2) return 0.0;
  std::vector<Matrix> grams;
  grams.reserve(B.size());
  for (const auto& b : B) grams.push_back(b.transpose() * b);
  double worst = 0.0;
  for (std::size_t i = 0; i < grams.size(); ++i)
    for (std::size_t j = i + 1; j < grams.size(); ++j)
      worst = std::max(worst, (grams[i] - grams[j]).norm());
  return worst / std::max(1.0, grams.front().norm());
}

inline double parafac2_residual(const Parafac2Factors& f) { return parafac2_residual(f.B); }

}  // namespace tparafac2

#endif  // TPARAFAC2_CORE_HPP_
