#pragma once

#include <Eigen/Dense>

namespace nsgp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Default jitter, relative to the mean diagonal of the matrix being factored.
inline constexpr double kDefaultJitter = 1e-6;

/// Lower Cholesky factor of `a + jitter_used * I`.
struct CholeskyFactor {
  Matrix lower;
  double jitter_used = 0.0;
};

/// Factor a symmetric positive (semi-)definite matrix.
///
/// The first attempt adds `base_jitter * s` to the diagonal, where `s` is the
/// mean diagonal (or 1 when that is not positive). On failure the jitter is
/// multiplied by 10 until it would exceed `1e-2 * s`; a zero base jitter
/// escalates starting from `1e-10 * s`.
///
/// Throws NonFinite for NaN/Inf input, DimensionMismatch for non-square or
/// asymmetric input and NotPositiveDefinite when the largest jitter fails.
CholeskyFactor cholesky(const Matrix& a, double base_jitter = kDefaultJitter);

/// Solves (L Lᵀ) x = b.
Matrix tri_solve(const CholeskyFactor& factor, const Matrix& b);

/// log det(L Lᵀ) = 2 Σ log L_ii.
double log_det(const CholeskyFactor& factor);

/// Relative Frobenius distance ‖a − b‖ / max(‖b‖, 1e-300).
double relative_error(const Matrix& a, const Matrix& b);

bool all_finite(const Matrix& a);

}  // namespace nsgp
