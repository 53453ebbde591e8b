#include "nsgp/numerics.hpp"

#include <algorithm>
#include <cmath>

#include "nsgp/errors.hpp"

namespace nsgp {

namespace {

constexpr double kSymmetryTolerance = 1e-10;
constexpr double kMaxRelativeJitter = 1e-2;

bool try_factor(const Matrix& a, double jitter, Matrix& out) {
  Matrix shifted = a;
  shifted.diagonal().array() += jitter;
  Eigen::LLT<Matrix> llt(shifted);
  if (llt.info() != Eigen::Success) return false;
  out = llt.matrixL();
  const auto diag = out.diagonal().array();
  return (diag > 0.0).all() && diag.isFinite().all();
}

}  // namespace

bool all_finite(const Matrix& a) { return a.allFinite(); }

double relative_error(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

CholeskyFactor cholesky(const Matrix& a, double base_jitter) {
  if (a.rows() != a.cols()) {
    throw DimensionMismatch("cholesky: matrix is " + std::to_string(a.rows()) +
                            "x" + std::to_string(a.cols()));
  }
  if (!a.allFinite()) throw NonFinite("cholesky: input contains NaN or Inf");
  const double scale_norm = std::max(a.norm(), 1e-300);
  if ((a - a.transpose()).norm() > kSymmetryTolerance * scale_norm) {
    throw DimensionMismatch("cholesky: matrix is not symmetric");
  }
  if (base_jitter < 0.0) throw InvalidArgument("cholesky: negative jitter");

  CholeskyFactor result;
  if (a.rows() == 0) return result;

  const double mean_diag = a.diagonal().mean();
  const double scale = mean_diag > 0.0 ? mean_diag : 1.0;
  const double max_jitter = kMaxRelativeJitter * scale;

  double jitter = base_jitter * scale;
  while (true) {
    if (try_factor(a, jitter, result.lower)) {
      result.jitter_used = jitter;
      return result;
    }
    const double next = jitter > 0.0 ? jitter * 10.0 : 1e-10 * scale;
    if (next > max_jitter * (1.0 + 1e-12)) break;
    jitter = next;
  }
  throw NotPositiveDefinite("cholesky: factorization failed with jitter up to " +
                            std::to_string(max_jitter));
}

Matrix tri_solve(const CholeskyFactor& factor, const Matrix& b) {
  if (factor.lower.rows() != b.rows()) {
    throw DimensionMismatch("tri_solve: factor side " +
                            std::to_string(factor.lower.rows()) +
                            " vs rhs rows " + std::to_string(b.rows()));
  }
  const auto lower = factor.lower.triangularView<Eigen::Lower>();
  Matrix x = lower.solve(b);
  lower.transpose().solveInPlace(x);
  return x;
}

double log_det(const CholeskyFactor& factor) {
  return 2.0 * factor.lower.diagonal().array().log().sum();
}

}  // namespace nsgp
