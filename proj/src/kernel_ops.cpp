#include "nsgp/kernel_ops.hpp"

#include "nsgp/errors.hpp"

namespace nsgp {

ad::Var pairwise_lag(const ad::Var& a, const ad::Var& b, Index k) {
  return ad::col(a, k) - ad::transpose(ad::col(b, k));
}

ad::Var rbf_cross(const ad::Var& a, const ad::Var& b, const ad::Var& variance,
                  const ad::Var& lengthscale) {
  if (a.cols() != b.cols() || a.cols() != lengthscale.cols()) {
    throw DimensionMismatch("rbf: input dimension " + std::to_string(a.cols()) + "/" +
                            std::to_string(b.cols()) + " vs " +
                            std::to_string(lengthscale.cols()) + " lengthscales");
  }
  ad::Var scaled_sq;
  for (Index k = 0; k < a.cols(); ++k) {
    ad::Var term = ad::square(pairwise_lag(a, b, k) / ad::col(lengthscale, k));
    scaled_sq = k == 0 ? term : scaled_sq + term;
  }
  return variance * ad::exp(-0.5 * scaled_sq);
}

}  // namespace nsgp
