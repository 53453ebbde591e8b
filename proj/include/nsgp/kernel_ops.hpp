#pragma once

#include <numbers>

#include "nsgp/autodiff.hpp"

namespace nsgp {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Column k of `a` minus column k of `b`, as an n × m matrix of lags.
ad::Var pairwise_lag(const ad::Var& a, const ad::Var& b, Index k);

/// σ² exp(−½ Σ_k (a_ik − b_jk)² / ℓ_k²) with `variance` 1×1 and
/// `lengthscale` 1×d.
ad::Var rbf_cross(const ad::Var& a, const ad::Var& b, const ad::Var& variance,
                  const ad::Var& lengthscale);

}  // namespace nsgp
