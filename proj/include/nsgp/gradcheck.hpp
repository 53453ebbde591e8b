#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nsgp/autodiff.hpp"

namespace nsgp {

struct GradientCheckEntry {
  std::string param;
  Index row = 0;
  Index col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct GradientCheckReport {
  bool passed = true;
  double max_relative_error = 0.0;
  /// Entry with the largest relative error.
  GradientCheckEntry worst;
  /// Every entry above tolerance.
  std::vector<GradientCheckEntry> failures;
};

/// Builds the scalar objective on a fresh tape from the current parameter values.
using Objective = std::function<ad::Var(ad::Tape&)>;

/// Compares reverse-mode gradients with central differences on every raw
/// entry of `params`. The relative error of an entry is
/// |analytic − numeric| / max(|analytic|, |numeric|, 1e-8).
/// Parameters are perturbed in place and restored before returning.
GradientCheckReport check_gradients(const Objective& objective,
                                    const std::vector<Param*>& params,
                                    double h = 1e-5, double tol = 1e-6);

}  // namespace nsgp
