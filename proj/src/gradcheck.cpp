#include "nsgp/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace nsgp {

namespace {

constexpr double kAbsoluteFloor = 1e-8;

double evaluate(const Objective& objective) {
  ad::Tape tape;
  return objective(tape).scalar();
}

}  // namespace

GradientCheckReport check_gradients(const Objective& objective,
                                    const std::vector<Param*>& params, double h,
                                    double tol) {
  ad::Gradients analytic;
  {
    ad::Tape tape;
    ad::Var loss = objective(tape);
    std::vector<const Param*> cparams(params.begin(), params.end());
    analytic = tape.backward(loss, cparams);
  }

  GradientCheckReport report;
  for (Param* p : params) {
    const Matrix& g = analytic.at(p->name);
    for (Index j = 0; j < p->raw.cols(); ++j) {
      for (Index i = 0; i < p->raw.rows(); ++i) {
        const double saved = p->raw(i, j);
        p->raw(i, j) = saved + h;
        const double up = evaluate(objective);
        p->raw(i, j) = saved - h;
        const double down = evaluate(objective);
        p->raw(i, j) = saved;

        GradientCheckEntry e;
        e.param = p->name;
        e.row = i;
        e.col = j;
        e.analytic = g(i, j);
        e.numeric = (up - down) / (2.0 * h);
        const double denom =
            std::max({std::abs(e.analytic), std::abs(e.numeric), kAbsoluteFloor});
        e.relative_error = std::abs(e.analytic - e.numeric) / denom;
        if (!std::isfinite(e.relative_error)) e.relative_error = INFINITY;

        if (e.relative_error > report.max_relative_error || report.worst.param.empty()) {
          report.max_relative_error = std::max(report.max_relative_error, e.relative_error);
          if (e.relative_error >= report.max_relative_error) report.worst = e;
        }
        if (!(e.relative_error < tol)) {
          report.passed = false;
          report.failures.push_back(e);
        }
      }
    }
  }
  return report;
}

}  // namespace nsgp
