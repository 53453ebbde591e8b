#pragma once

// Random model builders shared by the unit and acceptance tests.

#include <cmath>
#include <functional>
#include <memory>
#include <random>

#include "nsgp/kernels.hpp"
#include "nsgp/param_functions.hpp"

namespace nsgp::testing {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Matrix uniform_matrix(std::mt19937_64& rng, Index rows, Index cols, double lo,
                             double hi) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, lo, hi);
  return m;
}

inline Matrix normal_matrix(std::mt19937_64& rng, Index rows, Index cols, double sd = 1.0) {
  std::normal_distribution<double> normal(0.0, sd);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

struct SmDraw {
  Vector weight;
  Matrix frequency;
  Matrix scale;
  Vector nyquist;
};

inline SmDraw random_sm(std::mt19937_64& rng, Index q, Index d, double nyquist = 5.0) {
  SmDraw s;
  s.nyquist = Vector::Constant(d, nyquist);
  s.weight = uniform_matrix(rng, q, 1, 0.2, 2.0).col(0);
  s.frequency = uniform_matrix(rng, q, d, 0.05, 0.95 * nyquist);
  s.scale = uniform_matrix(rng, q, d, 0.05, 1.0);
  return s;
}

inline std::unique_ptr<RbfKernel> random_rbf(std::mt19937_64& rng, Index d) {
  return std::make_unique<RbfKernel>(uniform(rng, 0.3, 3.0),
                                     uniform_matrix(rng, d, 1, 0.2, 2.0).col(0));
}

inline std::unique_ptr<SpectralMixtureKernel> random_sm_kernel(std::mt19937_64& rng, Index q,
                                                               Index d) {
  SmDraw s = random_sm(rng, q, d);
  return std::make_unique<SpectralMixtureKernel>(s.weight, s.frequency, s.scale, s.nyquist);
}

/// Random network with output scale large enough to make the latent
/// functions visibly input-dependent.
inline std::unique_ptr<GsmKernel> random_neural_gsm(std::mt19937_64& rng, Index q, Index d,
                                                    std::vector<Index> hidden = {8, 8}) {
  auto f = std::make_unique<NeuralFunction>(q, d, Vector::Constant(d, 5.0), hidden, rng);
  for (Param* p : f->params()) p->raw += normal_matrix(rng, p->raw.rows(), p->raw.cols(), 0.3);
  return std::make_unique<GsmKernel>(std::move(f));
}

/// Anchor values sampled from a random smooth function of z: a + b·sin(fᵀz + φ)
/// per column.
inline Matrix smooth_anchor_values(std::mt19937_64& rng, const Matrix& z, Index cols,
                                   double offset, double amplitude) {
  Matrix u(z.rows(), cols);
  for (Index c = 0; c < cols; ++c) {
    const double a = offset + uniform(rng, -0.3, 0.3);
    const double b = uniform(rng, -amplitude, amplitude);
    const Vector f = uniform_matrix(rng, z.cols(), 1, -2.0, 2.0).col(0);
    const double phase = uniform(rng, 0.0, 6.28);
    for (Index i = 0; i < z.rows(); ++i) u(i, c) = a + b * std::sin(z.row(i).dot(f) + phase);
  }
  return u;
}

inline std::unique_ptr<GsmKernel> random_gp_gsm(std::mt19937_64& rng, Index q, Index d,
                                                const Matrix& z) {
  auto f = std::make_unique<GpInterpFunction>(
      q, d, Vector::Constant(d, 5.0), smooth_anchor_values(rng, z, q, 0.0, 0.5),
      smooth_anchor_values(rng, z, q * d, -1.0, 0.5), smooth_anchor_values(rng, z, q * d, 0.0, 1.5),
      uniform_matrix(rng, d, 1, 0.3, 1.0).col(0));
  return std::make_unique<GsmKernel>(std::move(f));
}

/// Parameter function defined by an arbitrary tape expression of x. Holds no
/// trainable parameters.
class ScriptedFunction final : public ParamFunction {
 public:
  using Script = std::function<LatentValues(ad::Tape&, const ad::Var&)>;

  ScriptedFunction(Index components, Index input_dim, Vector nyquist, Script script)
      : ParamFunction(components, input_dim, std::move(nyquist)), script_(std::move(script)) {}

  ParamFunctionKind kind() const override { return ParamFunctionKind::kConstant; }
  std::unique_ptr<ParamFunction> clone() const override {
    return std::make_unique<ScriptedFunction>(*this);
  }
  std::vector<LatentValues> evaluate(ad::Tape& tape, const std::vector<ad::Var>& inputs,
                                     const ad::Var&) const override {
    std::vector<LatentValues> out;
    for (const ad::Var& x : inputs) out.push_back(script_(tape, x));
    return out;
  }
  using ParamFunction::evaluate;
  std::vector<const Param*> params() const override { return {}; }
  using ParamFunction::params;

 private:
  Script script_;
};

}  // namespace nsgp::testing
