#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "nsgp/errors.hpp"
#include "nsgp/gradcheck.hpp"
#include "nsgp/param_functions.hpp"

using namespace nsgp;
using namespace nsgp::testing;

namespace {

void expect_in_range(const LatentMatrices& v, const Vector& nyquist) {
  const Index d = nyquist.size();
  EXPECT_TRUE((v.weight.array() > 0.0).all());
  EXPECT_TRUE((v.lengthscale.array() > 0.0).all());
  for (Index c = 0; c < v.frequency.cols(); ++c) {
    EXPECT_TRUE((v.frequency.col(c).array() > 0.0).all());
    EXPECT_TRUE((v.frequency.col(c).array() < nyquist(c % d)).all());
  }
}

Matrix row_of(double v, Index n) { return Matrix::Constant(n, 1, v); }

}  // namespace

TEST(Constant, RowsRepeatTheConstants) {
  ConstantFunction f(Vector::Ones(1), Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, 0.1),
                     Vector::Ones(1));
  std::mt19937_64 rng(1);
  LatentMatrices v = f.evaluate(normal_matrix(rng, 5, 1));
  EXPECT_LT((v.weight - row_of(1.0, 5)).norm(), 1e-14);
  EXPECT_LT((v.lengthscale - row_of(2.0, 5)).norm(), 1e-14);
  EXPECT_LT((v.frequency - row_of(0.1, 5)).norm(), 1e-14);
}

TEST(Constant, RejectsOutOfRangeValues) {
  const Vector ny = Vector::Ones(1);
  EXPECT_THROW(ConstantFunction(Vector::Ones(1), Matrix::Ones(1, 1), Matrix::Ones(1, 1), ny),
               ConstraintViolation);
  EXPECT_THROW(ConstantFunction(Vector::Ones(1), Matrix::Ones(1, 1), Matrix::Zero(1, 1), ny),
               ConstraintViolation);
  EXPECT_THROW(ConstantFunction(-Vector::Ones(1), Matrix::Ones(1, 1),
                                Matrix::Constant(1, 1, 0.5), ny),
               ConstraintViolation);
  EXPECT_THROW(ConstantFunction(Vector::Ones(1), Matrix::Zero(1, 1),
                                Matrix::Constant(1, 1, 0.5), ny),
               ConstraintViolation);
}

TEST(Selu, FixedPointAndAsymptote) {
  EXPECT_EQ(selu(0.0), 0.0);
  EXPECT_NEAR(selu(-100.0), -kSeluLambda * kSeluAlpha, 1e-6);
  EXPECT_NEAR(kSeluLambda * kSeluAlpha, 1.7580993408473766, 1e-15);
  EXPECT_DOUBLE_EQ(selu(2.0), 2.0 * kSeluLambda);
}

TEST(Neural, ZeroNetworkGivesSoftplusAndSigmoidAtZero) {
  NeuralFunction f(2, 1, Vector::Constant(1, 3.0), {4, 4});
  std::mt19937_64 rng(2);
  LatentMatrices v = f.evaluate(normal_matrix(rng, 6, 1));
  EXPECT_LT((v.weight.array() - std::log(2.0)).abs().maxCoeff(), 1e-15);
  EXPECT_NEAR(std::log(2.0), 0.693147, 1e-6);
  EXPECT_LT((v.lengthscale.array() - std::log(2.0)).abs().maxCoeff(), 1e-15);
  EXPECT_LT((v.frequency.array() - 1.5).abs().maxCoeff(), 1e-15);
}

TEST(Neural, OutputShapesForMultivariateInputs) {
  std::mt19937_64 rng(3);
  NeuralFunction f(3, 2, Vector::Constant(2, 1.0), {5}, rng);
  LatentMatrices v = f.evaluate(normal_matrix(rng, 4, 2));
  EXPECT_EQ(v.weight.cols(), 3);
  EXPECT_EQ(v.lengthscale.cols(), 6);
  EXPECT_EQ(v.frequency.cols(), 6);
  EXPECT_THROW(f.evaluate(normal_matrix(rng, 4, 3)), DimensionMismatch);
}

TEST(Neural, InitialFrequenciesAreStratified) {
  std::mt19937_64 rng(4);
  NeuralFunction f(4, 1, Vector::Ones(1), {8}, rng);
  Param& mu_bias = f.bias(f.trunk_depth() + 2);
  for (Index q = 0; q < 4; ++q) {
    const double u = sigmoid(mu_bias.raw(0, q));
    EXPECT_GE(u, q / 4.0);
    EXPECT_LE(u, (q + 1) / 4.0);
  }
}

TEST(Neural, TrunkIsSharedAndHeadsAreSeparate) {
  std::mt19937_64 rng(5);
  NeuralFunction f(1, 1, Vector::Ones(1), {6, 6}, rng);
  Matrix x = normal_matrix(rng, 5, 1);
  const LatentMatrices base = f.evaluate(x);

  NeuralFunction trunk = f;
  trunk.weight(0).raw.array() += 0.5;
  const LatentMatrices t = trunk.evaluate(x);
  EXPECT_GT((t.weight - base.weight).norm(), 1e-6);
  EXPECT_GT((t.lengthscale - base.lengthscale).norm(), 1e-6);
  EXPECT_GT((t.frequency - base.frequency).norm(), 1e-6);

  NeuralFunction head = f;
  head.weight(f.trunk_depth()).raw.array() += 0.5;
  const LatentMatrices h = head.evaluate(x);
  EXPECT_GT((h.weight - base.weight).norm(), 1e-6);
  EXPECT_EQ(h.lengthscale, base.lengthscale);
  EXPECT_EQ(h.frequency, base.frequency);
}

TEST(Neural, OnlyWeightMatricesAreRegularized) {
  std::mt19937_64 rng(6);
  NeuralFunction f(2, 1, Vector::Ones(1), {4, 4}, rng);
  EXPECT_EQ(f.params().size(), 10u);
  const auto reg = f.regularized_params();
  EXPECT_EQ(reg.size(), 5u);
  for (const Param* p : reg) EXPECT_EQ(p->name.substr(p->name.size() - 2), ".W");
}

TEST(GpInterp, InterpolatesAnchorsExactly) {
  std::mt19937_64 rng(7);
  const Index m = 6, q = 2;
  Matrix z = Vector::LinSpaced(m, -1.0, 1.0);
  Matrix uw = normal_matrix(rng, m, q);
  Matrix ul = normal_matrix(rng, m, q);
  Matrix um = normal_matrix(rng, m, q);
  GpInterpFunction f(q, 1, Vector::Constant(1, 2.0), uw, ul, um, Vector::Constant(1, 0.4), 0.0);
  LatentMatrices v = f.evaluate(z, z);
  EXPECT_LT((v.weight - uw.array().exp().matrix()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((v.lengthscale - ul.array().exp().matrix()).cwiseAbs().maxCoeff(), 1e-9);
  Matrix mu = 2.0 / (1.0 + (-um.array()).exp());
  EXPECT_LT((v.frequency - mu).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(GpInterp, ZeroWeightAnchorsGiveUnitWeight) {
  std::mt19937_64 rng(8);
  Matrix z = normal_matrix(rng, 4, 1);
  GpInterpFunction f(1, 1, Vector::Ones(1), Matrix::Zero(4, 1), normal_matrix(rng, 4, 1),
                     normal_matrix(rng, 4, 1), Vector::Constant(1, 0.5));
  LatentMatrices v = f.evaluate(normal_matrix(rng, 9, 1), z);
  EXPECT_LT((v.weight.array() - 1.0).abs().maxCoeff(), 1e-15);
}

TEST(GpInterp, SingleAnchorScalarSolve) {
  const double u = std::log(2.0), ell = 0.7, z0 = 0.3;
  GpInterpFunction f(1, 1, Vector::Ones(1), Matrix::Constant(1, 1, u), Matrix::Zero(1, 1),
                     Matrix::Zero(1, 1), Vector::Constant(1, ell), 0.0);
  Vector x(3);
  x << 0.3, 1.0, -0.5;
  LatentMatrices v = f.evaluate(x, Matrix::Constant(1, 1, z0));
  for (Index i = 0; i < 3; ++i) {
    const double kxz = std::exp(-0.5 * (x(i) - z0) * (x(i) - z0) / (ell * ell));
    EXPECT_NEAR(v.weight(i, 0), std::exp(kxz / 1.0 * u), 1e-14);
  }
  EXPECT_NEAR(v.weight(0, 0), 2.0, 1e-14);
}

TEST(GpInterp, RejectsMismatchedInducing) {
  std::mt19937_64 rng(9);
  GpInterpFunction f(1, 1, Vector::Ones(1), Matrix::Zero(4, 1), Matrix::Zero(4, 1),
                     Matrix::Zero(4, 1), Vector::Ones(1));
  EXPECT_THROW(f.evaluate(Matrix::Zero(2, 1)), InvalidArgument);
  EXPECT_THROW(f.evaluate(Matrix::Zero(2, 1), Matrix::Zero(3, 1)), DimensionMismatch);
  EXPECT_THROW(GpInterpFunction(1, 1, Vector::Ones(1), Matrix::Zero(4, 2), Matrix::Zero(4, 1),
                                Matrix::Zero(4, 1), Vector::Ones(1)),
               DimensionMismatch);
}

TEST(GpInterp, OutputsAreContinuous) {
  std::mt19937_64 rng(10);
  Matrix z = uniform_matrix(rng, 8, 1, -1.0, 1.0);
  auto k = random_gp_gsm(rng, 2, 1, z);
  const double h = 1e-6;
  Matrix x = uniform_matrix(rng, 20, 1, -1.0, 1.0);
  const LatentMatrices a = k->functions().evaluate(x, z);
  const LatentMatrices b = k->functions().evaluate((x.array() + h).matrix(), z);
  const LatentMatrices c = k->functions().evaluate((x.array() + 2.0 * h).matrix(), z);
  auto check = [&](const Matrix& fa, const Matrix& fb, const Matrix& fc) {
    Matrix first = (fb - fa).cwiseAbs();
    Matrix second = (fc - fb).cwiseAbs();
    EXPECT_LT(first.maxCoeff(), 1e-3);
    // Consecutive increments agree to first order, so the slope is finite.
    EXPECT_LT((first - second).cwiseAbs().maxCoeff(), 1e-8);
  };
  check(a.weight, b.weight, c.weight);
  check(a.lengthscale, b.lengthscale, c.lengthscale);
  check(a.frequency, b.frequency, c.frequency);
}

TEST(Properties, OutputsStayInRange) {
  std::mt19937_64 rng(11);
  for (Index d : {1, 3}) {
    const Vector ny = Vector::Constant(d, 5.0);
    Matrix x = normal_matrix(rng, 1000, d, 3.0);
    Matrix z = uniform_matrix(rng, 10, d, -2.0, 2.0);
    auto neural = random_neural_gsm(rng, 3, d);
    auto gp = random_gp_gsm(rng, 3, d, z);
    expect_in_range(neural->functions().evaluate(x), ny);
    expect_in_range(gp->functions().evaluate(x, z), ny);
  }
}

TEST(Properties, WarpRoundTrips) {
  std::mt19937_64 rng(12);
  const double nyq = 3.7;
  for (int i = 0; i < 200; ++i) {
    const double w = uniform(rng, 1e-3, 50.0);
    EXPECT_NEAR(std::exp(std::log(w)), w, 1e-12 * w);
    const double mu = uniform(rng, 1e-3, nyq - 1e-3);
    EXPECT_NEAR(nyq * sigmoid(logit(mu / nyq)), mu, 1e-12);
  }
}

TEST(Properties, LatentGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(13);
  Matrix x = normal_matrix(rng, 5, 2);
  Matrix z = normal_matrix(rng, 4, 2);
  Matrix w = normal_matrix(rng, 5, 6);
  auto neural = random_neural_gsm(rng, 3, 2, {4});
  auto gp = random_gp_gsm(rng, 3, 2, z);
  for (GsmKernel* k : {neural.get(), gp.get()}) {
    SCOPED_TRACE(k->name());
    ParamFunction& f = k->functions();
    auto objective = [&](ad::Tape& t) {
      auto v = f.evaluate(t, {t.constant(x)}, t.constant(z)).front();
      return ad::sum(t.constant(w.leftCols(3)) * v.weight) + ad::sum(t.constant(w) * v.lengthscale) +
             ad::sum(t.constant(w) * v.frequency);
    };
    const auto report = check_gradients(objective, f.params(), 1e-5, 1e-6);
    EXPECT_TRUE(report.passed) << report.max_relative_error;
  }
}
