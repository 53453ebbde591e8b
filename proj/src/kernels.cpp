#include "nsgp/kernels.hpp"

#include <cmath>
#include <sstream>

#include "nsgp/errors.hpp"
#include "nsgp/kernel_ops.hpp"

namespace nsgp {

std::vector<Features> Kernel::featurize(ad::Tape&, const std::vector<ad::Var>& xs,
                                        const ad::Var&) const {
  std::vector<Features> out;
  for (const ad::Var& x : xs) {
    check_dim(x);
    out.push_back({x, {}});
  }
  return out;
}

std::vector<Param*> Kernel::params() {
  std::vector<Param*> out;
  for (const Param* p : static_cast<const Kernel*>(this)->params()) {
    out.push_back(const_cast<Param*>(p));
  }
  return out;
}

void Kernel::check_dim(const ad::Var& x) const {
  if (x.cols() != input_dim()) {
    throw DimensionMismatch(name() + " kernel expects " + std::to_string(input_dim()) +
                            " input columns, got " + std::to_string(x.cols()));
  }
}

Matrix Kernel::gram(const Matrix& x, const Matrix& x2, const Matrix& inducing) const {
  ad::Tape tape;
  ad::Var z = inducing.size() > 0 ? tape.constant(inducing) : ad::Var();
  auto f = featurize(tape, {tape.constant(x), tape.constant(x2)}, z);
  return cross(tape, f[0], f[1]).value();
}

Vector Kernel::diag(const Matrix& x, const Matrix& inducing) const {
  ad::Tape tape;
  ad::Var z = inducing.size() > 0 ? tape.constant(inducing) : ad::Var();
  auto f = featurize(tape, {tape.constant(x)}, z);
  return diagonal(tape, f[0]).value().col(0);
}

// ---------------------------------------------------------------------------

RbfKernel::RbfKernel(double variance, const Vector& lengthscale) {
  if (!(variance > 0.0)) throw ConstraintViolation("rbf variance must be positive");
  if (lengthscale.size() < 1 || !(lengthscale.array() > 0.0).all()) {
    throw ConstraintViolation("rbf lengthscales must be positive");
  }
  variance_ = Param::from_value("kernel.rbf.variance", Matrix::Constant(1, 1, variance),
                                Constraint::kPositive);
  lengthscale_ = Param::from_value("kernel.rbf.lengthscale", lengthscale.transpose(),
                                   Constraint::kPositive);
}

ad::Var RbfKernel::cross(ad::Tape& tape, const Features& a, const Features& b) const {
  return rbf_cross(a.x, b.x, tape.param(variance_), tape.param(lengthscale_));
}

ad::Var RbfKernel::diagonal(ad::Tape& tape, const Features& a) const {
  return tape.constant(Matrix::Ones(a.x.rows(), 1)) * tape.param(variance_);
}

// ---------------------------------------------------------------------------

SpectralMixtureKernel::SpectralMixtureKernel(const Vector& weight, const Matrix& frequency,
                                             const Matrix& scale, Vector nyquist)
    : nyquist_(std::move(nyquist)) {
  const Index q = weight.size();
  const Index d = nyquist_.size();
  if (q < 1) throw InvalidArgument("spectral mixture needs Q >= 1");
  if (frequency.rows() != q || frequency.cols() != d || scale.rows() != q || scale.cols() != d) {
    throw DimensionMismatch("spectral mixture: frequency and scale must be Q x d");
  }
  if (!(weight.array() > 0.0).all()) throw ConstraintViolation("sm weights must be positive");
  if (!(scale.array() > 0.0).all()) throw ConstraintViolation("sm scales must be positive");
  for (Index i = 0; i < q; ++i) {
    for (Index k = 0; k < d; ++k) {
      if (!(frequency(i, k) >= 0.0 && frequency(i, k) <= nyquist_(k))) {
        throw ConstraintViolation("sm frequency outside [0, F_N]");
      }
    }
  }
  weight_ = Param::from_value("kernel.sm.weight", weight.transpose(), Constraint::kPositive);
  frequency_ = Param{"kernel.sm.frequency", frequency, Constraint::kNone};
  scale_ = Param::from_value("kernel.sm.scale", scale, Constraint::kPositive);
}

ad::Var SpectralMixtureKernel::cross(ad::Tape& tape, const Features& a,
                                     const Features& b) const {
  const Index d = input_dim();
  ad::Var w = tape.param(weight_);
  ad::Var mu = tape.param(frequency_);
  ad::Var sigma = tape.param(scale_);
  std::vector<ad::Var> lags;
  for (Index k = 0; k < d; ++k) lags.push_back(pairwise_lag(a.x, b.x, k));

  ad::Var total;
  for (Index q = 0; q < components(); ++q) {
    ad::Var term = ad::square(ad::col(w, q));
    ad::Var mu_q = ad::transpose(ad::col(ad::transpose(mu), q));     // 1 × d
    ad::Var sigma_q = ad::transpose(ad::col(ad::transpose(sigma), q));
    for (Index k = 0; k < d; ++k) {
      const ad::Var& tau = lags[k];
      ad::Var s = ad::col(sigma_q, k);
      ad::Var envelope = ad::exp(-2.0 * kPi * kPi * ad::square(s) * ad::square(tau));
      ad::Var wave = ad::cos(kTwoPi * ad::col(mu_q, k) * tau);
      term = term * envelope * wave;
    }
    total = q == 0 ? term : total + term;
  }
  return total;
}

ad::Var SpectralMixtureKernel::diagonal(ad::Tape& tape, const Features& a) const {
  ad::Var variance = ad::row_sum(ad::square(tape.param(weight_)));
  return tape.constant(Matrix::Ones(a.x.rows(), 1)) * variance;
}

void SpectralMixtureKernel::project() {
  for (Index k = 0; k < frequency_.raw.cols(); ++k) {
    frequency_.raw.col(k) = frequency_.raw.col(k).cwiseMax(0.0).cwiseMin(nyquist_(k));
  }
}

// ---------------------------------------------------------------------------

GsmKernel::GsmKernel(std::unique_ptr<ParamFunction> functions)
    : functions_(std::move(functions)) {
  if (!functions_) throw InvalidArgument("gsm kernel needs parameter functions");
}

GsmKernel::GsmKernel(const GsmKernel& other) : functions_(other.functions_->clone()) {}

GsmKernel& GsmKernel::operator=(const GsmKernel& other) {
  if (this != &other) functions_ = other.functions_->clone();
  return *this;
}

std::string GsmKernel::name() const {
  switch (functions_->kind()) {
    case ParamFunctionKind::kNeural:
      return "neural-gsm";
    case ParamFunctionKind::kGpInterp:
      return "gp-gsm";
    case ParamFunctionKind::kConstant:
      return "constant-gsm";
  }
  return "constant-gsm";
}

std::vector<Features> GsmKernel::featurize(ad::Tape& tape, const std::vector<ad::Var>& xs,
                                           const ad::Var& inducing) const {
  for (const ad::Var& x : xs) check_dim(x);
  auto latent = functions_->evaluate(tape, xs, inducing);
  std::vector<Features> out;
  for (std::size_t i = 0; i < xs.size(); ++i) out.push_back({xs[i], latent[i]});
  return out;
}

ad::Var GsmKernel::cross(ad::Tape&, const Features& a, const Features& b) const {
  const Index d = input_dim();
  std::vector<ad::Var> lags;
  for (Index k = 0; k < d; ++k) lags.push_back(pairwise_lag(a.x, b.x, k));

  ad::Var total;
  for (Index q = 0; q < functions_->components(); ++q) {
    ad::Var term = ad::col(a.latent.weight, q) * ad::transpose(ad::col(b.latent.weight, q));
    ad::Var phase_a;
    ad::Var phase_b;
    for (Index k = 0; k < d; ++k) {
      const Index c = q * d + k;
      ad::Var la = ad::col(a.latent.lengthscale, c);
      ad::Var lb = ad::transpose(ad::col(b.latent.lengthscale, c));
      ad::Var denom = ad::square(la) + ad::square(lb);
      ad::Var prefactor = ad::sqrt(2.0 * (la * lb) / denom);
      ad::Var envelope = ad::exp(-ad::square(lags[k]) / denom);
      term = term * prefactor * envelope;

      ad::Var pa = ad::col(a.latent.frequency, c) * ad::col(a.x, k);
      ad::Var pb = ad::col(b.latent.frequency, c) * ad::col(b.x, k);
      phase_a = k == 0 ? pa : phase_a + pa;
      phase_b = k == 0 ? pb : phase_b + pb;
    }
    term = term * ad::cos(kTwoPi * (phase_a - ad::transpose(phase_b)));
    total = q == 0 ? term : total + term;
  }
  return total;
}

ad::Var GsmKernel::diagonal(ad::Tape&, const Features& a) const {
  return ad::row_sum(ad::square(a.latent.weight));
}

// ---------------------------------------------------------------------------

Matrix rbf_eval(const RbfKernel& k, const Matrix& x, const Matrix& x2) { return k.gram(x, x2); }

Matrix sm_eval(const SpectralMixtureKernel& k, const Matrix& x, const Matrix& x2) {
  return k.gram(x, x2);
}

Matrix gsm_eval(const GsmKernel& k, const Matrix& x, const Matrix& x2, const Matrix& inducing) {
  return k.gram(x, x2, inducing);
}

Matrix gibbs_eval(const Vector& ell_x, const Vector& ell_x2, const Vector& x, const Vector& x2) {
  if (ell_x.size() != x.size() || ell_x2.size() != x2.size()) {
    throw DimensionMismatch("gibbs: one lengthscale per input required");
  }
  if (!(ell_x.array() > 0.0).all() || !(ell_x2.array() > 0.0).all() || !ell_x.allFinite() ||
      !ell_x2.allFinite()) {
    throw NonFinite("gibbs: lengthscales must be finite and strictly positive");
  }
  Matrix out(x.size(), x2.size());
  for (Index j = 0; j < x2.size(); ++j) {
    for (Index i = 0; i < x.size(); ++i) {
      const double denom = ell_x(i) * ell_x(i) + ell_x2(j) * ell_x2(j);
      const double tau = x(i) - x2(j);
      out(i, j) = std::sqrt(2.0 * ell_x(i) * ell_x2(j) / denom) * std::exp(-tau * tau / denom);
    }
  }
  return out;
}

namespace {

SpectrogramGrid density_grid(const Matrix& weight, const Matrix& lengthscale,
                             const Matrix& frequency, const Vector& x_grid,
                             const Vector& s_grid) {
  if (x_grid.size() == 0 || s_grid.size() == 0) {
    throw InvalidArgument("spectrogram grids must be non-empty");
  }
  SpectrogramGrid grid{x_grid, s_grid, Matrix::Zero(s_grid.size(), x_grid.size())};
  const double inv_sqrt_two_pi = 1.0 / std::sqrt(kTwoPi);
  for (Index j = 0; j < x_grid.size(); ++j) {
    for (Index q = 0; q < weight.cols(); ++q) {
      const double w2 = weight(j, q) * weight(j, q);
      const double ell = lengthscale(j, q);  // standard deviation 1/ℓ
      const double mu = frequency(j, q);
      for (Index i = 0; i < s_grid.size(); ++i) {
        const double z = (s_grid(i) - mu) * ell;
        grid.density(i, j) += w2 * ell * inv_sqrt_two_pi * std::exp(-0.5 * z * z);
      }
    }
  }
  return grid;
}

}  // namespace

SpectrogramGrid spectrogram(const GsmKernel& k, const Vector& x_grid, const Vector& s_grid,
                            const Matrix& inducing) {
  if (k.input_dim() != 1) throw DimensionMismatch("spectrogram needs univariate inputs");
  const LatentMatrices latent = k.functions().evaluate(Matrix(x_grid), inducing);
  return density_grid(latent.weight, latent.lengthscale, latent.frequency, x_grid, s_grid);
}

SpectrogramGrid spectrogram(const SpectralMixtureKernel& k, const Vector& x_grid,
                            const Vector& s_grid) {
  if (k.input_dim() != 1) throw DimensionMismatch("spectrogram needs univariate inputs");
  const Index n = x_grid.size();
  const Vector w = k.weights();
  const Matrix mu = k.frequencies();
  const Matrix sigma = k.scales();
  Matrix weight(n, w.size());
  Matrix lengthscale(n, w.size());
  Matrix frequency(n, w.size());
  for (Index q = 0; q < w.size(); ++q) {
    weight.col(q).setConstant(w(q));
    lengthscale.col(q).setConstant(1.0 / (kTwoPi * sigma(q, 0)));
    frequency.col(q).setConstant(mu(q, 0));
  }
  return density_grid(weight, lengthscale, frequency, x_grid, s_grid);
}

std::string spectrogram_csv(const SpectrogramGrid& grid) {
  std::ostringstream out;
  out.precision(17);
  out << "s\\x";
  for (Index j = 0; j < grid.x_grid.size(); ++j) out << ',' << grid.x_grid(j);
  out << '\n';
  for (Index i = 0; i < grid.s_grid.size(); ++i) {
    out << grid.s_grid(i);
    for (Index j = 0; j < grid.x_grid.size(); ++j) out << ',' << grid.density(i, j);
    out << '\n';
  }
  return out.str();
}

}  // namespace nsgp
