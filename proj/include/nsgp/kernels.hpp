#pragma once

#include <memory>
#include <string>
#include <vector>

#include "nsgp/autodiff.hpp"
#include "nsgp/param_functions.hpp"

namespace nsgp {

/// An input batch prepared for kernel evaluation. GSM kernels attach the
/// latent parameter functions evaluated at the batch.
struct Features {
  ad::Var x;
  LatentValues latent;
};

class Kernel {
 public:
  virtual ~Kernel() = default;

  /// One of "rbf", "sm", "neural-gsm", "gp-gsm", "constant-gsm".
  virtual std::string name() const = 0;
  virtual Index input_dim() const = 0;
  virtual std::unique_ptr<Kernel> clone() const = 0;

  /// Prepares each batch. `inducing` is the model's inducing-location node
  /// (may be empty for kernels that do not need it).
  virtual std::vector<Features> featurize(ad::Tape& tape, const std::vector<ad::Var>& xs,
                                          const ad::Var& inducing) const;

  virtual ad::Var cross(ad::Tape& tape, const Features& a, const Features& b) const = 0;
  /// k(x_i, x_i) as an n × 1 column.
  virtual ad::Var diagonal(ad::Tape& tape, const Features& a) const = 0;

  virtual std::vector<const Param*> params() const = 0;
  std::vector<Param*> params();
  virtual std::vector<const Param*> regularized_params() const { return {}; }

  /// Restores parameter invariants after an optimizer step.
  virtual void project() {}

  /// Plain evaluation on a throwaway tape.
  Matrix gram(const Matrix& x, const Matrix& x2, const Matrix& inducing = Matrix()) const;
  Vector diag(const Matrix& x, const Matrix& inducing = Matrix()) const;

 protected:
  void check_dim(const ad::Var& x) const;
};

/// σ_f² exp(−Σ_k (x_k − x'_k)² / (2ℓ_k²)).
class RbfKernel final : public Kernel {
 public:
  RbfKernel(double variance, const Vector& lengthscale);

  std::string name() const override { return "rbf"; }
  Index input_dim() const override { return lengthscale_.raw.cols(); }
  std::unique_ptr<Kernel> clone() const override { return std::make_unique<RbfKernel>(*this); }
  ad::Var cross(ad::Tape& tape, const Features& a, const Features& b) const override;
  ad::Var diagonal(ad::Tape& tape, const Features& a) const override;
  std::vector<const Param*> params() const override { return {&variance_, &lengthscale_}; }
  using Kernel::params;

 private:
  Param variance_;
  Param lengthscale_;
};

/// Σ_q w_q² Π_k exp(−2π²σ_qk² τ_k²) cos(2π μ_qk τ_k), τ = x − x'.
class SpectralMixtureKernel final : public Kernel {
 public:
  /// `weight` has Q entries; `frequency` and `scale` are Q × d. Throws
  /// ConstraintViolation unless w > 0, σ > 0 and 0 ≤ μ ≤ F_N.
  SpectralMixtureKernel(const Vector& weight, const Matrix& frequency, const Matrix& scale,
                        Vector nyquist);

  std::string name() const override { return "sm"; }
  Index input_dim() const override { return nyquist_.size(); }
  std::unique_ptr<Kernel> clone() const override {
    return std::make_unique<SpectralMixtureKernel>(*this);
  }
  ad::Var cross(ad::Tape& tape, const Features& a, const Features& b) const override;
  ad::Var diagonal(ad::Tape& tape, const Features& a) const override;
  std::vector<const Param*> params() const override { return {&weight_, &frequency_, &scale_}; }
  using Kernel::params;
  /// Clamps frequencies into [0, F_N].
  void project() override;

  Index components() const { return weight_.raw.cols(); }
  Vector weights() const { return weight_.value().row(0).transpose(); }
  Matrix frequencies() const { return frequency_.value(); }
  Matrix scales() const { return scale_.value(); }
  const Vector& nyquist() const { return nyquist_; }

 private:
  Param weight_;     // 1 × Q, positive
  Param frequency_;  // Q × d, projected into [0, F_N]
  Param scale_;      // Q × d, positive
  Vector nyquist_;
};

/// Σ_q w_q(x) w_q(x') Π_k Gibbs(ℓ_qk(x), ℓ_qk(x'), τ_k) cos(2π(μ_q(x)ᵀx − μ_q(x')ᵀx')).
class GsmKernel final : public Kernel {
 public:
  explicit GsmKernel(std::unique_ptr<ParamFunction> functions);
  GsmKernel(const GsmKernel& other);
  GsmKernel& operator=(const GsmKernel& other);
  GsmKernel(GsmKernel&&) = default;
  GsmKernel& operator=(GsmKernel&&) = default;

  std::string name() const override;
  Index input_dim() const override { return functions_->input_dim(); }
  std::unique_ptr<Kernel> clone() const override { return std::make_unique<GsmKernel>(*this); }
  std::vector<Features> featurize(ad::Tape& tape, const std::vector<ad::Var>& xs,
                                  const ad::Var& inducing) const override;
  ad::Var cross(ad::Tape& tape, const Features& a, const Features& b) const override;
  ad::Var diagonal(ad::Tape& tape, const Features& a) const override;
  std::vector<const Param*> params() const override {
    return static_cast<const ParamFunction&>(*functions_).params();
  }
  using Kernel::params;
  std::vector<const Param*> regularized_params() const override {
    return functions_->regularized_params();
  }

  const ParamFunction& functions() const { return *functions_; }
  ParamFunction& functions() { return *functions_; }

 private:
  std::unique_ptr<ParamFunction> functions_;
};

/// Plain-matrix entry points.
Matrix rbf_eval(const RbfKernel& k, const Matrix& x, const Matrix& x2);
Matrix sm_eval(const SpectralMixtureKernel& k, const Matrix& x, const Matrix& x2);
Matrix gsm_eval(const GsmKernel& k, const Matrix& x, const Matrix& x2,
                const Matrix& inducing = Matrix());

/// √(2ℓℓ'/(ℓ² + ℓ'²)) exp(−(x − x')²/(ℓ² + ℓ'²)) for univariate inputs.
/// Throws NonFinite if any lengthscale is not strictly positive.
Matrix gibbs_eval(const Vector& ell_x, const Vector& ell_x2, const Vector& x, const Vector& x2);

/// Input-localized spectral density S(s, x) = Σ_q w_q(x)² N(s; μ_q(x), ℓ_q(x)⁻²).
struct SpectrogramGrid {
  Vector x_grid;
  Vector s_grid;
  /// s_grid.size() × x_grid.size().
  Matrix density;
};

/// Univariate GSM kernels only; `inducing` is needed by GP-interpolated
/// parameter functions.
SpectrogramGrid spectrogram(const GsmKernel& k, const Vector& x_grid, const Vector& s_grid,
                            const Matrix& inducing = Matrix());

/// Stationary special case: the SM kernel seen as a GSM kernel with constant
/// functions ℓ_q = 1/(2πσ_q).
SpectrogramGrid spectrogram(const SpectralMixtureKernel& k, const Vector& x_grid,
                            const Vector& s_grid);

/// CSV layout: first header cell empty then x values; each following row is
/// an s value followed by the densities at that frequency.
std::string spectrogram_csv(const SpectrogramGrid& grid);

}  // namespace nsgp
