#pragma once

#include <memory>
#include <vector>

#include "nsgp/autodiff.hpp"
#include "nsgp/kernels.hpp"

namespace nsgp {

struct PredictiveDistribution {
  Vector mean;
  /// Marginal variances, with the noise variance added when requested.
  Vector variance;
};

/// Sparse variational GP regression with an unwhitened Gaussian q(u) = N(m, L Lᵀ)
/// over the function values at M inducing locations and Gaussian noise.
class SvgpModel {
 public:
  /// q(u) starts at the prior: m = 0 and L = chol(K_zz).
  SvgpModel(std::unique_ptr<Kernel> kernel, const Matrix& inducing, double noise_variance,
            double jitter = kDefaultJitter);

  SvgpModel(const SvgpModel& other);
  SvgpModel& operator=(const SvgpModel& other);
  SvgpModel(SvgpModel&&) = default;
  SvgpModel& operator=(SvgpModel&&) = default;

  const Kernel& kernel() const { return *kernel_; }
  Kernel& kernel() { return *kernel_; }

  Param& inducing() { return inducing_; }
  const Param& inducing() const { return inducing_; }
  Param& q_mean() { return q_mean_; }
  const Param& q_mean() const { return q_mean_; }
  Param& q_sqrt() { return q_sqrt_; }
  const Param& q_sqrt() const { return q_sqrt_; }
  Param& noise() { return noise_; }
  const Param& noise() const { return noise_; }

  Index num_inducing() const { return inducing_.raw.rows(); }
  Index input_dim() const { return inducing_.raw.cols(); }
  double noise_variance() const { return noise_.value()(0, 0); }
  double jitter() const { return jitter_; }

  /// Kernel parameters followed by z, m, L and the noise.
  std::vector<Param*> params();
  std::vector<const Param*> params() const;

  /// Sets m = 0 and L = chol(K_zz) for the current kernel and inducing points.
  void reset_to_prior();

  /// (N / B) Σ_j E_q[log N(y_j | f_j, σ²)] − KL(q(u) ‖ p(u)) over a batch of
  /// B rows, with the Gaussian expectation in closed form.
  ad::Var elbo(ad::Tape& tape, const Matrix& x, const Vector& y, Index n_total) const;
  double elbo(const Matrix& x, const Vector& y, Index n_total) const;

  ad::Var kl_divergence(ad::Tape& tape) const;
  double kl_divergence() const;

  PredictiveDistribution predict(const Matrix& x, bool include_noise) const;

  void project() { kernel_->project(); }

 private:
  struct Posterior {
    ad::Var mean;       // B × 1
    ad::Var variance;   // B × 1, noise excluded
  };
  Posterior posterior(ad::Tape& tape, const Matrix& x, ad::Var* kl) const;

  std::unique_ptr<Kernel> kernel_;
  Param inducing_;
  Param q_mean_;
  Param q_sqrt_;
  Param noise_;
  double jitter_;
};

struct Metrics {
  double mean_log_density = 0.0;
  double mae = 0.0;
  double mse = 0.0;
};

/// Test-set averages of log N(y | mean, variance), |y − mean| and (y − mean)².
/// `pred.variance` is used as the full predictive variance, so pass a
/// prediction made with include_noise = true for noise-inclusive densities.
Metrics metrics(const PredictiveDistribution& pred, const Vector& y);

}  // namespace nsgp
