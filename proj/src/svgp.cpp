#include "nsgp/svgp.hpp"

#include <cmath>

#include "nsgp/errors.hpp"
#include "nsgp/kernel_ops.hpp"

namespace nsgp {

SvgpModel::SvgpModel(std::unique_ptr<Kernel> kernel, const Matrix& inducing,
                     double noise_variance, double jitter)
    : kernel_(std::move(kernel)), jitter_(jitter) {
  if (!kernel_) throw InvalidArgument("svgp model needs a kernel");
  if (inducing.rows() < 1) throw InvalidArgument("svgp model needs at least one inducing point");
  if (inducing.cols() != kernel_->input_dim()) {
    throw DimensionMismatch("inducing locations have " + std::to_string(inducing.cols()) +
                            " columns, kernel expects " + std::to_string(kernel_->input_dim()));
  }
  if (!(noise_variance > 0.0)) throw ConstraintViolation("noise variance must be positive");
  const Index m = inducing.rows();
  inducing_ = Param{"model.inducing", inducing, Constraint::kNone};
  q_mean_ = Param{"model.q_mean", Matrix::Zero(m, 1), Constraint::kNone};
  q_sqrt_ = Param::from_value("model.q_sqrt", Matrix::Identity(m, m),
                              Constraint::kLowerTriangular);
  noise_ = Param::from_value("model.noise_variance", Matrix::Constant(1, 1, noise_variance),
                             Constraint::kPositive);
  reset_to_prior();
}

SvgpModel::SvgpModel(const SvgpModel& other)
    : kernel_(other.kernel_->clone()),
      inducing_(other.inducing_),
      q_mean_(other.q_mean_),
      q_sqrt_(other.q_sqrt_),
      noise_(other.noise_),
      jitter_(other.jitter_) {}

SvgpModel& SvgpModel::operator=(const SvgpModel& other) {
  if (this != &other) {
    SvgpModel copy(other);
    *this = std::move(copy);
  }
  return *this;
}

std::vector<Param*> SvgpModel::params() {
  std::vector<Param*> out = kernel_->params();
  out.insert(out.end(), {&inducing_, &q_mean_, &q_sqrt_, &noise_});
  return out;
}

std::vector<const Param*> SvgpModel::params() const {
  std::vector<const Param*> out = static_cast<const Kernel&>(*kernel_).params();
  out.insert(out.end(), {&inducing_, &q_mean_, &q_sqrt_, &noise_});
  return out;
}

void SvgpModel::reset_to_prior() {
  const Matrix& z = inducing_.raw;
  const Matrix kzz = kernel_->gram(z, z, z);
  q_mean_.raw.setZero();
  q_sqrt_ = Param::from_value(q_sqrt_.name, cholesky(kzz, jitter_).lower,
                              Constraint::kLowerTriangular);
}

SvgpModel::Posterior SvgpModel::posterior(ad::Tape& tape, const Matrix& x, ad::Var* kl) const {
  if (x.cols() != input_dim()) {
    throw DimensionMismatch("inputs have " + std::to_string(x.cols()) + " columns, model expects " +
                            std::to_string(input_dim()));
  }
  ad::Var z = tape.param(inducing_);
  auto features = kernel_->featurize(tape, {z, tape.constant(x)}, z);
  const Features& fz = features[0];
  const Features& fx = features[1];

  ad::Var chol = ad::cholesky(kernel_->cross(tape, fz, fz), jitter_);
  ad::Var a = ad::solve_lower(chol, kernel_->cross(tape, fz, fx));  // L⁻¹ K_zx
  ad::Var b = ad::solve_lower_transpose(chol, a);                   // K_zz⁻¹ K_zx
  ad::Var m = tape.param(q_mean_);
  ad::Var s_sqrt = tape.param(q_sqrt_);

  Posterior post;
  post.mean = ad::matmul(ad::transpose(b), m);
  ad::Var explained = ad::transpose(ad::col_sum(ad::square(a)));
  ad::Var retained =
      ad::transpose(ad::col_sum(ad::square(ad::matmul(ad::transpose(s_sqrt), b))));
  post.variance = kernel_->diagonal(tape, fx) - explained + retained;

  if (kl != nullptr) {
    const double m_count = static_cast<double>(num_inducing());
    ad::Var trace = ad::sum(ad::square(ad::solve_lower(chol, s_sqrt)));
    ad::Var mahalanobis = ad::sum(ad::square(ad::solve_lower(chol, m)));
    ad::Var logdet_k = 2.0 * ad::sum(ad::log(ad::diag(chol)));
    ad::Var logdet_s = 2.0 * ad::sum(ad::log(ad::diag(s_sqrt)));
    *kl = 0.5 * (trace + mahalanobis - m_count + logdet_k - logdet_s);
  }
  return post;
}

ad::Var SvgpModel::elbo(ad::Tape& tape, const Matrix& x, const Vector& y, Index n_total) const {
  const Index batch = x.rows();
  if (batch < 1) throw InvalidArgument("elbo: empty batch");
  if (y.size() != batch) throw DimensionMismatch("elbo: inputs and targets differ in length");
  if (n_total < batch) throw InvalidArgument("elbo: n_total smaller than the batch");

  ad::Var kl;
  Posterior post = posterior(tape, x, &kl);
  ad::Var noise = tape.param(noise_);
  ad::Var residual_sq = ad::square(tape.constant(y) - post.mean);
  ad::Var per_point =
      -0.5 * ad::log(kTwoPi * noise) - (residual_sq + post.variance) / (2.0 * noise);
  const double scale = static_cast<double>(n_total) / static_cast<double>(batch);
  ad::Var out = scale * ad::sum(per_point) - kl;
  if (!std::isfinite(out.scalar())) throw NonFinite("elbo is not finite");
  return out;
}

double SvgpModel::elbo(const Matrix& x, const Vector& y, Index n_total) const {
  ad::Tape tape;
  return elbo(tape, x, y, n_total).scalar();
}

ad::Var SvgpModel::kl_divergence(ad::Tape& tape) const {
  ad::Var kl;
  posterior(tape, inducing_.raw.topRows(1), &kl);
  return kl;
}

double SvgpModel::kl_divergence() const {
  ad::Tape tape;
  return kl_divergence(tape).scalar();
}

PredictiveDistribution SvgpModel::predict(const Matrix& x, bool include_noise) const {
  ad::Tape tape;
  Posterior post = posterior(tape, x, nullptr);
  PredictiveDistribution out;
  out.mean = post.mean.value().col(0);
  out.variance = post.variance.value().col(0).cwiseMax(0.0);
  if (include_noise) out.variance.array() += noise_variance();
  if (!out.mean.allFinite() || !out.variance.allFinite()) {
    throw NonFinite("predictive distribution is not finite");
  }
  return out;
}

Metrics metrics(const PredictiveDistribution& pred, const Vector& y) {
  if (pred.mean.size() != y.size() || pred.variance.size() != y.size()) {
    throw DimensionMismatch("metrics: prediction and targets differ in length");
  }
  if (y.size() == 0) throw InvalidArgument("metrics: empty test set");
  Metrics out;
  const double n = static_cast<double>(y.size());
  for (Index i = 0; i < y.size(); ++i) {
    const double r = y(i) - pred.mean(i);
    const double v = pred.variance(i);
    out.mean_log_density += -0.5 * std::log(kTwoPi * v) - 0.5 * r * r / v;
    out.mae += std::abs(r);
    out.mse += r * r;
  }
  out.mean_log_density /= n;
  out.mae /= n;
  out.mse /= n;
  return out;
}

}  // namespace nsgp
