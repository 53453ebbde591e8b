#include "nsgp/param_functions.hpp"

#include <algorithm>
#include <cmath>

#include "nsgp/errors.hpp"
#include "nsgp/kernel_ops.hpp"

namespace nsgp {

std::string to_string(ParamFunctionKind kind) {
  switch (kind) {
    case ParamFunctionKind::kConstant:
      return "constant";
    case ParamFunctionKind::kNeural:
      return "neural";
    case ParamFunctionKind::kGpInterp:
      return "gp-interp";
  }
  return "constant";
}

double selu(double x) {
  return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * std::expm1(x);
}

ParamFunction::ParamFunction(Index components, Index input_dim, Vector nyquist)
    : components_(components), input_dim_(input_dim), nyquist_(std::move(nyquist)) {
  if (components_ < 1) throw InvalidArgument("param function needs at least one component");
  if (input_dim_ < 1) throw InvalidArgument("param function needs input dimension >= 1");
  if (nyquist_.size() != input_dim_) {
    throw DimensionMismatch("nyquist has " + std::to_string(nyquist_.size()) +
                            " entries for input dimension " + std::to_string(input_dim_));
  }
  if (!(nyquist_.array() > 0.0).all() || !nyquist_.allFinite()) {
    throw ConstraintViolation("nyquist frequencies must be positive and finite");
  }
}

std::vector<Param*> ParamFunction::params() {
  std::vector<Param*> out;
  for (const Param* p : static_cast<const ParamFunction*>(this)->params()) {
    out.push_back(const_cast<Param*>(p));
  }
  return out;
}

Matrix ParamFunction::nyquist_row() const {
  Matrix row(1, components_ * input_dim_);
  for (Index q = 0; q < components_; ++q) {
    for (Index k = 0; k < input_dim_; ++k) row(0, q * input_dim_ + k) = nyquist_(k);
  }
  return row;
}

LatentMatrices ParamFunction::evaluate(const Matrix& x, const Matrix& inducing) const {
  ad::Tape tape;
  ad::Var z = inducing.size() > 0 ? tape.constant(inducing) : ad::Var();
  auto latent = evaluate(tape, {tape.constant(x)}, z).front();
  return {latent.weight.value(), latent.lengthscale.value(), latent.frequency.value()};
}

// ---------------------------------------------------------------------------

ConstantFunction::ConstantFunction(const Vector& weight, const Matrix& lengthscale,
                                   const Matrix& frequency, Vector nyquist)
    : ParamFunction(weight.size(), lengthscale.cols(), std::move(nyquist)) {
  const Index q = components_;
  const Index d = input_dim_;
  if (lengthscale.rows() != q || frequency.rows() != q || frequency.cols() != d) {
    throw DimensionMismatch("constant function: expected Q x d lengthscale and frequency");
  }
  if (!(weight.array() > 0.0).all()) throw ConstraintViolation("weights must be positive");
  if (!(lengthscale.array() > 0.0).all()) throw ConstraintViolation("lengthscales must be positive");

  Matrix log_w(1, q);
  Matrix log_l(1, q * d);
  Matrix logit_mu(1, q * d);
  for (Index i = 0; i < q; ++i) {
    log_w(0, i) = std::log(weight(i));
    for (Index k = 0; k < d; ++k) {
      const double mu = frequency(i, k);
      if (!(mu > 0.0 && mu < nyquist_(k))) {
        throw ConstraintViolation("frequency " + std::to_string(mu) +
                                  " outside the open interval (0, " +
                                  std::to_string(nyquist_(k)) + ")");
      }
      log_l(0, i * d + k) = std::log(lengthscale(i, k));
      logit_mu(0, i * d + k) = logit(mu / nyquist_(k));
    }
  }
  log_weight_ = Param{"kernel.constant.log_weight", log_w, Constraint::kNone};
  log_lengthscale_ = Param{"kernel.constant.log_lengthscale", log_l, Constraint::kNone};
  logit_frequency_ = Param{"kernel.constant.logit_frequency", logit_mu, Constraint::kNone};
}

std::unique_ptr<ParamFunction> ConstantFunction::clone() const {
  return std::make_unique<ConstantFunction>(*this);
}

std::vector<LatentValues> ConstantFunction::evaluate(ad::Tape& tape,
                                                     const std::vector<ad::Var>& inputs,
                                                     const ad::Var&) const {
  ad::Var w = ad::exp(tape.param(log_weight_));
  ad::Var l = ad::exp(tape.param(log_lengthscale_));
  ad::Var mu = tape.constant(nyquist_row()) * ad::sigmoid(tape.param(logit_frequency_));
  std::vector<LatentValues> out;
  for (const ad::Var& x : inputs) {
    ad::Var ones = tape.constant(Matrix::Ones(x.rows(), 1));
    out.push_back({ones * w, ones * l, ones * mu});
  }
  return out;
}

std::vector<const Param*> ConstantFunction::params() const {
  return {&log_weight_, &log_lengthscale_, &logit_frequency_};
}

// ---------------------------------------------------------------------------

namespace {

const char* const kHeadNames[] = {"weight", "lengthscale", "frequency"};

}  // namespace

NeuralFunction::NeuralFunction(Index components, Index input_dim, Vector nyquist,
                               std::vector<Index> hidden)
    : ParamFunction(components, input_dim, std::move(nyquist)), hidden_(std::move(hidden)) {
  if (hidden_.empty()) throw InvalidArgument("neural function needs at least one hidden layer");
  Index fan_in = input_dim_;
  for (std::size_t l = 0; l < hidden_.size(); ++l) {
    const std::string prefix = "kernel.neural.trunk" + std::to_string(l);
    weights_.push_back(Param{prefix + ".W", Matrix::Zero(fan_in, hidden_[l]), Constraint::kNone});
    biases_.push_back(Param{prefix + ".b", Matrix::Zero(1, hidden_[l]), Constraint::kNone});
    fan_in = hidden_[l];
  }
  const Index widths[] = {components_, components_ * input_dim_, components_ * input_dim_};
  for (int h = 0; h < 3; ++h) {
    const std::string prefix = std::string("kernel.neural.head.") + kHeadNames[h];
    weights_.push_back(Param{prefix + ".W", Matrix::Zero(fan_in, widths[h]), Constraint::kNone});
    biases_.push_back(Param{prefix + ".b", Matrix::Zero(1, widths[h]), Constraint::kNone});
  }
}

NeuralFunction::NeuralFunction(Index components, Index input_dim, Vector nyquist,
                               std::vector<Index> hidden, std::mt19937_64& rng)
    : NeuralFunction(components, input_dim, std::move(nyquist), std::move(hidden)) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Param& w : weights_) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(w.raw.rows()));
    for (Index j = 0; j < w.raw.cols(); ++j) {
      for (Index i = 0; i < w.raw.rows(); ++i) w.raw(i, j) = scale * normal(rng);
    }
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Param& mu_bias = biases_.back();
  for (Index q = 0; q < components_; ++q) {
    for (Index k = 0; k < input_dim_; ++k) {
      // Stratified so the components start spread over (0, F_N).
      double u = (static_cast<double>(q) + unit(rng)) / static_cast<double>(components_);
      u = std::clamp(u, 1e-6, 1.0 - 1e-6);
      mu_bias.raw(0, q * input_dim_ + k) = logit(u);
    }
  }
}

std::unique_ptr<ParamFunction> NeuralFunction::clone() const {
  return std::make_unique<NeuralFunction>(*this);
}

std::vector<LatentValues> NeuralFunction::evaluate(ad::Tape& tape,
                                                   const std::vector<ad::Var>& inputs,
                                                   const ad::Var&) const {
  const std::size_t depth = hidden_.size();
  ad::Var nyq = tape.constant(nyquist_row());
  std::vector<LatentValues> out;
  for (const ad::Var& x : inputs) {
    if (x.cols() != input_dim_) {
      throw DimensionMismatch("neural function expects " + std::to_string(input_dim_) +
                              " input columns, got " + std::to_string(x.cols()));
    }
    ad::Var h = x;
    for (std::size_t l = 0; l < depth; ++l) {
      h = ad::selu(ad::matmul(h, tape.param(weights_[l])) + tape.param(biases_[l]));
    }
    auto head = [&](std::size_t i) {
      return ad::matmul(h, tape.param(weights_[depth + i])) + tape.param(biases_[depth + i]);
    };
    LatentValues v{ad::softplus(head(0)), ad::softplus(head(1)), nyq * ad::sigmoid(head(2))};
    if (!v.weight.value().allFinite() || !v.lengthscale.value().allFinite() ||
        !v.frequency.value().allFinite()) {
      throw NonFinite("neural parameter function produced non-finite outputs");
    }
    out.push_back(v);
  }
  return out;
}

std::vector<const Param*> NeuralFunction::params() const {
  std::vector<const Param*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<const Param*> NeuralFunction::regularized_params() const {
  std::vector<const Param*> out;
  for (const Param& w : weights_) out.push_back(&w);
  return out;
}

// ---------------------------------------------------------------------------

GpInterpFunction::GpInterpFunction(Index components, Index input_dim, Vector nyquist,
                                   const Matrix& u_weight, const Matrix& u_lengthscale,
                                   const Matrix& u_frequency, const Vector& anchor_lengthscale,
                                   double anchor_jitter)
    : ParamFunction(components, input_dim, std::move(nyquist)), anchor_jitter_(anchor_jitter) {
  const Index m = u_weight.rows();
  const Index qd = components_ * input_dim_;
  if (m < 1 || u_weight.cols() != components_ || u_lengthscale.rows() != m ||
      u_lengthscale.cols() != qd || u_frequency.rows() != m || u_frequency.cols() != qd) {
    throw DimensionMismatch("gp-interp anchors: expected M x Q weights and M x Q*d others");
  }
  if (anchor_lengthscale.size() != input_dim_) {
    throw DimensionMismatch("gp-interp: one anchor lengthscale per input dimension");
  }
  if (!u_weight.allFinite() || !u_lengthscale.allFinite() || !u_frequency.allFinite()) {
    throw NonFinite("gp-interp anchor values must be finite");
  }
  const Matrix ls = anchor_lengthscale.transpose();
  u_weight_ = Param{"kernel.gp_interp.u_weight", u_weight, Constraint::kNone};
  u_lengthscale_ = Param{"kernel.gp_interp.u_lengthscale", u_lengthscale, Constraint::kNone};
  u_frequency_ = Param{"kernel.gp_interp.u_frequency", u_frequency, Constraint::kNone};
  ls_weight_ = Param::from_value("kernel.gp_interp.anchor_ls_weight", ls, Constraint::kPositive);
  ls_lengthscale_ =
      Param::from_value("kernel.gp_interp.anchor_ls_lengthscale", ls, Constraint::kPositive);
  ls_frequency_ =
      Param::from_value("kernel.gp_interp.anchor_ls_frequency", ls, Constraint::kPositive);
}

std::unique_ptr<ParamFunction> GpInterpFunction::clone() const {
  return std::make_unique<GpInterpFunction>(*this);
}

std::vector<LatentValues> GpInterpFunction::evaluate(ad::Tape& tape,
                                                     const std::vector<ad::Var>& inputs,
                                                     const ad::Var& inducing) const {
  if (!inducing.valid()) throw InvalidArgument("gp-interp evaluation needs inducing locations");
  if (inducing.rows() != anchors() || inducing.cols() != input_dim_) {
    throw DimensionMismatch("gp-interp: inducing locations do not match the anchors");
  }
  ad::Var unit = tape.scalar_constant(1.0);

  // Interpolated warped values for one family, at every input batch.
  auto interpolate = [&](const Param& values, const Param& ls) {
    ad::Var lengthscale = tape.param(ls);
    ad::Var kzz = rbf_cross(inducing, inducing, unit, lengthscale);
    ad::Var chol = ad::cholesky(kzz, anchor_jitter_);
    ad::Var alpha = ad::solve_lower_transpose(chol, ad::solve_lower(chol, tape.param(values)));
    std::vector<ad::Var> out;
    for (const ad::Var& x : inputs) {
      out.push_back(ad::matmul(rbf_cross(x, inducing, unit, lengthscale), alpha));
    }
    return out;
  };

  auto t_weight = interpolate(u_weight_, ls_weight_);
  auto t_lengthscale = interpolate(u_lengthscale_, ls_lengthscale_);
  auto t_frequency = interpolate(u_frequency_, ls_frequency_);
  ad::Var nyq = tape.constant(nyquist_row());

  std::vector<LatentValues> out;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    out.push_back({ad::exp(t_weight[i]), ad::exp(t_lengthscale[i]),
                   nyq * ad::sigmoid(t_frequency[i])});
  }
  return out;
}

std::vector<const Param*> GpInterpFunction::params() const {
  return {&u_weight_,  &u_lengthscale_,  &u_frequency_,
          &ls_weight_, &ls_lengthscale_, &ls_frequency_};
}

}  // namespace nsgp
