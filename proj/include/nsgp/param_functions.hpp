#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "nsgp/autodiff.hpp"

namespace nsgp {

/// Latent kernel parameters at a batch of n inputs. Column q of `weight` is
/// w_q(x); column q*d + k of `lengthscale` and `frequency` is dimension k of
/// ℓ_q(x) and μ_q(x).
struct LatentValues {
  ad::Var weight;       // n × Q
  ad::Var lengthscale;  // n × Q·d
  ad::Var frequency;    // n × Q·d
};

struct LatentMatrices {
  Matrix weight;
  Matrix lengthscale;
  Matrix frequency;
};

enum class ParamFunctionKind { kConstant, kNeural, kGpInterp };

std::string to_string(ParamFunctionKind kind);

/// The input-dependent functions w_i(x), ℓ_i(x), μ_i(x) of a GSM kernel.
class ParamFunction {
 public:
  ParamFunction(Index components, Index input_dim, Vector nyquist);
  virtual ~ParamFunction() = default;

  virtual ParamFunctionKind kind() const = 0;
  virtual std::unique_ptr<ParamFunction> clone() const = 0;

  /// Evaluates the functions at each input batch. `inducing` holds the
  /// shared inducing locations (used by the GP-interpolated variant only).
  virtual std::vector<LatentValues> evaluate(ad::Tape& tape,
                                             const std::vector<ad::Var>& inputs,
                                             const ad::Var& inducing) const = 0;

  virtual std::vector<const Param*> params() const = 0;
  std::vector<Param*> params();

  /// Parameters subject to L2 weight decay during training.
  virtual std::vector<const Param*> regularized_params() const { return {}; }

  /// Plain evaluation on a throwaway tape.
  LatentMatrices evaluate(const Matrix& x, const Matrix& inducing = Matrix()) const;

  Index components() const { return components_; }
  Index input_dim() const { return input_dim_; }
  const Vector& nyquist() const { return nyquist_; }

 protected:
  /// 1 × Q·d row with F_N[k] at column q*d + k.
  Matrix nyquist_row() const;

  Index components_;
  Index input_dim_;
  Vector nyquist_;
};

/// w_i(x) ≡ w_i, ℓ_i(x) ≡ ℓ_i, μ_i(x) ≡ μ_i. Stored warped (log, log,
/// logit of μ/F_N) so the values stay admissible if optimized.
class ConstantFunction final : public ParamFunction {
 public:
  /// `weight` has Q entries; `lengthscale` and `frequency` are Q × d.
  /// Throws ConstraintViolation unless w > 0, ℓ > 0 and 0 < μ < F_N.
  ConstantFunction(const Vector& weight, const Matrix& lengthscale,
                   const Matrix& frequency, Vector nyquist);

  ParamFunctionKind kind() const override { return ParamFunctionKind::kConstant; }
  std::unique_ptr<ParamFunction> clone() const override;
  std::vector<LatentValues> evaluate(ad::Tape& tape, const std::vector<ad::Var>& inputs,
                                     const ad::Var& inducing) const override;
  using ParamFunction::evaluate;
  std::vector<const Param*> params() const override;
  using ParamFunction::params;

 private:
  Param log_weight_;
  Param log_lengthscale_;
  Param logit_frequency_;
};

/// SELU, with the self-normalizing constants.
inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;
double selu(double x);

/// Fully connected network with a shared SELU trunk and three heads:
/// softplus for w and ℓ, F_N·sigmoid for μ.
class NeuralFunction final : public ParamFunction {
 public:
  /// Random initialization: weights ~ N(0, 1/fan_in), biases zero, except
  /// the μ-head biases, which place the initial frequencies at stratified
  /// uniform quantiles of (0, F_N).
  NeuralFunction(Index components, Index input_dim, Vector nyquist,
                 std::vector<Index> hidden, std::mt19937_64& rng);

  /// All weights and biases zero.
  NeuralFunction(Index components, Index input_dim, Vector nyquist,
                 std::vector<Index> hidden);

  ParamFunctionKind kind() const override { return ParamFunctionKind::kNeural; }
  std::unique_ptr<ParamFunction> clone() const override;
  std::vector<LatentValues> evaluate(ad::Tape& tape, const std::vector<ad::Var>& inputs,
                                     const ad::Var& inducing) const override;
  using ParamFunction::evaluate;
  std::vector<const Param*> params() const override;
  using ParamFunction::params;
  std::vector<const Param*> regularized_params() const override;

  const std::vector<Index>& hidden() const { return hidden_; }

  /// Layer weights (trunk layers first, then heads w, ℓ, μ).
  Param& weight(std::size_t layer) { return weights_.at(layer); }
  Param& bias(std::size_t layer) { return biases_.at(layer); }
  std::size_t trunk_depth() const { return hidden_.size(); }

 private:
  std::vector<Index> hidden_;
  std::vector<Param> weights_;
  std::vector<Param> biases_;
};

/// Point estimates u_w, u_ℓ, u_μ at the inducing locations, interpolated in
/// warped space with t(x) = K_xz K_zz⁻¹ u and un-warped as w = exp(t_w),
/// ℓ = exp(t_ℓ), μ = F_N·sigmoid(t_μ). Each family has its own RBF anchor
/// kernel with unit variance and a trainable per-dimension lengthscale.
class GpInterpFunction final : public ParamFunction {
 public:
  /// `u_weight` is M × Q; `u_lengthscale` and `u_frequency` are M × Q·d in
  /// warped space. `anchor_lengthscale` is the initial lengthscale (1 × d)
  /// shared by the three anchor kernels.
  GpInterpFunction(Index components, Index input_dim, Vector nyquist,
                   const Matrix& u_weight, const Matrix& u_lengthscale,
                   const Matrix& u_frequency, const Vector& anchor_lengthscale,
                   double anchor_jitter = kDefaultJitter);

  ParamFunctionKind kind() const override { return ParamFunctionKind::kGpInterp; }
  std::unique_ptr<ParamFunction> clone() const override;
  std::vector<LatentValues> evaluate(ad::Tape& tape, const std::vector<ad::Var>& inputs,
                                     const ad::Var& inducing) const override;
  using ParamFunction::evaluate;
  std::vector<const Param*> params() const override;
  using ParamFunction::params;

  Index anchors() const { return u_weight_.raw.rows(); }
  double anchor_jitter() const { return anchor_jitter_; }

 private:
  Param u_weight_;
  Param u_lengthscale_;
  Param u_frequency_;
  Param ls_weight_;
  Param ls_lengthscale_;
  Param ls_frequency_;
  double anchor_jitter_;
};

}  // namespace nsgp
