#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nsgp/autodiff.hpp"
#include "nsgp/data.hpp"
#include "nsgp/svgp.hpp"

namespace nsgp {

/// Kernels accepted by the trainer.
inline const std::vector<std::string> kTrainableKernels = {"rbf", "sm", "gp-gsm", "neural-gsm"};

struct TrainConfig {
  std::string kernel = "neural-gsm";
  Index q = 2;
  Index m = 100;
  double learning_rate = 0.001;
  Index batch_size = 128;
  Index max_iters = 17500;
  Index restarts = 8;
  std::uint64_t seed = 0;
  double l2_coeff = 1e-4;
  std::vector<Index> hidden = {32, 32};
  double noise_variance = 0.1;
  double jitter = kDefaultJitter;
  /// Worker threads for restart candidates; 0 means one per hardware thread.
  Index threads = 1;
};

/// Throws InvalidArgument describing the first invalid field.
void validate(const TrainConfig& cfg);

struct TraceRecord {
  Index iteration = 0;
  /// Minibatch ELBO estimate at this iteration, before the update.
  double elbo = 0.0;
  double wall_ms = 0.0;
};

struct AdamState {
  std::map<std::string, Matrix> m;
  std::map<std::string, Matrix> v;
  Index step = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

/// One bias-corrected Adam update moving each raw parameter against its
/// gradient. Throws NonFinite, naming the parameter, before touching anything
/// if a gradient is not finite.
void adam_step(const std::vector<Param*>& params, const ad::Gradients& grads, AdamState& state,
               double learning_rate);

/// |Σ_i y_i exp(−2πi f x_i)|² / n at each frequency f.
Vector periodogram(const Vector& x, const Vector& y, const Vector& frequencies);

/// Draws `count` frequencies in (0, nyquist] with probability proportional to
/// the periodogram of the centred targets on a grid of `grid` frequencies.
Vector sample_spectral_frequencies(const Vector& x, const Vector& y, double nyquist, Index count,
                                   std::mt19937_64& rng, Index grid = 1000);

/// Random initialization for `cfg.kernel` given the training rows. For
/// one-dimensional inputs the initial frequencies are drawn from the
/// periodogram of the targets; otherwise uniformly below the Nyquist
/// frequency.
SvgpModel initialize_model(const TrainConfig& cfg, const Matrix& x, const Vector& y,
                           const Vector& nyquist, std::mt19937_64& rng);

/// −ELBO plus the L2 penalty on regularized kernel parameters.
ad::Var training_loss(ad::Tape& tape, const SvgpModel& model, const Matrix& x, const Vector& y,
                      Index n_total, double l2_coeff);

/// Optimizes one model in place with shuffled minibatches.
class Optimizer {
 public:
  Optimizer(SvgpModel& model, const Matrix& x, const Vector& y, const TrainConfig& cfg,
            std::mt19937_64 batch_rng);

  /// Runs `iters` updates, appending to `trace`. Iteration numbers continue
  /// across calls. On a numerical failure the parameters are rolled back to
  /// the last state whose ELBO evaluated cleanly and the error is returned.
  std::optional<std::string> run(Index iters, std::vector<TraceRecord>& trace);
  Index iterations() const { return iteration_; }

 private:
  void next_batch(Matrix& xb, Vector& yb);

  SvgpModel& model_;
  const Matrix& x_;
  const Vector& y_;
  const TrainConfig& cfg_;
  std::mt19937_64 rng_;
  AdamState adam_;
  std::vector<Index> order_;
  std::size_t cursor_ = 0;
  Index iteration_ = 0;
  std::vector<Matrix> last_good_;
};

struct RestartOutcome {
  bool ok = false;
  /// Full-data ELBO after warmup.
  double elbo = 0.0;
  std::string error;
};

struct TrainResult {
  SvgpModel model;
  std::vector<TraceRecord> trace;
  std::vector<RestartOutcome> restarts;
  Index selected_restart = 0;
  /// Full training-set ELBO at initialization and at the end, for the
  /// selected candidate.
  double initial_elbo = 0.0;
  double final_elbo = 0.0;
  /// Set if a numerical failure stopped the main loop; the model holds the
  /// last good parameters.
  std::optional<std::string> stopped_early;

  double mean_wall_ms() const;
};

/// Hook used to replace the random initializer (restart index, rng).
using Initializer = std::function<SvgpModel(Index, std::mt19937_64&)>;

/// Each restart gets its own random stream, trains for a warmup of 5% of
/// max_iters, and the candidate with the highest full-data ELBO continues
/// for the remaining iterations.
TrainResult train(const Matrix& x, const Vector& y, const Vector& nyquist, const TrainConfig& cfg);
TrainResult train(const Matrix& x, const Vector& y, const TrainConfig& cfg,
                  const Initializer& init);
/// Uses the training split of a prepared dataset.
TrainResult train(const Dataset& ds, const TrainConfig& cfg);

Index warmup_iterations(const TrainConfig& cfg);

/// Metrics on the given rows of a prepared dataset, noise-inclusive.
Metrics evaluate(const SvgpModel& model, const Dataset& ds, const std::vector<Index>& rows);

struct GridAxis {
  std::vector<Index> q = {1, 2, 3};
  std::vector<double> learning_rate = {0.01, 0.001};
  std::vector<Index> batch_size = {64, 128};
};

struct GridCell {
  TrainConfig config;
  bool ok = false;
  std::string error;
  Metrics validation;
  double mean_wall_ms = 0.0;
};

struct GridResult {
  std::vector<GridCell> cells;
  std::size_t best = 0;
  std::optional<TrainResult> best_result;
};

/// Trains every combination on the training split and picks the highest
/// validation mean log density; ties go to smaller Q, then lower learning
/// rate, then smaller batch. Failed cells are kept with their error.
GridResult grid_search(const Dataset& ds, const TrainConfig& base, const GridAxis& grid);

}  // namespace nsgp
