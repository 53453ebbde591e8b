#include "nsgp/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

#include "nsgp/errors.hpp"
#include "nsgp/kernel_ops.hpp"
#include "nsgp/kernels.hpp"
#include "nsgp/param_functions.hpp"

namespace nsgp {

void validate(const TrainConfig& cfg) {
  if (std::find(kTrainableKernels.begin(), kTrainableKernels.end(), cfg.kernel) ==
      kTrainableKernels.end()) {
    std::string valid;
    for (const auto& k : kTrainableKernels) valid += (valid.empty() ? "" : ", ") + k;
    throw InvalidArgument("unknown kernel '" + cfg.kernel + "' (valid kernels: " + valid + ")");
  }
  if (cfg.q < 1) throw InvalidArgument("q must be >= 1");
  if (cfg.m < 1) throw InvalidArgument("m must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
  if (cfg.batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (cfg.max_iters < 1) throw InvalidArgument("max_iters must be >= 1");
  if (cfg.restarts < 1) throw InvalidArgument("restarts must be >= 1");
  if (cfg.l2_coeff < 0.0) throw InvalidArgument("l2_coeff must be >= 0");
  if (!(cfg.noise_variance > 0.0)) throw InvalidArgument("noise_variance must be positive");
  if (cfg.jitter < 0.0) throw InvalidArgument("jitter must be >= 0");
  if (cfg.threads < 0) throw InvalidArgument("threads must be >= 0");
  if (cfg.kernel == "neural-gsm") {
    if (cfg.hidden.empty()) throw InvalidArgument("hidden needs at least one layer");
    for (Index h : cfg.hidden) {
      if (h < 1) throw InvalidArgument("hidden layer widths must be >= 1");
    }
  }
}

void adam_step(const std::vector<Param*>& params, const ad::Gradients& grads, AdamState& state,
               double learning_rate) {
  for (const Param* p : params) {
    auto it = grads.find(p->name);
    if (it == grads.end()) continue;
    if (it->second.rows() != p->raw.rows() || it->second.cols() != p->raw.cols()) {
      throw DimensionMismatch("adam: gradient shape mismatch for '" + p->name + "'");
    }
    if (!it->second.allFinite()) {
      throw NonFinite("adam: non-finite gradient for '" + p->name + "'");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(kAdamBeta1, t);
  const double c2 = 1.0 - std::pow(kAdamBeta2, t);
  for (Param* p : params) {
    auto it = grads.find(p->name);
    if (it == grads.end()) continue;
    const Matrix& g = it->second;
    Matrix& m = state.m[p->name];
    Matrix& v = state.v[p->name];
    if (m.size() == 0) m = Matrix::Zero(g.rows(), g.cols());
    if (v.size() == 0) v = Matrix::Zero(g.rows(), g.cols());
    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
    v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g.cwiseProduct(g);
    p->raw.array() -=
        learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + kAdamEpsilon);
  }
}

// ---------------------------------------------------------------------------

namespace {

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::exp(std::uniform_real_distribution<double>(std::log(lo), std::log(hi))(rng));
}

Matrix initial_inducing(const Matrix& x, Index m, std::mt19937_64& rng) {
  if (x.cols() == 1) {
    return Vector::LinSpaced(m, x.col(0).minCoeff(), x.col(0).maxCoeff());
  }
  std::vector<Index> rows(static_cast<std::size_t>(x.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  std::shuffle(rows.begin(), rows.end(), rng);
  const Index count = std::min(m, x.rows());
  Matrix z(count, x.cols());
  for (Index i = 0; i < count; ++i) z.row(i) = x.row(rows[static_cast<std::size_t>(i)]);
  return z;
}

}  // namespace

Vector periodogram(const Vector& x, const Vector& y, const Vector& frequencies) {
  if (x.size() != y.size()) throw DimensionMismatch("periodogram: x and y lengths differ");
  if (x.size() == 0) throw InvalidArgument("periodogram: no samples");
  Vector power(frequencies.size());
  for (Index j = 0; j < frequencies.size(); ++j) {
    const Eigen::ArrayXd phase = kTwoPi * frequencies(j) * x.array();
    const double re = (y.array() * phase.cos()).sum();
    const double im = (y.array() * phase.sin()).sum();
    power(j) = (re * re + im * im) / static_cast<double>(x.size());
  }
  return power;
}

Vector sample_spectral_frequencies(const Vector& x, const Vector& y, double nyquist, Index count,
                                   std::mt19937_64& rng, Index grid) {
  if (!(nyquist > 0.0)) throw InvalidArgument("sample_spectral_frequencies: nyquist must be positive");
  if (grid < 1) throw InvalidArgument("sample_spectral_frequencies: grid must be >= 1");
  const double step = nyquist / static_cast<double>(grid);
  const Vector freqs = Vector::LinSpaced(grid, step, nyquist);
  const Vector centred = (y.array() - y.mean()).matrix();
  const Vector power = periodogram(x, centred, freqs);
  Vector out(count);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (!(power.sum() > 0.0) || !power.allFinite()) {
    for (Index i = 0; i < count; ++i) out(i) = nyquist * unit(rng);
    return out;
  }
  std::discrete_distribution<Index> pick(power.data(), power.data() + power.size());
  for (Index i = 0; i < count; ++i) {
    out(i) = std::clamp(freqs(pick(rng)) - step * unit(rng), 1e-6 * nyquist, nyquist);
  }
  return out;
}

SvgpModel initialize_model(const TrainConfig& cfg, const Matrix& x, const Vector& y,
                           const Vector& nyquist, std::mt19937_64& rng) {
  validate(cfg);
  const Index d = x.cols();
  const Index q = cfg.q;
  if (nyquist.size() != d) throw DimensionMismatch("initialize_model: nyquist length mismatch");
  const double var = std::max((y.array() - y.mean()).square().mean(), 1e-6);
  Vector range(d);
  for (Index k = 0; k < d; ++k) {
    range(k) = x.col(k).maxCoeff() - x.col(k).minCoeff();
    if (!(range(k) > 0.0)) range(k) = 1.0;
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Matrix z = initial_inducing(x, cfg.m, rng);
  // Q × d
  auto initial_frequencies = [&]() -> Matrix {
    Matrix mu(q, d);
    if (d == 1) {
      mu.col(0) = sample_spectral_frequencies(x.col(0), y, nyquist(0), q, rng);
      return mu;
    }
    for (Index i = 0; i < q; ++i)
      for (Index k = 0; k < d; ++k) mu(i, k) = nyquist(k) * unit(rng);
    return mu;
  };

  std::unique_ptr<Kernel> kernel;
  if (cfg.kernel == "rbf") {
    Vector ls(d);
    for (Index k = 0; k < d; ++k) ls(k) = range(k) * log_uniform(rng, 0.02, 0.5);
    kernel = std::make_unique<RbfKernel>(var, ls);
  } else if (cfg.kernel == "sm") {
    Vector w = Vector::Constant(q, std::sqrt(var / static_cast<double>(q)));
    Matrix mu = initial_frequencies();
    Matrix sigma(q, d);
    for (Index i = 0; i < q; ++i) {
      for (Index k = 0; k < d; ++k) {
        sigma(i, k) = log_uniform(rng, 1.0 / (kTwoPi * range(k)), 1.0 / (kTwoPi * 0.02 * range(k)));
      }
    }
    kernel = std::make_unique<SpectralMixtureKernel>(w, mu, sigma, nyquist);
  } else if (cfg.kernel == "neural-gsm") {
    auto net = std::make_unique<NeuralFunction>(q, d, nyquist, cfg.hidden, rng);
    if (d == 1) {
      const Matrix mu = initial_frequencies();
      Param& mu_bias = net->bias(net->trunk_depth() + 2);
      for (Index i = 0; i < q; ++i) {
        mu_bias.raw(0, i) = logit(std::clamp(mu(i, 0) / nyquist(0), 1e-6, 1.0 - 1e-6));
      }
    }
    kernel = std::make_unique<GsmKernel>(std::move(net));
  } else {
    const Index m = z.rows();
    std::normal_distribution<double> normal(0.0, 0.1);
    Matrix uw(m, q), ul(m, q * d), um(m, q * d);
    const Matrix mu = initial_frequencies();
    for (Index i = 0; i < q; ++i) {
      const double w0 = 0.5 * std::log(var / static_cast<double>(q));
      for (Index r = 0; r < m; ++r) uw(r, i) = w0 + normal(rng);
      for (Index k = 0; k < d; ++k) {
        const Index c = i * d + k;
        const double l0 = std::log(range(k) * log_uniform(rng, 0.02, 0.5));
        const double mu0 = logit(std::clamp(mu(i, k) / nyquist(k), 1e-6, 1.0 - 1e-6));
        for (Index r = 0; r < m; ++r) {
          ul(r, c) = l0 + normal(rng);
          um(r, c) = mu0 + normal(rng);
        }
      }
    }
    kernel = std::make_unique<GsmKernel>(
        std::make_unique<GpInterpFunction>(q, d, nyquist, uw, ul, um, 0.2 * range, cfg.jitter));
  }
  return SvgpModel(std::move(kernel), z, cfg.noise_variance * var, cfg.jitter);
}

ad::Var training_loss(ad::Tape& tape, const SvgpModel& model, const Matrix& x, const Vector& y,
                      Index n_total, double l2_coeff) {
  ad::Var loss = -model.elbo(tape, x, y, n_total);
  if (l2_coeff > 0.0) {
    for (const Param* p : model.kernel().regularized_params()) {
      loss = loss + l2_coeff * ad::sum(ad::square(tape.param(*p)));
    }
  }
  return loss;
}

namespace {

double l2_penalty(const SvgpModel& model, double l2_coeff) {
  double total = 0.0;
  for (const Param* p : model.kernel().regularized_params()) total += p->raw.squaredNorm();
  return l2_coeff * total;
}

}  // namespace

// ---------------------------------------------------------------------------

Optimizer::Optimizer(SvgpModel& model, const Matrix& x, const Vector& y, const TrainConfig& cfg,
                     std::mt19937_64 batch_rng)
    : model_(model), x_(x), y_(y), cfg_(cfg), rng_(batch_rng) {
  if (x.rows() != y.size()) throw DimensionMismatch("optimizer: inputs and targets differ");
  if (cfg.batch_size > x.rows()) {
    throw InvalidArgument("batch_size " + std::to_string(cfg.batch_size) + " exceeds the " +
                          std::to_string(x.rows()) + " training rows");
  }
  order_.resize(static_cast<std::size_t>(x.rows()));
  std::iota(order_.begin(), order_.end(), 0);
  std::shuffle(order_.begin(), order_.end(), rng_);
}

void Optimizer::next_batch(Matrix& xb, Vector& yb) {
  const auto b = static_cast<std::size_t>(cfg_.batch_size);
  if (cursor_ + b > order_.size()) {
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
  }
  xb.resize(cfg_.batch_size, x_.cols());
  yb.resize(cfg_.batch_size);
  for (std::size_t i = 0; i < b; ++i) {
    const Index row = order_[cursor_ + i];
    xb.row(static_cast<Index>(i)) = x_.row(row);
    yb(static_cast<Index>(i)) = y_(row);
  }
  cursor_ += b;
}

std::optional<std::string> Optimizer::run(Index iters, std::vector<TraceRecord>& trace) {
  using Clock = std::chrono::steady_clock;
  std::vector<Param*> params = model_.params();
  const std::vector<const Param*> const_params(params.begin(), params.end());
  Matrix xb;
  Vector yb;
  for (Index it = 0; it < iters; ++it) {
    const auto start = Clock::now();
    next_batch(xb, yb);
    try {
      ad::Tape tape;
      ad::Var loss = training_loss(tape, model_, xb, yb, x_.rows(), cfg_.l2_coeff);
      const double elbo = -loss.scalar() - l2_penalty(model_, cfg_.l2_coeff);
      const ad::Gradients grads = tape.backward(loss, const_params);
      last_good_.clear();
      for (const Param* p : params) last_good_.push_back(p->raw);
      adam_step(params, grads, adam_, cfg_.learning_rate);
      model_.project();
      const double ms =
          std::chrono::duration<double, std::milli>(Clock::now() - start).count();
      trace.push_back({++iteration_, elbo, ms});
    } catch (const Error& e) {
      if (!last_good_.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i]->raw = last_good_[i];
      }
      return "iteration " + std::to_string(iteration_ + 1) + ": " + e.what();
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

double TrainResult::mean_wall_ms() const {
  if (trace.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : trace) total += r.wall_ms;
  return total / static_cast<double>(trace.size());
}

Index warmup_iterations(const TrainConfig& cfg) {
  const auto w = static_cast<Index>(std::ceil(0.05 * static_cast<double>(cfg.max_iters)));
  return std::clamp<Index>(w, 1, cfg.max_iters);
}

namespace {

struct Candidate {
  std::unique_ptr<SvgpModel> model;
  std::unique_ptr<Optimizer> optimizer;
  std::vector<TraceRecord> trace;
  RestartOutcome outcome;
  double initial_elbo = 0.0;
};

Index worker_count(const TrainConfig& cfg) {
  Index n = cfg.threads;
  if (n == 0) n = std::max<Index>(1, static_cast<Index>(std::thread::hardware_concurrency()));
  return std::min(n, cfg.restarts);
}

}  // namespace

TrainResult train(const Matrix& x, const Vector& y, const TrainConfig& cfg,
                  const Initializer& init) {
  validate(cfg);
  if (x.rows() != y.size()) throw DimensionMismatch("train: inputs and targets differ");
  if (cfg.batch_size > x.rows()) {
    throw InvalidArgument("batch_size " + std::to_string(cfg.batch_size) + " exceeds the " +
                          std::to_string(x.rows()) + " training rows");
  }
  const Index warmup = warmup_iterations(cfg);
  const Index n = x.rows();
  std::vector<Candidate> candidates(static_cast<std::size_t>(cfg.restarts));

  auto run_candidate = [&](Index r) {
    Candidate& c = candidates[static_cast<std::size_t>(r)];
    try {
      std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed),
                        static_cast<std::uint32_t>(cfg.seed >> 32),
                        static_cast<std::uint32_t>(r)};
      std::mt19937_64 rng(seq);
      c.model = std::make_unique<SvgpModel>(init(r, rng));
      c.initial_elbo = c.model->elbo(x, y, n);
      c.optimizer = std::make_unique<Optimizer>(*c.model, x, y, cfg, std::mt19937_64(rng()));
      if (auto err = c.optimizer->run(warmup, c.trace)) throw NonFinite(*err);
      c.outcome.elbo = c.model->elbo(x, y, n);
      if (!std::isfinite(c.outcome.elbo)) throw NonFinite("warmup elbo is not finite");
      c.outcome.ok = true;
    } catch (const Error& e) {
      c.outcome.ok = false;
      c.outcome.error = e.what();
    }
  };

  const Index workers = worker_count(cfg);
  if (workers <= 1) {
    for (Index r = 0; r < cfg.restarts; ++r) run_candidate(r);
  } else {
    std::atomic<Index> next{0};
    std::vector<std::thread> pool;
    for (Index w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (Index r = next++; r < cfg.restarts; r = next++) run_candidate(r);
      });
    }
    for (auto& t : pool) t.join();
  }

  std::optional<std::size_t> best;
  std::string failures;
  for (std::size_t r = 0; r < candidates.size(); ++r) {
    const auto& o = candidates[r].outcome;
    if (!o.ok) {
      failures += "\n  restart " + std::to_string(r) + ": " + o.error;
      continue;
    }
    if (!best || o.elbo > candidates[*best].outcome.elbo) best = r;
  }
  if (!best) throw AllRestartsFailed("every restart candidate failed:" + failures);

  Candidate& chosen = candidates[*best];
  std::optional<std::string> stopped = chosen.optimizer->run(cfg.max_iters - warmup, chosen.trace);
  TrainResult result{std::move(*chosen.model), std::move(chosen.trace), {}, static_cast<Index>(*best),
                     chosen.initial_elbo, 0.0, stopped};
  for (const auto& c : candidates) result.restarts.push_back(c.outcome);
  result.final_elbo = result.model.elbo(x, y, n);
  return result;
}

TrainResult train(const Matrix& x, const Vector& y, const Vector& nyquist, const TrainConfig& cfg) {
  return train(x, y, cfg, [&](Index, std::mt19937_64& rng) {
    return initialize_model(cfg, x, y, nyquist, rng);
  });
}

TrainResult train(const Dataset& ds, const TrainConfig& cfg) {
  if (!ds.normalized) throw InvalidArgument("train: dataset must be prepared first");
  const Matrix x = ds.x_of(ds.split.train);
  const Vector y = ds.y_of(ds.split.train);
  return train(x, y, ds.nyquist, cfg);
}

Metrics evaluate(const SvgpModel& model, const Dataset& ds, const std::vector<Index>& rows) {
  if (rows.empty()) throw InvalidArgument("evaluate: no rows to evaluate");
  if (ds.input_dim() != model.input_dim()) {
    throw SnapshotMismatch("model expects " + std::to_string(model.input_dim()) +
                           " inputs, dataset has " + std::to_string(ds.input_dim()));
  }
  return metrics(model.predict(ds.x_of(rows), true), ds.y_of(rows));
}

// ---------------------------------------------------------------------------

GridResult grid_search(const Dataset& ds, const TrainConfig& base, const GridAxis& grid) {
  if (ds.split.validation.empty()) {
    throw InvalidArgument("grid search needs a non-empty validation split");
  }
  GridResult out;
  std::optional<std::size_t> best;
  auto better = [](const GridCell& a, const GridCell& b) {
    if (a.validation.mean_log_density != b.validation.mean_log_density) {
      return a.validation.mean_log_density > b.validation.mean_log_density;
    }
    if (a.config.q != b.config.q) return a.config.q < b.config.q;
    if (a.config.learning_rate != b.config.learning_rate) {
      return a.config.learning_rate < b.config.learning_rate;
    }
    return a.config.batch_size < b.config.batch_size;
  };
  for (Index q : grid.q) {
    for (double lr : grid.learning_rate) {
      for (Index batch : grid.batch_size) {
        GridCell cell;
        cell.config = base;
        cell.config.q = q;
        cell.config.learning_rate = lr;
        cell.config.batch_size = batch;
        try {
          TrainResult r = train(ds, cell.config);
          cell.validation = evaluate(r.model, ds, ds.split.validation);
          cell.mean_wall_ms = r.mean_wall_ms();
          cell.ok = std::isfinite(cell.validation.mean_log_density);
          if (!cell.ok) cell.error = "validation log density is not finite";
          if (cell.ok && (!best || better(cell, out.cells[*best]))) {
            best = out.cells.size();
            out.best_result.emplace(std::move(r));
          }
        } catch (const Error& e) {
          cell.ok = false;
          cell.error = e.what();
        }
        out.cells.push_back(std::move(cell));
      }
    }
  }
  if (!best) throw AllRestartsFailed("every grid cell failed");
  out.best = *best;
  return out;
}

}  // namespace nsgp
