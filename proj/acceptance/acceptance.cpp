// Acceptance checks. Prints one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cli.hpp"
#include "fixtures.hpp"
#include "nsgp/data.hpp"
#include "nsgp/gradcheck.hpp"
#include "nsgp/kernel_ops.hpp"
#include "nsgp/kernels.hpp"
#include "nsgp/svgp.hpp"
#include "nsgp/training.hpp"
#include "oracles.hpp"

#ifndef NSGP_SUNSPOTS_CSV
#define NSGP_SUNSPOTS_CSV ""
#endif

using namespace nsgp;
using namespace nsgp::testing;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 3) {
  std::ostringstream o;
  o.precision(precision);
  o << v;
  return o.str();
}

// ---------------------------------------------------------------------------

Verdict sm_reduction() {
  std::mt19937_64 rng(101);
  double worst_lib = 0.0, worst_oracle = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const SmDraw s = random_sm(rng, 1 + trial % 3, 1);
    SpectralMixtureKernel sm(s.weight, s.frequency, s.scale, s.nyquist);
    const Matrix ell = (1.0 / (kTwoPi * s.scale.array())).matrix();
    GsmKernel gsm(std::make_unique<ConstantFunction>(s.weight, ell, s.frequency, s.nyquist));
    const Matrix x = uniform_matrix(rng, 20, 1, -3.0, 3.0);
    const Matrix got = gsm_eval(gsm, x, x);
    worst_lib = std::max(worst_lib, (got - sm_eval(sm, x, x)).cwiseAbs().maxCoeff());
    for (Index i = 0; i < x.rows(); ++i) {
      for (Index j = 0; j < x.rows(); ++j) {
        const double want = oracle::sm(s.weight, s.frequency.col(0), s.scale.col(0),
                                       x(i, 0) - x(j, 0));
        worst_oracle = std::max(worst_oracle, std::abs(got(i, j) - want));
      }
    }
  }
  const double worst = std::max(worst_lib, worst_oracle);
  return {worst <= 1e-12, "max |K_gsm - K_sm| = " + fmt(worst) + " over 100 draws (tol 1e-12)"};
}

Verdict gaussian_reduction() {
  std::mt19937_64 rng(102);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const double a = uniform(rng, -1.0, 1.0), fa = uniform(rng, 0.5, 3.0);
    const double b = uniform(rng, -1.0, 1.0), fb = uniform(rng, 0.5, 3.0);
    auto sigma_fn = [=](double x) { return std::exp(a * std::sin(fa * x)); };
    auto ell_fn = [=](double x) { return 0.5 * std::exp(b * std::cos(fb * x)); };
    GsmKernel k(std::make_unique<ScriptedFunction>(
        1, 1, Vector::Ones(1), [=](ad::Tape& t, const ad::Var& x) {
          return LatentValues{ad::exp(a * ad::sin(fa * x)), 0.5 * ad::exp(b * ad::cos(fb * x)),
                              t.constant(Matrix::Zero(x.rows(), 1))};
        }));
    const Matrix x = uniform_matrix(rng, 15, 1, -2.0, 2.0);
    const Matrix x2 = uniform_matrix(rng, 12, 1, -2.0, 2.0);
    const Matrix got = gsm_eval(k, x, x2);
    for (Index i = 0; i < x.rows(); ++i) {
      for (Index j = 0; j < x2.rows(); ++j) {
        const double u = x(i, 0), v = x2(j, 0);
        const double want =
            oracle::ns_gaussian(sigma_fn(u), sigma_fn(v), ell_fn(u), ell_fn(v), u, v);
        worst = std::max(worst, std::abs(got(i, j) - want));
      }
    }
  }
  return {worst <= 1e-12,
          "max |K_gsm - K_gauss| = " + fmt(worst) + " over 50 random l(x), s(x) (tol 1e-12)"};
}

Verdict psd_suite() {
  std::mt19937_64 rng(103);
  const char* names[] = {"rbf", "sm", "neural-gsm", "gp-gsm"};
  double worst[4] = {0.0, 0.0, 0.0, 0.0};
  for (int trial = 0; trial < 50; ++trial) {
    const Index d = 1 + trial % 2;
    const Matrix x = uniform_matrix(rng, 30, d, -2.0, 2.0);
    const Matrix z = uniform_matrix(rng, 8, d, -2.0, 2.0);
    std::unique_ptr<Kernel> kernels[] = {random_rbf(rng, d), random_sm_kernel(rng, 3, d),
                                         random_neural_gsm(rng, 2, d), random_gp_gsm(rng, 2, d, z)};
    for (int k = 0; k < 4; ++k) {
      const double ratio = oracle::min_over_max_eigenvalue(kernels[k]->gram(x, x, z));
      worst[k] = std::min(worst[k], ratio);
    }
  }
  bool pass = true;
  std::string detail = "min eig / max eig:";
  for (int k = 0; k < 4; ++k) {
    pass = pass && worst[k] >= -1e-8;
    detail += std::string(" ") + names[k] + " " + fmt(worst[k]);
  }
  return {pass, detail + " (tol -1e-8, 50 Grams of 30x30 each)"};
}

std::unique_ptr<Kernel> kernel_for(int kind, std::mt19937_64& rng, const Matrix& z) {
  switch (kind) {
    case 0:
      return random_rbf(rng, 1);
    case 1:
      return random_sm_kernel(rng, 2, 1);
    case 2:
      return random_neural_gsm(rng, 2, 1, {6});
    default:
      return random_gp_gsm(rng, 2, 1, z);
  }
}

void randomize_q(SvgpModel& model, std::mt19937_64& rng) {
  const Index m = model.num_inducing();
  model.q_mean().raw = normal_matrix(rng, m, 1);
  Matrix l = normal_matrix(rng, m, m, 0.3).triangularView<Eigen::Lower>();
  l.diagonal() = uniform_matrix(rng, m, 1, 0.3, 1.0).col(0);
  model.q_sqrt() = Param::from_value("model.q_sqrt", l, Constraint::kLowerTriangular);
}

Verdict gradient_suite() {
  std::mt19937_64 rng(104);
  const Index n = 16, m = 4;
  std::string detail = "max relative error:";
  bool pass = true;
  for (int kind = 0; kind < 4; ++kind) {
    const Matrix x = uniform_matrix(rng, n, 1, -1.5, 1.5);
    const Vector y = normal_matrix(rng, n, 1).col(0);
    const Matrix z = Vector::LinSpaced(m, -1.0, 1.0);
    SvgpModel model(kernel_for(kind, rng, z), z, 0.3);
    randomize_q(model, rng);
    auto objective = [&](ad::Tape& t) { return model.elbo(t, x, y, n); };
    const auto report = check_gradients(objective, model.params(), 1e-5, 1e-4);
    pass = pass && report.passed;
    detail += " " + model.kernel().name() + " " + fmt(report.max_relative_error);
    if (!report.passed) detail += " (worst " + report.worst.param + ")";
  }
  return {pass, detail + " (tol 1e-4, floor 1e-8; N=16 M=4 Q=2)"};
}

Verdict bound_property() {
  std::mt19937_64 rng(105);
  const Index n = 64;
  int violations = 0;
  double tightest = -INFINITY;
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = uniform_matrix(rng, n, 1, -2.0, 2.0);
    const Vector y = (2.0 * x.array()).sin().matrix() + 0.3 * normal_matrix(rng, n, 1);
    const Matrix z = uniform_matrix(rng, 8, 1, -2.0, 2.0);
    const double noise = uniform(rng, 0.05, 1.0);
    SvgpModel model(kernel_for(trial % 4, rng, z), z, noise);
    if (trial % 2 == 1) randomize_q(model, rng);
    const double exact = oracle::exact_log_marginal(model.kernel().gram(x, x, z), y, noise);
    const double elbo = model.elbo(x, y, n);
    if (elbo > exact) ++violations;
    tightest = std::max(tightest, elbo - exact);
  }

  // z = X, q alone optimized by Adam.
  const Matrix x = Vector::LinSpaced(n, -8.0, 8.0);
  const Vector y = (x.array() * 1.3).sin().matrix() + 0.1 * normal_matrix(rng, n, 1);
  const double noise = 0.05, ls = 0.3;
  SvgpModel model(std::make_unique<RbfKernel>(1.0, Vector::Constant(1, ls)), x, noise, 0.0);
  std::vector<Param*> q = {&model.q_mean(), &model.q_sqrt()};
  const std::vector<const Param*> cq(q.begin(), q.end());
  AdamState state;
  double previous = -INFINITY;
  int iterations = 0;
  for (; iterations < 20000; ++iterations) {
    ad::Tape tape;
    const ad::Gradients g = tape.backward(-model.elbo(tape, x, y, n), cq);
    adam_step(q, g, state, iterations < 10000 ? 0.001 : 0.0003);
    if (iterations % 500 == 499) {
      const double now = model.elbo(x, y, n);
      if (iterations >= 5000 && std::abs(now - previous) < 1e-4) break;
      previous = now;
    }
  }
  const double exact =
      oracle::exact_log_marginal(oracle::rbf_gram(1.0, Vector::Constant(1, ls), x, x), y, noise);
  const double gap = exact - model.elbo(x, y, n);
  return {violations == 0 && gap >= 0.0 && gap < 0.1,
          std::to_string(violations) + "/20 bound violations (max ELBO - log Z = " +
              fmt(tightest) + "); z = X gap " + fmt(gap) + " nats after " +
              std::to_string(iterations) + " Adam steps (tol 0.1)"};
}

// ---------------------------------------------------------------------------

struct Scale {
  Index iters;
  Index restarts;
};

Dataset chirp_dataset() {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::kChirp;
  spec.n = 500;
  spec.noise_std = 0.1;
  spec.f0 = 2.0;
  spec.rate = 10.0;
  spec.seed = 6;
  return prepare(synthesize(spec), {0.8, 0.0, 0.2}, 6);
}

TrainConfig base_config(const std::string& kernel, Index q, const Scale& s, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.kernel = kernel;
  cfg.q = q;
  cfg.m = 100;
  cfg.batch_size = 128;
  cfg.learning_rate = 0.001;
  cfg.max_iters = s.iters;
  cfg.restarts = s.restarts;
  cfg.seed = seed;
  cfg.threads = 0;
  return cfg;
}

Verdict chirp_recovery(const Scale& s) {
  const Dataset ds = chirp_dataset();
  TrainResult neural = train(ds, base_config("neural-gsm", 1, s, 61));
  const double mse_neural = evaluate(neural.model, ds, ds.split.test).mse;
  double best_other = INFINITY;
  std::string others;
  for (const auto& [kernel, q] : std::vector<std::pair<std::string, Index>>{{"rbf", 1}, {"sm", 1}, {"sm", 2}}) {
    const TrainResult r = train(ds, base_config(kernel, q, s, 62));
    const double mse = evaluate(r.model, ds, ds.split.test).mse;
    best_other = std::min(best_other, mse);
    others += " " + kernel + "(Q=" + std::to_string(q) + ") " + fmt(mse);
  }

  const auto& gsm = dynamic_cast<const GsmKernel&>(neural.model.kernel());
  const Matrix xt = ds.x_of(ds.split.train);
  const Index sx = 100, ss = 400;
  const Vector xg = Vector::LinSpaced(sx, xt.minCoeff(), xt.maxCoeff());
  Vector sg(ss);
  for (Index j = 0; j < ss; ++j) sg(j) = ds.nyquist(0) * (static_cast<double>(j) + 0.5) / ss;
  const SpectrogramGrid grid = spectrogram(gsm, xg, sg, neural.model.inducing().value());
  std::vector<double> peak, where;
  for (Index c = 0; c < sx; ++c) {
    Index i = 0;
    grid.density.col(c).maxCoeff(&i);
    peak.push_back(sg(i));
    where.push_back(xg(c));
  }
  const double rho = oracle::spearman(peak, where);
  const double ratio = mse_neural / best_other;
  return {rho > 0.9 && ratio < 0.5,
          "spearman " + fmt(rho) + " (tol > 0.9); test MSE neural-gsm " + fmt(mse_neural) +
              " vs" + others + ", ratio " + fmt(ratio) + " (tol < 0.5)"};
}

Verdict sunspots(const std::string& path, const Scale& s) {
  if (path.empty() || !std::filesystem::exists(path)) {
    return {false, "sunspot CSV not found at '" + path + "' (set --sunspots)"};
  }
  const Dataset ds = prepare(load_csv(path, "", true), {0.8, 0.0, 0.2}, 1);
  double mae[3];
  const char* kernels[] = {"neural-gsm", "sm", "rbf"};
  for (int k = 0; k < 3; ++k) {
    const TrainResult r = train(ds, base_config(kernels[k], 2, s, 70));
    mae[k] = evaluate(r.model, ds, ds.split.test).mae;
  }
  const bool ordered = mae[0] < mae[1] && mae[1] < mae[2];
  return {mae[0] <= 0.40 && mae[2] >= 0.6 && ordered,
          "test MAE neural-gsm " + fmt(mae[0]) + " (tol <= 0.40), sm " + fmt(mae[1]) + ", rbf " +
              fmt(mae[2]) + " (tol >= 0.6); ordering neural-gsm < sm < rbf " +
              (ordered ? "holds" : "violated") + "; n_test " +
              std::to_string(ds.split.test.size())};
}

Verdict runtime_ordering(Index iters) {
  SyntheticSpec spec;
  spec.n = 1000;
  spec.seed = 8;
  const Dataset ds = prepare(synthesize(spec), {0.8, 0.0, 0.2}, 8);
  double ms[2];
  const char* kernels[] = {"neural-gsm", "gp-gsm"};
  for (int k = 0; k < 2; ++k) {
    TrainConfig cfg = base_config(kernels[k], 2, {iters, 1}, 80);
    cfg.threads = 1;
    ms[k] = train(ds, cfg).mean_wall_ms();
  }
  const double ratio = ms[0] / ms[1];
  return {ratio < 1.0, "wall ms/iteration neural-gsm " + fmt(ms[0]) + ", gp-gsm " + fmt(ms[1]) +
                           ", ratio " + fmt(ratio) + " (tol < 1.0; Q=2 M=100 batch 128)"};
}

Verdict determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "nsgp_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  SyntheticSpec spec;
  spec.n = 300;
  spec.seed = 9;
  const Dataset raw = synthesize(spec);
  const std::string data = (dir / "chirp.csv").string();
  write_file_atomic(data, prepared_csv(raw));
  std::string snapshots[2];
  for (int run = 0; run < 2; ++run) {
    const std::string out = (dir / ("run" + std::to_string(run))).string();
    std::ostringstream sink;
    const int code = nsgp::cli::run({"train", "--data", data, "--kernel", "neural-gsm", "--q", "2",
                                     "--m", "30", "--iters", "400", "--restarts", "3", "--seed",
                                     "9", "--out", out},
                                    sink, sink);
    if (code != 0) return {false, "train exited with " + std::to_string(code) + ": " + sink.str()};
    snapshots[run] = read_file(out + "/model.json");
  }
  fs::remove_all(dir);
  const bool same = snapshots[0] == snapshots[1];
  return {same, std::string("two train runs with identical seed, config and data give ") +
                    (same ? "byte-identical" : "DIFFERENT") + " model.json (" +
                    std::to_string(snapshots[0].size()) + " bytes)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string only;
  std::string sunspots_path = NSGP_SUNSPOTS_CSV;
  Index chirp_iters = 15000;
  Index chirp_restarts = 2;
  Index sunspot_iters = 5000;
  Index sunspot_restarts = 4;
  Index timing_iters = 300;
  app.add_option("--only", only, "Comma-separated criterion numbers");
  app.add_option("--sunspots", sunspots_path, "Sunspot CSV (year,sunspots)");
  app.add_option("--chirp-iters", chirp_iters)->capture_default_str();
  app.add_option("--chirp-restarts", chirp_restarts)->capture_default_str();
  app.add_option("--sunspot-iters", sunspot_iters)->capture_default_str();
  app.add_option("--sunspot-restarts", sunspot_restarts)->capture_default_str();
  app.add_option("--timing-iters", timing_iters)->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  if (only.empty()) {
    for (int i = 1; i <= 9; ++i) selected.insert(i);
  } else {
    std::stringstream in(only);
    std::string item;
    while (std::getline(in, item, ',')) selected.insert(std::stoi(item));
  }

  const Scale chirp_scale{chirp_iters, chirp_restarts};
  const Scale sunspot_scale{sunspot_iters, sunspot_restarts};
  struct Criterion {
    int id;
    const char* name;
    double limit_s;
    std::function<Verdict()> check;
  };
  const std::vector<Criterion> criteria = {
      {1, "GSM with constant functions equals SM", 5, sm_reduction},
      {2, "GSM with zero frequency equals the non-stationary Gaussian kernel", 5,
       gaussian_reduction},
      {3, "Gram matrices are PSD", 30, psd_suite},
      {4, "ELBO gradients match finite differences", 60, gradient_suite},
      {5, "ELBO bounds the exact marginal and is tight at z = X", 120, bound_property},
      {6, "chirp recovery", 900, [&] { return chirp_recovery(chirp_scale); }},
      {7, "sunspots", 1800, [&] { return sunspots(sunspots_path, sunspot_scale); }},
      {8, "runtime ordering", 600, [&] { return runtime_ordering(timing_iters); }},
      {9, "determinism", 300, determinism},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_s;
    const bool pass = v.pass && in_time;
    if (!pass) ++failures;
    std::printf("criterion %d %s  %s: %s; %.1f s (limit %.0f s%s)\n", c.id, pass ? "PASS" : "FAIL",
                c.name, v.detail.c_str(), secs, c.limit_s, in_time ? "" : ", exceeded");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
