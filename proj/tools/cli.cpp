#include "cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "json.hpp"
#include "nsgp/data.hpp"
#include "nsgp/errors.hpp"
#include "nsgp/kernels.hpp"
#include "nsgp/serialize.hpp"
#include "nsgp/training.hpp"

#ifndef NSGP_VERSION
#define NSGP_VERSION "unknown"
#endif

namespace nsgp::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Bad flags, bad config values: exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const std::string& flag) {
  std::vector<T> values;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    std::istringstream cell(item);
    T v{};
    if (!(cell >> v) || !cell.eof()) throw UsageError(flag + ": cannot parse '" + item + "'");
    values.push_back(v);
  }
  if (values.empty()) throw UsageError(flag + ": expected a comma-separated list");
  return values;
}

std::vector<std::string> parse_names(const std::string& text) {
  std::vector<std::string> names;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) names.push_back(item);
  }
  return names;
}

// ---------------------------------------------------------------------------
// Options shared by several commands.

struct DataOptions {
  std::string path;
  std::string target;
  bool no_header = false;
  double train = 0.8;
  double validation = 0.0;
  double test = 0.2;
  std::optional<std::uint64_t> split_seed;
};

void add_data_options(CLI::App* cmd, DataOptions& d, bool required = true) {
  auto* opt = cmd->add_option("--data", d.path, "CSV file, raw or a prepared cache");
  if (required) opt->required();
  cmd->add_option("--target", d.target, "Target column name (default: last column)");
  cmd->add_flag("--no-header", d.no_header, "The CSV has no header row");
  cmd->add_option("--train-fraction,--train_fraction", d.train)->capture_default_str();
  cmd->add_option("--validation-fraction,--validation_fraction", d.validation)
      ->capture_default_str();
  cmd->add_option("--test-fraction,--test_fraction", d.test)->capture_default_str();
  cmd->add_option("--split-seed,--split_seed", d.split_seed,
                  "Seed for the split (default: --seed)");
}

bool is_prepared(const std::string& path) { return fs::exists(path + ".json"); }

Dataset load_raw(const DataOptions& d) { return load_csv(d.path, d.target, !d.no_header); }

/// A prepared cache is used as is; a raw CSV is split and normalized.
Dataset load_dataset(const DataOptions& d, std::uint64_t seed) {
  if (is_prepared(d.path)) return load_prepared(d.path);
  const Dataset raw = load_raw(d);
  try {
    return prepare(raw, {d.train, d.validation, d.test}, d.split_seed.value_or(seed));
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

std::string fingerprint(const std::string& data_path) {
  if (data_path.empty()) return "";
  std::string digest = sha256_file(data_path);
  if (is_prepared(data_path)) digest += "+" + sha256_file(data_path + ".json");
  return digest;
}

struct TrainOptions {
  TrainConfig cfg;
  std::string hidden = "32,32";
  std::optional<Index> threads;
};

void add_train_options(CLI::App* cmd, TrainOptions& t) {
  TrainConfig& c = t.cfg;
  cmd->add_option("--kernel", c.kernel, "rbf, sm, gp-gsm or neural-gsm")->capture_default_str();
  cmd->add_option("--q", c.q, "Mixture components")->capture_default_str();
  cmd->add_option("--m", c.m, "Inducing points")->capture_default_str();
  cmd->add_option("--lr,--learning-rate,--learning_rate", c.learning_rate)->capture_default_str();
  cmd->add_option("--batch,--batch-size,--batch_size", c.batch_size)->capture_default_str();
  cmd->add_option("--iters,--max-iters,--max_iters", c.max_iters)->capture_default_str();
  cmd->add_option("--restarts", c.restarts)->capture_default_str();
  cmd->add_option("--seed", c.seed)->capture_default_str();
  cmd->add_option("--l2,--l2-coeff,--l2_coeff", c.l2_coeff)->capture_default_str();
  cmd->add_option("--hidden", t.hidden, "Hidden layer widths, comma-separated")
      ->capture_default_str();
  cmd->add_option("--noise,--noise-variance,--noise_variance", c.noise_variance,
                  "Initial noise variance as a fraction of the target variance")
      ->capture_default_str();
  cmd->add_option("--jitter", c.jitter)->capture_default_str();
  cmd->add_option("--threads", t.threads, "Restart worker threads (default: $NSGP_THREADS)");
}

TrainConfig resolve(TrainOptions& t) {
  TrainConfig cfg = t.cfg;
  cfg.hidden = parse_list<Index>(t.hidden, "--hidden");
  if (t.threads) {
    cfg.threads = *t.threads;
  } else if (const char* env = std::getenv("NSGP_THREADS")) {
    try {
      cfg.threads = std::stol(env);
    } catch (const std::exception&) {
      throw UsageError(std::string("NSGP_THREADS must be an integer, got '") + env + "'");
    }
  } else {
    cfg.threads = 0;
  }
  try {
    validate(cfg);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Run bookkeeping.

class Run {
 public:
  Run(std::string command, std::vector<std::string> args, std::string out_dir)
      : command_(std::move(command)),
        args_(std::move(args)),
        out_dir_(std::move(out_dir)),
        started_(utc_now()) {}

  std::string path(const std::string& name) const { return (fs::path(out_dir_) / name).string(); }

  void write(const std::string& name, const std::string& contents) {
    write_file_atomic(path(name), contents);
    outputs_.push_back(name);
  }

  void set(const std::string& key, json value) { extra_[key] = std::move(value); }

  /// Writes manifest.json, or manifest.N.json if earlier runs left one.
  std::string finish(const std::string& resolved_config) {
    json j = {{"command", command_},
              {"args", args_},
              {"resolved_config", resolved_config},
              {"code_version", NSGP_VERSION},
              {"started_at", started_},
              {"finished_at", utc_now()},
              {"outputs", outputs_}};
    for (auto& [k, v] : extra_.items()) j[k] = v;
    std::string name = "manifest.json";
    for (int i = 1; fs::exists(path(name)); ++i) name = "manifest." + std::to_string(i) + ".json";
    write_file_atomic(path(name), j.dump(2) + "\n");
    return path(name);
  }

 private:
  std::string command_;
  std::vector<std::string> args_;
  std::string out_dir_;
  std::string started_;
  std::vector<std::string> outputs_;
  json extra_ = json::object();
};

std::string trace_csv(const std::vector<TraceRecord>& trace) {
  std::ostringstream out;
  out.precision(17);
  out << "iteration,elbo,wall_ms\n";
  for (const auto& r : trace) out << r.iteration << ',' << r.elbo << ',' << r.wall_ms << '\n';
  return out.str();
}

SnapshotMeta meta_for(const Dataset& ds, const TrainConfig& cfg, const TrainResult& r) {
  SnapshotMeta meta;
  meta.normalization = ds.normalization;
  meta.input_columns = ds.input_columns;
  meta.target_column = ds.target_column;
  const Matrix xt = ds.x_of(ds.split.train);
  meta.input_min = xt.colwise().minCoeff().transpose();
  meta.input_max = xt.colwise().maxCoeff().transpose();
  meta.config = cfg;
  meta.config.threads = 1;
  meta.selected_restart = r.selected_restart;
  meta.final_elbo = r.final_elbo;
  return meta;
}

/// Rows of `ds` mapped into the normalized units of the model.
struct Evaluation {
  Matrix x;
  Vector y;
};

Evaluation rows_for_model(const Dataset& ds, const std::vector<Index>& rows,
                          const LoadedModel& loaded) {
  if (ds.input_dim() != loaded.model.input_dim()) {
    throw SnapshotMismatch("model expects " + std::to_string(loaded.model.input_dim()) +
                           " input columns, dataset has " + std::to_string(ds.input_dim()));
  }
  Matrix x = ds.x_of(rows);
  Vector y = ds.y_of(rows);
  if (ds.normalized) {
    x = ds.normalization.denormalize_x(x);
    y = ds.normalization.denormalize_y(y);
  }
  return {loaded.meta.normalization.normalize_x(x), loaded.meta.normalization.normalize_y(y)};
}

const std::vector<Index>& split_rows(const Dataset& ds, const std::string& split) {
  if (split == "test") return ds.split.test;
  if (split == "validation") return ds.split.validation;
  if (split == "train") return ds.split.train;
  throw UsageError("--split must be train, validation or test");
}

// ---------------------------------------------------------------------------
// Commands. Each returns after writing its artifacts; errors propagate.

int cmd_prepare(const std::vector<std::string>& args, DataOptions& d, std::uint64_t seed,
                const std::string& out_dir, const std::string& resolved, std::ostream& out) {
  Dataset ds = load_dataset(d, seed);
  Run run("prepare", args, out_dir);
  run.write("prepared.csv", prepared_csv(ds));
  run.write("prepared.csv.json", prepared_sidecar(ds));
  run.set("seed", d.split_seed.value_or(seed));
  run.set("dataset_fingerprint", fingerprint(d.path));
  run.finish(resolved);
  out << "prepared " << ds.size() << " rows (" << ds.split.train.size() << " train, "
      << ds.split.validation.size() << " validation, " << ds.split.test.size() << " test) -> "
      << run.path("prepared.csv") << "\n";
  if (ds.duplicate_inputs) out << "warning: repeated input values; the Nyquist frequency uses distinct values only\n";
  return kExitOk;
}

int cmd_train(const std::vector<std::string>& args, DataOptions& d, TrainOptions& t,
              const std::string& out_dir, const std::string& resolved, std::ostream& out,
              std::ostream& err) {
  const TrainConfig cfg = resolve(t);
  const Dataset ds = load_dataset(d, cfg.seed);
  TrainResult result = train(ds, cfg);
  Run run("train", args, out_dir);
  run.write("model.json", model_to_json(result.model, meta_for(ds, cfg, result)));
  run.write("trace.csv", trace_csv(result.trace));
  run.write("prepared.csv", prepared_csv(ds));
  run.write("prepared.csv.json", prepared_sidecar(ds));
  run.set("seed", cfg.seed);
  run.set("dataset_fingerprint", fingerprint(d.path));
  json restarts = json::array();
  for (const auto& r : result.restarts) {
    restarts.push_back({{"ok", r.ok}, {"elbo", r.ok ? json(r.elbo) : json()}, {"error", r.error}});
  }
  run.set("restarts", restarts);
  if (result.stopped_early) run.set("stopped_early", *result.stopped_early);
  run.finish(resolved);
  if (result.stopped_early) err << "warning: training stopped early: " << *result.stopped_early << "\n";
  out << "kernel " << cfg.kernel << ": selected restart " << result.selected_restart
      << ", ELBO " << result.initial_elbo << " -> " << result.final_elbo << ", "
      << result.mean_wall_ms() << " ms/iteration\n";
  const Metrics test = evaluate(result.model, ds, ds.split.test);
  out << "test: log density " << test.mean_log_density << ", MAE " << test.mae << ", MSE "
      << test.mse << "\n";
  return kExitOk;
}

int cmd_eval(const std::vector<std::string>& args, const std::string& model_path, DataOptions& d,
             const std::string& split, const std::string& out_dir, const std::string& resolved,
             std::ostream& out) {
  const LoadedModel loaded = load_model(model_path);
  const Dataset ds = load_dataset(d, loaded.meta.config.seed);
  const auto& rows = split_rows(ds, split);
  if (rows.empty()) throw UsageError("the " + split + " split is empty");
  const Evaluation e = rows_for_model(ds, rows, loaded);
  const Metrics m = metrics(loaded.model.predict(e.x, true), e.y);
  const std::string report = metrics_to_json(
      make_report(m, loaded.meta.normalization.y_std, static_cast<Index>(rows.size())));
  out << report;
  if (!out_dir.empty()) {
    Run run("eval", args, out_dir);
    run.write("metrics.json", report);
    run.set("seed", loaded.meta.config.seed);
    run.set("dataset_fingerprint", fingerprint(d.path));
    run.set("model_fingerprint", sha256_file(model_path));
    run.finish(resolved);
  }
  return kExitOk;
}

int cmd_spectrogram(const std::vector<std::string>& args, const std::string& model_path, Index sx,
                    Index ss, std::optional<double> x_min, std::optional<double> x_max,
                    std::optional<double> s_max, const std::string& out_dir,
                    const std::string& resolved, std::ostream& out) {
  if (sx < 1 || ss < 1) throw UsageError("--sx and --ss must be positive");
  const LoadedModel loaded = load_model(model_path);
  const Kernel& k = loaded.model.kernel();
  if (k.input_dim() != 1) throw WrongKernel("spectrograms need a univariate model");
  const double lo = x_min.value_or(loaded.meta.input_min(0));
  const double hi = x_max.value_or(loaded.meta.input_max(0));
  const Vector xg = Vector::LinSpaced(sx, lo, hi);
  auto s_grid = [&](double nyq) {
    const double top = s_max.value_or(nyq);
    Vector s(ss);
    for (Index j = 0; j < ss; ++j) s(j) = top * (static_cast<double>(j) + 0.5) / static_cast<double>(ss);
    return s;
  };
  SpectrogramGrid grid;
  if (const auto* sm = dynamic_cast<const SpectralMixtureKernel*>(&k)) {
    grid = spectrogram(*sm, xg, s_grid(sm->nyquist()(0)));
  } else if (const auto* gsm = dynamic_cast<const GsmKernel*>(&k)) {
    grid = spectrogram(*gsm, xg, s_grid(gsm->functions().nyquist()(0)),
                       loaded.model.inducing().value());
  } else {
    throw WrongKernel("spectrograms need a spectral kernel; '" + k.name() +
                      "' has no spectral parameters");
  }
  Run run("spectrogram", args, out_dir);
  run.write("spectrogram.csv", spectrogram_csv(grid));
  run.set("model_fingerprint", sha256_file(model_path));
  run.finish(resolved);
  out << "spectrogram " << ss << " x " << sx << " -> " << run.path("spectrogram.csv") << "\n";
  return kExitOk;
}

struct BenchmarkOptions {
  std::string datasets;
  std::string kernels = "rbf,sm,gp-gsm,neural-gsm";
  Index seeds = 1;
  std::string grid_q = "1,2,3";
  std::string grid_lr = "0.01,0.001";
  std::string grid_batch = "64,128";
};

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? NAN : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return v.empty() ? NAN : 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

int cmd_benchmark(const std::vector<std::string>& args, DataOptions& d, TrainOptions& t,
                  BenchmarkOptions& b, const std::string& out_dir, const std::string& resolved,
                  std::ostream& out, std::ostream& err) {
  const TrainConfig base = resolve(t);
  const auto datasets = parse_names(b.datasets);
  const auto kernels = parse_names(b.kernels);
  if (datasets.empty()) throw UsageError("--datasets needs at least one CSV path");
  if (kernels.empty()) throw UsageError("--kernels needs at least one kernel");
  if (b.seeds < 1) throw UsageError("--seeds must be positive");
  for (const auto& k : kernels) {
    TrainConfig c = base;
    c.kernel = k;
    try {
      validate(c);
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
  }
  GridAxis grid;
  grid.q = parse_list<Index>(b.grid_q, "--grid-q");
  grid.learning_rate = parse_list<double>(b.grid_lr, "--grid-lr");
  grid.batch_size = parse_list<Index>(b.grid_batch, "--grid-batch");

  std::ostringstream csv;
  csv.precision(10);
  csv << "dataset,kernel,seeds_ok,log_density_mean,log_density_std,mae_mean,mae_std,mse_mean,"
         "mse_std,wall_ms_per_iter,best_q,best_lr,best_batch,errors\n";
  struct Row {
    std::string dataset, kernel;
    std::vector<double> lpd, mae, mse, ms;
    std::string best, errors;
  };
  std::vector<Row> rows;
  json fingerprints = json::object();
  for (const auto& path : datasets) {
    DataOptions dopt = d;
    dopt.path = path;
    fingerprints[path] = fingerprint(path);
    const bool prepared = is_prepared(path);
    const Dataset raw = prepared ? load_prepared(path) : load_raw(dopt);
    for (const auto& kernel : kernels) {
      Row row{fs::path(path).stem().string(), kernel, {}, {}, {}, {}, "", ""};
      for (Index s = 0; s < b.seeds; ++s) {
        const std::uint64_t seed = base.seed + static_cast<std::uint64_t>(s);
        try {
          const Dataset ds =
              prepared ? raw : prepare(raw, {d.train, d.validation, d.test}, seed);
          TrainConfig cfg = base;
          cfg.kernel = kernel;
          cfg.seed = seed;
          GridResult g = grid_search(ds, cfg, grid);
          const Metrics m = evaluate(g.best_result->model, ds, ds.split.test);
          row.lpd.push_back(m.mean_log_density);
          row.mae.push_back(m.mae);
          row.mse.push_back(m.mse);
          row.ms.push_back(g.cells[g.best].mean_wall_ms);
          if (row.best.empty()) {
            const TrainConfig& bc = g.cells[g.best].config;
            std::ostringstream o;
            o << bc.q << ',' << bc.learning_rate << ',' << bc.batch_size;
            row.best = o.str();
          }
          for (const auto& c : g.cells) {
            if (!c.ok) err << "warning: " << path << " " << kernel << " seed " << seed << ": " << c.error << "\n";
          }
        } catch (const Error& e) {
          row.errors += (row.errors.empty() ? "" : "; ") + std::string("seed ") +
                        std::to_string(seed) + ": " + e.what();
          err << "warning: " << path << " " << kernel << " seed " << seed << " failed: " << e.what() << "\n";
        }
      }
      if (row.best.empty()) row.best = ",,";
      rows.push_back(std::move(row));
    }
  }

  std::ostringstream text;
  text << std::left << std::setw(14) << "dataset" << std::setw(12) << "kernel" << std::right
       << std::setw(22) << "log p(y)" << std::setw(22) << "MAE" << std::setw(22) << "MSE"
       << std::setw(12) << "ms/iter" << "\n";
  auto cell = [](const std::vector<double>& v) {
    std::ostringstream o;
    o << std::setprecision(4) << mean_of(v) << " +- " << std_of(v);
    return o.str();
  };
  for (const auto& r : rows) {
    std::string errors = r.errors;
    std::replace(errors.begin(), errors.end(), ',', ';');
    std::replace(errors.begin(), errors.end(), '\n', ' ');
    csv << r.dataset << ',' << r.kernel << ',' << r.lpd.size() << ',' << mean_of(r.lpd) << ','
        << std_of(r.lpd) << ',' << mean_of(r.mae) << ',' << std_of(r.mae) << ','
        << mean_of(r.mse) << ',' << std_of(r.mse) << ',' << mean_of(r.ms) << ',' << r.best << ','
        << errors << '\n';
    std::ostringstream ms;
    ms << std::setprecision(4) << mean_of(r.ms);
    text << std::left << std::setw(14) << r.dataset << std::setw(12) << r.kernel << std::right
         << std::setw(22) << cell(r.lpd) << std::setw(22) << cell(r.mae) << std::setw(22)
         << cell(r.mse) << std::setw(12) << ms.str() << "\n";
  }
  Run run("benchmark", args, out_dir);
  run.write("table.csv", csv.str());
  run.write("table.txt", text.str());
  run.set("seed", base.seed);
  run.set("dataset_fingerprint", fingerprints);
  run.finish(resolved);
  out << text.str();
  return kExitOk;
}

int cmd_synth(const std::vector<std::string>& args, SyntheticSpec& spec, const std::string& kind,
              const std::string& out_dir, const std::string& resolved, std::ostream& out) {
  try {
    spec.kind = synthetic_kind_from_string(kind);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  Dataset ds;
  try {
    ds = synthesize(spec);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  Run run("synth", args, out_dir);
  run.write("synthetic.csv", prepared_csv(ds));
  run.set("seed", spec.seed);
  run.finish(resolved);
  out << "wrote " << ds.size() << " rows -> " << run.path("synthetic.csv") << "\n";
  return kExitOk;
}

int cmd_pca(const std::vector<std::string>& args, DataOptions& d, const std::string& out_dir,
            const std::string& resolved, std::ostream& out) {
  const Dataset raw = load_raw(d);
  const PrincipalComponent pc = first_principal_component(raw.x);
  Dataset reduced;
  reduced.x = pc.scores;
  reduced.y = raw.y;
  reduced.input_columns = {"pc1"};
  reduced.target_column = raw.target_column;
  Run run("pca", args, out_dir);
  run.write("pca.csv", prepared_csv(reduced));
  json loading = json::object();
  for (Index k = 0; k < pc.loading.size(); ++k) {
    loading[raw.input_columns[static_cast<std::size_t>(k)]] = pc.loading(k);
  }
  run.set("loading", loading);
  run.set("eigenvalue", pc.eigenvalue);
  run.set("dataset_fingerprint", fingerprint(d.path));
  run.finish(resolved);
  out << "first component explains eigenvalue " << pc.eigenvalue << " of "
      << raw.input_dim() << " -> " << run.path("pca.csv") << "\n";
  return kExitOk;
}

// Trace files differ in their timing column; everything else must match.
bool same_artifact(const std::string& name, const std::string& a, const std::string& b) {
  if (name != "trace.csv") return read_file(a) == read_file(b);
  auto strip = [](const std::string& text) {
    std::istringstream in(text);
    std::string line, kept;
    while (std::getline(in, line)) kept += line.substr(0, line.rfind(',')) + "\n";
    return kept;
  };
  return strip(read_file(a)) == strip(read_file(b));
}

int cmd_replay(const std::string& manifest_path, const std::string& out_dir, std::ostream& out,
               std::ostream& err) {
  json m;
  try {
    m = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw UsageError("cannot read manifest: " + std::string(e.what()));
  }
  auto args = m.at("args").get<std::vector<std::string>>();
  std::string original_out;
  for (std::size_t i = 0; i + 1 < args.size(); ++i) {
    if (args[i] == "--out") {
      original_out = args[i + 1];
      args[i + 1] = out_dir;
    }
  }
  if (original_out.empty()) original_out = fs::path(manifest_path).parent_path().string();
  std::ostringstream quiet;
  const int code = run(args, quiet, err);
  if (code != kExitOk) return code;
  bool all_same = true;
  for (const auto& name : m.at("outputs").get<std::vector<std::string>>()) {
    const std::string a = (fs::path(original_out) / name).string();
    const std::string b = (fs::path(out_dir) / name).string();
    const bool same = fs::exists(a) && fs::exists(b) && same_artifact(name, a, b);
    out << (same ? "same     " : "DIFFERS  ") << name << "\n";
    all_same = all_same && same;
  }
  out << (all_same ? "replay reproduced every artifact\n" : "replay produced different artifacts\n");
  return all_same ? kExitOk : kExitFailure;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string sha256_file(const std::string& path) {
  const std::string bytes = read_file(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed for '" + path + "'");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < length; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  if (args.empty()) return args;
  std::vector<std::string> from_files;
  std::vector<std::string> rest;
  for (std::size_t i = 1; i < args.size(); ++i) {
    std::string file;
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file");
      file = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
      continue;
    }
    std::ifstream in(file);
    if (!in) throw UsageError("cannot open config file '" + file + "'");
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
      ++number;
      line = trim(line);
      if (line.empty() || line[0] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw UsageError(file + ":" + std::to_string(number) + ": expected key=value");
      }
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (value == "true" || value == "false") {
        if (value == "true") from_files.push_back("--" + key);
        continue;
      }
      from_files.push_back("--" + key);
      from_files.push_back(value);
    }
  }
  std::vector<std::string> out{args.front()};
  out.insert(out.end(), from_files.begin(), from_files.end());
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  try {
    args = expand_config(raw_args);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  CLI::App app{"Sparse variational GP regression with spectral mixture kernels", "nsgp"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(NSGP_VERSION));

  DataOptions data;
  TrainOptions topt;
  std::string out_dir;
  std::string model_path;
  std::string split = "test";
  std::uint64_t seed = 0;

  auto* prepare_cmd = app.add_subcommand("prepare", "Split and normalize a CSV into a cache");
  add_data_options(prepare_cmd, data);
  prepare_cmd->add_option("--seed", seed)->capture_default_str();
  prepare_cmd->add_option("--out", out_dir, "Output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  add_data_options(train_cmd, data);
  add_train_options(train_cmd, topt);
  train_cmd->add_option("--out", out_dir, "Output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a saved model");
  eval_cmd->add_option("--model", model_path, "model.json from train")->required();
  add_data_options(eval_cmd, data);
  eval_cmd->add_option("--split", split, "train, validation or test")->capture_default_str();
  eval_cmd->add_option("--out", out_dir, "Directory for metrics.json");

  Index sx = 200, ss = 200;
  std::optional<double> x_min, x_max, s_max;
  auto* spec_cmd = app.add_subcommand("spectrogram", "Export S(s, x) of a spectral model");
  spec_cmd->add_option("--model", model_path)->required();
  spec_cmd->add_option("--sx", sx, "Input grid points")->capture_default_str();
  spec_cmd->add_option("--ss", ss, "Frequency grid points")->capture_default_str();
  spec_cmd->add_option("--x-min,--x_min", x_min, "Normalized units; default: training minimum");
  spec_cmd->add_option("--x-max,--x_max", x_max, "Normalized units; default: training maximum");
  spec_cmd->add_option("--s-max,--s_max", s_max, "Default: the Nyquist frequency");
  spec_cmd->add_option("--out", out_dir)->required();

  BenchmarkOptions bopt;
  DataOptions bdata;
  bdata.train = 0.7;
  bdata.validation = 0.1;
  auto* bench_cmd = app.add_subcommand("benchmark", "Grid search per kernel and dataset");
  bench_cmd->add_option("--datasets", bopt.datasets, "Comma-separated CSV paths")->required();
  bench_cmd->add_option("--target", bdata.target);
  bench_cmd->add_flag("--no-header", bdata.no_header);
  bench_cmd->add_option("--train-fraction,--train_fraction", bdata.train)->capture_default_str();
  bench_cmd->add_option("--validation-fraction,--validation_fraction", bdata.validation)
      ->capture_default_str();
  bench_cmd->add_option("--test-fraction,--test_fraction", bdata.test)->capture_default_str();
  bench_cmd->add_option("--kernels", bopt.kernels)->capture_default_str();
  bench_cmd->add_option("--seeds", bopt.seeds, "Repetitions with seeds seed, seed+1, ...")
      ->capture_default_str();
  bench_cmd->add_option("--grid-q,--grid_q", bopt.grid_q)->capture_default_str();
  bench_cmd->add_option("--grid-lr,--grid_lr", bopt.grid_lr)->capture_default_str();
  bench_cmd->add_option("--grid-batch,--grid_batch", bopt.grid_batch)->capture_default_str();
  add_train_options(bench_cmd, topt);
  bench_cmd->add_option("--out", out_dir)->required();

  SyntheticSpec synth;
  std::string kind = "chirp";
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic series");
  synth_cmd->add_option("--kind", kind, "chirp or gp-draw")->capture_default_str();
  synth_cmd->add_option("--n", synth.n)->capture_default_str();
  synth_cmd->add_option("--noise-std,--noise_std", synth.noise_std)->capture_default_str();
  synth_cmd->add_option("--f0", synth.f0)->capture_default_str();
  synth_cmd->add_option("--rate", synth.rate)->capture_default_str();
  synth_cmd->add_option("--gp-variance,--gp_variance", synth.gp_variance)->capture_default_str();
  synth_cmd->add_option("--gp-lengthscale,--gp_lengthscale", synth.gp_lengthscale)
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
  synth_cmd->add_option("--out", out_dir)->required();

  auto* pca_cmd = app.add_subcommand("pca", "Reduce the inputs to their first principal component");
  pca_cmd->add_option("--data", data.path)->required();
  pca_cmd->add_option("--target", data.target);
  pca_cmd->add_flag("--no-header", data.no_header);
  pca_cmd->add_option("--out", out_dir)->required();

  std::string manifest_path;
  auto* replay_cmd = app.add_subcommand("replay", "Re-run a manifest and compare its artifacts");
  replay_cmd->add_option("--manifest", manifest_path)->required();
  replay_cmd->add_option("--out", out_dir, "Directory for the re-run")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream help, problem;
    const int code = app.exit(e, help, problem);
    out << help.str();
    err << problem.str();
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const std::string resolved = app.config_to_str(true, false);
    if (*prepare_cmd) return cmd_prepare(args, data, seed, out_dir, resolved, out);
    if (*train_cmd) return cmd_train(args, data, topt, out_dir, resolved, out, err);
    if (*eval_cmd) return cmd_eval(args, model_path, data, split, out_dir, resolved, out);
    if (*spec_cmd) {
      return cmd_spectrogram(args, model_path, sx, ss, x_min, x_max, s_max, out_dir, resolved,
                             out);
    }
    if (*bench_cmd) return cmd_benchmark(args, bdata, topt, bopt, out_dir, resolved, out, err);
    if (*synth_cmd) return cmd_synth(args, synth, kind, out_dir, resolved, out);
    if (*pca_cmd) return cmd_pca(args, data, out_dir, resolved, out);
    if (*replay_cmd) return cmd_replay(manifest_path, out_dir, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace nsgp::cli
