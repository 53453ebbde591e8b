#include "nsgp/serialize.hpp"

#include <cmath>
#include <map>

#include "json_util.hpp"
#include "nsgp/errors.hpp"
#include "nsgp/kernels.hpp"
#include "nsgp/param_functions.hpp"

namespace nsgp {

using json_util::json;

namespace {

constexpr const char* kModelFormat = "nsgp-model";
constexpr const char* kMetricsFormat = "nsgp-metrics";
constexpr int kVersion = 1;

json config_json(const TrainConfig& cfg) {
  return {{"kernel", cfg.kernel},
          {"q", cfg.q},
          {"m", cfg.m},
          {"learning_rate", cfg.learning_rate},
          {"batch_size", cfg.batch_size},
          {"max_iters", cfg.max_iters},
          {"restarts", cfg.restarts},
          {"seed", cfg.seed},
          {"l2_coeff", cfg.l2_coeff},
          {"hidden", cfg.hidden},
          {"noise_variance", cfg.noise_variance},
          {"jitter", cfg.jitter}};
}

TrainConfig config_of(const json& j) {
  TrainConfig cfg;
  cfg.kernel = j.at("kernel").get<std::string>();
  cfg.q = j.at("q").get<Index>();
  cfg.m = j.at("m").get<Index>();
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.batch_size = j.at("batch_size").get<Index>();
  cfg.max_iters = j.at("max_iters").get<Index>();
  cfg.restarts = j.at("restarts").get<Index>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.l2_coeff = j.at("l2_coeff").get<double>();
  cfg.hidden = j.at("hidden").get<std::vector<Index>>();
  cfg.noise_variance = j.at("noise_variance").get<double>();
  cfg.jitter = j.at("jitter").get<double>();
  return cfg;
}

json kernel_shape(const Kernel& k) {
  json shape = {{"name", k.name()}, {"input_dim", k.input_dim()}};
  if (const auto* sm = dynamic_cast<const SpectralMixtureKernel*>(&k)) {
    shape["components"] = sm->components();
    shape["nyquist"] = json_util::vector_to_json(sm->nyquist());
  } else if (const auto* gsm = dynamic_cast<const GsmKernel*>(&k)) {
    const ParamFunction& f = gsm->functions();
    shape["components"] = f.components();
    shape["nyquist"] = json_util::vector_to_json(f.nyquist());
    if (const auto* n = dynamic_cast<const NeuralFunction*>(&f)) shape["hidden"] = n->hidden();
    if (const auto* g = dynamic_cast<const GpInterpFunction*>(&f)) {
      shape["anchor_jitter"] = g->anchor_jitter();
    }
  }
  return shape;
}

// A kernel with the right parameter shapes; values are overwritten on load.
std::unique_ptr<Kernel> kernel_skeleton(const json& shape, Index anchors) {
  const auto name = shape.at("name").get<std::string>();
  const Index d = shape.at("input_dim").get<Index>();
  if (d < 1) throw SnapshotMismatch("snapshot input_dim must be positive");
  if (name == "rbf") return std::make_unique<RbfKernel>(1.0, Vector::Ones(d));
  const Index q = shape.at("components").get<Index>();
  const Vector nyq = json_util::vector_from_json(shape.at("nyquist"));
  if (q < 1 || nyq.size() != d) throw SnapshotMismatch("snapshot kernel shape is inconsistent");
  if (name == "sm") {
    return std::make_unique<SpectralMixtureKernel>(Vector::Ones(q), Matrix::Zero(q, d),
                                                   Matrix::Ones(q, d), nyq);
  }
  if (name == "neural-gsm") {
    return std::make_unique<GsmKernel>(std::make_unique<NeuralFunction>(
        q, d, nyq, shape.at("hidden").get<std::vector<Index>>()));
  }
  if (name == "gp-gsm") {
    return std::make_unique<GsmKernel>(std::make_unique<GpInterpFunction>(
        q, d, nyq, Matrix::Zero(anchors, q), Matrix::Zero(anchors, q * d),
        Matrix::Zero(anchors, q * d), Vector::Ones(d), shape.at("anchor_jitter").get<double>()));
  }
  if (name == "constant-gsm") {
    Matrix mu(q, d);
    for (Index i = 0; i < q; ++i) mu.row(i) = 0.5 * nyq.transpose();
    return std::make_unique<GsmKernel>(std::make_unique<ConstantFunction>(
        Vector::Ones(q), Matrix::Ones(q, d), mu, nyq));
  }
  throw SnapshotMismatch("snapshot names unknown kernel '" + name + "'");
}

}  // namespace

std::string config_to_json(const TrainConfig& cfg) { return config_json(cfg).dump(2); }

TrainConfig config_from_json(const std::string& text) {
  try {
    return config_of(json::parse(text));
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed training config: ") + e.what());
  }
}

std::string model_to_json(const SvgpModel& model, const SnapshotMeta& meta) {
  json params = json::object();
  for (const Param* p : model.params()) {
    json entry = json_util::matrix_to_json(p->raw);
    entry["constraint"] = std::string(to_string(p->constraint));
    params[p->name] = entry;
  }
  json j = {{"format", kModelFormat},
            {"version", kVersion},
            {"kernel", kernel_shape(model.kernel())},
            {"num_inducing", model.num_inducing()},
            {"jitter", model.jitter()},
            {"params", params},
            {"normalization", json_util::normalization_to_json(meta.normalization)},
            {"input_columns", meta.input_columns},
            {"target_column", meta.target_column},
            {"input_min", json_util::vector_to_json(meta.input_min)},
            {"input_max", json_util::vector_to_json(meta.input_max)},
            {"config", config_json(meta.config)},
            {"selected_restart", meta.selected_restart},
            {"final_elbo", meta.final_elbo}};
  return j.dump(2) + "\n";
}

LoadedModel model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw SnapshotMismatch(std::string("model snapshot is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != kModelFormat) {
    throw SnapshotMismatch("not a model snapshot (format field missing or wrong)");
  }
  if (j.value("version", 0) != kVersion) {
    throw SnapshotMismatch("unsupported model snapshot version");
  }
  try {
    const Index m = j.at("num_inducing").get<Index>();
    const Index d = j.at("kernel").at("input_dim").get<Index>();
    if (m < 1) throw SnapshotMismatch("snapshot needs at least one inducing point");
    // Distinct placeholder locations keep the prior factorization well posed.
    const Matrix placeholder = Vector::LinSpaced(m, 0.0, 1.0).replicate(1, d);
    SvgpModel model(kernel_skeleton(j.at("kernel"), m), placeholder, 1.0,
                    j.at("jitter").get<double>());
    const json& stored = j.at("params");
    for (Param* p : model.params()) {
      if (!stored.contains(p->name)) {
        throw SnapshotMismatch("snapshot lacks parameter '" + p->name + "'");
      }
      const json& entry = stored.at(p->name);
      const Matrix raw = json_util::matrix_from_json(entry);
      if (raw.rows() != p->raw.rows() || raw.cols() != p->raw.cols()) {
        throw SnapshotMismatch("parameter '" + p->name + "' has shape " +
                               std::to_string(raw.rows()) + "x" + std::to_string(raw.cols()) +
                               ", expected " + std::to_string(p->raw.rows()) + "x" +
                               std::to_string(p->raw.cols()));
      }
      if (constraint_from_string(entry.at("constraint").get<std::string>()) != p->constraint) {
        throw SnapshotMismatch("parameter '" + p->name + "' has the wrong constraint");
      }
      if (!raw.allFinite()) throw SnapshotMismatch("parameter '" + p->name + "' is not finite");
      p->raw = raw;
    }
    if (stored.size() != model.params().size()) {
      throw SnapshotMismatch("snapshot has parameters the kernel does not use");
    }
    SnapshotMeta meta;
    meta.normalization = json_util::normalization_from_json(j.at("normalization"));
    meta.input_columns = j.at("input_columns").get<std::vector<std::string>>();
    meta.target_column = j.at("target_column").get<std::string>();
    meta.input_min = json_util::vector_from_json(j.at("input_min"));
    meta.input_max = json_util::vector_from_json(j.at("input_max"));
    meta.config = config_of(j.at("config"));
    meta.selected_restart = j.at("selected_restart").get<Index>();
    meta.final_elbo = j.at("final_elbo").get<double>();
    if (meta.normalization.x_mean.size() != d || meta.input_min.size() != d ||
        meta.input_max.size() != d) {
      throw SnapshotMismatch("snapshot normalization does not match the input dimension");
    }
    return {std::move(model), std::move(meta)};
  } catch (const json::exception& e) {
    throw SnapshotMismatch(std::string("malformed model snapshot: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw SnapshotMismatch(std::string("malformed model snapshot: ") + e.what());
  }
}

void save_model(const std::string& path, const SvgpModel& model, const SnapshotMeta& meta) {
  write_file_atomic(path, model_to_json(model, meta));
}

LoadedModel load_model(const std::string& path) { return model_from_json(read_file(path)); }

Metrics to_original_units(const Metrics& m, double y_std) {
  if (!(y_std > 0.0)) throw InvalidArgument("y_std must be positive");
  return {m.mean_log_density - std::log(y_std), m.mae * y_std, m.mse * y_std * y_std};
}

MetricsReport make_report(const Metrics& normalized, double y_std, Index n_test) {
  return {normalized, to_original_units(normalized, y_std), n_test};
}

std::string metrics_to_json(const MetricsReport& r) {
  json j = {{"format", kMetricsFormat},
            {"version", kVersion},
            {"log_density_per_point", r.normalized.mean_log_density},
            {"mae", r.normalized.mae},
            {"mse", r.normalized.mse},
            {"n_test", r.n_test},
            {"convention",
             "per-point averages over the test split in normalized target units; the "
             "predictive density includes the observation noise"},
            {"original_units",
             {{"log_density_per_point", r.original.mean_log_density},
              {"mae", r.original.mae},
              {"mse", r.original.mse}}}};
  return j.dump(2) + "\n";
}

MetricsReport metrics_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.value("format", "") != kMetricsFormat) {
      throw InvalidArgument("not a metrics report (format field missing or wrong)");
    }
    MetricsReport r;
    r.normalized = {j.at("log_density_per_point").get<double>(), j.at("mae").get<double>(),
                    j.at("mse").get<double>()};
    const json& o = j.at("original_units");
    r.original = {o.at("log_density_per_point").get<double>(), o.at("mae").get<double>(),
                  o.at("mse").get<double>()};
    r.n_test = j.at("n_test").get<Index>();
    return r;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed metrics report: ") + e.what());
  }
}

}  // namespace nsgp
