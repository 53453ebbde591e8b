#pragma once

#include <string>
#include <vector>

#include "nsgp/data.hpp"
#include "nsgp/svgp.hpp"
#include "nsgp/training.hpp"

namespace nsgp {

/// Everything besides the parameters that a saved model carries.
struct SnapshotMeta {
  Normalization normalization;
  std::vector<std::string> input_columns;
  std::string target_column;
  /// Per-dimension extent of the training inputs, normalized units.
  Vector input_min;
  Vector input_max;
  TrainConfig config;
  Index selected_restart = 0;
  double final_elbo = 0.0;
};

struct LoadedModel {
  SvgpModel model;
  SnapshotMeta meta;
};

/// Self-describing JSON: kernel name and shapes, every raw parameter by name
/// with its constraint, and the metadata. Doubles are written with
/// round-trip precision, so equal models give byte-identical text.
std::string model_to_json(const SvgpModel& model, const SnapshotMeta& meta);

/// Rebuilds the model. Throws SnapshotMismatch for an unknown format,
/// kernel, missing parameter or shape disagreement.
LoadedModel model_from_json(const std::string& text);

void save_model(const std::string& path, const SvgpModel& model, const SnapshotMeta& meta);
LoadedModel load_model(const std::string& path);

/// Metrics in normalized units alongside the same values mapped back to the
/// target's original scale.
struct MetricsReport {
  Metrics normalized;
  Metrics original;
  Index n_test = 0;
};

/// log density shifts by −log(y_std), MAE scales by y_std, MSE by y_std².
Metrics to_original_units(const Metrics& m, double y_std);
MetricsReport make_report(const Metrics& normalized, double y_std, Index n_test);

std::string metrics_to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const std::string& text);

std::string config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const std::string& text);

}  // namespace nsgp
