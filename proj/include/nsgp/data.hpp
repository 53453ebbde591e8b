#pragma once

#include <cstdint>
#include <istream>
#include <string>
#include <vector>

#include "nsgp/numerics.hpp"

namespace nsgp {

/// z-score parameters. Normalized value = (raw − mean) / std.
struct Normalization {
  Vector x_mean;
  Vector x_std;
  double y_mean = 0.0;
  double y_std = 1.0;

  Matrix normalize_x(const Matrix& x) const;
  Matrix denormalize_x(const Matrix& x) const;
  Vector normalize_y(const Vector& y) const;
  Vector denormalize_y(const Vector& y) const;
};

struct Split {
  std::vector<Index> train;
  std::vector<Index> validation;
  std::vector<Index> test;
};

struct SplitFractions {
  double train = 0.8;
  double validation = 0.0;
  double test = 0.2;
};

struct Dataset {
  Matrix x;  // n × d
  Vector y;  // n
  std::vector<std::string> input_columns;
  std::string target_column;

  bool normalized = false;
  Normalization normalization;
  Split split;
  /// Per input dimension, in normalized units.
  Vector nyquist;
  bool duplicate_inputs = false;
  std::uint64_t seed = 0;

  Index size() const { return x.rows(); }
  Index input_dim() const { return x.cols(); }

  Matrix x_of(const std::vector<Index>& rows) const;
  Vector y_of(const std::vector<Index>& rows) const;
};

/// Parses comma-separated numeric rows. With a header, `target_column` names
/// the target (empty means the last column); without one it may be a
/// zero-based column index. Rows are numbered from 1 counting the header.
Dataset parse_csv(std::istream& in, const std::string& target_column, bool has_header = true);
Dataset load_csv(const std::string& path, const std::string& target_column,
                 bool has_header = true);

struct NyquistResult {
  Vector frequency;
  /// True if some input dimension had repeated values; those are collapsed
  /// before the gaps are measured.
  bool duplicates = false;
};

/// Per column: 1/(2Δ) if the sorted distinct values are equispaced within
/// 1e-9, else 1/(smallest gap). Throws InvalidArgument if a column has fewer
/// than two distinct values.
NyquistResult nyquist(const Matrix& x);

/// Splits, normalizes with train-split statistics, and computes the Nyquist
/// frequencies on the normalized inputs. Univariate inputs get a test split
/// made of five contiguous windows; otherwise the split is uniform random.
Dataset prepare(const Dataset& raw, const SplitFractions& fractions, std::uint64_t seed);

enum class SyntheticKind { kChirp, kGpDraw };

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::kChirp;
  Index n = 500;
  double noise_std = 0.1;
  /// Chirp: y = sin(2π(f0 + rate·t)·t) on equispaced t ∈ [0, 1].
  double f0 = 2.0;
  double rate = 10.0;
  /// GP draw: RBF kernel on equispaced t ∈ [0, 1].
  double gp_variance = 1.0;
  double gp_lengthscale = 0.1;
  std::uint64_t seed = 0;
};

SyntheticKind synthetic_kind_from_string(const std::string& s);
std::string to_string(SyntheticKind kind);

/// Unnormalized, unsplit dataset with columns "t" and "y".
Dataset synthesize(const SyntheticSpec& spec);

struct PrincipalComponent {
  /// Unit-norm loading vector; its largest-magnitude entry is positive.
  Vector loading;
  /// Scores of the z-scored rows along the loading.
  Vector scores;
  double eigenvalue = 0.0;
};

/// z-scores every column of `x` and finds the leading principal component
/// by power iteration on the covariance.
PrincipalComponent first_principal_component(const Matrix& x, int max_iters = 1000,
                                             double tol = 1e-12);

/// Writes the dataset as CSV (inputs then target, raw units) plus a JSON
/// sidecar with normalization, split, Nyquist frequencies and seed.
std::string prepared_csv(const Dataset& ds);
std::string prepared_sidecar(const Dataset& ds);
void save_prepared(const Dataset& ds, const std::string& csv_path, const std::string& json_path);
/// Reads a prepared cache back. The sidecar is `csv_path` + ".json" when
/// `json_path` is empty.
Dataset load_prepared(const std::string& csv_path, const std::string& json_path = "");

/// Writes `contents` to `path` through a temporary file and a rename.
void write_file_atomic(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

}  // namespace nsgp
