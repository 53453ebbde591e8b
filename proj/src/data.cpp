#include "nsgp/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <unistd.h>

#include "json_util.hpp"
#include "nsgp/errors.hpp"
#include "nsgp/kernel_ops.hpp"

namespace nsgp {

using json_util::json;

Matrix Normalization::normalize_x(const Matrix& x) const {
  if (x.cols() != x_mean.size()) throw DimensionMismatch("normalize_x: column count mismatch");
  return ((x.rowwise() - x_mean.transpose()).array().rowwise() / x_std.transpose().array())
      .matrix();
}

Matrix Normalization::denormalize_x(const Matrix& x) const {
  if (x.cols() != x_mean.size()) throw DimensionMismatch("denormalize_x: column count mismatch");
  return ((x.array().rowwise() * x_std.transpose().array()).rowwise() +
          x_mean.transpose().array())
      .matrix();
}

Vector Normalization::normalize_y(const Vector& y) const {
  return ((y.array() - y_mean) / y_std).matrix();
}

Vector Normalization::denormalize_y(const Vector& y) const {
  return (y.array() * y_std + y_mean).matrix();
}

Matrix Dataset::x_of(const std::vector<Index>& rows) const {
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = x.row(rows[i]);
  return out;
}

Vector Dataset::y_of(const std::vector<Index>& rows) const {
  Vector out(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Index>(i)) = y(rows[i]);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, std::size_t row, std::size_t column) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  if (!cell.empty() && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (cell.empty() || ec != std::errc() || ptr != end) {
    throw ParseError(row, column, "'" + cell + "' is not a number");
  }
  if (!std::isfinite(value)) throw ParseError(row, column, "non-finite value '" + cell + "'");
  return value;
}

std::string join(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
  return out;
}

}  // namespace

Dataset parse_csv(std::istream& in, const std::string& target_column, bool has_header) {
  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t row_number = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++row_number;
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (has_header && names.empty()) {
      names = cells;
      width = names.size();
      continue;
    }
    if (width == 0) width = cells.size();
    if (cells.size() != width) {
      throw ParseError(row_number, std::min(cells.size(), width) + 1,
                       "expected " + std::to_string(width) + " columns, found " +
                           std::to_string(cells.size()));
    }
    std::vector<double> values(width);
    for (std::size_t c = 0; c < width; ++c) values[c] = parse_cell(cells[c], row_number, c + 1);
    rows.push_back(std::move(values));
  }
  if (names.empty()) {
    for (std::size_t c = 0; c < width; ++c) names.push_back("col" + std::to_string(c));
  }
  if (rows.empty()) throw InvalidArgument("csv contains no data rows");
  if (width < 2) throw MissingColumn("csv needs at least one input column and a target");

  std::size_t target = width - 1;
  if (!target_column.empty()) {
    auto it = std::find(names.begin(), names.end(), target_column);
    if (it != names.end()) {
      target = static_cast<std::size_t>(it - names.begin());
    } else if (!has_header &&
               std::all_of(target_column.begin(), target_column.end(), ::isdigit) &&
               std::stoul(target_column) < width) {
      target = std::stoul(target_column);
    } else {
      throw MissingColumn("target column '" + target_column + "' not found; columns are: " +
                          join(names));
    }
  }

  Dataset ds;
  const Index n = static_cast<Index>(rows.size());
  ds.x.resize(n, static_cast<Index>(width - 1));
  ds.y.resize(n);
  for (std::size_t c = 0; c < width; ++c) {
    if (c != target) ds.input_columns.push_back(names[c]);
  }
  ds.target_column = names[target];
  for (Index i = 0; i < n; ++i) {
    Index k = 0;
    for (std::size_t c = 0; c < width; ++c) {
      if (c == target) {
        ds.y(i) = rows[static_cast<std::size_t>(i)][c];
      } else {
        ds.x(i, k++) = rows[static_cast<std::size_t>(i)][c];
      }
    }
  }
  return ds;
}

Dataset load_csv(const std::string& path, const std::string& target_column, bool has_header) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open '" + path + "'");
  return parse_csv(in, target_column, has_header);
}

// ---------------------------------------------------------------------------

NyquistResult nyquist(const Matrix& x) {
  NyquistResult out;
  out.frequency.resize(x.cols());
  for (Index k = 0; k < x.cols(); ++k) {
    std::vector<double> v(x.col(k).data(), x.col(k).data() + x.rows());
    std::sort(v.begin(), v.end());
    const std::size_t before = v.size();
    v.erase(std::unique(v.begin(), v.end()), v.end());
    if (v.size() < before) out.duplicates = true;
    if (v.size() < 2) {
      throw InvalidArgument("nyquist: input column " + std::to_string(k) +
                            " needs at least two distinct values");
    }
    double min_gap = v[1] - v[0];
    double max_gap = min_gap;
    for (std::size_t i = 2; i < v.size(); ++i) {
      min_gap = std::min(min_gap, v[i] - v[i - 1]);
      max_gap = std::max(max_gap, v[i] - v[i - 1]);
    }
    out.frequency(k) = max_gap - min_gap <= 1e-9 ? 1.0 / (2.0 * min_gap) : 1.0 / min_gap;
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void check_fractions(const SplitFractions& f) {
  const double sum = f.train + f.validation + f.test;
  if (!(f.train > 0.0) || !(f.test > 0.0) || f.validation < 0.0 || std::abs(sum - 1.0) > 1e-9) {
    throw InvalidArgument(
        "split fractions must be positive (validation may be 0) and sum to 1");
  }
}

/// Test indices as five contiguous runs of the input-sorted order, one
/// placed at a random offset inside each fifth of the series.
std::vector<Index> window_test_rows(const Matrix& x, Index n_test, std::mt19937_64& rng) {
  const Index n = x.rows();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return x(a, 0) < x(b, 0); });
  std::vector<Index> test;
  for (Index w = 0; w < 5; ++w) {
    const Index count = n_test / 5 + (w < n_test % 5 ? 1 : 0);
    if (count == 0) continue;
    const Index lo = n * w / 5;
    const Index hi = n * (w + 1) / 5;
    const Index slack = std::max<Index>(0, hi - lo - count);
    const Index start =
        lo + std::uniform_int_distribution<Index>(0, slack)(rng);
    for (Index i = start; i < std::min(start + count, n); ++i) test.push_back(order[i]);
  }
  return test;
}

}  // namespace

Dataset prepare(const Dataset& raw, const SplitFractions& fractions, std::uint64_t seed) {
  check_fractions(fractions);
  const Index n = raw.size();
  const Index d = raw.input_dim();
  if (d < 1) throw InvalidArgument("prepare: dataset has no input columns");
  const Index n_test = std::max<Index>(1, std::llround(fractions.test * static_cast<double>(n)));
  const Index n_val = std::llround(fractions.validation * static_cast<double>(n));
  if (n - n_test - n_val < 2) throw InvalidArgument("prepare: fewer than two training rows");

  std::mt19937_64 rng(seed);
  std::vector<char> role(static_cast<std::size_t>(n), 't');  // t: train, v: validation, s: test
  std::vector<Index> rest;
  if (d == 1) {
    for (Index i : window_test_rows(raw.x, n_test, rng)) role[static_cast<std::size_t>(i)] = 's';
    for (Index i = 0; i < n; ++i) {
      if (role[static_cast<std::size_t>(i)] != 's') rest.push_back(i);
    }
  } else {
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (Index i = 0; i < n_test; ++i) role[static_cast<std::size_t>(order[i])] = 's';
    rest.assign(order.begin() + n_test, order.end());
    std::sort(rest.begin(), rest.end());
  }
  std::shuffle(rest.begin(), rest.end(), rng);
  for (Index i = 0; i < n_val && i < static_cast<Index>(rest.size()); ++i) {
    role[static_cast<std::size_t>(rest[i])] = 'v';
  }

  Dataset ds = raw;
  ds.split = Split{};
  for (Index i = 0; i < n; ++i) {
    switch (role[static_cast<std::size_t>(i)]) {
      case 't': ds.split.train.push_back(i); break;
      case 'v': ds.split.validation.push_back(i); break;
      default: ds.split.test.push_back(i); break;
    }
  }

  const Matrix xt = raw.x_of(ds.split.train);
  const Vector yt = raw.y_of(ds.split.train);
  Normalization& norm = ds.normalization;
  norm.x_mean = xt.colwise().mean().transpose();
  norm.x_std.resize(d);
  for (Index k = 0; k < d; ++k) {
    norm.x_std(k) = std::sqrt((xt.col(k).array() - norm.x_mean(k)).square().mean());
    if (!(norm.x_std(k) > 0.0)) {
      const std::string name =
          k < static_cast<Index>(raw.input_columns.size()) ? raw.input_columns[k] : std::to_string(k);
      throw DegenerateColumn("input column '" + name + "' is constant on the training split");
    }
  }
  norm.y_mean = yt.mean();
  norm.y_std = std::sqrt((yt.array() - norm.y_mean).square().mean());
  if (!(norm.y_std > 0.0)) {
    throw DegenerateColumn("target column '" + raw.target_column +
                           "' is constant on the training split");
  }

  ds.x = norm.normalize_x(raw.x);
  ds.y = norm.normalize_y(raw.y);
  ds.normalized = true;
  const NyquistResult ny = nyquist(ds.x);
  ds.nyquist = ny.frequency;
  ds.duplicate_inputs = ny.duplicates;
  ds.seed = seed;
  return ds;
}

// ---------------------------------------------------------------------------

SyntheticKind synthetic_kind_from_string(const std::string& s) {
  if (s == "chirp") return SyntheticKind::kChirp;
  if (s == "gp-draw") return SyntheticKind::kGpDraw;
  throw InvalidArgument("unknown synthetic kind '" + s + "' (valid: chirp, gp-draw)");
}

std::string to_string(SyntheticKind kind) {
  return kind == SyntheticKind::kChirp ? "chirp" : "gp-draw";
}

Dataset synthesize(const SyntheticSpec& spec) {
  if (spec.n < 2) throw InvalidArgument("synthesize: n must be at least 2");
  if (!(spec.noise_std >= 0.0)) throw InvalidArgument("synthesize: noise_std must be >= 0");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal;
  Dataset ds;
  ds.x = Vector::LinSpaced(spec.n, 0.0, 1.0);
  ds.y.resize(spec.n);
  ds.input_columns = {"t"};
  ds.target_column = "y";
  if (spec.kind == SyntheticKind::kChirp) {
    for (Index i = 0; i < spec.n; ++i) {
      const double t = ds.x(i, 0);
      ds.y(i) = std::sin(kTwoPi * (spec.f0 + spec.rate * t) * t);
    }
  } else {
    if (!(spec.gp_variance > 0.0) || !(spec.gp_lengthscale > 0.0)) {
      throw InvalidArgument("synthesize: gp-draw needs positive variance and lengthscale");
    }
    Matrix k(spec.n, spec.n);
    for (Index i = 0; i < spec.n; ++i) {
      for (Index j = 0; j < spec.n; ++j) {
        const double tau = (ds.x(i, 0) - ds.x(j, 0)) / spec.gp_lengthscale;
        k(i, j) = spec.gp_variance * std::exp(-0.5 * tau * tau);
      }
    }
    const CholeskyFactor f = cholesky(k);
    Vector z(spec.n);
    for (Index i = 0; i < spec.n; ++i) z(i) = normal(rng);
    ds.y = f.lower.triangularView<Eigen::Lower>() * z;
  }
  if (spec.noise_std > 0.0) {
    for (Index i = 0; i < spec.n; ++i) ds.y(i) += spec.noise_std * normal(rng);
  }
  return ds;
}

// ---------------------------------------------------------------------------

PrincipalComponent first_principal_component(const Matrix& x, int max_iters, double tol) {
  const Index n = x.rows();
  const Index d = x.cols();
  if (n < 2 || d < 1) throw InvalidArgument("pca: need at least two rows and one column");
  if (!x.allFinite()) throw NonFinite("pca: input contains NaN or Inf");
  const Vector mean = x.colwise().mean().transpose();
  Matrix z = x.rowwise() - mean.transpose();
  for (Index k = 0; k < d; ++k) {
    const double sd = std::sqrt(z.col(k).squaredNorm() / static_cast<double>(n));
    if (!(sd > 0.0)) throw DegenerateColumn("pca: column " + std::to_string(k) + " is constant");
    z.col(k) /= sd;
  }
  const Matrix cov = z.transpose() * z / static_cast<double>(n);

  Vector v = Vector::LinSpaced(d, 1.0, 2.0).normalized();
  for (int it = 0; it < max_iters; ++it) {
    Vector next = cov * v;
    const double norm = next.norm();
    if (!(norm > 0.0)) break;
    next /= norm;
    if (next.dot(v) < 0.0) next = -next;
    const double change = (next - v).norm();
    v = next;
    if (change < tol) break;
  }
  Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v(arg) < 0.0) v = -v;

  PrincipalComponent pc;
  pc.loading = v;
  pc.scores = z * v;
  pc.eigenvalue = v.dot(cov * v);
  return pc;
}

// ---------------------------------------------------------------------------

std::string prepared_csv(const Dataset& ds) {
  const Matrix x = ds.normalized ? ds.normalization.denormalize_x(ds.x) : ds.x;
  const Vector y = ds.normalized ? ds.normalization.denormalize_y(ds.y) : ds.y;
  std::ostringstream out;
  out.precision(17);
  for (const auto& name : ds.input_columns) out << name << ',';
  out << ds.target_column << '\n';
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index k = 0; k < x.cols(); ++k) out << x(i, k) << ',';
    out << y(i) << '\n';
  }
  return out.str();
}

std::string prepared_sidecar(const Dataset& ds) {
  if (!ds.normalized) throw InvalidArgument("prepared_sidecar: dataset is not prepared");
  json j = {{"format", "nsgp-prepared-dataset"},
            {"version", 1},
            {"input_columns", ds.input_columns},
            {"target_column", ds.target_column},
            {"rows", ds.size()},
            {"normalization", json_util::normalization_to_json(ds.normalization)},
            {"split", json_util::split_to_json(ds.split)},
            {"nyquist", json_util::vector_to_json(ds.nyquist)},
            {"duplicate_inputs", ds.duplicate_inputs},
            {"seed", ds.seed}};
  return j.dump(2) + "\n";
}

void save_prepared(const Dataset& ds, const std::string& csv_path, const std::string& json_path) {
  write_file_atomic(csv_path, prepared_csv(ds));
  write_file_atomic(json_path, prepared_sidecar(ds));
}

Dataset load_prepared(const std::string& csv_path, const std::string& json_path) {
  const std::string sidecar_path = json_path.empty() ? csv_path + ".json" : json_path;
  json j;
  try {
    j = json::parse(read_file(sidecar_path));
  } catch (const json::exception& e) {
    throw InvalidArgument("cannot parse sidecar '" + sidecar_path + "': " + e.what());
  }
  if (j.value("format", "") != "nsgp-prepared-dataset") {
    throw InvalidArgument("'" + sidecar_path + "' is not a prepared-dataset sidecar");
  }
  Dataset ds = load_csv(csv_path, j.at("target_column").get<std::string>(), true);
  try {
    if (ds.size() != j.at("rows").get<Index>()) {
      throw InvalidArgument("prepared csv row count disagrees with its sidecar");
    }
    ds.normalization = json_util::normalization_from_json(j.at("normalization"));
    ds.split = json_util::split_from_json(j.at("split"));
    ds.nyquist = json_util::vector_from_json(j.at("nyquist"));
    ds.duplicate_inputs = j.at("duplicate_inputs").get<bool>();
    ds.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw InvalidArgument("malformed sidecar '" + sidecar_path + "': " + e.what());
  }
  if (ds.normalization.x_mean.size() != ds.input_dim() || ds.nyquist.size() != ds.input_dim()) {
    throw DimensionMismatch("sidecar dimensions disagree with the prepared csv");
  }
  for (const auto* part : {&ds.split.train, &ds.split.validation, &ds.split.test}) {
    for (Index i : *part) {
      if (i < 0 || i >= ds.size()) throw InvalidArgument("sidecar split index out of range");
    }
  }
  ds.x = ds.normalization.normalize_x(ds.x);
  ds.y = ds.normalization.normalize_y(ds.y);
  ds.normalized = true;
  return ds;
}

// ---------------------------------------------------------------------------

void write_file_atomic(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidArgument("cannot write '" + tmp.string() + "'");
    out << contents;
    out.flush();
    if (!out) {
      fs::remove(tmp);
      throw InvalidArgument("failed writing '" + tmp.string() + "'");
    }
  }
  fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace nsgp
