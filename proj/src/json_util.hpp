#pragma once

// nlohmann::json conversions shared by the data and snapshot writers.

#include <string>
#include <vector>

#include "json.hpp"
#include "nsgp/data.hpp"
#include "nsgp/errors.hpp"
#include "nsgp/numerics.hpp"

namespace nsgp::json_util {

using nlohmann::json;

inline json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vector vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

/// {"rows", "cols", "data"} with data in row-major order.
inline json matrix_to_json(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline Matrix matrix_from_json(const json& j) {
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols) {
    throw DimensionMismatch("matrix record: data length does not match its shape");
  }
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index k = 0; k < cols; ++k) m(i, k) = data[static_cast<std::size_t>(i * cols + k)];
  return m;
}

inline json normalization_to_json(const Normalization& n) {
  return {{"x_mean", vector_to_json(n.x_mean)},
          {"x_std", vector_to_json(n.x_std)},
          {"y_mean", n.y_mean},
          {"y_std", n.y_std}};
}

inline Normalization normalization_from_json(const json& j) {
  Normalization n;
  n.x_mean = vector_from_json(j.at("x_mean"));
  n.x_std = vector_from_json(j.at("x_std"));
  n.y_mean = j.at("y_mean").get<double>();
  n.y_std = j.at("y_std").get<double>();
  return n;
}

inline json split_to_json(const Split& s) {
  return {{"train", s.train}, {"validation", s.validation}, {"test", s.test}};
}

inline Split split_from_json(const json& j) {
  Split s;
  s.train = j.at("train").get<std::vector<Index>>();
  s.validation = j.at("validation").get<std::vector<Index>>();
  s.test = j.at("test").get<std::vector<Index>>();
  return s;
}

}  // namespace nsgp::json_util
