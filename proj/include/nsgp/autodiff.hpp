#pragma once

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nsgp/numerics.hpp"

namespace nsgp {

/// How a parameter's raw (optimized) values map to the values the model uses.
enum class Constraint {
  kNone,
  /// transformed = softplus(raw), elementwise.
  kPositive,
  /// Square matrix: strict lower triangle copied, diagonal softplus'd, upper
  /// triangle ignored.
  kLowerTriangular,
};

std::string_view to_string(Constraint c);
Constraint constraint_from_string(std::string_view s);

/// A named, optimizable tensor. Names are unique within a model and key the
/// gradient map, the optimizer state and the JSON snapshot.
struct Param {
  std::string name;
  Matrix raw;
  Constraint constraint = Constraint::kNone;

  Matrix value() const;

  /// Builds a parameter whose transformed value equals `value`.
  static Param from_value(std::string name, const Matrix& value,
                          Constraint constraint = Constraint::kNone);
};

Matrix transform(Constraint c, const Matrix& raw);
Matrix inverse_transform(Constraint c, const Matrix& value);

double softplus(double x);
double inverse_softplus(double y);
double sigmoid(double x);
double logit(double p);

namespace ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

using Gradients = std::map<std::string, Matrix>;

/// Linear record of matrix-valued operations for reverse-mode gradients.
/// Nodes are appended in evaluation order, which is a topological order, so
/// the backward sweep is a single reverse pass.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var scalar_constant(double value);

  /// Transformed value of `p`, differentiable w.r.t. p.raw. Repeated calls
  /// with the same parameter name return the same node.
  Var param(const Param& p);

  /// Appends a node. `inputs` lists node ids whose gradients `backward`
  /// may accumulate into; the node needs a gradient iff any input does.
  Var push(std::string_view op, Matrix value, std::vector<int> inputs,
           BackwardFn backward);

  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad(int id) const { return nodes_[id].grad; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  /// Adds `g` into the gradient of node `id` (no-op for constants).
  void accumulate(int id, const Matrix& g);

  /// Reverse sweep from a 1x1 node. Returns d(loss)/d(raw) for each name in
  /// `params`; names the computation never touched map to zeros of the
  /// parameter's shape. Throws NonFinite naming the first node whose
  /// gradient is not finite.
  Gradients backward(Var loss, const std::vector<const Param*>& params);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::string_view op;
    Matrix value;
    Matrix grad;
    std::vector<int> inputs;
    BackwardFn backward;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<std::string, int> raw_leaves_;
  std::unordered_map<std::string, int> param_nodes_;
};

// Elementwise binary ops broadcast like numpy restricted to two dimensions:
// each dimension must match or be 1.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double b);
Var operator+(double a, Var b);
Var operator-(Var a, double b);
Var operator-(double a, Var b);
Var operator*(Var a, double b);
Var operator*(double a, Var b);
Var operator/(Var a, double b);
Var operator/(double a, Var b);

Var exp(Var a);
Var log(Var a);
Var cos(Var a);
Var sin(Var a);
Var sqrt(Var a);
Var square(Var a);
Var softplus(Var a);
Var sigmoid(Var a);
Var selu(Var a);

Var matmul(Var a, Var b);
Var transpose(Var a);

/// Sum of all entries, 1x1.
Var sum(Var a);
/// n×m → n×1.
Var row_sum(Var a);
/// n×m → 1×m.
Var col_sum(Var a);

Var col(Var a, Index j);
Var cols(Var a, Index start, Index count);
/// Square n×n → n×1.
Var diag(Var a);
/// Adds `value` to the diagonal of a square matrix.
Var add_diagonal(Var a, double value);

/// Strict lower triangle of `raw` plus softplus of its diagonal.
Var lower_positive(Var raw);

/// Lower Cholesky factor with jitter escalation (see nsgp::cholesky). The
/// jitter chosen on the forward pass is treated as a constant.
Var cholesky(Var a, double base_jitter = kDefaultJitter);
/// L⁻¹ b for lower-triangular L.
Var solve_lower(Var lower, Var b);
/// L⁻ᵀ b for lower-triangular L.
Var solve_lower_transpose(Var lower, Var b);

}  // namespace ad
}  // namespace nsgp
