#include "nsgp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "nsgp/errors.hpp"

namespace nsgp {

std::string_view to_string(Constraint c) {
  switch (c) {
    case Constraint::kNone:
      return "none";
    case Constraint::kPositive:
      return "positive";
    case Constraint::kLowerTriangular:
      return "lower-triangular";
  }
  return "none";
}

Constraint constraint_from_string(std::string_view s) {
  if (s == "none") return Constraint::kNone;
  if (s == "positive") return Constraint::kPositive;
  if (s == "lower-triangular") return Constraint::kLowerTriangular;
  throw InvalidArgument("unknown constraint '" + std::string(s) + "'");
}

double softplus(double x) {
  // log(1 + e^x) without overflow for large x.
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double inverse_softplus(double y) {
  if (!(y > 0.0)) throw ConstraintViolation("inverse_softplus of non-positive value");
  return y > 30.0 ? y + std::log(-std::expm1(-y)) : std::log(std::expm1(y));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConstraintViolation("logit outside (0, 1)");
  return std::log(p) - std::log1p(-p);
}

Matrix transform(Constraint c, const Matrix& raw) {
  switch (c) {
    case Constraint::kNone:
      return raw;
    case Constraint::kPositive:
      return raw.unaryExpr([](double x) { return softplus(x); });
    case Constraint::kLowerTriangular: {
      if (raw.rows() != raw.cols()) throw DimensionMismatch("lower-triangular param must be square");
      Matrix out = raw.triangularView<Eigen::StrictlyLower>();
      for (Index i = 0; i < raw.rows(); ++i) out(i, i) = softplus(raw(i, i));
      return out;
    }
  }
  return raw;
}

Matrix inverse_transform(Constraint c, const Matrix& value) {
  switch (c) {
    case Constraint::kNone:
      return value;
    case Constraint::kPositive:
      return value.unaryExpr([](double y) { return inverse_softplus(y); });
    case Constraint::kLowerTriangular: {
      if (value.rows() != value.cols()) throw DimensionMismatch("lower-triangular param must be square");
      Matrix out = value.triangularView<Eigen::StrictlyLower>();
      for (Index i = 0; i < value.rows(); ++i) out(i, i) = inverse_softplus(value(i, i));
      return out;
    }
  }
  return value;
}

Matrix Param::value() const { return transform(constraint, raw); }

Param Param::from_value(std::string name, const Matrix& value, Constraint constraint) {
  return Param{std::move(name), inverse_transform(constraint, value), constraint};
}

namespace ad {

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw DimensionMismatch("scalar() on a non-1x1 node");
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  return push("constant", std::move(value), {}, nullptr);
}

Var Tape::scalar_constant(double value) {
  return constant(Matrix::Constant(1, 1, value));
}

Var Tape::push(std::string_view op, Matrix value, std::vector<int> inputs,
               BackwardFn backward) {
  Node node;
  node.op = op;
  node.value = std::move(value);
  node.needs_grad = std::any_of(inputs.begin(), inputs.end(),
                                [this](int i) { return nodes_[i].needs_grad; });
  node.inputs = std::move(inputs);
  if (node.needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(const Param& p) {
  if (auto it = param_nodes_.find(p.name); it != param_nodes_.end()) {
    return Var(this, it->second);
  }
  Node leaf;
  leaf.op = "param";
  leaf.value = p.raw;
  leaf.needs_grad = true;
  nodes_.push_back(std::move(leaf));
  Var raw(this, static_cast<int>(nodes_.size()) - 1);
  raw_leaves_[p.name] = raw.id();

  Var out = raw;
  switch (p.constraint) {
    case Constraint::kNone:
      break;
    case Constraint::kPositive:
      out = softplus(raw);
      break;
    case Constraint::kLowerTriangular:
      out = lower_positive(raw);
      break;
  }
  param_nodes_[p.name] = out.id();
  return out;
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& node = nodes_[id];
  if (!node.needs_grad) return;
  if (node.grad.size() == 0) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

Gradients Tape::backward(Var loss, const std::vector<const Param*>& params) {
  if (loss.tape() != this) throw InvalidArgument("backward: loss belongs to another tape");
  if (loss.value().size() != 1) throw DimensionMismatch("backward: loss must be 1x1");

  for (Node& n : nodes_) n.grad.resize(0, 0);
  accumulate(loss.id(), Matrix::Ones(1, 1));

  for (int id = loss.id(); id >= 0; --id) {
    Node& node = nodes_[id];
    if (!node.needs_grad || node.grad.size() == 0) continue;
    if (!node.grad.allFinite()) {
      throw NonFinite("non-finite gradient at node " + std::to_string(id) +
                      " (op '" + std::string(node.op) + "')");
    }
    if (!node.backward) continue;
    node.backward(*this, id);
    for (int in : nodes_[id].inputs) {
      const Matrix& g = nodes_[in].grad;
      if (g.size() != 0 && !g.allFinite()) {
        throw NonFinite("non-finite gradient produced by node " + std::to_string(id) +
                        " (op '" + std::string(nodes_[id].op) + "')");
      }
    }
  }

  Gradients grads;
  for (const Param* p : params) {
    auto it = raw_leaves_.find(p->name);
    if (it != raw_leaves_.end() && nodes_[it->second].grad.size() != 0) {
      grads[p->name] = nodes_[it->second].grad;
    } else {
      grads[p->name] = Matrix::Zero(p->raw.rows(), p->raw.cols());
    }
  }
  return grads;
}

namespace {

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw InvalidArgument("operation on an empty Var");
  return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw InvalidArgument("operands live on different tapes");
  return tape_of(a);
}

Index broadcast_dim(Index a, Index b, const char* op) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  throw DimensionMismatch(std::string(op) + ": cannot broadcast " +
                          std::to_string(a) + " against " + std::to_string(b));
}

Matrix expand(const Matrix& m, Index rows, Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  if (m.size() == 1) return Matrix::Constant(rows, cols, m(0, 0));
  if (m.rows() == rows) return m.replicate(1, cols);
  return m.replicate(rows, 1);
}

// Sums a broadcast gradient back down to the operand's shape.
Matrix reduce(const Matrix& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Matrix::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

template <class Forward, class GradA, class GradB>
Var binary(std::string_view op, Var a, Var b, Forward f, GradA ga, GradB gb) {
  Tape& t = tape_of(a, b);
  const Index r = broadcast_dim(a.rows(), b.rows(), op.data());
  const Index c = broadcast_dim(a.cols(), b.cols(), op.data());
  Matrix av = expand(a.value(), r, c);
  Matrix bv = expand(b.value(), r, c);
  Matrix out = f(av, bv);
  const int ia = a.id();
  const int ib = b.id();
  return t.push(op, std::move(out), {ia, ib},
                [ia, ib, ga, gb, av = std::move(av), bv = std::move(bv)](Tape& tp, int self) {
                  const Matrix& g = tp.grad(self);
                  if (tp.needs_grad(ia)) {
                    const Matrix& v = tp.value(ia);
                    tp.accumulate(ia, reduce(ga(g, av, bv, tp.value(self)), v.rows(), v.cols()));
                  }
                  if (tp.needs_grad(ib)) {
                    const Matrix& v = tp.value(ib);
                    tp.accumulate(ib, reduce(gb(g, av, bv, tp.value(self)), v.rows(), v.cols()));
                  }
                });
}

// `df(x, y)` is the derivative given input x and output y.
template <class F, class DF>
Var unary(std::string_view op, Var a, F f, DF df) {
  Tape& t = tape_of(a);
  Matrix out = a.value().unaryExpr(f);
  const int ia = a.id();
  return t.push(op, std::move(out), {ia}, [ia, df](Tape& tp, int self) {
    const Matrix& x = tp.value(ia);
    const Matrix& y = tp.value(self);
    tp.accumulate(ia, tp.grad(self).cwiseProduct(x.binaryExpr(y, df)));
  });
}

constexpr double kSeluLambda = 1.0507009873554805;
constexpr double kSeluAlpha = 1.6732632423543772;

}  // namespace

Var operator+(Var a, Var b) {
  return binary(
      "add", a, b, [](const Matrix& x, const Matrix& y) -> Matrix { return x + y; },
      [](const Matrix& g, const Matrix&, const Matrix&, const Matrix&) { return g; },
      [](const Matrix& g, const Matrix&, const Matrix&, const Matrix&) { return g; });
}

Var operator-(Var a, Var b) {
  return binary(
      "sub", a, b, [](const Matrix& x, const Matrix& y) -> Matrix { return x - y; },
      [](const Matrix& g, const Matrix&, const Matrix&, const Matrix&) { return g; },
      [](const Matrix& g, const Matrix&, const Matrix&, const Matrix&) -> Matrix { return -g; });
}

Var operator*(Var a, Var b) {
  return binary(
      "mul", a, b,
      [](const Matrix& x, const Matrix& y) -> Matrix { return x.cwiseProduct(y); },
      [](const Matrix& g, const Matrix&, const Matrix& y, const Matrix&) -> Matrix {
        return g.cwiseProduct(y);
      },
      [](const Matrix& g, const Matrix& x, const Matrix&, const Matrix&) -> Matrix {
        return g.cwiseProduct(x);
      });
}

Var operator/(Var a, Var b) {
  return binary(
      "div", a, b,
      [](const Matrix& x, const Matrix& y) -> Matrix { return x.cwiseQuotient(y); },
      [](const Matrix& g, const Matrix&, const Matrix& y, const Matrix&) -> Matrix {
        return g.cwiseQuotient(y);
      },
      [](const Matrix& g, const Matrix&, const Matrix& y, const Matrix& out) -> Matrix {
        return -g.cwiseProduct(out).cwiseQuotient(y);
      });
}

Var operator-(Var a) {
  return unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var operator+(Var a, double b) { return a + tape_of(a).scalar_constant(b); }
Var operator+(double a, Var b) { return tape_of(b).scalar_constant(a) + b; }
Var operator-(Var a, double b) { return a - tape_of(a).scalar_constant(b); }
Var operator-(double a, Var b) { return tape_of(b).scalar_constant(a) - b; }
Var operator/(double a, Var b) { return tape_of(b).scalar_constant(a) / b; }

Var operator*(Var a, double b) {
  return unary("scale", a, [b](double x) { return b * x; }, [b](double, double) { return b; });
}
Var operator*(double a, Var b) { return b * a; }
Var operator/(Var a, double b) { return a * (1.0 / b); }

Var exp(Var a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary("log", a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Var cos(Var a) {
  return unary("cos", a, [](double x) { return std::cos(x); },
               [](double x, double) { return -std::sin(x); });
}

Var sin(Var a) {
  return unary("sin", a, [](double x) { return std::sin(x); },
               [](double x, double) { return std::cos(x); });
}

Var sqrt(Var a) {
  return unary("sqrt", a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}

Var square(Var a) {
  return unary("square", a, [](double x) { return x * x; },
               [](double x, double) { return 2.0 * x; });
}

Var softplus(Var a) {
  return unary("softplus", a, [](double x) { return nsgp::softplus(x); },
               [](double x, double) { return nsgp::sigmoid(x); });
}

Var sigmoid(Var a) {
  return unary("sigmoid", a, [](double x) { return nsgp::sigmoid(x); },
               [](double, double y) { return y * (1.0 - y); });
}

Var selu(Var a) {
  return unary(
      "selu", a,
      [](double x) { return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * std::expm1(x); },
      [](double x, double) {
        return x > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(x);
      });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) {
    throw DimensionMismatch("matmul: " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " times " +
                            std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  const int ia = a.id();
  const int ib = b.id();
  Matrix out = a.value() * b.value();
  return t.push("matmul", std::move(out), {ia, ib}, [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    if (tp.needs_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
    if (tp.needs_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.push("transpose", a.value().transpose(), {ia}, [ia](Tape& tp, int self) {
    tp.accumulate(ia, tp.grad(self).transpose());
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.push("sum", Matrix::Constant(1, 1, a.value().sum()), {ia},
                [ia](Tape& tp, int self) {
                  const Matrix& v = tp.value(ia);
                  tp.accumulate(ia, Matrix::Constant(v.rows(), v.cols(), tp.grad(self)(0, 0)));
                });
}

Var row_sum(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.push("row_sum", a.value().rowwise().sum(), {ia}, [ia](Tape& tp, int self) {
    tp.accumulate(ia, tp.grad(self).replicate(1, tp.value(ia).cols()));
  });
}

Var col_sum(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.push("col_sum", a.value().colwise().sum(), {ia}, [ia](Tape& tp, int self) {
    tp.accumulate(ia, tp.grad(self).replicate(tp.value(ia).rows(), 1));
  });
}

Var cols(Var a, Index start, Index count) {
  Tape& t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw DimensionMismatch("cols: range out of bounds");
  }
  const int ia = a.id();
  return t.push("cols", a.value().middleCols(start, count), {ia},
                [ia, start, count](Tape& tp, int self) {
                  const Matrix& v = tp.value(ia);
                  Matrix g = Matrix::Zero(v.rows(), v.cols());
                  g.middleCols(start, count) = tp.grad(self);
                  tp.accumulate(ia, g);
                });
}

Var col(Var a, Index j) { return cols(a, j, 1); }

Var diag(Var a) {
  Tape& t = tape_of(a);
  if (a.rows() != a.cols()) throw DimensionMismatch("diag: matrix not square");
  const int ia = a.id();
  return t.push("diag", a.value().diagonal(), {ia}, [ia](Tape& tp, int self) {
    const Index n = tp.value(ia).rows();
    Matrix g = Matrix::Zero(n, n);
    g.diagonal() = tp.grad(self).col(0);
    tp.accumulate(ia, g);
  });
}

Var add_diagonal(Var a, double value) {
  Tape& t = tape_of(a);
  if (a.rows() != a.cols()) throw DimensionMismatch("add_diagonal: matrix not square");
  const int ia = a.id();
  Matrix out = a.value();
  out.diagonal().array() += value;
  return t.push("add_diagonal", std::move(out), {ia},
                [ia](Tape& tp, int self) { tp.accumulate(ia, tp.grad(self)); });
}

Var lower_positive(Var raw) {
  Tape& t = tape_of(raw);
  const int ia = raw.id();
  Matrix out = transform(Constraint::kLowerTriangular, raw.value());
  return t.push("lower_positive", std::move(out), {ia}, [ia](Tape& tp, int self) {
    const Matrix& r = tp.value(ia);
    Matrix g = tp.grad(self).triangularView<Eigen::StrictlyLower>();
    for (Index i = 0; i < r.rows(); ++i) g(i, i) = tp.grad(self)(i, i) * nsgp::sigmoid(r(i, i));
    tp.accumulate(ia, g);
  });
}

Var cholesky(Var a, double base_jitter) {
  Tape& t = tape_of(a);
  CholeskyFactor factor = nsgp::cholesky(a.value(), base_jitter);
  const int ia = a.id();
  // The jitter is proportional to mean(diag A) when that mean is positive.
  const double mean_diag = a.value().rows() > 0 ? a.value().diagonal().mean() : 0.0;
  const double jitter_slope =
      mean_diag > 0.0 ? factor.jitter_used / mean_diag / static_cast<double>(a.rows()) : 0.0;
  return t.push("cholesky", std::move(factor.lower), {ia}, [ia, jitter_slope](Tape& tp, int self) {
    // Symmetric adjoint of A = L Lᵀ:
    //   Φ(P) = tril(P) with halved diagonal, P = Lᵀ L̄,
    //   Ā = ½ (S + Sᵀ), S = L⁻ᵀ Φ(P) L⁻¹.
    const Matrix& lower = tp.value(self);
    const auto tri = lower.triangularView<Eigen::Lower>();
    Matrix phi = (lower.transpose() * tp.grad(self)).triangularView<Eigen::Lower>();
    phi.diagonal() *= 0.5;
    Matrix s = tri.transpose().solve(phi);                       // L⁻ᵀ Φ
    s = tri.transpose().solve(s.transpose()).transpose();        // (L⁻ᵀ (L⁻ᵀ Φ)ᵀ)ᵀ = L⁻ᵀ Φ L⁻¹
    Matrix a_bar = 0.5 * (s + s.transpose());
    a_bar.diagonal().array() += jitter_slope * a_bar.trace();
    tp.accumulate(ia, a_bar);
  });
}

Var solve_lower(Var lower, Var b) {
  Tape& t = tape_of(lower, b);
  if (lower.rows() != lower.cols() || lower.rows() != b.rows()) {
    throw DimensionMismatch("solve_lower: shape mismatch");
  }
  const int il = lower.id();
  const int ib = b.id();
  Matrix x = lower.value().triangularView<Eigen::Lower>().solve(b.value());
  return t.push("solve_lower", std::move(x), {il, ib}, [il, ib](Tape& tp, int self) {
    // L X = B:  B̄ = L⁻ᵀ X̄,  L̄ = −tril(B̄ Xᵀ).
    const auto tri = tp.value(il).triangularView<Eigen::Lower>();
    Matrix b_bar = tri.transpose().solve(tp.grad(self));
    if (tp.needs_grad(il)) {
      Matrix l_bar = -(b_bar * tp.value(self).transpose());
      tp.accumulate(il, l_bar.triangularView<Eigen::Lower>().toDenseMatrix());
    }
    if (tp.needs_grad(ib)) tp.accumulate(ib, b_bar);
  });
}

Var solve_lower_transpose(Var lower, Var b) {
  Tape& t = tape_of(lower, b);
  if (lower.rows() != lower.cols() || lower.rows() != b.rows()) {
    throw DimensionMismatch("solve_lower_transpose: shape mismatch");
  }
  const int il = lower.id();
  const int ib = b.id();
  Matrix x = lower.value().triangularView<Eigen::Lower>().transpose().solve(b.value());
  return t.push("solve_lower_transpose", std::move(x), {il, ib}, [il, ib](Tape& tp, int self) {
    // Lᵀ X = B:  B̄ = L⁻¹ X̄,  L̄ = −tril(X B̄ᵀ).
    const auto tri = tp.value(il).triangularView<Eigen::Lower>();
    Matrix b_bar = tri.solve(tp.grad(self));
    if (tp.needs_grad(il)) {
      Matrix l_bar = -(tp.value(self) * b_bar.transpose());
      tp.accumulate(il, l_bar.triangularView<Eigen::Lower>().toDenseMatrix());
    }
    if (tp.needs_grad(ib)) tp.accumulate(ib, b_bar);
  });
}

}  // namespace ad
}  // namespace nsgp
