#include "fif/autodiff.hpp"

#include <cmath>
#include <stdexcept>

#include "fif/errors.hpp"

namespace fif::ad {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) +
                         "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                         "x" + std::to_string(b.cols()) + ")");
  }
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::ReLU: return "relu";
    case Activation::SiLU: return "silu";
    case Activation::Tanh: return "tanh";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity" || s == "linear") return Activation::Identity;
  if (s == "relu") return Activation::ReLU;
  if (s == "silu") return Activation::SiLU;
  if (s == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

Matrix apply_activation(const Matrix& a, Activation f) {
  switch (f) {
    case Activation::Identity: return a;
    case Activation::ReLU: return a.cwiseMax(0.0);
    case Activation::SiLU: return a.unaryExpr([](double x) { return x * sigmoid(x); });
    case Activation::Tanh: return a.array().tanh().matrix();
  }
  return a;
}

Matrix activation_d1(const Matrix& a, Activation f) {
  switch (f) {
    case Activation::Identity: return Matrix::Ones(a.rows(), a.cols());
    case Activation::ReLU: return a.unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; });
    case Activation::SiLU:
      return a.unaryExpr([](double x) {
        const double s = sigmoid(x);
        return s * (1.0 + x * (1.0 - s));
      });
    case Activation::Tanh:
      return a.unaryExpr([](double x) {
        const double t = std::tanh(x);
        return 1.0 - t * t;
      });
  }
  return a;
}

Matrix activation_d2(const Matrix& a, Activation f) {
  switch (f) {
    case Activation::Identity:
    case Activation::ReLU: return Matrix::Zero(a.rows(), a.cols());
    case Activation::SiLU:
      return a.unaryExpr([](double x) {
        const double s = sigmoid(x);
        return s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s));
      });
    case Activation::Tanh:
      return a.unaryExpr([](double x) {
        const double t = std::tanh(x);
        return -2.0 * t * (1.0 - t * t);
      });
  }
  return a;
}

const Matrix& Gradients::input(Var v) const {
  for (const auto& [id, g] : inputs) {
    if (id == v.id) return g;
  }
  throw std::out_of_range("Gradients::input: node is not an input leaf");
}

int Tape::add_group(const Vector& flat) {
  groups_.push_back(&flat);
  return static_cast<int>(groups_.size()) - 1;
}

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
    throw std::out_of_range("Tape: invalid node handle");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

Var Tape::param(int group, Eigen::Index offset, Eigen::Index rows, Eigen::Index cols) {
  if (group < 0 || group >= static_cast<int>(groups_.size())) {
    throw std::out_of_range("Tape::param: unknown parameter group");
  }
  const Vector& flat = *groups_[static_cast<std::size_t>(group)];
  if (offset + rows * cols > flat.size()) {
    throw DimensionError("Tape::param: block exceeds parameter vector");
  }
  Node n{Op::Param, Matrix(Eigen::Map<const RowMajor>(flat.data() + offset, rows, cols))};
  n.c = group;
  n.i0 = offset;
  return push(std::move(n));
}

Var Tape::constant(Matrix v) { return push(Node{Op::Constant, std::move(v)}); }

Var Tape::input(Matrix v) {
  Var out = push(Node{Op::Input, std::move(v)});
  inputs_.push_back(out.id);
  return out;
}

Var Tape::affine(Var x, Var w, Var b) {
  const Matrix& xv = node(x).value;
  const Matrix& wv = node(w).value;
  if (xv.cols() != wv.cols()) {
    throw DimensionError("affine: input width " + std::to_string(xv.cols()) +
                         " does not match weight columns " + std::to_string(wv.cols()));
  }
  Node n{Op::Affine, xv * wv.transpose()};
  if (b.valid()) {
    const Matrix& bv = node(b).value;
    if (bv.rows() != 1 || bv.cols() != wv.rows()) throw DimensionError("affine: bias shape");
    n.value.rowwise() += bv.row(0);
  }
  n.a = x.id;
  n.b = w.id;
  n.c = b.id;
  return push(std::move(n));
}

Var Tape::activation(Var a, Activation f) {
  Node n{Op::Act, apply_activation(node(a).value, f)};
  n.a = a.id;
  n.act = f;
  return push(std::move(n));
}

Var Tape::activation_grad(Var a, Activation f) {
  Node n{Op::ActGrad, activation_d1(node(a).value, f)};
  n.a = a.id;
  n.act = f;
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  require_same_shape(node(a).value, node(b).value, "add");
  Node n{Op::Add, node(a).value + node(b).value};
  n.a = a.id;
  n.b = b.id;
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(node(a).value, node(b).value, "sub");
  Node n{Op::Sub, node(a).value - node(b).value};
  n.a = a.id;
  n.b = b.id;
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  require_same_shape(node(a).value, node(b).value, "mul");
  Node n{Op::Mul, node(a).value.cwiseProduct(node(b).value)};
  n.a = a.id;
  n.b = b.id;
  return push(std::move(n));
}

Var Tape::scale(Var a, double c) {
  Node n{Op::Scale, c * node(a).value};
  n.a = a.id;
  n.scalar = c;
  return push(std::move(n));
}

Var Tape::stop_gradient(Var a) {
  Node n{Op::StopGrad, node(a).value};
  n.a = a.id;
  return push(std::move(n));
}

Var Tape::row_dot(Var a, Var b) {
  require_same_shape(node(a).value, node(b).value, "row_dot");
  Node n{Op::RowDot, node(a).value.cwiseProduct(node(b).value).rowwise().sum()};
  n.a = a.id;
  n.b = b.id;
  return push(std::move(n));
}

Var Tape::row_sqnorm(Var a) {
  Node n{Op::RowSqNorm, node(a).value.rowwise().squaredNorm()};
  n.a = a.id;
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  Node n{Op::Sum, Matrix::Constant(1, 1, node(a).value.sum())};
  n.a = a.id;
  return push(std::move(n));
}

Var Tape::repeat_rows(Var a, int k) {
  if (k < 1) throw std::invalid_argument("repeat_rows: k must be >= 1");
  if (k == 1) return a;
  const Matrix& av = node(a).value;
  Matrix out(av.rows() * k, av.cols());
  for (Eigen::Index r = 0; r < av.rows(); ++r) {
    for (int j = 0; j < k; ++j) out.row(r * k + j) = av.row(r);
  }
  Node n{Op::RepeatRows, std::move(out)};
  n.a = a.id;
  n.i0 = k;
  return push(std::move(n));
}

Var Tape::group_sum_rows(Var a, int k) {
  if (k < 1) throw std::invalid_argument("group_sum_rows: k must be >= 1");
  if (k == 1) return a;
  const Matrix& av = node(a).value;
  if (av.rows() % k != 0) throw DimensionError("group_sum_rows: rows not divisible by k");
  Matrix out = Matrix::Zero(av.rows() / k, av.cols());
  for (Eigen::Index r = 0; r < av.rows(); ++r) out.row(r / k) += av.row(r);
  Node n{Op::GroupSumRows, std::move(out)};
  n.a = a.id;
  n.i0 = k;
  return push(std::move(n));
}

Var Tape::slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  const Matrix& av = node(a).value;
  if (start < 0 || count < 0 || start + count > av.cols()) {
    throw DimensionError("slice_cols: range out of bounds");
  }
  Node n{Op::SliceCols, av.middleCols(start, count)};
  n.a = a.id;
  n.i0 = start;
  n.i1 = count;
  return push(std::move(n));
}

Var Tape::concat_cols(Var a, Var b) {
  const Matrix& av = node(a).value;
  const Matrix& bv = node(b).value;
  if (av.rows() != bv.rows()) throw DimensionError("concat_cols: row mismatch");
  Matrix out(av.rows(), av.cols() + bv.cols());
  out << av, bv;
  Node n{Op::ConcatCols, std::move(out)};
  n.a = a.id;
  n.b = b.id;
  return push(std::move(n));
}

const Matrix& Tape::value(Var v) const { return node(v).value; }

double Tape::scalar(Var v) const {
  const Matrix& m = node(v).value;
  if (m.size() != 1) throw DimensionError("Tape::scalar: node is not 1x1");
  return m(0, 0);
}

Gradients Tape::backward(Var out) {
  if (node(out).value.size() != 1) {
    throw DimensionError("Tape::backward: implicit seed requires a 1x1 output");
  }
  return backward(out, Matrix::Ones(1, 1));
}

Gradients Tape::backward(Var out, const Matrix& seed) {
  if (consumed_) throw std::logic_error("Tape::backward: tape already consumed");
  require_same_shape(seed, node(out).value, "backward seed");
  consumed_ = true;

  std::vector<Matrix> grad(nodes_.size());
  auto accumulate = [&](int id, const auto& g) {
    if (id < 0) return;
    // Constants and stop-gradient subgraphs never need gradients.
    const Op op = nodes_[static_cast<std::size_t>(id)].op;
    if (op == Op::Constant) return;
    Matrix& slot = grad[static_cast<std::size_t>(id)];
    if (slot.size() == 0) {
      slot = g;
    } else {
      slot += g;
    }
  };

  grad[static_cast<std::size_t>(out.id)] = seed;

  Gradients result;
  result.params.reserve(groups_.size());
  for (const Vector* g : groups_) result.params.push_back(Vector::Zero(g->size()));

  for (int i = out.id; i >= 0; --i) {
    Matrix& g = grad[static_cast<std::size_t>(i)];
    if (g.size() == 0) continue;
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    switch (n.op) {
      case Op::Param: {
        Vector& flat = result.params[static_cast<std::size_t>(n.c)];
        Eigen::Map<RowMajor>(flat.data() + n.i0, n.value.rows(), n.value.cols()) += g;
        break;
      }
      case Op::Constant:
      case Op::Input:
      case Op::StopGrad:
        break;
      case Op::Affine: {
        const Matrix& x = nodes_[static_cast<std::size_t>(n.a)].value;
        const Matrix& w = nodes_[static_cast<std::size_t>(n.b)].value;
        accumulate(n.a, g * w);
        accumulate(n.b, g.transpose() * x);
        if (n.c >= 0) accumulate(n.c, g.colwise().sum());
        break;
      }
      case Op::Act: {
        const Matrix& a = nodes_[static_cast<std::size_t>(n.a)].value;
        accumulate(n.a, g.cwiseProduct(activation_d1(a, n.act)));
        break;
      }
      case Op::ActGrad: {
        if (n.act == Activation::Identity || n.act == Activation::ReLU) break;
        const Matrix& a = nodes_[static_cast<std::size_t>(n.a)].value;
        accumulate(n.a, g.cwiseProduct(activation_d2(a, n.act)));
        break;
      }
      case Op::Add:
        accumulate(n.a, g);
        accumulate(n.b, g);
        break;
      case Op::Sub:
        accumulate(n.a, g);
        accumulate(n.b, -g);
        break;
      case Op::Mul:
        accumulate(n.a, g.cwiseProduct(nodes_[static_cast<std::size_t>(n.b)].value));
        accumulate(n.b, g.cwiseProduct(nodes_[static_cast<std::size_t>(n.a)].value));
        break;
      case Op::Scale:
        accumulate(n.a, n.scalar * g);
        break;
      case Op::RowDot: {
        const Matrix& av = nodes_[static_cast<std::size_t>(n.a)].value;
        const Matrix& bv = nodes_[static_cast<std::size_t>(n.b)].value;
        const Vector col = g.col(0);
        accumulate(n.a, col.asDiagonal() * bv);
        accumulate(n.b, col.asDiagonal() * av);
        break;
      }
      case Op::RowSqNorm: {
        const Matrix& av = nodes_[static_cast<std::size_t>(n.a)].value;
        const Vector col = 2.0 * g.col(0);
        accumulate(n.a, col.asDiagonal() * av);
        break;
      }
      case Op::Sum: {
        const Matrix& av = nodes_[static_cast<std::size_t>(n.a)].value;
        accumulate(n.a, Matrix::Constant(av.rows(), av.cols(), g(0, 0)));
        break;
      }
      case Op::RepeatRows: {
        const Eigen::Index k = n.i0;
        Matrix back = Matrix::Zero(g.rows() / k, g.cols());
        for (Eigen::Index r = 0; r < g.rows(); ++r) back.row(r / k) += g.row(r);
        accumulate(n.a, back);
        break;
      }
      case Op::GroupSumRows: {
        const Eigen::Index k = n.i0;
        Matrix back(g.rows() * k, g.cols());
        for (Eigen::Index r = 0; r < back.rows(); ++r) back.row(r) = g.row(r / k);
        accumulate(n.a, back);
        break;
      }
      case Op::SliceCols: {
        const Matrix& av = nodes_[static_cast<std::size_t>(n.a)].value;
        Matrix back = Matrix::Zero(av.rows(), av.cols());
        back.middleCols(n.i0, n.i1) = g;
        accumulate(n.a, back);
        break;
      }
      case Op::ConcatCols: {
        const Eigen::Index left = nodes_[static_cast<std::size_t>(n.a)].value.cols();
        accumulate(n.a, g.leftCols(left));
        accumulate(n.b, g.rightCols(g.cols() - left));
        break;
      }
    }
  }

  for (int id : inputs_) {
    const Matrix& v = nodes_[static_cast<std::size_t>(id)].value;
    Matrix gi = grad[static_cast<std::size_t>(id)];
    if (gi.size() == 0) gi = Matrix::Zero(v.rows(), v.cols());
    result.inputs.emplace_back(id, std::move(gi));
  }
  return result;
}

}  // namespace fif::ad
