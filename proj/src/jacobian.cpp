#include "fif/jacobian.hpp"

#include <cmath>

#include "fif/errors.hpp"

namespace fif {

namespace {

void require_width(const Matrix& x, int width, const char* what) {
  if (x.cols() != width) {
    throw DimensionError(std::string(what) + ": width " + std::to_string(x.cols()) +
                         ", expected " + std::to_string(width));
  }
}

}  // namespace

Recorded eval(const NetworkPair& np, Side side, const Matrix& x) {
  const Network& net = np.net(side);
  require_width(x, net.in_dim(), "eval");
  Recorded rec;
  rec.group = rec.tape.add_group(np.params(side));
  BoundNetwork bn(rec.tape, net, rec.group);
  rec.input = rec.tape.input(x);
  rec.output = bn.forward(rec.input).out;
  return rec;
}

VjpResult vjp(Recorded& rec, const Matrix& cotangent) {
  if (rec.tape.consumed()) throw std::logic_error("vjp: tape already consumed");
  const Matrix& y = rec.tape.value(rec.output);
  if (cotangent.rows() != y.rows() || cotangent.cols() != y.cols()) {
    throw DimensionError("vjp: cotangent shape does not match output");
  }
  ad::Gradients g = rec.tape.backward(rec.output, cotangent);
  return {g.input(rec.input), std::move(g.params[static_cast<std::size_t>(rec.group)])};
}

JvpResult jvp(const NetworkPair& np, Side side, const Matrix& x, const Matrix& t) {
  const Network& net = np.net(side);
  require_width(x, net.in_dim(), "jvp");
  require_width(t, net.in_dim(), "jvp tangent");
  if (t.rows() != x.rows()) throw DimensionError("jvp: tangent rows must match input rows");
  ad::Tape tape;
  BoundNetwork bn(tape, net, tape.add_group(np.params(side)));
  const Trace tr = bn.forward(tape.constant(x));
  const ad::Var jv = bn.tangent(tr, tape.constant(t));
  return {tape.value(tr.out), tape.value(jv)};
}

std::vector<Matrix> jacobians(const NetworkPair& np, Side side, const Matrix& x) {
  const Network& net = np.net(side);
  require_width(x, net.in_dim(), "jacobians");
  const int n = net.in_dim();
  const Eigen::Index rows = x.rows();
  Matrix basis(rows * n, n);
  for (Eigen::Index r = 0; r < rows; ++r) basis.middleRows(r * n, n).setIdentity();
  ad::Tape tape;
  BoundNetwork bn(tape, net, tape.add_group(np.params(side)));
  const Trace tr = bn.forward(tape.constant(x));
  const Matrix& cols = tape.value(bn.tangent(tr, tape.constant(basis), n));
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(rows));
  for (Eigen::Index r = 0; r < rows; ++r) out.push_back(cols.middleRows(r * n, n).transpose());
  return out;
}

Matrix full_jacobian(const NetworkPair& np, Side side, const Vector& x) {
  return jacobians(np, side, x.transpose()).front();
}

Matrix full_jacobian_vjp(const NetworkPair& np, Side side, const Vector& x) {
  const int out = np.net(side).out_dim();
  const Matrix xs = x.transpose().replicate(out, 1);
  Recorded rec = eval(np, side, xs);
  return vjp(rec, Matrix::Identity(out, out)).input_grad;
}

Vector finite_diff_grad(const std::function<double(const Vector&)>& fn, const Vector& p,
                        double h) {
  Vector g(p.size());
  Vector q = p;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    q(i) = p(i) + h;
    const double up = fn(q);
    q(i) = p(i) - h;
    const double down = fn(q);
    q(i) = p(i);
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError("finite_diff_grad: non-finite function value at coordinate " +
                           std::to_string(i));
    }
    g(i) = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace fif
