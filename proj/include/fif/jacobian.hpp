#pragma once

#include <functional>

#include "fif/autodiff.hpp"
#include "fif/nets.hpp"

namespace fif {

/// A forward pass of one side of a NetworkPair kept on a tape for a later vjp.
/// Holds a pointer to the pair's parameter vector; the pair must outlive it.
struct Recorded {
  ad::Tape tape;
  ad::Var input;
  ad::Var output;
  int group = 0;

  const Matrix& value() const { return tape.value(output); }
};

/// Rows of x are samples.
Recorded eval(const NetworkPair& np, Side side, const Matrix& x);

struct VjpResult {
  Matrix input_grad;  // same shape as the recorded input
  Vector param_grad;  // summed over rows
};

/// Consumes the tape.
VjpResult vjp(Recorded& rec, const Matrix& cotangent);

struct JvpResult {
  Matrix y;
  Matrix jv;
};

/// Forward-mode product: row i of jv is J(x_i) t_i.
JvpResult jvp(const NetworkPair& np, Side side, const Matrix& x, const Matrix& t);

/// out x in Jacobian at a single point, assembled from basis jvps.
Matrix full_jacobian(const NetworkPair& np, Side side, const Vector& x);

/// Same Jacobian assembled row by row from vjps; an independent route.
Matrix full_jacobian_vjp(const NetworkPair& np, Side side, const Vector& x);

/// Per-sample Jacobians for every row of x, from one batched tangent sweep.
std::vector<Matrix> jacobians(const NetworkPair& np, Side side, const Matrix& x);

/// Central differences. Throws NumericalError on a non-finite function value.
Vector finite_diff_grad(const std::function<double(const Vector&)>& fn, const Vector& p,
                        double h = 1e-5);

}  // namespace fif
