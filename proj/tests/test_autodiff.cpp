#include <gtest/gtest.h>

#include "fif/autodiff.hpp"
#include "fif/errors.hpp"
#include "fif/jacobian.hpp"
#include "fif/nets.hpp"
#include "fif/rng.hpp"

namespace fif {
namespace {

using ad::Activation;

NetworkPair mlp(int D, int d, std::vector<int> hidden, Activation act, std::uint64_t seed) {
  ArchSpec s;
  s.D = D;
  s.d = d;
  s.hidden = std::move(hidden);
  s.activation = act;
  s.seed = seed;
  NetworkPair np = build(s);
  // Nonzero biases so bias paths are exercised.
  Rng rng(seed, {99});
  np.phi += 0.1 * rng.normal_matrix(np.phi.size(), 1);
  np.theta += 0.1 * rng.normal_matrix(np.theta.size(), 1);
  return np;
}

double rel(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(1e-300, b.norm()); }

TEST(Activation, NamesRoundTrip) {
  for (Activation a : {Activation::Identity, Activation::ReLU, Activation::SiLU, Activation::Tanh}) {
    EXPECT_EQ(ad::activation_from_string(ad::to_string(a)), a);
  }
  EXPECT_THROW(ad::activation_from_string("gelu"), std::invalid_argument);
}

TEST(Activation, DerivativesMatchDifferences) {
  const Matrix a = Vector::LinSpaced(10, -2.05, 2.05);
  const double h = 1e-6;
  for (Activation f : {Activation::Identity, Activation::SiLU, Activation::Tanh, Activation::ReLU}) {
    const Matrix fd1 = (ad::apply_activation(a.array() + h, f) - ad::apply_activation(a.array() - h, f)) / (2 * h);
    const Matrix fd2 = (ad::activation_d1(a.array() + h, f) - ad::activation_d1(a.array() - h, f)) / (2 * h);
    EXPECT_LT((fd1 - ad::activation_d1(a, f)).cwiseAbs().maxCoeff(), 1e-8) << ad::to_string(f);
    EXPECT_LT((fd2 - ad::activation_d2(a, f)).cwiseAbs().maxCoeff(), 1e-7) << ad::to_string(f);
  }
}

TEST(Tape, StopGradientHalvesProductDerivative) {
  ad::Tape t;
  Matrix x0(1, 1);
  x0 << 3.0;
  const ad::Var x = t.input(x0);
  const ad::Var y = t.mul(x, t.stop_gradient(x));
  EXPECT_DOUBLE_EQ(t.scalar(y), 9.0);
  const auto g = t.backward(t.sum(y));
  EXPECT_DOUBLE_EQ(g.input(x)(0, 0), 3.0);
}

TEST(Tape, StopGradientConstantFactor) {
  ad::Tape t;
  Matrix c0(1, 1), x0(1, 1);
  c0 << 2.5;
  x0 << -1.0;
  const ad::Var c = t.input(c0);
  const ad::Var x = t.input(x0);
  const auto g = t.backward(t.sum(t.mul(t.stop_gradient(c), x)));
  EXPECT_DOUBLE_EQ(g.input(x)(0, 0), 2.5);
  EXPECT_DOUBLE_EQ(g.input(c)(0, 0), 0.0);
}

TEST(Tape, StopGradientForwardIsBitIdentical) {
  Rng rng(1);
  const Matrix v = rng.normal_matrix(4, 3);
  ad::Tape t;
  const ad::Var a = t.input(v);
  const ad::Var s = t.stop_gradient(a);
  EXPECT_EQ(t.value(a), t.value(s));
  EXPECT_EQ(t.value(t.activation(a, Activation::SiLU)), t.value(t.activation(s, Activation::SiLU)));
}

TEST(Tape, SecondBackwardThrows) {
  ad::Tape t;
  const ad::Var x = t.input(Matrix::Ones(1, 1));
  const ad::Var y = t.sum(x);
  (void)t.backward(y);
  EXPECT_TRUE(t.consumed());
  EXPECT_THROW((void)t.backward(y), std::logic_error);
}

TEST(Tape, PrimitivesAgreeWithFiniteDifferences) {
  // A scalar built from every primitive; gradient wrt the input checked by FD.
  Rng rng(2);
  const Matrix w0 = rng.normal_matrix(3, 4);
  const Matrix x0 = rng.normal_matrix(2, 4);
  auto build_scalar = [&](ad::Tape& t, const Matrix& xv, ad::Var* xout) {
    const ad::Var x = t.input(xv);
    if (xout) *xout = x;
    const ad::Var w = t.constant(w0);
    const ad::Var a = t.affine(x, w);
    const ad::Var h = t.activation(a, Activation::Tanh);
    const ad::Var s = t.activation_grad(a, Activation::SiLU);
    const ad::Var r = t.repeat_rows(t.slice_cols(h, 1, 2), 2);
    const ad::Var q = t.group_sum_rows(t.mul(r, r), 2);
    const ad::Var c = t.concat_cols(q, t.scale(s, 0.5));
    const ad::Var dots = t.row_dot(c, t.sub(c, t.add(c, c)));
    return t.sum(t.add(dots, t.row_sqnorm(h)));
  };
  ad::Tape t;
  ad::Var x;
  const ad::Var out = build_scalar(t, x0, &x);
  const Matrix g = t.backward(out).input(x);
  Vector p = Eigen::Map<const Vector>(x0.data(), x0.size());
  const Vector fd = finite_diff_grad(
      [&](const Vector& v) {
        ad::Tape tt;
        return tt.scalar(build_scalar(tt, Eigen::Map<const Matrix>(v.data(), 2, 4), nullptr));
      },
      p, 1e-6);
  EXPECT_LT((Eigen::Map<const Vector>(g.data(), g.size()) - fd).norm() / fd.norm(), 1e-7);
}

TEST(Eval, IdentityLinearNetPassesInputThrough) {
  const NetworkPair np = linear_pair(Matrix::Identity(3, 3));
  Rng rng(3);
  const Matrix x = rng.normal_matrix(5, 3);
  EXPECT_TRUE(eval(np, Side::Encoder, x).value().isApprox(x));
}

TEST(Eval, DiagonalLinearLayer) {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 2.0;
  a(1, 1) = 3.0;
  const NetworkPair np = linear_pair(a);
  const Matrix y = eval(np, Side::Encoder, Matrix::Ones(1, 2)).value();
  EXPECT_DOUBLE_EQ(y(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(y(0, 1), 3.0);
}

TEST(Eval, TwoLayerMatchesHandComposition) {
  NetworkPair np = mlp(3, 2, {4}, Activation::Tanh, 4);
  const Matrix w1 = layer_weight(np, Side::Encoder, 0);
  const Matrix w2 = layer_weight(np, Side::Encoder, 1);
  const Eigen::Index b1 = w1.size();
  const Vector bias1 = np.phi.segment(b1, 4);
  const Vector bias2 = np.phi.segment(b1 + 4 + w2.size(), 2);
  const Vector x = (Vector(3) << 0.3, -1.2, 0.8).finished();
  const Vector h = (w1 * x + bias1).array().tanh();
  const Vector expect = w2 * h + bias2;
  const Matrix y = eval(np, Side::Encoder, x.transpose()).value();
  EXPECT_LT((y.row(0).transpose() - expect).norm(), 1e-14);
}

TEST(Eval, RejectsWrongWidth) {
  const NetworkPair np = linear_pair(Matrix::Identity(2, 2));
  EXPECT_THROW(eval(np, Side::Encoder, Matrix::Ones(1, 3)), DimensionError);
}

TEST(Vjp, LinearLayerInputGradient) {
  Rng rng(5);
  const Matrix a = rng.normal_matrix(2, 4);
  const NetworkPair np = linear_pair(a);
  Recorded rec = eval(np, Side::Encoder, rng.normal_matrix(1, 4));
  const Matrix v = rng.normal_matrix(1, 2);
  const VjpResult r = vjp(rec, v);
  EXPECT_LT((r.input_grad - v * a).norm(), 1e-13);
}

TEST(Vjp, IdentityNetBasisVector) {
  const NetworkPair np = linear_pair(Matrix::Identity(3, 3));
  Recorded rec = eval(np, Side::Encoder, Matrix::Zero(1, 3));
  Matrix e1 = Matrix::Zero(1, 3);
  e1(0, 0) = 1.0;
  EXPECT_EQ(vjp(rec, e1).input_grad, e1);
}

TEST(Vjp, ConsumedTapeThrows) {
  const NetworkPair np = linear_pair(Matrix::Identity(2, 2));
  Recorded rec = eval(np, Side::Encoder, Matrix::Zero(1, 2));
  (void)vjp(rec, Matrix::Ones(1, 2));
  EXPECT_THROW((void)vjp(rec, Matrix::Ones(1, 2)), std::logic_error);
}

TEST(Vjp, RandomMlpMatchesFiniteDifferences) {
  for (Activation act : {Activation::Tanh, Activation::SiLU}) {
    NetworkPair np = mlp(4, 2, {8, 6}, act, 6);
    Rng rng(7);
    const Matrix x = rng.normal_matrix(3, 4);
    const Matrix c = rng.normal_matrix(3, 2);
    Recorded rec = eval(np, Side::Encoder, x);
    const VjpResult r = vjp(rec, c);

    auto objective_params = [&](const Vector& p) {
      NetworkPair q = np;
      q.phi = p;
      return (q.encode(x).array() * c.array()).sum();
    };
    const Vector fdp = finite_diff_grad(objective_params, np.phi);
    EXPECT_LT((r.param_grad - fdp).norm() / fdp.norm(), 1e-5);

    const Vector xflat = Eigen::Map<const Vector>(x.data(), x.size());
    const Vector fdx = finite_diff_grad(
        [&](const Vector& v) {
          return (np.encode(Eigen::Map<const Matrix>(v.data(), 3, 4)).array() * c.array()).sum();
        },
        xflat);
    EXPECT_LT((Eigen::Map<const Vector>(r.input_grad.data(), r.input_grad.size()) - fdx).norm() /
                  fdx.norm(),
              1e-5);
  }
}

TEST(Jvp, IdentityNetReturnsTangent) {
  const NetworkPair np = linear_pair(Matrix::Identity(3, 3));
  Rng rng(8);
  const Matrix t = rng.normal_matrix(2, 3);
  EXPECT_TRUE(jvp(np, Side::Encoder, rng.normal_matrix(2, 3), t).jv.isApprox(t));
}

TEST(Jvp, LinearLayer) {
  Rng rng(9);
  const Matrix a = rng.normal_matrix(2, 5);
  const NetworkPair np = linear_pair(a);
  const Matrix t = rng.normal_matrix(1, 5);
  const JvpResult r = jvp(np, Side::Encoder, rng.normal_matrix(1, 5), t);
  EXPECT_LT((r.jv - t * a.transpose()).norm(), 1e-13);
}

TEST(Jvp, RandomMlpMatchesFullJacobian) {
  NetworkPair np = mlp(5, 3, {7, 7}, Activation::SiLU, 10);
  Rng rng(11);
  const Vector x = rng.normal_matrix(5, 1);
  const Vector v = rng.normal_matrix(5, 1);
  const Matrix j = full_jacobian(np, Side::Encoder, x);
  const JvpResult r = jvp(np, Side::Encoder, x.transpose(), v.transpose());
  EXPECT_LT((r.jv.row(0).transpose() - j * v).norm(), 1e-10);
  EXPECT_LT((r.y - np.encode(x.transpose())).norm(), 1e-14);
}

TEST(Jvp, AdjointToVjp) {
  for (Side side : {Side::Encoder, Side::Decoder}) {
    NetworkPair np = mlp(6, 2, {5}, Activation::Tanh, 12);
    const int in = np.net(side).in_dim();
    const int out = np.net(side).out_dim();
    Rng rng(13);
    const Matrix x = rng.normal_matrix(1, in);
    const Matrix v = rng.normal_matrix(1, in);
    const Matrix c = rng.normal_matrix(1, out);
    const double lhs = (c.array() * jvp(np, side, x, v).jv.array()).sum();
    Recorded rec = eval(np, side, x);
    const double rhs = (vjp(rec, c).input_grad.array() * v.array()).sum();
    EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(FullJacobian, LinearLayerAndIdentity) {
  Rng rng(14);
  const Matrix a = rng.normal_matrix(2, 3);
  const NetworkPair np = linear_pair(a);
  EXPECT_LT((full_jacobian(np, Side::Encoder, Vector::Zero(3)) - a).norm(), 1e-14);
  const NetworkPair id = linear_pair(Matrix::Identity(4, 4));
  EXPECT_LT((full_jacobian(id, Side::Decoder, Vector::Ones(4)) - Matrix::Identity(4, 4)).norm(), 1e-14);
}

TEST(FullJacobian, ForwardAndReverseAssemblyAgree) {
  for (Activation act : {Activation::ReLU, Activation::SiLU, Activation::Tanh}) {
    NetworkPair np = mlp(6, 3, {9, 9}, act, 15);
    Rng rng(16);
    for (Side side : {Side::Encoder, Side::Decoder}) {
      const Vector x = rng.normal_matrix(np.net(side).in_dim(), 1);
      EXPECT_LT((full_jacobian(np, side, x) - full_jacobian_vjp(np, side, x)).norm(), 1e-10);
    }
  }
}

TEST(FullJacobian, ChainRuleOnComposition) {
  NetworkPair np = mlp(5, 2, {6}, Activation::Tanh, 17);
  Rng rng(18);
  const Vector x = rng.normal_matrix(5, 1);
  const Vector z = np.encode(x.transpose()).row(0).transpose();
  const Matrix chain = full_jacobian(np, Side::Decoder, z) * full_jacobian(np, Side::Encoder, x);
  // Composite Jacobian of g(f(x)) by direct column differences is too loose;
  // use a tangent pushed through both sides in forward mode instead.
  Matrix composite(5, 5);
  for (int i = 0; i < 5; ++i) {
    const Matrix e = Matrix::Identity(5, 5).row(i);
    const Matrix tz = jvp(np, Side::Encoder, x.transpose(), e).jv;
    composite.col(i) = jvp(np, Side::Decoder, z.transpose(), tz).jv.row(0).transpose();
  }
  EXPECT_LT((chain - composite).norm(), 1e-10);
}

TEST(Jacobians, BatchedMatchesPointwise) {
  NetworkPair np = mlp(4, 2, {5}, Activation::SiLU, 19);
  Rng rng(20);
  const Matrix x = rng.normal_matrix(3, 4);
  const auto js = jacobians(np, Side::Encoder, x);
  ASSERT_EQ(js.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_LT((js[i] - full_jacobian(np, Side::Encoder, x.row(i).transpose())).norm(), 1e-12);
  }
}

TEST(FiniteDiff, QuadraticAndProduct) {
  const Vector g1 = finite_diff_grad([](const Vector& p) { return 0.5 * p.squaredNorm(); },
                                     (Vector(2) << 1.0, 2.0).finished());
  EXPECT_NEAR(g1(0), 1.0, 1e-9);
  EXPECT_NEAR(g1(1), 2.0, 1e-9);
  const Vector g2 = finite_diff_grad([](const Vector& p) { return p(0) * p(1); },
                                     (Vector(2) << 3.0, 4.0).finished());
  EXPECT_NEAR(g2(0), 4.0, 1e-9);
  EXPECT_NEAR(g2(1), 3.0, 1e-9);
}

TEST(FiniteDiff, NonFiniteValueThrows) {
  EXPECT_THROW(finite_diff_grad([](const Vector& p) { return std::log(p(0)); },
                                (Vector(1) << 0.0).finished()),
               NumericalError);
}

}  // namespace
}  // namespace fif
