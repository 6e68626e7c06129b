#include "fif/linear_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fif/errors.hpp"

namespace fif {

namespace {

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) throw DimensionError(std::string(what) + ": Sigma must be square");
}

Matrix orthonormal_basis(const Matrix& s) {
  const linalg::Svd d = linalg::svd(s);
  if (d.s.size() == 0 || !(d.s(d.s.size() - 1) > 1e-12 * d.s(0))) {
    throw RankCollapseError("principal_angles: columns are not linearly independent");
  }
  return d.u;
}

}  // namespace

double selection_score(double lambda, double sigma2) { return std::log(lambda) - lambda / sigma2; }

double selection_loss(const Vector& lambda, const Eigen::VectorXi& alpha, double sigma2) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (alpha(i) != 0) acc += 0.5 * selection_score(lambda(i), sigma2);
  }
  return acc;
}

LinearOracleSolution optimal_selection(const Matrix& sigma, double sigma2, int d) {
  require_square(sigma, "optimal_selection");
  if (d < 1 || d > sigma.rows()) throw std::invalid_argument("optimal_selection: need 1 <= d <= D");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("optimal_selection: sigma2 must be positive");
  const linalg::SymEig e = linalg::sym_eig(sigma);
  const Eigen::Index n = e.values.size();
  if (!(e.values(n - 1) > 1e-12 * std::max(e.values(0), 1e-300))) {
    throw RankCollapseError("optimal_selection: Sigma is rank deficient; add noise upstream");
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  // Eigenvalues are descending, so a stable sort keeps larger ones first on ties.
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return selection_score(e.values(a), sigma2) < selection_score(e.values(b), sigma2);
  });
  LinearOracleSolution sol;
  sol.lambda = e.values;
  sol.v = e.vectors;
  sol.alpha = Eigen::VectorXi::Zero(n);
  for (int i = 0; i < d; ++i) sol.alpha(order[static_cast<std::size_t>(i)]) = 1;
  sol.loss_alpha = selection_loss(sol.lambda, sol.alpha, sigma2);
  sol.subspace.resize(n, d);
  for (Eigen::Index i = 0, c = 0; i < n; ++i) {
    if (sol.alpha(i) != 0) sol.subspace.col(c++) = sol.v.col(i);
  }
  return sol;
}

double closed_form_loss(const Matrix& a, const Matrix& sigma, double sigma2) {
  require_square(sigma, "closed_form_loss");
  if (a.cols() != sigma.rows()) throw DimensionError("closed_form_loss: A and Sigma disagree");
  const Matrix aat = a * a.transpose();
  const Eigen::LDLT<Matrix> ldlt(aat);
  const Vector diag = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success || !(diag.minCoeff() > 0.0)) {
    throw RankCollapseError("closed_form_loss: A is rank deficient");
  }
  const double logdet = diag.array().log().sum();
  const Matrix proj = Matrix::Identity(a.cols(), a.cols()) - linalg::pinv(a) * a;
  return 0.5 * (a * sigma * a.transpose()).trace() - 0.5 * logdet +
         (sigma * proj).trace() / (2.0 * sigma2);
}

Matrix closed_form_grad(const Matrix& a, const Matrix& sigma, double sigma2) {
  require_square(sigma, "closed_form_grad");
  const Matrix ap = linalg::pinv(a);
  const Matrix proj = Matrix::Identity(a.cols(), a.cols()) - ap * a;
  const Matrix g = sigma * a.transpose() - ap - (proj * sigma * ap) / sigma2;
  return g.transpose();
}

CriticalPointCert verify_critical_point(const Matrix& a, const Matrix& sigma, double sigma2) {
  CriticalPointCert c;
  c.u = a * linalg::sqrtm_psd(sigma);
  c.grad_norm = closed_form_grad(a, sigma, sigma2).norm();
  c.orthonormal_err = (c.u * c.u.transpose() - Matrix::Identity(a.rows(), a.rows())).norm();
  const Matrix utu = c.u.transpose() * c.u;
  c.commute_err = (utu * sigma - sigma * utu).norm();
  return c;
}

Matrix critical_point(const LinearOracleSolution& sol, const Matrix& sigma) {
  const linalg::SymEig e = linalg::sym_eig(sigma);
  const Matrix inv_sqrt = e.vectors * e.values.cwiseSqrt().cwiseInverse().asDiagonal() *
                          e.vectors.transpose();
  return sol.subspace.transpose() * inv_sqrt;
}

Vector principal_angles(const Matrix& s1, const Matrix& s2) {
  if (s1.rows() != s2.rows()) throw DimensionError("principal_angles: ambient dimensions differ");
  const Matrix q1 = orthonormal_basis(s1);
  const Matrix q2 = orthonormal_basis(s2);
  const linalg::Svd d = linalg::svd(q1.transpose() * q2);
  Vector out(d.s.size());
  for (Eigen::Index i = 0; i < d.s.size(); ++i) {
    out(d.s.size() - 1 - i) = std::acos(std::clamp(d.s(i), 0.0, 1.0));
  }
  return out;
}

}  // namespace fif
