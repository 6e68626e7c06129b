#include "fif/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/SVD>

#include "fif/errors.hpp"

namespace fif::linalg {

namespace {

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw NumericalError(std::string(what) + ": non-finite input");
  }
}

}  // namespace

Svd svd(const Matrix& m) {
  require_finite(m, "svd");
  if (m.size() == 0) {
    return {Matrix(m.rows(), 0), Vector(0), Matrix(0, m.cols())};
  }
  Eigen::JacobiSVD<Matrix> solver(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Svd out{solver.matrixU(), solver.singularValues(), solver.matrixV().transpose()};
  // JacobiSVD returns singular values sorted descending already.
  const double scale = m.norm();
  if (scale > 0.0) {
    const double err =
        (out.u * out.s.asDiagonal() * out.vt - m).norm() / scale;
    if (!(err < 1e-8)) {
      throw NumericalError("svd: reconstruction check failed, relative error " +
                           std::to_string(err));
    }
  }
  return out;
}

Matrix pinv(const Matrix& m, double rel_cutoff) {
  if (m.size() == 0) return Matrix(m.cols(), m.rows());
  const Svd d = svd(m);
  const double cutoff = rel_cutoff * (d.s.size() > 0 ? d.s(0) : 0.0);
  Vector inv_s(d.s.size());
  for (Eigen::Index i = 0; i < d.s.size(); ++i) {
    inv_s(i) = d.s(i) > cutoff && d.s(i) > 0.0 ? 1.0 / d.s(i) : 0.0;
  }
  return d.vt.transpose() * inv_s.asDiagonal() * d.u.transpose();
}

SymEig sym_eig(const Matrix& m) {
  if (m.rows() != m.cols()) throw DimensionError("sym_eig: matrix is not square");
  require_finite(m, "sym_eig");
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("sym_eig: eigensolver did not converge");
  }
  // Eigen sorts ascending; flip.
  const Eigen::Index n = sym.rows();
  SymEig out{Vector(n), Matrix(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values(i) = solver.eigenvalues()(n - 1 - i);
    out.vectors.col(i) = solver.eigenvectors().col(n - 1 - i);
  }
  return out;
}

Matrix sqrtm_psd(const Matrix& m) {
  const SymEig e = sym_eig(m);
  Vector root(e.values.size());
  for (Eigen::Index i = 0; i < e.values.size(); ++i) {
    const double lam = e.values(i);
    if (lam < -1e-10) {
      throw NotPsdError("sqrtm_psd: eigenvalue " + std::to_string(lam) + " is negative");
    }
    root(i) = std::sqrt(std::max(lam, 0.0));
  }
  return e.vectors * root.asDiagonal() * e.vectors.transpose();
}

CgReport cg_solve(const MatVec& apply, const Vector& b, double tol, int max_iter) {
  CgReport rep{Vector::Zero(b.size()), 0, 0.0};
  const double bnorm = b.norm();
  if (bnorm == 0.0) return rep;
  Vector r = b;
  Vector p = r;
  double rr = r.squaredNorm();
  const double target = tol * bnorm;
  rep.residual = std::sqrt(rr);
  for (int it = 0; it < max_iter; ++it) {
    if (rep.residual <= target) return rep;
    const Vector ap = apply(p);
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) {
      throw ConvergenceError("cg_solve: operator is not positive definite", rep.residual,
                             rep.iterations);
    }
    const double alpha = rr / pap;
    rep.x += alpha * p;
    r -= alpha * ap;
    const double rr_new = r.squaredNorm();
    p = r + (rr_new / rr) * p;
    rr = rr_new;
    rep.residual = std::sqrt(rr);
    rep.iterations = it + 1;
  }
  if (rep.residual <= target) return rep;
  throw ConvergenceError("cg_solve: no convergence", rep.residual, rep.iterations);
}

Matrix cg_solve_rows(const RowOperator& apply, const Matrix& b, double tol, int max_iter,
                     int* iterations_used) {
  const Eigen::Index rows = b.rows();
  Matrix x = Matrix::Zero(rows, b.cols());
  Matrix r = b;
  Matrix p = r;
  Vector rr = r.rowwise().squaredNorm();
  const Vector target = tol * b.rowwise().norm();
  auto converged = [&](Eigen::Index i) { return std::sqrt(rr(i)) <= target(i); };
  int it = 0;
  for (; it < max_iter; ++it) {
    bool all = true;
    for (Eigen::Index i = 0; i < rows; ++i) all = all && converged(i);
    if (all) break;
    const Matrix ap = apply(p);
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (converged(i)) continue;
      const double pap = p.row(i).dot(ap.row(i));
      if (!(pap > 0.0)) {
        throw ConvergenceError("cg_solve_rows: operator is not positive definite",
                               std::sqrt(rr(i)), it);
      }
      const double alpha = rr(i) / pap;
      x.row(i) += alpha * p.row(i);
      r.row(i) -= alpha * ap.row(i);
      const double rr_new = r.row(i).squaredNorm();
      p.row(i) = r.row(i) + (rr_new / rr(i)) * p.row(i);
      rr(i) = rr_new;
    }
  }
  double worst = 0.0;
  bool all = true;
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (!converged(i)) {
      all = false;
      worst = std::max(worst, std::sqrt(rr(i)) / std::max(b.row(i).norm(), 1e-300));
    }
  }
  if (!all) throw ConvergenceError("cg_solve_rows: no convergence", worst, it);
  if (iterations_used != nullptr) *iterations_used = it;
  return x;
}

Matrix sample_orthogonal_columns(int d, int k, Rng& rng) {
  if (d < 1 || k < 1) throw std::invalid_argument("sample_orthogonal_columns: d and K must be >= 1");
  if (k > d) {
    throw std::invalid_argument("sample_orthogonal_columns: K=" + std::to_string(k) +
                                " exceeds d=" + std::to_string(d));
  }
  const Matrix g = rng.normal_matrix(d, k);
  Eigen::HouseholderQR<Matrix> qr(g);
  const Matrix q = qr.householderQ() * Matrix::Identity(d, k);
  return std::sqrt(static_cast<double>(d)) * q;
}

double frobenius_relative_error(const Matrix& a, const Matrix& b) {
  const double denom = b.norm();
  const double num = (a - b).norm();
  return denom > 0.0 ? num / denom : num;
}

}  // namespace fif::linalg
