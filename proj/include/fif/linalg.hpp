#pragma once

#include <functional>

#include <Eigen/Dense>

#include "fif/rng.hpp"

namespace fif {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace linalg {

struct Svd {
  Matrix u;   // m x k, k = min(m, n)
  Vector s;   // descending, nonnegative
  Matrix vt;  // k x n
};

/// Symmetric eigendecomposition with eigenvalues sorted descending.
struct SymEig {
  Vector values;
  Matrix vectors;  // columns are eigenvectors, orthonormal
};

/// Thin SVD. Deterministic for a given input; throws NumericalError on
/// non-finite input or a failed reconstruction check.
Svd svd(const Matrix& m);

/// Moore-Penrose inverse. Singular values below rel_cutoff * s_max count as zero.
Matrix pinv(const Matrix& m, double rel_cutoff = 1e-12);

SymEig sym_eig(const Matrix& m);

/// Principal square root of a symmetric PSD matrix. The input is symmetrized;
/// eigenvalues in [-1e-10, 0) are clamped to zero, anything more negative
/// raises NotPsdError.
Matrix sqrtm_psd(const Matrix& m);

using MatVec = std::function<Vector(const Vector&)>;

struct CgReport {
  Vector x;
  int iterations = 0;
  double residual = 0.0;
};

/// Conjugate gradients for a symmetric positive-definite operator.
/// Stops once ||r|| <= tol * ||b||; throws ConvergenceError after max_iter.
CgReport cg_solve(const MatVec& apply, const Vector& b, double tol, int max_iter);

/// Row-batched CG: every row of `b` is an independent system, and
/// `apply` maps a (rows x n) block of iterates to the operator applied row-wise.
/// Rows that have converged are frozen.
using RowOperator = std::function<Matrix(const Matrix&)>;
Matrix cg_solve_rows(const RowOperator& apply, const Matrix& b, double tol, int max_iter,
                     int* iterations_used = nullptr);

/// First k columns of a random d x d orthogonal matrix, scaled by sqrt(d).
/// Built from the Q factor of a d x k standard-normal matrix; column signs are
/// left as the QR produces them.
Matrix sample_orthogonal_columns(int d, int k, Rng& rng);

double frobenius_relative_error(const Matrix& a, const Matrix& b);

}  // namespace linalg
}  // namespace fif
