#pragma once

#include "fif/linalg.hpp"

namespace fif {

/// Optimal d-dimensional subspace of the linear encoder/decoder model with
/// noise variance sigma2. The selected eigen-directions minimize
/// sum_i 1/2 alpha_i (log lambda_i - lambda_i / sigma2).
struct LinearOracleSolution {
  Vector lambda;        // eigenvalues of Sigma, descending
  Matrix v;             // matching eigenvectors as columns
  Eigen::VectorXi alpha;  // 0/1 selection, exactly d ones
  double loss_alpha = 0.0;
  Matrix subspace;      // D x d, the selected columns of v
};

/// log(lambda) - lambda / sigma2.
double selection_score(double lambda, double sigma2);

/// Ties in the score go to the larger eigenvalue.
LinearOracleSolution optimal_selection(const Matrix& sigma, double sigma2, int d);

/// Loss value of a 0/1 selection over the eigenvalues.
double selection_loss(const Vector& lambda, const Eigen::VectorXi& alpha, double sigma2);

/// 1/2 tr(A Sigma A^T) - 1/2 log det(A A^T) + 1/(2 sigma2) tr(Sigma (I - A^+ A)).
double closed_form_loss(const Matrix& a, const Matrix& sigma, double sigma2);

/// d(closed_form_loss)/dA, a d x D matrix.
Matrix closed_form_grad(const Matrix& a, const Matrix& sigma, double sigma2);

struct CriticalPointCert {
  Matrix u;                   // A Sigma^{1/2}
  double grad_norm = 0.0;     // Frobenius norm of closed_form_grad
  double orthonormal_err = 0.0;  // ||U U^T - I||_F
  double commute_err = 0.0;      // ||U^T U Sigma - Sigma U^T U||_F

  bool ok(double tol = 1e-8) const {
    return grad_norm < tol && orthonormal_err < tol && commute_err < tol;
  }
};

CriticalPointCert verify_critical_point(const Matrix& a, const Matrix& sigma, double sigma2);

/// Critical point A = U Sigma^{-1/2} whose rows span the oracle's selection.
Matrix critical_point(const LinearOracleSolution& sol, const Matrix& sigma);

/// Principal angles in [0, pi/2] between the column spans of s1 and s2,
/// ascending.
Vector principal_angles(const Matrix& s1, const Matrix& s2);

}  // namespace fif
