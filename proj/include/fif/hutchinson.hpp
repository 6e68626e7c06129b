#pragma once

#include <string>

#include "fif/linalg.hpp"
#include "fif/rng.hpp"

namespace fif {

enum class ProbeKind { Rademacher, Gaussian, ScaledGaussian, Orthogonalized };

std::string to_string(ProbeKind k);
ProbeKind probe_kind_from_string(const std::string& s);

/// ScaledGaussian for a single probe, Orthogonalized otherwise.
ProbeKind default_probe_kind(int k);

/// Probe vectors stored as rows. A batch holds `k` consecutive probes per
/// sample, so eps has (samples * k) rows.
///
/// Every kind satisfies E[eps eps^T] = I. ScaledGaussian and Orthogonalized
/// rows have norm sqrt(dim) exactly; the k rows of one Orthogonalized sample
/// are mutually orthogonal.
struct NoiseBatch {
  Matrix eps;
  ProbeKind kind = ProbeKind::Gaussian;
  int k = 1;

  int dim() const { return static_cast<int>(eps.cols()); }
  int samples() const { return static_cast<int>(eps.rows()) / k; }
};

/// k probes of dimension d for one sample.
NoiseBatch sample(ProbeKind kind, int d, int k, Rng& rng);

/// k probes per sample for `samples` samples; sample i draws from rng.split({i}).
NoiseBatch sample_batch(ProbeKind kind, int d, int k, int samples, const Rng& rng);

/// d*I basis probes (rows sqrt(d) e_i), repeated for each sample. Averaging
/// e^T A e over them gives tr(A) exactly.
NoiseBatch basis_probes(int d, int samples);

/// (1/k) sum_k eps_k^T A eps_k over the probes of a single-sample batch.
double trace_estimate(const Matrix& a, const NoiseBatch& noise);
double trace_estimate(const linalg::MatVec& apply, const NoiseBatch& noise);

/// Per-probe quadratic forms eps_k^T A eps_k.
Vector probe_values(const Matrix& a, const NoiseBatch& noise);

/// Population variance of the eigenvalues of the symmetric part of A.
double eigenvalue_variance(const Matrix& a);

/// Variance of one k-probe trace estimate of tr(A). Only the symmetric part
/// of A contributes.
double analytic_variance(ProbeKind kind, int k, const Matrix& a);

}  // namespace fif
