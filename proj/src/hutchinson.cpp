#include "fif/hutchinson.hpp"

#include <cmath>
#include <stdexcept>

#include "fif/errors.hpp"

namespace fif {

std::string to_string(ProbeKind k) {
  switch (k) {
    case ProbeKind::Rademacher: return "rademacher";
    case ProbeKind::Gaussian: return "gaussian";
    case ProbeKind::ScaledGaussian: return "scaled_gaussian";
    case ProbeKind::Orthogonalized: return "orthogonalized";
  }
  return "unknown";
}

ProbeKind probe_kind_from_string(const std::string& s) {
  if (s == "rademacher") return ProbeKind::Rademacher;
  if (s == "gaussian") return ProbeKind::Gaussian;
  if (s == "scaled_gaussian") return ProbeKind::ScaledGaussian;
  if (s == "orthogonalized") return ProbeKind::Orthogonalized;
  throw std::invalid_argument("unknown probe kind '" + s + "'");
}

ProbeKind default_probe_kind(int k) {
  return k == 1 ? ProbeKind::ScaledGaussian : ProbeKind::Orthogonalized;
}

NoiseBatch sample(ProbeKind kind, int d, int k, Rng& rng) {
  if (d < 1 || k < 1) throw std::invalid_argument("sample: d and K must be >= 1");
  NoiseBatch nb;
  nb.kind = kind;
  nb.k = k;
  switch (kind) {
    case ProbeKind::Rademacher:
      nb.eps.resize(k, d);
      for (int i = 0; i < k; ++i) {
        for (int j = 0; j < d; ++j) nb.eps(i, j) = rng.rademacher();
      }
      break;
    case ProbeKind::Gaussian:
      nb.eps = rng.normal_matrix(k, d);
      break;
    case ProbeKind::ScaledGaussian: {
      nb.eps = rng.normal_matrix(k, d);
      const double scale = std::sqrt(static_cast<double>(d));
      for (int i = 0; i < k; ++i) nb.eps.row(i) *= scale / nb.eps.row(i).norm();
      break;
    }
    case ProbeKind::Orthogonalized:
      nb.eps = linalg::sample_orthogonal_columns(d, k, rng).transpose();
      break;
  }
  return nb;
}

NoiseBatch sample_batch(ProbeKind kind, int d, int k, int samples, const Rng& rng) {
  NoiseBatch nb;
  nb.kind = kind;
  nb.k = k;
  nb.eps.resize(static_cast<Eigen::Index>(samples) * k, d);
  for (int i = 0; i < samples; ++i) {
    Rng r = rng.split({static_cast<std::uint64_t>(i)});
    nb.eps.middleRows(static_cast<Eigen::Index>(i) * k, k) = sample(kind, d, k, r).eps;
  }
  return nb;
}

NoiseBatch basis_probes(int d, int samples) {
  NoiseBatch nb;
  nb.kind = ProbeKind::Orthogonalized;
  nb.k = d;
  nb.eps.resize(static_cast<Eigen::Index>(samples) * d, d);
  const double scale = std::sqrt(static_cast<double>(d));
  for (int i = 0; i < samples; ++i) {
    nb.eps.middleRows(static_cast<Eigen::Index>(i) * d, d) = scale * Matrix::Identity(d, d);
  }
  return nb;
}

Vector probe_values(const Matrix& a, const NoiseBatch& noise) {
  if (a.rows() != a.cols() || a.rows() != noise.dim()) {
    throw DimensionError("probe_values: operator is " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + ", probes have dimension " +
                         std::to_string(noise.dim()));
  }
  return (noise.eps * a.transpose()).cwiseProduct(noise.eps).rowwise().sum();
}

double trace_estimate(const Matrix& a, const NoiseBatch& noise) {
  return probe_values(a, noise).mean();
}

double trace_estimate(const linalg::MatVec& apply, const NoiseBatch& noise) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < noise.eps.rows(); ++i) {
    const Vector e = noise.eps.row(i).transpose();
    const Vector ae = apply(e);
    if (ae.size() != e.size()) throw DimensionError("trace_estimate: operator is not square");
    acc += e.dot(ae);
  }
  return acc / static_cast<double>(noise.eps.rows());
}

double eigenvalue_variance(const Matrix& a) {
  const Matrix s = 0.5 * (a + a.transpose());
  const auto d = static_cast<double>(s.rows());
  // Population variance from tr(A_s) and tr(A_s^2); no decomposition needed.
  const double mean = s.trace() / d;
  return s.squaredNorm() / d - mean * mean;
}

double analytic_variance(ProbeKind kind, int k, const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("analytic_variance: matrix is not square");
  if (k < 1) throw std::invalid_argument("analytic_variance: K must be >= 1");
  const Matrix s = 0.5 * (a + a.transpose());
  const auto d = static_cast<double>(s.rows());
  const double kk = k;
  switch (kind) {
    case ProbeKind::Rademacher:
      return 2.0 * (s.squaredNorm() - s.diagonal().squaredNorm()) / kk;
    case ProbeKind::Gaussian:
      return 2.0 * s.squaredNorm() / kk;
    case ProbeKind::ScaledGaussian:
      return 2.0 * d * d / (d + 2.0) * eigenvalue_variance(s) / kk;
    case ProbeKind::Orthogonalized:
      if (k > s.rows()) {
        throw std::invalid_argument("analytic_variance: K exceeds d for orthogonalized probes");
      }
      if (s.rows() == 1) return 0.0;
      return 2.0 * d * d * (d - kk) / (kk * (d - 1.0) * (d + 2.0)) * eigenvalue_variance(s);
  }
  return 0.0;
}

}  // namespace fif
