#include "fif/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fif/errors.hpp"
#include "fif/hutchinson.hpp"
#include "fif/jacobian.hpp"

namespace fif {

namespace {

constexpr double kJitter = 1e-10;
constexpr double kHalfPi = std::numbers::pi / 2.0;

double arc_speed(double t) {
  const double dy = kHalfPi * std::cos(kHalfPi * t);
  return std::sqrt(1.0 + dy * dy);
}

}  // namespace

GaussianSummary summarize(const Matrix& x) {
  const auto cov = sample_covariance(x);
  if (!cov) throw std::invalid_argument("summarize: need at least two samples");
  return {x.colwise().mean().transpose(), *cov};
}

double w2_gaussian(const GaussianSummary& a, const GaussianSummary& b) {
  if (a.mean.size() != b.mean.size() || a.cov.rows() != b.cov.rows()) {
    throw DimensionError("w2_gaussian: dimensions differ");
  }
  if (a.mean == b.mean && a.cov == b.cov) return 0.0;
  const Eigen::Index n = a.cov.rows();
  const Matrix ca = a.cov + kJitter * Matrix::Identity(n, n);
  const Matrix cb = b.cov + kJitter * Matrix::Identity(n, n);
  const Matrix rb = linalg::sqrtm_psd(cb);
  const Matrix cross = linalg::sqrtm_psd(rb * ca * rb);
  const double sq = (a.mean - b.mean).squaredNorm() + ca.trace() + cb.trace() - 2.0 * cross.trace();
  return std::sqrt(std::max(sq, 0.0));
}

double fid_like(const Matrix& model_samples, const Matrix& test_data) {
  if (model_samples.cols() != test_data.cols()) throw DimensionError("fid_like: dimensions differ");
  const Eigen::Index need = test_data.cols() + 1;
  if (model_samples.rows() < need || test_data.rows() < need) {
    throw std::invalid_argument("fid_like: need at least D+1 samples in each set");
  }
  return w2_gaussian(summarize(model_samples), summarize(test_data));
}

DecoderSpectrum decoder_spectrum(const NetworkPair& np, const Matrix& z) {
  DecoderSpectrum out;
  for (const Matrix& j : jacobians(np, Side::Decoder, z)) {
    const Vector s = linalg::svd(j).s;
    out.mean_log_sum += s.array().log().sum();
    out.mean_count_ge_one += static_cast<double>((s.array() >= 1.0).count());
    out.singular_values.push_back(s);
  }
  if (z.rows() > 0) {
    out.mean_log_sum /= static_cast<double>(z.rows());
    out.mean_count_ge_one /= static_cast<double>(z.rows());
  }
  return out;
}

std::vector<std::pair<int, double>> rel_grad_distance(const NetworkPair& np, const Matrix& x,
                                                      EstimatorVariant variant,
                                                      const std::vector<int>& k_values,
                                                      std::uint64_t seed) {
  const int dim = variant.probe_dim(np.spec.D, np.spec.d);
  const int rows = static_cast<int>(x.rows());
  const Vector exact = surrogate_grad(np, x, basis_probes(dim, rows), variant);
  const double norm = exact.norm();
  if (!(norm > 0.0)) throw NumericalError("rel_grad_distance: exact gradient is zero");
  std::vector<std::pair<int, double>> out;
  for (int k : k_values) {
    const Rng rng(seed, {static_cast<std::uint64_t>(k)});
    const NoiseBatch noise = sample_batch(ProbeKind::Orthogonalized, dim, k, rows, rng);
    out.emplace_back(k, (surrogate_grad(np, x, noise, variant) - exact).norm() / norm);
  }
  return out;
}

double sinusoid_arc_length(double t) {
  // Composite Simpson on an even panel count; the integrand is smooth.
  const int panels = 2 * std::max(8, static_cast<int>(std::ceil(std::abs(t) * 64.0)));
  const double h = t / panels;
  double acc = arc_speed(0.0) + arc_speed(t);
  for (int i = 1; i < panels; ++i) acc += (i % 2 == 1 ? 4.0 : 2.0) * arc_speed(i * h);
  return acc * h / 3.0;
}

std::pair<double, double> sinusoid_projection(double x, double y) {
  auto dist2 = [&](double t) {
    const double dx = x - t;
    const double dy = y - std::sin(kHalfPi * t);
    return dx * dx + dy * dy;
  };
  // The nearest point is no farther than the vertical foot (x, sin), so its
  // parameter lies within that distance of x.
  const double radius = std::sqrt(dist2(x)) + 1e-12;
  const int steps = 64;
  double best = x;
  double best_d = dist2(x);
  for (int i = 0; i <= steps; ++i) {
    const double t = x - radius + 2.0 * radius * i / steps;
    const double dd = dist2(t);
    if (dd < best_d) {
      best_d = dd;
      best = t;
    }
  }
  // Golden-section refinement within one grid cell either side.
  const double cell = 2.0 * radius / steps;
  double lo = best - cell, hi = best + cell;
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - phi * (hi - lo), d = lo + phi * (hi - lo);
  for (int i = 0; i < 80; ++i) {
    if (dist2(c) < dist2(d)) {
      hi = d;
    } else {
      lo = c;
    }
    c = hi - phi * (hi - lo);
    d = lo + phi * (hi - lo);
  }
  const double t = 0.5 * (lo + hi);
  const double slope = kHalfPi * std::cos(kHalfPi * t);
  const double nx = -slope, ny = 1.0;
  const double nn = std::sqrt(nx * nx + ny * ny);
  const double offset = ((x - t) * nx + (y - std::sin(kHalfPi * t)) * ny) / nn;
  return {t, offset};
}

double pearson(const Vector& a, const Vector& b) {
  if (a.size() != b.size() || a.size() < 2) throw DimensionError("pearson: need equal lengths >= 2");
  const Vector ca = a.array() - a.mean();
  const Vector cb = b.array() - b.mean();
  const double den = ca.norm() * cb.norm();
  return den > 0.0 ? ca.dot(cb) / den : 0.0;
}

Alignment manifold_alignment(const Matrix& points, const Vector& z) {
  if (points.cols() != 2) throw DimensionError("manifold_alignment: expects 2-D points");
  if (points.rows() != z.size()) throw DimensionError("manifold_alignment: length mismatch");
  Vector arc(points.rows()), off(points.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const auto [t, o] = sinusoid_projection(points(i, 0), points(i, 1));
    arc(i) = sinusoid_arc_length(t);
    off(i) = o;
  }
  return {std::abs(pearson(z, arc)), std::abs(pearson(z, off))};
}

Alignment manifold_alignment(const NetworkPair& np, const Dataset& ds) {
  if (np.spec.D != 2 || np.spec.d != 1) {
    throw DimensionError("manifold_alignment: needs D=2, d=1");
  }
  return manifold_alignment(ds.x, np.encode(ds.x).col(0));
}

double decoder_curvature(const NetworkPair& np, double lo, double hi, int points) {
  if (np.spec.d != 1) throw DimensionError("decoder_curvature: needs d=1");
  if (points < 3 || !(hi > lo)) throw std::invalid_argument("decoder_curvature: bad grid");
  const Vector s = Vector::LinSpaced(points, lo, hi);
  const Matrix c = np.decode(s);
  const double h = s(1) - s(0);
  double acc = 0.0;
  for (int i = 1; i + 1 < points; ++i) {
    const Vector v = (c.row(i + 1) - c.row(i - 1)).transpose() / (2.0 * h);
    const Vector a = (c.row(i + 1) - 2.0 * c.row(i) + c.row(i - 1)).transpose() / (h * h);
    const double speed2 = v.squaredNorm();
    if (!(speed2 > 0.0)) throw NumericalError("decoder_curvature: decoder curve is stationary");
    const Vector normal = a - (a.dot(v) / speed2) * v;
    acc += normal.norm() / speed2;
  }
  return acc / (points - 2);
}

double decoder_bend_curvature(const NetworkPair& np, const Matrix& x) {
  if (np.spec.d != 1) throw DimensionError("decoder_bend_curvature: needs d=1");
  if (x.rows() < 3) throw std::invalid_argument("decoder_bend_curvature: need at least 3 rows");
  const Matrix z = np.encode(x);
  std::vector<double> zs(z.data(), z.data() + z.size());
  std::sort(zs.begin(), zs.end());
  Matrix q(3, 1);
  q << zs[zs.size() / 20], zs[zs.size() / 2], zs[zs.size() * 19 / 20];
  const Matrix c = np.decode(q);
  const Vector u = (c.row(1) - c.row(0)).transpose();
  const Vector v = (c.row(2) - c.row(0)).transpose();
  const Vector w = (c.row(2) - c.row(1)).transpose();
  const double denom = u.norm() * v.norm() * w.norm();
  if (!(denom > 0.0)) throw NumericalError("decoder_bend_curvature: quantile points coincide");
  // Twice the triangle area, valid in any ambient dimension.
  const double area2 = std::sqrt(std::max(0.0, u.squaredNorm() * v.squaredNorm() - std::pow(u.dot(v), 2)));
  return 2.0 * area2 / denom;
}

}  // namespace fif
