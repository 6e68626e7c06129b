#include <gtest/gtest.h>

#include <numbers>

#include "fif/errors.hpp"
#include "fif/jacobian.hpp"
#include "fif/metrics.hpp"

namespace fif {
namespace {

using ad::Activation;

GaussianSummary gauss(std::initializer_list<double> mean, std::initializer_list<double> var) {
  GaussianSummary s;
  s.mean = Vector(static_cast<Eigen::Index>(mean.size()));
  Vector v(static_cast<Eigen::Index>(var.size()));
  Eigen::Index i = 0;
  for (double m : mean) s.mean(i++) = m;
  i = 0;
  for (double x : var) v(i++) = x;
  s.cov = v.asDiagonal();
  return s;
}

NetworkPair mlp(int D, int d, std::vector<int> hidden, std::uint64_t seed) {
  ArchSpec s;
  s.D = D;
  s.d = d;
  s.hidden = std::move(hidden);
  s.activation = Activation::Tanh;
  s.seed = seed;
  NetworkPair np = build(s);
  Rng rng(seed, {7});
  np.phi += 0.3 * rng.normal_matrix(np.phi.size(), 1);
  np.theta += 0.3 * rng.normal_matrix(np.theta.size(), 1);
  return np;
}

TEST(W2, IdenticalIsExactlyZero) {
  const GaussianSummary a = summarize(Rng(1).normal_matrix(50, 3));
  EXPECT_EQ(w2_gaussian(a, a), 0.0);
}

TEST(W2, OneDimensionalClosedForm) {
  EXPECT_NEAR(w2_gaussian(gauss({0.0}, {1.0}), gauss({1.0}, {4.0})), std::sqrt(2.0), 1e-8);
}

TEST(W2, DiagonalClosedForm) {
  const GaussianSummary a = gauss({0.5, -1.0, 2.0}, {0.3, 2.0, 5.0});
  const GaussianSummary b = gauss({0.0, 1.0, 2.5}, {1.2, 0.1, 5.0});
  double acc = 0.0;
  for (int i = 0; i < 3; ++i) {
    acc += std::pow(a.mean(i) - b.mean(i), 2) +
           std::pow(std::sqrt(a.cov(i, i)) - std::sqrt(b.cov(i, i)), 2);
  }
  EXPECT_NEAR(w2_gaussian(a, b), std::sqrt(acc), 1e-8);
}

TEST(W2, SymmetricForGeneralCovariances) {
  const GaussianSummary a = summarize(Rng(2).normal_matrix(40, 4));
  Matrix x = Rng(3).normal_matrix(40, 4);
  x.col(1) += 2.0 * x.col(0);
  const GaussianSummary b = summarize(x);
  EXPECT_GT(w2_gaussian(a, b), 0.1);
  EXPECT_NEAR(w2_gaussian(a, b), w2_gaussian(b, a), 1e-8);
}

TEST(W2, DimensionMismatchThrows) {
  EXPECT_THROW(w2_gaussian(gauss({0.0}, {1.0}), gauss({0.0, 0.0}, {1.0, 1.0})), DimensionError);
}

TEST(FidLike, SameSamplesGiveZero) {
  const Matrix x = Rng(4).normal_matrix(100, 3);
  EXPECT_EQ(fid_like(x, x), 0.0);
}

TEST(FidLike, TooFewSamplesRejected) {
  EXPECT_THROW(fid_like(Rng(5).normal_matrix(3, 3), Rng(6).normal_matrix(50, 3)),
               std::invalid_argument);
}

TEST(FidLike, InvariantToSharedTranslationAndRotation) {
  const Matrix a = Rng(7).normal_matrix(200, 3);
  Matrix b = Rng(8).normal_matrix(200, 3);
  b.col(2) *= 2.0;
  const Matrix q = linalg::svd(Rng(9).normal_matrix(3, 3)).u;
  const Eigen::RowVectorXd shift = Rng(10).normal_matrix(1, 3);
  const Matrix ta = (a * q.transpose()).rowwise() + shift;
  const Matrix tb = (b * q.transpose()).rowwise() + shift;
  EXPECT_NEAR(fid_like(ta, tb), fid_like(a, b), 1e-8);
}

TEST(FidLike, HomogeneousUnderSharedScaling) {
  // W2 is a distance in data units, so a shared scale c multiplies it by |c|.
  const Matrix a = Rng(11).normal_matrix(200, 2);
  const Matrix b = Rng(12).normal_matrix(200, 2).array() + 0.5;
  EXPECT_NEAR(fid_like(3.0 * a, 3.0 * b), 3.0 * fid_like(a, b), 1e-8);
}

TEST(FidLike, BootstrapBaselineShrinksWithN) {
  // Two disjoint halves of the same sinusoid draw; averaged over seeds, the
  // gap is pure sampling noise and falls roughly like 1/sqrt(n).
  auto baseline = [](Eigen::Index n) {
    double acc = 0.0;
    for (std::uint64_t s = 0; s < 8; ++s) {
      const Matrix x = gen_sinusoid(2 * n, 0.1, 100 + s).x;
      acc += fid_like(x.topRows(n), x.bottomRows(n));
    }
    return acc / 8.0;
  };
  const double small = baseline(200);
  const double large = baseline(20000);
  EXPECT_GT(large, 0.0);
  EXPECT_LT(large, small / 3.0);
}

TEST(Spectrum, CoordinateEmbeddingIsAllOnes) {
  Matrix a = Matrix::Zero(2, 4);
  a(0, 0) = a(1, 1) = 1.0;
  const DecoderSpectrum s = decoder_spectrum(linear_pair(a), Rng(13).normal_matrix(5, 2));
  ASSERT_EQ(s.singular_values.size(), 5u);
  for (const Vector& sv : s.singular_values) EXPECT_LT((sv.array() - 1.0).abs().maxCoeff(), 1e-12);
  EXPECT_NEAR(s.mean_log_sum, 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(s.mean_count_ge_one, 2.0);
}

TEST(Spectrum, DoublingDecoderAddsDLog2) {
  const Matrix a = Rng(14).normal_matrix(2, 5);
  NetworkPair np = linear_pair(a);
  const Matrix z = Rng(15).normal_matrix(4, 2);
  const DecoderSpectrum base = decoder_spectrum(np, z);
  np.theta *= 2.0;
  const DecoderSpectrum twice = decoder_spectrum(np, z);
  for (std::size_t i = 0; i < base.singular_values.size(); ++i) {
    EXPECT_LT((twice.singular_values[i] - 2.0 * base.singular_values[i]).norm(), 1e-10);
  }
  EXPECT_NEAR(twice.mean_log_sum - base.mean_log_sum, 2.0 * std::log(2.0), 1e-10);
}

TEST(Spectrum, MatchesFiniteDifferenceJacobian) {
  const NetworkPair np = mlp(5, 3, {16, 16}, 16);
  const Matrix z = Rng(17).normal_matrix(6, 3);
  const DecoderSpectrum s = decoder_spectrum(np, z);
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    Matrix j(5, 3);
    const double h = 1e-6;
    for (int c = 0; c < 3; ++c) {
      Matrix zp = z.row(r), zm = z.row(r);
      zp(0, c) += h;
      zm(0, c) -= h;
      j.col(c) = ((np.decode(zp) - np.decode(zm)) / (2 * h)).transpose();
    }
    const Vector fd_sv = Eigen::JacobiSVD<Matrix>(j).singularValues();
    EXPECT_LT((s.singular_values[static_cast<std::size_t>(r)] - fd_sv).cwiseAbs().maxCoeff(), 1e-4);
  }
}

TEST(Spectrum, CountsSingularValuesAtLeastOne) {
  Matrix a = Matrix::Zero(2, 3);
  a(0, 0) = 0.5;  // decoder stretches by 2 along this direction
  a(1, 1) = 4.0;  // and shrinks by 4 along this one
  const DecoderSpectrum s = decoder_spectrum(linear_pair(a), Matrix::Zero(3, 2));
  EXPECT_DOUBLE_EQ(s.mean_count_ge_one, 1.0);
  EXPECT_NEAR(s.mean_log_sum, std::log(2.0) + std::log(0.25), 1e-12);
}

TEST(RelGradDistance, LatentExactAtKEqualsD) {
  for (int d : {1, 2, 4, 8}) {
    const NetworkPair np = mlp(10, d, {12}, 20 + static_cast<std::uint64_t>(d));
    const Matrix x = Rng(21).normal_matrix(4, 10);
    for (JacobianSite site : {JacobianSite::OffManifold, JacobianSite::OnManifold}) {
      for (GradTarget target : {GradTarget::Encoder, GradTarget::Decoder}) {
        const EstimatorVariant v{target, TraceSpace::Latent, site};
        const auto curve = rel_grad_distance(np, x, v, {d}, 22);
        EXPECT_LT(curve.front().second, 1e-8) << "d=" << d << " " << to_string(v);
      }
    }
  }
}

TEST(RelGradDistance, AveragedCurveNonIncreasing) {
  const NetworkPair np = mlp(6, 4, {10}, 23);
  const Matrix x = Rng(24).normal_matrix(3, 6);
  for (TraceSpace space : {TraceSpace::Latent, TraceSpace::Data}) {
    const EstimatorVariant v{GradTarget::Decoder, space, JacobianSite::OffManifold};
    const std::vector<int> ks = space == TraceSpace::Latent ? std::vector<int>{1, 2, 3, 4}
                                                            : std::vector<int>{1, 2, 4, 6};
    std::vector<double> mean(ks.size(), 0.0);
    for (std::uint64_t seed = 0; seed < 32; ++seed) {
      const auto curve = rel_grad_distance(np, x, v, ks, 1000 + seed);
      for (std::size_t i = 0; i < ks.size(); ++i) mean[i] += curve[i].second / 32.0;
    }
    for (std::size_t i = 1; i < ks.size(); ++i) {
      EXPECT_LE(mean[i], mean[i - 1]) << to_string(v) << " K=" << ks[i];
    }
  }
}

TEST(RelGradDistance, DataSpaceWorseThanLatentAtOneProbe) {
  const NetworkPair np = mlp(16, 2, {16}, 25);
  const Matrix x = Rng(26).normal_matrix(4, 16);
  double latent = 0.0, data = 0.0;
  for (std::uint64_t seed = 0; seed < 16; ++seed) {
    latent += rel_grad_distance(np, x, {GradTarget::Decoder, TraceSpace::Latent,
                                        JacobianSite::OffManifold},
                                {1}, seed)
                  .front()
                  .second;
    data += rel_grad_distance(np, x, {GradTarget::Decoder, TraceSpace::Data,
                                      JacobianSite::OffManifold},
                              {1}, seed)
                .front()
                .second;
  }
  EXPECT_GT(data, 2.0 * latent);
}

TEST(Sinusoid, ArcLengthMatchesLineForFlatLimit) {
  EXPECT_EQ(sinusoid_arc_length(0.0), 0.0);
  EXPECT_NEAR(sinusoid_arc_length(-1.3), -sinusoid_arc_length(1.3), 1e-12);
  // Between chord length and chord plus vertical travel.
  const double s = sinusoid_arc_length(1.0);
  EXPECT_GT(s, std::sqrt(2.0));
  EXPECT_LT(s, 2.0);
}

TEST(Sinusoid, ArcLengthDerivativeIsSpeed) {
  for (double t : {-2.0, -0.3, 0.7, 1.9}) {
    const double h = 1e-4;
    const double ds = (sinusoid_arc_length(t + h) - sinusoid_arc_length(t - h)) / (2 * h);
    const double slope = std::numbers::pi / 2 * std::cos(std::numbers::pi * t / 2);
    EXPECT_NEAR(ds, std::sqrt(1.0 + slope * slope), 1e-7);
  }
}

TEST(Sinusoid, ProjectionRecoversNormalOffset) {
  for (double t : {-1.5, -0.2, 0.0, 0.8, 1.7}) {
    const double slope = std::numbers::pi / 2 * std::cos(std::numbers::pi * t / 2);
    const double norm = std::sqrt(1.0 + slope * slope);
    for (double off : {-0.05, 0.0, 0.08}) {
      const double x = t - slope / norm * off;
      const double y = std::sin(std::numbers::pi * t / 2) + off / norm;
      const auto [tp, op] = sinusoid_projection(x, y);
      EXPECT_NEAR(tp, t, 1e-7);
      EXPECT_NEAR(op, off, 1e-7);
    }
  }
}

TEST(Alignment, ArcCoordinateAndOffsetConstructions) {
  const Dataset ds = gen_sinusoid(2000, 0.1, 27);
  Vector arc(ds.n()), off(ds.n());
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    const auto [t, o] = sinusoid_projection(ds.x(i, 0), ds.x(i, 1));
    arc(i) = sinusoid_arc_length(t);
    off(i) = o;
  }
  const Alignment along = manifold_alignment(ds.x, arc);
  EXPECT_NEAR(along.corr_curve, 1.0, 1e-12);
  EXPECT_LT(along.corr_noise, 0.1);
  const Alignment across = manifold_alignment(ds.x, -off);
  EXPECT_NEAR(across.corr_noise, 1.0, 1e-12);
  EXPECT_LT(across.corr_curve, 0.1);
}

TEST(Alignment, NetworkOverloadAgreesWithPointOverload) {
  const NetworkPair np = mlp(2, 1, {8}, 28);
  const Dataset ds = gen_sinusoid(300, 0.1, 29);
  const Alignment a = manifold_alignment(np, ds);
  const Alignment b = manifold_alignment(ds.x, np.encode(ds.x).col(0));
  EXPECT_DOUBLE_EQ(a.corr_curve, b.corr_curve);
  EXPECT_DOUBLE_EQ(a.corr_noise, b.corr_noise);
  EXPECT_GE(a.corr_curve, 0.0);
  EXPECT_LE(a.corr_curve, 1.0);
}

TEST(Pearson, KnownValues) {
  const Vector a = Vector::LinSpaced(20, -1.0, 1.0);
  EXPECT_NEAR(pearson(a, 3.0 * a.array() + 1.0), 1.0, 1e-12);
  EXPECT_NEAR(pearson(a, -a), -1.0, 1e-12);
  EXPECT_NEAR(pearson(a, a.array().square()), 0.0, 1e-12);
}

TEST(Curvature, LinearDecoderIsFlat) {
  const NetworkPair np = linear_pair(Rng(30).normal_matrix(1, 3));
  EXPECT_NEAR(decoder_curvature(np, -2.0, 2.0), 0.0, 1e-6);
  EXPECT_NEAR(decoder_bend_curvature(np, Rng(31).normal_matrix(200, 3)), 0.0, 1e-12);
}

TEST(Curvature, BendMatchesCircumradiusFromSides) {
  const NetworkPair np = mlp(2, 1, {16}, 32);
  const Matrix x = Rng(33).normal_matrix(400, 2);
  const Matrix z = np.encode(x);
  std::vector<double> zs(z.data(), z.data() + z.size());
  std::sort(zs.begin(), zs.end());
  Matrix q(3, 1);
  q << zs[20], zs[200], zs[380];
  const Matrix p = np.decode(q);
  const double a = (p.row(0) - p.row(1)).norm();
  const double b = (p.row(1) - p.row(2)).norm();
  const double c = (p.row(0) - p.row(2)).norm();
  const double s = (a + b + c) / 2;
  const double area = std::sqrt(s * (s - a) * (s - b) * (s - c));  // Heron
  EXPECT_NEAR(decoder_bend_curvature(np, x), 4.0 * area / (a * b * c), 1e-8);
}

TEST(Curvature, BendNeedsOneLatent) {
  EXPECT_THROW(decoder_bend_curvature(mlp(3, 2, {4}, 34), Rng(35).normal_matrix(10, 3)),
               DimensionError);
}

}  // namespace
}  // namespace fif
