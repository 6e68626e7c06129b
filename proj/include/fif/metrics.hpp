#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fif/data.hpp"
#include "fif/nets.hpp"
#include "fif/surrogate.hpp"

namespace fif {

struct GaussianSummary {
  Vector mean;
  Matrix cov;
};

/// Sample mean and unbiased covariance of the rows of x.
GaussianSummary summarize(const Matrix& x);

/// 2-Wasserstein distance between two Gaussians. Covariances get 1e-10 added
/// to their diagonals before the matrix square roots. Identical summaries give
/// exactly 0.
double w2_gaussian(const GaussianSummary& a, const GaussianSummary& b);

/// w2_gaussian between the moment-matched Gaussians of two sample sets.
/// Each set needs at least D+1 rows.
double fid_like(const Matrix& model_samples, const Matrix& test_data);

struct DecoderSpectrum {
  std::vector<Vector> singular_values;  // one descending vector per latent row
  double mean_log_sum = 0.0;            // mean over rows of sum_i log s_i
  double mean_count_ge_one = 0.0;       // mean number of s_i >= 1
};

DecoderSpectrum decoder_spectrum(const NetworkPair& np, const Matrix& z);

/// ||grad(K) - grad_exact|| / ||grad_exact|| of the variant's target
/// gradient. grad_exact uses the full basis sqrt(n) e_i; grad(K) uses K
/// orthogonalized probes per sample drawn from (seed, K).
std::vector<std::pair<int, double>> rel_grad_distance(const NetworkPair& np, const Matrix& x,
                                                      EstimatorVariant variant,
                                                      const std::vector<int>& k_values,
                                                      std::uint64_t seed);

/// Arc length of t -> (t, sin(pi t / 2)) measured from t = 0.
double sinusoid_arc_length(double t);

/// Nearest point on the noiseless sinusoid: parameter t and the signed offset
/// along the normal (-y', 1) / |(-y', 1)|.
std::pair<double, double> sinusoid_projection(double x, double y);

struct Alignment {
  double corr_curve = 0.0;  // |Pearson(z, arc position)|
  double corr_noise = 0.0;  // |Pearson(z, signed normal offset)|
};

/// For the D=2, d=1 sinusoid setup; uses every row of the dataset.
Alignment manifold_alignment(const NetworkPair& np, const Dataset& ds);
Alignment manifold_alignment(const Matrix& points, const Vector& z);

double pearson(const Vector& a, const Vector& b);

/// Mean curvature of the decoder curve s -> g(s) for d = 1, from second
/// differences on `points` evenly spaced latents in [lo, hi].
double decoder_curvature(const NetworkPair& np, double lo, double hi, int points = 101);

/// Coarse bend of the decoded data curve for d = 1: the Menger curvature of
/// the circle through g(z) at the 5%, 50% and 95% quantiles of f(x). Zero for
/// a straight decoder; insensitive to wiggles between the three points.
double decoder_bend_curvature(const NetworkPair& np, const Matrix& x);

}  // namespace fif
