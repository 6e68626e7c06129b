#include "fif/losses.hpp"

#include <cmath>
#include <numbers>

#include "fif/errors.hpp"

namespace fif {

namespace {

Matrix noisy_input(const Matrix& x, double noise_std, const Rng& rng) {
  if (noise_std == 0.0) return x;
  Rng r = rng.split({0});
  return x + noise_std * r.normal_matrix(x.rows(), x.cols());
}

void check_finite(double v, const char* term) {
  if (!std::isfinite(v)) throw NumericalError(std::string("loss: non-finite ") + term);
}

LossGraph assemble(std::unique_ptr<PairGraph> g, const SurrogateTerm& sur, double beta) {
  ad::Tape& t = g->tape();
  const Eigen::Index rows = t.value(g->z()).rows();
  const Eigen::Index d = t.value(g->z()).cols();
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const ad::Var nll = t.add(t.scale(t.row_sqnorm(g->z()), 0.5),
                            t.constant(Matrix::Constant(rows, 1, half_log_2pi * d)));
  const ad::Var recon = t.row_sqnorm(t.sub(g->x_hat(), g->x()));
  const ad::Var per_row = t.add(t.add(nll, sur.value), t.scale(recon, beta));
  const double n = static_cast<double>(rows);

  LossGraph out;
  out.total = t.scale(t.sum(per_row), 1.0 / n);
  out.breakdown.nll_prior = t.value(nll).mean();
  out.breakdown.surrogate = sur.probe_mean();
  out.breakdown.recon = t.value(recon).mean();
  out.breakdown.total = t.scalar(out.total);
  check_finite(out.breakdown.nll_prior, "prior term");
  check_finite(out.breakdown.surrogate, "surrogate term");
  check_finite(out.breakdown.recon, "reconstruction term");
  check_finite(out.breakdown.total, "total");
  out.graph = std::move(g);
  return out;
}

}  // namespace

void LossConfig::validate() const {
  if (!std::isfinite(beta) || beta < 0.0) throw std::invalid_argument("beta must be finite and >= 0");
  if (k < 1) throw std::invalid_argument("K must be >= 1");
  if (!std::isfinite(noise_std) || noise_std < 0.0) {
    throw std::invalid_argument("noise_std must be finite and >= 0");
  }
  if (!(cg_tol > 0.0)) throw std::invalid_argument("cg_tol must be positive");
}

Vector neg_log_prior(const Matrix& z) {
  const double c = 0.5 * std::log(2.0 * std::numbers::pi) * static_cast<double>(z.cols());
  return (0.5 * z.rowwise().squaredNorm()).array() + c;
}

NoiseBatch loss_probes(const LossConfig& cfg, int D, int d, int samples, const Rng& rng) {
  return sample_batch(cfg.kind(), cfg.variant.probe_dim(D, d), cfg.k, samples, rng.split({1}));
}

LossGraph fif_loss(const NetworkPair& np, const Matrix& x, const LossConfig& cfg,
                   const Rng& rng) {
  cfg.validate();
  if (x.rows() == 0) throw std::invalid_argument("fif_loss: empty batch");
  auto g = std::make_unique<PairGraph>(np, noisy_input(x, cfg.noise_std, rng));
  const NoiseBatch noise =
      loss_probes(cfg, np.spec.D, np.spec.d, static_cast<int>(x.rows()), rng);
  const SurrogateTerm sur = surrogate_logdet(*g, noise, cfg.variant);
  return assemble(std::move(g), sur, cfg.beta);
}

LossGraph naive_nll_loss(const NetworkPair& np, const Matrix& x, const LossConfig& cfg,
                         const Rng& rng) {
  LossConfig on = cfg;
  on.variant.site = JacobianSite::OnManifold;
  return fif_loss(np, x, on, rng);
}

LossGraph rf_loss(const NetworkPair& np, const Matrix& x, const LossConfig& cfg,
                  const Rng& rng) {
  cfg.validate();
  if (x.rows() == 0) throw std::invalid_argument("rf_loss: empty batch");
  const int d = np.spec.d;
  const int cg_max_iter = cfg.cg_max_iter < 1 ? 2 * (d + 1) : cfg.cg_max_iter;
  auto g = std::make_unique<PairGraph>(np, noisy_input(x, cfg.noise_std, rng));
  const NoiseBatch noise =
      sample_batch(cfg.kind(), d, cfg.k, static_cast<int>(x.rows()), rng.split({1}));
  const SurrogateTerm sur = cg_logdet(*g, noise, cfg.cg_tol, cg_max_iter);
  return assemble(std::move(g), sur, cfg.beta);
}

std::string to_string(Objective o) {
  switch (o) {
    case Objective::Fif: return "fif";
    case Objective::NaiveNll: return "naive_nll";
    case Objective::Rf: return "rf";
  }
  return "unknown";
}

Objective objective_from_string(const std::string& s) {
  if (s == "fif") return Objective::Fif;
  if (s == "naive_nll") return Objective::NaiveNll;
  if (s == "rf") return Objective::Rf;
  throw std::invalid_argument("unknown objective '" + s + "'");
}

LossGraph build_loss(Objective o, const NetworkPair& np, const Matrix& x, const LossConfig& cfg,
                     const Rng& rng) {
  switch (o) {
    case Objective::Fif: return fif_loss(np, x, cfg, rng);
    case Objective::NaiveNll: return naive_nll_loss(np, x, cfg, rng);
    case Objective::Rf: return rf_loss(np, x, cfg, rng);
  }
  throw std::invalid_argument("build_loss: unknown objective");
}

LossBreakdown exact_loss(const NetworkPair& np, const Matrix& x, double beta) {
  const Matrix z = np.encode(x);
  const Matrix xh = np.decode(z);
  LossBreakdown b;
  b.nll_prior = neg_log_prior(z).mean();
  double logdet = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) logdet += exact_logdet(np, z.row(r).transpose());
  b.surrogate = logdet / static_cast<double>(z.rows());
  b.recon = (xh - x).rowwise().squaredNorm().mean();
  b.total = b.nll_prior + b.surrogate + beta * b.recon;
  return b;
}

}  // namespace fif
