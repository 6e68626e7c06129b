#pragma once

#include <memory>
#include <optional>
#include <string>

#include "fif/hutchinson.hpp"
#include "fif/rng.hpp"
#include "fif/surrogate.hpp"

namespace fif {

enum class LatentPrior { StandardNormal };

struct LossConfig {
  double beta = 1.0;
  int k = 1;
  EstimatorVariant variant;
  std::optional<ProbeKind> probe_kind;  // unset: default_probe_kind(k)
  double noise_std = 0.0;               // added to inputs; the noisy x is also the target
  LatentPrior prior = LatentPrior::StandardNormal;
  double cg_tol = 1e-6;   // rf objective only
  int cg_max_iter = 0;    // rf objective only; < 1 selects 2(d+1)

  ProbeKind kind() const { return probe_kind.value_or(default_probe_kind(k)); }
  void validate() const;
};

/// Batch means of the loss terms. `surrogate` is the unsigned probe average,
/// so total = nll_prior + sign * surrogate + beta * recon.
struct LossBreakdown {
  double nll_prior = 0.0;
  double surrogate = 0.0;
  double recon = 0.0;
  double total = 0.0;
};

/// A batch loss recorded on a tape. `total` is the 1x1 batch mean.
struct LossGraph {
  std::unique_ptr<PairGraph> graph;
  ad::Var total;
  LossBreakdown breakdown;

  /// Consumes the tape; returns {grad phi, grad theta}.
  std::pair<Vector, Vector> gradients() { return graph->gradients(total); }
};

/// -log N(z; 0, I) per row, including the (d/2) log(2 pi) constant.
Vector neg_log_prior(const Matrix& z);

/// Probes for one batch under a config. Input noise draws from rng.split({0})
/// and probes from rng.split({1}), one sub-stream per sample.
NoiseBatch loss_probes(const LossConfig& cfg, int D, int d, int samples, const Rng& rng);

LossGraph fif_loss(const NetworkPair& np, const Matrix& x, const LossConfig& cfg, const Rng& rng);

/// fif_loss with the encoder Jacobian evaluated on-manifold, at x_hat.
LossGraph naive_nll_loss(const NetworkPair& np, const Matrix& x, const LossConfig& cfg,
                         const Rng& rng);

/// Same three-term objective with the conjugate-gradient decoder surrogate,
/// using cfg.cg_tol and cfg.cg_max_iter.
LossGraph rf_loss(const NetworkPair& np, const Matrix& x, const LossConfig& cfg, const Rng& rng);

enum class Objective { Fif, NaiveNll, Rf };
std::string to_string(Objective o);
Objective objective_from_string(const std::string& s);

LossGraph build_loss(Objective o, const NetworkPair& np, const Matrix& x, const LossConfig& cfg,
                     const Rng& rng);

/// Exact objective: -log p_Z(z) + sum log s_i(g'(z)) + beta ||x_hat - x||^2,
/// batch mean. Builds full Jacobians; small nets only.
LossBreakdown exact_loss(const NetworkPair& np, const Matrix& x, double beta);

}  // namespace fif
