#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fif/autodiff.hpp"
#include "fif/hutchinson.hpp"
#include "fif/nets.hpp"

namespace fif {

enum class GradTarget { Encoder, Decoder };
enum class TraceSpace { Data, Latent };
enum class JacobianSite { OnManifold, OffManifold };

/// Which single-pass log-determinant gradient estimator to build.
///
/// The site selects where the encoder Jacobian is evaluated (x_hat or x);
/// the decoder Jacobian is always taken at z = f(x). Decoder-target terms
/// see z as a constant. The on-manifold x_hat stays in the graph, so its
/// gradient also flows through the evaluation point.
struct EstimatorVariant {
  GradTarget target = GradTarget::Encoder;
  TraceSpace space = TraceSpace::Latent;
  JacobianSite site = JacobianSite::OffManifold;

  /// Encoder-target terms enter the loss with a minus sign.
  double sign() const { return target == GradTarget::Encoder ? -1.0 : 1.0; }
  int probe_dim(int D, int d) const { return space == TraceSpace::Latent ? d : D; }
  bool operator==(const EstimatorVariant&) const = default;
};

std::string to_string(EstimatorVariant v);
/// Parses "target/space/site", e.g. "encoder/latent/off".
EstimatorVariant variant_from_string(const std::string& s);
/// The four target x space combinations at one site.
std::vector<EstimatorVariant> table_variants(JacobianSite site);

/// Tape holding both networks and the primal passes z = f(x), x_hat = g(z).
/// Extra passes (encoder at x_hat, decoder at a detached z) are recorded on
/// first use.
class PairGraph {
 public:
  PairGraph(const NetworkPair& np, const Matrix& x);
  PairGraph(const PairGraph&) = delete;
  PairGraph& operator=(const PairGraph&) = delete;

  const NetworkPair& pair() const { return *np_; }
  ad::Tape& tape() { return tape_; }
  const BoundNetwork& encoder() const { return enc_; }
  const BoundNetwork& decoder() const { return dec_; }
  Eigen::Index rows() const { return tape_.value(x_).rows(); }

  ad::Var x() const { return x_; }
  ad::Var z() const { return fx_.out; }
  ad::Var x_hat() const { return gz_.out; }
  const Trace& encoder_trace() const { return fx_; }
  const Trace& decoder_trace() const { return gz_; }

  /// Encoder pass whose input is x (off-manifold) or x_hat (on-manifold).
  /// x_hat stays connected, so on-manifold terms also reach the decoder
  /// and the encoder through the evaluation point.
  const Trace& encoder_at(JacobianSite site);
  /// Decoder pass at a detached copy of z.
  const Trace& decoder_at_detached_z();
  /// Numeric value of the site point.
  const Matrix& site_value(JacobianSite site);

  /// Parameter gradients of a 1x1 node: {phi, theta}.
  std::pair<Vector, Vector> gradients(ad::Var scalar);

 private:
  const NetworkPair* np_;
  ad::Tape tape_;
  int phi_group_;
  int theta_group_;
  BoundNetwork enc_;
  BoundNetwork dec_;
  ad::Var x_;
  Trace fx_;
  Trace gz_;
  std::optional<Trace> f_on_;
  std::optional<Trace> g_det_;
};

struct SurrogateTerm {
  ad::Var value;                // rows x 1, signed; add it to the per-sample loss
  double detached_value = 0.0;  // batch mean of the signed value
  double sign = 1.0;

  /// Unsigned probe average, (1/K) sum eps^T M eps, averaged over samples.
  double probe_mean() const { return sign * detached_value; }
};

/// Single-pass estimator term. The probe batch must carry K probes per row of
/// x with dimension d (latent space) or D (data space).
SurrogateTerm surrogate_logdet(PairGraph& g, const NoiseBatch& noise, EstimatorVariant v);

/// Gradient of the batch-mean surrogate with respect to the variant's target
/// parameters.
Vector surrogate_grad(const NetworkPair& np, const Matrix& x, const NoiseBatch& noise,
                      EstimatorVariant v);

struct CgStats {
  int iterations = 0;
};

/// Conjugate-gradient surrogate for the decoder: its gradient matches
/// 1/(2K) sum sg(CG(J^T J; eps)^T) d(J^T J) eps and so does its value.
/// Probes are d-dimensional.
SurrogateTerm cg_logdet(PairGraph& g, const NoiseBatch& noise, double tol, int max_iter,
                        CgStats* stats = nullptr);

Vector cg_logdet_grad(const NetworkPair& np, const Matrix& x, const NoiseBatch& noise,
                      double tol, int max_iter);

/// Sum of log singular values of the decoder Jacobian at z, i.e. half the
/// log-determinant of J^T J. Throws RankCollapseError on a zero singular value.
double exact_logdet(const NetworkPair& np, const Vector& z);

/// Exact gradient, averaged over the rows of x, of the log-determinant term
/// seen by one side: decoder tr(J^+ dJ) at z; encoder -tr(dF F^+) with F the
/// encoder Jacobian at the site. Builds full Jacobians; small nets only.
Vector exact_logdet_grad(const NetworkPair& np, const Matrix& x, GradTarget target,
                         JacobianSite site);

/// Mean ||f'(x_hat) - pinv(g'(z))||_F over rows: how far the pair is from the
/// consistency the single-pass estimators rely on.
double consistency_gap(const NetworkPair& np, const Matrix& x);

}  // namespace fif
