#include "fif/surrogate.hpp"

#include <cmath>
#include <sstream>

#include "fif/errors.hpp"
#include "fif/jacobian.hpp"

namespace fif {

namespace {

Matrix repeat_rows(const Matrix& m, int k) {
  Matrix out(m.rows() * k, m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (int j = 0; j < k; ++j) out.row(r * k + j) = m.row(r);
  }
  return out;
}

/// Row i of the result is cot_i^T J(x_{i / k}).
Matrix batched_vjp(const NetworkPair& np, Side side, const Matrix& x, const Matrix& cot, int k) {
  Recorded rec = eval(np, side, repeat_rows(x, k));
  return vjp(rec, cot).input_grad;
}

void check_noise(const NoiseBatch& noise, Eigen::Index rows, int dim, const char* what) {
  if (noise.dim() != dim) {
    throw DimensionError(std::string(what) + ": probe dimension " + std::to_string(noise.dim()) +
                         ", expected " + std::to_string(dim));
  }
  if (noise.eps.rows() != rows * noise.k) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(noise.k) +
                         " probes per sample for " + std::to_string(rows) + " samples");
  }
}

/// Per-sample mean over k probe rows, signed.
SurrogateTerm finish(ad::Tape& t, ad::Var per_probe, int k, double sign) {
  SurrogateTerm term;
  term.sign = sign;
  term.value = t.scale(t.group_sum_rows(per_probe, k), sign / k);
  term.detached_value = t.value(term.value).mean();
  return term;
}

void require_full_rank(const linalg::Svd& s, const char* what) {
  if (s.s.size() == 0 || !(s.s(s.s.size() - 1) > 1e-12 * s.s(0))) {
    throw RankCollapseError(std::string(what) + ": Jacobian is rank deficient");
  }
}

}  // namespace

std::string to_string(EstimatorVariant v) {
  std::string s = v.target == GradTarget::Encoder ? "encoder" : "decoder";
  s += v.space == TraceSpace::Latent ? "/latent" : "/data";
  s += v.site == JacobianSite::OffManifold ? "/off" : "/on";
  return s;
}

EstimatorVariant variant_from_string(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  for (std::string p; std::getline(ss, p, '/');) parts.push_back(p);
  auto bad = [&] { return std::invalid_argument("invalid estimator variant '" + s + "'"); };
  if (parts.size() != 3) throw bad();
  EstimatorVariant v;
  if (parts[0] == "encoder") v.target = GradTarget::Encoder;
  else if (parts[0] == "decoder") v.target = GradTarget::Decoder;
  else throw bad();
  if (parts[1] == "latent") v.space = TraceSpace::Latent;
  else if (parts[1] == "data") v.space = TraceSpace::Data;
  else throw bad();
  if (parts[2] == "off") v.site = JacobianSite::OffManifold;
  else if (parts[2] == "on") v.site = JacobianSite::OnManifold;
  else throw bad();
  return v;
}

std::vector<EstimatorVariant> table_variants(JacobianSite site) {
  std::vector<EstimatorVariant> out;
  for (GradTarget t : {GradTarget::Encoder, GradTarget::Decoder}) {
    for (TraceSpace s : {TraceSpace::Latent, TraceSpace::Data}) out.push_back({t, s, site});
  }
  return out;
}

PairGraph::PairGraph(const NetworkPair& np, const Matrix& x)
    : np_(&np),
      phi_group_(tape_.add_group(np.phi)),
      theta_group_(tape_.add_group(np.theta)),
      enc_(tape_, np.encoder, phi_group_),
      dec_(tape_, np.decoder, theta_group_) {
  x_ = tape_.constant(x);
  fx_ = enc_.forward(x_);
  gz_ = dec_.forward(fx_.out);
}

const Trace& PairGraph::encoder_at(JacobianSite site) {
  if (site == JacobianSite::OffManifold) return fx_;
  if (!f_on_) f_on_ = enc_.forward(gz_.out);
  return *f_on_;
}

const Trace& PairGraph::decoder_at_detached_z() {
  if (!g_det_) g_det_ = dec_.forward(tape_.stop_gradient(fx_.out));
  return *g_det_;
}

const Matrix& PairGraph::site_value(JacobianSite site) {
  return tape_.value(site == JacobianSite::OffManifold ? x_ : gz_.out);
}

std::pair<Vector, Vector> PairGraph::gradients(ad::Var scalar) {
  ad::Gradients g = tape_.backward(scalar);
  return {std::move(g.params[static_cast<std::size_t>(phi_group_)]),
          std::move(g.params[static_cast<std::size_t>(theta_group_)])};
}

SurrogateTerm surrogate_logdet(PairGraph& g, const NoiseBatch& noise, EstimatorVariant v) {
  const NetworkPair& np = g.pair();
  const int k = noise.k;
  check_noise(noise, g.rows(), v.probe_dim(np.spec.D, np.spec.d), "surrogate_logdet");
  ad::Tape& t = g.tape();
  const ad::Var eps = t.constant(noise.eps);
  ad::Var per_probe;

  if (v.target == GradTarget::Encoder) {
    const Trace& f_site = g.encoder_at(v.site);
    if (v.space == TraceSpace::Latent) {
      // -eps^T f'(site) sg(g'(z) eps)
      const ad::Var ge = t.stop_gradient(g.decoder().tangent(g.decoder_trace(), eps, k));
      per_probe = t.row_dot(eps, g.encoder().tangent(f_site, ge, k));
    } else {
      // -sg(eps^T g'(z)) f'(site) eps
      const Matrix w = batched_vjp(np, Side::Decoder, t.value(g.z()), noise.eps, k);
      per_probe = t.row_dot(t.constant(w), g.encoder().tangent(f_site, eps, k));
    }
  } else {
    const Trace& g_z = g.decoder_at_detached_z();
    if (v.space == TraceSpace::Latent) {
      // +sg(eps^T f'(site)) g'(z) eps
      const Matrix w = batched_vjp(np, Side::Encoder, g.site_value(v.site), noise.eps, k);
      per_probe = t.row_dot(t.constant(w), g.decoder().tangent(g_z, eps, k));
    } else {
      // +eps^T g'(z) sg(f'(site) eps)
      const Trace& f_site = g.encoder_at(v.site);
      const ad::Var fe = t.stop_gradient(g.encoder().tangent(f_site, eps, k));
      per_probe = t.row_dot(eps, g.decoder().tangent(g_z, fe, k));
    }
  }
  return finish(t, per_probe, k, v.sign());
}

Vector surrogate_grad(const NetworkPair& np, const Matrix& x, const NoiseBatch& noise,
                      EstimatorVariant v) {
  PairGraph g(np, x);
  const SurrogateTerm term = surrogate_logdet(g, noise, v);
  ad::Tape& t = g.tape();
  const ad::Var mean = t.scale(t.sum(term.value), 1.0 / static_cast<double>(g.rows()));
  auto [phi, theta] = g.gradients(mean);
  return v.target == GradTarget::Encoder ? phi : theta;
}

SurrogateTerm cg_logdet(PairGraph& g, const NoiseBatch& noise, double tol, int max_iter,
                        CgStats* stats) {
  const NetworkPair& np = g.pair();
  const int k = noise.k;
  check_noise(noise, g.rows(), np.spec.d, "cg_logdet");
  ad::Tape& t = g.tape();
  const Matrix zr = repeat_rows(t.value(g.z()), k);

  // J^T J applied row-wise, matrix-free: one jvp and one vjp through g.
  const linalg::RowOperator normal_op = [&](const Matrix& w) {
    const Matrix jw = jvp(np, Side::Decoder, zr, w).jv;
    Recorded rec = eval(np, Side::Decoder, zr);
    return vjp(rec, jw).input_grad;
  };
  int iters = 0;
  const Matrix w = linalg::cg_solve_rows(normal_op, noise.eps, tol, max_iter, &iters);
  if (stats != nullptr) stats->iterations = iters;

  // d(w^T J^T J eps) = (J eps)^T dJ w + (J w)^T dJ eps. Both tangents are
  // taken at a detached z so only the decoder parameters receive gradient.
  const Trace& g_z = g.decoder_at_detached_z();
  const ad::Var je = g.decoder().tangent(g_z, t.constant(noise.eps), k);
  const ad::Var jw = g.decoder().tangent(g_z, t.constant(w), k);
  const ad::Var both =
      t.add(t.row_dot(t.stop_gradient(je), jw), t.row_dot(t.stop_gradient(jw), je));
  // both/2 has the right gradient but twice the reference value; subtracting a
  // detached quarter restores the value without touching the gradient.
  const ad::Var half = t.scale(both, 0.5);
  const ad::Var per_probe = t.sub(half, t.scale(t.stop_gradient(half), 0.5));
  return finish(t, per_probe, k, 1.0);
}

Vector cg_logdet_grad(const NetworkPair& np, const Matrix& x, const NoiseBatch& noise,
                      double tol, int max_iter) {
  PairGraph g(np, x);
  const SurrogateTerm term = cg_logdet(g, noise, tol, max_iter);
  ad::Tape& t = g.tape();
  const ad::Var mean = t.scale(t.sum(term.value), 1.0 / static_cast<double>(g.rows()));
  return g.gradients(mean).second;
}

double exact_logdet(const NetworkPair& np, const Vector& z) {
  const linalg::Svd s = linalg::svd(full_jacobian(np, Side::Decoder, z));
  if (s.s.size() == 0 || !(s.s(s.s.size() - 1) > 0.0)) {
    throw RankCollapseError("exact_logdet: decoder Jacobian has a zero singular value");
  }
  return s.s.array().log().sum();
}

Vector exact_logdet_grad(const NetworkPair& np, const Matrix& x, GradTarget target,
                         JacobianSite site) {
  PairGraph g(np, x);
  ad::Tape& t = g.tape();
  const Eigen::Index rows = g.rows();
  const int d = np.spec.d;
  Matrix basis(rows * d, d);
  for (Eigen::Index r = 0; r < rows; ++r) basis.middleRows(r * d, d).setIdentity();

  ad::Var total;
  if (target == GradTarget::Decoder) {
    // sum_i (J^+ row i) . (dJ e_i)
    const std::vector<Matrix> js = jacobians(np, Side::Decoder, t.value(g.z()));
    Matrix pinv_rows(rows * d, np.spec.D);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto& j = js[static_cast<std::size_t>(r)];
      require_full_rank(linalg::svd(j), "exact_logdet_grad");
      pinv_rows.middleRows(r * d, d) = linalg::pinv(j);
    }
    const ad::Var dj = g.decoder().tangent(g.decoder_at_detached_z(), t.constant(basis), d);
    total = t.sum(t.row_dot(t.constant(pinv_rows), dj));
  } else {
    // -sum_i e_i . (dF F^+ e_i)
    const std::vector<Matrix> fs = jacobians(np, Side::Encoder, g.site_value(site));
    Matrix pinv_cols(rows * d, np.spec.D);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto& f = fs[static_cast<std::size_t>(r)];
      require_full_rank(linalg::svd(f), "exact_logdet_grad");
      pinv_cols.middleRows(r * d, d) = linalg::pinv(f).transpose();
    }
    const ad::Var df = g.encoder().tangent(g.encoder_at(site), t.constant(pinv_cols), d);
    total = t.scale(t.sum(t.row_dot(t.constant(basis), df)), -1.0);
  }
  const ad::Var mean = t.scale(total, 1.0 / static_cast<double>(rows));
  auto [phi, theta] = g.gradients(mean);
  return target == GradTarget::Encoder ? phi : theta;
}

double consistency_gap(const NetworkPair& np, const Matrix& x) {
  const Matrix z = np.encode(x);
  const Matrix xh = np.decode(z);
  const std::vector<Matrix> fs = jacobians(np, Side::Encoder, xh);
  const std::vector<Matrix> gs = jacobians(np, Side::Decoder, z);
  double acc = 0.0;
  for (std::size_t i = 0; i < fs.size(); ++i) acc += (fs[i] - linalg::pinv(gs[i])).norm();
  return fs.empty() ? 0.0 : acc / static_cast<double>(fs.size());
}

}  // namespace fif
