#include "fif/nets.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "fif/errors.hpp"
#include "fif/rng.hpp"

namespace fif {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string join(const std::vector<int>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

Eigen::Map<RowMajor> weight_map(Vector& p, const Dense& l) {
  return Eigen::Map<RowMajor>(p.data() + l.offset, l.out, l.in);
}

Eigen::Map<const RowMajor> weight_map(const Vector& p, const Dense& l) {
  return Eigen::Map<const RowMajor>(p.data() + l.offset, l.out, l.in);
}

Eigen::Map<const Eigen::RowVectorXd> bias_map(const Vector& p, const Dense& l) {
  return Eigen::Map<const Eigen::RowVectorXd>(p.data() + l.offset + Eigen::Index{l.out} * l.in,
                                              l.out);
}

void init_dense(Vector& p, const Dense& l, ad::Activation act, double scale, Rng& rng) {
  double bound = 0.0;
  if (act == ad::Activation::ReLU) {
    bound = std::sqrt(6.0 / l.in);
  } else {
    bound = std::sqrt(6.0 / (l.in + l.out));
  }
  auto w = weight_map(p, l);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      w(i, j) = scale * bound * (2.0 * rng.uniform() - 1.0);
    }
  }
  p.segment(l.offset + Eigen::Index{l.out} * l.in, l.out).setZero();
}

}  // namespace

std::string to_string(BlockType b) { return b == BlockType::Mlp ? "mlp" : "residual"; }
std::string to_string(BlockSpace b) { return b == BlockSpace::Latent ? "latent" : "data"; }

void ArchSpec::validate() const {
  if (D < 1 || d < 1) throw std::invalid_argument("ArchSpec: dimensions must be positive");
  if (d > D) {
    throw std::invalid_argument("ArchSpec: latent dimension d=" + std::to_string(d) +
                                " exceeds data dimension D=" + std::to_string(D));
  }
  for (int w : hidden) {
    if (w < 1) throw std::invalid_argument("ArchSpec: hidden widths must be positive");
  }
  for (int w : block_hidden) {
    if (w < 1) throw std::invalid_argument("ArchSpec: block widths must be positive");
  }
  if (res_blocks < 0) throw std::invalid_argument("ArchSpec: res_blocks must be >= 0");
  if (block == BlockType::Residual && res_blocks > 0 && block_hidden.empty()) {
    throw std::invalid_argument("ArchSpec: residual blocks need at least one hidden width");
  }
  if (tied) {
    if (!hidden.empty() || (block == BlockType::Residual && res_blocks > 0) ||
        activation != ad::Activation::Identity) {
      throw std::invalid_argument(
          "ArchSpec: tied requires a single linear layer (no hidden, no blocks, identity)");
    }
  }
}

std::string ArchSpec::describe() const {
  std::ostringstream os;
  os << "D=" << D << " d=" << d << " hidden=[" << join(hidden) << "] block=" << to_string(block)
     << " res_blocks=" << res_blocks << " block_hidden=[" << join(block_hidden)
     << "] block_space=" << to_string(block_space) << " activation=" << ad::to_string(activation)
     << (tied ? " tied" : "") << " seed=" << seed;
  return os.str();
}

Dense Network::make_dense(int in, int out, bool activated) {
  Dense l{in, out, activated, params_};
  params_ += l.param_count();
  return l;
}

void Network::add_mlp(const std::vector<int>& widths, bool activate_last) {
  Stage s;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = i + 2 == widths.size();
    s.layers.push_back(make_dense(widths[i], widths[i + 1], !last || activate_last));
  }
  stages_.push_back(std::move(s));
}

void Network::add_residual(int dim, const std::vector<int>& widths) {
  Stage s;
  s.residual = true;
  std::vector<int> dims{dim};
  dims.insert(dims.end(), widths.begin(), widths.end());
  dims.push_back(dim);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    s.layers.push_back(make_dense(dims[i], dims[i + 1], i + 2 < dims.size()));
  }
  stages_.push_back(std::move(s));
}

Matrix Network::apply(const Vector& params, const Matrix& x) const {
  if (x.cols() != in_) {
    throw DimensionError("Network::apply: input width " + std::to_string(x.cols()) +
                         ", expected " + std::to_string(in_));
  }
  if (params.size() != params_) throw DimensionError("Network::apply: parameter length");
  Matrix h = x;
  for (const Stage& s : stages_) {
    Matrix body = h;
    for (const Dense& l : s.layers) {
      Matrix a = body * weight_map(params, l).transpose();
      a.rowwise() += bias_map(params, l);
      body = l.activated ? ad::apply_activation(a, act_) : std::move(a);
    }
    h = s.residual ? Matrix(h + body) : std::move(body);
  }
  return h;
}

BoundNetwork::BoundNetwork(ad::Tape& tape, const Network& net, int group)
    : tape_(&tape), net_(&net) {
  for (const Stage& s : net.stages()) {
    std::vector<LayerVars> lv;
    for (const Dense& l : s.layers) {
      lv.push_back({tape.param(group, l.offset, l.out, l.in),
                    tape.param(group, l.offset + Eigen::Index{l.out} * l.in, 1, l.out)});
    }
    vars_.push_back(std::move(lv));
  }
}

Trace BoundNetwork::forward(ad::Var x) const {
  ad::Tape& t = *tape_;
  if (t.value(x).cols() != net_->in_dim()) {
    throw DimensionError("BoundNetwork::forward: input width " +
                         std::to_string(t.value(x).cols()) + ", expected " +
                         std::to_string(net_->in_dim()));
  }
  Trace tr;
  ad::Var h = x;
  const auto& stages = net_->stages();
  for (std::size_t si = 0; si < stages.size(); ++si) {
    ad::Var body = h;
    for (std::size_t li = 0; li < stages[si].layers.size(); ++li) {
      const Dense& l = stages[si].layers[li];
      const LayerVars& v = vars_[si][li];
      ad::Var a = t.affine(body, v.w, v.b);
      if (l.activated) {
        tr.preacts.push_back(a);
        body = t.activation(a, net_->activation());
      } else {
        body = a;
      }
    }
    h = stages[si].residual ? t.add(h, body) : body;
  }
  tr.out = h;
  return tr;
}

ad::Var BoundNetwork::tangent(const Trace& primal, ad::Var tv, int k) const {
  ad::Tape& t = *tape_;
  if (t.value(tv).cols() != net_->in_dim()) {
    throw DimensionError("BoundNetwork::tangent: tangent width mismatch");
  }
  std::size_t pre = 0;
  ad::Var h = tv;
  const auto& stages = net_->stages();
  for (std::size_t si = 0; si < stages.size(); ++si) {
    ad::Var body = h;
    for (std::size_t li = 0; li < stages[si].layers.size(); ++li) {
      const Dense& l = stages[si].layers[li];
      body = t.affine(body, vars_[si][li].w);
      if (l.activated) {
        ad::Var slope = t.activation_grad(primal.preacts.at(pre++), net_->activation());
        body = t.mul(t.repeat_rows(slope, k), body);
      }
    }
    h = stages[si].residual ? t.add(h, body) : body;
  }
  return h;
}

void NetworkPair::set_params(Side s, const Vector& v) {
  Vector& target = s == Side::Encoder ? phi : theta;
  if (v.size() != target.size()) {
    throw DimensionError("set_params: expected " + std::to_string(target.size()) +
                         " values, got " + std::to_string(v.size()));
  }
  target = v;
}

NetworkPair build(const ArchSpec& spec) {
  spec.validate();
  NetworkPair np;
  np.spec = spec;
  np.encoder = Network(spec.D, spec.d, spec.activation);
  np.decoder = Network(spec.d, spec.D, spec.activation);

  std::vector<int> enc_widths{spec.D};
  enc_widths.insert(enc_widths.end(), spec.hidden.begin(), spec.hidden.end());
  enc_widths.push_back(spec.d);
  std::vector<int> dec_widths(enc_widths.rbegin(), enc_widths.rend());

  const bool residual = spec.block == BlockType::Residual && spec.res_blocks > 0;
  const bool data_blocks = residual && spec.block_space == BlockSpace::Data;
  const bool latent_blocks = residual && spec.block_space == BlockSpace::Latent;

  if (data_blocks) {
    for (int i = 0; i < spec.res_blocks; ++i) np.encoder.add_residual(spec.D, spec.block_hidden);
  }
  np.encoder.add_mlp(enc_widths, false);
  const std::size_t projection_stage = np.encoder.stages().size() - 1;
  if (latent_blocks) {
    for (int i = 0; i < spec.res_blocks; ++i) np.encoder.add_residual(spec.d, spec.block_hidden);
    for (int i = 0; i < spec.res_blocks; ++i) np.decoder.add_residual(spec.d, spec.block_hidden);
  }
  np.decoder.add_mlp(dec_widths, false);
  if (data_blocks) {
    for (int i = 0; i < spec.res_blocks; ++i) np.decoder.add_residual(spec.D, spec.block_hidden);
  }

  np.phi = Vector::Zero(np.encoder.param_count());
  np.theta = Vector::Zero(np.decoder.param_count());
  Rng enc_rng(spec.seed, {0x656e63});
  Rng dec_rng(spec.seed, {0x646563});
  const auto& enc_stages = np.encoder.stages();
  for (std::size_t si = 0; si < enc_stages.size(); ++si) {
    const auto& layers = enc_stages[si].layers;
    for (std::size_t li = 0; li < layers.size(); ++li) {
      const bool final_projection = si == projection_stage && li + 1 == layers.size();
      init_dense(np.phi, layers[li], spec.activation, final_projection ? 0.1 : 1.0, enc_rng);
    }
  }
  for (const Stage& s : np.decoder.stages()) {
    for (const Dense& l : s.layers) init_dense(np.theta, l, spec.activation, 1.0, dec_rng);
  }
  if (spec.tied) retie(np);
  return np;
}

NetworkPair linear_pair(const Matrix& a) {
  const auto d = static_cast<int>(a.rows());
  const auto D = static_cast<int>(a.cols());
  if (d > D) throw std::invalid_argument("linear_pair: A must be d x D with d <= D");
  const linalg::Svd s = linalg::svd(a);
  if (s.s.size() == 0 || s.s(s.s.size() - 1) <= 1e-12 * s.s(0)) {
    throw RankCollapseError("linear_pair: A is rank deficient");
  }
  ArchSpec spec;
  spec.D = D;
  spec.d = d;
  spec.activation = ad::Activation::Identity;
  NetworkPair np = build(spec);
  const Matrix b = linalg::pinv(a);
  np.phi.setZero();
  np.theta.setZero();
  weight_map(np.phi, np.encoder.stages()[0].layers[0]) = a;
  weight_map(np.theta, np.decoder.stages()[0].layers[0]) = b;
  return np;
}

NetworkPair tied_pair(const Matrix& a) {
  ArchSpec spec;
  spec.D = static_cast<int>(a.cols());
  spec.d = static_cast<int>(a.rows());
  spec.activation = ad::Activation::Identity;
  spec.tied = true;
  NetworkPair np = linear_pair(a);
  np.spec = spec;
  return np;
}

void retie(NetworkPair& np) {
  if (!np.spec.tied) throw std::logic_error("retie: pair is not tied");
  const Dense& le = np.encoder.stages().at(0).layers.at(0);
  const Dense& ld = np.decoder.stages().at(0).layers.at(0);
  np.phi.segment(le.offset + Eigen::Index{le.out} * le.in, le.out).setZero();
  np.theta.setZero();
  const Matrix a = weight_map(np.phi, le);
  if (linalg::svd(a).s.minCoeff() <= 0.0) {
    throw RankCollapseError("retie: encoder weight lost full row rank");
  }
  weight_map(np.theta, ld) = linalg::pinv(a);
}

Vector tied_gradient(const NetworkPair& np, const Vector& g_phi, const Vector& g_theta) {
  const Dense& le = np.encoder.stages().at(0).layers.at(0);
  const Dense& ld = np.decoder.stages().at(0).layers.at(0);
  const Matrix a = weight_map(np.phi, le);
  const Matrix b = weight_map(np.theta, ld);  // pinv(A), D x d
  const Matrix gb = weight_map(g_theta, ld);
  // With A of full row rank: d pinv(A) = -B dA B + (I - B A) dA^T (A A^T)^-1.
  const Matrix gram_inv = (a * a.transpose()).ldlt().solve(Matrix::Identity(a.rows(), a.rows()));
  const Matrix proj = Matrix::Identity(a.cols(), a.cols()) - b * a;
  Vector out = Vector::Zero(g_phi.size());
  weight_map(out, le) =
      Matrix(weight_map(g_phi, le)) - b.transpose() * gb * b.transpose() +
      gram_inv * gb.transpose() * proj;
  return out;
}

Matrix layer_weight(const NetworkPair& np, Side side, std::size_t layer) {
  const Network& net = np.net(side);
  std::size_t i = 0;
  for (const Stage& s : net.stages()) {
    for (const Dense& l : s.layers) {
      if (i++ == layer) return weight_map(np.params(side), l);
    }
  }
  throw std::out_of_range("layer_weight: no such layer");
}

}  // namespace fif
