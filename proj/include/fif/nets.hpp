#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fif/autodiff.hpp"
#include "fif/linalg.hpp"

namespace fif {

enum class BlockType { Mlp, Residual };
enum class BlockSpace { Latent, Data };
enum class Side { Encoder, Decoder };

std::string to_string(BlockType b);
std::string to_string(BlockSpace b);

/// Architecture of an encoder/decoder pair.
///
/// The encoder is a plain MLP D -> hidden... -> d. With BlockType::Residual,
/// `res_blocks` residual blocks (each an MLP dim -> block_hidden... -> dim
/// with a skip connection) are added either after the projection (latent
/// space) or before it (data space). The decoder mirrors the encoder with its
/// own parameters.
///
/// `tied` selects the linear model with g(z) = pinv(A) z: a single affine
/// layer per side, Identity activation, zero biases. The decoder is then a
/// function of the encoder and carries no free parameters of its own.
struct ArchSpec {
  int D = 2;
  int d = 1;
  std::vector<int> hidden;
  BlockType block = BlockType::Mlp;
  int res_blocks = 0;
  std::vector<int> block_hidden;
  BlockSpace block_space = BlockSpace::Latent;
  ad::Activation activation = ad::Activation::ReLU;
  bool tied = false;
  std::uint64_t seed = 0;

  void validate() const;
  /// Canonical one-line description; equal strings mean equal architectures.
  std::string describe() const;
  bool operator==(const ArchSpec&) const = default;
};

/// One affine layer, optionally followed by the network activation.
struct Dense {
  int in = 0;
  int out = 0;
  bool activated = false;
  Eigen::Index offset = 0;  // weight (out x in, row-major) then bias (out)

  Eigen::Index param_count() const { return static_cast<Eigen::Index>(out) * in + out; }
};

struct Stage {
  bool residual = false;
  std::vector<Dense> layers;  // for a residual stage: the block body
};

/// Feed-forward network whose parameters live in an external flat vector.
class Network {
 public:
  Network() = default;
  Network(int in_dim, int out_dim, ad::Activation act) : in_(in_dim), out_(out_dim), act_(act) {}

  void add_mlp(const std::vector<int>& widths, bool activate_last);
  void add_residual(int dim, const std::vector<int>& widths);

  int in_dim() const { return in_; }
  int out_dim() const { return out_; }
  ad::Activation activation() const { return act_; }
  Eigen::Index param_count() const { return params_; }
  const std::vector<Stage>& stages() const { return stages_; }

  /// Forward pass without a tape; rows of x are samples.
  Matrix apply(const Vector& params, const Matrix& x) const;

 private:
  friend class BoundNetwork;
  Dense make_dense(int in, int out, bool activated);

  int in_ = 0;
  int out_ = 0;
  ad::Activation act_ = ad::Activation::ReLU;
  std::vector<Stage> stages_;
  Eigen::Index params_ = 0;
};

/// Primal forward pass recorded on a tape, with the pre-activations kept so
/// tangent sweeps can reuse them.
struct Trace {
  ad::Var out;
  std::vector<ad::Var> preacts;  // one per activated dense layer, in order
};

/// A Network whose parameters have been placed on a tape.
class BoundNetwork {
 public:
  BoundNetwork(ad::Tape& tape, const Network& net, int group);

  Trace forward(ad::Var x) const;
  /// Tangent of the network at the trace's primal point. `t` has k rows per
  /// primal row (k probes per sample). The result is graph-connected to the
  /// parameters and to the primal pre-activations.
  ad::Var tangent(const Trace& primal, ad::Var t, int k = 1) const;

  ad::Tape& tape() const { return *tape_; }
  const Network& network() const { return *net_; }

 private:
  struct LayerVars {
    ad::Var w;
    ad::Var b;
  };

  ad::Tape* tape_;
  const Network* net_;
  std::vector<std::vector<LayerVars>> vars_;
};

/// Encoder f: R^D -> R^d and decoder g: R^d -> R^D with flat parameters.
struct NetworkPair {
  ArchSpec spec;
  Network encoder;
  Network decoder;
  Vector phi;
  Vector theta;

  const Network& net(Side s) const { return s == Side::Encoder ? encoder : decoder; }
  const Vector& params(Side s) const { return s == Side::Encoder ? phi : theta; }

  Matrix encode(const Matrix& x) const { return encoder.apply(phi, x); }
  Matrix decode(const Matrix& z) const { return decoder.apply(theta, z); }

  Vector get_params(Side s) const { return params(s); }
  void set_params(Side s, const Vector& v);
};

/// Build and initialize from a spec. Deterministic in spec.seed.
/// Kaiming-uniform for ReLU layers, Xavier-uniform otherwise, zero biases,
/// final encoder layer scaled by 0.1.
NetworkPair build(const ArchSpec& spec);

/// Linear pair with encoder f(x) = A x and decoder g(z) = pinv(A) z, zero biases.
/// A is d x D with full row rank.
NetworkPair linear_pair(const Matrix& a);

/// Tied linear pair with A as the encoder weight.
NetworkPair tied_pair(const Matrix& a);

/// Reset the decoder of a tied pair to pinv(A) and zero both bias vectors.
void retie(NetworkPair& np);

/// Total gradient on phi for a tied pair, given partial gradients with
/// respect to phi and theta. The theta part is pulled back through
/// d pinv(A); bias entries are zeroed since biases are frozen.
Vector tied_gradient(const NetworkPair& np, const Vector& g_phi, const Vector& g_theta);

/// Weight matrix of the i-th dense layer (stage order) of one side.
Matrix layer_weight(const NetworkPair& np, Side side, std::size_t layer);

}  // namespace fif
