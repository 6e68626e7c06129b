#pragma once

#include <deque>
#include <string>
#include <vector>

#include "fif/linalg.hpp"

namespace fif::ad {

enum class Activation { Identity, ReLU, SiLU, Tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Elementwise activation and its first two derivatives.
Matrix apply_activation(const Matrix& a, Activation f);
Matrix activation_d1(const Matrix& a, Activation f);
Matrix activation_d2(const Matrix& a, Activation f);

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Gradients produced by one reverse sweep.
struct Gradients {
  std::vector<Vector> params;  // one flat vector per registered parameter group
  std::vector<std::pair<int, Matrix>> inputs;

  const Matrix& input(Var v) const;
};

/// Recorded computation over dense row-batched matrices.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order. Values are computed eagerly and cached; references
/// returned by value() stay valid as the tape grows. A tape supports
/// exactly one reverse sweep; a second call to backward() throws.
///
/// Parameter leaves read from flat vectors registered with add_group(); the
/// vectors must outlive the tape. Parameter gradients come back in the same
/// flat layout.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  int add_group(const Vector& flat);

  /// rows x cols block stored row-major at `offset` in group `group`.
  Var param(int group, Eigen::Index offset, Eigen::Index rows, Eigen::Index cols);
  Var constant(Matrix v);
  Var input(Matrix v);

  /// x * w^T (+ b broadcast over rows); pass an invalid Var for no bias.
  Var affine(Var x, Var w, Var b = {});
  Var activation(Var a, Activation f);
  /// f'(a) elementwise; its reverse rule uses f''.
  Var activation_grad(Var a, Activation f);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  /// Identity forward, zero gradient backward.
  Var stop_gradient(Var a);
  /// Row-wise inner product, result is rows x 1.
  Var row_dot(Var a, Var b);
  Var row_sqnorm(Var a);
  /// Sum of all entries, result is 1 x 1.
  Var sum(Var a);
  /// Each row repeated k times consecutively.
  Var repeat_rows(Var a, int k);
  /// Sum over consecutive groups of k rows (adjoint of repeat_rows).
  Var group_sum_rows(Var a, int k);
  Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
  Var concat_cols(Var a, Var b);

  const Matrix& value(Var v) const;
  double scalar(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  /// Reverse sweep from `out` seeded with `seed` (same shape as value(out)).
  Gradients backward(Var out, const Matrix& seed);
  /// Reverse sweep from a 1x1 node with seed 1.
  Gradients backward(Var out);

 private:
  enum class Op {
    Param, Constant, Input, Affine, Act, ActGrad, Add, Sub, Mul, Scale, StopGrad, RowDot,
    RowSqNorm, Sum, RepeatRows, GroupSumRows, SliceCols, ConcatCols
  };

  struct Node {
    Op op;
    Matrix value;
    int a = -1;
    int b = -1;
    int c = -1;
    double scalar = 0.0;
    Eigen::Index i0 = 0;
    Eigen::Index i1 = 0;
    Activation act = Activation::Identity;
  };

  Var push(Node n);
  const Node& node(Var v) const;

  std::deque<Node> nodes_;  // deque: value() references survive appends
  std::vector<const Vector*> groups_;
  std::vector<int> inputs_;
  bool consumed_ = false;
};

}  // namespace fif::ad
