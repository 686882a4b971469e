#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "cogdiag/matrix.hpp"
#include "cogdiag/rng.hpp"

namespace cogdiag {

// A named trainable matrix. Gradients are written by Tape::backward and
// consumed by the optimizer. `nonneg` marks weights that are projected to
// >= 0 after every optimizer step (the monotonicity constraint on the
// interaction MLP and transfer head).
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool nonneg = false;

  Parameter() = default;
  Parameter(std::string n, Matrix v, bool nn = false)
      : name(std::move(n)), value(std::move(v)), grad(value.rows, value.cols), nonneg(nn) {}
};

using NodeId = int;

// Records the primitive operations of one forward pass and replays them
// backward in strict reverse order of creation (creation order is a
// topological order because operands must already exist). One tape per
// mini-batch; single writer, single thread at the op-sequence level. The
// kernels inside an op may use OpenMP but stay bitwise deterministic.
class Tape {
 public:
  // Constant leaf; no gradient flows into it.
  NodeId input(Matrix m);

  // Trainable leaf bound to an external Parameter. Calling twice with the
  // same Parameter returns the same node, so gradients from every use
  // accumulate together.
  NodeId param(Parameter& p);

  NodeId matmul(NodeId a, NodeId b);     // a*b
  NodeId matmul_nt(NodeId a, NodeId b);  // a*b^T
  NodeId add(NodeId a, NodeId b);
  NodeId add_row(NodeId a, NodeId brow);     // broadcast 1xH row over rows of a
  NodeId add_scalar(NodeId a, NodeId s);     // broadcast 1x1 over all entries
  NodeId sub(NodeId a, NodeId b);
  NodeId hadamard(NodeId a, NodeId b);
  NodeId row_scale(NodeId a, NodeId s);  // s is rows(a) x 1
  NodeId col_scale(NodeId a, NodeId w);  // w is 1 x cols(a)
  NodeId pairwise_hadamard(NodeId a, NodeId b);
  NodeId reshape(NodeId a, int rows, int cols);
  NodeId sigmoid(NodeId x);

  // Training-mode dropout zeroes entries with probability `rate` and scales
  // survivors by 1/(1-rate); inference mode is the identity. The mask is
  // recorded for backward. rate must be in [0, 1).
  NodeId dropout(NodeId x, double rate, Rng& rng, bool training);

  // Sum-form binary cross entropy of a column of predictions against
  // targets in [0,1]; yields a 1x1 node.
  NodeId bce_loss(NodeId pred, const std::vector<double>& truth);

  NodeId scale(NodeId a, double c);

  const Matrix& value(NodeId id) const { return nodes_[id].value; }
  double scalar(NodeId id) const { return nodes_[id].value(0, 0); }

  // Zeroes every gradient buffer, seeds d(root)/d(root) = 1, sweeps the tape
  // in reverse, then copies leaf gradients into their bound Parameters.
  void backward(NodeId root);

  const Matrix& grad(NodeId id) const { return nodes_[id].grad; }

 private:
  enum class Op {
    kLeaf,
    kGatherRows,
    kMatMul,
    kMatMulNT,
    kAdd,
    kAddRow,
    kAddScalar,
    kSub,
    kHadamard,
    kRowScale,
    kColScale,
    kPairwise,
    kReshape,
    kSigmoid,
    kDropout,
    kBce,
    kScale,
  };

  struct Node {
    Op op;
    NodeId a = -1;
    NodeId b = -1;
    Matrix value;
    Matrix grad;
    Parameter* bound = nullptr;
    std::vector<int> rows;      // gather indices
    std::vector<double> truth;  // bce targets
    Matrix mask;                // dropout multiplier mask (empty = identity)
    double c = 0.0;             // scale factor
  };

 public:
  // Row gather from a parameter or input node; backward scatters gradients
  // back into the gathered rows (duplicates accumulate).
  NodeId gather_rows(NodeId src, std::vector<int> rows);

 private:
  NodeId push(Node n);
  void backward_node(Node& n);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, NodeId> param_nodes_;
};

}  // namespace cogdiag
