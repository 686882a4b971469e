#include "cogdiag/tape.hpp"

#include <cmath>

#include "cogdiag/errors.hpp"
#include "cogdiag/kernels.hpp"

namespace cogdiag {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

}  // namespace

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

NodeId Tape::input(Matrix m) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(m);
  return push(std::move(n));
}

NodeId Tape::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return it->second;
  Node n;
  n.op = Op::kLeaf;
  n.value = p.value;
  n.bound = &p;
  const NodeId id = push(std::move(n));
  param_nodes_.emplace(&p, id);
  return id;
}

NodeId Tape::gather_rows(NodeId src, std::vector<int> rows) {
  const Matrix& s = nodes_[src].value;
  Node n;
  n.op = Op::kGatherRows;
  n.a = src;
  n.rows = std::move(rows);
  n.value = Matrix(static_cast<int>(n.rows.size()), s.cols);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n.value.rows; ++i) {
    const double* sr = s.row(n.rows[i]);
    double* o = n.value.row(i);
    for (int j = 0; j < s.cols; ++j) o[j] = sr[j];
  }
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kMatMul;
  n.a = a;
  n.b = b;
  kernels::matmul(nodes_[a].value, nodes_[b].value, n.value);
  return push(std::move(n));
}

NodeId Tape::matmul_nt(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kMatMulNT;
  n.a = a;
  n.b = b;
  kernels::matmul_nt(nodes_[a].value, nodes_[b].value, n.value);
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  kernels::add(nodes_[a].value, nodes_[b].value, n.value);
  return push(std::move(n));
}

NodeId Tape::add_row(NodeId a, NodeId brow) {
  Node n;
  n.op = Op::kAddRow;
  n.a = a;
  n.b = brow;
  kernels::add_row(nodes_[a].value, nodes_[brow].value, n.value);
  return push(std::move(n));
}

NodeId Tape::add_scalar(NodeId a, NodeId s) {
  const Matrix& sv = nodes_[s].value;
  require(sv.rows == 1 && sv.cols == 1, "add_scalar: scalar operand must be 1x1, got " + sv.shape_str());
  Node n;
  n.op = Op::kAddScalar;
  n.a = a;
  n.b = s;
  const Matrix& av = nodes_[a].value;
  n.value = Matrix(av.rows, av.cols);
  const double c = sv(0, 0);
  for (std::size_t i = 0; i < av.size(); ++i) n.value.data[i] = av.data[i] + c;
  return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kSub;
  n.a = a;
  n.b = b;
  kernels::sub(nodes_[a].value, nodes_[b].value, n.value);
  return push(std::move(n));
}

NodeId Tape::hadamard(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kHadamard;
  n.a = a;
  n.b = b;
  kernels::hadamard(nodes_[a].value, nodes_[b].value, n.value);
  return push(std::move(n));
}

NodeId Tape::row_scale(NodeId a, NodeId s) {
  Node n;
  n.op = Op::kRowScale;
  n.a = a;
  n.b = s;
  kernels::row_scale(nodes_[a].value, nodes_[s].value, n.value);
  return push(std::move(n));
}

NodeId Tape::col_scale(NodeId a, NodeId w) {
  Node n;
  n.op = Op::kColScale;
  n.a = a;
  n.b = w;
  kernels::col_scale(nodes_[a].value, nodes_[w].value, n.value);
  return push(std::move(n));
}

NodeId Tape::pairwise_hadamard(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kPairwise;
  n.a = a;
  n.b = b;
  kernels::pairwise_hadamard(nodes_[a].value, nodes_[b].value, n.value);
  return push(std::move(n));
}

NodeId Tape::reshape(NodeId a, int rows, int cols) {
  const Matrix& av = nodes_[a].value;
  require(static_cast<std::size_t>(rows) * cols == av.size(),
          "reshape: cannot view " + av.shape_str() + " as " + std::to_string(rows) + "x" +
              std::to_string(cols));
  Node n;
  n.op = Op::kReshape;
  n.a = a;
  n.value = av;
  n.value.rows = rows;
  n.value.cols = cols;
  return push(std::move(n));
}

NodeId Tape::sigmoid(NodeId x) {
  Node n;
  n.op = Op::kSigmoid;
  n.a = x;
  kernels::sigmoid(nodes_[x].value, n.value);
  return push(std::move(n));
}

NodeId Tape::dropout(NodeId x, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout: rate must be in [0,1), got " + std::to_string(rate));
  }
  Node n;
  n.op = Op::kDropout;
  n.a = x;
  const Matrix& xv = nodes_[x].value;
  if (!training || rate == 0.0) {
    n.value = xv;  // identity; empty mask
    return push(std::move(n));
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  n.mask = Matrix(xv.rows, xv.cols);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    n.mask.data[i] = rng.bernoulli(rate) ? 0.0 : keep_scale;
  }
  kernels::hadamard(xv, n.mask, n.value);
  return push(std::move(n));
}

NodeId Tape::bce_loss(NodeId pred, const std::vector<double>& truth) {
  const Matrix& p = nodes_[pred].value;
  require(p.size() == truth.size() && !truth.empty(),
          "bce_loss: " + std::to_string(p.size()) + " predictions vs " +
              std::to_string(truth.size()) + " targets");
  Node n;
  n.op = Op::kBce;
  n.a = pred;
  n.truth = truth;
  n.value = Matrix(1, 1);
  n.value(0, 0) = kernels::bce_sum(p.data, truth);
  return push(std::move(n));
}

NodeId Tape::scale(NodeId a, double c) {
  Node n;
  n.op = Op::kScale;
  n.a = a;
  n.c = c;
  const Matrix& av = nodes_[a].value;
  n.value = Matrix(av.rows, av.cols);
  for (std::size_t i = 0; i < av.size(); ++i) n.value.data[i] = c * av.data[i];
  return push(std::move(n));
}

void Tape::backward(NodeId root) {
  require(nodes_[root].value.rows == 1 && nodes_[root].value.cols == 1,
          "backward: root must be scalar, got " + nodes_[root].value.shape_str());
  for (Node& n : nodes_) {
    n.grad = Matrix::zeros(n.value.rows, n.value.cols);
  }
  nodes_[root].grad(0, 0) = 1.0;
  for (NodeId i = root; i >= 0; --i) {
    backward_node(nodes_[i]);
  }
  for (Node& n : nodes_) {
    if (n.bound != nullptr) n.bound->grad = n.grad;
  }
}

void Tape::backward_node(Node& n) {
  const Matrix& g = n.grad;
  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kGatherRows: {
      Matrix& ga = nodes_[n.a].grad;
      // scatter kept serial: duplicate rows accumulate deterministically
      for (int i = 0; i < n.value.rows; ++i) {
        double* dst = ga.row(n.rows[i]);
        const double* src = g.row(i);
        for (int j = 0; j < g.cols; ++j) dst[j] += src[j];
      }
      break;
    }
    case Op::kMatMul:
      kernels::matmul_nt_acc(g, nodes_[n.b].value, nodes_[n.a].grad);  // dA += g*B^T
      kernels::matmul_tn_acc(nodes_[n.a].value, g, nodes_[n.b].grad);  // dB += A^T*g
      break;
    case Op::kMatMulNT:
      kernels::matmul_acc(g, nodes_[n.b].value, nodes_[n.a].grad);     // dA += g*B
      kernels::matmul_tn_acc(g, nodes_[n.a].value, nodes_[n.b].grad);  // dB += g^T*A
      break;
    case Op::kAdd:
      kernels::axpy_acc(1.0, g, nodes_[n.a].grad);
      kernels::axpy_acc(1.0, g, nodes_[n.b].grad);
      break;
    case Op::kAddRow: {
      kernels::axpy_acc(1.0, g, nodes_[n.a].grad);
      Matrix& gb = nodes_[n.b].grad;
#pragma omp parallel for schedule(static)
      for (int j = 0; j < g.cols; ++j) {
        double acc = 0.0;
        for (int i = 0; i < g.rows; ++i) acc += g(i, j);
        gb(0, j) += acc;
      }
      break;
    }
    case Op::kAddScalar: {
      kernels::axpy_acc(1.0, g, nodes_[n.a].grad);
      double acc = 0.0;
      for (double v : g.data) acc += v;
      nodes_[n.b].grad(0, 0) += acc;
      break;
    }
    case Op::kSub:
      kernels::axpy_acc(1.0, g, nodes_[n.a].grad);
      kernels::axpy_acc(-1.0, g, nodes_[n.b].grad);
      break;
    case Op::kHadamard:
      kernels::hadamard_acc(g, nodes_[n.b].value, nodes_[n.a].grad);
      kernels::hadamard_acc(g, nodes_[n.a].value, nodes_[n.b].grad);
      break;
    case Op::kRowScale: {
      const Matrix& a = nodes_[n.a].value;
      const Matrix& s = nodes_[n.b].value;
      Matrix& ga = nodes_[n.a].grad;
      Matrix& gs = nodes_[n.b].grad;
#pragma omp parallel for schedule(static)
      for (int i = 0; i < g.rows; ++i) {
        const double si = s(i, 0);
        double acc = 0.0;
        for (int j = 0; j < g.cols; ++j) {
          ga(i, j) += g(i, j) * si;
          acc += g(i, j) * a(i, j);
        }
        gs(i, 0) += acc;
      }
      break;
    }
    case Op::kColScale: {
      const Matrix& a = nodes_[n.a].value;
      const Matrix& w = nodes_[n.b].value;
      Matrix& ga = nodes_[n.a].grad;
      Matrix& gw = nodes_[n.b].grad;
#pragma omp parallel for schedule(static)
      for (int j = 0; j < g.cols; ++j) {
        const double wj = w(0, j);
        double acc = 0.0;
        for (int i = 0; i < g.rows; ++i) {
          ga(i, j) += g(i, j) * wj;
          acc += g(i, j) * a(i, j);
        }
        gw(0, j) += acc;
      }
      break;
    }
    case Op::kPairwise: {
      const Matrix& a = nodes_[n.a].value;
      const Matrix& b = nodes_[n.b].value;
      Matrix& ga = nodes_[n.a].grad;
      Matrix& gb = nodes_[n.b].grad;
      const int kb = b.rows;
#pragma omp parallel for schedule(static)
      for (int i = 0; i < a.rows; ++i) {
        double* gar = ga.row(i);
        for (int k = 0; k < kb; ++k) {
          const double* gr = g.row(i * kb + k);
          const double* br = b.row(k);
          for (int j = 0; j < a.cols; ++j) gar[j] += gr[j] * br[j];
        }
      }
#pragma omp parallel for schedule(static)
      for (int k = 0; k < kb; ++k) {
        double* gbr = gb.row(k);
        for (int i = 0; i < a.rows; ++i) {
          const double* gr = g.row(i * kb + k);
          const double* ar = a.row(i);
          for (int j = 0; j < a.cols; ++j) gbr[j] += gr[j] * ar[j];
        }
      }
      break;
    }
    case Op::kReshape: {
      Matrix& ga = nodes_[n.a].grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
      break;
    }
    case Op::kSigmoid:
      kernels::sigmoid_grad_acc(n.value, g, nodes_[n.a].grad);
      break;
    case Op::kDropout:
      if (n.mask.size() == 0) {
        kernels::axpy_acc(1.0, g, nodes_[n.a].grad);
      } else {
        kernels::hadamard_acc(g, n.mask, nodes_[n.a].grad);
      }
      break;
    case Op::kBce: {
      const Matrix& y = nodes_[n.a].value;
      Matrix& gy = nodes_[n.a].grad;
      const double gs = g(0, 0);
      for (std::size_t i = 0; i < y.size(); ++i) {
        double yi = y.data[i];
        yi = yi < kernels::kBceEps ? kernels::kBceEps
                                   : (yi > 1.0 - kernels::kBceEps ? 1.0 - kernels::kBceEps : yi);
        gy.data[i] += gs * (yi - n.truth[i]) / (yi * (1.0 - yi));
      }
      break;
    }
    case Op::kScale:
      kernels::axpy_acc(n.c, g, nodes_[n.a].grad);
      break;
  }
}

}  // namespace cogdiag
