#pragma once

// Shared helpers for the test suites: random matrices, a tape reduction to
// a scalar, and a test-local central finite-difference oracle kept
// independent of the library's own grad_check.

#include <cmath>
#include <functional>
#include <vector>

#include "cogdiag/matrix.hpp"
#include "cogdiag/rng.hpp"
#include "cogdiag/tape.hpp"

namespace testutil {

inline cogdiag::Matrix random_matrix(cogdiag::Rng& rng, int r, int c, double lo = -1.0,
                                     double hi = 1.0) {
  cogdiag::Matrix m(r, c);
  for (auto& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

// sum of all entries as a 1x1 node, built from ones-matmuls
inline cogdiag::NodeId sum_all(cogdiag::Tape& t, cogdiag::NodeId node) {
  const auto& v = t.value(node);
  const cogdiag::NodeId ones_row = t.input(cogdiag::Matrix(1, v.rows, 1.0));
  const cogdiag::NodeId ones_col = t.input(cogdiag::Matrix(v.cols, 1, 1.0));
  return t.matmul(t.matmul(ones_row, node), ones_col);
}

// Central finite differences of `loss` w.r.t. every entry of `param`,
// evaluated by rebuilding the computation from scratch per probe.
inline cogdiag::Matrix finite_difference(const std::function<double()>& loss,
                                         cogdiag::Parameter& param, double h = 1e-6) {
  cogdiag::Matrix grad(param.value.rows, param.value.cols);
  for (std::size_t i = 0; i < param.value.size(); ++i) {
    const double saved = param.value.data[i];
    param.value.data[i] = saved + h;
    const double up = loss();
    param.value.data[i] = saved - h;
    const double dn = loss();
    param.value.data[i] = saved;
    grad.data[i] = (up - dn) / (2.0 * h);
  }
  return grad;
}

inline double max_rel_err(const cogdiag::Matrix& a, const cogdiag::Matrix& b,
                          double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::fabs(a.data[i]), std::fabs(b.data[i]), floor});
    worst = std::max(worst, std::fabs(a.data[i] - b.data[i]) / denom);
  }
  return worst;
}

}  // namespace testutil
