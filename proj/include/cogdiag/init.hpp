#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cogdiag/kernels.hpp"
#include "cogdiag/rng.hpp"
#include "cogdiag/tape.hpp"

namespace cogdiag::detail {

inline double xavier_bound(int fan_in, int fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

// Keyed per-entry uniform in [-bound, bound]; non-negative parameters take
// the magnitude of the draw.
inline Matrix init_matrix(std::uint64_t seed, const std::string& name, int rows, int cols,
                          double bound, bool nonneg) {
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double v = (2.0 * Rng::keyed_uniform01(seed, name, r, c) - 1.0) * bound;
      m(r, c) = nonneg ? std::fabs(v) : v;
    }
  }
  return m;
}

// sigmoid(W3 * sigmoid(W2 * sigmoid(W1*x + b1) + b2) + b3) for one input row
inline double mlp3(std::span<const double> x, const Parameter& w1, const Parameter& b1,
                   const Parameter& w2, const Parameter& b2, const Parameter& w3,
                   const Parameter& b3) {
  std::vector<double> f1(w1.value.rows);
  for (int i = 0; i < w1.value.rows; ++i) {
    double acc = b1.value(0, i);
    const double* wr = w1.value.row(i);
    for (int j = 0; j < w1.value.cols; ++j) acc += wr[j] * x[j];
    f1[i] = kernels::stable_sigmoid(acc);
  }
  std::vector<double> f2(w2.value.rows);
  for (int i = 0; i < w2.value.rows; ++i) {
    double acc = b2.value(0, i);
    const double* wr = w2.value.row(i);
    for (int j = 0; j < w2.value.cols; ++j) acc += wr[j] * f1[j];
    f2[i] = kernels::stable_sigmoid(acc);
  }
  double acc = b3.value(0, 0);
  for (int j = 0; j < w3.value.cols; ++j) acc += w3.value(0, j) * f2[j];
  return kernels::stable_sigmoid(acc);
}

}  // namespace cogdiag::detail
