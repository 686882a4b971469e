#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace cogdiag {

// Dense row-major matrix of 64-bit reals. The only array type in the
// project; row/column vectors are 1xN or Nx1 matrices.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

  static Matrix zeros(int r, int c) { return Matrix(r, c, 0.0); }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rws) {
    Matrix m(static_cast<int>(rws.size()), rws.size() ? static_cast<int>(rws.begin()->size()) : 0);
    int r = 0;
    for (const auto& rw : rws) {
      int c = 0;
      for (double v : rw) m(r, c++) = v;
      ++r;
    }
    return m;
  }

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  std::string shape_str() const { return std::to_string(rows) + "x" + std::to_string(cols); }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
  }
};

}  // namespace cogdiag
