#include "cogdiag/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>

#include "cogdiag/errors.hpp"

namespace cogdiag::kernels {

namespace {

void require(bool ok, const char* op, const Matrix& a, const Matrix& b) {
  if (!ok) {
    throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                         b.shape_str());
  }
}

}  // namespace

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  require(a.cols == b.rows, "matmul", a, b);
  out = Matrix::zeros(a.rows, b.cols);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows; ++i) {
    double* o = out.row(i);
    const double* ar = a.row(i);
    for (int k = 0; k < a.cols; ++k) {
      const double aik = ar[k];
      const double* br = b.row(k);
      for (int j = 0; j < b.cols; ++j) o[j] += aik * br[j];
    }
  }
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  require(a.cols == b.cols, "matmul_nt", a, b);
  out = Matrix::zeros(a.rows, b.rows);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* o = out.row(i);
    for (int j = 0; j < b.rows; ++j) {
      const double* br = b.row(j);
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += ar[k] * br[k];
      o[j] = acc;
    }
  }
}

void matmul_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  require(a.cols == b.rows, "matmul_acc", a, b);
  require(out.rows == a.rows && out.cols == b.cols, "matmul_acc(out)", out, b);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows; ++i) {
    double* o = out.row(i);
    const double* ar = a.row(i);
    for (int k = 0; k < a.cols; ++k) {
      const double aik = ar[k];
      const double* br = b.row(k);
      for (int j = 0; j < b.cols; ++j) o[j] += aik * br[j];
    }
  }
}

void matmul_nt_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  require(a.cols == b.cols, "matmul_nt_acc", a, b);
  require(out.rows == a.rows && out.cols == b.rows, "matmul_nt_acc(out)", out, b);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* o = out.row(i);
    for (int j = 0; j < b.rows; ++j) {
      const double* br = b.row(j);
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += ar[k] * br[k];
      o[j] += acc;
    }
  }
}

void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  require(a.rows == b.rows, "matmul_tn_acc", a, b);
  require(out.rows == a.cols && out.cols == b.cols, "matmul_tn_acc(out)", out, b);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.cols; ++i) {
    double* o = out.row(i);
    for (int k = 0; k < a.rows; ++k) {
      const double aki = a(k, i);
      const double* br = b.row(k);
      for (int j = 0; j < b.cols; ++j) o[j] += aki * br[j];
    }
  }
}

void sigmoid(const Matrix& x, Matrix& out) {
  out = Matrix(x.rows, x.cols);
  const int n = static_cast<int>(x.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) out.data[i] = stable_sigmoid(x.data[i]);
}

void sigmoid_grad_acc(const Matrix& y, const Matrix& g, Matrix& gx) {
  require(y.same_shape(g) && y.same_shape(gx), "sigmoid_grad_acc", y, g);
  const int n = static_cast<int>(y.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) gx.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
}

void add(const Matrix& a, const Matrix& b, Matrix& out) {
  require(a.same_shape(b), "add", a, b);
  out = Matrix(a.rows, a.cols);
  const int n = static_cast<int>(a.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) out.data[i] = a.data[i] + b.data[i];
}

void sub(const Matrix& a, const Matrix& b, Matrix& out) {
  require(a.same_shape(b), "sub", a, b);
  out = Matrix(a.rows, a.cols);
  const int n = static_cast<int>(a.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) out.data[i] = a.data[i] - b.data[i];
}

void hadamard(const Matrix& a, const Matrix& b, Matrix& out) {
  require(a.same_shape(b), "hadamard", a, b);
  out = Matrix(a.rows, a.cols);
  const int n = static_cast<int>(a.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) out.data[i] = a.data[i] * b.data[i];
}

void hadamard_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  require(a.same_shape(b) && a.same_shape(out), "hadamard_acc", a, b);
  const int n = static_cast<int>(a.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) out.data[i] += a.data[i] * b.data[i];
}

void add_row(const Matrix& a, const Matrix& brow, Matrix& out) {
  require(brow.rows == 1 && brow.cols == a.cols, "add_row", a, brow);
  out = Matrix(a.rows, a.cols);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* o = out.row(i);
    for (int j = 0; j < a.cols; ++j) o[j] = ar[j] + brow.data[j];
  }
}

void row_scale(const Matrix& a, const Matrix& s, Matrix& out) {
  require(s.cols == 1 && s.rows == a.rows, "row_scale", a, s);
  out = Matrix(a.rows, a.cols);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows; ++i) {
    const double si = s(i, 0);
    const double* ar = a.row(i);
    double* o = out.row(i);
    for (int j = 0; j < a.cols; ++j) o[j] = ar[j] * si;
  }
}

void col_scale(const Matrix& a, const Matrix& w, Matrix& out) {
  require(w.rows == 1 && w.cols == a.cols, "col_scale", a, w);
  out = Matrix(a.rows, a.cols);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* o = out.row(i);
    for (int j = 0; j < a.cols; ++j) o[j] = ar[j] * w.data[j];
  }
}

void axpy_acc(double c, const Matrix& g, Matrix& out) {
  require(g.same_shape(out), "axpy_acc", g, out);
  const int n = static_cast<int>(g.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) out.data[i] += c * g.data[i];
}

void pairwise_hadamard(const Matrix& a, const Matrix& b, Matrix& z) {
  require(a.cols == b.cols, "pairwise_hadamard", a, b);
  z = Matrix(a.rows * b.rows, a.cols);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    for (int k = 0; k < b.rows; ++k) {
      const double* br = b.row(k);
      double* zr = z.row(i * b.rows + k);
      for (int j = 0; j < a.cols; ++j) zr[j] = ar[j] * br[j];
    }
  }
}

double bce_sum(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size() || pred.empty()) {
    throw DimensionError("bce_sum: pred/truth lengths " + std::to_string(pred.size()) + " and " +
                         std::to_string(truth.size()));
  }
  static std::atomic<bool> clamp_reported{false};
  double loss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double y = pred[i];
    if (y <= 0.0 || y >= 1.0) {
      if (!clamp_reported.exchange(true)) {
        std::fprintf(stderr, "bce_sum: prediction outside (0,1), clamping to [%g, %g]\n", kBceEps,
                     1.0 - kBceEps);
      }
      y = y < kBceEps ? kBceEps : (y > 1.0 - kBceEps ? 1.0 - kBceEps : y);
    }
    const double r = truth[i];
    loss -= r * std::log(y) + (1.0 - r) * std::log(1.0 - y);
  }
  return loss;
}

namespace serial {

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  require(a.cols == b.rows, "serial::matmul", a, b);
  out = Matrix::zeros(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    double* o = out.row(i);
    const double* ar = a.row(i);
    for (int k = 0; k < a.cols; ++k) {
      const double aik = ar[k];
      const double* br = b.row(k);
      for (int j = 0; j < b.cols; ++j) o[j] += aik * br[j];
    }
  }
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  require(a.cols == b.cols, "serial::matmul_nt", a, b);
  out = Matrix::zeros(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* o = out.row(i);
    for (int j = 0; j < b.rows; ++j) {
      const double* br = b.row(j);
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += ar[k] * br[k];
      o[j] = acc;
    }
  }
}

void matmul_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  require(a.cols == b.rows, "serial::matmul_acc", a, b);
  require(out.rows == a.rows && out.cols == b.cols, "serial::matmul_acc(out)", out, b);
  for (int i = 0; i < a.rows; ++i) {
    double* o = out.row(i);
    const double* ar = a.row(i);
    for (int k = 0; k < a.cols; ++k) {
      const double aik = ar[k];
      const double* br = b.row(k);
      for (int j = 0; j < b.cols; ++j) o[j] += aik * br[j];
    }
  }
}

void matmul_nt_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  require(a.cols == b.cols, "serial::matmul_nt_acc", a, b);
  require(out.rows == a.rows && out.cols == b.rows, "serial::matmul_nt_acc(out)", out, b);
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* o = out.row(i);
    for (int j = 0; j < b.rows; ++j) {
      const double* br = b.row(j);
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += ar[k] * br[k];
      o[j] += acc;
    }
  }
}

void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  require(a.rows == b.rows, "serial::matmul_tn_acc", a, b);
  require(out.rows == a.cols && out.cols == b.cols, "serial::matmul_tn_acc(out)", out, b);
  for (int i = 0; i < a.cols; ++i) {
    double* o = out.row(i);
    for (int k = 0; k < a.rows; ++k) {
      const double aki = a(k, i);
      const double* br = b.row(k);
      for (int j = 0; j < b.cols; ++j) o[j] += aki * br[j];
    }
  }
}

void sigmoid(const Matrix& x, Matrix& out) {
  out = Matrix(x.rows, x.cols);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = stable_sigmoid(x.data[i]);
}

void hadamard(const Matrix& a, const Matrix& b, Matrix& out) {
  require(a.same_shape(b), "serial::hadamard", a, b);
  out = Matrix(a.rows, a.cols);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * b.data[i];
}

void add(const Matrix& a, const Matrix& b, Matrix& out) {
  require(a.same_shape(b), "serial::add", a, b);
  out = Matrix(a.rows, a.cols);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] + b.data[i];
}

void sub(const Matrix& a, const Matrix& b, Matrix& out) {
  require(a.same_shape(b), "serial::sub", a, b);
  out = Matrix(a.rows, a.cols);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] - b.data[i];
}

void add_row(const Matrix& a, const Matrix& brow, Matrix& out) {
  require(brow.rows == 1 && brow.cols == a.cols, "serial::add_row", a, brow);
  out = Matrix(a.rows, a.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < a.cols; ++j) out(i, j) = a(i, j) + brow.data[j];
  }
}

void row_scale(const Matrix& a, const Matrix& s, Matrix& out) {
  require(s.cols == 1 && s.rows == a.rows, "serial::row_scale", a, s);
  out = Matrix(a.rows, a.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < a.cols; ++j) out(i, j) = a(i, j) * s(i, 0);
  }
}

void col_scale(const Matrix& a, const Matrix& w, Matrix& out) {
  require(w.rows == 1 && w.cols == a.cols, "serial::col_scale", a, w);
  out = Matrix(a.rows, a.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < a.cols; ++j) out(i, j) = a(i, j) * w.data[j];
  }
}

void pairwise_hadamard(const Matrix& a, const Matrix& b, Matrix& z) {
  require(a.cols == b.cols, "serial::pairwise_hadamard", a, b);
  z = Matrix(a.rows * b.rows, a.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int k = 0; k < b.rows; ++k) {
      for (int j = 0; j < a.cols; ++j) z(i * b.rows + k, j) = a(i, j) * b(k, j);
    }
  }
}

}  // namespace serial

}  // namespace cogdiag::kernels
