#pragma once

#include <vector>

#include "cogdiag/matrix.hpp"

namespace cogdiag::kernels {

// Dense kernels behind the tape and the pure forward paths. The default
// implementations parallelize over independent output elements with OpenMP;
// every accumulation an element needs happens inside one thread, so results
// are bitwise identical for any thread count. kernels::serial holds plain
// single-threaded reference implementations of the same contracts, kept for
// testing and for the benchmark target.

double stable_sigmoid(double x);

void matmul(const Matrix& a, const Matrix& b, Matrix& out);      // out = a*b
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);   // out = a*b^T
void matmul_acc(const Matrix& a, const Matrix& b, Matrix& out);  // out += a*b
void matmul_nt_acc(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out);  // out += a^T*b

void sigmoid(const Matrix& x, Matrix& out);
// gx += g .* y .* (1-y), y the sigmoid output
void sigmoid_grad_acc(const Matrix& y, const Matrix& g, Matrix& gx);

void add(const Matrix& a, const Matrix& b, Matrix& out);
void sub(const Matrix& a, const Matrix& b, Matrix& out);
void hadamard(const Matrix& a, const Matrix& b, Matrix& out);
void hadamard_acc(const Matrix& a, const Matrix& b, Matrix& out);

// out = a + row broadcast over every row of a; brow is 1 x a.cols
void add_row(const Matrix& a, const Matrix& brow, Matrix& out);
// out(i,:) = a(i,:) * s(i,0); s is a.rows x 1
void row_scale(const Matrix& a, const Matrix& s, Matrix& out);
// out(:,j) = a(:,j) * w(0,j); w is 1 x a.cols
void col_scale(const Matrix& a, const Matrix& w, Matrix& out);

void axpy_acc(double c, const Matrix& g, Matrix& out);  // out += c*g

// z has one row per (i,k) pair: z(i*K+k,:) = a(i,:) .* b(k,:)
void pairwise_hadamard(const Matrix& a, const Matrix& b, Matrix& z);

// Sum form of binary cross entropy; preds are clamped into
// [1e-7, 1-1e-7] before the logs (clamping is reported once per process).
// Ordered reduction, deterministic.
double bce_sum(const std::vector<double>& pred, const std::vector<double>& truth);
constexpr double kBceEps = 1e-7;

namespace serial {
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_acc(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_nt_acc(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out);
void sigmoid(const Matrix& x, Matrix& out);
void hadamard(const Matrix& a, const Matrix& b, Matrix& out);
void add(const Matrix& a, const Matrix& b, Matrix& out);
void sub(const Matrix& a, const Matrix& b, Matrix& out);
void add_row(const Matrix& a, const Matrix& brow, Matrix& out);
void row_scale(const Matrix& a, const Matrix& s, Matrix& out);
void col_scale(const Matrix& a, const Matrix& w, Matrix& out);
void pairwise_hadamard(const Matrix& a, const Matrix& b, Matrix& z);
}  // namespace serial

}  // namespace cogdiag::kernels
