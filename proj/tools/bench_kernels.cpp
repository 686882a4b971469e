// Times the OpenMP kernels against the serial reference implementations and
// checks that both produce bitwise-identical results.

#include <chrono>
#include <cstdio>
#include <functional>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "cogdiag/kernels.hpp"
#include "cogdiag/matrix.hpp"
#include "cogdiag/rng.hpp"

using cogdiag::Matrix;
using cogdiag::Rng;
namespace kernels = cogdiag::kernels;

namespace {

Matrix random_matrix(Rng& rng, int r, int c) {
  Matrix m(r, c);
  for (auto& v : m.data) v = rng.uniform(-1.0, 1.0);
  return m;
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up (first OpenMP region pays thread spawn)
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void bench_pair(const char* name, const std::function<void()>& par,
                const std::function<void()>& ser, bool identical, int reps) {
  const double tp = time_ms(par, reps);
  const double ts = time_ms(ser, reps);
  std::printf("%-22s %10.3f ms %10.3f ms %8.2fx   %s\n", name, ts, tp, ts / tp,
              identical ? "bitwise equal" : "MISMATCH");
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP threads: %d\n\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP; both columns are serial\n\n");
#endif
  std::printf("%-22s %13s %13s %9s\n", "kernel", "serial", "parallel", "speedup");

  Rng rng(42);
  const int n = 384;
  const Matrix a = random_matrix(rng, n, n);
  const Matrix b = random_matrix(rng, n, n);
  const Matrix srow = random_matrix(rng, n, 1);
  const Matrix wrow = random_matrix(rng, 1, n);
  const Matrix small_a = random_matrix(rng, 96, 32);
  const Matrix small_b = random_matrix(rng, 64, 32);

  Matrix op, os;

  kernels::matmul(a, b, op);
  kernels::serial::matmul(a, b, os);
  bench_pair("matmul", [&] { kernels::matmul(a, b, op); },
             [&] { kernels::serial::matmul(a, b, os); }, op == os, 5);

  kernels::matmul_nt(a, b, op);
  kernels::serial::matmul_nt(a, b, os);
  bench_pair("matmul_nt", [&] { kernels::matmul_nt(a, b, op); },
             [&] { kernels::serial::matmul_nt(a, b, os); }, op == os, 5);

  kernels::sigmoid(a, op);
  kernels::serial::sigmoid(a, os);
  bench_pair("sigmoid", [&] { kernels::sigmoid(a, op); },
             [&] { kernels::serial::sigmoid(a, os); }, op == os, 20);

  kernels::hadamard(a, b, op);
  kernels::serial::hadamard(a, b, os);
  bench_pair("hadamard", [&] { kernels::hadamard(a, b, op); },
             [&] { kernels::serial::hadamard(a, b, os); }, op == os, 20);

  kernels::row_scale(a, srow, op);
  kernels::serial::row_scale(a, srow, os);
  bench_pair("row_scale", [&] { kernels::row_scale(a, srow, op); },
             [&] { kernels::serial::row_scale(a, srow, os); }, op == os, 20);

  kernels::col_scale(a, wrow, op);
  kernels::serial::col_scale(a, wrow, os);
  bench_pair("col_scale", [&] { kernels::col_scale(a, wrow, op); },
             [&] { kernels::serial::col_scale(a, wrow, os); }, op == os, 20);

  kernels::pairwise_hadamard(small_a, small_b, op);
  kernels::serial::pairwise_hadamard(small_a, small_b, os);
  bench_pair("pairwise_hadamard", [&] { kernels::pairwise_hadamard(small_a, small_b, op); },
             [&] { kernels::serial::pairwise_hadamard(small_a, small_b, os); }, op == os, 20);

  return 0;
}
