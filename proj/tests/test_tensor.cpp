#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "cogdiag/errors.hpp"
#include "cogdiag/gradcheck.hpp"
#include "cogdiag/kernels.hpp"
#include "cogdiag/optimizer.hpp"
#include "cogdiag/tape.hpp"
#include "test_util.hpp"

using namespace cogdiag;
using testutil::finite_difference;
using testutil::max_rel_err;
using testutil::random_matrix;
using testutil::sum_all;

TEST_CASE("matmul identity and dot product") {
  Tape t;
  const NodeId eye = t.input(Matrix::from_rows({{1, 0}, {0, 1}}));
  const NodeId v = t.input(Matrix::from_rows({{3}, {4}}));
  const Matrix& out = t.value(t.matmul(eye, v));
  CHECK(out(0, 0) == 3.0);
  CHECK(out(1, 0) == 4.0);

  const NodeId a = t.input(Matrix::from_rows({{1, 2}}));
  const NodeId b = t.input(Matrix::from_rows({{3}, {4}}));
  CHECK(t.value(t.matmul(a, b))(0, 0) == 11.0);
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
  Tape t;
  const NodeId a = t.input(Matrix(2, 3));
  const NodeId b = t.input(Matrix(4, 2));
  try {
    t.matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("4x2") != std::string::npos);
  }
}

TEST_CASE("matmul gradient of sum matches finite differences") {
  Rng rng(101);
  Parameter pa("a", random_matrix(rng, 3, 4));
  Parameter pb("b", random_matrix(rng, 4, 2));
  const auto loss = [&] {
    Tape t;
    return t.scalar(sum_all(t, t.matmul(t.param(pa), t.param(pb))));
  };
  Tape t;
  t.backward(sum_all(t, t.matmul(t.param(pa), t.param(pb))));
  CHECK(max_rel_err(pa.grad, finite_difference(loss, pa)) < 1e-6);
  CHECK(max_rel_err(pb.grad, finite_difference(loss, pb)) < 1e-6);
}

TEST_CASE("sigmoid fixed point, symmetry, and open range") {
  CHECK(kernels::stable_sigmoid(0.0) == 0.5);
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.uniform(-30.0, 30.0);
    const double s = kernels::stable_sigmoid(x);
    CHECK(s > 0.0);
    CHECK(s < 1.0);
    CHECK(kernels::stable_sigmoid(x) + kernels::stable_sigmoid(-x) ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("sigmoid saturates without overflow") {
  const double y = kernels::stable_sigmoid(710.0);
  CHECK(std::isfinite(y));
  CHECK(y > 0.0);
  CHECK(y <= 1.0);
  const double yn = kernels::stable_sigmoid(-710.0);
  CHECK(std::isfinite(yn));
  CHECK(yn >= 0.0);
  CHECK(yn < 1.0);
  // long double reference on both branches
  for (double x : {-40.0, -5.0, -0.1, 0.3, 12.0, 35.0}) {
    const long double ex = expl(static_cast<long double>(x));
    const long double ref = x >= 0 ? 1.0L / (1.0L + expl(-static_cast<long double>(x)))
                                   : ex / (1.0L + ex);
    CHECK(kernels::stable_sigmoid(x) ==
          doctest::Approx(static_cast<double>(ref)).epsilon(1e-14));
  }
}

TEST_CASE("hadamard mask and identity semantics") {
  Tape t;
  const NodeId a = t.input(Matrix::from_rows({{1, 2, 3}}));
  const NodeId mask = t.input(Matrix::from_rows({{0, 1, 0}}));
  const Matrix& out = t.value(t.hadamard(a, mask));
  CHECK(out(0, 0) == 0.0);
  CHECK(out(0, 1) == 2.0);
  CHECK(out(0, 2) == 0.0);

  Rng rng(5);
  const Matrix r = random_matrix(rng, 2, 3);
  Tape t2;
  CHECK(t2.value(t2.hadamard(t2.input(r), t2.input(Matrix(2, 3, 1.0)))) == r);

  Tape t3;
  CHECK_THROWS_AS(t3.hadamard(t3.input(Matrix(2, 3)), t3.input(Matrix(3, 2))), DimensionError);
}

TEST_CASE("hadamard gradient matches finite differences") {
  Rng rng(42);
  Parameter pa("a", random_matrix(rng, 2, 3));
  Parameter pb("b", random_matrix(rng, 2, 3));
  const auto loss = [&] {
    Tape t;
    return t.scalar(sum_all(t, t.hadamard(t.param(pa), t.param(pb))));
  };
  Tape t;
  t.backward(sum_all(t, t.hadamard(t.param(pa), t.param(pb))));
  CHECK(max_rel_err(pa.grad, finite_difference(loss, pa)) < 1e-6);
  CHECK(max_rel_err(pb.grad, finite_difference(loss, pb)) < 1e-6);
}

TEST_CASE("bce analytic values") {
  CHECK(kernels::bce_sum({0.5}, {1.0}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(kernels::bce_sum({0.5}, {0.5}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("bce matches a high-precision summation oracle") {
  Rng rng(9);
  std::vector<double> pred(10), truth(10);
  for (int i = 0; i < 10; ++i) {
    pred[i] = rng.uniform(0.05, 0.95);
    truth[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  }
  long double ref = 0.0L;
  for (int i = 0; i < 10; ++i) {
    ref -= static_cast<long double>(truth[i]) * logl(static_cast<long double>(pred[i])) +
           (1.0L - static_cast<long double>(truth[i])) *
               logl(1.0L - static_cast<long double>(pred[i]));
  }
  const double got = kernels::bce_sum(pred, truth);
  CHECK(std::fabs(got - static_cast<double>(ref)) / std::fabs(static_cast<double>(ref)) < 1e-10);
}

TEST_CASE("bce clamps exact 0 and 1 predictions and stays non-negative") {
  const double l = kernels::bce_sum({0.0, 1.0}, {0.0, 1.0});
  CHECK(std::isfinite(l));
  CHECK(l >= 0.0);
  CHECK(l < 1e-5);

  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(8));
    std::vector<double> pred(n), truth(n);
    for (int i = 0; i < n; ++i) {
      pred[i] = rng.uniform01();
      truth[i] = rng.uniform01();
    }
    CHECK(kernels::bce_sum(pred, truth) >= 0.0);
  }
}

TEST_CASE("bce gradient contract (y - r) / (y (1 - y))") {
  Rng rng(31);
  Parameter py("y", random_matrix(rng, 4, 1, 0.1, 0.9));
  const std::vector<double> truth = {1.0, 0.0, 0.5, 0.25};
  Tape t;
  t.backward(t.bce_loss(t.param(py), truth));
  for (int i = 0; i < 4; ++i) {
    const double y = py.value(i, 0);
    CHECK(py.grad(i, 0) == doctest::Approx((y - truth[i]) / (y * (1 - y))).epsilon(1e-12));
  }
}

TEST_CASE("dropout degenerate cases are exact") {
  Rng data_rng(3);
  const Matrix x = random_matrix(data_rng, 5, 7);
  Rng rng(1);
  Tape t;
  CHECK(t.value(t.dropout(t.input(x), 0.0, rng, true)) == x);
  CHECK(t.value(t.dropout(t.input(x), 0.9, rng, false)) == x);
  CHECK_THROWS_AS(t.dropout(t.input(x), 1.0, rng, true), ConfigError);
  CHECK_THROWS_AS(t.dropout(t.input(x), -0.1, rng, true), ConfigError);
}

TEST_CASE("dropout survivors rescale to preserve the mean") {
  const Matrix x(100, 100, 1.0);
  Rng rng(77);
  Tape t;
  const Matrix& out = t.value(t.dropout(t.input(x), 0.5, rng, true));
  double mean = 0.0;
  int zeros = 0;
  for (double v : out.data) {
    mean += v;
    zeros += v == 0.0;
  }
  mean /= static_cast<double>(out.size());
  CHECK(mean > 0.97);
  CHECK(mean < 1.03);
  CHECK(zeros > 4500);
  CHECK(zeros < 5500);
}

TEST_CASE("adam zero gradient is a fixpoint for fresh state") {
  Parameter p("p", Matrix::from_rows({{1.5, -2.0}}));
  const Matrix before = p.value;
  p.grad = Matrix::zeros(1, 2);
  Adam adam({0.01});
  Parameter* ps[] = {&p};
  adam.step(ps);
  CHECK(p.value == before);
}

TEST_CASE("adam steps opposite the gradient sign") {
  Parameter p("p", Matrix::from_rows({{0.5}}));
  Adam adam({0.01});
  Parameter* ps[] = {&p};
  for (int i = 0; i < 5; ++i) {
    p.grad = Matrix::from_rows({{2.0}});
    adam.step(ps);
  }
  CHECK(p.value(0, 0) < 0.5);

  Parameter q("q", Matrix::from_rows({{0.5}}));
  Adam adam2({0.01});
  Parameter* qs[] = {&q};
  for (int i = 0; i < 5; ++i) {
    q.grad = Matrix::from_rows({{-2.0}});
    adam2.step(qs);
  }
  CHECK(q.value(0, 0) > 0.5);
}

TEST_CASE("non-negativity projection clamps masked parameters at zero") {
  Parameter p("w", Matrix::from_rows({{0.001}}), true);
  Adam adam({0.01});
  Parameter* ps[] = {&p};
  for (int i = 0; i < 20; ++i) {
    p.grad = Matrix::from_rows({{100.0}});
    adam.step(ps);
    CHECK(p.value(0, 0) >= 0.0);
  }
  CHECK(p.value(0, 0) == 0.0);
}

TEST_CASE("adam rejects non-finite gradients naming the parameter") {
  Parameter p("spiky", Matrix::from_rows({{1.0}}));
  p.grad = Matrix::from_rows({{std::nan("")}});
  Adam adam({0.01});
  Parameter* ps[] = {&p};
  CHECK_THROWS_WITH_AS(adam.step(ps), doctest::Contains("spiky"), DivergenceError);
  CHECK(p.value(0, 0) == 1.0);
}

TEST_CASE("grad_check on a quadratic") {
  Parameter x("x", Matrix::from_rows({{1.0, 2.0}}));
  const auto loss = [&](bool with_grad) {
    Tape t;
    const NodeId f = t.matmul_nt(t.param(x), t.param(x));  // sum of squares
    if (with_grad) t.backward(f);
    return t.scalar(f);
  };
  Parameter* ps[] = {&x};
  const GradCheckReport report = grad_check(loss, ps, 1e-8);
  CHECK(report.pass);
  CHECK(report.worst < 1e-8);
  loss(true);
  CHECK(x.grad(0, 0) == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(x.grad(0, 1) == doctest::Approx(4.0).epsilon(1e-10));
}

// Analytic gradients vs the test-local finite-difference oracle across every
// primitive, randomized shapes, 100 seeds.
TEST_CASE("every primitive passes randomized finite-difference checks") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed * 7919 + 1);
    const int r = 1 + static_cast<int>(rng.below(4));
    const int c = 1 + static_cast<int>(rng.below(4));
    const int k = 1 + static_cast<int>(rng.below(4));

    Parameter pa("a", random_matrix(rng, r, c));
    Parameter pb("b", random_matrix(rng, c, k));
    Parameter psame("s", random_matrix(rng, r, c));
    Parameter prow("row", random_matrix(rng, 1, c));
    Parameter pcol("col", random_matrix(rng, r, 1));
    Parameter pone("one", random_matrix(rng, 1, 1));
    Parameter pkd("kd", random_matrix(rng, k, c));
    const std::vector<int> gather = {0, r - 1, 0};  // duplicate rows accumulate
    const std::uint64_t mask_seed = seed + 5;

    struct OpCase {
      const char* name;
      std::function<NodeId(Tape&)> build;
      std::vector<Parameter*> params;
    };

    std::vector<OpCase> cases;
    cases.push_back({"matmul",
                     [&](Tape& t) { return sum_all(t, t.matmul(t.param(pa), t.param(pb))); },
                     {&pa, &pb}});
    cases.push_back({"matmul_nt",
                     [&](Tape& t) { return sum_all(t, t.matmul_nt(t.param(pa), t.param(pkd))); },
                     {&pa, &pkd}});
    cases.push_back({"hadamard",
                     [&](Tape& t) { return sum_all(t, t.hadamard(t.param(pa), t.param(psame))); },
                     {&pa, &psame}});
    cases.push_back({"add",
                     [&](Tape& t) { return sum_all(t, t.add(t.param(pa), t.param(psame))); },
                     {&pa, &psame}});
    cases.push_back({"sub",
                     [&](Tape& t) { return sum_all(t, t.sub(t.param(pa), t.param(psame))); },
                     {&pa, &psame}});
    cases.push_back({"add_row",
                     [&](Tape& t) { return sum_all(t, t.add_row(t.param(pa), t.param(prow))); },
                     {&pa, &prow}});
    cases.push_back({"add_scalar",
                     [&](Tape& t) { return sum_all(t, t.add_scalar(t.param(pa), t.param(pone))); },
                     {&pa, &pone}});
    cases.push_back({"row_scale",
                     [&](Tape& t) { return sum_all(t, t.row_scale(t.param(pa), t.param(pcol))); },
                     {&pa, &pcol}});
    cases.push_back({"col_scale",
                     [&](Tape& t) { return sum_all(t, t.col_scale(t.param(pa), t.param(prow))); },
                     {&pa, &prow}});
    cases.push_back(
        {"pairwise_hadamard",
         [&](Tape& t) { return sum_all(t, t.pairwise_hadamard(t.param(pa), t.param(pkd))); },
         {&pa, &pkd}});
    cases.push_back({"reshape",
                     [&](Tape& t) {
                       const NodeId sq = t.hadamard(t.param(pa), t.param(pa));
                       return sum_all(t, t.reshape(sq, c, r));
                     },
                     {&pa}});
    cases.push_back({"gather+sigmoid+bce+scale",
                     [&](Tape& t) {
                       const NodeId g = t.gather_rows(t.param(pa), gather);  // 3 x c
                       const NodeId y = t.sigmoid(t.matmul(g, t.param(pb)));  // 3 x k
                       const NodeId flat = t.reshape(y, 3 * k, 1);
                       const std::vector<double> truth(static_cast<std::size_t>(3 * k), 0.4);
                       return t.scale(t.bce_loss(flat, truth), 0.25);
                     },
                     {&pa, &pb}});
    cases.push_back({"dropout",
                     [&](Tape& t) {
                       Rng drop_rng(mask_seed);  // same mask for every probe
                       const NodeId d = t.dropout(t.param(pa), 0.4, drop_rng, true);
                       return sum_all(t, t.hadamard(d, t.param(psame)));
                     },
                     {&pa, &psame}});

    for (auto& oc : cases) {
      Tape t;
      t.backward(oc.build(t));
      std::vector<Matrix> analytic;
      for (const Parameter* p : oc.params) analytic.push_back(p->grad);
      const auto loss_only = [&] {
        Tape t2;
        return t2.scalar(oc.build(t2));
      };
      for (std::size_t pi = 0; pi < oc.params.size(); ++pi) {
        const Matrix fd = finite_difference(loss_only, *oc.params[pi]);
        const double err = max_rel_err(analytic[pi], fd, 1e-4);
        if (err >= 1e-4) {
          MESSAGE("op ", oc.name, " param ", oc.params[pi]->name, " seed ", seed, " err ", err);
        }
        REQUIRE(err < 1e-4);
      }
    }
  }
}

TEST_CASE("tape replay is bitwise deterministic within one process") {
  const auto run = [] {
    Rng rng(123);
    Parameter pa("a", random_matrix(rng, 6, 5));
    Parameter pb("b", random_matrix(rng, 5, 3));
    Tape t;
    Rng drop(99);
    const NodeId d = t.dropout(t.matmul(t.param(pa), t.param(pb)), 0.3, drop, true);
    const NodeId y = t.sigmoid(d);
    const std::vector<double> truth(18, 0.25);
    const NodeId loss = t.bce_loss(t.reshape(y, 18, 1), truth);
    t.backward(loss);
    return std::make_pair(t.scalar(loss), pa.grad);
  };
  const auto [l1, g1] = run();
  const auto [l2, g2] = run();
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}

TEST_CASE("gradient buffers restart at zero each backward pass") {
  Rng rng(55);
  Parameter pa("a", random_matrix(rng, 3, 3));
  Tape t;
  const NodeId root = sum_all(t, t.hadamard(t.param(pa), t.param(pa)));
  t.backward(root);
  const Matrix first = pa.grad;
  t.backward(root);
  CHECK(pa.grad == first);
}

TEST_CASE("parallel kernels agree bitwise with the serial reference") {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const int r = 1 + static_cast<int>(rng.below(40));
    const int c = 1 + static_cast<int>(rng.below(40));
    const int k = 1 + static_cast<int>(rng.below(40));
    const Matrix a = random_matrix(rng, r, c);
    const Matrix b = random_matrix(rng, c, k);
    const Matrix bt = random_matrix(rng, k, c);
    const Matrix same = random_matrix(rng, r, c);
    const Matrix srow = random_matrix(rng, r, 1);
    const Matrix wrow = random_matrix(rng, 1, c);

    Matrix op, os;
    kernels::matmul(a, b, op);
    kernels::serial::matmul(a, b, os);
    CHECK(op == os);
    kernels::matmul_nt(a, bt, op);
    kernels::serial::matmul_nt(a, bt, os);
    CHECK(op == os);
    kernels::sigmoid(a, op);
    kernels::serial::sigmoid(a, os);
    CHECK(op == os);
    kernels::hadamard(a, same, op);
    kernels::serial::hadamard(a, same, os);
    CHECK(op == os);
    kernels::add(a, same, op);
    kernels::serial::add(a, same, os);
    CHECK(op == os);
    kernels::sub(a, same, op);
    kernels::serial::sub(a, same, os);
    CHECK(op == os);
    kernels::add_row(a, wrow, op);
    kernels::serial::add_row(a, wrow, os);
    CHECK(op == os);
    kernels::row_scale(a, srow, op);
    kernels::serial::row_scale(a, srow, os);
    CHECK(op == os);
    kernels::col_scale(a, wrow, op);
    kernels::serial::col_scale(a, wrow, os);
    CHECK(op == os);
    kernels::pairwise_hadamard(a, bt, op);
    kernels::serial::pairwise_hadamard(a, bt, os);
    CHECK(op == os);

    Matrix acc_p = random_matrix(rng, r, k);
    Matrix acc_s = acc_p;
    kernels::matmul_acc(a, b, acc_p);
    kernels::serial::matmul_acc(a, b, acc_s);
    CHECK(acc_p == acc_s);
    acc_p = random_matrix(rng, r, k);
    acc_s = acc_p;
    kernels::matmul_nt_acc(a, bt, acc_p);
    kernels::serial::matmul_nt_acc(a, bt, acc_s);
    CHECK(acc_p == acc_s);
    const Matrix b_rk = random_matrix(rng, r, k);
    acc_p = random_matrix(rng, c, k);
    acc_s = acc_p;
    kernels::matmul_tn_acc(a, b_rk, acc_p);
    kernels::serial::matmul_tn_acc(a, b_rk, acc_s);
    CHECK(acc_p == acc_s);
  }
}
