#include "cogdiag/neuralcd.hpp"

#include <cmath>

#include "cogdiag/errors.hpp"
#include "cogdiag/init.hpp"
#include "cogdiag/kernels.hpp"

namespace cogdiag {

namespace {

void check_indices(const char* who, int student, int item, int n_students, int n_items) {
  if (student < 0 || student >= n_students || item < 0 || item >= n_items) {
    throw DataError(std::string(who) + ": index out of range (student " + std::to_string(student) +
                    " of " + std::to_string(n_students) + ", item " + std::to_string(item) +
                    " of " + std::to_string(n_items) + ")");
  }
}

}  // namespace

NeuralCDParams NeuralCDParams::init(int n_students, int n_items, int n_knowledge, int h1, int h2,
                                    std::uint64_t seed) {
  if (n_students < 1 || n_items < 1 || n_knowledge < 1 || h1 < 1 || h2 < 1) {
    throw ConfigError("neuralcd: all dimensions must be positive");
  }
  using detail::init_matrix;
  using detail::xavier_bound;
  NeuralCDParams p;
  p.n_students = n_students;
  p.n_items = n_items;
  p.n_knowledge = n_knowledge;
  p.h1 = h1;
  p.h2 = h2;
  // K-sized dimensions are excluded from the scale fans so that padding the
  // knowledge space never changes the initial values of the live entries.
  p.A = Parameter("A", init_matrix(seed, "A", n_students, n_knowledge,
                                   xavier_bound(n_students, n_students), false));
  p.B = Parameter("B", init_matrix(seed, "B", n_items, n_knowledge, xavier_bound(n_items, n_items),
                                   false));
  p.D = Parameter("D", init_matrix(seed, "D", n_items, 1, xavier_bound(n_items, 1), false));
  p.W1 = Parameter("W1", init_matrix(seed, "W1", h1, n_knowledge, xavier_bound(h1, h1), true),
                   true);
  p.b1 = Parameter("b1", Matrix::zeros(1, h1));
  p.W2 = Parameter("W2", init_matrix(seed, "W2", h2, h1, xavier_bound(h1, h2), true), true);
  p.b2 = Parameter("b2", Matrix::zeros(1, h2));
  p.W3 = Parameter("W3", init_matrix(seed, "W3", 1, h2, xavier_bound(h2, 1), true), true);
  p.b3 = Parameter("b3", Matrix::zeros(1, 1));
  return p;
}

std::vector<Parameter*> NeuralCDParams::trainable() {
  return {&A, &B, &D, &W1, &b1, &W2, &b2, &W3, &b3};
}

Prediction neuralcd_forward(const NeuralCDParams& p, int student, int item, const QMatrix& q) {
  check_indices("neuralcd_forward", student, item, p.n_students, p.n_items);
  const int k = p.n_knowledge;
  std::vector<double> x(k);
  const double h_disc = kernels::stable_sigmoid(p.D.value(item, 0));
  for (int j = 0; j < k; ++j) {
    const double h_s = kernels::stable_sigmoid(p.A.value(student, j));
    const double h_diff = kernels::stable_sigmoid(p.B.value(item, j));
    x[j] = q.cells(item, j) * (h_s - h_diff) * h_disc;
  }
  return {student, item, detail::mlp3(x, p.W1, p.b1, p.W2, p.b2, p.W3, p.b3)};
}

double neuralcd_forward_from_proficiency(const NeuralCDParams& p, std::span<const double> h_s,
                                         int item, const QMatrix& q) {
  check_indices("neuralcd_forward_from_proficiency", 0, item, p.n_students, p.n_items);
  if (static_cast<int>(h_s.size()) != p.n_knowledge) {
    throw DimensionError("proficiency vector length " + std::to_string(h_s.size()) +
                         " does not match K=" + std::to_string(p.n_knowledge));
  }
  std::vector<double> x(p.n_knowledge);
  const double h_disc = kernels::stable_sigmoid(p.D.value(item, 0));
  for (int j = 0; j < p.n_knowledge; ++j) {
    const double h_diff = kernels::stable_sigmoid(p.B.value(item, j));
    x[j] = q.cells(item, j) * (h_s[j] - h_diff) * h_disc;
  }
  return detail::mlp3(x, p.W1, p.b1, p.W2, p.b2, p.W3, p.b3);
}

NodeId neuralcd_batch_loss(Tape& tape, NeuralCDParams& p, const SubjectDataset& ds,
                           std::span<const std::size_t> record_idx) {
  const int bsz = static_cast<int>(record_idx.size());
  std::vector<int> srow(bsz), erow(bsz);
  std::vector<double> truth(bsz);
  Matrix qe(bsz, p.n_knowledge);
  for (int i = 0; i < bsz; ++i) {
    const auto& r = ds.records[record_idx[i]];
    srow[i] = ds.student_index.at(r.student_id);
    erow[i] = ds.item_index.at(r.item_id);
    truth[i] = r.score;
    for (int j = 0; j < p.n_knowledge; ++j) qe(i, j) = ds.q.cells(erow[i], j);
  }

  const NodeId h_s = tape.sigmoid(tape.gather_rows(tape.param(p.A), srow));
  const NodeId h_diff = tape.sigmoid(tape.gather_rows(tape.param(p.B), erow));
  const NodeId h_disc = tape.sigmoid(tape.gather_rows(tape.param(p.D), erow));
  const NodeId x =
      tape.row_scale(tape.hadamard(tape.input(std::move(qe)), tape.sub(h_s, h_diff)), h_disc);
  const NodeId f1 =
      tape.sigmoid(tape.add_row(tape.matmul_nt(x, tape.param(p.W1)), tape.param(p.b1)));
  const NodeId f2 =
      tape.sigmoid(tape.add_row(tape.matmul_nt(f1, tape.param(p.W2)), tape.param(p.b2)));
  const NodeId y =
      tape.sigmoid(tape.add_row(tape.matmul_nt(f2, tape.param(p.W3)), tape.param(p.b3)));
  return tape.scale(tape.bce_loss(y, truth), 1.0 / bsz);
}

std::pair<NeuralCDParams, History> neuralcd_train(const SubjectDataset& train_ds,
                                                  const SubjectDataset& valid_ds,
                                                  const TrainConfig& cfg, int h1, int h2) {
  NeuralCDParams params = NeuralCDParams::init(train_ds.n_students(), train_ds.n_items(),
                                               train_ds.n_knowledge(), h1, h2, cfg.seed);
  const auto trainable = params.trainable();
  const auto builder = [&](Tape& tape, std::span<const std::size_t> idx) {
    return neuralcd_batch_loss(tape, params, train_ds, idx);
  };
  History hist = fit(train_ds, valid_ds, trainable, cfg, builder,
                     [&](int s, int e) { return neuralcd_forward(params, s, e, train_ds.q).y; });
  return {std::move(params), std::move(hist)};
}

std::vector<double> neuralcd_diagnose(const NeuralCDParams& p, int student) {
  if (student < 0 || student >= p.n_students) {
    throw DataError("neuralcd_diagnose: student index " + std::to_string(student) +
                    " out of range");
  }
  std::vector<double> h_s(p.n_knowledge);
  for (int j = 0; j < p.n_knowledge; ++j) {
    h_s[j] = kernels::stable_sigmoid(p.A.value(student, j));
  }
  return h_s;
}

PredictFn neuralcd_predictor(const NeuralCDParams& p, const QMatrix& q) {
  return [&p, &q](int s, int e) { return neuralcd_forward(p, s, e, q).y; };
}

}  // namespace cogdiag
