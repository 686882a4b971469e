#include "cogdiag/transfer.hpp"

#include <cmath>
#include <cstring>

#include "cogdiag/errors.hpp"
#include "cogdiag/init.hpp"
#include "cogdiag/kernels.hpp"

namespace cogdiag {

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "neuralcd") return ModelKind::kNeuralCD;
  if (s == "kancd") return ModelKind::kKaNCD;
  throw ConfigError("unknown model kind '" + s + "' (expected neuralcd or kancd)");
}

std::string to_string(ModelKind k) {
  return k == ModelKind::kNeuralCD ? "neuralcd" : "kancd";
}

SourceBackbone make_backbone(const NeuralCDParams& source) {
  SourceBackbone b;
  b.kind = ModelKind::kNeuralCD;
  b.k_common = source.n_knowledge;
  b.h1 = source.h1;
  b.h2 = source.h2;
  b.W1 = source.W1.value;
  b.b1 = source.b1.value;
  b.W2 = source.W2.value;
  b.b2 = source.b2.value;
  return b;
}

SourceBackbone make_backbone(const KaNCDParams& source) {
  SourceBackbone b;
  b.kind = ModelKind::kKaNCD;
  b.k_common = source.n_knowledge;
  b.h1 = source.h1;
  b.h2 = source.h2;
  b.d = source.d;
  b.mf_type = source.mf_type;
  b.W1 = source.W1.value;
  b.b1 = source.b1.value;
  b.W2 = source.W2.value;
  b.b2 = source.b2.value;
  return b;
}

std::vector<Parameter*> TransferModel::trainable() {
  std::vector<Parameter*> out;
  if (!freeze_embeddings) {
    if (kind == ModelKind::kNeuralCD) {
      out.insert(out.end(), {&A, &B});
    } else {
      out.insert(out.end(), {&Ls, &Le, &Lk});
      for (auto& c : comb_a) out.push_back(&c);
      for (auto& c : comb_b) out.push_back(&c);
    }
    out.push_back(&D);
  }
  out.insert(out.end(), {&W4, &b4, &W5, &b5, &W6, &b6});
  return out;
}

TransferModel build_transfer(const SourceBackbone& backbone, const SubjectDataset& target,
                             const TransferConfig& cfg) {
  if (backbone.W1.rows != backbone.h1 || backbone.W1.cols != backbone.k_common ||
      backbone.W2.rows != backbone.h2 || backbone.W2.cols != backbone.h1) {
    throw CheckpointError("backbone matrices inconsistent with declared dims");
  }
  if (target.n_knowledge() > backbone.k_common) {
    throw DimensionError("target knowledge dimension " + std::to_string(target.n_knowledge()) +
                         " exceeds source width " + std::to_string(backbone.k_common));
  }
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) {
    throw ConfigError("transfer: dropout rate must be in [0,1)");
  }

  using detail::init_matrix;
  using detail::xavier_bound;
  const std::uint64_t seed = cfg.train.seed;

  TransferModel m;
  m.kind = backbone.kind;
  m.n_students = target.n_students();
  m.n_items = target.n_items();
  m.target_k = target.n_knowledge();
  m.k_common = backbone.k_common;
  m.h1 = backbone.h1;
  m.h2 = backbone.h2;
  m.g1 = cfg.g1 > 0 ? cfg.g1 : std::max(1, backbone.h2 / 2);
  m.g2 = cfg.g2 > 0 ? cfg.g2 : std::max(1, backbone.h2 / 4);
  m.d = backbone.d;
  m.mf_type = backbone.mf_type;
  m.dropout_rate = cfg.dropout;
  m.freeze_embeddings = cfg.freeze_embeddings;
  m.W1 = backbone.W1;
  m.b1 = backbone.b1;
  m.W2 = backbone.W2;
  m.b2 = backbone.b2;
  m.source_digest = backbone.source_digest;

  const SubjectDataset padded = pad_knowledge(target, backbone.k_common);
  m.q = padded.q;
  m.students = padded.students;

  if (m.kind == ModelKind::kNeuralCD) {
    m.A = Parameter("A", init_matrix(seed, "A", m.n_students, m.k_common,
                                     xavier_bound(m.n_students, m.n_students), false));
    m.B = Parameter("B", init_matrix(seed, "B", m.n_items, m.k_common,
                                     xavier_bound(m.n_items, m.n_items), false));
  } else {
    if (m.d >= m.k_common) {
      throw ConfigError("transfer: latent dimension d=" + std::to_string(m.d) +
                        " must stay below the padded knowledge width " +
                        std::to_string(m.k_common));
    }
    m.Ls = Parameter("Ls", init_matrix(seed, "Ls", m.n_students, m.d,
                                       xavier_bound(m.n_students, m.d), false));
    m.Le = Parameter("Le",
                     init_matrix(seed, "Le", m.n_items, m.d, xavier_bound(m.n_items, m.d), false));
    m.Lk = Parameter("Lk", init_matrix(seed, "Lk", m.k_common, m.d, xavier_bound(m.d, m.d), false));
    m.comb_a = make_latent_combiner(m.mf_type, m.d, "a", seed);
    m.comb_b = make_latent_combiner(m.mf_type, m.d, "b", seed);
  }
  m.D = Parameter("D", init_matrix(seed, "D", m.n_items, 1, xavier_bound(m.n_items, 1), false));

  m.W4 = Parameter("W4", init_matrix(seed, "W4", m.g1, m.h2, xavier_bound(m.h2, m.g1), true),
                   true);
  m.b4 = Parameter("b4", Matrix::zeros(1, m.g1));
  m.W5 = Parameter("W5", init_matrix(seed, "W5", m.g2, m.g1, xavier_bound(m.g1, m.g2), true),
                   true);
  m.b5 = Parameter("b5", Matrix::zeros(1, m.g2));
  m.W6 = Parameter("W6", init_matrix(seed, "W6", 1, m.g2, xavier_bound(m.g2, 1), true), true);
  m.b6 = Parameter("b6", Matrix::zeros(1, 1));
  return m;
}

namespace {

void target_x(const TransferModel& m, int student, int item, std::vector<double>& x) {
  x.resize(m.k_common);
  const double h_disc = kernels::stable_sigmoid(m.D.value(item, 0));
  if (m.kind == ModelKind::kNeuralCD) {
    for (int j = 0; j < m.k_common; ++j) {
      const double h_s = kernels::stable_sigmoid(m.A.value(student, j));
      const double h_diff = kernels::stable_sigmoid(m.B.value(item, j));
      x[j] = m.q.cells(item, j) * (h_s - h_diff) * h_disc;
    }
  } else {
    std::vector<double> z(m.d);
    for (int j = 0; j < m.k_common; ++j) {
      for (int t = 0; t < m.d; ++t) z[t] = m.Ls.value(student, t) * m.Lk.value(j, t);
      const double h_s = kernels::stable_sigmoid(latent_combine(m.comb_a, m.mf_type, z));
      for (int t = 0; t < m.d; ++t) z[t] = m.Le.value(item, t) * m.Lk.value(j, t);
      const double h_diff = kernels::stable_sigmoid(latent_combine(m.comb_b, m.mf_type, z));
      x[j] = m.q.cells(item, j) * (h_s - h_diff) * h_disc;
    }
  }
}

// frozen f1/f2, then the dropout head
double head_forward(const TransferModel& m, std::span<const double> x, bool training, Rng* rng) {
  std::vector<double> f1(m.h1);
  for (int i = 0; i < m.h1; ++i) {
    double acc = m.b1(0, i);
    const double* wr = m.W1.row(i);
    for (int j = 0; j < m.k_common; ++j) acc += wr[j] * x[j];
    f1[i] = kernels::stable_sigmoid(acc);
  }
  std::vector<double> f2(m.h2);
  for (int i = 0; i < m.h2; ++i) {
    double acc = m.b2(0, i);
    const double* wr = m.W2.row(i);
    for (int j = 0; j < m.h1; ++j) acc += wr[j] * f1[j];
    f2[i] = kernels::stable_sigmoid(acc);
  }

  const bool drop = training && m.dropout_rate > 0.0;
  const double keep_scale = drop ? 1.0 / (1.0 - m.dropout_rate) : 1.0;
  if (drop) {
    for (double& v : f2) v = rng->bernoulli(m.dropout_rate) ? 0.0 : v * keep_scale;
  }
  std::vector<double> l1(m.g1);
  for (int i = 0; i < m.g1; ++i) {
    double acc = m.b4.value(0, i);
    const double* wr = m.W4.value.row(i);
    for (int j = 0; j < m.h2; ++j) acc += wr[j] * f2[j];
    l1[i] = kernels::stable_sigmoid(acc);
  }
  if (drop) {
    for (double& v : l1) v = rng->bernoulli(m.dropout_rate) ? 0.0 : v * keep_scale;
  }
  std::vector<double> l2(m.g2);
  for (int i = 0; i < m.g2; ++i) {
    double acc = m.b5.value(0, i);
    const double* wr = m.W5.value.row(i);
    for (int j = 0; j < m.g1; ++j) acc += wr[j] * l1[j];
    l2[i] = kernels::stable_sigmoid(acc);
  }
  double acc = m.b6.value(0, 0);
  for (int j = 0; j < m.g2; ++j) acc += m.W6.value(0, j) * l2[j];
  return kernels::stable_sigmoid(acc);
}

}  // namespace

Prediction transfer_forward(const TransferModel& m, int student, int item, bool training,
                            Rng* rng) {
  if (student < 0 || student >= m.n_students || item < 0 || item >= m.n_items) {
    throw DataError("transfer_forward: index out of range");
  }
  if (training && m.dropout_rate > 0.0 && rng == nullptr) {
    throw ConfigError("transfer_forward: training mode needs an rng for dropout");
  }
  std::vector<double> x;
  target_x(m, student, item, x);
  return {student, item, head_forward(m, x, training, rng)};
}

double transfer_forward_from_proficiency(const TransferModel& m, std::span<const double> h_s,
                                         int item) {
  if (item < 0 || item >= m.n_items) {
    throw DataError("transfer_forward_from_proficiency: bad item");
  }
  if (static_cast<int>(h_s.size()) != m.k_common) {
    throw DimensionError("proficiency vector must have padded length k_common");
  }
  std::vector<double> x(m.k_common);
  const double h_disc = kernels::stable_sigmoid(m.D.value(item, 0));
  std::vector<double> z(std::max(m.d, 1));
  for (int j = 0; j < m.k_common; ++j) {
    double h_diff;
    if (m.kind == ModelKind::kNeuralCD) {
      h_diff = kernels::stable_sigmoid(m.B.value(item, j));
    } else {
      for (int t = 0; t < m.d; ++t) z[t] = m.Le.value(item, t) * m.Lk.value(j, t);
      h_diff = kernels::stable_sigmoid(
          latent_combine(m.comb_b, m.mf_type, std::span<const double>(z.data(), m.d)));
    }
    x[j] = m.q.cells(item, j) * (h_s[j] - h_diff) * h_disc;
  }
  return head_forward(m, x, false, nullptr);
}

NodeId transfer_batch_loss(Tape& tape, TransferModel& m, const SubjectDataset& ds,
                           std::span<const std::size_t> record_idx, bool training,
                           Rng& dropout_rng) {
  const int bsz = static_cast<int>(record_idx.size());
  std::vector<int> srow(bsz), erow(bsz);
  std::vector<double> truth(bsz);
  Matrix qe(bsz, m.k_common);
  for (int i = 0; i < bsz; ++i) {
    const auto& r = ds.records[record_idx[i]];
    srow[i] = ds.student_index.at(r.student_id);
    erow[i] = ds.item_index.at(r.item_id);
    truth[i] = r.score;
    for (int j = 0; j < m.k_common; ++j) qe(i, j) = m.q.cells(erow[i], j);
  }

  NodeId h_s, h_diff;
  if (m.kind == ModelKind::kNeuralCD) {
    h_s = tape.sigmoid(tape.gather_rows(tape.param(m.A), srow));
    h_diff = tape.sigmoid(tape.gather_rows(tape.param(m.B), erow));
  } else {
    const NodeId lk = tape.param(m.Lk);
    const NodeId ls_rows = tape.gather_rows(tape.param(m.Ls), srow);
    const NodeId le_rows = tape.gather_rows(tape.param(m.Le), erow);
    h_s = tape.sigmoid(latent_combine_batch(tape, m.comb_a, m.mf_type, ls_rows, lk, bsz,
                                            m.k_common));
    h_diff = tape.sigmoid(latent_combine_batch(tape, m.comb_b, m.mf_type, le_rows, lk, bsz,
                                               m.k_common));
  }
  const NodeId h_disc = tape.sigmoid(tape.gather_rows(tape.param(m.D), erow));
  const NodeId x =
      tape.row_scale(tape.hadamard(tape.input(std::move(qe)), tape.sub(h_s, h_diff)), h_disc);

  // frozen interaction layers ride the tape as constants
  const NodeId f1 =
      tape.sigmoid(tape.add_row(tape.matmul_nt(x, tape.input(m.W1)), tape.input(m.b1)));
  const NodeId f2 =
      tape.sigmoid(tape.add_row(tape.matmul_nt(f1, tape.input(m.W2)), tape.input(m.b2)));

  const NodeId d1 = tape.dropout(f2, m.dropout_rate, dropout_rng, training);
  const NodeId l1 =
      tape.sigmoid(tape.add_row(tape.matmul_nt(d1, tape.param(m.W4)), tape.param(m.b4)));
  const NodeId d2 = tape.dropout(l1, m.dropout_rate, dropout_rng, training);
  const NodeId l2 =
      tape.sigmoid(tape.add_row(tape.matmul_nt(d2, tape.param(m.W5)), tape.param(m.b5)));
  const NodeId y =
      tape.sigmoid(tape.add_row(tape.matmul_nt(l2, tape.param(m.W6)), tape.param(m.b6)));
  return tape.scale(tape.bce_loss(y, truth), 1.0 / bsz);
}

History transfer_fine_tune(TransferModel& m, const SubjectDataset& train_ds,
                           const SubjectDataset& valid_ds, const TrainConfig& cfg) {
  const std::uint64_t before = backbone_digest(m);
  Rng dropout_rng = Rng::derive(cfg.seed, "dropout");
  const auto trainable = m.trainable();
  const auto builder = [&](Tape& tape, std::span<const std::size_t> idx) {
    return transfer_batch_loss(tape, m, train_ds, idx, true, dropout_rng);
  };
  History hist = fit(train_ds, valid_ds, trainable, cfg, builder,
                     [&](int s, int e) { return transfer_forward(m, s, e, false, nullptr).y; });
  if (backbone_digest(m) != before) {
    throw DivergenceError("frozen backbone changed during fine-tuning");
  }
  return hist;
}

std::vector<double> transfer_diagnose(const TransferModel& m, int student) {
  if (student < 0 || student >= m.n_students) {
    throw DataError("transfer_diagnose: student index out of range");
  }
  std::vector<double> h_s(m.target_k);
  if (m.kind == ModelKind::kNeuralCD) {
    for (int j = 0; j < m.target_k; ++j) {
      h_s[j] = kernels::stable_sigmoid(m.A.value(student, j));
    }
  } else {
    std::vector<double> z(m.d);
    for (int j = 0; j < m.target_k; ++j) {
      for (int t = 0; t < m.d; ++t) z[t] = m.Ls.value(student, t) * m.Lk.value(j, t);
      h_s[j] = kernels::stable_sigmoid(latent_combine(m.comb_a, m.mf_type, z));
    }
  }
  return h_s;
}

PredictFn transfer_predictor(const TransferModel& m) {
  return [&m](int s, int e) { return transfer_forward(m, s, e, false, nullptr).y; };
}

std::uint64_t backbone_digest(const TransferModel& m) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix_bytes = [&h](const Matrix& mat) {
    const unsigned char* p = reinterpret_cast<const unsigned char*>(mat.data.data());
    for (std::size_t i = 0; i < mat.data.size() * sizeof(double); ++i) {
      h ^= p[i];
      h *= 0x100000001b3ull;
    }
  };
  mix_bytes(m.W1);
  mix_bytes(m.b1);
  mix_bytes(m.W2);
  mix_bytes(m.b2);
  return h;
}

}  // namespace cogdiag
