#include "cogdiag/kancd.hpp"

#include <cmath>

#include "cogdiag/errors.hpp"
#include "cogdiag/init.hpp"
#include "cogdiag/kernels.hpp"

namespace cogdiag {

MFType mf_type_from_string(const std::string& s) {
  if (s == "mf") return MFType::kMF;
  if (s == "gmf") return MFType::kGMF;
  if (s == "ncf1") return MFType::kNCF1;
  if (s == "ncf2") return MFType::kNCF2;
  throw ConfigError("unknown mf type '" + s + "' (expected mf, gmf, ncf1, ncf2)");
}

std::string to_string(MFType t) {
  switch (t) {
    case MFType::kMF: return "mf";
    case MFType::kGMF: return "gmf";
    case MFType::kNCF1: return "ncf1";
    case MFType::kNCF2: return "ncf2";
  }
  return "?";
}

std::vector<Parameter> make_latent_combiner(MFType t, int d, const std::string& side,
                                            std::uint64_t seed) {
  using detail::init_matrix;
  using detail::xavier_bound;
  std::vector<Parameter> comb;
  const std::string tag = "comb_" + side + "_";
  switch (t) {
    case MFType::kMF:
      break;  // fixed identity-sum, nothing to learn
    case MFType::kGMF:
      comb.emplace_back(tag + "W", init_matrix(seed, tag + "W", 1, d, xavier_bound(d, 1), false));
      comb.emplace_back(tag + "b", Matrix::zeros(1, 1));
      break;
    case MFType::kNCF2:
      comb.emplace_back(tag + "Wh1",
                        init_matrix(seed, tag + "Wh1", d, d, xavier_bound(d, d), false));
      comb.emplace_back(tag + "bh1", Matrix::zeros(1, d));
      [[fallthrough]];
    case MFType::kNCF1:
      // layout: hidden layer pairs in forward order, then the linear output
      comb.emplace_back(tag + "Wh", init_matrix(seed, tag + "Wh", d, d, xavier_bound(d, d), false));
      comb.emplace_back(tag + "bh", Matrix::zeros(1, d));
      comb.emplace_back(tag + "Wo", init_matrix(seed, tag + "Wo", 1, d, xavier_bound(d, 1), false));
      comb.emplace_back(tag + "bo", Matrix::zeros(1, 1));
      break;
  }
  return comb;
}

// mf -> sum(z); gmf -> W*z + b; ncf -> sigmoid hidden layer(s), linear out
double latent_combine(const std::vector<Parameter>& comb, MFType t, std::span<const double> z) {
  switch (t) {
    case MFType::kMF: {
      double acc = 0.0;
      for (double v : z) acc += v;
      return acc;
    }
    case MFType::kGMF: {
      double acc = comb[1].value(0, 0);
      for (std::size_t j = 0; j < z.size(); ++j) acc += comb[0].value(0, j) * z[j];
      return acc;
    }
    case MFType::kNCF1:
    case MFType::kNCF2: {
      std::vector<double> h(z.begin(), z.end());
      const std::size_t hidden_layers = t == MFType::kNCF1 ? 1 : 2;
      for (std::size_t layer = 0; layer < hidden_layers; ++layer) {
        const Parameter& w = comb[2 * layer];
        const Parameter& b = comb[2 * layer + 1];
        std::vector<double> next(w.value.rows);
        for (int i = 0; i < w.value.rows; ++i) {
          double acc = b.value(0, i);
          for (int j = 0; j < w.value.cols; ++j) acc += w.value(i, j) * h[j];
          next[i] = kernels::stable_sigmoid(acc);
        }
        h = std::move(next);
      }
      const Parameter& wo = comb[comb.size() - 2];
      const Parameter& bo = comb[comb.size() - 1];
      double acc = bo.value(0, 0);
      for (int j = 0; j < wo.value.cols; ++j) acc += wo.value(0, j) * h[j];
      return acc;
    }
  }
  return 0.0;
}

namespace {

using detail::init_matrix;
using detail::xavier_bound;

double entry(const KaNCDParams& p, const Parameter& entities, const std::vector<Parameter>& comb,
             int row, int kc, const char* who) {
  if (row < 0 || row >= entities.value.rows || kc < 0 || kc >= p.n_knowledge) {
    throw DataError(std::string(who) + ": index out of range");
  }
  std::vector<double> z(p.d);
  for (int j = 0; j < p.d; ++j) z[j] = entities.value(row, j) * p.Lk.value(kc, j);
  return latent_combine(comb, p.mf_type, z);
}

void assemble_rows(const KaNCDParams& p, const Parameter& entities,
                   const std::vector<Parameter>& comb, int row, std::vector<double>& out) {
  out.resize(p.n_knowledge);
  for (int kc = 0; kc < p.n_knowledge; ++kc) {
    out[kc] = kernels::stable_sigmoid(entry(p, entities, comb, row, kc, "kancd"));
  }
}

}  // namespace

KaNCDParams KaNCDParams::init(int n_students, int n_items, int n_knowledge, int d, int h1, int h2,
                              MFType mf_type, std::uint64_t seed) {
  if (n_students < 1 || n_items < 1 || n_knowledge < 1 || d < 1 || h1 < 1 || h2 < 1) {
    throw ConfigError("kancd: all dimensions must be positive");
  }
  if (d >= n_knowledge) {
    throw ConfigError("kancd: latent dimension d=" + std::to_string(d) +
                      " must be smaller than K=" + std::to_string(n_knowledge));
  }
  KaNCDParams p;
  p.n_students = n_students;
  p.n_items = n_items;
  p.n_knowledge = n_knowledge;
  p.d = d;
  p.h1 = h1;
  p.h2 = h2;
  p.mf_type = mf_type;
  p.Ls = Parameter("Ls", init_matrix(seed, "Ls", n_students, d, xavier_bound(n_students, d),
                                     false));
  p.Le = Parameter("Le", init_matrix(seed, "Le", n_items, d, xavier_bound(n_items, d), false));
  // K-free scale: padding the knowledge space must not rescale live rows
  p.Lk = Parameter("Lk", init_matrix(seed, "Lk", n_knowledge, d, xavier_bound(d, d), false));
  p.comb_a = make_latent_combiner(mf_type, d, "a", seed);
  p.comb_b = make_latent_combiner(mf_type, d, "b", seed);
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

std::vector<Parameter*> KaNCDParams::trainable() {
  std::vector<Parameter*> out = {&Ls, &Le, &Lk};
  for (auto& c : comb_a) out.push_back(&c);
  for (auto& c : comb_b) out.push_back(&c);
  out.insert(out.end(), {&D, &W1, &b1, &W2, &b2, &W3, &b3});
  return out;
}

double kancd_proficiency_entry(const KaNCDParams& p, int student, int kc) {
  return entry(p, p.Ls, p.comb_a, student, kc, "kancd_proficiency_entry");
}

double kancd_difficulty_entry(const KaNCDParams& p, int item, int kc) {
  return entry(p, p.Le, p.comb_b, item, kc, "kancd_difficulty_entry");
}

Prediction kancd_forward(const KaNCDParams& p, int student, int item, const QMatrix& q) {
  if (student < 0 || student >= p.n_students || item < 0 || item >= p.n_items) {
    throw DataError("kancd_forward: index out of range");
  }
  std::vector<double> h_s, h_diff;
  assemble_rows(p, p.Ls, p.comb_a, student, h_s);
  assemble_rows(p, p.Le, p.comb_b, item, h_diff);
  const double h_disc = kernels::stable_sigmoid(p.D.value(item, 0));
  std::vector<double> x(p.n_knowledge);
  for (int j = 0; j < p.n_knowledge; ++j) {
    x[j] = q.cells(item, j) * (h_s[j] - h_diff[j]) * h_disc;
  }
  return {student, item, detail::mlp3(x, p.W1, p.b1, p.W2, p.b2, p.W3, p.b3)};
}

double kancd_forward_from_proficiency(const KaNCDParams& p, std::span<const double> h_s, int item,
                                      const QMatrix& q) {
  if (item < 0 || item >= p.n_items) throw DataError("kancd_forward_from_proficiency: bad item");
  if (static_cast<int>(h_s.size()) != p.n_knowledge) {
    throw DimensionError("proficiency vector length mismatch");
  }
  std::vector<double> h_diff;
  assemble_rows(p, p.Le, p.comb_b, item, h_diff);
  const double h_disc = kernels::stable_sigmoid(p.D.value(item, 0));
  std::vector<double> x(p.n_knowledge);
  for (int j = 0; j < p.n_knowledge; ++j) {
    x[j] = q.cells(item, j) * (h_s[j] - h_diff[j]) * h_disc;
  }
  return detail::mlp3(x, p.W1, p.b1, p.W2, p.b2, p.W3, p.b3);
}

NodeId latent_combine_batch(Tape& tape, std::vector<Parameter>& comb, MFType mf_type,
                            NodeId entity_rows, NodeId lk, int batch, int k) {
  switch (mf_type) {
    case MFType::kMF:
      return tape.matmul_nt(entity_rows, lk);
    case MFType::kGMF: {
      const NodeId scaled = tape.col_scale(entity_rows, tape.param(comb[0]));
      return tape.add_scalar(tape.matmul_nt(scaled, lk), tape.param(comb[1]));
    }
    case MFType::kNCF1:
    case MFType::kNCF2: {
      NodeId h = tape.pairwise_hadamard(entity_rows, lk);  // (batch*K) x d
      const std::size_t hidden_layers = mf_type == MFType::kNCF1 ? 1 : 2;
      for (std::size_t layer = 0; layer < hidden_layers; ++layer) {
        h = tape.sigmoid(tape.add_row(tape.matmul_nt(h, tape.param(comb[2 * layer])),
                                      tape.param(comb[2 * layer + 1])));
      }
      const NodeId out = tape.add_row(tape.matmul_nt(h, tape.param(comb[comb.size() - 2])),
                                      tape.param(comb[comb.size() - 1]));
      return tape.reshape(out, batch, k);
    }
  }
  throw ConfigError("latent_combine_batch: unhandled mf type");
}

NodeId kancd_batch_loss(Tape& tape, KaNCDParams& p, const SubjectDataset& ds,
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

  const NodeId lk = tape.param(p.Lk);
  const NodeId ls_rows = tape.gather_rows(tape.param(p.Ls), srow);
  const NodeId le_rows = tape.gather_rows(tape.param(p.Le), erow);
  const NodeId h_s =
      tape.sigmoid(latent_combine_batch(tape, p.comb_a, p.mf_type, ls_rows, lk, bsz,
                                        p.n_knowledge));
  const NodeId h_diff =
      tape.sigmoid(latent_combine_batch(tape, p.comb_b, p.mf_type, le_rows, lk, bsz,
                                        p.n_knowledge));
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

std::pair<KaNCDParams, History> kancd_train(const SubjectDataset& train_ds,
                                            const SubjectDataset& valid_ds, const TrainConfig& cfg,
                                            MFType mf_type, int d, int h1, int h2) {
  KaNCDParams params = KaNCDParams::init(train_ds.n_students(), train_ds.n_items(),
                                         train_ds.n_knowledge(), d, h1, h2, mf_type, cfg.seed);
  const auto trainable = params.trainable();
  const auto builder = [&](Tape& tape, std::span<const std::size_t> idx) {
    return kancd_batch_loss(tape, params, train_ds, idx);
  };
  History hist = fit(train_ds, valid_ds, trainable, cfg, builder,
                     [&](int s, int e) { return kancd_forward(params, s, e, train_ds.q).y; });
  return {std::move(params), std::move(hist)};
}

std::vector<double> kancd_diagnose(const KaNCDParams& p, int student) {
  if (student < 0 || student >= p.n_students) {
    throw DataError("kancd_diagnose: student index out of range");
  }
  std::vector<double> h_s;
  assemble_rows(p, p.Ls, p.comb_a, student, h_s);
  return h_s;
}

PredictFn kancd_predictor(const KaNCDParams& p, const QMatrix& q) {
  return [&p, &q](int s, int e) { return kancd_forward(p, s, e, q).y; };
}

}  // namespace cogdiag
