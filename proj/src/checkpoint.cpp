#include "cogdiag/checkpoint.hpp"

#include <cstdio>
#include <fstream>

#include "cogdiag/errors.hpp"
#include "cogdiag/jsonio.hpp"

namespace cogdiag {

namespace {

using nlohmann::json;

json qmatrix_to_json(const QMatrix& q) {
  return json{{"items", q.items}, {"knowledge", q.knowledge}, {"cells", matrix_to_json(q.cells)}};
}

QMatrix qmatrix_from_json(const json& j) {
  QMatrix q;
  q.items = j.at("items").get<std::vector<std::string>>();
  q.knowledge = j.at("knowledge").get<std::vector<std::string>>();
  q.cells = matrix_from_json(j.at("cells"));
  if (q.cells.rows != q.n_items() || q.cells.cols != q.n_knowledge()) {
    throw CheckpointError("q-matrix cells do not match item/knowledge counts");
  }
  return q;
}

void check_header(const json& j, const std::string& expect_model, const std::string& path) {
  if (!j.contains("format_version") || !j["format_version"].is_number_integer()) {
    throw CheckpointError("'" + path + "': missing format_version");
  }
  if (j["format_version"].get<int>() != kCheckpointFormatVersion) {
    throw CheckpointError("'" + path + "': unsupported format_version " +
                          j["format_version"].dump());
  }
  const std::string model = j.value("model", "");
  if (!expect_model.empty() && model != expect_model) {
    throw CheckpointError("'" + path + "': model kind is '" + model + "', expected '" +
                          expect_model + "'");
  }
}

void load_values(Parameter& p, const json& matrices, const char* key) {
  if (!matrices.contains(key)) {
    throw CheckpointError(std::string("checkpoint missing matrix '") + key + "'");
  }
  Matrix m = matrix_from_json(matrices[key]);
  if (!m.same_shape(p.value)) {
    throw CheckpointError(std::string("matrix '") + key + "' has shape " + m.shape_str() +
                          ", expected " + p.value.shape_str());
  }
  p.value = std::move(m);
}

json combiner_to_json(const std::vector<Parameter>& comb) {
  json arr = json::array();
  for (const auto& c : comb) arr.push_back(matrix_to_json(c.value));
  return arr;
}

void combiner_from_json(std::vector<Parameter>& comb, const json& arr, const char* key) {
  if (!arr.is_array() || arr.size() != comb.size()) {
    throw CheckpointError(std::string("combiner '") + key + "' has wrong entry count");
  }
  for (std::size_t i = 0; i < comb.size(); ++i) {
    Matrix m = matrix_from_json(arr[i]);
    if (!m.same_shape(comb[i].value)) {
      throw CheckpointError(std::string("combiner '") + key + "' entry " + std::to_string(i) +
                            " has wrong shape");
    }
    comb[i].value = std::move(m);
  }
}

}  // namespace

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  char hex[32];
  std::snprintf(hex, sizeof(hex), "fnv1a64:%016llx", static_cast<unsigned long long>(h));
  return hex;
}

void save_checkpoint(const NeuralCDCheckpoint& ck, const std::string& path) {
  const NeuralCDParams& p = ck.params;
  json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["model"] = "neuralcd";
  j["dims"] = {{"students", p.n_students}, {"items", p.n_items}, {"knowledge", p.n_knowledge},
               {"h1", p.h1},               {"h2", p.h2}};
  j["students"] = ck.students;
  j["q"] = qmatrix_to_json(ck.q);
  j["matrices"] = {{"A", matrix_to_json(p.A.value)},   {"B", matrix_to_json(p.B.value)},
                   {"D", matrix_to_json(p.D.value)},   {"W1", matrix_to_json(p.W1.value)},
                   {"b1", matrix_to_json(p.b1.value)}, {"W2", matrix_to_json(p.W2.value)},
                   {"b2", matrix_to_json(p.b2.value)}, {"W3", matrix_to_json(p.W3.value)},
                   {"b3", matrix_to_json(p.b3.value)}};
  j["seed"] = ck.seed;
  j["config"] = ck.config;
  write_json_file(j, path);
}

void save_checkpoint(const KaNCDCheckpoint& ck, const std::string& path) {
  const KaNCDParams& p = ck.params;
  json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["model"] = "kancd";
  j["dims"] = {{"students", p.n_students}, {"items", p.n_items}, {"knowledge", p.n_knowledge},
               {"d", p.d},                 {"h1", p.h1},         {"h2", p.h2}};
  j["mf_type"] = to_string(p.mf_type);
  j["students"] = ck.students;
  j["q"] = qmatrix_to_json(ck.q);
  j["matrices"] = {{"Ls", matrix_to_json(p.Ls.value)}, {"Le", matrix_to_json(p.Le.value)},
                   {"Lk", matrix_to_json(p.Lk.value)}, {"D", matrix_to_json(p.D.value)},
                   {"W1", matrix_to_json(p.W1.value)}, {"b1", matrix_to_json(p.b1.value)},
                   {"W2", matrix_to_json(p.W2.value)}, {"b2", matrix_to_json(p.b2.value)},
                   {"W3", matrix_to_json(p.W3.value)}, {"b3", matrix_to_json(p.b3.value)}};
  j["combiners"] = {{"comb_a", combiner_to_json(p.comb_a)},
                    {"comb_b", combiner_to_json(p.comb_b)}};
  j["seed"] = ck.seed;
  j["config"] = ck.config;
  write_json_file(j, path);
}

NeuralCDCheckpoint load_neuralcd_checkpoint(const std::string& path) {
  const json j = read_json_file(path);
  check_header(j, "neuralcd", path);
  try {
    const json& dims = j.at("dims");
    NeuralCDCheckpoint ck;
    ck.params = NeuralCDParams::init(dims.at("students").get<int>(), dims.at("items").get<int>(),
                                     dims.at("knowledge").get<int>(), dims.at("h1").get<int>(),
                                     dims.at("h2").get<int>(), j.value("seed", 0ull));
    const json& m = j.at("matrices");
    for (Parameter* p : ck.params.trainable()) load_values(*p, m, p->name.c_str());
    ck.q = qmatrix_from_json(j.at("q"));
    ck.students = j.at("students").get<std::vector<std::string>>();
    ck.seed = j.value("seed", 0ull);
    ck.config = j.value("config", json::object());
    if (ck.q.n_knowledge() != ck.params.n_knowledge || ck.q.n_items() != ck.params.n_items ||
        static_cast<int>(ck.students.size()) != ck.params.n_students) {
      throw CheckpointError("checkpoint dims disagree with id lists");
    }
    return ck;
  } catch (const json::exception& e) {
    throw CheckpointError("'" + path + "': " + e.what());
  }
}

KaNCDCheckpoint load_kancd_checkpoint(const std::string& path) {
  const json j = read_json_file(path);
  check_header(j, "kancd", path);
  try {
    const json& dims = j.at("dims");
    KaNCDCheckpoint ck;
    ck.params = KaNCDParams::init(dims.at("students").get<int>(), dims.at("items").get<int>(),
                                  dims.at("knowledge").get<int>(), dims.at("d").get<int>(),
                                  dims.at("h1").get<int>(), dims.at("h2").get<int>(),
                                  mf_type_from_string(j.at("mf_type").get<std::string>()),
                                  j.value("seed", 0ull));
    const json& m = j.at("matrices");
    for (const char* key : {"Ls", "Le", "Lk", "D", "W1", "b1", "W2", "b2", "W3", "b3"}) {
      Parameter* target = nullptr;
      for (Parameter* p : ck.params.trainable()) {
        if (p->name == key) target = p;
      }
      if (target == nullptr) throw CheckpointError(std::string("unknown matrix key ") + key);
      load_values(*target, m, key);
    }
    const json& comb = j.at("combiners");
    combiner_from_json(ck.params.comb_a, comb.at("comb_a"), "comb_a");
    combiner_from_json(ck.params.comb_b, comb.at("comb_b"), "comb_b");
    ck.q = qmatrix_from_json(j.at("q"));
    ck.students = j.at("students").get<std::vector<std::string>>();
    ck.seed = j.value("seed", 0ull);
    ck.config = j.value("config", json::object());
    if (ck.q.n_knowledge() != ck.params.n_knowledge || ck.q.n_items() != ck.params.n_items ||
        static_cast<int>(ck.students.size()) != ck.params.n_students) {
      throw CheckpointError("checkpoint dims disagree with id lists");
    }
    return ck;
  } catch (const json::exception& e) {
    throw CheckpointError("'" + path + "': " + e.what());
  }
}

void save_transfer_checkpoint(const TransferModel& m, std::uint64_t seed,
                              const nlohmann::json& config, const std::string& path) {
  json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["model"] = m.kind == ModelKind::kNeuralCD ? "transfer-neuralcd" : "transfer-kancd";
  j["source_checkpoint_digest"] = m.source_digest;
  j["k_common"] = m.k_common;
  j["backbone"] = {{"h1", m.h1},
                   {"h2", m.h2},
                   {"W1", matrix_to_json(m.W1)},
                   {"b1", matrix_to_json(m.b1)},
                   {"W2", matrix_to_json(m.W2)},
                   {"b2", matrix_to_json(m.b2)}};
  json emb;
  emb["students"] = m.students;
  emb["q"] = qmatrix_to_json(m.q);
  emb["target_k"] = m.target_k;
  emb["D"] = matrix_to_json(m.D.value);
  if (m.kind == ModelKind::kNeuralCD) {
    emb["A"] = matrix_to_json(m.A.value);
    emb["B"] = matrix_to_json(m.B.value);
  } else {
    emb["d"] = m.d;
    emb["mf_type"] = to_string(m.mf_type);
    emb["Ls"] = matrix_to_json(m.Ls.value);
    emb["Le"] = matrix_to_json(m.Le.value);
    emb["Lk"] = matrix_to_json(m.Lk.value);
    emb["comb_a"] = combiner_to_json(m.comb_a);
    emb["comb_b"] = combiner_to_json(m.comb_b);
  }
  j["target_embeddings"] = std::move(emb);
  j["head"] = {{"g1", m.g1},
               {"g2", m.g2},
               {"dropout", m.dropout_rate},
               {"freeze_embeddings", m.freeze_embeddings},
               {"W4", matrix_to_json(m.W4.value)},
               {"b4", matrix_to_json(m.b4.value)},
               {"W5", matrix_to_json(m.W5.value)},
               {"b5", matrix_to_json(m.b5.value)},
               {"W6", matrix_to_json(m.W6.value)},
               {"b6", matrix_to_json(m.b6.value)}};
  j["seed"] = seed;
  j["config"] = config;
  write_json_file(j, path);
}

TransferModel load_transfer_checkpoint(const std::string& path, std::uint64_t* seed_out,
                                       nlohmann::json* config_out) {
  const json j = read_json_file(path);
  check_header(j, "", path);
  const std::string model = j.value("model", "");
  if (model != "transfer-neuralcd" && model != "transfer-kancd") {
    throw CheckpointError("'" + path + "': model kind is '" + model +
                          "', expected a transfer checkpoint");
  }
  try {
    TransferModel m;
    m.kind = model == "transfer-neuralcd" ? ModelKind::kNeuralCD : ModelKind::kKaNCD;
    m.source_digest = j.value("source_checkpoint_digest", "");
    m.k_common = j.at("k_common").get<int>();
    const json& bb = j.at("backbone");
    m.h1 = bb.at("h1").get<int>();
    m.h2 = bb.at("h2").get<int>();
    m.W1 = matrix_from_json(bb.at("W1"));
    m.b1 = matrix_from_json(bb.at("b1"));
    m.W2 = matrix_from_json(bb.at("W2"));
    m.b2 = matrix_from_json(bb.at("b2"));

    const json& emb = j.at("target_embeddings");
    m.students = emb.at("students").get<std::vector<std::string>>();
    m.q = qmatrix_from_json(emb.at("q"));
    m.target_k = emb.at("target_k").get<int>();
    m.n_students = static_cast<int>(m.students.size());
    m.n_items = m.q.n_items();
    m.D = Parameter("D", matrix_from_json(emb.at("D")));
    if (m.kind == ModelKind::kNeuralCD) {
      m.A = Parameter("A", matrix_from_json(emb.at("A")));
      m.B = Parameter("B", matrix_from_json(emb.at("B")));
    } else {
      m.d = emb.at("d").get<int>();
      m.mf_type = mf_type_from_string(emb.at("mf_type").get<std::string>());
      m.Ls = Parameter("Ls", matrix_from_json(emb.at("Ls")));
      m.Le = Parameter("Le", matrix_from_json(emb.at("Le")));
      m.Lk = Parameter("Lk", matrix_from_json(emb.at("Lk")));
      m.comb_a = make_latent_combiner(m.mf_type, m.d, "a", 0);
      m.comb_b = make_latent_combiner(m.mf_type, m.d, "b", 0);
      combiner_from_json(m.comb_a, emb.at("comb_a"), "comb_a");
      combiner_from_json(m.comb_b, emb.at("comb_b"), "comb_b");
    }

    const json& head = j.at("head");
    m.g1 = head.at("g1").get<int>();
    m.g2 = head.at("g2").get<int>();
    m.dropout_rate = head.at("dropout").get<double>();
    m.freeze_embeddings = head.value("freeze_embeddings", false);
    m.W4 = Parameter("W4", matrix_from_json(head.at("W4")), true);
    m.b4 = Parameter("b4", matrix_from_json(head.at("b4")));
    m.W5 = Parameter("W5", matrix_from_json(head.at("W5")), true);
    m.b5 = Parameter("b5", matrix_from_json(head.at("b5")));
    m.W6 = Parameter("W6", matrix_from_json(head.at("W6")), true);
    m.b6 = Parameter("b6", matrix_from_json(head.at("b6")));

    if (m.W1.rows != m.h1 || m.W1.cols != m.k_common || m.W2.rows != m.h2 ||
        m.W2.cols != m.h1 || m.q.n_knowledge() != m.k_common || m.target_k > m.k_common) {
      throw CheckpointError("'" + path + "': inconsistent transfer dims");
    }
    if (seed_out) *seed_out = j.value("seed", 0ull);
    if (config_out) *config_out = j.value("config", json::object());
    return m;
  } catch (const json::exception& e) {
    throw CheckpointError("'" + path + "': " + e.what());
  }
}

std::string checkpoint_kind(const std::string& path) {
  const json j = read_json_file(path);
  check_header(j, "", path);
  return j.value("model", "");
}

SourceBackbone load_backbone(const std::string& path, const std::string& expect) {
  const std::string kind = checkpoint_kind(path);
  if (!expect.empty() && kind != expect) {
    throw CheckpointError("'" + path + "': model kind is '" + kind + "', expected '" + expect +
                          "'");
  }
  SourceBackbone b;
  if (kind == "neuralcd") {
    b = make_backbone(load_neuralcd_checkpoint(path).params);
  } else if (kind == "kancd") {
    b = make_backbone(load_kancd_checkpoint(path).params);
  } else {
    throw CheckpointError("'" + path + "': cannot use a '" + kind +
                          "' checkpoint as a transfer source");
  }
  b.source_digest = file_digest(path);
  return b;
}

LoadedModel load_any_checkpoint(const std::string& path) {
  const std::string kind = checkpoint_kind(path);
  LoadedModel lm;
  lm.kind = kind;
  if (kind == "neuralcd") {
    auto ck = std::make_shared<NeuralCDCheckpoint>(load_neuralcd_checkpoint(path));
    lm.students = ck->students;
    lm.q = ck->q;
    lm.diag_knowledge = ck->q.knowledge;
    lm.config = ck->config;
    lm.predict = [ck](int s, int e) { return neuralcd_forward(ck->params, s, e, ck->q).y; };
    lm.diagnose = [ck](int s) { return neuralcd_diagnose(ck->params, s); };
    lm.holder = ck;
  } else if (kind == "kancd") {
    auto ck = std::make_shared<KaNCDCheckpoint>(load_kancd_checkpoint(path));
    lm.students = ck->students;
    lm.q = ck->q;
    lm.diag_knowledge = ck->q.knowledge;
    lm.config = ck->config;
    lm.predict = [ck](int s, int e) { return kancd_forward(ck->params, s, e, ck->q).y; };
    lm.diagnose = [ck](int s) { return kancd_diagnose(ck->params, s); };
    lm.holder = ck;
  } else if (kind == "transfer-neuralcd" || kind == "transfer-kancd") {
    nlohmann::json config;
    auto m = std::make_shared<TransferModel>(load_transfer_checkpoint(path, nullptr, &config));
    lm.students = m->students;
    lm.q = m->q;
    lm.diag_knowledge.assign(m->q.knowledge.begin(), m->q.knowledge.begin() + m->target_k);
    lm.config = config;
    lm.predict = [m](int s, int e) { return transfer_forward(*m, s, e, false, nullptr).y; };
    lm.diagnose = [m](int s) { return transfer_diagnose(*m, s); };
    lm.holder = m;
  } else {
    throw CheckpointError("'" + path + "': unknown model kind '" + kind + "'");
  }
  return lm;
}

SubjectDataset align_to_model(const SubjectDataset& ds, const LoadedModel& m) {
  SubjectDataset out;
  out.subject = ds.subject;
  out.q = m.q;
  out.students = m.students;
  for (int i = 0; i < static_cast<int>(m.students.size()); ++i) {
    out.student_index.emplace(m.students[i], i);
  }
  for (int i = 0; i < m.q.n_items(); ++i) out.item_index.emplace(m.q.items[i], i);
  out.records = ds.records;
  for (const auto& r : out.records) {
    if (!out.student_index.count(r.student_id)) {
      throw DataError("student '" + r.student_id + "' is unknown to the checkpoint");
    }
    if (!out.item_index.count(r.item_id)) {
      throw DataError("item '" + r.item_id + "' is unknown to the checkpoint");
    }
  }
  return out;
}

}  // namespace cogdiag
