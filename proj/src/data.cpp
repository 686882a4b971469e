#include "cogdiag/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cogdiag/errors.hpp"
#include "cogdiag/rng.hpp"

namespace cogdiag {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// Shortest decimal form that parses back to the same double.
std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> normalize_codes(std::vector<std::string> codes, int line) {
  for (auto& c : codes) c = trim(c);
  codes.erase(std::remove_if(codes.begin(), codes.end(),
                             [](const std::string& c) { return c.empty(); }),
              codes.end());
  if (codes.empty()) {
    throw DataError("line " + std::to_string(line) + ": no knowledge code");
  }
  std::sort(codes.begin(), codes.end());
  codes.erase(std::unique(codes.begin(), codes.end()), codes.end());
  return codes;
}

void check_score(double score, int line) {
  if (!(score >= 0.0 && score <= 1.0)) {
    throw DataError("line " + std::to_string(line) + ": score " + fmt_double(score) +
                    " outside [0,1]");
  }
}

SubjectDataset build_dataset(std::string subject, std::vector<ResponseRecord> records) {
  if (records.empty()) throw DataError("dataset has no records");
  SubjectDataset ds;
  ds.subject = std::move(subject);
  ds.records = std::move(records);

  std::set<std::string> kc_set;
  for (const auto& r : ds.records) {
    if (ds.student_index.emplace(r.student_id, static_cast<int>(ds.students.size())).second) {
      ds.students.push_back(r.student_id);
    }
    if (ds.item_index.emplace(r.item_id, static_cast<int>(ds.q.items.size())).second) {
      ds.q.items.push_back(r.item_id);
    }
    kc_set.insert(r.knowledge_codes.begin(), r.knowledge_codes.end());
  }
  ds.q.knowledge.assign(kc_set.begin(), kc_set.end());

  std::unordered_map<std::string, int> kc_index;
  for (int j = 0; j < ds.q.n_knowledge(); ++j) kc_index.emplace(ds.q.knowledge[j], j);

  ds.q.cells = Matrix::zeros(ds.q.n_items(), ds.q.n_knowledge());
  for (const auto& r : ds.records) {
    const int item = ds.item_index.at(r.item_id);
    for (const auto& c : r.knowledge_codes) ds.q.cells(item, kc_index.at(c)) = 1.0;
  }
  return ds;
}

SubjectDataset load_csv(const std::string& path, const std::string& subject) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string header;
  if (!std::getline(in, header)) throw DataError("'" + path + "' is empty");

  const auto cols = split_on(trim(header), ',');
  auto col_of = [&](const std::string& name) {
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (trim(cols[i]) == name) return static_cast<int>(i);
    }
    throw SchemaError("'" + path + "': missing column '" + name + "'");
  };
  const int c_user = col_of("user_id");
  const int c_item = col_of("item_id");
  const int c_score = col_of("score");
  const int c_kc = col_of("knowledge_code");
  const int need = std::max({c_user, c_item, c_score, c_kc}) + 1;

  std::vector<ResponseRecord> records;
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const auto fields = split_on(line, ',');
    if (static_cast<int>(fields.size()) < need) {
      throw SchemaError("line " + std::to_string(lineno) + ": expected " + std::to_string(need) +
                        " fields, got " + std::to_string(fields.size()));
    }
    ResponseRecord r;
    r.student_id = trim(fields[c_user]);
    r.item_id = trim(fields[c_item]);
    if (r.student_id.empty() || r.item_id.empty()) {
      throw DataError("line " + std::to_string(lineno) + ": empty user_id or item_id");
    }
    try {
      r.score = std::stod(trim(fields[c_score]));
    } catch (const std::exception&) {
      throw DataError("line " + std::to_string(lineno) + ": unparsable score '" +
                      trim(fields[c_score]) + "'");
    }
    check_score(r.score, lineno);
    r.knowledge_codes = normalize_codes(split_on(fields[c_kc], ';'), lineno);
    records.push_back(std::move(r));
  }
  return build_dataset(subject, std::move(records));
}

SubjectDataset load_jsonl(const std::string& path, const std::string& subject) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::vector<ResponseRecord> records;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("line " + std::to_string(lineno) + ": " + e.what());
    }
    for (const char* key : {"user_id", "item_id", "score", "knowledge_code"}) {
      if (!obj.contains(key)) {
        throw SchemaError("line " + std::to_string(lineno) + ": missing column '" + key + "'");
      }
    }
    ResponseRecord r;
    r.student_id = obj["user_id"].get<std::string>();
    r.item_id = obj["item_id"].get<std::string>();
    if (!obj["score"].is_number()) {
      throw SchemaError("line " + std::to_string(lineno) + ": score must be a number");
    }
    r.score = obj["score"].get<double>();
    check_score(r.score, lineno);
    std::vector<std::string> codes;
    const auto& kc = obj["knowledge_code"];
    if (kc.is_string()) {
      codes = split_on(kc.get<std::string>(), ';');
    } else if (kc.is_array()) {
      for (const auto& c : kc) codes.push_back(c.get<std::string>());
    } else {
      throw SchemaError("line " + std::to_string(lineno) +
                        ": knowledge_code must be a string or array");
    }
    r.knowledge_codes = normalize_codes(std::move(codes), lineno);
    records.push_back(std::move(r));
  }
  return build_dataset(subject, std::move(records));
}

// Exact integer targets for the three fractions via largest remainder.
std::array<std::size_t, 3> remainder_targets(double f0, double f1, double f2, std::size_t n) {
  const double fs[3] = {f0, f1, f2};
  std::array<std::size_t, 3> t{};
  double rem[3];
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = fs[i] * static_cast<double>(n);
    t[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[i] = exact - static_cast<double>(t[i]);
    assigned += t[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (rem[i] > rem[best]) best = i;
    }
    ++t[best];
    rem[best] = -1.0;
    ++assigned;
  }
  return t;
}

SubjectDataset subset(const SubjectDataset& ds, std::vector<std::size_t> idx) {
  std::sort(idx.begin(), idx.end());
  SubjectDataset out;
  out.subject = ds.subject;
  out.q = ds.q;
  out.student_index = ds.student_index;
  out.item_index = ds.item_index;
  out.students = ds.students;
  out.records.reserve(idx.size());
  for (std::size_t i : idx) out.records.push_back(ds.records[i]);
  return out;
}

}  // namespace

SubjectDataset load_responses(const std::string& path, ResponseFormat format,
                              const std::string& subject) {
  return format == ResponseFormat::kCsv ? load_csv(path, subject) : load_jsonl(path, subject);
}

void save_responses(const SubjectDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "user_id,item_id,score,knowledge_code\n";
  for (const auto& r : ds.records) {
    out << r.student_id << ',' << r.item_id << ',' << fmt_double(r.score) << ',';
    for (std::size_t i = 0; i < r.knowledge_codes.size(); ++i) {
      if (i) out << ';';
      out << r.knowledge_codes[i];
    }
    out << '\n';
  }
}

void save_qmatrix(const QMatrix& q, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "item_id";
  for (const auto& k : q.knowledge) out << ',' << k;
  out << '\n';
  for (int i = 0; i < q.n_items(); ++i) {
    out << q.items[i];
    for (int j = 0; j < q.n_knowledge(); ++j) out << ',' << (q.cells(i, j) != 0.0 ? 1 : 0);
    out << '\n';
  }
}

void save_mastery(const std::vector<std::string>& students, const std::vector<std::string>& kcs,
                  const Matrix& mastery, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "user_id";
  for (const auto& k : kcs) out << ',' << k;
  out << '\n';
  for (int i = 0; i < mastery.rows; ++i) {
    out << students[i];
    for (int j = 0; j < mastery.cols; ++j) out << ',' << (mastery(i, j) != 0.0 ? 1 : 0);
    out << '\n';
  }
}

Matrix load_mastery(const std::string& path, const SubjectDataset& ds) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string header;
  if (!std::getline(in, header)) throw DataError("'" + path + "' is empty");
  const auto cols = split_on(trim(header), ',');
  if (cols.empty() || trim(cols[0]) != "user_id") {
    throw SchemaError("'" + path + "': missing column 'user_id'");
  }
  // column index per KC name in ds order; padded KCs absent from the file stay 0
  std::vector<int> kc_col(ds.n_knowledge(), -1);
  for (std::size_t c = 1; c < cols.size(); ++c) {
    for (int j = 0; j < ds.n_knowledge(); ++j) {
      if (ds.q.knowledge[j] == trim(cols[c])) kc_col[j] = static_cast<int>(c);
    }
  }
  Matrix m = Matrix::zeros(ds.n_students(), ds.n_knowledge());
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const auto fields = split_on(line, ',');
    auto it = ds.student_index.find(trim(fields[0]));
    if (it == ds.student_index.end()) continue;
    for (int j = 0; j < ds.n_knowledge(); ++j) {
      if (kc_col[j] >= 0 && kc_col[j] < static_cast<int>(fields.size())) {
        m(it->second, j) = trim(fields[kc_col[j]]) == "1" ? 1.0 : 0.0;
      }
    }
  }
  return m;
}

std::tuple<SubjectDataset, SubjectDataset, SubjectDataset> split(const SubjectDataset& ds,
                                                                 const SplitSpec& spec) {
  if (spec.train < 0.0 || spec.valid < 0.0 || spec.test < 0.0 ||
      std::fabs(spec.train + spec.valid + spec.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }
  const std::size_t n = ds.records.size();
  const auto targets = remainder_targets(spec.train, spec.valid, spec.test, n);

  Rng rng = Rng::derive(spec.seed, "split");
  std::vector<std::size_t> train_idx, pool;

  if (spec.stratify_by_student) {
    std::vector<std::vector<std::size_t>> by_student(ds.n_students());
    for (std::size_t i = 0; i < n; ++i) {
      by_student[ds.student_index.at(ds.records[i].student_id)].push_back(i);
    }
    bool warned = false;
    for (int s = 0; s < ds.n_students(); ++s) {
      auto& own = by_student[s];
      if (own.size() < 3) {
        if (!warned && !own.empty()) {
          std::fprintf(stderr,
                       "split: students with fewer than 3 records are assigned entirely to "
                       "train\n");
          warned = true;
        }
        train_idx.insert(train_idx.end(), own.begin(), own.end());
      } else {
        const std::size_t anchor = own[rng.below(own.size())];
        train_idx.push_back(anchor);
        for (std::size_t i : own) {
          if (i != anchor) pool.push_back(i);
        }
      }
    }
  } else {
    pool.resize(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  }

  rng.shuffle(pool);

  // fill train up to its target, then valid, then test
  std::vector<std::size_t> valid_idx, test_idx;
  std::size_t p = 0;
  while (train_idx.size() < targets[0] && p < pool.size()) train_idx.push_back(pool[p++]);
  while (valid_idx.size() < targets[1] && p < pool.size()) valid_idx.push_back(pool[p++]);
  while (p < pool.size()) test_idx.push_back(pool[p++]);

  return {subset(ds, std::move(train_idx)), subset(ds, std::move(valid_idx)),
          subset(ds, std::move(test_idx))};
}

SubjectDataset pad_knowledge(const SubjectDataset& ds, int k_common) {
  if (k_common < ds.n_knowledge()) {
    throw DimensionError("pad_knowledge: k_common " + std::to_string(k_common) +
                         " smaller than dataset K " + std::to_string(ds.n_knowledge()));
  }
  if (k_common == ds.n_knowledge()) return ds;
  SubjectDataset out = ds;
  const int k0 = ds.n_knowledge();
  for (int j = k0; j < k_common; ++j) out.q.knowledge.push_back("__pad" + std::to_string(j - k0));
  out.q.cells = Matrix::zeros(ds.q.n_items(), k_common);
  for (int i = 0; i < ds.q.n_items(); ++i) {
    for (int j = 0; j < k0; ++j) out.q.cells(i, j) = ds.q.cells(i, j);
  }
  return out;
}

std::pair<SubjectDataset, Matrix> synth_generate(const SynthSpec& spec,
                                                 const std::string& subject) {
  if (spec.n_students < 1 || spec.n_items < 1 || spec.n_knowledge < 1) {
    throw ConfigError("synth: N, M, K must be positive");
  }
  if (spec.slip < 0.0 || spec.slip >= 0.5 || spec.guess < 0.0 || spec.guess >= 0.5) {
    throw ConfigError("synth: slip and guess must lie in [0, 0.5)");
  }
  if (spec.mastery_rate < 0.0 || spec.mastery_rate > 1.0) {
    throw ConfigError("synth: mastery-rate must lie in [0, 1]");
  }

  const int n = spec.n_students, m = spec.n_items, k = spec.n_knowledge;
  auto width = [](int count) { return static_cast<int>(std::to_string(count).size()); };
  auto make_id = [](const char* prefix, int idx, int w) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, w, idx + 1);
    return std::string(buf);
  };

  std::vector<std::string> students(n), items(m), kcs(k);
  for (int i = 0; i < n; ++i) students[i] = make_id("s", i, width(n));
  for (int i = 0; i < m; ++i) items[i] = make_id("q", i, width(m));
  for (int j = 0; j < k; ++j) kcs[j] = make_id("k", j, width(k));

  Rng mastery_rng = Rng::derive(spec.seed, "mastery");
  Matrix mastery(n, k);
  for (int s = 0; s < n; ++s) {
    for (int j = 0; j < k; ++j) mastery(s, j) = mastery_rng.bernoulli(spec.mastery_rate) ? 1.0 : 0.0;
  }

  // item -> examined KCs: one uniformly drawn KC per item, extras at a rate
  // chosen so the expected count is avg_kcs_per_item
  Rng q_rng = Rng::derive(spec.seed, "qmatrix");
  const double avg = std::max(1.0, std::min<double>(spec.avg_kcs_per_item, k));
  const double p_extra = k > 1 ? (avg - 1.0) / (k - 1.0) : 0.0;
  std::vector<std::set<int>> item_kcs(m);
  for (int i = 0; i < m; ++i) {
    item_kcs[i].insert(static_cast<int>(q_rng.below(k)));
    for (int j = 0; j < k; ++j) {
      if (!item_kcs[i].count(j) && q_rng.bernoulli(p_extra)) item_kcs[i].insert(j);
    }
  }
  // every KC must be examined somewhere or it can never be diagnosed
  std::vector<bool> covered(k, false);
  for (int i = 0; i < m; ++i) {
    for (int j : item_kcs[i]) covered[j] = true;
  }
  for (int j = 0; j < k; ++j) {
    if (!covered[j]) item_kcs[j % m].insert(j);
  }

  Rng resp_rng = Rng::derive(spec.seed, "responses");
  std::vector<ResponseRecord> records;
  records.reserve(static_cast<std::size_t>(n) * m);
  for (int s = 0; s < n; ++s) {
    for (int i = 0; i < m; ++i) {
      bool master_all = true;
      for (int j : item_kcs[i]) {
        if (mastery(s, j) == 0.0) {
          master_all = false;
          break;
        }
      }
      const double p_correct = master_all ? 1.0 - spec.slip : spec.guess;
      ResponseRecord r;
      r.student_id = students[s];
      r.item_id = items[i];
      r.score = resp_rng.bernoulli(p_correct) ? 1.0 : 0.0;
      for (int j : item_kcs[i]) r.knowledge_codes.push_back(kcs[j]);
      records.push_back(std::move(r));
    }
  }

  SubjectDataset ds = build_dataset(subject, std::move(records));
  return {std::move(ds), std::move(mastery)};
}

const std::vector<SubjectShape>& published_subjects() {
  static const std::vector<SubjectShape> subjects = {
      {"math", 5224, 16, 16},    {"physics", 3639, 12, 11},  {"chemistry", 3290, 24, 19},
      {"biology", 2901, 30, 29}, {"english", 4773, 65, 23},  {"history", 1586, 24, 24},
      {"politics", 2018, 24, 24}, {"geography", 2234, 30, 14},
  };
  return subjects;
}

int default_k_common() {
  int k = 0;
  for (const auto& s : published_subjects()) k = std::max(k, s.knowledge);
  return k;
}

}  // namespace cogdiag
