#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <unordered_map>

#include "cogdiag/data.hpp"
#include "cogdiag/errors.hpp"
#include "cogdiag/neuralcd.hpp"
#include "cogdiag/rng.hpp"

using namespace cogdiag;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path.string();
}

bool same_dataset(const SubjectDataset& a, const SubjectDataset& b) {
  if (a.records.size() != b.records.size() || a.students != b.students ||
      a.q.items != b.q.items || a.q.knowledge != b.q.knowledge || !(a.q.cells == b.q.cells)) {
    return false;
  }
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const auto& ra = a.records[i];
    const auto& rb = b.records[i];
    if (ra.student_id != rb.student_id || ra.item_id != rb.item_id || ra.score != rb.score ||
        ra.knowledge_codes != rb.knowledge_codes) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("csv loader builds indices and induces the q-matrix") {
  const std::string path = write_temp("cd_min.csv",
                                      "user_id,item_id,score,knowledge_code\n"
                                      "u1,i1,1,k1\n"
                                      "u1,i2,0,k2\n"
                                      "u2,i1,0.5,k1\n"
                                      "u2,i2,1,k2\n");
  const SubjectDataset ds = load_responses(path, ResponseFormat::kCsv, "mini");
  CHECK(ds.n_students() == 2);
  CHECK(ds.n_items() == 2);
  CHECK(ds.n_knowledge() == 2);
  CHECK(ds.q.cells(0, 0) == 1.0);
  CHECK(ds.q.cells(0, 1) == 0.0);
  CHECK(ds.q.cells(1, 0) == 0.0);
  CHECK(ds.q.cells(1, 1) == 1.0);
  CHECK(ds.records[2].score == 0.5);
}

TEST_CASE("csv loader rejects out-of-range scores with the line number") {
  const std::string path = write_temp("cd_range.csv",
                                      "user_id,item_id,score,knowledge_code\n"
                                      "u1,i1,1,k1\n"
                                      "u1,i2,1.5,k1\n");
  CHECK_THROWS_WITH_AS(load_responses(path, ResponseFormat::kCsv), doctest::Contains("line 3"),
                       DataError);
}

TEST_CASE("csv loader names the missing column") {
  const std::string path = write_temp("cd_col.csv", "user_id,item_id,knowledge_code\nu1,i1,k1\n");
  CHECK_THROWS_WITH_AS(load_responses(path, ResponseFormat::kCsv), doctest::Contains("score"),
                       SchemaError);
}

TEST_CASE("csv loader rejects rows without a knowledge code") {
  const std::string path = write_temp("cd_nokc.csv",
                                      "user_id,item_id,score,knowledge_code\n"
                                      "u1,i1,1,k1\n"
                                      "u2,i1,1, \n");
  CHECK_THROWS_WITH_AS(load_responses(path, ResponseFormat::kCsv), doctest::Contains("line 3"),
                       DataError);
}

TEST_CASE("empty files are dataset errors") {
  const std::string path = write_temp("cd_empty.csv", "user_id,item_id,score,knowledge_code\n");
  CHECK_THROWS_AS(load_responses(path, ResponseFormat::kCsv), DataError);
}

TEST_CASE("jsonl loader accepts string and array knowledge codes") {
  const std::string path = write_temp(
      "cd.jsonl",
      R"({"user_id":"u1","item_id":"i1","score":1,"knowledge_code":"k1;k2"})"
      "\n"
      R"({"user_id":"u2","item_id":"i1","score":0,"knowledge_code":["k2","k1"]})"
      "\n");
  const SubjectDataset ds = load_responses(path, ResponseFormat::kJsonl);
  CHECK(ds.n_students() == 2);
  CHECK(ds.n_items() == 1);
  CHECK(ds.n_knowledge() == 2);
  CHECK(ds.records[0].knowledge_codes == std::vector<std::string>{"k1", "k2"});
  CHECK(ds.records[1].knowledge_codes == std::vector<std::string>{"k1", "k2"});
}

TEST_CASE("load-save-load round-trips exactly") {
  SynthSpec spec;
  spec.n_students = 40;
  spec.n_items = 9;
  spec.n_knowledge = 5;
  spec.seed = 21;
  const auto [ds, mastery] = synth_generate(spec, "round");
  const auto path = std::filesystem::temp_directory_path() / "cd_round.csv";
  save_responses(ds, path.string());
  const SubjectDataset re = load_responses(path.string(), ResponseFormat::kCsv, "round");
  CHECK(same_dataset(ds, re));
  save_responses(re, path.string());
  const SubjectDataset re2 = load_responses(path.string(), ResponseFormat::kCsv, "round");
  CHECK(same_dataset(re, re2));
}

TEST_CASE("q-matrix rows always examine at least one concept") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SynthSpec spec;
    spec.n_students = 15;
    spec.n_items = 12;
    spec.n_knowledge = 7;
    spec.avg_kcs_per_item = 1.3;
    spec.seed = seed;
    const auto [ds, mastery] = synth_generate(spec);
    for (int i = 0; i < ds.q.n_items(); ++i) {
      double row_sum = 0.0;
      for (int j = 0; j < ds.q.n_knowledge(); ++j) row_sum += ds.q.cells(i, j);
      CHECK(row_sum >= 1.0);
    }
  }
}

TEST_CASE("published subject shapes reproduce the published record volumes") {
  const std::vector<std::pair<std::string, std::size_t>> volumes = {
      {"math", 83584},     {"physics", 43668}, {"chemistry", 78960}, {"biology", 87030},
      {"english", 310245}, {"history", 38064}, {"politics", 48432},  {"geography", 67020}};
  CHECK(published_subjects().size() == 8);
  CHECK(default_k_common() == 29);
  for (const auto& [name, volume] : volumes) {
    const SubjectShape* shape = nullptr;
    for (const auto& s : published_subjects()) {
      if (s.name == name) shape = &s;
    }
    REQUIRE(shape != nullptr);
    CHECK(static_cast<std::size_t>(shape->students) * shape->items == volume);
  }
  // full-matrix generation at one shape, written out and loaded back
  SynthSpec spec;
  spec.n_students = 1586;
  spec.n_items = 24;
  spec.n_knowledge = 24;
  spec.seed = 3;
  const auto [ds, mastery] = synth_generate(spec, "history");
  CHECK(ds.records.size() == 38064);
  const auto path = std::filesystem::temp_directory_path() / "cd_history.csv";
  save_responses(ds, path.string());
  const SubjectDataset re = load_responses(path.string(), ResponseFormat::kCsv, "history");
  CHECK(re.records.size() == 38064);
  CHECK(re.n_students() == 1586);
  CHECK(re.n_items() == 24);
}

TEST_CASE("degenerate split sends everything to train") {
  SynthSpec spec;
  spec.n_students = 12;
  spec.n_items = 6;
  spec.n_knowledge = 4;
  spec.seed = 2;
  const auto [ds, mastery] = synth_generate(spec);
  const auto [tr, va, te] = split(ds, {1.0, 0.0, 0.0, 5, true});
  CHECK(tr.records.size() == ds.records.size());
  CHECK(va.records.empty());
  CHECK(te.records.empty());
}

TEST_CASE("split is deterministic under the seed") {
  SynthSpec spec;
  spec.n_students = 30;
  spec.n_items = 8;
  spec.n_knowledge = 5;
  spec.seed = 4;
  const auto [ds, mastery] = synth_generate(spec);
  const auto [a1, b1, c1] = split(ds, {0.6, 0.2, 0.2, 77, true});
  const auto [a2, b2, c2] = split(ds, {0.6, 0.2, 0.2, 77, true});
  CHECK(same_dataset(a1, a2));
  CHECK(same_dataset(b1, b2));
  CHECK(same_dataset(c1, c2));
  const auto [a3, b3, c3] = split(ds, {0.6, 0.2, 0.2, 78, true});
  CHECK_FALSE(same_dataset(a1, a3));
}

TEST_CASE("split sizes track the fractions within one record") {
  SynthSpec spec;
  spec.n_students = 100;
  spec.n_items = 10;
  spec.n_knowledge = 6;
  spec.seed = 6;
  const auto [ds, mastery] = synth_generate(spec);
  REQUIRE(ds.records.size() == 1000);
  const auto [tr, va, te] = split(ds, {0.7, 0.1, 0.2, 9, true});
  CHECK(std::llabs(static_cast<long long>(tr.records.size()) - 700) <= 1);
  CHECK(std::llabs(static_cast<long long>(va.records.size()) - 100) <= 1);
  CHECK(std::llabs(static_cast<long long>(te.records.size()) - 200) <= 1);
  CHECK(tr.records.size() + va.records.size() + te.records.size() == 1000);
}

TEST_CASE("split partitions are disjoint and exhaustive with train stratification") {
  Rng rng(500);
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    SynthSpec spec;
    spec.n_students = 5 + static_cast<int>(rng.below(40));
    spec.n_items = 3 + static_cast<int>(rng.below(10));
    spec.n_knowledge = 2 + static_cast<int>(rng.below(6));
    spec.seed = seed + 100;
    const auto [ds, mastery] = synth_generate(spec);
    const auto [tr, va, te] = split(ds, {0.5, 0.25, 0.25, seed, true});

    auto key = [](const ResponseRecord& r) { return r.student_id + "|" + r.item_id; };
    std::multiset<std::string> all;
    for (const auto& r : ds.records) all.insert(key(r));
    std::multiset<std::string> parts;
    for (const auto* part : {&tr, &va, &te}) {
      for (const auto& r : part->records) parts.insert(key(r));
    }
    CHECK(all == parts);  // exhaustive, nothing duplicated

    // every student with >= 3 records appears in train (full matrix: all do)
    std::set<std::string> train_students;
    for (const auto& r : tr.records) train_students.insert(r.student_id);
    for (const auto& id : ds.students) CHECK(train_students.count(id) == 1);
  }
}

TEST_CASE("students with fewer than three records go wholly to train") {
  const std::string path = write_temp("cd_small_students.csv",
                                      "user_id,item_id,score,knowledge_code\n"
                                      "u1,i1,1,k1\n"
                                      "u1,i2,0,k1\n"
                                      "u2,i1,1,k1\n"
                                      "u2,i2,0,k1\n"
                                      "u2,i3,1,k1\n"
                                      "u2,i4,0,k1\n"
                                      "u2,i5,1,k1\n"
                                      "u2,i6,0,k1\n");
  const SubjectDataset ds = load_responses(path, ResponseFormat::kCsv);
  const auto [tr, va, te] = split(ds, {0.5, 0.25, 0.25, 11, true});
  int u1_in_train = 0;
  for (const auto& r : tr.records) u1_in_train += r.student_id == "u1";
  CHECK(u1_in_train == 2);  // both u1 records forced into train
}

TEST_CASE("invalid split fractions are rejected") {
  SynthSpec spec;
  spec.n_students = 5;
  spec.n_items = 3;
  spec.n_knowledge = 2;
  const auto [ds, mastery] = synth_generate(spec);
  CHECK_THROWS_AS(split(ds, {0.5, 0.2, 0.2, 0, true}), ConfigError);
  CHECK_THROWS_AS(split(ds, {-0.1, 0.6, 0.5, 0, true}), ConfigError);
}

TEST_CASE("padding to the same width is a no-op") {
  SynthSpec spec;
  spec.n_students = 10;
  spec.n_items = 5;
  spec.n_knowledge = 2;
  spec.seed = 8;
  const auto [ds, mastery] = synth_generate(spec);
  const SubjectDataset same = pad_knowledge(ds, 2);
  CHECK(same_dataset(ds, same));
  CHECK_THROWS_AS(pad_knowledge(ds, 1), DimensionError);
}

TEST_CASE("padding zero-extends the q-matrix on the right") {
  const std::string path = write_temp("cd_pad.csv",
                                      "user_id,item_id,score,knowledge_code\n"
                                      "u1,i1,1,k1\n"
                                      "u2,i1,0,k1\n");
  const SubjectDataset ds = load_responses(path, ResponseFormat::kCsv);
  REQUIRE(ds.n_knowledge() == 1);
  const SubjectDataset padded = pad_knowledge(ds, 4);
  CHECK(padded.n_knowledge() == 4);
  CHECK(padded.q.cells(0, 0) == 1.0);
  CHECK(padded.q.cells(0, 1) == 0.0);
  CHECK(padded.q.cells(0, 2) == 0.0);
  CHECK(padded.q.cells(0, 3) == 0.0);
  CHECK(padded.q.knowledge[1].substr(0, 5) == "__pad");
  CHECK(padded.records.size() == ds.records.size());
}

TEST_CASE("padded knowledge concepts never change training") {
  SynthSpec spec;
  spec.n_students = 40;
  spec.n_items = 8;
  spec.n_knowledge = 3;
  spec.slip = 0.1;
  spec.guess = 0.1;
  spec.seed = 31;
  const auto [ds, mastery] = synth_generate(spec, "pad-eq");
  const SubjectDataset padded = pad_knowledge(ds, 6);

  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch = 64;
  cfg.lr = 0.01;
  cfg.seed = 5;
  const auto [tr_a, va_a, te_a] = split(ds, {0.8, 0.2, 0.0, cfg.seed, true});
  const auto [tr_b, va_b, te_b] = split(padded, {0.8, 0.2, 0.0, cfg.seed, true});

  const auto [p_plain, h_plain] = neuralcd_train(tr_a, va_a, cfg, 16, 8);
  const auto [p_pad, h_pad] = neuralcd_train(tr_b, va_b, cfg, 16, 8);

  REQUIRE(h_plain.epochs.size() == h_pad.epochs.size());
  for (std::size_t i = 0; i < h_plain.epochs.size(); ++i) {
    CHECK(h_plain.epochs[i].train_loss == h_pad.epochs[i].train_loss);
  }
  for (int s = 0; s < ds.n_students(); ++s) {
    for (int e = 0; e < ds.n_items(); ++e) {
      CHECK(neuralcd_forward(p_plain, s, e, ds.q).y ==
            neuralcd_forward(p_pad, s, e, padded.q).y);
    }
  }
}

TEST_CASE("noiseless generator is exactly conjunctive") {
  SynthSpec spec;
  spec.n_students = 60;
  spec.n_items = 10;
  spec.n_knowledge = 5;
  spec.slip = 0.0;
  spec.guess = 0.0;
  spec.seed = 14;
  const auto [ds, mastery] = synth_generate(spec);
  std::unordered_map<std::string, int> kc_index;
  for (int j = 0; j < ds.n_knowledge(); ++j) kc_index[ds.q.knowledge[j]] = j;
  for (const auto& r : ds.records) {
    const int s = ds.student_index.at(r.student_id);
    bool master_all = true;
    for (const auto& code : r.knowledge_codes) {
      if (mastery(s, kc_index.at(code)) == 0.0) master_all = false;
    }
    CHECK(r.score == (master_all ? 1.0 : 0.0));
  }
}

TEST_CASE("saturated population answers everything correctly") {
  SynthSpec spec;
  spec.n_students = 25;
  spec.n_items = 6;
  spec.n_knowledge = 4;
  spec.slip = 0.0;
  spec.guess = 0.3;
  spec.mastery_rate = 1.0;
  spec.seed = 15;
  const auto [ds, mastery] = synth_generate(spec);
  for (const auto& r : ds.records) CHECK(r.score == 1.0);
  for (double v : mastery.data) CHECK(v == 1.0);
}

TEST_CASE("empirical correct rate for masters matches 1 - slip") {
  SynthSpec spec;
  spec.n_students = 500;
  spec.n_items = 20;
  spec.n_knowledge = 8;
  spec.slip = 0.1;
  spec.guess = 0.1;
  spec.seed = 16;
  const auto [ds, mastery] = synth_generate(spec);
  std::unordered_map<std::string, int> kc_index;
  for (int j = 0; j < ds.n_knowledge(); ++j) kc_index[ds.q.knowledge[j]] = j;
  std::size_t n_master = 0, n_master_correct = 0;
  for (const auto& r : ds.records) {
    const int s = ds.student_index.at(r.student_id);
    bool master_all = true;
    for (const auto& code : r.knowledge_codes) {
      if (mastery(s, kc_index.at(code)) == 0.0) master_all = false;
    }
    if (master_all) {
      ++n_master;
      n_master_correct += r.score == 1.0;
    }
  }
  REQUIRE(n_master > 500);
  const double rate = static_cast<double>(n_master_correct) / static_cast<double>(n_master);
  CHECK(rate > 0.87);
  CHECK(rate < 0.93);
}

TEST_CASE("generator rejects invalid noise rates") {
  SynthSpec spec;
  spec.slip = 0.5;
  CHECK_THROWS_AS(synth_generate(spec), ConfigError);
  spec.slip = 0.1;
  spec.guess = -0.01;
  CHECK_THROWS_AS(synth_generate(spec), ConfigError);
}

TEST_CASE("mastery files round-trip against the dataset") {
  SynthSpec spec;
  spec.n_students = 20;
  spec.n_items = 6;
  spec.n_knowledge = 5;
  spec.seed = 44;
  const auto [ds, mastery] = synth_generate(spec);
  const auto path = std::filesystem::temp_directory_path() / "cd_mastery.csv";
  save_mastery(ds.students, ds.q.knowledge, mastery, path.string());
  const Matrix re = load_mastery(path.string(), ds);
  CHECK(re == mastery);
}
