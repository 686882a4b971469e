#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cogdiag/data.hpp"
#include "cogdiag/errors.hpp"
#include "cogdiag/eval.hpp"
#include "cogdiag/rng.hpp"

using namespace cogdiag;

namespace {

// exhaustive pair counting: ties contribute one half
double pair_count_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0;
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 0) {
      ++n_pos;
      for (std::size_t j = 0; j < scores.size(); ++j) {
        if (labels[j] == 0) {
          if (scores[i] > scores[j]) {
            wins += 1.0;
          } else if (scores[i] == scores[j]) {
            wins += 0.5;
          }
        }
      }
    } else {
      ++n_neg;
    }
  }
  return wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SubjectDataset one_student_dataset(const std::vector<int>& truths) {
  SubjectDataset ds;
  ds.subject = "case";
  ds.students = {"s1"};
  ds.student_index["s1"] = 0;
  ds.q.knowledge = {"k1"};
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const std::string item = "i" + std::to_string(i + 1);
    ds.q.items.push_back(item);
    ds.item_index[item] = static_cast<int>(i);
    ResponseRecord r;
    r.student_id = "s1";
    r.item_id = item;
    r.score = truths[i];
    r.knowledge_codes = {"k1"};
    ds.records.push_back(std::move(r));
  }
  ds.q.cells = Matrix(static_cast<int>(truths.size()), 1, 1.0);
  return ds;
}

}  // namespace

TEST_CASE("auc trivial cases") {
  CHECK(auc({0.9, 0.1}, {1, 0}) == 1.0);
  CHECK(auc({0.5, 0.5}, {1, 0}) == 0.5);
  CHECK(auc({0.1, 0.9}, {1, 0}) == 0.0);
}

TEST_CASE("auc rejects single-class labels") {
  CHECK_THROWS_AS(auc({0.1, 0.9}, {1, 1}), DataError);
  CHECK_THROWS_AS(auc({0.1, 0.9}, {0, 0}), DataError);
  CHECK_THROWS_AS(auc({}, {}), DimensionError);
}

TEST_CASE("auc equals exhaustive pair counting exactly") {
  Rng rng(2718);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(999));
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    int n_pos = 0;
    for (int i = 0; i < n; ++i) {
      // quantized scores force plenty of ties
      scores[i] = std::floor(rng.uniform01() * 8.0) / 8.0;
      labels[i] = rng.bernoulli(0.4) ? 1 : 0;
      n_pos += labels[i];
    }
    if (n_pos == 0) labels[0] = 1;
    if (n_pos == n) labels[0] = 0;
    CHECK(auc(scores, labels) == pair_count_auc(scores, labels));
  }
}

TEST_CASE("auc is invariant under strictly increasing transforms") {
  Rng rng(314);
  std::vector<double> scores(200);
  std::vector<int> labels(200);
  for (int i = 0; i < 200; ++i) {
    scores[i] = rng.uniform01();
    labels[i] = rng.bernoulli(0.5) ? 1 : 0;
  }
  labels[0] = 1;
  labels[1] = 0;
  const double base = auc(scores, labels);
  std::vector<double> warped(200);
  for (int i = 0; i < 200; ++i) warped[i] = std::exp(3.0 * scores[i]) - 0.5;
  CHECK(auc(warped, labels) == base);
  for (int i = 0; i < 200; ++i) warped[i] = std::atan(10.0 * scores[i] - 5.0);
  CHECK(auc(warped, labels) == base);
}

TEST_CASE("accuracy threshold rule is >= one half") {
  CHECK(acc({0.9, 0.1}, {1, 0}) == 1.0);
  CHECK(acc({0.5}, {1}) == 1.0);  // exactly 0.5 predicts label 1
  CHECK(acc({0.5}, {0}) == 0.0);
  // a 16-item student with 14 correct
  std::vector<double> scores(16, 0.9);
  std::vector<int> labels(16, 1);
  labels[3] = 0;
  labels[7] = 0;
  CHECK(acc(scores, labels) == doctest::Approx(0.875));
}

TEST_CASE("rmse and mae basics") {
  CHECK(rmse({0.3, 0.7}, {0.3, 0.7}) == 0.0);
  CHECK(mae({0.3, 0.7}, {0.3, 0.7}) == 0.0);
  CHECK(rmse({0.5}, {1.0}) == doctest::Approx(0.5));
  CHECK(mae({0.5}, {1.0}) == doctest::Approx(0.5));
}

TEST_CASE("mae never exceeds rmse") {
  Rng rng(999);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(100));
    std::vector<double> scores(n), truths(n);
    for (int i = 0; i < n; ++i) {
      scores[i] = rng.uniform01();
      truths[i] = rng.uniform01();
    }
    CHECK(mae(scores, truths) <= rmse(scores, truths) + 1e-15);
  }
}

TEST_CASE("evaluate a perfect oracle model on noiseless data") {
  SynthSpec spec;
  spec.n_students = 30;
  spec.n_items = 8;
  spec.n_knowledge = 4;
  spec.slip = 0.0;
  spec.guess = 0.0;
  spec.seed = 33;
  const auto [ds, mastery] = synth_generate(spec);
  // predictor that echoes the recorded truth
  std::vector<std::vector<double>> table(ds.n_students(),
                                         std::vector<double>(ds.n_items(), 0.0));
  for (const auto& r : ds.records) {
    table[ds.student_index.at(r.student_id)][ds.item_index.at(r.item_id)] = r.score;
  }
  const PredictFn oracle = [&](int s, int e) { return table[s][e]; };
  const MetricsReport rep = evaluate(oracle, ds);
  REQUIRE(rep.auc.has_value());
  CHECK(*rep.auc == 1.0);
  CHECK(rep.acc == 1.0);
  CHECK(rep.rmse == 0.0);
  CHECK(rep.mae == 0.0);
  CHECK(rep.n_records == ds.records.size());
}

TEST_CASE("evaluate a constant-half model") {
  SynthSpec spec;
  spec.n_students = 40;
  spec.n_items = 6;
  spec.n_knowledge = 3;
  spec.slip = 0.1;
  spec.guess = 0.1;
  spec.seed = 34;
  const auto [ds, mastery] = synth_generate(spec);
  std::size_t ones = 0;
  for (const auto& r : ds.records) ones += r.score >= 0.5;
  const double base_rate = static_cast<double>(ones) / ds.records.size();

  const MetricsReport rep = evaluate([](int, int) { return 0.5; }, ds);
  CHECK(rep.acc == doctest::Approx(base_rate));  // >= 0.5 predicts 1 everywhere
  REQUIRE(rep.auc.has_value());
  CHECK(*rep.auc == 0.5);  // all scores tied

  const MetricsReport again = evaluate([](int, int) { return 0.5; }, ds);
  CHECK(rep.acc == again.acc);
  CHECK(rep.rmse == again.rmse);
  CHECK(*rep.auc == *again.auc);
}

TEST_CASE("evaluate omits auc with a note on single-class data") {
  const SubjectDataset ds = one_student_dataset({1, 1, 1, 1});
  const MetricsReport rep = evaluate([](int, int) { return 0.8; }, ds);
  CHECK_FALSE(rep.auc.has_value());
  CHECK(rep.auc_note.find("single-class") != std::string::npos);
  CHECK(rep.acc == 1.0);
}

TEST_CASE("scatter export reports 0.875 for a 16-item student with 14 correct") {
  std::vector<int> truths(16, 1);
  for (int i = 10; i < 16; ++i) truths[i] = 0;
  const SubjectDataset ds = one_student_dataset(truths);

  // wrong on exactly items 0 and 15
  const PredictFn predict = [&](int, int e) {
    const int correct_label = truths[e];
    if (e == 0 || e == 15) return correct_label == 1 ? 0.2 : 0.8;
    return correct_label == 1 ? 0.9 : 0.1;
  };
  const auto path = std::filesystem::temp_directory_path() / "scatter_case.csv";
  const ScatterExport ex = export_scatter(predict, ds, "s1", path.string());
  CHECK(ex.rows.size() == 16);
  CHECK(ex.accuracy == doctest::Approx(0.875));

  const std::string text = read_file(path.string());
  CHECK(text.find("item_id,truth,pred_prob,pred_label,correct") == 0);
  CHECK(text.find("# accuracy=0.875") != std::string::npos);

  // all-correct predictor reports accuracy 1.0
  const PredictFn perfect = [&](int, int e) { return truths[e] == 1 ? 0.95 : 0.05; };
  const ScatterExport full = export_scatter(perfect, ds, "s1", "");
  CHECK(full.accuracy == 1.0);
}

TEST_CASE("scatter re-export is byte-identical and unknown students fail") {
  const SubjectDataset ds = one_student_dataset({1, 0, 1});
  const PredictFn predict = [](int, int e) { return 0.3 + 0.2 * e; };
  const auto dir = std::filesystem::temp_directory_path();
  const std::string p1 = (dir / "scatter_a.csv").string();
  const std::string p2 = (dir / "scatter_b.csv").string();
  export_scatter(predict, ds, "s1", p1);
  export_scatter(predict, ds, "s1", p2);
  CHECK(read_file(p1) == read_file(p2));
  CHECK_THROWS_AS(export_scatter(predict, ds, "nobody", ""), DataError);
}

TEST_CASE("report table formats one row per subject") {
  MetricsReport a;
  a.subject = "alpha";
  a.auc = 0.75;
  a.acc = 0.7;
  a.rmse = 0.4;
  a.mae = 0.3;
  a.n_records = 100;
  MetricsReport b;
  b.subject = "beta";
  b.acc = 0.6;
  b.rmse = 0.5;
  b.mae = 0.42;
  b.n_records = 50;
  const std::string table = format_report_table({a, b});
  CHECK(table.find("alpha") != std::string::npos);
  CHECK(table.find("beta") != std::string::npos);
  CHECK(table.find("0.750000") != std::string::npos);
  CHECK(table.find("n/a") != std::string::npos);
}
