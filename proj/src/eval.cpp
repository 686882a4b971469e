#include "cogdiag/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cogdiag/errors.hpp"
#include "cogdiag/jsonio.hpp"

namespace cogdiag {

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw DimensionError("auc: scores and labels must be non-empty and equal length");
  }
  std::size_t n_pos = 0;
  for (int l : labels) n_pos += l != 0;
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw DataError("auc undefined: single-class labels");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // average ranks over runs of tied scores; rank sums are exact in double
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] != 0) rank_sum_pos += avg_rank;
    }
    i = j + 1;
  }
  const double u = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double acc(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw DimensionError("acc: scores and labels must be non-empty and equal length");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int pred = scores[i] >= threshold ? 1 : 0;
    hits += pred == (labels[i] != 0 ? 1 : 0);
  }
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

double rmse(const std::vector<double>& scores, const std::vector<double>& truths) {
  if (scores.size() != truths.size() || scores.empty()) {
    throw DimensionError("rmse: scores and truths must be non-empty and equal length");
  }
  double acc_sq = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double d = scores[i] - truths[i];
    acc_sq += d * d;
  }
  return std::sqrt(acc_sq / static_cast<double>(scores.size()));
}

double mae(const std::vector<double>& scores, const std::vector<double>& truths) {
  if (scores.size() != truths.size() || scores.empty()) {
    throw DimensionError("mae: scores and truths must be non-empty and equal length");
  }
  double acc_abs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) acc_abs += std::fabs(scores[i] - truths[i]);
  return acc_abs / static_cast<double>(scores.size());
}

std::vector<double> predict_all(const PredictFn& predict, const SubjectDataset& ds) {
  std::vector<double> out(ds.records.size());
  const int n = static_cast<int>(ds.records.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const auto& r = ds.records[i];
    out[i] = predict(ds.student_index.at(r.student_id), ds.item_index.at(r.item_id));
  }
  return out;
}

MetricsReport evaluate(const PredictFn& predict, const SubjectDataset& ds) {
  if (ds.records.empty()) throw DataError("evaluate: empty dataset");
  const std::vector<double> preds = predict_all(predict, ds);
  std::vector<double> truths(ds.records.size());
  std::vector<int> labels(ds.records.size());
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    truths[i] = ds.records[i].score;
    labels[i] = ds.records[i].score >= 0.5 ? 1 : 0;
  }
  MetricsReport rep;
  rep.subject = ds.subject;
  rep.n_records = ds.records.size();
  rep.acc = acc(preds, labels);
  rep.rmse = rmse(preds, truths);
  rep.mae = mae(preds, truths);
  try {
    rep.auc = auc(preds, labels);
  } catch (const DataError& e) {
    rep.auc = std::nullopt;
    rep.auc_note = e.what();
  }
  return rep;
}

ScatterExport export_scatter(const PredictFn& predict, const SubjectDataset& ds,
                             const std::string& student_id, const std::string& path) {
  auto it = ds.student_index.find(student_id);
  if (it == ds.student_index.end()) {
    throw DataError("unknown student id '" + student_id + "'");
  }
  const int s = it->second;

  ScatterExport ex;
  ex.student_id = student_id;
  std::size_t hits = 0;
  for (const auto& r : ds.records) {
    if (r.student_id != student_id) continue;
    ScatterRow row;
    row.item_id = r.item_id;
    row.truth = r.score >= 0.5 ? 1 : 0;
    row.pred_prob = predict(s, ds.item_index.at(r.item_id));
    row.pred_label = row.pred_prob >= 0.5 ? 1 : 0;
    row.correct = row.pred_label == row.truth;
    hits += row.correct;
    ex.rows.push_back(std::move(row));
  }
  if (ex.rows.empty()) throw DataError("student '" + student_id + "' has no records");
  ex.accuracy = static_cast<double>(hits) / static_cast<double>(ex.rows.size());

  if (!path.empty()) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << "item_id,truth,pred_prob,pred_label,correct\n";
    for (const auto& row : ex.rows) {
      out << row.item_id << ',' << row.truth << ',' << fmt_double(row.pred_prob) << ','
          << row.pred_label << ',' << (row.correct ? 1 : 0) << '\n';
    }
    out << "# accuracy=" << fmt_double(ex.accuracy) << '\n';
  }
  return ex;
}

std::string format_report_table(const std::vector<MetricsReport>& reports) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-12s %10s %10s %10s %10s %10s\n", "subject", "AUC", "ACC",
                "RMSE", "MAE", "records");
  os << line;
  for (const auto& r : reports) {
    char auc_s[32];
    if (r.auc) {
      std::snprintf(auc_s, sizeof(auc_s), "%.6f", *r.auc);
    } else {
      std::snprintf(auc_s, sizeof(auc_s), "n/a");
    }
    std::snprintf(line, sizeof(line), "%-12s %10s %10.6f %10.6f %10.6f %10zu\n",
                  r.subject.c_str(), auc_s, r.acc, r.rmse, r.mae, r.n_records);
    os << line;
  }
  return os.str();
}

}  // namespace cogdiag
