#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cogdiag/data.hpp"

namespace cogdiag {

// Read-only scoring function (student index, item index) -> probability.
// Implementations must be safe to call concurrently.
using PredictFn = std::function<double(int student, int item)>;

struct MetricsReport {
  std::string subject;
  std::optional<double> auc;  // absent when labels are single-class
  std::string auc_note;
  double acc = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  std::size_t n_records = 0;
};

struct ScatterRow {
  std::string item_id;
  int truth = 0;
  double pred_prob = 0.0;
  int pred_label = 0;
  bool correct = false;
};

struct ScatterExport {
  std::string student_id;
  std::vector<ScatterRow> rows;
  double accuracy = 0.0;  // (#correct)/(#rows)
};

// Mann-Whitney rank AUC; tied scores contribute 1/2. Equals exhaustive pair
// counting exactly. Throws DataError when labels are single-class.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Fraction with (score >= threshold) == label.
double acc(const std::vector<double>& scores, const std::vector<int>& labels,
           double threshold = 0.5);

// Both computed against raw probabilities, not thresholded labels.
double rmse(const std::vector<double>& scores, const std::vector<double>& truths);
double mae(const std::vector<double>& scores, const std::vector<double>& truths);

// Scores every record (parallel, read-only); record order is preserved.
std::vector<double> predict_all(const PredictFn& predict, const SubjectDataset& ds);

// All four metrics over the dataset; truth labels binarized at 0.5 for
// AUC/ACC, raw scores used for RMSE/MAE. Deterministic.
MetricsReport evaluate(const PredictFn& predict, const SubjectDataset& ds);

// Per-item truth/prediction rows for one student, written as CSV
// `item_id,truth,pred_prob,pred_label,correct` with a trailing
// `# accuracy=...` summary line. Pass an empty path to skip writing.
ScatterExport export_scatter(const PredictFn& predict, const SubjectDataset& ds,
                             const std::string& student_id, const std::string& path);

// Aligned text table of one or more reports (subject rows, metric columns).
std::string format_report_table(const std::vector<MetricsReport>& reports);

}  // namespace cogdiag
