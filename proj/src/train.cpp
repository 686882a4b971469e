#include "cogdiag/train.hpp"

#include <cmath>
#include <limits>

#include "cogdiag/errors.hpp"
#include "cogdiag/rng.hpp"

namespace cogdiag {

void TrainConfig::validate() const {
  // epochs == 0 is a legal no-op (used by transfer fine-tuning)
  if (epochs < 0 || batch < 1 || patience < 1 || !(lr > 0.0)) {
    throw ConfigError("train config: epochs >= 0, batch and patience >= 1, lr > 0");
  }
}

namespace {

// NaN unless the validation set supports an AUC (non-empty, both classes).
double valid_auc_or_nan(const SubjectDataset& valid_ds, const PredictFn& predict) {
  if (valid_ds.records.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::vector<double> preds = predict_all(predict, valid_ds);
  std::vector<int> labels(valid_ds.records.size());
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = valid_ds.records[i].score >= 0.5 ? 1 : 0;
    n_pos += labels[i];
  }
  if (n_pos == 0 || n_pos == labels.size()) return std::numeric_limits<double>::quiet_NaN();
  return auc(preds, labels);
}

}  // namespace

History fit(const SubjectDataset& train_ds, const SubjectDataset& valid_ds,
            std::span<Parameter* const> params, const TrainConfig& cfg,
            const BatchLossFn& batch_loss, const PredictFn& predict) {
  cfg.validate();
  if (train_ds.records.empty()) throw DataError("fit: empty training set");

  Adam adam({cfg.lr, 0.9, 0.999, 1e-8});
  Rng shuffle_rng = Rng::derive(cfg.seed, "shuffle");

  const std::size_t n = train_ds.records.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  History hist;
  hist.best_valid_auc = std::numeric_limits<double>::quiet_NaN();
  std::vector<Matrix> best_values;
  bool tracking = false;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch) {
      const std::size_t len = std::min<std::size_t>(cfg.batch, n - start);
      Tape tape;
      const NodeId loss = batch_loss(tape, {order.data() + start, len});
      const double batch_mean = tape.scalar(loss);
      if (!std::isfinite(batch_mean)) {
        throw DivergenceError("loss became non-finite at epoch " + std::to_string(epoch));
      }
      tape.backward(loss);
      adam.step(params);
      loss_sum += batch_mean * static_cast<double>(len);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(n);
    stats.valid_auc = valid_auc_or_nan(valid_ds, predict);
    hist.epochs.push_back(stats);

    if (std::isfinite(stats.valid_auc)) {
      if (!tracking || stats.valid_auc > hist.best_valid_auc) {
        tracking = true;
        hist.best_valid_auc = stats.valid_auc;
        hist.best_epoch = epoch;
        best_values.clear();
        for (const Parameter* p : params) best_values.push_back(p->value);
      } else if (epoch - hist.best_epoch >= cfg.patience) {
        break;
      }
    } else {
      hist.best_epoch = epoch;  // no AUC to compare; keep latest
    }
  }

  if (tracking) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
  }
  return hist;
}

}  // namespace cogdiag
