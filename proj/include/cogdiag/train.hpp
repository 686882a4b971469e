#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cogdiag/data.hpp"
#include "cogdiag/eval.hpp"
#include "cogdiag/optimizer.hpp"
#include "cogdiag/tape.hpp"

namespace cogdiag {

struct TrainConfig {
  int epochs = 30;
  int batch = 256;
  double lr = 2e-3;
  std::uint64_t seed = 0;
  int patience = 10;  // early stop after this many epochs without a new best valid AUC

  void validate() const;
};

struct EpochStats {
  int epoch = 0;           // 1-based
  double train_loss = 0.0; // mean per-record BCE over the epoch
  double valid_auc = 0.0;  // NaN when no validation AUC is available
};

struct History {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;          // epoch whose parameters were returned
  double best_valid_auc = 0.0; // NaN when no validation AUC was tracked
};

// Builds the mean per-record loss node for one mini-batch of record indices
// into `train_ds.records`. Called once per batch, in order, on one thread.
using BatchLossFn = std::function<NodeId(Tape&, std::span<const std::size_t>)>;

// Shared mini-batch descent loop: shuffles per epoch, steps Adam per batch
// (non-negativity projection included), tracks validation AUC, and restores
// the best-validation parameters at the end. With no usable validation AUC
// the final parameters are kept and no early stopping happens. Throws
// DivergenceError when a batch loss is non-finite.
History fit(const SubjectDataset& train_ds, const SubjectDataset& valid_ds,
            std::span<Parameter* const> params, const TrainConfig& cfg,
            const BatchLossFn& batch_loss, const PredictFn& predict);

}  // namespace cogdiag
