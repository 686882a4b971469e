#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cogdiag/data.hpp"
#include "cogdiag/eval.hpp"
#include "cogdiag/tape.hpp"
#include "cogdiag/train.hpp"

namespace cogdiag {

struct Prediction {
  int student = 0;
  int item = 0;
  double y = 0.0;  // correct-response probability, in (0,1)
};

// Per-knowledge-concept diagnosis model: student proficiency matrix A,
// item difficulty matrix B, item discrimination D, and a three-layer
// interaction MLP whose weights are kept non-negative so the response
// probability is monotone in every examined proficiency component.
struct NeuralCDParams {
  int n_students = 0;
  int n_items = 0;
  int n_knowledge = 0;
  int h1 = 512;
  int h2 = 256;

  Parameter A;   // N x K
  Parameter B;   // M x K
  Parameter D;   // M x 1
  Parameter W1;  // h1 x K, non-negative
  Parameter b1;  // 1 x h1
  Parameter W2;  // h2 x h1, non-negative
  Parameter b2;  // 1 x h2
  Parameter W3;  // 1 x h2, non-negative
  Parameter b3;  // 1 x 1

  // Deterministic initialization: each entry is drawn from a keyed uniform
  // so a value depends only on (seed, matrix, row, col). Scale bounds avoid
  // the knowledge dimension, which keeps zero-padded datasets training
  // identically to their unpadded originals. Non-negative weights take the
  // magnitude of their draw; biases start at zero.
  static NeuralCDParams init(int n_students, int n_items, int n_knowledge, int h1, int h2,
                             std::uint64_t seed);

  std::vector<Parameter*> trainable();
};

// Eq-by-eq forward for one (student, item): h_s, h_diff, h_disc from the
// embedding rows, x = q_row .* (h_s - h_diff) * h_disc, then the MLP.
Prediction neuralcd_forward(const NeuralCDParams& p, int student, int item, const QMatrix& q);

// Forward with an explicit post-sigmoid proficiency vector substituted for
// the student's own row; used to probe monotonicity.
double neuralcd_forward_from_proficiency(const NeuralCDParams& p, std::span<const double> h_s,
                                         int item, const QMatrix& q);

// Mean per-record BCE over one mini-batch, recorded on the tape.
NodeId neuralcd_batch_loss(Tape& tape, NeuralCDParams& p, const SubjectDataset& ds,
                           std::span<const std::size_t> record_idx);

// Mini-batch training on BCE with per-step non-negativity projection;
// returns the best-validation-AUC parameters and the per-epoch history.
std::pair<NeuralCDParams, History> neuralcd_train(const SubjectDataset& train_ds,
                                                  const SubjectDataset& valid_ds,
                                                  const TrainConfig& cfg, int h1, int h2);

// The trained h_s row: sigmoid of the student's proficiency logits.
std::vector<double> neuralcd_diagnose(const NeuralCDParams& p, int student);

PredictFn neuralcd_predictor(const NeuralCDParams& p, const QMatrix& q);

}  // namespace cogdiag
