#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cogdiag/data.hpp"
#include "cogdiag/eval.hpp"
#include "cogdiag/kancd.hpp"
#include "cogdiag/neuralcd.hpp"
#include "cogdiag/tape.hpp"
#include "cogdiag/train.hpp"

namespace cogdiag {

enum class ModelKind { kNeuralCD, kKaNCD };

ModelKind model_kind_from_string(const std::string& s);
std::string to_string(ModelKind k);

// The frozen piece carried from a pretrained source model: the interaction
// layers W1/b1, W2/b2 (the output layer W3/b3 is discarded) plus the dims
// needed to rebuild around them.
struct SourceBackbone {
  ModelKind kind = ModelKind::kNeuralCD;
  int k_common = 0;  // knowledge width the source was trained at
  int h1 = 0;
  int h2 = 0;
  int d = 0;                       // kancd only
  MFType mf_type = MFType::kGMF;   // kancd only
  Matrix W1, b1, W2, b2;
  std::string source_digest;  // digest of the source checkpoint file, if any
};

SourceBackbone make_backbone(const NeuralCDParams& source);
SourceBackbone make_backbone(const KaNCDParams& source);

struct TransferConfig {
  int g1 = 0;  // 0 -> h2/2
  int g2 = 0;  // 0 -> h2/4
  double dropout = 0.5;
  // Strict reading of the pretraining recipe: train only the new head and
  // keep the fresh target embeddings fixed at their initialization.
  bool freeze_embeddings = false;
  TrainConfig train;
};

// Frozen source interaction layers + fresh trainable target embeddings +
// a two-layer non-negative head with dropout before each head layer.
struct TransferModel {
  ModelKind kind = ModelKind::kNeuralCD;
  int n_students = 0;  // target counts
  int n_items = 0;
  int target_k = 0;  // target K before padding
  int k_common = 0;
  int h1 = 0, h2 = 0, g1 = 0, g2 = 0;
  int d = 0;
  MFType mf_type = MFType::kGMF;
  double dropout_rate = 0.5;
  bool freeze_embeddings = false;

  // frozen backbone; never handed to the optimizer
  Matrix W1, b1, W2, b2;

  // target embedding block (trainable unless freeze_embeddings)
  Parameter A, B;          // neuralcd kind
  Parameter Ls, Le, Lk;    // kancd kind
  std::vector<Parameter> comb_a, comb_b;
  Parameter D;

  // head (trainable, weights non-negative)
  Parameter W4, b4, W5, b5, W6, b6;

  // padded target Q-matrix and id maps; makes the model self-contained for
  // prediction and checkpointing
  QMatrix q;
  std::vector<std::string> students;
  std::string source_digest;

  std::vector<Parameter*> trainable();  // honors freeze_embeddings
};

// Builds the transfer model around a source backbone. The target dataset is
// padded to the source knowledge width internally; target K larger than the
// source width is an error. Fresh embeddings and head are seeded from
// cfg.train.seed.
TransferModel build_transfer(const SourceBackbone& backbone, const SubjectDataset& target,
                             const TransferConfig& cfg);

// Deterministic when training is false; with training true the two dropout
// layers draw masks from `rng`.
Prediction transfer_forward(const TransferModel& m, int student, int item, bool training,
                            Rng* rng);

double transfer_forward_from_proficiency(const TransferModel& m, std::span<const double> h_s,
                                         int item);

NodeId transfer_batch_loss(Tape& tape, TransferModel& m, const SubjectDataset& ds,
                           std::span<const std::size_t> record_idx, bool training,
                           Rng& dropout_rng);

// Fine-tunes head + target embeddings (or head only in strict mode) on the
// target records. The backbone is asserted bitwise unchanged afterwards.
History transfer_fine_tune(TransferModel& m, const SubjectDataset& train_ds,
                           const SubjectDataset& valid_ds, const TrainConfig& cfg);

// Target proficiency vector with padded components stripped.
std::vector<double> transfer_diagnose(const TransferModel& m, int student);

PredictFn transfer_predictor(const TransferModel& m);

// Order-sensitive digest of the frozen backbone bytes.
std::uint64_t backbone_digest(const TransferModel& m);

}  // namespace cogdiag
