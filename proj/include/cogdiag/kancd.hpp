#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cogdiag/data.hpp"
#include "cogdiag/eval.hpp"
#include "cogdiag/neuralcd.hpp"
#include "cogdiag/tape.hpp"
#include "cogdiag/train.hpp"

namespace cogdiag {

// How a proficiency/difficulty entry is combined from the elementwise
// product of two latent vectors: plain sum, learned linear map (generalized
// inner product), or a small MLP with one or two hidden layers.
enum class MFType { kMF, kGMF, kNCF1, kNCF2 };

MFType mf_type_from_string(const std::string& s);
std::string to_string(MFType t);

// Latent-factor variant: students, items, and knowledge concepts share a
// d-dimensional latent space (d < K); the proficiency and difficulty
// matrices are assembled from latent interactions and feed the same
// monotone interaction MLP as NeuralCD.
struct KaNCDParams {
  int n_students = 0;
  int n_items = 0;
  int n_knowledge = 0;
  int d = 20;
  int h1 = 512;
  int h2 = 256;
  MFType mf_type = MFType::kGMF;

  Parameter Ls;  // N x d student latents
  Parameter Le;  // M x d item latents
  Parameter Lk;  // K x d knowledge latents
  // combiner weights; empty for mf, (W, b) for gmf, MLP weights for ncf1/2
  std::vector<Parameter> comb_a;
  std::vector<Parameter> comb_b;
  Parameter D;   // M x 1
  Parameter W1;  // h1 x K, non-negative
  Parameter b1;
  Parameter W2;  // h2 x h1, non-negative
  Parameter b2;
  Parameter W3;  // 1 x h2, non-negative
  Parameter b3;

  static KaNCDParams init(int n_students, int n_items, int n_knowledge, int d, int h1, int h2,
                          MFType mf_type, std::uint64_t seed);

  std::vector<Parameter*> trainable();
};

// Fresh combiner parameter block for one side ("a" proficiency /
// "b" difficulty); empty for mf.
std::vector<Parameter> make_latent_combiner(MFType t, int d, const std::string& side,
                                            std::uint64_t seed);

// Raw combiner output for one elementwise latent product.
double latent_combine(const std::vector<Parameter>& comb, MFType t, std::span<const double> z);

// Raw (pre-sigmoid) proficiency entry A[student][kc] and difficulty entry
// B[item][kc].
double kancd_proficiency_entry(const KaNCDParams& p, int student, int kc);
double kancd_difficulty_entry(const KaNCDParams& p, int item, int kc);

Prediction kancd_forward(const KaNCDParams& p, int student, int item, const QMatrix& q);

double kancd_forward_from_proficiency(const KaNCDParams& p, std::span<const double> h_s, int item,
                                      const QMatrix& q);

// Tape assembly of the raw entry matrix for a batch of entity latent rows
// against every knowledge latent: returns a (batch x K) node. Shared with
// the transfer pipeline.
NodeId latent_combine_batch(Tape& tape, std::vector<Parameter>& comb, MFType mf_type,
                            NodeId entity_rows, NodeId lk, int batch, int k);

NodeId kancd_batch_loss(Tape& tape, KaNCDParams& p, const SubjectDataset& ds,
                        std::span<const std::size_t> record_idx);

std::pair<KaNCDParams, History> kancd_train(const SubjectDataset& train_ds,
                                            const SubjectDataset& valid_ds, const TrainConfig& cfg,
                                            MFType mf_type, int d, int h1, int h2);

// sigmoid of the assembled proficiency row for one student.
std::vector<double> kancd_diagnose(const KaNCDParams& p, int student);

PredictFn kancd_predictor(const KaNCDParams& p, const QMatrix& q);

}  // namespace cogdiag
