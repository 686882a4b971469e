#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogdiag/data.hpp"
#include "cogdiag/eval.hpp"
#include "cogdiag/kancd.hpp"
#include "cogdiag/neuralcd.hpp"
#include "cogdiag/transfer.hpp"

namespace cogdiag {

inline constexpr int kCheckpointFormatVersion = 1;

// FNV-1a over the file bytes, "fnv1a64:<hex>".
std::string file_digest(const std::string& path);

struct NeuralCDCheckpoint {
  NeuralCDParams params;
  QMatrix q;
  std::vector<std::string> students;
  std::uint64_t seed = 0;
  nlohmann::json config;
};

struct KaNCDCheckpoint {
  KaNCDParams params;
  QMatrix q;
  std::vector<std::string> students;
  std::uint64_t seed = 0;
  nlohmann::json config;
};

void save_checkpoint(const NeuralCDCheckpoint& ck, const std::string& path);
void save_checkpoint(const KaNCDCheckpoint& ck, const std::string& path);
NeuralCDCheckpoint load_neuralcd_checkpoint(const std::string& path);
KaNCDCheckpoint load_kancd_checkpoint(const std::string& path);

void save_transfer_checkpoint(const TransferModel& m, std::uint64_t seed,
                              const nlohmann::json& config, const std::string& path);
TransferModel load_transfer_checkpoint(const std::string& path, std::uint64_t* seed_out = nullptr,
                                       nlohmann::json* config_out = nullptr);

// Reads the "model" field without committing to a kind.
std::string checkpoint_kind(const std::string& path);

// Extracts the frozen interaction layers from a base-model checkpoint.
// `expect` (when non-empty) must match the checkpoint's model kind.
SourceBackbone load_backbone(const std::string& path, const std::string& expect = "");

// Kind-erased view over any checkpoint, for evaluation and diagnosis.
struct LoadedModel {
  std::string kind;  // neuralcd | kancd | transfer-neuralcd | transfer-kancd
  std::vector<std::string> students;
  QMatrix q;  // as trained (padded for transfer models)
  std::vector<std::string> diag_knowledge;  // KC names of the diagnosis vector
  PredictFn predict;
  std::function<std::vector<double>(int)> diagnose;
  nlohmann::json config;
  std::shared_ptr<void> holder;  // owns the underlying parameters
};

LoadedModel load_any_checkpoint(const std::string& path);

// Re-indexes a loaded response file onto a model's student/item maps so
// record indices address the trained embeddings. Ids unknown to the model
// are an error.
SubjectDataset align_to_model(const SubjectDataset& ds, const LoadedModel& m);

}  // namespace cogdiag
