#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "cogdiag/matrix.hpp"

namespace cogdiag {

// One (student, item, score, knowledge codes) interaction.
struct ResponseRecord {
  std::string student_id;
  std::string item_id;
  double score = 0.0;  // in [0,1]; used directly as the BCE target
  std::vector<std::string> knowledge_codes;  // non-empty, sorted, unique
};

// Binary item x knowledge-concept incidence. Every row has at least one 1.
struct QMatrix {
  std::vector<std::string> items;      // M ordered item ids
  std::vector<std::string> knowledge;  // K ordered KC ids
  Matrix cells;                        // M x K, entries 0/1

  int n_items() const { return static_cast<int>(items.size()); }
  int n_knowledge() const { return static_cast<int>(knowledge.size()); }
};

struct SubjectDataset {
  std::string subject;
  std::vector<ResponseRecord> records;
  QMatrix q;
  std::unordered_map<std::string, int> student_index;  // id -> 0..N-1
  std::unordered_map<std::string, int> item_index;     // id -> 0..M-1
  std::vector<std::string> students;                   // index -> id

  int n_students() const { return static_cast<int>(students.size()); }
  int n_items() const { return q.n_items(); }
  int n_knowledge() const { return q.n_knowledge(); }
};

struct SplitSpec {
  double train = 0.7;
  double valid = 0.1;
  double test = 0.2;
  std::uint64_t seed = 0;
  bool stratify_by_student = true;
};

struct SynthSpec {
  int n_students = 500;
  int n_items = 20;
  int n_knowledge = 8;
  double slip = 0.1;          // in [0, 0.5)
  double guess = 0.1;         // in [0, 0.5)
  double mastery_rate = 0.5;  // P(student masters a KC)
  double avg_kcs_per_item = 2.0;
  std::uint64_t seed = 0;
};

enum class ResponseFormat { kCsv, kJsonl };

// Reads a response log and induces the Q-matrix from the union of knowledge
// codes per item. Students and items are indexed in first-appearance order;
// the knowledge vocabulary is sorted. Scores outside [0,1] and rows with no
// knowledge code are rejected with their line number.
SubjectDataset load_responses(const std::string& path, ResponseFormat format,
                              const std::string& subject = "");

// Canonical CSV interchange: header `user_id,item_id,score,knowledge_code`,
// multiple codes `;`-separated. load(save(ds)) reproduces ds exactly.
void save_responses(const SubjectDataset& ds, const std::string& path);

// Q-matrix export: item_id row labels, KC column labels, 0/1 cells.
void save_qmatrix(const QMatrix& q, const std::string& path);

// Ground-truth mastery export/import (synthetic data): user_id column then
// one 0/1 column per KC.
void save_mastery(const std::vector<std::string>& students, const std::vector<std::string>& kcs,
                  const Matrix& mastery, const std::string& path);
Matrix load_mastery(const std::string& path, const SubjectDataset& ds);

// Disjoint, exhaustive partition of the records, deterministic under the
// seed. When stratified, every student with >= 3 records contributes at
// least one record to train, and students with < 3 records go entirely to
// train. Split sizes track the fractions to within one record.
std::tuple<SubjectDataset, SubjectDataset, SubjectDataset> split(const SubjectDataset& ds,
                                                                 const SplitSpec& spec);

// Zero-pads the knowledge dimension on the right to k_common. Padded KCs are
// named "__pad<i>", never appear in any record, and stay all-zero in Q.
SubjectDataset pad_knowledge(const SubjectDataset& ds, int k_common);

// DINA-style generator: each student masters each KC with probability
// mastery_rate; P(correct) is 1-slip when the student masters every KC the
// item examines and guess otherwise. Produces the full N x M response
// matrix with 0/1 scores, plus the ground-truth mastery matrix. Every KC is
// examined by at least one item.
std::pair<SubjectDataset, Matrix> synth_generate(const SynthSpec& spec,
                                                 const std::string& subject = "synthetic");

struct SubjectShape {
  std::string name;
  int students;
  int items;
  int knowledge;
};

// The eight published dataset shapes (students, items, KCs per subject);
// full-matrix generation at these shapes reproduces the published record
// volumes exactly.
const std::vector<SubjectShape>& published_subjects();

// Largest knowledge count across published_subjects(); the default shared
// knowledge dimension for cross-subject work.
int default_k_common();

}  // namespace cogdiag
