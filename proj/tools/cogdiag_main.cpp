#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <unordered_map>

#include <CLI11.hpp>
#include <json.hpp>

#include "cogdiag/checkpoint.hpp"
#include "cogdiag/data.hpp"
#include "cogdiag/errors.hpp"
#include "cogdiag/eval.hpp"
#include "cogdiag/jsonio.hpp"
#include "cogdiag/kancd.hpp"
#include "cogdiag/neuralcd.hpp"
#include "cogdiag/train.hpp"
#include "cogdiag/transfer.hpp"

namespace {

using cogdiag::ResponseFormat;
using cogdiag::SubjectDataset;
using nlohmann::json;

// JSON config files: a flat object whose keys are the command's long option
// names. Values act as defaults; anything given on the command line wins.
void apply_json_config(CLI::App* cmd, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw cogdiag::ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw cogdiag::ConfigError("config '" + path + "': " + e.what());
  }
  if (!j.is_object()) {
    throw cogdiag::ConfigError("config '" + path + "' must be a JSON object");
  }
  for (auto it = j.cbegin(); it != j.cend(); ++it) {
    CLI::Option* opt = nullptr;
    try {
      opt = cmd->get_option("--" + it.key());
    } catch (const CLI::OptionNotFound&) {
      throw cogdiag::ConfigError("config '" + path + "': unknown option '" + it.key() + "'");
    }
    if (opt->count() > 0) continue;  // command line wins
    const json& v = *it;
    const auto as_string = [](const json& e) {
      return e.is_string() ? e.get<std::string>() : e.dump();
    };
    if (v.is_array()) {
      for (const auto& e : v) opt->add_result(as_string(e));
    } else {
      opt->add_result(as_string(v));
    }
    opt->run_callback();
  }
}

// Relative input paths also resolve against $COGDIAG_DATA_DIR.
std::string resolve_input(const std::string& path) {
  namespace fs = std::filesystem;
  if (fs::exists(path)) return path;
  if (const char* dir = std::getenv("COGDIAG_DATA_DIR"); dir && !fs::path(path).is_absolute()) {
    const fs::path joined = fs::path(dir) / path;
    if (fs::exists(joined)) return joined.string();
  }
  return path;
}

ResponseFormat format_for(const std::string& path, const std::string& flag) {
  if (flag == "csv") return ResponseFormat::kCsv;
  if (flag == "jsonl") return ResponseFormat::kJsonl;
  return path.ends_with(".jsonl") ? ResponseFormat::kJsonl : ResponseFormat::kCsv;
}

std::string subject_for(const std::string& flag, const std::string& path) {
  if (!flag.empty()) return flag;
  return std::filesystem::path(path).stem().string();
}

json history_to_json(const cogdiag::History& h) {
  json epochs = json::array();
  for (const auto& e : h.epochs) {
    json je = {{"epoch", e.epoch}, {"train_loss", e.train_loss}};
    je["valid_auc"] = std::isfinite(e.valid_auc) ? json(e.valid_auc) : json(nullptr);
    epochs.push_back(std::move(je));
  }
  json j = {{"epochs", std::move(epochs)}, {"best_epoch", h.best_epoch}};
  j["best_valid_auc"] =
      std::isfinite(h.best_valid_auc) ? json(h.best_valid_auc) : json(nullptr);
  return j;
}

json report_to_json(const cogdiag::MetricsReport& r) {
  json j = {{"subject", r.subject}, {"acc", r.acc},       {"rmse", r.rmse},
            {"mae", r.mae},         {"n_records", r.n_records}};
  j["auc"] = r.auc ? json(*r.auc) : json(nullptr);
  if (!r.auc_note.empty()) j["auc_note"] = r.auc_note;
  return j;
}

struct SplitFlags {
  double train_frac = 0.7;
  double valid_frac = 0.1;
  double test_frac = 0.2;
  bool no_stratify = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--train-frac", train_frac, "Training fraction");
    cmd->add_option("--valid-frac", valid_frac, "Validation fraction");
    cmd->add_option("--test-frac", test_frac, "Held-out test fraction");
    cmd->add_flag("--no-stratify", no_stratify, "Disable per-student stratification");
  }

  cogdiag::SplitSpec spec(std::uint64_t seed) const {
    return {train_frac, valid_frac, test_frac, seed, !no_stratify};
  }

  json to_json() const {
    return {{"train_frac", train_frac},
            {"valid_frac", valid_frac},
            {"test_frac", test_frac},
            {"stratify", !no_stratify}};
  }
};

struct TrainFlags {
  int epochs = 30;
  int batch = 256;
  double lr = 2e-3;
  std::uint64_t seed = 0;
  int patience = 10;

  void attach(CLI::App* cmd) {
    cmd->add_option("--epochs", epochs, "Training epochs");
    cmd->add_option("--batch", batch, "Mini-batch size");
    cmd->add_option("--lr", lr, "Learning rate");
    cmd->add_option("--seed", seed, "Seed for all randomness of this command");
    cmd->add_option("--patience", patience, "Early-stop patience on validation AUC");
  }

  cogdiag::TrainConfig config() const { return {epochs, batch, lr, seed, patience}; }

  json to_json() const {
    return {{"epochs", epochs}, {"batch", batch}, {"lr", lr}, {"seed", seed},
            {"patience", patience}};
  }
};

int run_cli(int argc, char** argv) {
  CLI::App app{"Cognitive diagnosis models with cross-subject transfer"};
  app.require_subcommand(1);

  std::unordered_map<CLI::App*, std::string> config_paths;
  auto add_config = [&config_paths](CLI::App* cmd) {
    cmd->add_option("--config", config_paths[cmd],
                    "JSON config file; flags override its values");
  };

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with known mastery");
  add_config(synth);
  std::string synth_out, synth_subject = "synthetic", synth_preset;
  cogdiag::SynthSpec synth_spec;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--n", synth_spec.n_students, "Students");
  synth->add_option("--m", synth_spec.n_items, "Items");
  synth->add_option("--k", synth_spec.n_knowledge, "Knowledge concepts");
  synth->add_option("--slip", synth_spec.slip, "Slip probability");
  synth->add_option("--guess", synth_spec.guess, "Guess probability");
  synth->add_option("--mastery-rate", synth_spec.mastery_rate, "Per-KC mastery probability");
  synth->add_option("--avg-kcs", synth_spec.avg_kcs_per_item, "Average KCs per item");
  synth->add_option("--seed", synth_spec.seed, "Seed");
  synth->add_option("--subject", synth_subject, "Subject label");
  synth->add_option("--preset", synth_preset,
                    "Use a published subject shape (math, physics, chemistry, biology, english, "
                    "history, politics, geography)");

  // ---- train ----
  auto* train = app.add_subcommand("train", "Train a base model");
  add_config(train);
  std::string train_model, train_data, train_format = "auto", train_out, train_history,
              train_subject;
  int train_h1 = 512, train_h2 = 256, train_d = 20, train_k_common = 0;
  std::string train_mf = "gmf";
  TrainFlags train_flags;
  SplitFlags train_split;
  train->add_option("model", train_model, "neuralcd or kancd")
      ->required()
      ->check(CLI::IsMember({"neuralcd", "kancd"}));
  train->add_option("--data", train_data, "Response log (CSV or JSONL)")->required();
  train->add_option("--format", train_format, "csv, jsonl, or auto")
      ->check(CLI::IsMember({"csv", "jsonl", "auto"}));
  train->add_option("--out", train_out, "Checkpoint path")->required();
  train->add_option("--history", train_history, "Training history JSON path");
  train->add_option("--subject", train_subject, "Subject label (default: data file stem)");
  train->add_option("--h1", train_h1, "First hidden width");
  train->add_option("--h2", train_h2, "Second hidden width");
  CLI::Option* train_d_opt =
      train->add_option("--d", train_d, "Latent dimension (kancd); default adapts to min(K-1, 20)");
  train->add_option("--mf-type", train_mf, "Combiner: mf, gmf, ncf1, ncf2 (kancd)")
      ->check(CLI::IsMember({"mf", "gmf", "ncf1", "ncf2"}));
  train->add_option("--k-common", train_k_common,
                    "Pad the knowledge dimension to this width before training (0 = no padding)");
  train_flags.attach(train);
  train_split.attach(train);

  // ---- transfer ----
  auto* transfer = app.add_subcommand("transfer",
                                      "Fine-tune a pretrained model on a target subject");
  add_config(transfer);
  std::string tr_source, tr_data, tr_format = "auto", tr_out, tr_history, tr_subject, tr_model;
  int tr_g1 = 0, tr_g2 = 0;
  double tr_dropout = 0.5;
  bool tr_freeze_embeddings = false;
  TrainFlags tr_flags;
  SplitFlags tr_split;
  transfer->add_option("--source", tr_source, "Pretrained source checkpoint")->required();
  transfer->add_option("--data", tr_data, "Target subject response log")->required();
  transfer->add_option("--format", tr_format, "csv, jsonl, or auto")
      ->check(CLI::IsMember({"csv", "jsonl", "auto"}));
  transfer->add_option("--out", tr_out, "Transfer checkpoint path")->required();
  transfer->add_option("--history", tr_history, "Fine-tune history JSON path");
  transfer->add_option("--subject", tr_subject, "Target subject label");
  transfer->add_option("--model", tr_model, "Expected source kind (neuralcd or kancd)")
      ->check(CLI::IsMember({"neuralcd", "kancd"}));
  transfer->add_option("--g1", tr_g1, "First head width (0 = h2/2)");
  transfer->add_option("--g2", tr_g2, "Second head width (0 = h2/4)");
  transfer->add_option("--dropout", tr_dropout, "Head dropout rate");
  transfer->add_flag("--freeze-embeddings", tr_freeze_embeddings,
                     "Strict mode: train only the new head, keep target embeddings at init");
  tr_flags.attach(transfer);
  tr_split.attach(transfer);

  // ---- eval ----
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  add_config(eval);
  std::string ev_model, ev_data, ev_format = "auto", ev_out, ev_split_sel = "all", ev_subject;
  std::uint64_t ev_seed = 0;
  SplitFlags ev_split;
  eval->add_option("--model", ev_model, "Checkpoint path")->required();
  eval->add_option("--data", ev_data, "Response log")->required();
  eval->add_option("--format", ev_format, "csv, jsonl, or auto")
      ->check(CLI::IsMember({"csv", "jsonl", "auto"}));
  eval->add_option("--out", ev_out, "Report JSON path");
  eval->add_option("--subject", ev_subject, "Subject label");
  eval->add_option("--split", ev_split_sel, "Evaluate on all records or one split")
      ->check(CLI::IsMember({"all", "train", "valid", "test"}));
  eval->add_option("--seed", ev_seed, "Split seed (with --split)");
  ev_split.attach(eval);

  // ---- diagnose ----
  auto* diagnose = app.add_subcommand("diagnose", "Per-KC proficiency for one student");
  add_config(diagnose);
  std::string dg_model, dg_student, dg_out;
  diagnose->add_option("--model", dg_model, "Checkpoint path")->required();
  diagnose->add_option("--student", dg_student, "Student id")->required();
  diagnose->add_option("--out", dg_out, "Output JSON path (default: stdout only)");

  // ---- scatter ----
  auto* scatter = app.add_subcommand("scatter", "Per-item truth/prediction export for a student");
  add_config(scatter);
  std::string sc_model, sc_data, sc_format = "auto", sc_student, sc_out;
  scatter->add_option("--model", sc_model, "Checkpoint path")->required();
  scatter->add_option("--data", sc_data, "Response log")->required();
  scatter->add_option("--format", sc_format, "csv, jsonl, or auto")
      ->check(CLI::IsMember({"csv", "jsonl", "auto"}));
  scatter->add_option("--student", sc_student, "Student id")->required();
  scatter->add_option("--out", sc_out, "Scatter CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cogdiag::kExitUsage;
  }

  for (auto& [cmd, path] : config_paths) {
    if (cmd->parsed() && !path.empty()) apply_json_config(cmd, path);
  }

  if (synth->parsed()) {
    if (!synth_preset.empty()) {
      bool found = false;
      for (const auto& s : cogdiag::published_subjects()) {
        if (s.name == synth_preset) {
          synth_spec.n_students = s.students;
          synth_spec.n_items = s.items;
          synth_spec.n_knowledge = s.knowledge;
          synth_subject = s.name;
          found = true;
        }
      }
      if (!found) throw cogdiag::ConfigError("unknown preset '" + synth_preset + "'");
    }
    auto [ds, mastery] = cogdiag::synth_generate(synth_spec, synth_subject);
    std::filesystem::create_directories(synth_out);
    const auto dir = std::filesystem::path(synth_out);
    cogdiag::save_responses(ds, (dir / "responses.csv").string());
    cogdiag::save_qmatrix(ds.q, (dir / "qmatrix.csv").string());
    cogdiag::save_mastery(ds.students, ds.q.knowledge, mastery, (dir / "mastery.csv").string());
    const json meta = {{"command", "synth"},
                       {"subject", ds.subject},
                       {"n", synth_spec.n_students},
                       {"m", synth_spec.n_items},
                       {"k", synth_spec.n_knowledge},
                       {"slip", synth_spec.slip},
                       {"guess", synth_spec.guess},
                       {"mastery_rate", synth_spec.mastery_rate},
                       {"avg_kcs", synth_spec.avg_kcs_per_item},
                       {"seed", synth_spec.seed},
                       {"records", ds.records.size()}};
    cogdiag::write_json_file(meta, (dir / "meta.json").string());
    std::printf("wrote %zu records (%d students x %d items, K=%d) to %s\n", ds.records.size(),
                ds.n_students(), ds.n_items(), ds.n_knowledge(), synth_out.c_str());
    return cogdiag::kExitOk;
  }

  if (train->parsed()) {
    const std::string data_path = resolve_input(train_data);
    SubjectDataset ds = cogdiag::load_responses(data_path, format_for(data_path, train_format),
                                                subject_for(train_subject, data_path));
    if (train_k_common > 0) ds = cogdiag::pad_knowledge(ds, train_k_common);
    auto [tr, va, te] = cogdiag::split(ds, train_split.spec(train_flags.seed));

    json config = {{"command", "train"},      {"model", train_model},
                   {"data", data_path},       {"subject", ds.subject},
                   {"h1", train_h1},          {"h2", train_h2},
                   {"k_common", train_k_common}, {"split", train_split.to_json()},
                   {"train", train_flags.to_json()}};

    cogdiag::History hist;
    if (train_model == "neuralcd") {
      auto [params, h] =
          cogdiag::neuralcd_train(tr, va, train_flags.config(), train_h1, train_h2);
      hist = std::move(h);
      cogdiag::save_checkpoint(
          cogdiag::NeuralCDCheckpoint{std::move(params), ds.q, ds.students, train_flags.seed,
                                      config},
          train_out);
    } else {
      // the default latent width adapts to narrow subjects; an explicit
      // request that violates d < K is an error, never silently shrunk
      const int d = train_d_opt->count() > 0 ? train_d
                                             : std::min(train_d, ds.n_knowledge() - 1);
      config["d"] = d;
      config["mf_type"] = train_mf;
      auto [params, h] = cogdiag::kancd_train(tr, va, train_flags.config(),
                                              cogdiag::mf_type_from_string(train_mf), d, train_h1,
                                              train_h2);
      hist = std::move(h);
      cogdiag::save_checkpoint(
          cogdiag::KaNCDCheckpoint{std::move(params), ds.q, ds.students, train_flags.seed,
                                   config},
          train_out);
    }
    if (!train_history.empty()) {
      json jh = history_to_json(hist);
      jh["config"] = config;
      cogdiag::write_json_file(jh, train_history);
    }
    std::printf("trained %s on %zu records; best epoch %d", train_model.c_str(),
                tr.records.size(), hist.best_epoch);
    if (std::isfinite(hist.best_valid_auc)) std::printf(", valid AUC %.4f", hist.best_valid_auc);
    std::printf("; checkpoint %s\n", train_out.c_str());
    return cogdiag::kExitOk;
  }

  if (transfer->parsed()) {
    const std::string source_path = resolve_input(tr_source);
    const std::string data_path = resolve_input(tr_data);
    cogdiag::SourceBackbone backbone = cogdiag::load_backbone(source_path, tr_model);
    SubjectDataset ds = cogdiag::load_responses(data_path, format_for(data_path, tr_format),
                                                subject_for(tr_subject, data_path));
    auto [trn, va, te] = cogdiag::split(ds, tr_split.spec(tr_flags.seed));

    cogdiag::TransferConfig cfg;
    cfg.g1 = tr_g1;
    cfg.g2 = tr_g2;
    cfg.dropout = tr_dropout;
    cfg.freeze_embeddings = tr_freeze_embeddings;
    cfg.train = tr_flags.config();

    cogdiag::TransferModel model = cogdiag::build_transfer(backbone, ds, cfg);
    cogdiag::History hist = cogdiag::transfer_fine_tune(model, trn, va, cfg.train);

    const json config = {{"command", "transfer"},
                         {"source", source_path},
                         {"source_digest", backbone.source_digest},
                         {"data", data_path},
                         {"subject", ds.subject},
                         {"g1", model.g1},
                         {"g2", model.g2},
                         {"dropout", tr_dropout},
                         {"freeze_embeddings", tr_freeze_embeddings},
                         {"split", tr_split.to_json()},
                         {"train", tr_flags.to_json()}};
    cogdiag::save_transfer_checkpoint(model, tr_flags.seed, config, tr_out);
    if (!tr_history.empty()) {
      json jh = history_to_json(hist);
      jh["config"] = config;
      cogdiag::write_json_file(jh, tr_history);
    }
    std::printf("fine-tuned on %zu records; best epoch %d", trn.records.size(), hist.best_epoch);
    if (std::isfinite(hist.best_valid_auc)) std::printf(", valid AUC %.4f", hist.best_valid_auc);
    std::printf("; checkpoint %s\n", tr_out.c_str());
    return cogdiag::kExitOk;
  }

  if (eval->parsed()) {
    const std::string model_path = resolve_input(ev_model);
    const std::string data_path = resolve_input(ev_data);
    cogdiag::LoadedModel lm = cogdiag::load_any_checkpoint(model_path);
    SubjectDataset raw = cogdiag::load_responses(data_path, format_for(data_path, ev_format),
                                                 subject_for(ev_subject, data_path));
    SubjectDataset ds = cogdiag::align_to_model(raw, lm);
    if (ev_split_sel != "all") {
      auto [trn, va, te] = cogdiag::split(ds, ev_split.spec(ev_seed));
      ds = ev_split_sel == "train" ? std::move(trn)
                                   : (ev_split_sel == "valid" ? std::move(va) : std::move(te));
    }
    const cogdiag::MetricsReport rep = cogdiag::evaluate(lm.predict, ds);
    std::fputs(cogdiag::format_report_table({rep}).c_str(), stdout);
    if (!ev_out.empty()) {
      json j = report_to_json(rep);
      j["config"] = {{"command", "eval"}, {"model", model_path},     {"data", data_path},
                     {"split", ev_split_sel}, {"seed", ev_seed}};
      cogdiag::write_json_file(j, ev_out);
    }
    return cogdiag::kExitOk;
  }

  if (diagnose->parsed()) {
    const cogdiag::LoadedModel lm = cogdiag::load_any_checkpoint(resolve_input(dg_model));
    int student = -1;
    for (std::size_t i = 0; i < lm.students.size(); ++i) {
      if (lm.students[i] == dg_student) student = static_cast<int>(i);
    }
    if (student < 0) throw cogdiag::DataError("unknown student id '" + dg_student + "'");
    const std::vector<double> prof = lm.diagnose(student);
    json j = {{"student_id", dg_student},
              {"knowledge", lm.diag_knowledge},
              {"proficiency", prof},
              {"model", lm.kind}};
    std::printf("%s\n", j.dump(1).c_str());
    if (!dg_out.empty()) cogdiag::write_json_file(j, dg_out);
    return cogdiag::kExitOk;
  }

  if (scatter->parsed()) {
    const cogdiag::LoadedModel lm = cogdiag::load_any_checkpoint(resolve_input(sc_model));
    const std::string data_path = resolve_input(sc_data);
    SubjectDataset raw = cogdiag::load_responses(data_path, format_for(data_path, sc_format),
                                                 subject_for("", data_path));
    const SubjectDataset ds = cogdiag::align_to_model(raw, lm);
    const cogdiag::ScatterExport ex = cogdiag::export_scatter(lm.predict, ds, sc_student, sc_out);
    std::printf("student %s: %zu items, accuracy %.4f; wrote %s\n", ex.student_id.c_str(),
                ex.rows.size(), ex.accuracy, sc_out.c_str());
    return cogdiag::kExitOk;
  }

  return cogdiag::kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const cogdiag::ConfigError& e) {
    std::fprintf(stderr, "error: config: %s\n", e.what());
    return cogdiag::kExitUsage;
  } catch (const cogdiag::SchemaError& e) {
    std::fprintf(stderr, "error: schema: %s\n", e.what());
    return cogdiag::kExitData;
  } catch (const cogdiag::DataError& e) {
    std::fprintf(stderr, "error: data: %s\n", e.what());
    return cogdiag::kExitData;
  } catch (const cogdiag::DimensionError& e) {
    std::fprintf(stderr, "error: dimension: %s\n", e.what());
    return cogdiag::kExitData;
  } catch (const cogdiag::DivergenceError& e) {
    std::fprintf(stderr, "error: divergence: %s\n", e.what());
    return cogdiag::kExitDivergence;
  } catch (const cogdiag::CheckpointError& e) {
    std::fprintf(stderr, "error: checkpoint: %s\n", e.what());
    return cogdiag::kExitCheckpoint;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
