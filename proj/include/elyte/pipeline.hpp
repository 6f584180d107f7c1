#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "elyte/featurizer.hpp"
#include "elyte/gbt.hpp"
#include "elyte/transformer.hpp"

namespace elyte {

// Long-format formulation CSV: exact header
// `formulation_id,component_smiles,mole_fraction,target`, one row per
// component, rows grouped by id in first-appearance order (interleaving is
// allowed). Validated on load: 1-10 components per formulation, finite
// non-negative fractions summing to 1 within 1e-3, parseable SMILES, and an
// identical target on every row of one formulation. Errors carry 1-based row
// numbers; InconsistentTargetError names the id. log10_target replaces each
// target t by log10(t) after validation (t must be positive).
std::vector<Formulation> load_dataset(const std::filesystem::path& path,
                                      bool log10_target = false);

// Same format minus the target column: header
// `formulation_id,component_smiles,mole_fraction`.
std::vector<Formulation> load_unlabeled_dataset(const std::filesystem::path& path);

struct SplitSpec {
  double train_fraction = 0.8;  // (0, 1)
  std::uint64_t seed = 0;
};

struct SplitResult {
  std::vector<Formulation> train;
  std::vector<Formulation> test;
};

// Whole formulations are shuffled with the seeded generator; the first
// floor(train_fraction * N) go to train, the rest to test, each side kept in
// original dataset order. Throws TooFewSamplesError below 5 formulations.
SplitResult split_dataset(const std::vector<Formulation>& ds, const SplitSpec& spec);

// One SMILES per line; blank lines and lines starting with '#' are skipped.
std::vector<std::string> load_corpus(const std::filesystem::path& path);

// Pretraining config file: JSON with optional "model" and "training" objects
// holding ModelConfig / TrainConfig fields. Unknown keys are rejected
// (SchemaError) and the seed must come from the caller, not the file.
struct PretrainFileConfig {
  ModelConfig model;
  TrainConfig training;
};
PretrainFileConfig load_pretrain_config(const std::filesystem::path& path);

struct PretrainOutcome {
  TrainReport report;
  int corpus_molecules = 0;
  int vocab_size = 0;
};

// Reads the corpus, converts it to canonical SELFIES (errors carry corpus
// line numbers), builds the vocabulary, pretrains, and writes the model
// bundle plus train_log.json to out_dir. Everything lands in a temp
// directory first and is renamed into place on success, so failures leave no
// partial output. out_dir must not already exist (IoError).
PretrainOutcome run_pretrain(const std::filesystem::path& corpus_path, const ModelConfig& mcfg,
                             const TrainConfig& tcfg, const std::filesystem::path& out_dir);

struct ParityPoint {
  std::string formulation_id;
  double actual = 0.0;
  double predicted = 0.0;
};

struct EvalReport {
  double rmse_value = 0.0;               // recomputable from parity
  std::vector<ParityPoint> parity;       // sorted by formulation_id
};

// RMSE as reported: fixed three decimals.
std::string display_rmse(double value);

struct SearchConfig {
  int trials = 50;
  int folds = 5;
  std::uint64_t seed = 0;
};

struct RunReport {
  EvalReport eval;
  int n_total = 0;
  int n_train = 0;
  int n_test = 0;
  std::uint64_t split_seed = 0;
  double train_fraction = 0.8;
  SearchConfig search;
  GbtHyperparams best;
  double best_cv_rmse = 0.0;
  std::string dataset_hash;       // fnv1a64 of the dataset file bytes
  std::string model_config_hash;  // fnv1a64 of the bundle's config.json bytes
};

// Full fine-tuning stage: loads the bundle and dataset, splits by
// formulation, featurizes, runs the hyperparameter search on the train split
// only, refits the best settings on the whole train split, evaluates on the
// test split and atomically writes out_dir with ensemble.json, report.json
// and search_log.json. Identical inputs and seeds reproduce every artifact
// byte for byte.
RunReport run_train(const std::filesystem::path& model_dir,
                    const std::filesystem::path& dataset_path, std::uint64_t split_seed,
                    const SearchConfig& search, const std::filesystem::path& out_dir,
                    bool log10_target = false);

// Predictions for an unlabeled dataset: CSV `formulation_id,prediction` in
// dataset order (header only when the dataset is empty), written atomically.
void run_predict(const std::filesystem::path& model_dir,
                 const std::filesystem::path& regressor_path,
                 const std::filesystem::path& dataset_path, const std::filesystem::path& out_csv);

// Scores a labeled dataset with an existing model + regressor and writes the
// parity CSV behind the report (see emit_parity).
EvalReport run_evaluate(const std::filesystem::path& model_dir,
                        const std::filesystem::path& regressor_path,
                        const std::filesystem::path& dataset_path,
                        const std::filesystem::path& out_csv);

// CSV `actual,predicted`, one row per pair, sorted by formulation id, full
// round-trip precision. Throws EmptyReportError when the report has no pairs.
void emit_parity(const EvalReport& report, const std::filesystem::path& path);

// Hex fnv1a-64 of a file's bytes; reports embed these so artifacts can be
// matched to their exact inputs.
std::string fnv1a64_file(const std::filesystem::path& path);

}  // namespace elyte
