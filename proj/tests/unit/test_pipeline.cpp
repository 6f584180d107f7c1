#include "elyte/pipeline.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <doctest.h>

#include "json.hpp"

#include "elyte/errors.hpp"
#include "elyte/text.hpp"

using namespace elyte;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& stem) {
  const fs::path p = fs::temp_directory_path() / (stem + "." + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  REQUIRE(out.good());
  out << content;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::vector<std::string>& molecule_pool() {
  static const std::vector<std::string> pool = {"CCO", "COC", "CC#N", "O=C=O", "CCCl", "C1CCC1"};
  return pool;
}

// Small but real bundle: enough vocabulary for the pool above.
fs::path make_bundle(const std::string& stem, std::uint64_t seed = 7) {
  const fs::path dir = fresh_dir(stem);
  const fs::path corpus = dir / "corpus.smi";
  std::string text = "# tiny corpus\n";
  for (const std::string& s : molecule_pool()) text += s + "\n";
  text += "CCO\nCC#N\n";
  write_file(corpus, text);

  ModelConfig mcfg;
  mcfg.d_model = 16;
  mcfg.n_heads = 2;
  mcfg.n_layers_enc = 1;
  mcfg.n_layers_dec = 1;
  mcfg.d_ff = 32;
  mcfg.max_len = 32;
  TrainConfig tcfg;
  tcfg.epochs = 1;
  tcfg.batch_size = 4;
  tcfg.seed = seed;

  const fs::path out = dir / "bundle";
  run_pretrain(corpus, mcfg, tcfg, out);
  return out;
}

// 12 two-component formulations over the pool, targets 1 + i/4.
std::string labeled_dataset_csv() {
  std::string text = "formulation_id,component_smiles,mole_fraction,target\n";
  const auto& pool = molecule_pool();
  for (int i = 0; i < 12; ++i) {
    const std::string id = "f" + std::to_string(10 + i);  // f10..f21: lexicographic == numeric
    const std::string target = format_double(1.0 + 0.25 * i);
    text += id + "," + pool[static_cast<std::size_t>(i % 6)] + ",0.35," + target + "\n";
    text += id + "," + pool[static_cast<std::size_t>((i + 1) % 6)] + ",0.65," + target + "\n";
  }
  return text;
}

std::vector<Formulation> sized_dataset(int n) {
  std::vector<Formulation> ds;
  for (int i = 0; i < n; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "f%04d", i);
    ds.push_back(Formulation{buf, {Component{"C", 1.0}}, static_cast<double>(i)});
  }
  return ds;
}

}  // namespace

TEST_CASE("formulation datasets load, group and validate") {
  const fs::path dir = fresh_dir("elyte_ds_load");
  const fs::path path = dir / "ds.csv";

  write_file(path,
             "formulation_id,component_smiles,mole_fraction,target\n"
             "a,CCO,0.5,1.25\n"
             "b,COC,1,2.5\n"
             "a,COC,0.5,1.25\n");
  const std::vector<Formulation> ds = load_dataset(path);
  REQUIRE(ds.size() == 2);
  CHECK(ds[0].id == "a");  // first-appearance order even with interleaved rows
  CHECK(ds[1].id == "b");
  REQUIRE(ds[0].components.size() == 2);
  CHECK(ds[0].components[0].smiles == "CCO");
  CHECK(ds[0].components[0].fraction == 0.5);
  CHECK(ds[0].components[1].smiles == "COC");
  CHECK(*ds[0].target == 1.25);
  CHECK(*ds[1].target == 2.5);

  const std::vector<Formulation> logged = load_dataset(path, true);
  CHECK(*logged[0].target == std::log10(1.25));
  CHECK(*logged[1].target == std::log10(2.5));

  write_file(path, "formulation_id,component_smiles,mole_fraction,target\n");
  CHECK(load_dataset(path).empty());

  CHECK_THROWS_AS(load_dataset(dir / "missing.csv"), IoError);
  write_file(path, "");
  CHECK_THROWS_AS(load_dataset(path), SchemaError);
  write_file(path, "id,smiles,fraction,target\na,CCO,1,1\n");
  CHECK_THROWS_AS(load_dataset(path), SchemaError);

  write_file(path, "formulation_id,component_smiles,mole_fraction,target\na,CCO,1\n");
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("row 2"), SchemaError);
  write_file(path, "formulation_id,component_smiles,mole_fraction,target\na,CCO,1,1\nb,COC,x,1\n");
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("row 3"), SchemaError);
  write_file(path, "formulation_id,component_smiles,mole_fraction,target\na,CCO,-0.2,1\n");
  CHECK_THROWS_AS(load_dataset(path), FractionError);
  write_file(path, "formulation_id,component_smiles,mole_fraction,target\na,CCO,nan,1\n");
  CHECK_THROWS_AS(load_dataset(path), FractionError);
  write_file(path, "formulation_id,component_smiles,mole_fraction,target\na,C(,1,1\n");
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("row 2"), SyntaxError);
  write_file(path, "formulation_id,component_smiles,mole_fraction,target\n,CCO,1,1\n");
  CHECK_THROWS_AS(load_dataset(path), SchemaError);

  write_file(path,
             "formulation_id,component_smiles,mole_fraction,target\n"
             "a,CCO,0.5,1\n"
             "a,COC,0.5,2\n");
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("\"a\""), InconsistentTargetError);

  std::string crowded = "formulation_id,component_smiles,mole_fraction,target\n";
  for (int i = 0; i < 11; ++i) crowded += "a,CCO," + format_double(1.0 / 11.0) + ",1\n";
  write_file(path, crowded);
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("components"), SchemaError);

  write_file(path, "formulation_id,component_smiles,mole_fraction,target\na,CCO,0.9,1\n");
  CHECK_THROWS_AS(load_dataset(path), FractionSumError);
  write_file(path,
             "formulation_id,component_smiles,mole_fraction,target\n"
             "a,CCO,60,1\n"
             "a,COC,40,1\n");
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("percentage"), FractionSumError);

  write_file(path, "formulation_id,component_smiles,mole_fraction,target\na,CCO,1,0\n");
  CHECK_THROWS_AS(load_dataset(path, true), SchemaError);  // log10 needs positive targets

  write_file(path,
             "formulation_id,component_smiles,mole_fraction\n"
             "a,CCO,0.5\n"
             "a,COC,0.5\n");
  const std::vector<Formulation> unlabeled = load_unlabeled_dataset(path);
  REQUIRE(unlabeled.size() == 1);
  CHECK(!unlabeled[0].target.has_value());
  CHECK_THROWS_AS(load_dataset(path), SchemaError);  // labeled loader wants 4 columns
  write_file(path, "formulation_id,component_smiles,mole_fraction,target\na,CCO,1,1\n");
  CHECK_THROWS_AS(load_unlabeled_dataset(path), SchemaError);
}

TEST_CASE("splits are seeded, disjoint and sized by the floor rule") {
  const std::vector<Formulation> big = sized_dataset(147);
  const SplitResult s147 = split_dataset(big, SplitSpec{0.8, 5});
  CHECK(s147.train.size() == 117);
  CHECK(s147.test.size() == 30);

  const SplitResult s125 = split_dataset(sized_dataset(125), SplitSpec{0.8, 5});
  CHECK(s125.train.size() == 100);
  CHECK(s125.test.size() == 25);

  const SplitResult s5 = split_dataset(sized_dataset(5), SplitSpec{0.8, 5});
  CHECK(s5.train.size() == 4);
  CHECK(s5.test.size() == 1);

  // Disjoint cover, each side in original dataset order.
  std::set<std::string> seen;
  for (const Formulation& f : s147.train) seen.insert(f.id);
  for (const Formulation& f : s147.test) seen.insert(f.id);
  CHECK(seen.size() == 147);
  CHECK(std::is_sorted(s147.train.begin(), s147.train.end(),
                       [](const Formulation& a, const Formulation& b) { return a.id < b.id; }));
  CHECK(std::is_sorted(s147.test.begin(), s147.test.end(),
                       [](const Formulation& a, const Formulation& b) { return a.id < b.id; }));

  const SplitResult again = split_dataset(big, SplitSpec{0.8, 5});
  for (std::size_t i = 0; i < again.train.size(); ++i) {
    CHECK(again.train[i].id == s147.train[i].id);
  }
  const SplitResult reseeded = split_dataset(big, SplitSpec{0.8, 6});
  bool membership_differs = false;
  for (std::size_t i = 0; i < reseeded.train.size() && !membership_differs; ++i) {
    membership_differs = reseeded.train[i].id != s147.train[i].id;
  }
  CHECK(membership_differs);

  CHECK_THROWS_AS(split_dataset(sized_dataset(4), SplitSpec{0.8, 1}), TooFewSamplesError);
  CHECK_THROWS_AS(split_dataset(big, SplitSpec{0.0, 1}), ConfigError);
  CHECK_THROWS_AS(split_dataset(big, SplitSpec{1.0, 1}), ConfigError);
  CHECK_THROWS_AS(split_dataset(sized_dataset(5), SplitSpec{0.1, 1}), TooFewSamplesError);
}

TEST_CASE("corpus files skip comments and blanks") {
  const fs::path dir = fresh_dir("elyte_corpus");
  const fs::path path = dir / "corpus.smi";
  write_file(path, "# header comment\n\nCCO\n  COC  \n# another\nCC#N\n");
  const std::vector<std::string> corpus = load_corpus(path);
  REQUIRE(corpus.size() == 3);
  CHECK(corpus[0] == "CCO");
  CHECK(corpus[1] == "COC");  // surrounding whitespace trimmed
  CHECK(corpus[2] == "CC#N");
  CHECK_THROWS_AS(load_corpus(dir / "missing.smi"), IoError);
}

TEST_CASE("pretraining config files parse strictly") {
  const fs::path dir = fresh_dir("elyte_precfg");
  const fs::path path = dir / "config.json";

  write_file(path, R"({
    "model": {"d_model": 24, "n_heads": 3, "n_layers_enc": 1, "n_layers_dec": 2,
              "d_ff": 48, "max_len": 40, "dropout_rate": 0.1, "pooling": "bos"},
    "training": {"epochs": 5, "batch_size": 8, "learning_rate": 0.002, "mask_ratio": 0.2}
  })");
  const PretrainFileConfig cfg = load_pretrain_config(path);
  CHECK(cfg.model.d_model == 24);
  CHECK(cfg.model.n_heads == 3);
  CHECK(cfg.model.n_layers_dec == 2);
  CHECK(cfg.model.d_ff == 48);
  CHECK(cfg.model.max_len == 40);
  CHECK(cfg.model.dropout_rate == 0.1);
  CHECK(cfg.model.pooling == "bos");
  CHECK(cfg.training.epochs == 5);
  CHECK(cfg.training.batch_size == 8);
  CHECK(cfg.training.learning_rate == 0.002);
  CHECK(cfg.training.mask_ratio == 0.2);

  write_file(path, "{}");
  const PretrainFileConfig defaults = load_pretrain_config(path);
  CHECK(defaults.model.d_model == ModelConfig{}.d_model);
  CHECK(defaults.training.epochs == TrainConfig{}.epochs);

  write_file(path, R"({"model": {"width": 8}})");
  CHECK_THROWS_AS(load_pretrain_config(path), SchemaError);
  write_file(path, R"({"model": {"vocab_size": 30}})");
  CHECK_THROWS_AS(load_pretrain_config(path), SchemaError);
  write_file(path, R"({"training": {"seed": 1}})");
  CHECK_THROWS_AS(load_pretrain_config(path), SchemaError);
  write_file(path, R"({"optimizer": {}})");
  CHECK_THROWS_AS(load_pretrain_config(path), SchemaError);
  write_file(path, R"({"model": {"d_model": 16.5}})");
  CHECK_THROWS_AS(load_pretrain_config(path), SchemaError);
  write_file(path, R"({"model": {"pooling": 3}})");
  CHECK_THROWS_AS(load_pretrain_config(path), SchemaError);
  write_file(path, "{ not json");
  CHECK_THROWS_AS(load_pretrain_config(path), SchemaError);
  CHECK_THROWS_AS(load_pretrain_config(dir / "missing.json"), IoError);
}

TEST_CASE("pretraining runs write complete, reproducible bundles") {
  const fs::path dir = fresh_dir("elyte_pretrain_run");
  const fs::path corpus = dir / "corpus.smi";
  std::string text = "# corpus\n";
  for (const std::string& s : molecule_pool()) text += s + "\n";
  text += "CCO\nCC#N\n";
  write_file(corpus, text);

  ModelConfig mcfg;
  mcfg.d_model = 16;
  mcfg.n_heads = 2;
  mcfg.n_layers_enc = 1;
  mcfg.n_layers_dec = 1;
  mcfg.d_ff = 32;
  mcfg.max_len = 32;
  TrainConfig tcfg;
  tcfg.epochs = 1;
  tcfg.batch_size = 4;
  tcfg.seed = 7;

  const fs::path out = dir / "bundle";
  const PretrainOutcome outcome = run_pretrain(corpus, mcfg, tcfg, out);
  CHECK(outcome.corpus_molecules == 8);  // duplicates count as corpus entries
  CHECK(outcome.vocab_size > 5);
  REQUIRE(outcome.report.epoch_loss.size() == 1);

  CHECK(fs::exists(out / "config.json"));
  CHECK(fs::exists(out / "vocab.txt"));
  CHECK(fs::exists(out / "weights.bin"));
  CHECK(fs::exists(out / "train_log.json"));

  const nlohmann::json log = nlohmann::json::parse(read_file(out / "train_log.json"));
  CHECK(log.at("corpus_molecules").get<int>() == 8);
  CHECK(log.at("vocab_size").get<int>() == outcome.vocab_size);
  CHECK(log.at("epoch_loss").size() == 1);
  CHECK(log.at("epoch_loss")[0].get<double>() == outcome.report.epoch_loss[0]);

  const Bundle bundle = load_bundle(out);
  CHECK(embed_molecule(bundle.params, bundle.vocab, "CCO").size() == 16);

  const fs::path out2 = dir / "bundle2";
  run_pretrain(corpus, mcfg, tcfg, out2);
  CHECK(read_file(out / "weights.bin") == read_file(out2 / "weights.bin"));
  CHECK(read_file(out / "vocab.txt") == read_file(out2 / "vocab.txt"));
  CHECK(read_file(out / "train_log.json") == read_file(out2 / "train_log.json"));

  TrainConfig reseeded = tcfg;
  reseeded.seed = 8;
  const fs::path out3 = dir / "bundle3";
  run_pretrain(corpus, mcfg, reseeded, out3);
  CHECK(read_file(out / "weights.bin") != read_file(out3 / "weights.bin"));

  CHECK_THROWS_AS(run_pretrain(corpus, mcfg, tcfg, out), IoError);  // already exists

  const fs::path empty = dir / "empty.smi";
  write_file(empty, "# nothing\n\n");
  CHECK_THROWS_AS(run_pretrain(empty, mcfg, tcfg, dir / "none"), EmptyCorpusError);
  CHECK(!fs::exists(dir / "none"));

  const fs::path broken = dir / "broken.smi";
  write_file(broken, "CCO\nC(\n");
  CHECK_THROWS_WITH_AS(run_pretrain(broken, mcfg, tcfg, dir / "none"),
                       doctest::Contains("corpus line 2"), SyntaxError);
  CHECK(!fs::exists(dir / "none"));
  for (const auto& entry : fs::directory_iterator(dir)) {
    CHECK(entry.path().filename().string().find(".tmp-") == std::string::npos);
  }
}

TEST_CASE("training produces consistent, reproducible artifacts") {
  const fs::path bundle_dir = make_bundle("elyte_train_bundle");
  const fs::path dir = fresh_dir("elyte_train_run");
  const fs::path dataset = dir / "dataset.csv";
  write_file(dataset, labeled_dataset_csv());

  SearchConfig search;
  search.trials = 3;
  search.folds = 3;
  search.seed = 11;

  const fs::path out = dir / "run1";
  const RunReport rep = run_train(bundle_dir, dataset, 3, search, out);
  CHECK(rep.n_total == 12);
  CHECK(rep.n_train == 9);
  CHECK(rep.n_test == 3);
  REQUIRE(rep.eval.parity.size() == 3);
  CHECK(std::is_sorted(rep.eval.parity.begin(), rep.eval.parity.end(),
                       [](const ParityPoint& a, const ParityPoint& b) {
                         return a.formulation_id < b.formulation_id;
                       }));

  REQUIRE(fs::exists(out / "ensemble.json"));
  REQUIRE(fs::exists(out / "report.json"));
  REQUIRE(fs::exists(out / "search_log.json"));

  // Every reported number is recomputable from the persisted report alone.
  const nlohmann::json report = nlohmann::json::parse(read_file(out / "report.json"));
  CHECK(report.at("rmse").get<double>() == rep.eval.rmse_value);
  CHECK(report.at("rmse_display").get<std::string>() == display_rmse(rep.eval.rmse_value));
  std::vector<std::pair<double, double>> pairs;
  for (const nlohmann::json& p : report.at("parity")) {
    pairs.emplace_back(p.at("actual").get<double>(), p.at("predicted").get<double>());
  }
  CHECK(rmse(pairs) == report.at("rmse").get<double>());
  CHECK(report.at("counts").at("train").get<int>() == 9);
  CHECK(report.at("hashes").at("dataset").get<std::string>() == fnv1a64_file(dataset));
  CHECK(nlohmann::json::parse(read_file(out / "search_log.json")).size() == 3);

  const GbtEnsemble ensemble = load_ensemble(out / "ensemble.json");
  CHECK(ensemble.n_features == 16);

  const fs::path out2 = dir / "run2";
  run_train(bundle_dir, dataset, 3, search, out2);
  CHECK(read_file(out / "ensemble.json") == read_file(out2 / "ensemble.json"));
  CHECK(read_file(out / "report.json") == read_file(out2 / "report.json"));
  CHECK(read_file(out / "search_log.json") == read_file(out2 / "search_log.json"));

  CHECK_THROWS_AS(run_train(bundle_dir, dataset, 3, search, out), IoError);

  // Regressor bytes depend only on the train split: perturbing test-side
  // targets changes the report but not the fitted ensemble.
  const SplitResult sp = split_dataset(load_dataset(dataset), SplitSpec{0.8, 3});
  std::set<std::string> test_ids;
  for (const Formulation& f : sp.test) test_ids.insert(f.id);
  std::string perturbed = "formulation_id,component_smiles,mole_fraction,target\n";
  const auto& pool = molecule_pool();
  for (int i = 0; i < 12; ++i) {
    const std::string id = "f" + std::to_string(10 + i);
    const double target = 1.0 + 0.25 * i + (test_ids.count(id) != 0 ? 100.0 : 0.0);
    perturbed += id + "," + pool[static_cast<std::size_t>(i % 6)] + ",0.35," +
                 format_double(target) + "\n";
    perturbed += id + "," + pool[static_cast<std::size_t>((i + 1) % 6)] + ",0.65," +
                 format_double(target) + "\n";
  }
  const fs::path dataset2 = dir / "dataset_perturbed.csv";
  write_file(dataset2, perturbed);
  const fs::path out3 = dir / "run3";
  run_train(bundle_dir, dataset2, 3, search, out3);
  CHECK(read_file(out3 / "ensemble.json") == read_file(out / "ensemble.json"));
  CHECK(read_file(out3 / "report.json") != read_file(out / "report.json"));
}

TEST_CASE("prediction and evaluation run the full artifact loop") {
  const fs::path bundle_dir = make_bundle("elyte_predict_bundle");
  const fs::path dir = fresh_dir("elyte_predict_run");
  const fs::path dataset = dir / "dataset.csv";
  write_file(dataset, labeled_dataset_csv());

  SearchConfig search;
  search.trials = 2;
  search.folds = 3;
  search.seed = 1;
  const fs::path run_dir = dir / "run";
  run_train(bundle_dir, dataset, 3, search, run_dir);
  const fs::path regressor = run_dir / "ensemble.json";

  // Unlabeled variant: two training formulations, one fresh mix, and one
  // molecule whose tokens the vocabulary has never seen (falls back to UNK).
  const fs::path unlabeled = dir / "predict.csv";
  write_file(unlabeled,
             "formulation_id,component_smiles,mole_fraction\n"
             "f10,CCO,0.35\n"
             "f10,COC,0.65\n"
             "f11,COC,0.35\n"
             "f11,CC#N,0.65\n"
             "novel,CS,0.5\n"
             "novel,CCO,0.5\n");
  const fs::path pred_csv = dir / "pred.csv";
  run_predict(bundle_dir, regressor, unlabeled, pred_csv);

  std::ifstream in(pred_csv);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "formulation_id,prediction");
  std::vector<std::pair<std::string, double>> rows;
  while (std::getline(in, line)) {
    const std::size_t comma = line.find(',');
    REQUIRE(comma != std::string::npos);
    rows.emplace_back(line.substr(0, comma),
                      parse_double(line.substr(comma + 1), "prediction"));
  }
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].first == "f10");  // dataset order preserved
  CHECK(rows[1].first == "f11");
  CHECK(rows[2].first == "novel");
  for (const auto& [id, value] : rows) CHECK(std::isfinite(value));

  // Prediction CSV values equal direct model evaluation bit for bit.
  const Bundle bundle = load_bundle(bundle_dir);
  const GbtEnsemble ensemble = load_ensemble(regressor);
  const auto embed = [&](const std::string& smiles) {
    return embed_molecule(bundle.params, bundle.vocab, smiles);
  };
  const std::vector<Formulation> uds = load_unlabeled_dataset(unlabeled);
  for (std::size_t i = 0; i < uds.size(); ++i) {
    CHECK(rows[i].second == predict(ensemble, featurize(uds[i], embed)));
  }

  const fs::path empty_ds = dir / "empty.csv";
  write_file(empty_ds, "formulation_id,component_smiles,mole_fraction\n");
  const fs::path empty_out = dir / "empty_pred.csv";
  run_predict(bundle_dir, regressor, empty_ds, empty_out);
  CHECK(read_file(empty_out) == "formulation_id,prediction\n");

  const fs::path parity_csv = dir / "parity.csv";
  const EvalReport eval = run_evaluate(bundle_dir, regressor, dataset, parity_csv);
  REQUIRE(eval.parity.size() == 12);
  CHECK(std::is_sorted(eval.parity.begin(), eval.parity.end(),
                       [](const ParityPoint& a, const ParityPoint& b) {
                         return a.formulation_id < b.formulation_id;
                       }));

  // Parity CSV reloads to the identical RMSE (full-precision round trip).
  std::ifstream pin(parity_csv);
  REQUIRE(std::getline(pin, line));
  CHECK(line == "actual,predicted");
  std::vector<std::pair<double, double>> pairs;
  while (std::getline(pin, line)) {
    const std::size_t comma = line.find(',');
    REQUIRE(comma != std::string::npos);
    pairs.emplace_back(parse_double(line.substr(0, comma), "actual"),
                       parse_double(line.substr(comma + 1), "predicted"));
  }
  REQUIRE(pairs.size() == 12);
  CHECK(rmse(pairs) == eval.rmse_value);

  const fs::path empty_labeled = dir / "empty_labeled.csv";
  write_file(empty_labeled, "formulation_id,component_smiles,mole_fraction,target\n");
  CHECK_THROWS_AS(run_evaluate(bundle_dir, regressor, empty_labeled, dir / "nope.csv"),
                  EmptyReportError);

  EvalReport unsorted;
  unsorted.parity = {{"z", 1.0, 2.0}, {"a", 3.0, 4.0}};
  const fs::path unsorted_csv = dir / "unsorted.csv";
  emit_parity(unsorted, unsorted_csv);
  CHECK(read_file(unsorted_csv) == "actual,predicted\n3,4\n1,2\n");
  CHECK_THROWS_AS(emit_parity(EvalReport{}, unsorted_csv), EmptyReportError);
}

TEST_CASE("file hashes follow the reference vectors") {
  const fs::path dir = fresh_dir("elyte_hash");
  write_file(dir / "empty", "");
  CHECK(fnv1a64_file(dir / "empty") == "cbf29ce484222325");
  write_file(dir / "a", "a");
  CHECK(fnv1a64_file(dir / "a") == "af63dc4c8601ec8c");
  CHECK_THROWS_AS(fnv1a64_file(dir / "missing"), IoError);
}
