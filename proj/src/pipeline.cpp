#include "elyte/pipeline.hpp"

#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <system_error>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"

#include "elyte/errors.hpp"
#include "elyte/rng.hpp"
#include "elyte/selfies.hpp"
#include "elyte/smiles.hpp"
#include "elyte/text.hpp"
#include "elyte/tokenizer.hpp"

namespace elyte {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kFractionSumTolerance = 1e-3;

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::string trimmed(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b])) != 0) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])) != 0) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

// Validates a SMILES string once per distinct value, attaching the dataset
// row to whichever parse error comes back.
void validate_smiles(const std::string& smiles, int row, const std::string& id,
                     std::unordered_set<std::string>& seen) {
  if (seen.count(smiles) != 0) return;
  const std::string where = "row " + std::to_string(row) + " (formulation \"" + id + "\"): ";
  try {
    parse_smiles(smiles);
  } catch (const SyntaxError& e) {
    throw SyntaxError(where + e.what());
  } catch (const ValenceError& e) {
    throw ValenceError(where + e.what());
  } catch (const UnsupportedFeatureError& e) {
    throw UnsupportedFeatureError(where + e.what());
  }
  seen.insert(smiles);
}

std::vector<Formulation> parse_formulation_csv(const fs::path& path, bool labeled,
                                               bool log10_target) {
  const std::vector<std::string> lines = read_lines(path);
  const std::string want_header = labeled ? "formulation_id,component_smiles,mole_fraction,target"
                                          : "formulation_id,component_smiles,mole_fraction";
  if (lines.empty()) throw SchemaError(path.string() + " is empty; expected header `" +
                                       want_header + "`");
  if (lines[0] != want_header) {
    throw SchemaError(path.string() + " has header `" + lines[0] + "`; expected `" + want_header +
                      "`");
  }
  const std::size_t arity = labeled ? 4 : 3;

  std::vector<Formulation> out;
  std::unordered_map<std::string, std::size_t> index;
  std::unordered_set<std::string> seen_smiles;

  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.empty()) continue;
    const int row = static_cast<int>(i) + 1;  // 1-based, header is row 1
    const std::string at_row = "row " + std::to_string(row) + ": ";

    const std::vector<std::string> fields = split_fields(line);
    if (fields.size() != arity) {
      throw SchemaError(at_row + "expected " + std::to_string(arity) + " fields, found " +
                        std::to_string(fields.size()));
    }
    const std::string& id = fields[0];
    if (id.empty()) throw SchemaError(at_row + "formulation_id is empty");

    double fraction = 0.0;
    std::optional<double> target;
    try {
      fraction = parse_double(fields[2], "mole_fraction");
      if (labeled) target = parse_double(fields[3], "target");
    } catch (const SchemaError& e) {
      throw SchemaError(at_row + e.what());
    }
    if (!std::isfinite(fraction) || fraction < 0.0) {
      throw FractionError(at_row + "mole_fraction must be finite and non-negative, got " +
                          fields[2]);
    }
    if (labeled && !std::isfinite(*target)) {
      throw SchemaError(at_row + "target must be finite, got " + fields[3]);
    }
    validate_smiles(fields[1], row, id, seen_smiles);

    const auto found = index.find(id);
    if (found == index.end()) {
      index.emplace(id, out.size());
      out.push_back(Formulation{id, {}, target});
    } else if (labeled && *out[found->second].target != *target) {
      throw InconsistentTargetError("formulation \"" + id + "\" has conflicting targets " +
                                    format_double(*out[found->second].target) + " and " +
                                    format_double(*target) + " (row " + std::to_string(row) + ")");
    }
    out[index.at(id)].components.push_back(Component{fields[1], fraction});
  }

  for (const Formulation& f : out) {
    if (f.components.size() > 10) {
      throw SchemaError("formulation \"" + f.id + "\" has " +
                        std::to_string(f.components.size()) + " components; at most 10 supported");
    }
    double sum = 0.0;
    for (const Component& c : f.components) sum += c.fraction;
    if (std::abs(sum - 1.0) > kFractionSumTolerance) {
      if (std::abs(sum - 100.0) <= 100.0 * kFractionSumTolerance) {
        throw FractionSumError("formulation \"" + f.id + "\" fractions sum to " +
                               format_double(sum) +
                               ", which looks like percentages; supply mole fractions summing "
                               "to 1");
      }
      throw FractionSumError("formulation \"" + f.id + "\" fractions sum to " +
                             format_double(sum) + "; expected 1 within 0.001");
    }
  }

  if (log10_target) {
    for (Formulation& f : out) {
      if (!(*f.target > 0.0)) {
        throw SchemaError("formulation \"" + f.id + "\": log10 of target requires a positive " +
                          "value, got " + format_double(*f.target));
      }
      f.target = std::log10(*f.target);
    }
  }
  return out;
}

struct CorpusLine {
  std::string smiles;
  int line = 0;  // 1-based in the file
};

std::vector<CorpusLine> read_corpus_lines(const fs::path& path) {
  const std::vector<std::string> lines = read_lines(path);
  std::vector<CorpusLine> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string s = trimmed(lines[i]);
    if (s.empty() || s[0] == '#') continue;
    out.push_back(CorpusLine{s, static_cast<int>(i) + 1});
  }
  return out;
}

// Stages every artifact in <target>.tmp-<pid> and renames into place on
// commit; anything uncommitted is deleted, so failures leave no partial
// output directory.
class StagedDir {
 public:
  explicit StagedDir(const fs::path& target)
      : target_(target),
        tmp_(target.parent_path() /
             (target.filename().string() + ".tmp-" + std::to_string(::getpid()))) {
    std::error_code ec;
    fs::remove_all(tmp_, ec);
    fs::create_directories(tmp_);
  }

  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;

  ~StagedDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(tmp_, ec);
    }
  }

  const fs::path& path() const { return tmp_; }

  void commit() {
    fs::rename(tmp_, target_);
    committed_ = true;
  }

 private:
  fs::path target_;
  fs::path tmp_;
  bool committed_ = false;
};

void atomic_write_file(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp-" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << content;
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

// Embedding calls dominate the pipeline's cost; one shared cache covers the
// train and test splits.
EmbedFn make_embedder(const Bundle& bundle) {
  auto cache = std::make_shared<std::unordered_map<std::string, Eigen::VectorXd>>();
  return [&bundle, cache](const std::string& smiles) -> Eigen::VectorXd {
    const auto it = cache->find(smiles);
    if (it != cache->end()) return it->second;
    Eigen::VectorXd v = embed_molecule(bundle.params, bundle.vocab, smiles);
    cache->emplace(smiles, v);
    return v;
  };
}

json hyperparams_json(const GbtHyperparams& hp) {
  return json{{"n_trees", hp.n_trees},
              {"max_depth", hp.max_depth},
              {"learning_rate", hp.learning_rate},
              {"min_samples_leaf", hp.min_samples_leaf},
              {"l2_leaf_penalty", hp.l2_leaf_penalty},
              {"subsample_fraction", hp.subsample_fraction},
              {"seed", hp.seed}};
}

json report_json(const RunReport& r) {
  json parity = json::array();
  for (const ParityPoint& p : r.eval.parity) {
    parity.push_back(json{{"formulation_id", p.formulation_id},
                          {"actual", p.actual},
                          {"predicted", p.predicted}});
  }
  json j;
  j["rmse"] = r.eval.rmse_value;
  j["rmse_display"] = display_rmse(r.eval.rmse_value);
  j["parity"] = std::move(parity);
  j["counts"] = json{{"total", r.n_total}, {"train", r.n_train}, {"test", r.n_test}};
  j["split"] = json{{"seed", r.split_seed}, {"train_fraction", r.train_fraction}};
  j["search"] = json{{"trials", r.search.trials}, {"folds", r.search.folds},
                     {"seed", r.search.seed}};
  j["best_hyperparams"] = hyperparams_json(r.best);
  j["best_cv_rmse"] = r.best_cv_rmse;
  j["hashes"] = json{{"dataset", r.dataset_hash}, {"model_config", r.model_config_hash}};
  return j;
}

int require_int(const json& j, const std::string& key) {
  if (!j.is_number_integer() && !j.is_number_unsigned()) {
    throw SchemaError("config field " + key + " must be an integer");
  }
  return j.get<int>();
}

double require_number(const json& j, const std::string& key) {
  if (!j.is_number()) throw SchemaError("config field " + key + " must be a number");
  return j.get<double>();
}

}  // namespace

std::vector<Formulation> load_dataset(const fs::path& path, bool log10_target) {
  return parse_formulation_csv(path, true, log10_target);
}

std::vector<Formulation> load_unlabeled_dataset(const fs::path& path) {
  return parse_formulation_csv(path, false, false);
}

SplitResult split_dataset(const std::vector<Formulation>& ds, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0) || !(spec.train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  const int n = static_cast<int>(ds.size());
  if (n < 5) {
    throw TooFewSamplesError("cannot split " + std::to_string(n) +
                             " formulations; need at least 5");
  }
  const int n_train = static_cast<int>(std::floor(spec.train_fraction * n));
  if (n_train < 1 || n_train >= n) {
    throw TooFewSamplesError("train_fraction " + format_double(spec.train_fraction) +
                             " leaves an empty split side for " + std::to_string(n) +
                             " formulations");
  }

  std::vector<int> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(spec.seed);
  rng.shuffle(idx);

  std::vector<int> train_idx(idx.begin(), idx.begin() + n_train);
  std::vector<int> test_idx(idx.begin() + n_train, idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());

  SplitResult out;
  out.train.reserve(train_idx.size());
  out.test.reserve(test_idx.size());
  for (int i : train_idx) out.train.push_back(ds[static_cast<std::size_t>(i)]);
  for (int i : test_idx) out.test.push_back(ds[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<std::string> load_corpus(const fs::path& path) {
  std::vector<std::string> out;
  for (const CorpusLine& cl : read_corpus_lines(path)) out.push_back(cl.smiles);
  return out;
}

PretrainFileConfig load_pretrain_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  PretrainFileConfig cfg;
  try {
    const json j = json::parse(in);
    if (!j.is_object()) throw SchemaError("pretraining config must be a JSON object");
    for (const auto& [section, body] : j.items()) {
      if (section == "model") {
        for (const auto& [key, value] : body.items()) {
          if (key == "d_model") cfg.model.d_model = require_int(value, key);
          else if (key == "n_heads") cfg.model.n_heads = require_int(value, key);
          else if (key == "n_layers_enc") cfg.model.n_layers_enc = require_int(value, key);
          else if (key == "n_layers_dec") cfg.model.n_layers_dec = require_int(value, key);
          else if (key == "d_ff") cfg.model.d_ff = require_int(value, key);
          else if (key == "max_len") cfg.model.max_len = require_int(value, key);
          else if (key == "dropout_rate") cfg.model.dropout_rate = require_number(value, key);
          else if (key == "pooling") {
            if (!value.is_string()) throw SchemaError("config field pooling must be a string");
            cfg.model.pooling = value.get<std::string>();
          } else if (key == "vocab_size") {
            throw SchemaError("vocab_size is derived from the corpus; remove it from the config");
          } else {
            throw SchemaError("unknown model config field \"" + key + "\"");
          }
        }
      } else if (section == "training") {
        for (const auto& [key, value] : body.items()) {
          if (key == "epochs") cfg.training.epochs = require_int(value, key);
          else if (key == "batch_size") cfg.training.batch_size = require_int(value, key);
          else if (key == "learning_rate") cfg.training.learning_rate = require_number(value, key);
          else if (key == "mask_ratio") cfg.training.mask_ratio = require_number(value, key);
          else if (key == "seed") {
            throw SchemaError("the pretraining seed comes from --seed; remove it from the config");
          } else {
            throw SchemaError("unknown training config field \"" + key + "\"");
          }
        }
      } else {
        throw SchemaError("unknown config section \"" + section + "\"");
      }
    }
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& e) {
    throw SchemaError("malformed pretraining config " + path.string() + ": " + e.what());
  }
  return cfg;
}

PretrainOutcome run_pretrain(const fs::path& corpus_path, const ModelConfig& mcfg,
                             const TrainConfig& tcfg, const fs::path& out_dir) {
  if (fs::exists(out_dir)) {
    throw IoError("output directory " + out_dir.string() + " already exists");
  }
  const std::vector<CorpusLine> corpus = read_corpus_lines(corpus_path);
  if (corpus.empty()) {
    throw EmptyCorpusError("corpus " + corpus_path.string() + " contains no molecules");
  }

  std::vector<std::string> selfies;
  std::vector<TokenList> token_lists;
  selfies.reserve(corpus.size());
  token_lists.reserve(corpus.size());
  std::unordered_map<std::string, std::string> memo;
  for (const CorpusLine& cl : corpus) {
    const std::string at_line = "corpus line " + std::to_string(cl.line) + ": ";
    auto it = memo.find(cl.smiles);
    if (it == memo.end()) {
      try {
        it = memo.emplace(cl.smiles, encode_selfies(parse_smiles(cl.smiles))).first;
      } catch (const SyntaxError& e) {
        throw SyntaxError(at_line + e.what());
      } catch (const ValenceError& e) {
        throw ValenceError(at_line + e.what());
      } catch (const UnsupportedFeatureError& e) {
        throw UnsupportedFeatureError(at_line + e.what());
      }
    }
    selfies.push_back(it->second);
    token_lists.push_back(split_selfies(it->second));
  }

  const Vocabulary vocab = Vocabulary::build(token_lists);
  PretrainResult<float> result = pretrain<float>(selfies, vocab, mcfg, tcfg);

  StagedDir staged(out_dir);
  save_bundle(result.params, vocab, staged.path(), &tcfg, &result.report);
  json log;
  log["epochs"] = tcfg.epochs;
  log["epoch_loss"] = result.report.epoch_loss;
  log["epoch_mask_accuracy"] = result.report.epoch_mask_accuracy;
  log["corpus_molecules"] = selfies.size();
  log["vocab_size"] = vocab.size();
  write_json_file(staged.path() / "train_log.json", log);
  staged.commit();

  return PretrainOutcome{std::move(result.report), static_cast<int>(selfies.size()),
                         vocab.size()};
}

std::string display_rmse(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", value);
  return buf;
}

RunReport run_train(const fs::path& model_dir, const fs::path& dataset_path,
                    std::uint64_t split_seed, const SearchConfig& search, const fs::path& out_dir,
                    bool log10_target) {
  if (fs::exists(out_dir)) {
    throw IoError("output directory " + out_dir.string() + " already exists");
  }
  const Bundle bundle = load_bundle(model_dir);
  const std::vector<Formulation> ds = load_dataset(dataset_path, log10_target);
  const SplitResult sp = split_dataset(ds, SplitSpec{0.8, split_seed});

  const EmbedFn embed = make_embedder(bundle);
  const FeaturizedDataset train_fd = featurize_dataset(sp.train, embed);
  const FeaturizedDataset test_fd = featurize_dataset(sp.test, embed);

  const SearchResult sr = random_search(train_fd.features, train_fd.targets, SearchSpace{},
                                        search.trials, search.folds, search.seed);
  const GbtEnsemble model = fit_gbt(train_fd.features, train_fd.targets, sr.best);

  RunReport rep;
  for (std::size_t i = 0; i < test_fd.ids.size(); ++i) {
    const Eigen::Index row = static_cast<Eigen::Index>(i);
    rep.eval.parity.push_back(ParityPoint{test_fd.ids[i], test_fd.targets(row),
                                          predict(model, test_fd.features.row(row).transpose())});
  }
  std::sort(rep.eval.parity.begin(), rep.eval.parity.end(),
            [](const ParityPoint& a, const ParityPoint& b) {
              return a.formulation_id < b.formulation_id;
            });
  std::vector<std::pair<double, double>> pairs;
  for (const ParityPoint& p : rep.eval.parity) pairs.emplace_back(p.actual, p.predicted);
  rep.eval.rmse_value = rmse(pairs);

  rep.n_total = static_cast<int>(ds.size());
  rep.n_train = static_cast<int>(sp.train.size());
  rep.n_test = static_cast<int>(sp.test.size());
  rep.split_seed = split_seed;
  rep.train_fraction = 0.8;
  rep.search = search;
  rep.best = sr.best;
  rep.best_cv_rmse = sr.best_rmse;
  rep.dataset_hash = fnv1a64_file(dataset_path);
  rep.model_config_hash = fnv1a64_file(model_dir / "config.json");

  StagedDir staged(out_dir);
  save_ensemble(model, staged.path() / "ensemble.json");
  write_json_file(staged.path() / "report.json", report_json(rep));
  json trials = json::array();
  for (const TrialResult& t : sr.log) {
    trials.push_back(json{{"params", hyperparams_json(t.params)},
                          {"cv_rmse", t.cv_rmse},  // null when the trial failed
                          {"error", t.error}});
  }
  write_json_file(staged.path() / "search_log.json", trials);
  staged.commit();
  return rep;
}

void run_predict(const fs::path& model_dir, const fs::path& regressor_path,
                 const fs::path& dataset_path, const fs::path& out_csv) {
  const Bundle bundle = load_bundle(model_dir);
  const GbtEnsemble model = load_ensemble(regressor_path);
  const std::vector<Formulation> ds = load_unlabeled_dataset(dataset_path);
  const EmbedFn embed = make_embedder(bundle);

  std::string body = "formulation_id,prediction\n";
  for (const Formulation& f : ds) {
    const Eigen::VectorXd x = featurize(f, embed);
    body += f.id + "," + format_double(predict(model, x)) + "\n";
  }
  atomic_write_file(out_csv, body);
}

EvalReport run_evaluate(const fs::path& model_dir, const fs::path& regressor_path,
                        const fs::path& dataset_path, const fs::path& out_csv) {
  const Bundle bundle = load_bundle(model_dir);
  const GbtEnsemble model = load_ensemble(regressor_path);
  const std::vector<Formulation> ds = load_dataset(dataset_path);
  if (ds.empty()) throw EmptyReportError("dataset " + dataset_path.string() + " has no " +
                                         "formulations to evaluate");
  const EmbedFn embed = make_embedder(bundle);
  const FeaturizedDataset fd = featurize_dataset(ds, embed);

  EvalReport report;
  for (std::size_t i = 0; i < fd.ids.size(); ++i) {
    const Eigen::Index row = static_cast<Eigen::Index>(i);
    report.parity.push_back(ParityPoint{fd.ids[i], fd.targets(row),
                                        predict(model, fd.features.row(row).transpose())});
  }
  std::sort(report.parity.begin(), report.parity.end(),
            [](const ParityPoint& a, const ParityPoint& b) {
              return a.formulation_id < b.formulation_id;
            });
  std::vector<std::pair<double, double>> pairs;
  for (const ParityPoint& p : report.parity) pairs.emplace_back(p.actual, p.predicted);
  report.rmse_value = rmse(pairs);

  emit_parity(report, out_csv);
  return report;
}

void emit_parity(const EvalReport& report, const fs::path& path) {
  if (report.parity.empty()) {
    throw EmptyReportError("report has no parity pairs to export");
  }
  std::vector<ParityPoint> sorted = report.parity;
  std::sort(sorted.begin(), sorted.end(), [](const ParityPoint& a, const ParityPoint& b) {
    return a.formulation_id < b.formulation_id;
  });
  std::string body = "actual,predicted\n";
  for (const ParityPoint& p : sorted) {
    body += format_double(p.actual) + "," + format_double(p.predicted) + "\n";
  }
  atomic_write_file(path, body);
}

std::string fnv1a64_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::uint64_t h = 14695981039346656037ULL;
  char buf[4096];
  while (true) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    if (got <= 0) break;
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (!in) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

}  // namespace elyte
