#include "elyte/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "doctest.h"
#include "elyte/errors.hpp"
#include "elyte/selfies.hpp"
#include "elyte/smiles.hpp"
#include "elyte/tokenizer.hpp"

using namespace elyte;

namespace {

std::string selfies_of(const std::string& smiles) {
  return encode_selfies(parse_smiles(smiles));
}

const std::vector<std::string>& sample_smiles() {
  static const std::vector<std::string> v = {"CCO",  "OCC",   "C=C",         "C1CC1",
                                             "CC(C)=O", "C#N", "FC(F)F",     "CCOC(=O)OCC",
                                             "CS(=O)(=O)C"};
  return v;
}

std::vector<std::string> sample_selfies() {
  std::vector<std::string> out;
  for (const auto& s : sample_smiles()) out.push_back(selfies_of(s));
  return out;
}

Vocabulary sample_vocab() {
  std::vector<TokenList> lists;
  for (const auto& s : sample_selfies()) lists.push_back(split_selfies(s));
  return Vocabulary::build(lists);
}

template <typename Real>
std::vector<const Matrix<Real>*> tensor_list(const ModelParams<Real>& p,
                                             std::vector<std::string>* names = nullptr) {
  std::vector<const Matrix<Real>*> out;
  for_each_tensor(p, [&](const std::string& n, const Matrix<Real>& t) {
    if (names) names->push_back(n);
    out.push_back(&t);
  });
  return out;
}

template <typename Real>
bool params_identical(const ModelParams<Real>& a, const ModelParams<Real>& b) {
  const auto ta = tensor_list(a);
  const auto tb = tensor_list(b);
  if (ta.size() != tb.size()) return false;
  for (std::size_t k = 0; k < ta.size(); ++k)
    if (ta[k]->rows() != tb[k]->rows() || ta[k]->cols() != tb[k]->cols() || *ta[k] != *tb[k])
      return false;
  return true;
}

}  // namespace

TEST_CASE("model config validation") {
  ModelConfig cfg;
  cfg.vocab_size = 20;
  CHECK_NOTHROW(cfg.validate());
  ModelConfig bad = cfg;
  bad.d_model = 8;
  bad.n_heads = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.d_ff = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.vocab_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.dropout_rate = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.pooling = "max";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("train config validation") {
  TrainConfig tc;
  CHECK_NOTHROW(tc.validate());
  TrainConfig bad = tc;
  bad.epochs = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tc;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tc;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tc;
  bad.mask_ratio = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("model initialization is seeded and fully shaped") {
  const Vocabulary vocab = sample_vocab();
  ModelConfig cfg;
  cfg.vocab_size = vocab.size();
  const auto a = init_model<float>(cfg, 11);
  const auto b = init_model<float>(cfg, 11);
  const auto c = init_model<float>(cfg, 12);
  CHECK(params_identical(a, b));
  CHECK_FALSE(params_identical(a, c));

  std::vector<std::string> names;
  const auto tensors = tensor_list(a, &names);
  // embedding + 16 tensors per encoder layer + 26 per decoder layer
  CHECK(tensors.size() == 1 + 16 * 2 + 26 * 2);
  for (const auto* t : tensors) CHECK(t->allFinite());
  CHECK(names.front() == "token_embedding");
  CHECK(tensors.front()->rows() == vocab.size());
  CHECK(tensors.front()->cols() == cfg.d_model);
  for (const auto& n : names) CHECK(n.find("positional") == std::string::npos);

  const auto shape_of = [&](const std::string& name) {
    for (std::size_t k = 0; k < names.size(); ++k)
      if (names[k] == name) return std::pair<long, long>(tensors[k]->rows(), tensors[k]->cols());
    FAIL("missing tensor ", name);
    return std::pair<long, long>(0, 0);
  };
  CHECK(shape_of("encoder.0.self_attn.wq") == std::pair<long, long>(64, 64));
  CHECK(shape_of("encoder.1.ff.w1") == std::pair<long, long>(64, 128));
  CHECK(shape_of("encoder.1.ff.b1") == std::pair<long, long>(1, 128));
  CHECK(shape_of("decoder.0.cross_attn.bo") == std::pair<long, long>(1, 64));
  CHECK(shape_of("decoder.1.ln_cross.scale") == std::pair<long, long>(1, 64));
  CHECK(shape_of("decoder.1.ff.w2") == std::pair<long, long>(128, 64));

  ModelConfig bad = cfg;
  bad.n_heads = 3;
  bad.d_model = 8;
  CHECK_THROWS_AS(init_model<float>(bad, 1), ConfigError);
}

TEST_CASE("encoder output shape, determinism and position sensitivity") {
  const Vocabulary vocab = sample_vocab();
  ModelConfig cfg;
  cfg.vocab_size = vocab.size();
  const auto params = init_model<float>(cfg, 3);

  const std::vector<int> ids = tokenize(split_selfies(selfies_of("CCOC(=O)OCC")), vocab);
  const auto states = encode(params, ids);
  CHECK(states.rows() == static_cast<long>(ids.size()));
  CHECK(states.cols() == cfg.d_model);
  CHECK(states.allFinite());
  CHECK(states == encode(params, ids));

  // Swap two distinct interior tokens two apart; with positions active the
  // states must move.
  std::vector<int> swapped = ids;
  std::size_t i = 1;
  while (i + 3 < swapped.size() && swapped[i] == swapped[i + 2]) ++i;
  REQUIRE(i + 3 < swapped.size());
  std::swap(swapped[i], swapped[i + 2]);
  CHECK((encode(params, swapped) - states).cwiseAbs().maxCoeff() > 1e-6f);

  CHECK_THROWS_AS(encode(params, std::vector<int>(cfg.max_len + 1, 5)), SequenceTooLongError);
  CHECK_THROWS_AS(encode(params, std::vector<int>{1, vocab.size(), 2}), IdOutOfRangeError);
  CHECK_THROWS_AS(encode(params, std::vector<int>{1, -1, 2}), IdOutOfRangeError);
}

TEST_CASE("pooling averages exactly the content rows") {
  Matrix<double> states(2, 2);
  states << 1, 2, 3, 4;
  const auto mean = pool_mean(states, {true, true});
  CHECK(mean(0, 0) == doctest::Approx(2.0));
  CHECK(mean(0, 1) == doctest::Approx(3.0));
  const auto only_first = pool_mean(states, {true, false});
  CHECK(only_first(0, 0) == 1.0);
  CHECK(only_first(0, 1) == 2.0);
  CHECK_THROWS_AS(pool_mean(states, {false, false}), EmptySequenceError);
  CHECK_THROWS_AS(pool_mean(states, {true}), DimensionMismatchError);

  const std::vector<int> ids = {kBosId, 7, 8, kEosId};
  const auto mask = content_positions(ids);
  CHECK(mask == std::vector<bool>{false, true, true, false});
}

TEST_CASE("denoising loss sits at uniform entropy for degenerate logits") {
  const Vocabulary vocab = sample_vocab();
  ModelConfig cfg;
  cfg.vocab_size = vocab.size();
  auto params = init_model<float>(cfg, 5);
  const std::vector<int> target = tokenize(split_selfies(selfies_of("CC(C)=O")), vocab);
  std::vector<int> masked = target;
  masked[2] = kMaskId;

  const double ln_v = std::log(static_cast<double>(vocab.size()));
  const auto with_init = forward_denoise(params, masked, target);
  CHECK(with_init.loss >= 0.0f);
  CHECK(static_cast<double>(with_init.loss) == doctest::Approx(ln_v).epsilon(0.10));

  // The tied projection makes all logits zero when the embedding is zeroed,
  // so the loss is exactly the uniform cross-entropy.
  params.token_embedding.setZero();
  const auto uniform = forward_denoise(params, masked, target);
  CHECK(static_cast<double>(uniform.loss) == doctest::Approx(ln_v).epsilon(1e-5));

  CHECK_THROWS_AS(forward_denoise(params, std::vector<int>{}, target), EmptySequenceError);
  CHECK_THROWS_AS(forward_denoise(params, masked, std::vector<int>{}), EmptySequenceError);
}

TEST_CASE("attention rows are normalized everywhere") {
  const Vocabulary vocab = sample_vocab();
  ModelConfig cfg;
  cfg.vocab_size = vocab.size();
  const auto params = init_model<float>(cfg, 9);
  const std::vector<int> target = tokenize(split_selfies(selfies_of("CCOC(=O)OCC")), vocab);
  std::vector<int> masked = target;
  masked[1] = kMaskId;
  AttentionTrace<float> trace;
  forward_denoise(params, masked, target, &trace);
  const auto check_rows = [](const std::vector<std::vector<Matrix<float>>>& group) {
    CHECK(!group.empty());
    for (const auto& heads : group) {
      CHECK(!heads.empty());
      for (const auto& a : heads)
        for (long i = 0; i < a.rows(); ++i)
          CHECK(std::abs(a.row(i).sum() - 1.0f) <= 1e-6f);
    }
  };
  check_rows(trace.encoder_self);
  check_rows(trace.decoder_self);
  check_rows(trace.decoder_cross);
}

TEST_CASE("analytic gradients match central finite differences") {
  const Vocabulary vocab = sample_vocab();
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.n_layers_enc = 1;
  cfg.n_layers_dec = 1;
  cfg.d_ff = 16;
  cfg.max_len = 32;
  cfg.vocab_size = vocab.size();
  auto params = init_model<double>(cfg, 21);

  const std::vector<int> target = tokenize(split_selfies(selfies_of("CC(C)=O")), vocab);
  std::vector<int> masked = target;
  masked[2] = kMaskId;

  ModelParams<double> grads = zeros_like(params);
  backward_denoise(params, masked, target, grads);

  std::vector<std::string> names;
  std::vector<Matrix<double>*> pt;
  for_each_tensor(params, [&](const std::string& n, Matrix<double>& t) {
    names.push_back(n);
    pt.push_back(&t);
  });
  std::vector<const Matrix<double>*> gt = tensor_list(grads);
  REQUIRE(pt.size() == gt.size());

  const double h = 1e-5;
  Rng coords(2026);
  for (std::size_t k = 0; k < pt.size(); ++k) {
    Matrix<double>& theta = *pt[k];
    const int size = static_cast<int>(theta.size());
    const std::vector<int> probe = coords.sample_indices(size, std::min(64, size));
    for (const int idx : probe) {
      double* slot = theta.data() + idx;
      const double saved = *slot;
      *slot = saved + h;
      const double up = forward_denoise(params, masked, target).loss;
      *slot = saved - h;
      const double down = forward_denoise(params, masked, target).loss;
      *slot = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = gt[k]->data()[idx];
      const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      CAPTURE(names[k]);
      CAPTURE(idx);
      CHECK(std::abs(numeric - analytic) / scale <= 1e-4);
    }
  }
}

TEST_CASE("backward stays finite without any masked positions") {
  const Vocabulary vocab = sample_vocab();
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.n_layers_enc = 1;
  cfg.n_layers_dec = 1;
  cfg.d_ff = 16;
  cfg.vocab_size = vocab.size();
  const auto params = init_model<float>(cfg, 2);
  const std::vector<int> target = tokenize(split_selfies(selfies_of("C=C")), vocab);
  ModelParams<float> grads = zeros_like(params);
  backward_denoise(params, target, target, grads);
  for_each_tensor(grads,
                  [](const std::string&, const Matrix<float>& t) { CHECK(t.allFinite()); });
}

TEST_CASE("a single repeated sample is memorized inside 200 steps") {
  const Vocabulary vocab = sample_vocab();
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.n_layers_enc = 1;
  cfg.n_layers_dec = 1;
  cfg.d_ff = 32;
  cfg.vocab_size = vocab.size();
  TrainConfig tc;
  tc.epochs = 200;
  tc.batch_size = 1;
  tc.learning_rate = 0.01;
  tc.seed = 4;
  const auto run = pretrain<float>({selfies_of("CC(C)=O")}, vocab, cfg, tc);
  REQUIRE(run.report.epoch_loss.size() == 200);
  CHECK(run.report.epoch_loss.back() < 0.1 * run.report.epoch_loss.front());
}

TEST_CASE("pretraining is reproducible and reports sane statistics") {
  const Vocabulary vocab = sample_vocab();
  ModelConfig cfg;
  cfg.d_model = 32;
  cfg.d_ff = 32;
  cfg.vocab_size = vocab.size();
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 4;
  tc.seed = 77;
  const auto corpus = sample_selfies();
  const auto a = pretrain<float>(corpus, vocab, cfg, tc);
  const auto b = pretrain<float>(corpus, vocab, cfg, tc);
  CHECK(params_identical(a.params, b.params));
  REQUIRE(a.report.epoch_loss.size() == 3);
  REQUIRE(a.report.epoch_mask_accuracy.size() == 3);
  for (const double l : a.report.epoch_loss) {
    CHECK(std::isfinite(l));
    CHECK(l >= 0.0);
  }
  for (const double acc : a.report.epoch_mask_accuracy) {
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
  }
  for_each_tensor(a.params,
                  [](const std::string&, const Matrix<float>& t) { CHECK(t.allFinite()); });

  TrainConfig other = tc;
  other.seed = 78;
  CHECK_FALSE(params_identical(a.params, pretrain<float>(corpus, vocab, cfg, other).params));

  CHECK_THROWS_AS(pretrain<float>({}, vocab, cfg, tc), EmptyCorpusError);
  ModelConfig mismatched = cfg;
  mismatched.vocab_size = vocab.size() + 1;
  CHECK_THROWS_AS(pretrain<float>(corpus, vocab, mismatched, tc), ConfigError);
}

TEST_CASE("zero epochs of pretraining return the initialization") {
  const Vocabulary vocab = sample_vocab();
  ModelConfig cfg;
  cfg.vocab_size = vocab.size();
  TrainConfig tc;
  tc.epochs = 0;
  tc.seed = 123;
  const auto run = pretrain<float>(sample_selfies(), vocab, cfg, tc);
  CHECK(run.report.epoch_loss.empty());
  CHECK(params_identical(run.params, init_model<float>(cfg, tc.seed)));
}

TEST_CASE("molecule embeddings are isomorphism-invariant") {
  const Vocabulary vocab = sample_vocab();
  ModelConfig cfg;
  cfg.vocab_size = vocab.size();
  const auto params = init_model<float>(cfg, 31);
  const Eigen::VectorXd a = embed_molecule(params, vocab, "CCO");
  const Eigen::VectorXd b = embed_molecule(params, vocab, "OCC");
  CHECK(a.size() == cfg.d_model);
  CHECK(a.allFinite());
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(embed_molecule(params, vocab, "C("), SyntaxError);

  // BOS pooling is a distinct, still deterministic representation.
  ModelConfig bos_cfg = cfg;
  bos_cfg.pooling = "bos";
  const auto bos_params = init_model<float>(bos_cfg, 31);
  const Eigen::VectorXd c = embed_molecule(bos_params, vocab, "CCO");
  CHECK(c.size() == cfg.d_model);
  CHECK((c - a).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("model bundles round trip bit-exactly and validate on load") {
  const Vocabulary vocab = sample_vocab();
  ModelConfig cfg;
  cfg.d_model = 32;
  cfg.d_ff = 48;
  cfg.vocab_size = vocab.size();
  const auto params = init_model<float>(cfg, 63);
  TrainConfig tc;
  tc.epochs = 2;
  TrainReport report;
  report.epoch_loss = {2.5, 1.25};
  report.epoch_mask_accuracy = {0.25, 0.5};

  const auto dir = std::filesystem::temp_directory_path() /
                   ("elyte_bundle_test_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  save_bundle(params, vocab, dir, &tc, &report);
  const Bundle loaded = load_bundle(dir);
  CHECK(params_identical(params, loaded.params));
  CHECK(loaded.params.config.d_model == cfg.d_model);
  CHECK(loaded.params.config.pooling == cfg.pooling);
  CHECK(loaded.vocab.size() == vocab.size());
  for (int id = 0; id < vocab.size(); ++id) CHECK(loaded.vocab.token_of(id) == vocab.token_of(id));

  // Embeddings computed from the reloaded bundle are bit-identical.
  CHECK((embed_molecule(params, vocab, "CCO") - embed_molecule(loaded.params, loaded.vocab, "CCO"))
            .cwiseAbs()
            .maxCoeff() == 0.0);

  const auto wpath = dir / "weights.bin";
  const auto original_size = std::filesystem::file_size(wpath);
  std::filesystem::resize_file(wpath, original_size - 4);
  CHECK_THROWS_AS(load_bundle(dir), IoError);
  std::filesystem::resize_file(wpath, original_size + 4);
  CHECK_THROWS_AS(load_bundle(dir), IoError);

  {
    std::ofstream bad(dir / "config.json", std::ios::binary);
    bad << "{ not json";
  }
  CHECK_THROWS_AS(load_bundle(dir), SchemaError);

  CHECK_THROWS_AS(load_bundle(dir / "missing"), IoError);
  std::filesystem::remove_all(dir);
}
