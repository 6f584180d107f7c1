// Command line front end: pretrain a molecular encoder, embed single
// molecules, train/apply/evaluate the downstream property regressor.
// Exit codes: 0 success, 1 invalid input, 2 internal failure.

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "elyte/errors.hpp"
#include "elyte/pipeline.hpp"
#include "elyte/text.hpp"
#include "elyte/transformer.hpp"

namespace {

int cmd_pretrain(const std::string& corpus, const std::string& config, const std::string& out,
                 std::uint64_t seed) {
  elyte::PretrainFileConfig cfg = elyte::load_pretrain_config(config);
  cfg.training.seed = seed;
  const elyte::PretrainOutcome outcome = elyte::run_pretrain(corpus, cfg.model, cfg.training, out);
  std::cout << "pretrained on " << outcome.corpus_molecules << " molecules (vocabulary "
            << outcome.vocab_size << ") for " << outcome.report.epoch_loss.size() << " epochs\n";
  if (!outcome.report.epoch_loss.empty()) {
    std::cout << "final denoising loss " << elyte::format_double(outcome.report.epoch_loss.back())
              << ", mask accuracy "
              << elyte::format_double(outcome.report.epoch_mask_accuracy.back()) << "\n";
  }
  std::cout << "model bundle written to " << out << "\n";
  return 0;
}

int cmd_embed(const std::string& model, const std::string& smiles) {
  const elyte::Bundle bundle = elyte::load_bundle(model);
  const Eigen::VectorXd v = elyte::embed_molecule(bundle.params, bundle.vocab, smiles);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i > 0) std::cout << ' ';
    std::cout << elyte::format_double(v(i));
  }
  std::cout << '\n';
  return 0;
}

int cmd_train(const std::string& model, const std::string& dataset, const std::string& out,
              std::uint64_t split_seed, int search_trials, std::uint64_t search_seed,
              bool log10_target) {
  elyte::SearchConfig search;
  search.trials = search_trials;
  search.seed = search_seed;
  const elyte::RunReport rep =
      elyte::run_train(model, dataset, split_seed, search, out, log10_target);
  std::cout << "trained on " << rep.n_train << " formulations, evaluated on " << rep.n_test
            << "\n";
  std::cout << "test rmse " << elyte::display_rmse(rep.eval.rmse_value) << " (cv best "
            << elyte::display_rmse(rep.best_cv_rmse) << ")\n";
  std::cout << "artifacts written to " << out << "\n";
  return 0;
}

int cmd_predict(const std::string& model, const std::string& regressor, const std::string& dataset,
                const std::string& out) {
  elyte::run_predict(model, regressor, dataset, out);
  std::cout << "predictions written to " << out << "\n";
  return 0;
}

int cmd_evaluate(const std::string& model, const std::string& regressor,
                 const std::string& dataset, const std::string& out) {
  const elyte::EvalReport rep = elyte::run_evaluate(model, regressor, dataset, out);
  std::cout << "rmse " << elyte::display_rmse(rep.rmse_value) << " over " << rep.parity.size()
            << " formulations\n";
  std::cout << "parity data written to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"molecular pretraining and electrolyte formulation property regression"};
  app.require_subcommand(1);

  std::string corpus;
  std::string config;
  std::string out;
  std::string model;
  std::string dataset;
  std::string regressor;
  std::string smiles;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  std::uint64_t search_seed = 0;
  int search_trials = 50;
  bool log10_target = false;

  CLI::App* pre = app.add_subcommand("pretrain", "pretrain the denoising encoder on a corpus");
  pre->add_option("--corpus", corpus, "corpus file, one SMILES per line")->required();
  pre->add_option("--config", config, "JSON model/training configuration")->required();
  pre->add_option("--out", out, "output bundle directory (must not exist)")->required();
  pre->add_option("--seed", seed, "pretraining seed");

  CLI::App* emb = app.add_subcommand("embed", "print a molecule's embedding");
  emb->add_option("--model", model, "model bundle directory")->required();
  emb->add_option("--smiles", smiles, "molecule to embed")->required();

  CLI::App* trn = app.add_subcommand("train", "fit the property regressor on a dataset");
  trn->add_option("--model", model, "model bundle directory")->required();
  trn->add_option("--dataset", dataset, "labeled formulation CSV")->required();
  trn->add_option("--out", out, "output directory (must not exist)")->required();
  trn->add_option("--split-seed", split_seed, "train/test split seed");
  trn->add_option("--search-trials", search_trials, "random search trials");
  trn->add_option("--search-seed", search_seed, "random search seed");
  trn->add_flag("--log10-target", log10_target, "ingest log10 of the target column");

  CLI::App* prd = app.add_subcommand("predict", "predict targets for unlabeled formulations");
  prd->add_option("--model", model, "model bundle directory")->required();
  prd->add_option("--regressor", regressor, "ensemble JSON file")->required();
  prd->add_option("--dataset", dataset, "unlabeled formulation CSV")->required();
  prd->add_option("--out", out, "output prediction CSV")->required();

  CLI::App* evl = app.add_subcommand("evaluate", "score a labeled dataset and export parity data");
  evl->add_option("--model", model, "model bundle directory")->required();
  evl->add_option("--regressor", regressor, "ensemble JSON file")->required();
  evl->add_option("--dataset", dataset, "labeled formulation CSV")->required();
  evl->add_option("--out", out, "output parity CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*pre) return cmd_pretrain(corpus, config, out, seed);
    if (*emb) return cmd_embed(model, smiles);
    if (*trn) return cmd_train(model, dataset, out, split_seed, search_trials, search_seed,
                               log10_target);
    if (*prd) return cmd_predict(model, regressor, dataset, out);
    if (*evl) return cmd_evaluate(model, regressor, dataset, out);
    std::cerr << "error: no subcommand selected\n";
    return 1;
  } catch (const elyte::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
}
