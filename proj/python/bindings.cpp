// Python bindings: string codecs, model bundles and the pipeline entry
// points, mirroring the CLI surface.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "elyte/chem.hpp"
#include "elyte/errors.hpp"
#include "elyte/featurizer.hpp"
#include "elyte/pipeline.hpp"
#include "elyte/selfies.hpp"
#include "elyte/smiles.hpp"
#include "elyte/transformer.hpp"

namespace py = pybind11;
using namespace elyte;

namespace {

py::dict report_to_dict(const RunReport& r) {
  py::dict out;
  out["rmse"] = r.eval.rmse_value;
  out["n_total"] = r.n_total;
  out["n_train"] = r.n_train;
  out["n_test"] = r.n_test;
  out["best_cv_rmse"] = r.best_cv_rmse;
  py::list parity;
  for (const auto& p : r.eval.parity)
    parity.append(py::make_tuple(p.formulation_id, p.actual, p.predicted));
  out["parity"] = std::move(parity);
  return out;
}

Formulation formulation_from_pairs(const std::vector<std::pair<std::string, double>>& components) {
  Formulation f;
  f.id = "formulation";
  for (const auto& [smiles, fraction] : components) f.components.push_back({smiles, fraction});
  return f;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "molecular pretraining and electrolyte formulation property regression";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ValidationError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def(
      "canonical_smiles",
      [](const std::string& smiles) {
        const MolGraph g = parse_smiles(smiles);
        return write_smiles(apply_atom_order(g, canonical_atom_order(g)));
      },
      py::arg("smiles"), "Parse a SMILES string and rewrite it on canonical atom order.");

  m.def(
      "smiles_to_selfies",
      [](const std::string& smiles) { return encode_selfies(parse_smiles(smiles)); },
      py::arg("smiles"), "Encode a SMILES string as SELFIES.");

  m.def(
      "selfies_to_smiles",
      [](const std::string& selfies) { return write_smiles(decode_selfies(selfies)); },
      py::arg("selfies"), "Decode a SELFIES string and write it as SMILES.");

  m.def("selfies_tokens", &split_selfies, py::arg("selfies"),
        "Split a SELFIES string into its bracket tokens.");

  py::class_<Bundle, std::shared_ptr<Bundle>>(m, "Bundle",
                                              "A pretrained model loaded from a bundle directory.")
      .def_static(
          "load", [](const std::filesystem::path& dir) { return std::make_shared<Bundle>(load_bundle(dir)); },
          py::arg("model_dir"))
      .def_property_readonly("d_model",
                             [](const Bundle& b) { return b.params.config.d_model; })
      .def_property_readonly("vocab_size",
                             [](const Bundle& b) { return b.params.config.vocab_size; })
      .def(
          "embed",
          [](const Bundle& b, const std::string& smiles) {
            return embed_molecule(b.params, b.vocab, smiles);
          },
          py::arg("smiles"), "Pooled encoder representation of one molecule.")
      .def(
          "embed_formulation",
          [](const Bundle& b, const std::vector<std::pair<std::string, double>>& components) {
            const EmbedFn embed = [&b](const std::string& s) {
              return embed_molecule(b.params, b.vocab, s);
            };
            return featurize(formulation_from_pairs(components), embed);
          },
          py::arg("components"),
          "Mole-fraction-weighted sum of component representations; components\n"
          "is a list of (smiles, fraction) pairs whose fractions sum to 1.");

  m.def(
      "pretrain",
      [](const std::filesystem::path& corpus, const std::filesystem::path& config,
         const std::filesystem::path& out, std::uint64_t seed) {
        PretrainFileConfig cfg = load_pretrain_config(config);
        cfg.training.seed = seed;
        const PretrainOutcome outcome = run_pretrain(corpus, cfg.model, cfg.training, out);
        py::dict d;
        d["corpus_molecules"] = outcome.corpus_molecules;
        d["vocab_size"] = outcome.vocab_size;
        d["final_loss"] = outcome.report.epoch_loss.back();
        d["final_mask_accuracy"] = outcome.report.epoch_mask_accuracy.back();
        return d;
      },
      py::arg("corpus"), py::arg("config"), py::arg("out"), py::arg("seed") = 0,
      "Pretrain on a one-SMILES-per-line corpus and write a model bundle.");

  m.def(
      "train",
      [](const std::filesystem::path& model_dir, const std::filesystem::path& dataset,
         const std::filesystem::path& out, std::uint64_t split_seed, int search_trials,
         std::uint64_t search_seed, bool log10_target) {
        SearchConfig search;
        search.trials = search_trials;
        search.seed = search_seed;
        return report_to_dict(run_train(model_dir, dataset, split_seed, search, out, log10_target));
      },
      py::arg("model_dir"), py::arg("dataset"), py::arg("out"), py::arg("split_seed") = 0,
      py::arg("search_trials") = 50, py::arg("search_seed") = 0, py::arg("log10_target") = false,
      "Fit a regressor on formulation embeddings and write ensemble, report and search log.");

  m.def(
      "predict",
      [](const std::filesystem::path& model_dir, const std::filesystem::path& regressor,
         const std::filesystem::path& dataset, const std::filesystem::path& out) {
        run_predict(model_dir, regressor, dataset, out);
      },
      py::arg("model_dir"), py::arg("regressor"), py::arg("dataset"), py::arg("out"),
      "Predict targets for an unlabeled formulation CSV; writes formulation_id,prediction.");

  m.def(
      "evaluate",
      [](const std::filesystem::path& model_dir, const std::filesystem::path& regressor,
         const std::filesystem::path& dataset, const std::filesystem::path& out) {
        const EvalReport report = run_evaluate(model_dir, regressor, dataset, out);
        return report.rmse_value;
      },
      py::arg("model_dir"), py::arg("regressor"), py::arg("dataset"), py::arg("out"),
      "Evaluate a regressor on a labeled CSV, write the parity file, return the RMSE.");
}
