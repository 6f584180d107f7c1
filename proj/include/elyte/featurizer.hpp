#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace elyte {

struct Component {
  std::string smiles;
  double fraction = 0.0;  // mole fraction in [0,1]
};

struct Formulation {
  std::string id;
  std::vector<Component> components;
  std::optional<double> target;
};

using EmbedFn = std::function<Eigen::VectorXd(const std::string&)>;

// SA = sum_i c_i * r_i. Components are sorted by (smiles, fraction) and the
// coordinates accumulated with Kahan compensation, so any input ordering of
// the same multiset gives a bit-identical vector. strict mode enforces
// sum(c) within 1e-3 of 1 (FractionSumError; sums near 100 get a hint that
// the values look like percentages). Negative fractions -> FractionError,
// no components -> EmptyInputError, inconsistent embedding widths ->
// DimensionMismatchError.
Eigen::VectorXd featurize(const Formulation& f, const EmbedFn& embed, bool strict = true);

struct FeaturizedDataset {
  std::vector<std::string> ids;  // row order = input order
  Eigen::MatrixXd features;     // N x d
  Eigen::VectorXd targets;      // N
};

// Row per formulation in input order; each distinct SMILES is embedded
// exactly once (per-call cache). Throws MissingTargetError naming the first
// formulation without a target.
FeaturizedDataset featurize_dataset(const std::vector<Formulation>& ds, const EmbedFn& embed,
                                    bool strict = true);

// CSV with header formulation_id,f0..f{d-1},target; doubles at round-trip
// precision. Throws IoError.
void write_feature_csv(const FeaturizedDataset& ds, const std::filesystem::path& path);

}  // namespace elyte
