#include "elyte/featurizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>
#include <utility>

#include "elyte/errors.hpp"
#include "elyte/text.hpp"

namespace elyte {

namespace {

constexpr double kSumEps = 1e-3;

void validate_fractions(const Formulation& f, bool strict) {
  if (f.components.empty())
    throw EmptyInputError("formulation \"" + f.id + "\" has no components");
  double sum = 0.0;
  for (const Component& c : f.components) {
    if (!(c.fraction >= 0.0) || !std::isfinite(c.fraction))
      throw FractionError("formulation \"" + f.id + "\": fraction " +
                          format_double(c.fraction) + " for " + c.smiles +
                          " must be a finite value >= 0");
    sum += c.fraction;
  }
  if (!strict) return;
  if (std::abs(sum - 1.0) <= kSumEps) return;
  if (std::abs(sum - 100.0) <= 100.0 * kSumEps)
    throw FractionSumError("formulation \"" + f.id + "\": fractions sum to " +
                           format_double(sum) +
                           " and look like percentages; supply mole fractions summing to 1");
  throw FractionSumError("formulation \"" + f.id + "\": fractions sum to " + format_double(sum) +
                         ", expected 1 within " + format_double(kSumEps));
}

}  // namespace

Eigen::VectorXd featurize(const Formulation& f, const EmbedFn& embed, bool strict) {
  validate_fractions(f, strict);
  std::vector<const Component*> order;
  order.reserve(f.components.size());
  for (const Component& c : f.components) order.push_back(&c);
  std::sort(order.begin(), order.end(), [](const Component* a, const Component* b) {
    return a->smiles != b->smiles ? a->smiles < b->smiles : a->fraction < b->fraction;
  });
  Eigen::VectorXd sum;
  Eigen::VectorXd carry;
  for (const Component* c : order) {
    const Eigen::VectorXd r = embed(c->smiles);
    if (sum.size() == 0) {
      sum = Eigen::VectorXd::Zero(r.size());
      carry = Eigen::VectorXd::Zero(r.size());
    } else if (r.size() != sum.size()) {
      throw DimensionMismatchError("formulation \"" + f.id + "\": embedding of " + c->smiles +
                                   " has length " + std::to_string(r.size()) + ", expected " +
                                   std::to_string(sum.size()));
    }
    for (Eigen::Index j = 0; j < r.size(); ++j) {
      const double term = c->fraction * r(j) - carry(j);
      const double next = sum(j) + term;
      carry(j) = (next - sum(j)) - term;
      sum(j) = next;
    }
  }
  return sum;
}

FeaturizedDataset featurize_dataset(const std::vector<Formulation>& ds, const EmbedFn& embed,
                                    bool strict) {
  for (const Formulation& f : ds)
    if (!f.target.has_value())
      throw MissingTargetError("formulation \"" + f.id + "\" has no target value");
  std::unordered_map<std::string, Eigen::VectorXd> cache;
  const EmbedFn cached = [&](const std::string& smiles) {
    const auto it = cache.find(smiles);
    if (it != cache.end()) return it->second;
    return cache.emplace(smiles, embed(smiles)).first->second;
  };
  FeaturizedDataset out;
  out.ids.reserve(ds.size());
  out.targets.resize(static_cast<Eigen::Index>(ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Eigen::VectorXd sa = featurize(ds[i], cached, strict);
    if (out.features.size() == 0)
      out.features.resize(static_cast<Eigen::Index>(ds.size()), sa.size());
    out.features.row(static_cast<Eigen::Index>(i)) = sa.transpose();
    out.targets(static_cast<Eigen::Index>(i)) = *ds[i].target;
    out.ids.push_back(ds[i].id);
  }
  return out;
}

void write_feature_csv(const FeaturizedDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "formulation_id";
  for (Eigen::Index j = 0; j < ds.features.cols(); ++j) out << ",f" << j;
  out << ",target\n";
  for (std::size_t i = 0; i < ds.ids.size(); ++i) {
    out << ds.ids[i];
    const auto row = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j)
      out << ',' << format_double(ds.features(row, j));
    out << ',' << format_double(ds.targets(row)) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace elyte
