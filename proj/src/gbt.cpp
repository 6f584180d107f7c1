#include "elyte/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "elyte/errors.hpp"
#include "elyte/rng.hpp"

namespace elyte {

namespace {

using json = nlohmann::json;

// Greedy CART-style regression tree over a row subset of (x, residual).
class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& x, const Eigen::VectorXd& residual, const GbtHyperparams& hp)
      : x_(x), residual_(residual), hp_(hp) {}

  GbtTree build(std::vector<int> rows) {
    GbtTree tree;
    grow(tree, std::move(rows), 0);
    return tree;
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
  };

  double leaf_value(const std::vector<int>& rows) const {
    double sum = 0.0;
    for (int r : rows) sum += residual_(r);
    return sum / (static_cast<double>(rows.size()) + hp_.l2_leaf_penalty);
  }

  Split best_split(const std::vector<int>& rows) const {
    const int n = static_cast<int>(rows.size());
    const double lambda = hp_.l2_leaf_penalty;
    double total = 0.0;
    for (int r : rows) total += residual_(r);
    const double parent_score = total * total / (n + lambda);

    Split best;
    std::vector<int> order;
    std::vector<double> prefix(static_cast<std::size_t>(n) + 1, 0.0);
    for (int f = 0; f < x_.cols(); ++f) {
      order = rows;
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        return std::make_pair(x_(a, f), a) < std::make_pair(x_(b, f), b);
      });
      for (int k = 0; k < n; ++k) prefix[k + 1] = prefix[k] + residual_(order[k]);
      // Candidate thresholds: midpoints between consecutive distinct values,
      // enumerated in ascending order so the first strict improvement wins
      // and ties resolve to the lowest feature, then the lowest threshold.
      for (int k = 1; k < n; ++k) {
        const double lo = x_(order[k - 1], f);
        const double hi = x_(order[k], f);
        if (!(lo < hi)) continue;
        const int n_left = k;
        const int n_right = n - k;
        if (n_left < hp_.min_samples_leaf || n_right < hp_.min_samples_leaf) continue;
        const double sum_left = prefix[k];
        const double sum_right = total - sum_left;
        const double gain = sum_left * sum_left / (n_left + lambda) +
                            sum_right * sum_right / (n_right + lambda) - parent_score;
        if (gain > best.gain) best = Split{f, lo + (hi - lo) / 2.0, gain};
      }
    }
    return best;
  }

  int grow(GbtTree& tree, std::vector<int> rows, int depth) {
    const int idx = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    Split split;
    if (depth < hp_.max_depth && static_cast<int>(rows.size()) >= 2 * hp_.min_samples_leaf) {
      split = best_split(rows);
    }
    if (split.feature < 0) {
      tree.nodes[idx].value = leaf_value(rows);
      return idx;
    }
    std::vector<int> left_rows;
    std::vector<int> right_rows;
    for (int r : rows) {
      (x_(r, split.feature) < split.threshold ? left_rows : right_rows).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    const int left = grow(tree, std::move(left_rows), depth + 1);
    const int right = grow(tree, std::move(right_rows), depth + 1);
    tree.nodes[idx].feature = split.feature;
    tree.nodes[idx].threshold = split.threshold;
    tree.nodes[idx].left = left;
    tree.nodes[idx].right = right;
    return idx;
  }

  const Eigen::MatrixXd& x_;
  const Eigen::VectorXd& residual_;
  const GbtHyperparams& hp_;
};

double tree_value(const GbtTree& tree, const Eigen::VectorXd& x) {
  int i = 0;
  while (tree.nodes[i].feature >= 0) {
    const GbtNode& node = tree.nodes[i];
    i = x(node.feature) < node.threshold ? node.left : node.right;
  }
  return tree.nodes[i].value;
}

json node_to_json(const GbtNode& node) {
  if (node.feature < 0) return json{{"value", node.value}};
  return json{{"feature", node.feature},
              {"threshold", node.threshold},
              {"left", node.left},
              {"right", node.right}};
}

GbtNode node_from_json(const json& j, int n_nodes, int n_features) {
  GbtNode node;
  if (j.contains("feature")) {
    node.feature = j.at("feature").get<int>();
    node.threshold = j.at("threshold").get<double>();
    node.left = j.at("left").get<int>();
    node.right = j.at("right").get<int>();
    if (node.feature < 0 || node.feature >= n_features) {
      throw SchemaError("ensemble node references feature " + std::to_string(node.feature) +
                        " outside [0, " + std::to_string(n_features) + ")");
    }
    if (node.left < 0 || node.left >= n_nodes || node.right < 0 || node.right >= n_nodes) {
      throw SchemaError("ensemble node child index out of range");
    }
  } else {
    node.value = j.at("value").get<double>();
  }
  return node;
}

}  // namespace

void GbtHyperparams::validate() const {
  if (n_trees < 1) throw ConfigError("n_trees must be >= 1");
  if (max_depth < 1) throw ConfigError("max_depth must be >= 1");
  if (!(learning_rate > 0.0) || learning_rate > 1.0) {
    throw ConfigError("learning_rate must lie in (0, 1]");
  }
  if (min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be >= 1");
  if (!(l2_leaf_penalty >= 0.0)) throw ConfigError("l2_leaf_penalty must be >= 0");
  if (!(subsample_fraction > 0.0) || subsample_fraction > 1.0) {
    throw ConfigError("subsample_fraction must lie in (0, 1]");
  }
}

GbtEnsemble fit_gbt(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GbtHyperparams& hp,
                    FitTrace* trace) {
  hp.validate();
  if (x.rows() != y.size()) {
    throw DimensionMismatchError("feature matrix has " + std::to_string(x.rows()) +
                                 " rows but " + std::to_string(y.size()) + " targets given");
  }
  const int n = static_cast<int>(x.rows());
  if (n == 0) throw EmptyInputError("cannot fit a regressor on an empty dataset");
  if (!x.allFinite() || !y.allFinite()) {
    throw SchemaError("training data contains non-finite values");
  }

  GbtEnsemble ensemble;
  ensemble.base_prediction = y.mean();
  ensemble.learning_rate = hp.learning_rate;
  ensemble.n_features = static_cast<int>(x.cols());

  Eigen::VectorXd residual = y.array() - ensemble.base_prediction;
  Rng rng(hp.seed);
  std::vector<int> all_rows(static_cast<std::size_t>(n));
  std::iota(all_rows.begin(), all_rows.end(), 0);

  for (int t = 0; t < hp.n_trees; ++t) {
    // Exactly-zero residuals leave nothing to fit: single samples and
    // constant targets stop here with a base-only model.
    if (residual.cwiseAbs().maxCoeff() == 0.0) break;

    std::vector<int> rows;
    if (hp.subsample_fraction < 1.0) {
      const int k = std::max(1, static_cast<int>(std::llround(hp.subsample_fraction * n)));
      rows = rng.sample_indices(n, k);
      std::sort(rows.begin(), rows.end());
    } else {
      rows = all_rows;
    }

    TreeBuilder builder(x, residual, hp);
    ensemble.trees.push_back(builder.build(std::move(rows)));
    const GbtTree& tree = ensemble.trees.back();
    for (int i = 0; i < n; ++i) {
      residual(i) -= hp.learning_rate * tree_value(tree, x.row(i).transpose());
    }
    if (trace != nullptr) {
      trace->train_rmse.push_back(std::sqrt(residual.squaredNorm() / n));
    }
  }
  return ensemble;
}

double predict(const GbtEnsemble& e, const Eigen::VectorXd& x) {
  if (x.size() != e.n_features) {
    throw DimensionMismatchError("regressor expects " + std::to_string(e.n_features) +
                                 " features, got " + std::to_string(x.size()));
  }
  double acc = e.base_prediction;
  for (const GbtTree& tree : e.trees) acc += e.learning_rate * tree_value(tree, x);
  return acc;
}

Eigen::VectorXd predict_all(const GbtEnsemble& e, const Eigen::MatrixXd& x) {
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = predict(e, x.row(i).transpose());
  return out;
}

double rmse(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.empty()) throw EmptyInputError("rmse needs at least one (actual, predicted) pair");
  double ss = 0.0;
  for (const auto& [actual, predicted] : pairs) {
    const double d = actual - predicted;
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(pairs.size()));
}

SearchResult random_search(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           const SearchSpace& space, int trials, int folds, std::uint64_t seed) {
  if (trials < 1) throw ConfigError("search needs at least one trial");
  if (folds < 2) throw ConfigError("cross-validation needs at least two folds");
  if (x.rows() != y.size()) {
    throw DimensionMismatchError("feature matrix has " + std::to_string(x.rows()) +
                                 " rows but " + std::to_string(y.size()) + " targets given");
  }
  const int n = static_cast<int>(x.rows());
  if (n < folds) {
    throw TooFewSamplesError("cannot split " + std::to_string(n) + " samples into " +
                             std::to_string(folds) + " folds");
  }

  Rng root(seed);
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng fold_rng = root.fork(0);
  fold_rng.shuffle(perm);
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) fold_of[perm[i]] = i % folds;

  SearchResult result;
  result.best_rmse = std::numeric_limits<double>::infinity();
  std::string last_error;

  for (int t = 0; t < trials; ++t) {
    Rng trial_rng = root.fork(static_cast<std::uint64_t>(t) + 1);
    GbtHyperparams hp;
    hp.n_trees = static_cast<int>(trial_rng.next_int(space.n_trees.first, space.n_trees.second));
    hp.max_depth =
        static_cast<int>(trial_rng.next_int(space.max_depth.first, space.max_depth.second));
    hp.learning_rate = trial_rng.log_uniform(space.learning_rate.first, space.learning_rate.second);
    hp.l2_leaf_penalty =
        trial_rng.uniform(space.l2_leaf_penalty.first, space.l2_leaf_penalty.second);
    hp.subsample_fraction =
        trial_rng.uniform(space.subsample_fraction.first, space.subsample_fraction.second);
    hp.min_samples_leaf = static_cast<int>(
        trial_rng.next_int(space.min_samples_leaf.first, space.min_samples_leaf.second));
    hp.seed = trial_rng.next_u64();

    TrialResult trial{hp, std::numeric_limits<double>::quiet_NaN(), ""};
    try {
      double ss = 0.0;
      for (int f = 0; f < folds; ++f) {
        std::vector<int> train_rows;
        std::vector<int> test_rows;
        for (int i = 0; i < n; ++i) (fold_of[i] == f ? test_rows : train_rows).push_back(i);
        Eigen::MatrixXd x_train(train_rows.size(), x.cols());
        Eigen::VectorXd y_train(train_rows.size());
        for (std::size_t i = 0; i < train_rows.size(); ++i) {
          x_train.row(static_cast<Eigen::Index>(i)) = x.row(train_rows[i]);
          y_train(static_cast<Eigen::Index>(i)) = y(train_rows[i]);
        }
        const GbtEnsemble model = fit_gbt(x_train, y_train, hp);
        for (int i : test_rows) {
          const double d = y(i) - predict(model, x.row(i).transpose());
          ss += d * d;
        }
      }
      trial.cv_rmse = std::sqrt(ss / n);
      if (trial.cv_rmse < result.best_rmse) {
        result.best = hp;
        result.best_rmse = trial.cv_rmse;
      }
    } catch (const ValidationError& err) {
      trial.error = err.what();
      last_error = err.what();
    }
    result.log.push_back(std::move(trial));
  }

  if (!std::isfinite(result.best_rmse)) {
    throw ValidationError("all " + std::to_string(trials) +
                          " search trials failed; last error: " + last_error);
  }
  return result;
}

void save_ensemble(const GbtEnsemble& e, const std::filesystem::path& path) {
  json j;
  j["base_prediction"] = e.base_prediction;
  j["learning_rate"] = e.learning_rate;
  j["n_features"] = e.n_features;
  j["trees"] = json::array();
  for (const GbtTree& tree : e.trees) {
    json nodes = json::array();
    for (const GbtNode& node : tree.nodes) nodes.push_back(node_to_json(node));
    j["trees"].push_back(json{{"nodes", std::move(nodes)}});
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

GbtEnsemble load_ensemble(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  GbtEnsemble e;
  try {
    const json j = json::parse(in);
    e.base_prediction = j.at("base_prediction").get<double>();
    e.learning_rate = j.at("learning_rate").get<double>();
    e.n_features = j.at("n_features").get<int>();
    for (const json& jt : j.at("trees")) {
      GbtTree tree;
      const json& nodes = jt.at("nodes");
      if (nodes.empty()) throw SchemaError("ensemble tree has no nodes");
      for (const json& jn : nodes) {
        tree.nodes.push_back(node_from_json(jn, static_cast<int>(nodes.size()), e.n_features));
      }
      e.trees.push_back(std::move(tree));
    }
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& err) {
    throw SchemaError("malformed ensemble file " + path.string() + ": " + err.what());
  }
  if (e.n_features < 0) throw SchemaError("ensemble n_features must be non-negative");
  return e;
}

}  // namespace elyte
