#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace elyte {

struct GbtHyperparams {
  int n_trees = 100;
  int max_depth = 3;
  double learning_rate = 0.1;       // (0, 1]
  int min_samples_leaf = 1;
  double l2_leaf_penalty = 0.0;     // >= 0
  double subsample_fraction = 1.0;  // (0, 1]
  std::uint64_t seed = 0;

  // Throws ConfigError when any range above is violated.
  void validate() const;
};

// Flat node array, root at index 0, children index-linked. Leaves carry
// feature = -1 and a value; internal nodes route x[feature] < threshold to
// left, otherwise right.
struct GbtNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct GbtTree {
  std::vector<GbtNode> nodes;
};

struct GbtEnsemble {
  double base_prediction = 0.0;  // training-target mean
  double learning_rate = 1.0;
  int n_features = 0;
  std::vector<GbtTree> trees;
};

struct FitTrace {
  std::vector<double> train_rmse;  // ensemble training RMSE after each tree
};

// First-order gradient boosting on squared error. Each tree fits the current
// residuals with exact greedy splits: the (feature, midpoint-threshold) pair
// maximizing sum(r)^2/(count+lambda) gain, ties broken by lowest feature
// then lowest threshold, children kept only when both hold at least
// min_samples_leaf rows and the gain is strictly positive. Leaf value =
// sum(residuals)/(count+lambda). Fitting stops early once residuals are
// exactly zero, so constant targets (or a single sample) give a base-only
// model rather than an error. Subsampling draws distinct rows per tree from
// a generator seeded by hp.seed. Throws EmptyInputError for N=0,
// DimensionMismatchError for shape mismatches, SchemaError for non-finite
// data.
GbtEnsemble fit_gbt(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GbtHyperparams& hp,
                    FitTrace* trace = nullptr);

// base + learning_rate * sum of leaf values. Throws DimensionMismatchError.
double predict(const GbtEnsemble& e, const Eigen::VectorXd& x);
Eigen::VectorXd predict_all(const GbtEnsemble& e, const Eigen::MatrixXd& x);

// sqrt(mean((actual - predicted)^2)). Throws EmptyInputError on no pairs.
double rmse(const std::vector<std::pair<double, double>>& pairs);

// Uniform sampling ranges; learning_rate is drawn log-uniformly.
struct SearchSpace {
  std::pair<int, int> n_trees{50, 500};
  std::pair<int, int> max_depth{2, 6};
  std::pair<double, double> learning_rate{0.01, 0.3};
  std::pair<double, double> l2_leaf_penalty{0.0, 10.0};
  std::pair<double, double> subsample_fraction{0.6, 1.0};
  std::pair<int, int> min_samples_leaf{1, 5};
};

struct TrialResult {
  GbtHyperparams params;
  double cv_rmse = 0.0;  // NaN when the trial failed
  std::string error;     // empty when the trial succeeded
};

struct SearchResult {
  GbtHyperparams best;
  double best_rmse = 0.0;
  std::vector<TrialResult> log;
};

// Seeded uniform random search scored by k-fold cross-validated RMSE pooled
// over held-out rows; folds are a seeded shuffle split round-robin. Each
// trial samples from an independent stream forked off the seed, so the whole
// log replays bit-identically. Failed trials are logged and skipped; if all
// trials fail the last error is rethrown. Throws ConfigError (trials < 1 or
// folds < 2), TooFewSamplesError (N < folds), DimensionMismatchError.
SearchResult random_search(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           const SearchSpace& space, int trials, int folds, std::uint64_t seed);

// JSON document with base_prediction, learning_rate, n_features and a flat
// node array per tree; doubles at round-trip precision, so save -> load ->
// predict is bit-identical. load validates structure and index bounds
// (SchemaError) and file access (IoError).
void save_ensemble(const GbtEnsemble& e, const std::filesystem::path& path);
GbtEnsemble load_ensemble(const std::filesystem::path& path);

}  // namespace elyte
