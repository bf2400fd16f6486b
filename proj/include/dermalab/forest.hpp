#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dermalab/error.hpp"

namespace dermalab {

enum class ForestTask { Regression, Classification };

struct ForestParams {
  int n_trees = 500;
  int max_depth = 0;          // 0 = unlimited
  int min_samples_leaf = 5;
  int features_per_split = 0; // 0 = ceil(sqrt(p)) for classification, ceil(p/3) for regression
  bool bootstrap = true;
  std::uint64_t seed = 0;

  static ForestParams regression();
  static ForestParams classification();

  int resolved_features(ForestTask task, int p) const;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int samples = 0;
  double impurity_decrease = 0.0;  // weighted by node size
  double value = 0.0;              // regression: mean target
  std::vector<double> counts;      // classification: class counts
  int vote = 0;                    // classification: majority class index

  bool leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;

  /// Index of the leaf reached by `row`.
  int leaf_index(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
};

struct ClassPrediction {
  int class_index = 0;
  double label = 0.0;
  Eigen::VectorXd probability;  // vote fractions, ordered as RandomForest::classes
};

class RandomForest {
 public:
  ForestTask task = ForestTask::Regression;
  ForestParams params;
  std::vector<std::string> feature_names;
  std::vector<double> classes;  // ascending labels for classification
  std::vector<Tree> trees;
  std::vector<std::vector<int>> oob_indices;

  int feature_count() const { return static_cast<int>(feature_names.size()); }

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
  ClassPrediction predict_class(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;

  /// Regression output, or the vote fraction of `class_index` for classifiers.
  double output(const Eigen::Ref<const Eigen::RowVectorXd>& row, int class_index = 0) const;

  std::string to_json() const;
  static RandomForest from_json(std::string_view text);
};

struct SplitIndices {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> test;
};

/// Seeded shuffle; the training part holds round(ratio * n) rows.
SplitIndices train_test_split(Eigen::Index n, double ratio, std::uint64_t seed);

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& idx);
Eigen::VectorXd take_rows(const Eigen::VectorXd& y, const std::vector<Eigen::Index>& idx);

/// Seed of tree `index` derived from the forest seed.
std::uint64_t tree_seed(std::uint64_t seed, std::uint64_t index);

/// Uniform integer in [0, bound) by rejection, so sequences are identical
/// across standard library implementations.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound);

RandomForest fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, ForestTask task,
                 const ForestParams& params, std::vector<std::string> feature_names = {});

double r2_score(const Eigen::VectorXd& truth, const Eigen::VectorXd& predicted);
double evaluate_regression(const RandomForest& model, const Eigen::MatrixXd& x,
                           const Eigen::VectorXd& y);

struct ClassificationReport {
  double accuracy = 0.0;
  std::vector<double> labels;  // ascending; rows are truth, columns predictions
  Eigen::MatrixXi confusion;
};

ClassificationReport evaluate_classification(const RandomForest& model, const Eigen::MatrixXd& x,
                                             const Eigen::VectorXd& y);

/// Mean decrease in impurity, per tree normalized, averaged, renormalized.
Eigen::VectorXd impurity_importance(const RandomForest& model);

struct ShapleyAttribution {
  Eigen::VectorXd phi;
  double base_value = 0.0;
  double prediction = 0.0;
};

inline constexpr int kMaxShapleyFeatures = 12;

/// Interventional Shapley values by enumeration of all 2^p coalitions.
/// v(S) averages the model over background rows with the features outside S
/// taken from the background row. Coalition values are collected per tree
/// as (required-in, required-out) leaf constraints, so the cost is one
/// traversal per (tree, background row) plus an O(p 3^p) transform.
ShapleyAttribution exact_shapley(const RandomForest& model,
                                 const Eigen::Ref<const Eigen::RowVectorXd>& row,
                                 const Eigen::MatrixXd& background, int class_index = 0);

/// v(S) for every coalition mask, as used by exact_shapley.
Eigen::VectorXd coalition_values(const RandomForest& model,
                                 const Eigen::Ref<const Eigen::RowVectorXd>& row,
                                 const Eigen::MatrixXd& background, int class_index = 0);

struct ShapPoint {
  int row = 0;
  int feature = 0;
  double shap = 0.0;
  double value = 0.0;
  double percentile = 0.0;  // of the feature value within the explained rows, in [0, 1]
};

std::vector<ShapPoint> shap_summary_points(const RandomForest& model, const Eigen::MatrixXd& rows,
                                           const Eigen::MatrixXd& background,
                                           int class_index = 0);

/// `shap_points.csv`: row,feature,shap,value,percentile.
std::string format_shap_points_csv(const RandomForest& model,
                                   const std::vector<ShapPoint>& points);

}  // namespace dermalab
