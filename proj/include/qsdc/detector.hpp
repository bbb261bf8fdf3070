#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace qsdc {

// Feature rows with integer class labels in [0, num_classes).
class LabeledDataset {
 public:
  LabeledDataset(std::size_t cols, std::size_t num_classes) : cols_(cols), num_classes_(num_classes) {}

  void add_row(std::span<const double> features, int label);

  [[nodiscard]] std::size_t rows() const { return labels_.size(); }
  [[nodiscard]] std::size_t cols() const { return cols_; }
  [[nodiscard]] std::size_t num_classes() const { return num_classes_; }
  [[nodiscard]] std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values_).subspan(i * cols_, cols_);
  }
  [[nodiscard]] double value(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }
  [[nodiscard]] int label(std::size_t i) const { return labels_[i]; }
  [[nodiscard]] const std::vector<int>& labels() const { return labels_; }

  /// w_k = N / (K * N_k) over the K classes present; absent classes get 0.
  [[nodiscard]] std::vector<double> balanced_class_weights() const;

 private:
  std::size_t cols_;
  std::size_t num_classes_;
  std::vector<double> values_;
  std::vector<int> labels_;
};

/// 1 - sum_k (m_k / M)^2. Throws ConfigError when all masses are zero.
[[nodiscard]] double gini_impurity(std::span<const double> class_mass);

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int parent = -1;
  std::vector<double> class_mass;  // weighted training mass per class
  std::size_t samples = 0;
  double impurity = 0.0;
  int prediction = 0;

  [[nodiscard]] bool is_leaf() const { return feature < 0; }
  [[nodiscard]] double mass() const;
};

/// Binary CART tree. Node 0 is the root; "x[feature] <= threshold" goes left.
struct DecisionTree {
  std::vector<TreeNode> nodes;
  std::size_t num_features = 0;
  std::size_t num_classes = 0;
  double ccp_alpha = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> feature_subset;  // features the fit was allowed to use

  [[nodiscard]] std::size_t node_count() const { return nodes.size(); }
  [[nodiscard]] std::size_t leaf_count() const;
  [[nodiscard]] std::size_t depth() const;
  // Sorted, distinct features tested by internal nodes.
  [[nodiscard]] std::vector<std::size_t> used_features() const;
};

/// Greedy CART on weighted Gini with balanced class weights. Candidate
/// thresholds are midpoints between consecutive distinct values; a node is
/// split whenever it is impure and some feature varies, taking the largest
/// impurity decrease (ties: lowest feature, then lowest threshold). The grown
/// tree is then pruned with ccp_prune(alpha). `feature_subset` restricts the
/// usable columns (empty = all). The seed is recorded but the fit is fully
/// deterministic.
[[nodiscard]] DecisionTree fit_tree(const LabeledDataset& data, double ccp_alpha, std::uint64_t seed = 0,
                                    std::span<const std::size_t> feature_subset = {});

/// Minimal cost-complexity pruning: repeatedly collapse the internal node
/// with the smallest effective alpha while it is <= alpha. Node risk is
/// (node mass / root mass) * impurity. alpha <= 0 leaves the tree unchanged.
[[nodiscard]] DecisionTree ccp_prune(const DecisionTree& tree, double alpha);

// Leaf class for one feature vector. Throws ConfigError if the vector is
// shorter than a tested feature index.
[[nodiscard]] int predict(const DecisionTree& tree, std::span<const double> x);

// Per-feature sum of (node mass * impurity decrease), unnormalized.
[[nodiscard]] std::vector<double> raw_importances(const DecisionTree& tree);
// raw_importances normalized to sum 1 (all zeros when the tree is a leaf).
[[nodiscard]] std::vector<double> gini_importances(const DecisionTree& tree);

// Weighted training accuracy implied by the leaves (sum of leaf majority
// mass over root mass).
[[nodiscard]] double weighted_training_accuracy(const DecisionTree& tree);

using FeatureNamer = std::function<std::string(std::size_t)>;
using ClassNamer = std::function<std::string(int)>;

// Node array with parent links; import_tree(export_tree(t)) predicts identically.
[[nodiscard]] nlohmann::json export_tree(const DecisionTree& tree);
[[nodiscard]] DecisionTree import_tree(const nlohmann::json& doc);

/// Nested if/else rules, e.g.
///   if q[layer=3][p=100] <= 0.73 then
///     predict memory
///   else
///     ...
[[nodiscard]] std::string export_rules(const DecisionTree& tree, const FeatureNamer& feature_name,
                                       const ClassNamer& class_name);

}  // namespace qsdc
