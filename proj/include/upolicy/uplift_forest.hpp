#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

#include "upolicy/data.hpp"

namespace upolicy {

enum class Divergence { KL, Euclidean, ChiSquared };

std::string to_string(Divergence d);
Divergence divergence_from_string(const std::string& name);

/// Divergence between two Bernoulli distributions with success probabilities
/// p (treated) and q (control). KL uses the natural log.
template <typename Scalar>
Scalar binary_divergence(Scalar p, Scalar q, Divergence kind) {
  using std::log;
  switch (kind) {
    case Divergence::KL: {
      auto term = [](Scalar a, Scalar b) { return a > Scalar(0) ? a * log(a / b) : Scalar(0); };
      return term(p, q) + term(Scalar(1) - p, Scalar(1) - q);
    }
    case Divergence::Euclidean:
      return Scalar(2) * (p - q) * (p - q);
    case Divergence::ChiSquared:
      return (p - q) * (p - q) / q + (p - q) * (p - q) / (Scalar(1) - q);
  }
  return Scalar(0);
}

struct TreeParams {
  int max_depth = 8;
  int min_leaf_per_arm = 30;
  int mtry = 0;  // 0 selects ceil(sqrt(n_features))
  Divergence divergence = Divergence::KL;
  double smoothing = 0.5;
  int max_thresholds = 32;

  void validate() const;
  int effective_mtry(Eigen::Index n_features) const;
};

/// Per-arm counts at a tree node. Counts include bootstrap multiplicities.
struct NodeStats {
  std::int64_t n_t = 0;
  std::int64_t n_c = 0;
  std::int64_t y_t = 0;
  std::int64_t y_c = 0;

  std::int64_t total() const { return n_t + n_c; }
  /// (y + s) / (n + 2s): outcome rate smoothed toward 1/2.
  double treated_rate(double smoothing) const;
  double control_rate(double smoothing) const;
  double uplift(double smoothing) const { return treated_rate(smoothing) - control_rate(smoothing); }

  NodeStats& operator+=(const NodeStats& o);
  friend NodeStats operator-(NodeStats a, const NodeStats& b);
  bool operator==(const NodeStats&) const = default;
};

/// sum_child (N_child / N_parent) * D(child) - D(parent) over smoothed rates.
double split_gain(const NodeStats& parent, const NodeStats& left, const NodeStats& right, Divergence divergence,
                  double smoothing);

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // rows with x[feature] <= threshold go left
  int left = -1;
  int right = -1;
  NodeStats stats;
  double uplift = 0.0;

  bool is_leaf() const { return feature < 0; }
};

/// Flattened tree; node 0 is the root.
struct UpliftTree {
  std::vector<TreeNode> nodes;

  const TreeNode& leaf_for(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const { return leaf_for(x).uplift; }
  int depth() const;
};

struct UpliftForest {
  std::vector<UpliftTree> trees;
  std::vector<std::uint64_t> tree_seeds;

  /// Arithmetic mean of the trees' leaf uplifts.
  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

struct UpliftEnsemble {
  TreeParams params;
  std::vector<std::string> feature_names;
  std::uint64_t master_seed = 0;
  int n_trees = 0;
  std::vector<UpliftForest> forests;

  /// Arithmetic mean of the forests' predictions.
  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

/// Greedy divergence-maximizing tree over per-row multiplicities `weights`
/// (0 excludes a row). Rows of X, actions, outcomes and weights are aligned.
UpliftTree fit_tree(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXi>& actions,
                    const Eigen::Ref<const Eigen::VectorXi>& outcomes, const std::vector<std::int32_t>& weights,
                    const TreeParams& params, std::uint64_t seed);
/// Tree on the full dataset (each row once), rows taken in id order.
UpliftTree fit_tree(const Dataset& dataset, const TreeParams& params, std::uint64_t seed);

/// Each tree sees a seeded bootstrap of the id-ordered rows; tree seeds derive
/// from `seed` by index.
UpliftForest fit_forest(const Dataset& dataset, const TreeParams& params, int n_trees, std::uint64_t seed);
UpliftEnsemble fit_ensemble(const Dataset& dataset, const TreeParams& params, int n_trees, int n_forests,
                            std::uint64_t seed);

/// Mean over forests of mean over trees of the leaf uplift; in [-1, 1].
double predict_cate(const UpliftEnsemble& ensemble, const Eigen::Ref<const Eigen::VectorXd>& x);
double predict_cate(const UpliftEnsemble& ensemble, const FeatureSchema& schema, const FeatureVector& row);
/// Checks the dataset's encoded feature names against the training schema.
Eigen::VectorXd predict_cate(const UpliftEnsemble& ensemble, const Dataset& dataset);

nlohmann::json to_json(const UpliftEnsemble& ensemble);
UpliftEnsemble ensemble_from_json(const nlohmann::json& doc);
/// Identifier derived from the serialized ensemble.
std::string model_id(const UpliftEnsemble& ensemble);

// ---------------------------------------------------------------------------
// Uplift-aware feature selection

struct FeatureImportanceReport {
  std::vector<std::string> features;  // raw feature names, schema order
  std::vector<double> scores;          // aligned with features
  std::vector<int> bins_per_feature;
  std::vector<std::size_t> ranking;    // indices into features, best first, ties by name
  int bins_used = 0;
};

struct UpliftBin {
  double weight = 0.0;  // N_b / N
  double uplift = 0.0;
};

/// sum_b w_b * (uplift_b - overall)^2.
double importance_from_bins(const std::vector<UpliftBin>& bins, double overall_uplift);

/// Equal-frequency bins per numeric feature (missing values form their own bin),
/// one bin per category for categorical features. Rates are smoothed as in NodeStats.
FeatureImportanceReport feature_importance_filter(const Dataset& dataset, int n_bins = 10, double smoothing = 0.5);

/// Top-k raw feature names by importance (ties by name ascending); all features if fewer than k.
std::vector<std::string> select_top_k(const FeatureImportanceReport& report, int k = 50);

}  // namespace upolicy
