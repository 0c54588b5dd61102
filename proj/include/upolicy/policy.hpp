#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "upolicy/data.hpp"
#include "upolicy/uplift_forest.hpp"

namespace upolicy {

struct PolicyMetadata {
  std::string training_range;  // free text, e.g. "ids 1-20000"
  int episode_day = 1;
  std::vector<std::string> feature_subset;  // raw feature names the model was trained on
};

/// Contact exactly when the estimated CATE is at or above the threshold.
struct ThresholdPolicy {
  std::string model_id;
  double threshold = 0.0;
  PolicyMetadata metadata;
};

inline Action recommend_from_cate(double cate, double threshold) {
  return cate >= threshold ? Action::Contact : Action::NoContact;
}

Action recommend(const ThresholdPolicy& policy, const UpliftEnsemble& ensemble,
                 const Eigen::Ref<const Eigen::VectorXd>& x);

struct Recommendations {
  Eigen::VectorXd cate;
  std::vector<Action> actions;
  double contact_rate = 0.0;
};

Recommendations recommend_batch(const ThresholdPolicy& policy, const UpliftEnsemble& ensemble, const Dataset& dataset);
/// Thresholds precomputed scores; used when the CATE vector is already at hand.
Recommendations recommend_from_scores(const Eigen::Ref<const Eigen::VectorXd>& cate, double threshold);

// ---------------------------------------------------------------------------
// Surrogate explanation tree

struct SurrogateNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::int64_t n_contact = 0;
  std::int64_t n_no_contact = 0;
  Action prediction = Action::NoContact;

  bool is_leaf() const { return feature < 0; }
};

struct SurrogateTree {
  std::vector<std::string> feature_names;
  std::vector<SurrogateNode> nodes;
  int max_depth = 3;
  double fidelity = 0.0;  // agreement with the policy on the fitting rows

  Action predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Indented if/else rendering for sharing with domain experts.
  std::string describe() const;
};

/// Greedy Gini classification tree mapping features to the recommended action.
SurrogateTree distill_surrogate(const Dataset& dataset, const std::vector<Action>& recommended, int max_depth = 3);
SurrogateTree distill_surrogate(const ThresholdPolicy& policy, const UpliftEnsemble& ensemble, const Dataset& dataset,
                                int max_depth = 3);

nlohmann::json to_json(const SurrogateTree& tree);

// ---------------------------------------------------------------------------
// Policy documents

struct LoadedPolicy {
  ThresholdPolicy policy;
  UpliftEnsemble ensemble;
};

nlohmann::json policy_document(const ThresholdPolicy& policy, const UpliftEnsemble& ensemble);
LoadedPolicy policy_from_document(const nlohmann::json& doc);
void save_policy(const ThresholdPolicy& policy, const UpliftEnsemble& ensemble, const std::filesystem::path& path);
/// Throws DataError on corruption, truncation or an unsupported version.
LoadedPolicy load_policy(const std::filesystem::path& path);

/// CSV `id,cate,recommendation` with recommendation in {contact, no_contact}.
void write_recommendations_csv(const std::filesystem::path& path, const Dataset& dataset, const Recommendations& recs);

std::string to_string(Action a);

}  // namespace upolicy
