#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "upolicy/data.hpp"

namespace upolicy {

/// Self-normalized importance-sampling value of a deterministic policy.
struct OpeEstimate {
  double value = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double standard_error = 0.0;  // bootstrap standard deviation; 0 without bootstrap
  double effective_sample_size = 0.0;
  std::int64_t n_matched = 0;
  int n_degenerate_resamples = 0;
  bool degenerate = false;  // only set on curve points where the policy never matches the logs

  double ci_halfwidth() const { return 0.5 * (ci_high - ci_low); }
};

/// w_i = 1{policy_i = a_i} / P(a_i | x_i) under the logging propensity e_i.
Eigen::VectorXd importance_weights(const Eigen::Ref<const Eigen::VectorXi>& actions,
                                   const Eigen::Ref<const Eigen::VectorXd>& propensities,
                                   const std::vector<Action>& policy);

/// sum w y / sum w. Throws NumericalError when sum w = 0.
double snips_value(const Eigen::Ref<const Eigen::VectorXd>& weights, const Eigen::Ref<const Eigen::VectorXd>& outcomes);

/// Point estimate with ESS = (sum w)^2 / sum w^2; CI fields equal the value.
OpeEstimate snips(const Dataset& dataset, const std::vector<Action>& policy);

struct BootstrapOptions {
  int n_reps = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
};

struct BootstrapInterval {
  double low = 0.0;
  double high = 0.0;
  double standard_error = 0.0;
  int n_reps = 0;
  int n_degenerate = 0;
};

/// Percentile interval over seeded row resamples. Zero-weight resamples are
/// skipped and counted; more than half degenerate throws NumericalError.
BootstrapInterval bootstrap_ci(const Dataset& dataset, const std::vector<Action>& policy,
                               const BootstrapOptions& options = {});

/// snips plus bootstrap interval; the interval is widened to contain the point value.
OpeEstimate evaluate_policy(const Dataset& dataset, const std::vector<Action>& policy,
                            const BootstrapOptions& options = {});

/// Contacts exactly the `k` highest-scoring rows (ties by ascending id).
std::vector<Action> top_k_policy(const Eigen::Ref<const Eigen::VectorXd>& scores, const std::vector<std::int64_t>& ids,
                                 Eigen::Index k);

struct OpeCurvePoint {
  double fraction = 0.0;
  OpeEstimate estimate;
};

struct OpeCurve {
  std::vector<OpeCurvePoint> by_score;   // ordering = cate
  std::vector<OpeCurvePoint> by_random;  // seeded random ordering baseline
};

/// Sweeps contact fractions {0, 1/n_grid, ..., 1}. Point values are direct SNIPS
/// of each top-fraction policy, so the end points equal never/always-contact exactly.
OpeCurve ope_curve(const Dataset& dataset, const Eigen::Ref<const Eigen::VectorXd>& scores, int n_grid = 50,
                   const BootstrapOptions& options = {});

struct PolicyValueEntry {
  std::string name;
  OpeEstimate estimate;
  double contact_rate = 0.0;
};

struct PolicyValueReport {
  std::vector<PolicyValueEntry> entries;  // new, existing, always, never
  std::string propensity_source;          // "true" or "estimated"
  double threshold = 0.0;

  const PolicyValueEntry& get(const std::string& name) const;
};

PolicyValueReport policy_value_report(const Dataset& dataset, const Eigen::Ref<const Eigen::VectorXd>& cate_scores,
                                      const std::vector<Action>& existing_actions, double threshold = 0.0,
                                      const BootstrapOptions& options = {},
                                      const std::string& propensity_source = "true");

/// Mean over rows of y1 where the policy contacts, else y0. Requires potential outcomes.
double oracle_policy_value(const Dataset& dataset, const std::vector<Action>& policy);

void write_ope_curve_csv(const std::filesystem::path& path, const OpeCurve& curve);
nlohmann::json to_json(const OpeEstimate& estimate);
nlohmann::json to_json(const PolicyValueReport& report);

}  // namespace upolicy
