#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "upolicy/data.hpp"

namespace upolicy {

/// Baseline (existing-policy) AE behavior: a constant contact rate, or a logistic
/// model on the encoded design row when `coefficients` is non-empty.
struct ControlContactModel {
  double constant_rate = 0.5;
  double intercept = 0.0;
  std::vector<double> coefficients;

  double contact_probability(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  void validate() const;
};

struct TrialConfig {
  double assignment_probability = 0.5;  // P(treatment)
  double treatment_compliance = 1.0;
  ControlContactModel control_contact_model;
  int horizon_days = kDefaultHorizonDays;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class Arm : std::uint8_t { Control = 0, Treatment = 1 };
std::string to_string(Arm arm);

struct TrialItem {
  std::int64_t id = 0;
  Arm arm = Arm::Control;
  Action recommendation = Action::NoContact;
  Action executed = Action::NoContact;
  int outcome = 0;
};

struct TrialResult {
  std::vector<TrialItem> items;  // in dataset row order
  std::int64_t n_control = 0;
  std::int64_t n_treatment = 0;
};

/// Each row: arm ~ Bernoulli(assignment_probability); the treatment arm follows the
/// recommendation with probability treatment_compliance, otherwise (and always in
/// control) the control contact model decides. outcome = y_{executed}.
TrialResult simulate_trial(const Dataset& world, const std::vector<Action>& recommendations, const TrialConfig& config);

/// Chi-squared goodness of fit (1 dof). `expected_ratio` is the expected control share.
double srm_test(std::int64_t n_control, std::int64_t n_treatment, double expected_ratio = 0.5);

enum class ProportionTest { PooledZ, Welch };

struct TestResult {
  double statistic = 0.0;
  double p_value = 0.0;
  double df = 0.0;  // Welch only
};

/// One-sided test of H1: p2 > p1. Pooled z by default; Welch t on the 0/1 outcomes otherwise.
TestResult two_proportion_test(std::int64_t x1, std::int64_t n1, std::int64_t x2, std::int64_t n2,
                               ProportionTest kind = ProportionTest::PooledZ);

/// Wilson score interval, clamped to [0, 1].
std::pair<double, double> proportion_ci(std::int64_t x, std::int64_t n, double level = 0.95);

/// One row of the counts table.
struct CountsRow {
  Arm group = Arm::Control;
  Action recommendation = Action::NoContact;
  std::int64_t n = 0;
  std::int64_t deliveries = 0;
  std::int64_t contacts = 0;
  std::int64_t compliant = 0;  // executed action == recommendation
};

std::vector<CountsRow> counts_table(const TrialResult& result);
std::vector<CountsRow> load_counts(const std::filesystem::path& path);
std::vector<CountsRow> parse_counts(std::istream& in);
void save_counts(const std::vector<CountsRow>& rows, const std::filesystem::path& path);

struct ArmSummary {
  std::int64_t n = 0;
  std::int64_t deliveries = 0;
  double delivery_rate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double compliance_rate = 0.0;
  double contact_rate = 0.0;
};

struct Comparison {
  ArmSummary control;
  ArmSummary treatment;
  double absolute_effect = 0.0;
  double relative_effect = 0.0;  // absolute / control rate; 0 when the control rate is 0
  double one_sided_p = 0.0;
};

struct AnalysisOptions {
  double level = 0.95;
  double expected_control_share = 0.5;
  double srm_threshold = 0.01;
  ProportionTest test = ProportionTest::PooledZ;
};

struct TrialAnalysis {
  double srm_p = 0.0;
  bool srm_detected = false;
  Comparison overall;
  Comparison contact_recommended;
  Comparison no_contact_recommended;
  AnalysisOptions options;
};

/// Both arms must be non-empty. Subgroups with an empty arm get NaN effects.
TrialAnalysis analyze_trial(const std::vector<CountsRow>& counts, const AnalysisOptions& options = {});
TrialAnalysis analyze_trial(const TrialResult& result, const AnalysisOptions& options = {});

nlohmann::json to_json(const TrialAnalysis& analysis);
/// segment,group,n,deliveries,delivery_rate,ci_low,ci_high,compliance_rate,contact_rate,absolute_effect,relative_effect,one_sided_p
void write_analysis_csv(const std::filesystem::path& path, const TrialAnalysis& analysis);
void write_trial_csv(const std::filesystem::path& path, const TrialResult& result);

}  // namespace upolicy
