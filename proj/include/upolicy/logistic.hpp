#pragma once

#include <Eigen/Core>

#include <json.hpp>
#include <string>
#include <vector>

#include "upolicy/data.hpp"

namespace upolicy {

enum class LogisticTarget { Action, Outcome };

struct LogisticOptions {
  double l2 = 1e-4;
  int max_iter = 100;
  double tol = 1e-8;
};

/// L2-regularized logistic regression over internally standardized features.
/// `weights` and `intercept` live in the standardized space.
struct LogisticModel {
  std::vector<std::string> feature_names;
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
  Eigen::VectorXd weights;
  double intercept = 0.0;
  double l2 = 0.0;
  bool converged = false;
  int n_iterations = 0;
};

inline constexpr double kProbabilityFloor = 1e-9;

/// Newton iterations with backtracking from zero initialization. Minimizes
///   (1/n) sum_i [log(1 + exp(eta_i)) - y_i eta_i] + (l2 / 2) * (intercept^2 + |w|^2)
/// over standardized features. Throws NumericalError for a single-class target with l2 = 0.
LogisticModel fit_logistic(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                           std::vector<std::string> feature_names, const LogisticOptions& options = {});
LogisticModel fit_logistic(const Dataset& dataset, LogisticTarget target, const LogisticOptions& options = {});

/// logistic(intercept + w . standardize(x)), clamped to [1e-9, 1 - 1e-9].
double predict_proba(const LogisticModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);
Eigen::VectorXd predict_proba(const LogisticModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X);
/// Checks the dataset's encoded feature names against the model.
Eigen::VectorXd predict_proba(const LogisticModel& model, const Dataset& dataset);

/// The fitted objective, exposed for gradient checks. `beta` = [intercept, w...]
/// over the already-standardized design `Z`.
namespace logistic_objective {
double value(const Eigen::Ref<const Eigen::MatrixXd>& Z, const Eigen::Ref<const Eigen::VectorXd>& y,
             const Eigen::Ref<const Eigen::VectorXd>& beta, double l2);
Eigen::VectorXd gradient(const Eigen::Ref<const Eigen::MatrixXd>& Z, const Eigen::Ref<const Eigen::VectorXd>& y,
                         const Eigen::Ref<const Eigen::VectorXd>& beta, double l2);
}  // namespace logistic_objective

struct TrimReport {
  std::int64_t n_input = 0;
  std::int64_t n_removed_low = 0;
  std::int64_t n_removed_high = 0;
  double removed_fraction = 0.0;
};

struct TrimResult {
  Dataset dataset;
  TrimReport report;
};

/// Keeps rows with low <= propensity <= high; retained rows carry their propensity.
TrimResult trim_positivity(const Dataset& dataset, const Eigen::Ref<const Eigen::VectorXd>& propensities,
                           double low = 0.01, double high = 0.99);

nlohmann::json to_json(const LogisticModel& model);
LogisticModel logistic_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const TrimReport& report);

}  // namespace upolicy
