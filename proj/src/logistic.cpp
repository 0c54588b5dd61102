#include "upolicy/logistic.hpp"

#include <Eigen/Cholesky>

#include <cmath>

#include "upolicy/document.hpp"
#include "upolicy/error.hpp"
#include "upolicy/stats.hpp"

namespace upolicy {

namespace {

constexpr const char* kLogisticFormat = "upolicy.logistic_model";
constexpr int kLogisticVersion = 1;

Eigen::MatrixXd standardized_design(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::VectorXd& mean,
                                    const Eigen::VectorXd& scale) {
  Eigen::MatrixXd Z(X.rows(), X.cols() + 1);
  Z.col(0).setOnes();
  Z.rightCols(X.cols()) = (X.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  return Z;
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

namespace logistic_objective {

double value(const Eigen::Ref<const Eigen::MatrixXd>& Z, const Eigen::Ref<const Eigen::VectorXd>& y,
             const Eigen::Ref<const Eigen::VectorXd>& beta, double l2) {
  const Eigen::VectorXd eta = Z * beta;
  double nll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) nll += log1p_exp(eta[i]) - y[i] * eta[i];
  return nll / static_cast<double>(Z.rows()) + 0.5 * l2 * beta.squaredNorm();
}

Eigen::VectorXd gradient(const Eigen::Ref<const Eigen::MatrixXd>& Z, const Eigen::Ref<const Eigen::VectorXd>& y,
                         const Eigen::Ref<const Eigen::VectorXd>& beta, double l2) {
  const Eigen::VectorXd p = (Z * beta).unaryExpr([](double v) { return logistic(v); });
  return Z.transpose() * (p - y) / static_cast<double>(Z.rows()) + l2 * beta;
}

}  // namespace logistic_objective

LogisticModel fit_logistic(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                           std::vector<std::string> feature_names, const LogisticOptions& options) {
  if (X.rows() != y.size()) throw DataError("fit_logistic: one label per row required");
  if (X.rows() < 2) throw DataError("fit_logistic: at least 2 rows required");
  if (static_cast<Eigen::Index>(feature_names.size()) != X.cols())
    throw DataError("fit_logistic: feature name count does not match the design");
  if (!(options.l2 >= 0.0) || options.max_iter < 1 || !(options.tol > 0.0))
    throw ConfigError("fit_logistic: need l2 >= 0, max_iter >= 1, tol > 0");
  if (!X.allFinite()) throw DataError("fit_logistic: non-finite feature values");
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y[i] != 0.0 && y[i] != 1.0) throw DataError("fit_logistic: labels must be 0 or 1");
  const double positives = y.sum();
  if (options.l2 == 0.0 && (positives == 0.0 || positives == static_cast<double>(y.size())))
    throw NumericalError("fit_logistic: single-class target with l2 = 0 has no finite optimum");

  const auto n = static_cast<double>(X.rows());
  LogisticModel model;
  model.feature_names = std::move(feature_names);
  model.l2 = options.l2;
  model.mean = X.colwise().mean().transpose();
  model.scale = ((X.rowwise() - model.mean.transpose()).colwise().squaredNorm() / n).cwiseSqrt().transpose();
  for (Eigen::Index j = 0; j < model.scale.size(); ++j)
    if (model.scale[j] < 1e-12) model.scale[j] = 1.0;

  const Eigen::MatrixXd Z = standardized_design(X, model.mean, model.scale);
  const Eigen::Index k = Z.cols();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  double objective = logistic_objective::value(Z, y, beta, options.l2);

  for (int iter = 1; iter <= options.max_iter; ++iter) {
    model.n_iterations = iter;
    const Eigen::VectorXd p = (Z * beta).unaryExpr([](double v) { return logistic(v); });
    const Eigen::VectorXd grad = Z.transpose() * (p - y) / n + options.l2 * beta;
    const Eigen::VectorXd w = p.array() * (1.0 - p.array());
    Eigen::MatrixXd hessian = Z.transpose() * w.asDiagonal() * Z / n;
    hessian.diagonal().array() += options.l2 + 1e-12;
    const Eigen::VectorXd step = hessian.ldlt().solve(grad);
    if (!step.allFinite()) throw NumericalError("fit_logistic: Newton step is not finite");

    // Armijo backtracking along the Newton direction.
    const double slope = grad.dot(step);
    double t = 1.0;
    Eigen::VectorXd candidate = beta - step;
    double candidate_objective = logistic_objective::value(Z, y, candidate, options.l2);
    for (int halvings = 0; halvings < 60 && candidate_objective > objective - 1e-4 * t * slope; ++halvings) {
      t *= 0.5;
      candidate = beta - t * step;
      candidate_objective = logistic_objective::value(Z, y, candidate, options.l2);
    }
    const double max_update = (t * step).cwiseAbs().maxCoeff();
    if (candidate_objective <= objective) {
      beta = candidate;
      objective = candidate_objective;
    }
    if (max_update < options.tol) {
      model.converged = true;
      break;
    }
  }
  if (!beta.allFinite()) throw NumericalError("fit_logistic: diverged");
  model.intercept = beta[0];
  model.weights = beta.tail(k - 1);
  return model;
}

LogisticModel fit_logistic(const Dataset& dataset, LogisticTarget target, const LogisticOptions& options) {
  const Eigen::VectorXd y =
      (target == LogisticTarget::Action ? dataset.actions() : dataset.outcomes()).cast<double>();
  return fit_logistic(dataset.design(), y, dataset.feature_names(), options);
}

double predict_proba(const LogisticModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != model.weights.size())
    throw DataError("predict_proba: expected " + std::to_string(model.weights.size()) + " features, got " +
                    std::to_string(x.size()));
  const double eta =
      model.intercept + model.weights.dot(((x - model.mean).array() / model.scale.array()).matrix());
  return clamp_probability(logistic(eta), kProbabilityFloor, 1.0 - kProbabilityFloor);
}

Eigen::VectorXd predict_proba(const LogisticModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X) {
  if (X.cols() != model.weights.size())
    throw DataError("predict_proba: expected " + std::to_string(model.weights.size()) + " features, got " +
                    std::to_string(X.cols()));
  const Eigen::VectorXd eta =
      ((X.rowwise() - model.mean.transpose()).array().rowwise() / model.scale.transpose().array()).matrix() *
          model.weights +
      Eigen::VectorXd::Constant(X.rows(), model.intercept);
  return eta.unaryExpr(
      [](double v) { return clamp_probability(logistic(v), kProbabilityFloor, 1.0 - kProbabilityFloor); });
}

Eigen::VectorXd predict_proba(const LogisticModel& model, const Dataset& dataset) {
  if (dataset.feature_names() != model.feature_names)
    throw DataError("predict_proba: dataset schema does not match the model schema");
  return predict_proba(model, Eigen::Ref<const Eigen::MatrixXd>(dataset.design()));
}

TrimResult trim_positivity(const Dataset& dataset, const Eigen::Ref<const Eigen::VectorXd>& propensities, double low,
                           double high) {
  if (!(low < high)) throw ConfigError("trim_positivity: low must be below high");
  if (propensities.size() != dataset.size()) throw DataError("trim_positivity: one propensity per row required");
  TrimReport report;
  report.n_input = dataset.size();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < dataset.size(); ++i) {
    const double ps = propensities[i];
    if (!std::isfinite(ps)) throw DataError("trim_positivity: non-finite propensity");
    if (ps < low) {
      ++report.n_removed_low;
    } else if (ps > high) {
      ++report.n_removed_high;
    } else {
      keep.push_back(i);
    }
  }
  report.removed_fraction = report.n_input == 0 ? 0.0
                                                : static_cast<double>(report.n_removed_low + report.n_removed_high) /
                                                      static_cast<double>(report.n_input);
  Eigen::VectorXd kept(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) kept[static_cast<Eigen::Index>(k)] = propensities[keep[k]];
  return {dataset.subset(keep).with_propensities(kept), report};
}

nlohmann::json to_json(const LogisticModel& model) {
  auto doc = make_document(kLogisticFormat, kLogisticVersion);
  doc["schema_hash"] = schema_hash(model.feature_names);
  doc["feature_names"] = model.feature_names;
  doc["mean"] = to_std(model.mean);
  doc["scale"] = to_std(model.scale);
  doc["weights"] = to_std(model.weights);
  doc["intercept"] = model.intercept;
  doc["l2"] = model.l2;
  doc["converged"] = model.converged;
  doc["n_iterations"] = model.n_iterations;
  return doc;
}

LogisticModel logistic_from_json(const nlohmann::json& doc) {
  check_document(doc, kLogisticFormat, kLogisticVersion);
  LogisticModel model;
  model.feature_names = require<std::vector<std::string>>(doc, "feature_names");
  if (require<std::string>(doc, "schema_hash") != schema_hash(model.feature_names))
    throw DataError("logistic model: schema hash mismatch");
  model.mean = to_eigen(require<std::vector<double>>(doc, "mean"));
  model.scale = to_eigen(require<std::vector<double>>(doc, "scale"));
  model.weights = to_eigen(require<std::vector<double>>(doc, "weights"));
  model.intercept = require<double>(doc, "intercept");
  model.l2 = require<double>(doc, "l2");
  model.converged = require<bool>(doc, "converged");
  model.n_iterations = require<int>(doc, "n_iterations");
  const auto p = static_cast<Eigen::Index>(model.feature_names.size());
  if (model.mean.size() != p || model.scale.size() != p || model.weights.size() != p)
    throw DataError("logistic model: array lengths disagree with the schema");
  return model;
}

nlohmann::json to_json(const TrimReport& report) {
  return {{"n_input", report.n_input},
          {"n_removed_low", report.n_removed_low},
          {"n_removed_high", report.n_removed_high},
          {"removed_fraction", report.removed_fraction}};
}

}  // namespace upolicy
