#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

#include "upolicy/data.hpp"

namespace upolicy {

struct QiniPoint {
  double fraction = 0.0;
  double value = 0.0;  // cumulative incremental successes
};

/// Starts at (0, 0); fractions strictly increase to 1.
struct QiniCurve {
  std::vector<QiniPoint> points;

  double endpoint() const { return points.back().value; }
  /// Trapezoidal area under the curve over fraction.
  double area() const;
};

/// Rows ranked by descending score (ties by ascending id). At each prefix k:
///   Q(k) = Y_t(k) - Y_c(k) * N_t(k) / N_c(k), second term 0 while N_c(k) = 0.
QiniCurve qini_curve(const Eigen::Ref<const Eigen::VectorXd>& scores, const Eigen::Ref<const Eigen::VectorXi>& actions,
                     const Eigen::Ref<const Eigen::VectorXi>& outcomes, const std::vector<std::int64_t>& ids);
QiniCurve qini_curve(const Eigen::Ref<const Eigen::VectorXd>& scores, const Dataset& dataset);

enum class QiniReference { GroundTruthRanking, OutcomeOptimal };

std::string to_string(QiniReference r);

/// The reference ("optimal") curve: ranking by true_cate, or the observable-optimal
/// ordering (treated positives, control negatives, treated negatives, control positives).
QiniCurve reference_curve(const Dataset& dataset, QiniReference reference);

/// (A_model - A_random) / (A_optimal - A_random), A_random being the chord area.
/// Throws NumericalError when A_optimal equals A_random.
double qini_coefficient(const QiniCurve& curve, const QiniCurve& optimal);
double qini_coefficient(const Eigen::Ref<const Eigen::VectorXd>& scores, const Dataset& dataset,
                        QiniReference reference);

struct CalibrationBin {
  double mean_predicted_cate = 0.0;
  double observed_uplift = 0.0;  // IPW difference of means; 0 when flagged
  std::int64_t n_rows = 0;
  double ci_halfwidth = 0.0;
  bool has_both_arms = true;
};

struct CalibrationReport {
  std::vector<CalibrationBin> bins;  // ordered by predicted CATE
  double level = 0.95;
};

/// Equal-frequency bins on predictions (ties by id); requires propensities.
CalibrationReport calibration(const Eigen::Ref<const Eigen::VectorXd>& predictions, const Dataset& dataset,
                              int n_bins = 10, double level = 0.95);

/// Mann-Whitney AUC with ties counted 1/2.
double roc_auc(const Eigen::Ref<const Eigen::VectorXd>& scores, const Eigen::Ref<const Eigen::VectorXi>& labels);

void write_qini_csv(const std::filesystem::path& path, const QiniCurve& model, const QiniCurve* reference = nullptr);
void write_calibration_csv(const std::filesystem::path& path, const CalibrationReport& report);
nlohmann::json to_json(const CalibrationReport& report);

}  // namespace upolicy
