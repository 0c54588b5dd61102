#include "upolicy/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "upolicy/document.hpp"
#include "upolicy/error.hpp"
#include "upolicy/stats.hpp"

namespace upolicy {

namespace {

std::string num(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

// Descending score, ascending id.
std::vector<Eigen::Index> rank_by_score(const Eigen::Ref<const Eigen::VectorXd>& scores,
                                        const std::vector<std::int64_t>& ids) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[static_cast<std::size_t>(a)] < ids[static_cast<std::size_t>(b)];
  });
  return order;
}

}  // namespace

double QiniCurve::area() const {
  double a = 0.0;
  for (std::size_t k = 1; k < points.size(); ++k)
    a += 0.5 * (points[k].fraction - points[k - 1].fraction) * (points[k].value + points[k - 1].value);
  return a;
}

QiniCurve qini_curve(const Eigen::Ref<const Eigen::VectorXd>& scores, const Eigen::Ref<const Eigen::VectorXi>& actions,
                     const Eigen::Ref<const Eigen::VectorXi>& outcomes, const std::vector<std::int64_t>& ids) {
  const auto n = scores.size();
  if (actions.size() != n || outcomes.size() != n || static_cast<Eigen::Index>(ids.size()) != n)
    throw DataError("qini_curve: scores, actions, outcomes and ids must align");
  const auto treated = actions.sum();
  if (n == 0 || treated == 0 || treated == n) throw DataError("qini_curve: both actions must be present");

  const auto order = rank_by_score(scores, ids);
  QiniCurve curve;
  curve.points.reserve(static_cast<std::size_t>(n) + 1);
  curve.points.push_back({0.0, 0.0});
  double n_t = 0, n_c = 0, y_t = 0, y_c = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto i = order[static_cast<std::size_t>(k)];
    if (actions[i] == 1) {
      n_t += 1;
      y_t += outcomes[i];
    } else {
      n_c += 1;
      y_c += outcomes[i];
    }
    const double q = n_c > 0 ? y_t - y_c * n_t / n_c : y_t;
    curve.points.push_back({static_cast<double>(k + 1) / static_cast<double>(n), q});
  }
  return curve;
}

QiniCurve qini_curve(const Eigen::Ref<const Eigen::VectorXd>& scores, const Dataset& dataset) {
  return qini_curve(scores, dataset.actions(), dataset.outcomes(), dataset.ids());
}

std::string to_string(QiniReference r) {
  return r == QiniReference::GroundTruthRanking ? "ground_truth_ranking" : "outcome_optimal";
}

QiniCurve reference_curve(const Dataset& dataset, QiniReference reference) {
  if (reference == QiniReference::GroundTruthRanking) {
    if (!dataset.has_true_cate()) throw DataError("ground-truth Qini reference requires true_cate");
    return qini_curve(dataset.true_cate(), dataset);
  }
  Eigen::VectorXd priority(dataset.size());
  for (Eigen::Index i = 0; i < dataset.size(); ++i) {
    const bool treated = dataset.actions()[i] == 1;
    const bool positive = dataset.outcomes()[i] == 1;
    priority[i] = treated ? (positive ? 3.0 : 1.0) : (positive ? 0.0 : 2.0);
  }
  return qini_curve(priority, dataset);
}

double qini_coefficient(const QiniCurve& curve, const QiniCurve& optimal) {
  if (curve.points.size() < 2 || optimal.points.size() < 2) throw DataError("qini_coefficient: empty curve");
  const double a_random = 0.5 * curve.endpoint();
  const double denominator = optimal.area() - a_random;
  if (!(std::abs(denominator) > 1e-12))
    throw NumericalError("qini_coefficient undefined: the optimal curve coincides with the random chord (no signal)");
  return (curve.area() - a_random) / denominator;
}

double qini_coefficient(const Eigen::Ref<const Eigen::VectorXd>& scores, const Dataset& dataset,
                        QiniReference reference) {
  return qini_coefficient(qini_curve(scores, dataset), reference_curve(dataset, reference));
}

CalibrationReport calibration(const Eigen::Ref<const Eigen::VectorXd>& predictions, const Dataset& dataset, int n_bins,
                              double level) {
  const auto n = dataset.size();
  if (predictions.size() != n) throw DataError("calibration: one prediction per row required");
  if (n_bins < 1 || n_bins >= n)
    throw ConfigError("calibration: need 1 <= n_bins < n_rows (single-row bins cannot hold both arms)");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("calibration: level must lie in (0, 1)");
  const Eigen::VectorXd e = dataset.propensities();
  const double z = normal_quantile(0.5 + 0.5 * level);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto& ids = dataset.ids();
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (predictions[a] != predictions[b]) return predictions[a] < predictions[b];
    return ids[static_cast<std::size_t>(a)] < ids[static_cast<std::size_t>(b)];
  });

  CalibrationReport report;
  report.level = level;
  const auto base = n / n_bins;
  const auto extra = n % n_bins;
  Eigen::Index start = 0;
  for (int b = 0; b < n_bins; ++b) {
    const Eigen::Index size = base + (b < extra ? 1 : 0);
    CalibrationBin bin;
    bin.n_rows = size;
    double pred_sum = 0, wt = 0, wty = 0, wc = 0, wcy = 0;
    for (Eigen::Index k = start; k < start + size; ++k) {
      const auto i = order[static_cast<std::size_t>(k)];
      pred_sum += predictions[i];
      const double y = dataset.outcomes()[i];
      if (dataset.actions()[i] == 1) {
        const double w = 1.0 / e[i];
        wt += w;
        wty += w * y;
      } else {
        const double w = 1.0 / (1.0 - e[i]);
        wc += w;
        wcy += w * y;
      }
    }
    bin.mean_predicted_cate = pred_sum / static_cast<double>(size);
    if (wt <= 0.0 || wc <= 0.0) {
      bin.has_both_arms = false;
    } else {
      const double mu_t = wty / wt;
      const double mu_c = wcy / wc;
      double var_t = 0, var_c = 0;
      for (Eigen::Index k = start; k < start + size; ++k) {
        const auto i = order[static_cast<std::size_t>(k)];
        const double y = dataset.outcomes()[i];
        if (dataset.actions()[i] == 1) {
          const double w = 1.0 / e[i];
          var_t += w * w * (y - mu_t) * (y - mu_t);
        } else {
          const double w = 1.0 / (1.0 - e[i]);
          var_c += w * w * (y - mu_c) * (y - mu_c);
        }
      }
      bin.observed_uplift = mu_t - mu_c;
      bin.ci_halfwidth = z * std::sqrt(var_t / (wt * wt) + var_c / (wc * wc));
    }
    report.bins.push_back(bin);
    start += size;
  }
  return report;
}

double roc_auc(const Eigen::Ref<const Eigen::VectorXd>& scores, const Eigen::Ref<const Eigen::VectorXi>& labels) {
  if (scores.size() != labels.size()) throw DataError("roc_auc: scores and labels must align");
  std::int64_t positives = 0;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw DataError("roc_auc: labels must be 0 or 1");
    positives += labels[i];
  }
  const std::int64_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw DataError("roc_auc: both label classes must be present");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return scores[a] < scores[b]; });
  // Twice the Mann-Whitney U statistic, kept integral.
  std::int64_t twice_u = 0;
  std::int64_t negatives_below = 0;
  for (std::size_t k = 0; k < order.size();) {
    std::size_t end = k;
    std::int64_t pos = 0, neg = 0;
    while (end < order.size() && scores[order[end]] == scores[order[k]]) {
      (labels[order[end]] == 1 ? pos : neg)++;
      ++end;
    }
    twice_u += 2 * pos * negatives_below + pos * neg;
    negatives_below += neg;
    k = end;
  }
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

void write_qini_csv(const std::filesystem::path& path, const QiniCurve& model, const QiniCurve* reference) {
  std::ostringstream out;
  out << "fraction,qini,curve\n";
  for (const auto& p : model.points) out << num(p.fraction) << ',' << num(p.value) << ",model\n";
  if (reference)
    for (const auto& p : reference->points) out << num(p.fraction) << ',' << num(p.value) << ",reference\n";
  write_text_atomic(path, out.str());
}

void write_calibration_csv(const std::filesystem::path& path, const CalibrationReport& report) {
  std::ostringstream out;
  out << "bin,mean_predicted_cate,observed_uplift,n_rows,ci_halfwidth,has_both_arms\n";
  for (std::size_t b = 0; b < report.bins.size(); ++b) {
    const auto& bin = report.bins[b];
    out << b << ',' << num(bin.mean_predicted_cate) << ',' << num(bin.observed_uplift) << ',' << bin.n_rows << ','
        << num(bin.ci_halfwidth) << ',' << (bin.has_both_arms ? 1 : 0) << '\n';
  }
  write_text_atomic(path, out.str());
}

nlohmann::json to_json(const CalibrationReport& report) {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& bin : report.bins)
    bins.push_back({{"mean_predicted_cate", bin.mean_predicted_cate},
                    {"observed_uplift", bin.observed_uplift},
                    {"n_rows", bin.n_rows},
                    {"ci_halfwidth", bin.ci_halfwidth},
                    {"has_both_arms", bin.has_both_arms}});
  return {{"level", report.level}, {"bins", bins}};
}

}  // namespace upolicy
