#include <algorithm>
#include <numeric>

#include "upolicy/error.hpp"
#include "upolicy/uplift_forest.hpp"

namespace upolicy {

namespace {

// Per-bin arm counts for a single raw feature.
std::vector<UpliftBin> bins_from_assignment(const Dataset& dataset, const std::vector<int>& bin_of_row, int n_bins,
                                            double smoothing) {
  std::vector<NodeStats> stats(static_cast<std::size_t>(n_bins));
  for (Eigen::Index i = 0; i < dataset.size(); ++i) {
    auto& s = stats[static_cast<std::size_t>(bin_of_row[static_cast<std::size_t>(i)])];
    if (dataset.actions()[i] == 1) {
      ++s.n_t;
      s.y_t += dataset.outcomes()[i];
    } else {
      ++s.n_c;
      s.y_c += dataset.outcomes()[i];
    }
  }
  std::vector<UpliftBin> bins;
  const auto n = static_cast<double>(dataset.size());
  for (const auto& s : stats) {
    if (s.total() == 0) continue;
    bins.push_back({static_cast<double>(s.total()) / n, s.uplift(smoothing)});
  }
  return bins;
}

// Equal-frequency bins; tied values share the bin of their first occurrence.
std::vector<int> quantile_bins(const std::vector<std::pair<double, Eigen::Index>>& present, std::size_t n_rows, int n_bins,
                               int& used) {
  std::vector<int> bin(n_rows, 0);
  const auto m = present.size();
  int last_bin = -1;
  for (std::size_t k = 0; k < m;) {
    std::size_t end = k;
    while (end < m && present[end].first == present[k].first) ++end;
    const int b = static_cast<int>(k * static_cast<std::size_t>(n_bins) / m);
    for (std::size_t r = k; r < end; ++r) bin[static_cast<std::size_t>(present[r].second)] = b;
    last_bin = b;
    k = end;
  }
  used = last_bin + 1;
  return bin;
}

}  // namespace

double importance_from_bins(const std::vector<UpliftBin>& bins, double overall_uplift) {
  double total = 0.0;
  for (const auto& b : bins) total += b.weight * (b.uplift - overall_uplift) * (b.uplift - overall_uplift);
  return total;
}

FeatureImportanceReport feature_importance_filter(const Dataset& dataset, int n_bins, double smoothing) {
  if (n_bins < 2) throw ConfigError("feature_importance_filter: n_bins must be >= 2");
  if (!(smoothing > 0.0)) throw ConfigError("feature_importance_filter: smoothing must be > 0");
  const auto treated = dataset.actions().sum();
  if (treated == 0 || treated == dataset.size())
    throw DataError("feature_importance_filter: both actions must be present");

  NodeStats overall;
  for (Eigen::Index i = 0; i < dataset.size(); ++i) {
    if (dataset.actions()[i] == 1) {
      ++overall.n_t;
      overall.y_t += dataset.outcomes()[i];
    } else {
      ++overall.n_c;
      overall.y_c += dataset.outcomes()[i];
    }
  }
  const double overall_uplift = overall.uplift(smoothing);

  FeatureImportanceReport report;
  report.bins_used = n_bins;
  const auto& schema = dataset.schema();
  const auto n_rows = static_cast<std::size_t>(dataset.size());

  for (std::size_t j = 0; j < schema.numeric.size(); ++j) {
    std::vector<std::pair<double, Eigen::Index>> present;
    std::vector<Eigen::Index> missing;
    for (Eigen::Index i = 0; i < dataset.size(); ++i) {
      const auto& v = dataset.row(i).features.numeric[j];
      if (v) {
        present.emplace_back(*v, i);
      } else {
        missing.push_back(i);
      }
    }
    std::sort(present.begin(), present.end());
    int used = 0;
    auto bin = quantile_bins(present, n_rows, n_bins, used);
    int total_bins = used;
    if (!missing.empty()) {
      for (auto i : missing) bin[static_cast<std::size_t>(i)] = used;
      ++total_bins;
    }
    report.features.push_back(schema.numeric[j].name);
    report.bins_per_feature.push_back(total_bins);
    report.scores.push_back(
        importance_from_bins(bins_from_assignment(dataset, bin, std::max(total_bins, 1), smoothing), overall_uplift));
  }
  for (std::size_t j = 0; j < schema.categorical.size(); ++j) {
    const int levels = static_cast<int>(schema.categorical[j].levels.size());
    std::vector<int> bin(n_rows, 0);
    for (Eigen::Index i = 0; i < dataset.size(); ++i) {
      const auto& code = dataset.row(i).features.categorical[j];
      bin[static_cast<std::size_t>(i)] = code ? *code : levels;  // missing forms its own bin
    }
    report.features.push_back(schema.categorical[j].name);
    report.bins_per_feature.push_back(levels + 1);
    report.scores.push_back(importance_from_bins(bins_from_assignment(dataset, bin, levels + 1, smoothing), overall_uplift));
  }

  report.ranking.resize(report.features.size());
  std::iota(report.ranking.begin(), report.ranking.end(), std::size_t{0});
  std::sort(report.ranking.begin(), report.ranking.end(), [&](std::size_t a, std::size_t b) {
    if (report.scores[a] != report.scores[b]) return report.scores[a] > report.scores[b];
    return report.features[a] < report.features[b];
  });
  return report;
}

std::vector<std::string> select_top_k(const FeatureImportanceReport& report, int k) {
  if (k < 1) throw ConfigError("select_top_k: k must be >= 1");
  std::vector<std::size_t> order(report.features.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (report.scores[a] != report.scores[b]) return report.scores[a] > report.scores[b];
    return report.features[a] < report.features[b];
  });
  order.resize(std::min(order.size(), static_cast<std::size_t>(k)));
  std::vector<std::string> selected;
  for (auto i : order) selected.push_back(report.features[i]);
  return selected;
}

}  // namespace upolicy
