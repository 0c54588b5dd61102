#include "upolicy/ope.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "upolicy/document.hpp"
#include "upolicy/error.hpp"
#include "upolicy/parallel.hpp"
#include "upolicy/random.hpp"
#include "upolicy/stats.hpp"

namespace upolicy {

namespace {

std::string num(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

void check_aligned(const Dataset& dataset, const std::vector<Action>& policy) {
  if (policy.size() != static_cast<std::size_t>(dataset.size()))
    throw DataError("OPE: one policy action per row required");
}

/// Multiplicity of each row in one bootstrap resample.
std::vector<std::int32_t> resample_counts(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::int32_t> counts(n, 0);
  for (std::size_t k = 0; k < n; ++k) ++counts[rng.below(n)];
  return counts;
}

struct Summary {
  double low = 0.0;
  double high = 0.0;
  double sd = 0.0;
  int n_valid = 0;
};

Summary summarize(std::vector<double> values, double level) {
  Summary s;
  s.n_valid = static_cast<int>(values.size());
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  const double alpha = 1.0 - level;
  s.low = quantile_sorted(values, 0.5 * alpha);
  s.high = quantile_sorted(values, 1.0 - 0.5 * alpha);
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  s.sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
  return s;
}

void validate_options(const BootstrapOptions& options) {
  if (options.n_reps < 2) throw ConfigError("bootstrap: n_reps must be >= 2");
  if (!(options.level > 0.0 && options.level < 1.0)) throw ConfigError("bootstrap: level must lie in (0, 1)");
}

std::vector<Eigen::Index> rank_descending(const Eigen::Ref<const Eigen::VectorXd>& scores,
                                          const std::vector<std::int64_t>& ids) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[static_cast<std::size_t>(a)] < ids[static_cast<std::size_t>(b)];
  });
  return order;
}

std::vector<OpeCurvePoint> sweep(const Dataset& dataset, const Eigen::Ref<const Eigen::VectorXd>& scores, int n_grid,
                                 const BootstrapOptions& options, std::uint64_t bootstrap_seed) {
  const auto n = dataset.size();
  const auto order = rank_descending(scores, dataset.ids());
  const Eigen::VectorXd e = dataset.propensities();
  const auto& a = dataset.actions();
  const auto& y = dataset.outcomes();

  std::vector<Eigen::Index> ks;
  std::vector<OpeCurvePoint> points;
  for (int g = 0; g <= n_grid; ++g) {
    const double fraction = static_cast<double>(g) / static_cast<double>(n_grid);
    const auto k = static_cast<Eigen::Index>(std::llround(fraction * static_cast<double>(n)));
    ks.push_back(k);
    OpeCurvePoint point;
    point.fraction = fraction;
    try {
      point.estimate = snips(dataset, top_k_policy(scores, dataset.ids(), k));
    } catch (const NumericalError&) {
      point.estimate.degenerate = true;
    }
    points.push_back(point);
  }

  // One pass per resample over the score order yields every grid point: the
  // top-k policy matches treated rows ranked above k and control rows below.
  const auto n_points = points.size();
  std::vector<std::vector<double>> values(static_cast<std::size_t>(options.n_reps));
  parallel_for(static_cast<std::size_t>(options.n_reps), [&](std::size_t rep) {
    const auto counts = resample_counts(static_cast<std::size_t>(n), derive_seed(bootstrap_seed, rep));
    double ctrl_num = 0, ctrl_den = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (a[i] == 0) {
        const double w = counts[static_cast<std::size_t>(i)] / (1.0 - e[i]);
        ctrl_num += w * y[i];
        ctrl_den += w;
      }
    }
    auto& out = values[rep];
    out.assign(n_points, std::numeric_limits<double>::quiet_NaN());
    double t_num = 0, t_den = 0, c_num = ctrl_num, c_den = ctrl_den;
    Eigen::Index pos = 0;
    for (std::size_t g = 0; g < n_points; ++g) {
      for (; pos < ks[g]; ++pos) {
        const auto i = order[static_cast<std::size_t>(pos)];
        const double c = counts[static_cast<std::size_t>(i)];
        if (a[i] == 1) {
          const double w = c / e[i];
          t_num += w * y[i];
          t_den += w;
        } else {
          const double w = c / (1.0 - e[i]);
          c_num -= w * y[i];
          c_den -= w;
        }
      }
      const double den = t_den + c_den;
      if (den > 1e-12) out[g] = (t_num + c_num) / den;
    }
  });

  for (std::size_t g = 0; g < n_points; ++g) {
    std::vector<double> column;
    column.reserve(values.size());
    for (const auto& rep : values)
      if (!std::isnan(rep[g])) column.push_back(rep[g]);
    auto& est = points[g].estimate;
    est.n_degenerate_resamples = options.n_reps - static_cast<int>(column.size());
    if (est.degenerate || 2 * est.n_degenerate_resamples > options.n_reps) {
      est.degenerate = true;
      continue;
    }
    const auto s = summarize(std::move(column), options.level);
    est.ci_low = std::min(s.low, est.value);
    est.ci_high = std::max(s.high, est.value);
    est.standard_error = s.sd;
  }
  return points;
}

}  // namespace

Eigen::VectorXd importance_weights(const Eigen::Ref<const Eigen::VectorXi>& actions,
                                   const Eigen::Ref<const Eigen::VectorXd>& propensities,
                                   const std::vector<Action>& policy) {
  if (actions.size() != propensities.size() || policy.size() != static_cast<std::size_t>(actions.size()))
    throw DataError("importance_weights: actions, propensities and policy must align");
  Eigen::VectorXd w(actions.size());
  for (Eigen::Index i = 0; i < actions.size(); ++i) {
    const double e = propensities[i];
    if (!(e > 0.0 && e < 1.0)) throw DataError("importance_weights: propensities must lie in (0, 1)");
    const bool matched = to_int(policy[static_cast<std::size_t>(i)]) == actions[i];
    w[i] = matched ? 1.0 / (actions[i] == 1 ? e : 1.0 - e) : 0.0;
  }
  return w;
}

double snips_value(const Eigen::Ref<const Eigen::VectorXd>& weights, const Eigen::Ref<const Eigen::VectorXd>& outcomes) {
  if (weights.size() != outcomes.size()) throw DataError("snips: weights and outcomes must align");
  const double total = weights.sum();
  if (!(total > 0.0)) throw NumericalError("snips: no overlap (the policy never matches a logged action)");
  return weights.dot(outcomes) / total;
}

OpeEstimate snips(const Dataset& dataset, const std::vector<Action>& policy) {
  check_aligned(dataset, policy);
  const Eigen::VectorXd w = importance_weights(dataset.actions(), dataset.propensities(), policy);
  OpeEstimate est;
  est.value = snips_value(w, dataset.outcomes().cast<double>());
  est.ci_low = est.ci_high = est.value;
  const double total = w.sum();
  est.effective_sample_size = total * total / w.squaredNorm();
  est.n_matched = (w.array() > 0.0).count();
  return est;
}

BootstrapInterval bootstrap_ci(const Dataset& dataset, const std::vector<Action>& policy,
                               const BootstrapOptions& options) {
  validate_options(options);
  check_aligned(dataset, policy);
  const Eigen::VectorXd w = importance_weights(dataset.actions(), dataset.propensities(), policy);
  if (!(w.sum() > 0.0)) throw NumericalError("bootstrap_ci: no overlap (the policy never matches a logged action)");
  const Eigen::VectorXd y = dataset.outcomes().cast<double>();
  const auto n = static_cast<std::size_t>(dataset.size());

  std::vector<double> values(static_cast<std::size_t>(options.n_reps), std::numeric_limits<double>::quiet_NaN());
  parallel_for(values.size(), [&](std::size_t rep) {
    const auto counts = resample_counts(n, derive_seed(options.seed, rep));
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double cw = counts[i] * w[static_cast<Eigen::Index>(i)];
      num += cw * y[static_cast<Eigen::Index>(i)];
      den += cw;
    }
    if (den > 0.0) values[rep] = num / den;
  });
  std::vector<double> valid;
  for (double v : values)
    if (!std::isnan(v)) valid.push_back(v);
  BootstrapInterval ci;
  ci.n_reps = options.n_reps;
  ci.n_degenerate = options.n_reps - static_cast<int>(valid.size());
  if (2 * ci.n_degenerate > options.n_reps)
    throw NumericalError("bootstrap_ci: " + std::to_string(ci.n_degenerate) + " of " + std::to_string(options.n_reps) +
                         " resamples have zero weight (overlap too poor)");
  const auto s = summarize(std::move(valid), options.level);
  ci.low = s.low;
  ci.high = s.high;
  ci.standard_error = s.sd;
  return ci;
}

OpeEstimate evaluate_policy(const Dataset& dataset, const std::vector<Action>& policy, const BootstrapOptions& options) {
  OpeEstimate est = snips(dataset, policy);
  const auto ci = bootstrap_ci(dataset, policy, options);
  est.ci_low = std::min(ci.low, est.value);
  est.ci_high = std::max(ci.high, est.value);
  est.standard_error = ci.standard_error;
  est.n_degenerate_resamples = ci.n_degenerate;
  return est;
}

std::vector<Action> top_k_policy(const Eigen::Ref<const Eigen::VectorXd>& scores, const std::vector<std::int64_t>& ids,
                                 Eigen::Index k) {
  if (static_cast<Eigen::Index>(ids.size()) != scores.size()) throw DataError("top_k_policy: scores and ids must align");
  if (k < 0 || k > scores.size()) throw ConfigError("top_k_policy: k out of range");
  std::vector<Action> policy(static_cast<std::size_t>(scores.size()), Action::NoContact);
  const auto order = rank_descending(scores, ids);
  for (Eigen::Index r = 0; r < k; ++r) policy[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = Action::Contact;
  return policy;
}

OpeCurve ope_curve(const Dataset& dataset, const Eigen::Ref<const Eigen::VectorXd>& scores, int n_grid,
                   const BootstrapOptions& options) {
  validate_options(options);
  if (n_grid < 1) throw ConfigError("ope_curve: n_grid must be >= 1");
  if (scores.size() != dataset.size()) throw DataError("ope_curve: one score per row required");
  if (dataset.empty()) throw DataError("ope_curve: empty dataset");
  OpeCurve curve;
  curve.by_score = sweep(dataset, scores, n_grid, options, derive_seed(options.seed, "ope_curve.cate"));

  Rng rng(derive_seed(options.seed, "ope_curve.random_order"));
  const auto id_order = dataset.id_order();
  Eigen::VectorXd random_scores(dataset.size());
  for (auto i : id_order) random_scores[i] = rng.uniform();
  curve.by_random = sweep(dataset, random_scores, n_grid, options, derive_seed(options.seed, "ope_curve.random"));
  return curve;
}

const PolicyValueEntry& PolicyValueReport::get(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return e;
  throw DataError("policy value report has no entry '" + name + "'");
}

PolicyValueReport policy_value_report(const Dataset& dataset, const Eigen::Ref<const Eigen::VectorXd>& cate_scores,
                                      const std::vector<Action>& existing_actions, double threshold,
                                      const BootstrapOptions& options, const std::string& propensity_source) {
  if (cate_scores.size() != dataset.size()) throw DataError("policy_value_report: one score per row required");
  check_aligned(dataset, existing_actions);
  const auto n = static_cast<std::size_t>(dataset.size());
  std::vector<Action> new_policy(n), always(n, Action::Contact), never(n, Action::NoContact);
  for (std::size_t i = 0; i < n; ++i)
    new_policy[i] = cate_scores[static_cast<Eigen::Index>(i)] >= threshold ? Action::Contact : Action::NoContact;

  auto rate = [](const std::vector<Action>& p) {
    if (p.empty()) return 0.0;
    double c = 0;
    for (auto a : p) c += to_int(a);
    return c / static_cast<double>(p.size());
  };
  PolicyValueReport report;
  report.propensity_source = propensity_source;
  report.threshold = threshold;
  const std::pair<const char*, const std::vector<Action>*> policies[] = {
      {"new", &new_policy}, {"existing", &existing_actions}, {"always", &always}, {"never", &never}};
  // One shared resample stream, so the four estimates are paired and equal policies agree exactly.
  for (const auto& [name, p] : policies) report.entries.push_back({name, evaluate_policy(dataset, *p, options), rate(*p)});
  return report;
}

double oracle_policy_value(const Dataset& dataset, const std::vector<Action>& policy) {
  check_aligned(dataset, policy);
  if (dataset.empty()) throw DataError("oracle_policy_value: empty dataset");
  double total = 0.0;
  for (Eigen::Index i = 0; i < dataset.size(); ++i) {
    const auto& po = dataset.row(i).potential_outcomes;
    if (!po) throw DataError("oracle_policy_value: potential outcomes required");
    total += (*po)[policy[static_cast<std::size_t>(i)]];
  }
  return total / static_cast<double>(dataset.size());
}

void write_ope_curve_csv(const std::filesystem::path& path, const OpeCurve& curve) {
  std::ostringstream out;
  out << "fraction,value,ci_low,ci_high,ess,ordering\n";
  auto emit = [&](const std::vector<OpeCurvePoint>& points, const char* ordering) {
    for (const auto& p : points) {
      const auto& e = p.estimate;
      if (e.degenerate) {
        out << num(p.fraction) << ",nan,nan,nan,0," << ordering << '\n';
      } else {
        out << num(p.fraction) << ',' << num(e.value) << ',' << num(e.ci_low) << ',' << num(e.ci_high) << ','
            << num(e.effective_sample_size) << ',' << ordering << '\n';
      }
    }
  };
  emit(curve.by_score, "cate");
  emit(curve.by_random, "random");
  write_text_atomic(path, out.str());
}

nlohmann::json to_json(const OpeEstimate& e) {
  return {{"value", e.value},
          {"ci_low", e.ci_low},
          {"ci_high", e.ci_high},
          {"standard_error", e.standard_error},
          {"effective_sample_size", e.effective_sample_size},
          {"n_matched", e.n_matched},
          {"n_degenerate_resamples", e.n_degenerate_resamples},
          {"degenerate", e.degenerate}};
}

nlohmann::json to_json(const PolicyValueReport& report) {
  nlohmann::json policies = nlohmann::json::object();
  for (const auto& e : report.entries) {
    auto j = to_json(e.estimate);
    j["contact_rate"] = e.contact_rate;
    policies[e.name] = j;
  }
  return {{"propensity_source", report.propensity_source}, {"threshold", report.threshold}, {"policies", policies}};
}

}  // namespace upolicy
