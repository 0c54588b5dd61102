#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <deque>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "upolicy/data.hpp"
#include "upolicy/document.hpp"
#include "upolicy/error.hpp"
#include "upolicy/evaluation.hpp"
#include "upolicy/events.hpp"
#include "upolicy/experiment.hpp"
#include "upolicy/logistic.hpp"
#include "upolicy/ope.hpp"
#include "upolicy/parallel.hpp"
#include "upolicy/pipeline.hpp"
#include "upolicy/policy.hpp"
#include "upolicy/random.hpp"
#include "upolicy/uplift_forest.hpp"

namespace upolicy::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Artifact names shared between steps.
constexpr const char* kTrain = "train.csv";
constexpr const char* kTest = "test.csv";
constexpr const char* kSelected = "selected_features.json";
constexpr const char* kPropensityModel = "propensity_model.json";
constexpr const char* kTrimmed = "train_trimmed.csv";
constexpr const char* kEnsemble = "ensemble.json";
constexpr const char* kPolicy = "policy.json";
constexpr const char* kTrialCounts = "trial_counts.csv";

template <typename T>
T cfg(const json& config, const std::string& dotted) {
  const json* node = &config;
  std::size_t start = 0;
  for (;;) {
    const auto dot = dotted.find('.', start);
    const auto part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("missing config key '" + dotted + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  try {
    return node->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + dotted + "' has the wrong type");
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

struct Step {
  std::string name;
  int day = 0;  // 0 when the step is not tied to an episode
  std::vector<std::string> outputs;
  double seconds = 0.0;
  bool skipped = false;
};

/// State of one CLI invocation.
class Context {
 public:
  Context(json config, fs::path staging, std::optional<fs::path> in) : config_(std::move(config)), root_(std::move(staging)), in_(std::move(in)) {
    seed_ = cfg<std::uint64_t>(config_, "seed");
  }

  const json& config() const { return config_; }
  std::uint64_t seed(std::string_view label) const { return derive_seed(seed_, label); }
  std::uint64_t master_seed() const { return seed_; }

  /// Switches artifact reads and writes to the per-day subdirectory (0 = top level).
  void enter_day(int day) {
    day_ = day;
    fs::create_directories(write_dir());
  }
  int day() const { return day_; }
  int episode_day() const { return day_ > 0 ? day_ : cfg<int>(config_, "data.episode_day"); }

  fs::path write_dir() const { return day_ > 0 ? root_ / ("day_" + std::to_string(day_)) : root_; }

  fs::path output(const std::string& name) {
    current_->outputs.push_back(day_ > 0 ? "day_" + std::to_string(day_) + "/" + name : name);
    return write_dir() / name;
  }

  /// Staged artifacts of this run win over those of an earlier run in the input directory.
  std::optional<fs::path> find(const std::string& name) {
    std::vector<fs::path> candidates;
    if (day_ > 0) candidates.push_back(write_dir() / name);
    candidates.push_back(root_ / name);
    if (in_) {
      if (day_ > 0) candidates.push_back(*in_ / ("day_" + std::to_string(day_)) / name);
      candidates.push_back(*in_ / name);
    }
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      if (!fs::exists(candidates[k])) continue;
      if (!candidates[k].string().starts_with(root_.string())) record_input(candidates[k]);
      return candidates[k];
    }
    return std::nullopt;
  }

  fs::path require_artifact(const std::string& name, const std::string& producer) {
    auto p = find(name);
    if (!p) throw DataError("missing input artifact '" + name + "' (run '" + producer + "' first or pass --in)");
    return *p;
  }

  void record_input(const fs::path& path) { inputs_[path.string()] = hex64(fnv1a(read_file(path))); }

  void run_step(const std::string& name, const std::function<void()>& body) {
    steps_.push_back({name, day_, {}, 0.0, false});
    current_ = &steps_.back();
    const auto t0 = std::chrono::steady_clock::now();
    body();
    steps_.back().seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  void skip_step(const std::string& name) { steps_.push_back({name, day_, {}, 0.0, true}); }

  json manifest(const std::string& command) const {
    auto doc = make_document("upolicy.run_manifest", 1);
    doc["tool_version"] = kToolVersion;
    doc["command"] = command;
    doc["config_hash"] = config_hash(config_);
    doc["seed"] = seed_;
    doc["threads"] = max_threads();
    doc["input_hashes"] = inputs_;
    json steps = json::array();
    for (const auto& s : steps_) {
      json j = {{"name", s.name}, {"outputs", s.outputs}, {"seconds", s.seconds}};
      if (s.day > 0) j["day"] = s.day;
      if (s.skipped) j["skipped"] = true;
      steps.push_back(std::move(j));
    }
    doc["steps"] = std::move(steps);
    return doc;
  }

 private:
  json config_;
  fs::path root_;
  std::optional<fs::path> in_;
  std::uint64_t seed_ = 0;
  int day_ = 0;
  std::deque<Step> steps_;
  Step* current_ = nullptr;
  std::map<std::string, std::string> inputs_;
};

// ---------------------------------------------------------------------------
// Shared loading helpers

Dataset load_episode(Context& ctx, const char* name, const std::string& producer) {
  const auto path = ctx.require_artifact(name, producer);
  const auto all = load_dataset(path, cfg<int>(ctx.config(), "data.horizon_days"));
  const auto days = episode_days(all);
  const int day = ctx.episode_day();
  if (days.size() == 1 && days.front() == day) return all;
  auto slice = slice_episode(all, day);
  if (slice.empty()) throw DataError(std::string(name) + " has no rows for episode day " + std::to_string(day));
  return slice;
}

std::optional<std::vector<std::string>> selected_features(Context& ctx) {
  const auto path = ctx.find(kSelected);
  if (!path) return std::nullopt;
  const auto doc = read_document(*path);
  check_document(doc, "upolicy.selected_features", 1);
  return require<std::vector<std::string>>(doc, "selected");
}

Dataset project(Context& ctx, const Dataset& ds) {
  const auto selected = selected_features(ctx);
  return selected ? select_features(ds, *selected) : ds;
}

bool estimated_propensity(const json& config) {
  const auto source = cfg<std::string>(config, "propensity.source");
  if (source != "true" && source != "estimated")
    throw ConfigError("propensity.source must be 'true' or 'estimated', got '" + source + "'");
  return source == "estimated";
}

/// Propensities for `ds` (full feature set): logged values, or the fitted model's.
Eigen::VectorXd propensities_for(Context& ctx, const Dataset& ds) {
  if (!estimated_propensity(ctx.config())) {
    if (!ds.has_propensities())
      throw DataError("propensity.source is 'true' but the data has no propensity column (set propensity.source=estimated)");
    return ds.propensities();
  }
  const auto model = logistic_from_json(read_document(ctx.require_artifact(kPropensityModel, "fit-propensity")));
  return predict_proba(model, ds);
}

UpliftEnsemble load_ensemble(Context& ctx) {
  return ensemble_from_json(read_document(ctx.require_artifact(kEnsemble, "train")));
}

LoadedPolicy load_policy_artifact(Context& ctx) { return load_policy(ctx.require_artifact(kPolicy, "policy-export")); }

std::string num(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

// ---------------------------------------------------------------------------
// Steps

void step_synth(Context& ctx) {
  const auto& c = ctx.config();
  const auto n_train = cfg<std::int64_t>(c, "synthetic.n_train");
  const auto n_test = cfg<std::int64_t>(c, "synthetic.n_test");
  const int n_days = cfg<int>(c, "synthetic.n_days");
  if (n_train < 2 || n_test < 2) throw ConfigError("synthetic.n_train and synthetic.n_test must be >= 2");
  if (n_days < 1) throw ConfigError("synthetic.n_days must be >= 1");
  const auto base = ctx.seed("synthetic");
  std::vector<Dataset> train_parts, test_parts;
  for (int d = 1; d <= n_days; ++d) {
    for (int part = 0; part < 2; ++part) {
      const bool is_train = part == 0;
      const auto n = is_train ? n_train : n_test;
      auto spec = two_segment_spec(n, derive_seed(derive_seed(base, is_train ? "train" : "test"), d),
                                   cfg<double>(c, "synthetic.positive_share"));
      spec.day_index = d;
      spec.horizon_days = cfg<int>(c, "data.horizon_days");
      spec.extreme_propensity_fraction = cfg<double>(c, "synthetic.extreme_propensity_fraction");
      spec.logging_intercept = cfg<double>(c, "synthetic.logging_intercept");
      spec.logging_coefficients = cfg<std::vector<double>>(c, "synthetic.logging_coefficients");
      spec.id_offset = is_train ? (d - 1) * n_train : n_days * n_train + (d - 1) * n_test;
      (is_train ? train_parts : test_parts).push_back(generate_synthetic(spec));
    }
  }
  save_dataset(concatenate(train_parts), ctx.output(kTrain));
  save_dataset(concatenate(test_parts), ctx.output(kTest));
}

void step_ingest(Context& ctx) {
  const auto& c = ctx.config();
  const auto train_path = cfg<std::string>(c, "data.train_path");
  if (train_path.empty()) throw ConfigError("ingest needs data.train_path");
  const int horizon = cfg<int>(c, "data.horizon_days");
  ctx.record_input(train_path);
  LoadReport train_report, test_report;
  Dataset train = load_dataset(train_path, horizon, &train_report);
  Dataset test;
  const auto test_path = cfg<std::string>(c, "data.test_path");
  if (!test_path.empty()) {
    ctx.record_input(test_path);
    test = load_dataset(test_path, horizon, &test_report);
  } else {
    auto split = split_holdout(train, cfg<double>(c, "data.holdout_fraction"), ctx.seed("holdout"));
    train = std::move(split.train);
    test = std::move(split.holdout);
  }
  if (train.feature_names() != test.feature_names())
    throw DataError("train and test files encode different feature columns");
  save_dataset(train, ctx.output(kTrain));
  save_dataset(test, ctx.output(kTest));

  auto report = make_document("upolicy.ingest_report", 1);
  report["n_train"] = train.size();
  report["n_test"] = test.size();
  report["n_rejected_day0"] = train_report.n_rejected + test_report.n_rejected;
  report["episode_days"] = episode_days(train);
  report["schema_hash"] = schema_hash(train.feature_names());
  report["has_propensities"] = train.has_propensities();
  report["has_potential_outcomes"] = test.has_potential_outcomes();

  const auto events_path = cfg<std::string>(c, "data.events_path");
  if (!events_path.empty()) {
    const auto date_text = cfg<std::string>(c, "data.decision_date");
    const auto date = parse_date(date_text);
    if (!date) throw ConfigError("data.decision_date must be YYYY-MM-DD when data.events_path is set");
    ctx.record_input(events_path);
    const auto labels = label_all(load_events(events_path), *date, cfg<int>(c, "data.decision_hour"));
    std::ostringstream out;
    out << "lead_id,label\n";
    std::map<std::string, std::int64_t> tally;
    for (const auto& l : labels) {
      out << l.lead_id << ',' << to_string(l.label) << '\n';
      ++tally[to_string(l.label)];
    }
    write_text_atomic(ctx.output("action_labels.csv"), out.str());
    report["action_labels"] = tally;
  }
  write_document(ctx.output("ingest_report.json"), report);
}

void step_select_features(Context& ctx) {
  const auto& c = ctx.config();
  const auto train = load_episode(ctx, kTrain, "synth");
  const auto report = feature_importance_filter(train, cfg<int>(c, "feature_selection.n_bins"));
  std::vector<std::string> selected;
  if (cfg<bool>(c, "feature_selection.enabled"))
    selected = select_top_k(report, cfg<int>(c, "feature_selection.top_k"));
  else
    selected = train.schema().raw_names();

  std::ostringstream out;
  out << "rank,feature,score,bins\n";
  for (std::size_t r = 0; r < report.ranking.size(); ++r) {
    const auto k = report.ranking[r];
    out << r + 1 << ',' << report.features[k] << ',' << num(report.scores[k]) << ',' << report.bins_per_feature[k]
        << '\n';
  }
  write_text_atomic(ctx.output("feature_importance.csv"), out.str());
  auto doc = make_document("upolicy.selected_features", 1);
  doc["selected"] = selected;
  doc["n_candidates"] = report.features.size();
  write_document(ctx.output(kSelected), doc);
}

void step_fit_propensity(Context& ctx) {
  const auto& c = ctx.config();
  const auto train = load_episode(ctx, kTrain, "synth");
  LogisticOptions opts;
  opts.l2 = cfg<double>(c, "propensity.l2");
  opts.max_iter = cfg<int>(c, "propensity.max_iter");
  const auto model = fit_logistic(train, LogisticTarget::Action, opts);
  write_document(ctx.output(kPropensityModel), to_json(model));

  const Eigen::VectorXd fitted = predict_proba(model, train);
  auto summary = make_document("upolicy.propensity_summary", 1);
  summary["converged"] = model.converged;
  summary["n_iterations"] = model.n_iterations;
  summary["min"] = fitted.minCoeff();
  summary["max"] = fitted.maxCoeff();
  summary["mean"] = fitted.mean();
  if (train.has_propensities()) summary["mean_abs_error_vs_logged"] = (fitted - train.propensities()).cwiseAbs().mean();
  write_document(ctx.output("propensity_summary.json"), summary);
}

void step_trim(Context& ctx) {
  const auto& c = ctx.config();
  const auto train = load_episode(ctx, kTrain, "synth");
  const auto result = trim_positivity(train, propensities_for(ctx, train), cfg<double>(c, "trimming.low"),
                                      cfg<double>(c, "trimming.high"));
  if (result.dataset.empty()) throw DataError("trimming removed every row");
  save_dataset(result.dataset, ctx.output(kTrimmed));
  auto doc = make_document("upolicy.trim_report", 1);
  doc.update(to_json(result.report));
  doc["low"] = cfg<double>(c, "trimming.low");
  doc["high"] = cfg<double>(c, "trimming.high");
  doc["propensity_source"] = cfg<std::string>(c, "propensity.source");
  write_document(ctx.output("trim_report.json"), doc);
}

TreeParams tree_params(const json& c) {
  TreeParams p;
  p.max_depth = cfg<int>(c, "forest.max_depth");
  p.min_leaf_per_arm = cfg<int>(c, "forest.min_leaf_per_arm");
  p.mtry = cfg<int>(c, "forest.mtry");
  try {
    p.divergence = divergence_from_string(cfg<std::string>(c, "forest.divergence"));
  } catch (const Error& e) {
    throw ConfigError(std::string("forest.divergence: ") + e.what());
  }
  p.smoothing = cfg<double>(c, "forest.smoothing");
  p.max_thresholds = cfg<int>(c, "forest.max_thresholds");
  p.validate();
  return p;
}

Dataset training_rows(Context& ctx) {
  if (ctx.find(kTrimmed)) return load_episode(ctx, kTrimmed, "trim");
  return load_episode(ctx, kTrain, "synth");
}

void step_train(Context& ctx) {
  const auto& c = ctx.config();
  const auto train = project(ctx, training_rows(ctx));
  const int n_forests = cfg<int>(c, "forest.n_forests");
  const int n_trees = cfg<int>(c, "forest.n_trees");
  if (n_forests < 1 || n_trees < 1) throw ConfigError("forest.n_forests and forest.n_trees must be >= 1");
  const auto seed = derive_seed(ctx.seed("forest"), static_cast<std::uint64_t>(ctx.episode_day()));
  const auto ensemble = fit_ensemble(train, tree_params(c), n_trees, n_forests, seed);
  write_document(ctx.output(kEnsemble), to_json(ensemble));
}

QiniReference qini_reference(const json& c, const Dataset& test) {
  const auto name = cfg<std::string>(c, "evaluation.qini_reference");
  if (name == "auto") return test.has_true_cate() ? QiniReference::GroundTruthRanking : QiniReference::OutcomeOptimal;
  if (name == "ground_truth_ranking") return QiniReference::GroundTruthRanking;
  if (name == "outcome_optimal") return QiniReference::OutcomeOptimal;
  throw ConfigError("evaluation.qini_reference must be auto, ground_truth_ranking or outcome_optimal");
}

void step_evaluate(Context& ctx) {
  const auto& c = ctx.config();
  const auto ensemble = load_ensemble(ctx);
  const auto test_full = load_episode(ctx, kTest, "synth");
  const auto test = project(ctx, test_full).with_propensities(propensities_for(ctx, test_full));
  const Eigen::VectorXd cate = predict_cate(ensemble, test);
  const auto reference = qini_reference(c, test);

  const auto model_curve = qini_curve(cate, test);
  const auto ref_curve = reference_curve(test, reference);
  write_qini_csv(ctx.output("qini.csv"), model_curve, &ref_curve);

  // Predictive baseline: rank by P(outcome | x) from a logistic model on the training rows.
  const auto train = project(ctx, training_rows(ctx));
  const auto outcome_model = fit_logistic(train, LogisticTarget::Outcome);
  const Eigen::VectorXd predictive = predict_proba(outcome_model, test);

  const auto calib = calibration(cate, test, cfg<int>(c, "evaluation.calibration_bins"), cfg<double>(c, "evaluation.level"));
  write_calibration_csv(ctx.output("calibration.csv"), calib);

  auto doc = make_document("upolicy.evaluation", 1);
  doc["n_test"] = test.size();
  doc["qini_reference"] = to_string(reference);
  doc["qini_coefficient"] = qini_coefficient(model_curve, ref_curve);
  doc["predictive_qini_coefficient"] = qini_coefficient(qini_curve(predictive, test), ref_curve);
  doc["predictive_auc"] = roc_auc(predictive, test.outcomes());
  doc["calibration"] = to_json(calib);
  write_document(ctx.output("evaluation.json"), doc);
}

BootstrapOptions bootstrap_options(Context& ctx) {
  BootstrapOptions o;
  o.n_reps = cfg<int>(ctx.config(), "ope.bootstrap_reps");
  o.level = cfg<double>(ctx.config(), "ope.level");
  o.seed = derive_seed(ctx.seed("ope"), static_cast<std::uint64_t>(ctx.episode_day()));
  return o;
}

void step_ope(Context& ctx) {
  const auto& c = ctx.config();
  const auto ensemble = load_ensemble(ctx);
  const auto test_full = load_episode(ctx, kTest, "synth");
  const auto test = project(ctx, test_full).with_propensities(propensities_for(ctx, test_full));
  const Eigen::VectorXd cate = predict_cate(ensemble, test);
  const auto options = bootstrap_options(ctx);
  write_ope_curve_csv(ctx.output("ope_curve.csv"), ope_curve(test, cate, cfg<int>(c, "ope.n_grid"), options));

  std::vector<Action> existing;
  existing.reserve(static_cast<std::size_t>(test.size()));
  for (const auto& r : test.rows()) existing.push_back(r.action);
  const auto report = policy_value_report(test, cate, existing, cfg<double>(c, "policy.threshold"), options,
                                          cfg<std::string>(c, "propensity.source"));
  auto doc = make_document("upolicy.policy_values", 1);
  doc.update(to_json(report));
  if (test.has_potential_outcomes()) {
    json oracle = json::object();
    for (const auto& e : report.entries) {
      std::vector<Action> p;
      if (e.name == "new")
        p = recommend_from_scores(cate, report.threshold).actions;
      else if (e.name == "existing")
        p = existing;
      else
        p.assign(static_cast<std::size_t>(test.size()), e.name == "always" ? Action::Contact : Action::NoContact);
      oracle[e.name] = oracle_policy_value(test, p);
    }
    doc["oracle_values"] = oracle;
  }
  write_document(ctx.output("policy_values.json"), doc);
}

void step_policy_export(Context& ctx) {
  const auto& c = ctx.config();
  const auto ensemble = load_ensemble(ctx);
  const auto train = training_rows(ctx);
  ThresholdPolicy policy;
  policy.model_id = model_id(ensemble);
  policy.threshold = cfg<double>(c, "policy.threshold");
  const auto& ids = train.ids();
  policy.metadata.training_range = "ids " + std::to_string(*std::min_element(ids.begin(), ids.end())) + "-" +
                                   std::to_string(*std::max_element(ids.begin(), ids.end())) + ", day " +
                                   std::to_string(ctx.episode_day());
  policy.metadata.episode_day = ctx.episode_day();
  const auto selected = selected_features(ctx);
  policy.metadata.feature_subset = selected ? *selected : train.schema().raw_names();
  save_policy(policy, ensemble, ctx.output(kPolicy));

  const auto test = project(ctx, load_episode(ctx, kTest, "synth"));
  write_recommendations_csv(ctx.output("recommendations.csv"), test, recommend_batch(policy, ensemble, test));
}

void step_distill(Context& ctx) {
  const auto loaded = load_policy_artifact(ctx);
  const auto test = project(ctx, load_episode(ctx, kTest, "synth"));
  const auto tree =
      distill_surrogate(loaded.policy, loaded.ensemble, test, cfg<int>(ctx.config(), "surrogate.max_depth"));
  write_document(ctx.output("surrogate.json"), to_json(tree));
  write_text_atomic(ctx.output("surrogate.txt"), tree.describe());
}

TrialConfig trial_config(Context& ctx) {
  const auto& c = ctx.config();
  TrialConfig t;
  t.assignment_probability = cfg<double>(c, "trial.assignment_probability");
  t.treatment_compliance = cfg<double>(c, "trial.treatment_compliance");
  t.control_contact_model.constant_rate = cfg<double>(c, "trial.control_contact_rate");
  t.control_contact_model.intercept = cfg<double>(c, "trial.control_intercept");
  t.control_contact_model.coefficients = cfg<std::vector<double>>(c, "trial.control_coefficients");
  t.horizon_days = cfg<int>(c, "data.horizon_days");
  t.seed = derive_seed(ctx.seed("trial"), static_cast<std::uint64_t>(ctx.episode_day()));
  return t;
}

void step_trial_simulate(Context& ctx) {
  const auto loaded = load_policy_artifact(ctx);
  const auto test = project(ctx, load_episode(ctx, kTest, "synth"));
  const auto recs = recommend_batch(loaded.policy, loaded.ensemble, test);
  const auto result = simulate_trial(test, recs.actions, trial_config(ctx));
  write_trial_csv(ctx.output("trial_items.csv"), result);
  save_counts(counts_table(result), ctx.output(kTrialCounts));
}

void step_trial_analyze(Context& ctx) {
  const auto& c = ctx.config();
  const auto counts_path = cfg<std::string>(c, "trial.counts_path");
  fs::path path;
  if (!counts_path.empty()) {
    path = counts_path;
    ctx.record_input(path);
  } else {
    path = ctx.require_artifact(kTrialCounts, "trial-simulate");
  }
  AnalysisOptions o;
  o.level = cfg<double>(c, "analysis.level");
  o.expected_control_share = cfg<double>(c, "analysis.expected_control_share");
  o.srm_threshold = cfg<double>(c, "analysis.srm_threshold");
  const auto test = cfg<std::string>(c, "analysis.test");
  if (test == "pooled_z")
    o.test = ProportionTest::PooledZ;
  else if (test == "welch")
    o.test = ProportionTest::Welch;
  else
    throw ConfigError("analysis.test must be pooled_z or welch, got '" + test + "'");
  const auto analysis = analyze_trial(load_counts(path), o);
  write_document(ctx.output("trial_analysis.json"), to_json(analysis));
  write_analysis_csv(ctx.output("trial_table.csv"), analysis);
}

using StepFn = void (*)(Context&);

const std::vector<std::pair<std::string, StepFn>>& steps() {
  static const std::vector<std::pair<std::string, StepFn>> table = {
      {"synth", step_synth},
      {"ingest", step_ingest},
      {"select-features", step_select_features},
      {"fit-propensity", step_fit_propensity},
      {"trim", step_trim},
      {"train", step_train},
      {"evaluate", step_evaluate},
      {"ope", step_ope},
      {"policy-export", step_policy_export},
      {"distill", step_distill},
      {"trial-simulate", step_trial_simulate},
      {"trial-analyze", step_trial_analyze},
  };
  return table;
}

StepFn step_fn(const std::string& name) {
  for (const auto& [n, fn] : steps())
    if (n == name) return fn;
  throw ConfigError("unknown command '" + name + "'");
}

bool world_has_potential_outcomes(Context& ctx) {
  return load_episode(ctx, kTest, "synth").has_potential_outcomes();
}

void run_pipeline(Context& ctx) {
  const auto& c = ctx.config();
  const auto source = cfg<std::string>(c, "data.source");
  if (source == "synthetic")
    ctx.run_step("synth", [&] { step_synth(ctx); });
  else if (source == "csv")
    ctx.run_step("ingest", [&] { step_ingest(ctx); });
  else
    throw ConfigError("data.source must be 'synthetic' or 'csv', got '" + source + "'");

  const int repeat = cfg<int>(c, "pipeline.repeat_days");
  if (repeat < 0) throw ConfigError("pipeline.repeat_days must be >= 0");
  std::vector<int> days;
  if (repeat == 0)
    days.push_back(0);
  else
    for (int d = 1; d <= repeat; ++d) days.push_back(d);

  const bool simulate = world_has_potential_outcomes(ctx);
  const bool analyze = simulate || !cfg<std::string>(c, "trial.counts_path").empty();
  for (int d : days) {
    ctx.enter_day(d);
    for (const auto& [name, fn] : steps()) {
      if (name == "synth" || name == "ingest") continue;
      if (name == "fit-propensity" && !estimated_propensity(c)) {
        ctx.skip_step(name);
        continue;
      }
      if ((name == "trial-simulate" && !simulate) || (name == "trial-analyze" && !analyze)) {
        ctx.skip_step(name);
        continue;
      }
      ctx.run_step(name, [&, fn = fn] { fn(ctx); });
    }
  }
  ctx.enter_day(0);
}

void move_contents(const fs::path& from, const fs::path& to) {
  fs::create_directories(to);
  for (const auto& entry : fs::directory_iterator(from)) {
    const auto target = to / entry.path().filename();
    if (entry.is_directory()) {
      move_contents(entry.path(), target);
    } else {
      fs::rename(entry.path(), target);
    }
  }
}

std::string one_line(std::string s) {
  for (auto& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [name, fn] : steps()) n.push_back(name);
    n.push_back("pipeline");
    return n;
  }();
  return names;
}

void run_command(const std::string& name, const json& config, const RunOptions& options) {
  if (name != "pipeline") step_fn(name);  // validates the name before touching the disk
  const fs::path out = options.out.empty() ? fs::path(cfg<std::string>(config, "output_dir")) : options.out;
  const fs::path staging = out.string() + ".staging";
  const fs::path failed = out.string() + ".failed";
  fs::remove_all(staging);
  fs::create_directories(staging);
  std::optional<fs::path> in = options.in;
  if (!in && fs::exists(out)) in = out;

  Context ctx(config, staging, in);
  try {
    for (const auto& f : options.config_files) ctx.record_input(f);
    if (name == "pipeline")
      run_pipeline(ctx);
    else
      ctx.run_step(name, [&] { step_fn(name)(ctx); });
    write_document(staging / "effective_config.json", config);
    write_document(staging / "manifest.json", ctx.manifest(name));
  } catch (const std::exception& e) {
    fs::remove_all(failed);
    std::error_code ec;
    fs::rename(staging, failed, ec);
    if (!ec) write_text_atomic(failed / "error.txt", one_line(e.what()) + "\n");
    throw;
  }
  move_contents(staging, out);
  fs::remove_all(staging);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Uplift policy learning, off-policy evaluation and trial analysis"};
  app.require_subcommand(1);
  std::optional<std::string> config_file;
  std::vector<std::string> overrides;
  std::string out_dir, in_dir;
  unsigned threads = 0;
  int repeat_days = -1;

  for (const auto& name : command_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("-c,--config", config_file, "JSON configuration file");
    sub->add_option("--set", overrides, "Override a config value: dotted.key=value")->allow_extra_args(false);
    sub->add_option("-o,--out", out_dir, "Output directory (default: output_dir from the config)");
    sub->add_option("-i,--in", in_dir, "Directory holding artifacts of earlier steps");
    sub->add_option("--threads", threads, "Worker thread cap (0 = hardware concurrency)");
    if (name == "pipeline") sub->add_option("--repeat-days", repeat_days, "Train one model per episode day 1..D");
  }

  auto fail = [&](const char* category, int code, const std::string& message) {
    json line = {{"error", {{"category", category}, {"exit_code", code}, {"message", one_line(message)}}}};
    err << line.dump() << '\n';
    return code;
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    return fail("usage", 1, e.what());
  }

  const auto* chosen = app.get_subcommands().front();
  try {
    if (threads > 0) set_max_threads(threads);
    std::vector<std::string> all = overrides;
    if (repeat_days >= 0) all.push_back("pipeline.repeat_days=" + std::to_string(repeat_days));
    std::optional<fs::path> file;
    if (config_file) file = *config_file;
    const auto config = load_config(file, all);
    RunOptions options;
    options.out = out_dir;
    if (!in_dir.empty()) options.in = in_dir;
    if (file) options.config_files.push_back(*file);
    run_command(chosen->get_name(), config, options);
    return 0;
  } catch (const Error& e) {
    const char* category = e.category() == Error::Category::Usage  ? "usage"
                           : e.category() == Error::Category::Data ? "data"
                                                                   : "numerical";
    return fail(category, e.exit_code(), e.what());
  } catch (const fs::filesystem_error& e) {
    return fail("data", 2, e.what());
  } catch (const std::exception& e) {
    return fail("numerical", 3, e.what());
  }
}

}  // namespace upolicy::pipeline
