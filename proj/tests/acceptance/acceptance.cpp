// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "upolicy/data.hpp"
#include "upolicy/document.hpp"
#include "upolicy/evaluation.hpp"
#include "upolicy/experiment.hpp"
#include "upolicy/logistic.hpp"
#include "upolicy/ope.hpp"
#include "upolicy/parallel.hpp"
#include "upolicy/pipeline.hpp"
#include "upolicy/policy.hpp"
#include "upolicy/random.hpp"
#include "upolicy/uplift_forest.hpp"

using namespace upolicy;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = UPOLICY_SOURCE_DIR;
const fs::path kWork = fs::temp_directory_path() / "upolicy_acceptance";
constexpr std::uint64_t kSeed = 20240101;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int criterion, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << criterion << ": " << o.detail << std::endl;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "upolicy");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = pipeline::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

nlohmann::json doc(const fs::path& path) { return read_document(path); }

bool within(double x, double lo, double hi) { return x >= lo && x <= hi; }

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
    files[fs::relative(e.path(), root).string()] = fixtures::slurp(e.path());
  }
  return files;
}

std::vector<Action> constant_policy(Eigen::Index n, Action a) { return std::vector<Action>(static_cast<std::size_t>(n), a); }

// ---------------------------------------------------------------------------

Outcome trial_reanalysis() {
  const auto out = kWork / "trial";
  const auto counts = kSource / "data" / "reference_trial_counts.csv";
  const auto start = Clock::now();
  const int code = cli({"trial-analyze", "--set", "trial.counts_path=" + counts.string(), "-o", out.string()});
  const double elapsed = seconds_since(start);
  if (code != 0) return {false, "trial-analyze exited with " + std::to_string(code)};
  const auto a = doc(out / "trial_analysis.json");
  const double p = a["overall"]["one_sided_p"], srm = a["srm_p"];
  const double abs_effect = a["overall"]["absolute_effect"], rel = a["overall"]["relative_effect"];
  const double contact = a["subgroups"]["contact"]["absolute_effect"];
  const double no_contact = a["subgroups"]["no_contact"]["absolute_effect"];
  const double ci_low = a["overall"]["treatment"]["ci_low"], ci_high = a["overall"]["treatment"]["ci_high"];
  const bool pass = within(p, 0.023, 0.029) && within(srm, 0.30, 0.34) && std::abs(abs_effect - 0.019) <= 0.001 &&
                    std::abs(rel - 0.22) <= 0.01 && std::abs(contact - 0.018) <= 0.001 &&
                    std::abs(no_contact - 0.024) <= 0.001 && std::abs(ci_low - 0.0911) <= 0.005 &&
                    std::abs(ci_high - 0.1202) <= 0.005 && elapsed < 1.0;
  return {pass, "p=" + fmt("%.4f", p) + " srm_p=" + fmt("%.4f", srm) + " effect=" + fmt("%.4f", abs_effect) +
                    " relative=" + fmt("%.4f", rel) + " contact=" + fmt("%+.4f", contact) +
                    " no_contact=" + fmt("%+.4f", no_contact) + " treatment CI=[" + fmt("%.4f", ci_low) + ", " +
                    fmt("%.4f", ci_high) + "] runtime=" + fmt("%.3f", elapsed) + "s"};
}

Outcome qini_separation(const fs::path& run, double train_seconds, double pipeline_seconds) {
  const auto e = doc(run / "evaluation.json");
  const double q = e["qini_coefficient"], qp = e["predictive_qini_coefficient"];
  const bool pass = e["qini_reference"] == "ground_truth_ranking" && q >= 0.4 && q - qp >= 0.3 &&
                    train_seconds < 300.0 && pipeline_seconds < 300.0;
  return {pass, "uplift Qini=" + fmt("%.3f", q) + " predictive Qini=" + fmt("%.3f", qp) +
                    " (n_test=" + std::to_string(e["n_test"].get<int>()) + ", single-thread train " +
                    fmt("%.1f", train_seconds) + "s, whole pipeline " + fmt("%.1f", pipeline_seconds) + "s)"};
}

Outcome snips_consistency() {
  int covered = 0;
  const int reps = 50;
  const auto start = Clock::now();
  double worst = 0.0;
  for (int r = 0; r < reps; ++r) {
    auto spec = two_segment_spec(50000, derive_seed(kSeed, "acceptance.snips." + std::to_string(r)));
    spec.logging_intercept = 0.2;
    spec.logging_coefficients = {0.6, -0.4, 0.3};
    const auto world = generate_synthetic(spec);
    const auto policy = recommend_from_scores(world.true_cate(), 0.0).actions;
    const auto est = evaluate_policy(world, policy, {200, 0.95, derive_seed(kSeed, static_cast<std::uint64_t>(r))});
    const double z = std::abs(est.value - oracle_policy_value(world, policy)) / est.standard_error;
    worst = std::max(worst, z);
    covered += z <= 2.0;
  }
  const double elapsed = seconds_since(start);
  return {covered >= 45 && elapsed < 300.0, std::to_string(covered) + "/50 replications within 2 bootstrap SEs (max " +
                                                fmt("%.2f", worst) + " SE, " + fmt("%.1f", elapsed) + "s)"};
}

struct CurveCheck {
  bool endpoints_exact = false;
  double best = 0.0, best_fraction = 0.0, gap_never = 0.0, need_never = 0.0, gap_always = 0.0, need_always = 0.0;
  bool separated() const { return gap_never > need_never && gap_always > need_always; }
};

CurveCheck check_curve(const Dataset& world, const Eigen::VectorXd& scores) {
  const auto curve = ope_curve(world, scores, 50, {200, 0.95, derive_seed(kSeed, "acceptance.ope")});
  CurveCheck c;
  const auto never = snips(world, constant_policy(world.size(), Action::NoContact));
  const auto always = snips(world, constant_policy(world.size(), Action::Contact));
  const auto& first = curve.by_score.front().estimate;
  const auto& last = curve.by_score.back().estimate;
  c.endpoints_exact = first.value == never.value && last.value == always.value &&
                      curve.by_random.front().estimate.value == never.value &&
                      curve.by_random.back().estimate.value == always.value;
  const auto best = std::max_element(curve.by_score.begin(), curve.by_score.end(),
                                     [](const auto& a, const auto& b) { return a.estimate.value < b.estimate.value; });
  c.best = best->estimate.value;
  c.best_fraction = best->fraction;
  const double hb = best->estimate.ci_halfwidth();
  c.gap_never = c.best - first.value;
  c.need_never = 2.0 * std::hypot(hb, first.ci_halfwidth());
  c.gap_always = c.best - last.value;
  c.need_always = 2.0 * std::hypot(hb, last.ci_halfwidth());
  return c;
}

Outcome ope_curve_contract(const fs::path& run) {
  const auto ensemble = ensemble_from_json(doc(run / "ensemble.json"));

  // The pipeline's own held-out set: endpoint identity on the written artifact too.
  const auto test = load_dataset(run / "test.csv");
  const auto test_check = check_curve(test, predict_cate(ensemble, select_features(test, ensemble.feature_names)));
  bool csv_exact = false;
  {
    std::istringstream csv(fixtures::slurp(run / "ope_curve.csv"));
    std::string line, first_value, last_value;
    std::getline(csv, line);
    while (std::getline(csv, line)) {
      if (line.substr(line.rfind(',') + 1) != "cate") continue;
      const auto f = line.find(',');
      const auto v = line.substr(f + 1, line.find(',', f + 1) - f - 1);
      if (first_value.empty()) first_value = v;
      last_value = v;
    }
    csv_exact = std::stod(first_value) == snips(test, constant_policy(test.size(), Action::NoContact)).value &&
                std::stod(last_value) == snips(test, constant_policy(test.size(), Action::Contact)).value;
  }

  // Fresh, larger evaluation draw from the same world, scored by the same model.
  const auto world = generate_synthetic(two_segment_spec(20000, derive_seed(kSeed, "acceptance.ope_world")));
  const auto c = check_curve(world, predict_cate(ensemble, select_features(world, ensemble.feature_names)));
  const bool pass = c.endpoints_exact && test_check.endpoints_exact && csv_exact && c.separated();
  return {pass, std::string("endpoints bit-exact=") + (c.endpoints_exact && test_check.endpoints_exact ? "yes" : "no") +
                    " csv=" + (csv_exact ? "yes" : "no") + "; n=20000: max " + fmt("%.4f", c.best) + " at " +
                    fmt("%.2f", c.best_fraction) + ", gap to never " + fmt("%.4f", c.gap_never) + " > " +
                    fmt("%.4f", c.need_never) + ", gap to always " + fmt("%.4f", c.gap_always) + " > " +
                    fmt("%.4f", c.need_always) + "; n=5000 test set: gaps " + fmt("%.4f", test_check.gap_never) +
                    "/" + fmt("%.4f", test_check.need_never) + ", " + fmt("%.4f", test_check.gap_always) + "/" +
                    fmt("%.4f", test_check.need_always)};
}

Outcome policy_improvement(const fs::path& run) {
  const auto v = doc(run / "policy_values.json");
  const double fresh = v["oracle_values"]["new"], always = v["oracle_values"]["always"];
  const double never = v["oracle_values"]["never"], rate = v["policies"]["new"]["contact_rate"];
  const bool pass = fresh >= std::max(always, never) + 0.02 && std::abs(rate - 0.6) <= 0.07;
  return {pass, "oracle new=" + fmt("%.4f", fresh) + " always=" + fmt("%.4f", always) + " never=" +
                    fmt("%.4f", never) + " contact rate=" + fmt("%.4f", rate) + " (segment share 0.60)"};
}

Outcome trimming() {
  auto spec = two_segment_spec(50000, derive_seed(kSeed, "acceptance.trim"));
  spec.extreme_propensity_fraction = 0.02;
  const auto world = generate_synthetic(spec);
  std::set<std::int64_t> expected;
  std::int64_t flagged = 0;
  for (const auto& r : world.rows()) {
    if (*r.propensity == 0.005 || *r.propensity == 0.995)
      ++flagged;
    else
      expected.insert(r.id);
  }
  const auto trimmed = trim_positivity(world, world.propensities());
  const std::set<std::int64_t> kept(trimmed.dataset.ids().begin(), trimmed.dataset.ids().end());
  const bool exact = kept == expected;

  // Default configuration, with true and with estimated propensities.
  double removed_true = 1.0, removed_estimated = 1.0;
  const auto base = kWork / "trim_default";
  if (cli({"synth", "-o", base.string()}) == 0 && cli({"trim", "-o", base.string()}) == 0)
    removed_true = doc(base / "trim_report.json")["removed_fraction"];
  const auto est = kWork / "trim_estimated";
  const std::string set = "propensity.source=estimated";
  if (cli({"synth", "-o", est.string()}) == 0 && cli({"fit-propensity", "--set", set, "-o", est.string()}) == 0 &&
      cli({"trim", "--set", set, "-o", est.string()}) == 0)
    removed_estimated = doc(est / "trim_report.json")["removed_fraction"];
  const bool pass = exact && flagged > 0 && removed_true < 0.01 && removed_estimated < 0.01;
  return {pass, std::string("removed set equals the ") + std::to_string(flagged) + " flagged rows: " +
                    (exact ? "yes" : "no") + "; default config removes " + fmt("%.4f", removed_true) +
                    " (true PS), " + fmt("%.4f", removed_estimated) + " (estimated PS)"};
}

Outcome invariants() {
  std::vector<std::string> broken;
  auto check = [&](bool ok, const char* name) {
    if (!ok) broken.push_back(name);
  };

  const auto world = generate_synthetic(two_segment_spec(20000, derive_seed(kSeed, "acceptance.invariants")));
  const auto policy = recommend_from_scores(world.true_cate(), 0.0).actions;

  // SNIPS boundedness and scale invariance.
  const auto w = importance_weights(world.actions(), world.propensities(), policy);
  const Eigen::VectorXd y = world.outcomes().cast<double>();
  const double v = snips_value(w, y);
  check(v >= 0.0 && v <= 1.0 && snips_value(8.0 * w, y) == v && std::abs(snips_value(3.7 * w, y) - v) < 1e-14,
        "snips");

  // Qini rank invariance and endpoint identity.
  Rng rng(derive_seed(kSeed, "acceptance.scores"));
  Eigen::VectorXd scores(world.size());
  for (Eigen::Index i = 0; i < world.size(); ++i) scores[i] = rng.normal();
  const auto curve = qini_curve(scores, world);
  const auto monotone = qini_curve(scores.unaryExpr([](double s) { return 5.0 * std::atan(s) + 2.0; }), world);
  bool same = curve.points.size() == monotone.points.size();
  for (std::size_t k = 0; same && k < curve.points.size(); ++k) same = curve.points[k].value == monotone.points[k].value;
  double yt = 0, yc = 0, nt = 0, nc = 0;
  for (Eigen::Index i = 0; i < world.size(); ++i) {
    (world.actions()[i] ? yt : yc) += world.outcomes()[i];
    (world.actions()[i] ? nt : nc) += 1;
  }
  check(same && std::abs(curve.endpoint() - (yt - yc * nt / nc)) < 1e-9, "qini");

  // Ensemble mean exactness and leaf minimums.
  TreeParams params;
  params.max_depth = 6;
  params.min_leaf_per_arm = 25;
  const auto small = world.subset([&] {
    std::vector<Eigen::Index> idx(5000);
    for (Eigen::Index i = 0; i < 5000; ++i) idx[static_cast<std::size_t>(i)] = i;
    return idx;
  }());
  const auto ensemble = fit_ensemble(small, params, 5, 3, derive_seed(kSeed, "acceptance.ensemble"));
  double worst_mean = 0.0;
  for (Eigen::Index i = 0; i < 200; ++i) {
    const Eigen::VectorXd x = small.design().row(i).transpose();
    double forest_mean = 0.0;
    for (const auto& f : ensemble.forests) {
      double tree_mean = 0.0;
      for (const auto& t : f.trees) tree_mean += t.predict(x);
      forest_mean += tree_mean / static_cast<double>(f.trees.size());
    }
    worst_mean = std::max(worst_mean, std::abs(predict_cate(ensemble, x) - forest_mean / 3.0));
  }
  check(worst_mean <= 1e-12, "ensemble mean");
  bool leaves_ok = true;
  const auto tree = fit_tree(small, params, 3);
  for (const auto& node : tree.nodes)
    if (node.is_leaf() && (node.stats.n_t < params.min_leaf_per_arm || node.stats.n_c < params.min_leaf_per_arm))
      leaves_ok = false;
  for (const auto& f : ensemble.forests)
    for (const auto& t : f.trees)
      for (const auto& node : t.nodes)
        if (node.is_leaf() && (node.stats.n_t < params.min_leaf_per_arm || node.stats.n_c < params.min_leaf_per_arm))
          leaves_ok = false;
  check(leaves_ok, "min_leaf_per_arm");

  // Logistic gradient against central differences.
  Eigen::MatrixXd Z(50, 4);
  Eigen::VectorXd labels(50);
  for (int i = 0; i < 50; ++i) {
    Z(i, 0) = 1.0;
    for (int j = 1; j < 4; ++j) Z(i, j) = rng.normal();
    labels[i] = rng.uniform() < 0.4;
  }
  double worst_grad = 0.0;
  for (int t = 0; t < 20; ++t) {
    Eigen::VectorXd beta(4);
    for (int j = 0; j < 4; ++j) beta[j] = rng.normal();
    const auto g = logistic_objective::gradient(Z, labels, beta, 0.01);
    for (int j = 0; j < 4; ++j) {
      Eigen::VectorXd up = beta, down = beta;
      up[j] += 1e-6;
      down[j] -= 1e-6;
      const double fd = (logistic_objective::value(Z, labels, up, 0.01) - logistic_objective::value(Z, labels, down, 0.01)) / 2e-6;
      worst_grad = std::max(worst_grad, std::abs(g[j] - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  check(worst_grad <= 1e-5, "logistic gradient");

  // Null-effect test calibration.
  std::vector<int> rejected(200, 0);
  parallel_for(200, [&](std::size_t t) {
    SyntheticSpec null_spec;
    null_spec.n_rows = 2000;
    null_spec.seed = derive_seed(kSeed, "acceptance.null_world." + std::to_string(t));
    const auto null_world = generate_synthetic(null_spec);
    TrialConfig cfg;
    cfg.seed = derive_seed(kSeed, "acceptance.null_trial." + std::to_string(t));
    const auto a = analyze_trial(simulate_trial(null_world, constant_policy(2000, Action::Contact), cfg));
    rejected[t] = a.overall.one_sided_p < 0.05;
  });
  const double rate = std::accumulate(rejected.begin(), rejected.end(), 0) / 200.0;
  check(std::abs(rate - 0.05) <= 0.03, "null calibration");

  std::string detail = "snips, qini, ensemble mean (max dev " + fmt("%.1e", worst_mean) + "), gradient (max rel " +
                       fmt("%.1e", worst_grad) + "), leaf minimum, null rejection rate " + fmt("%.3f", rate);
  for (const auto& b : broken) detail += "; broken: " + b;
  return {broken.empty(), detail};
}

Outcome determinism(const fs::path& a, const fs::path& b, const fs::path& c) {
  const auto sa = snapshot(a), sb = snapshot(b), sc = snapshot(c);
  std::vector<std::string> diffs;
  for (const auto* other : {&sb, &sc})
    for (const auto& [name, text] : sa) {
      const auto it = other->find(name);
      if (it == other->end() || it->second != text) diffs.push_back(name);
    }
  const bool pass = diffs.empty() && sa.size() == sb.size() && sa.size() == sc.size() && sa.size() > 10;
  std::string detail = std::to_string(sa.size()) + " data artifacts compared across two --threads 1 runs and a --threads 8 run";
  if (!diffs.empty()) detail += "; differing: " + diffs.front();
  return {pass, detail};
}

Outcome surrogate_fidelity(const fs::path& run) {
  const auto s = doc(run / "surrogate.json");
  const double fidelity = s["fidelity"];
  const int depth = s["max_depth"];
  return {fidelity >= 0.9 && depth <= 4, "fidelity " + fmt("%.4f", fidelity) + " at depth " + std::to_string(depth)};
}

}  // namespace

int main() {
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  const auto config = (kSource / "configs" / "two_segment.json").string();
  const auto run_a = kWork / "run_a", run_b = kWork / "run_b", run_c = kWork / "run_c";

  report(1, trial_reanalysis);

  const auto start = Clock::now();
  const bool ran = cli({"pipeline", "-c", config, "-o", run_a.string(), "--threads", "1"}) == 0;
  const double pipeline_seconds = seconds_since(start);
  double train_seconds = 1e9;
  if (ran) {
    const auto manifest = doc(run_a / "manifest.json");
    for (const auto& step : manifest["steps"])
      if (step["name"] == "train") train_seconds = step["seconds"];
  }

  report(2, [&] {
    return ran ? qini_separation(run_a, train_seconds, pipeline_seconds) : Outcome{false, "pipeline failed"};
  });
  report(3, snips_consistency);
  report(4, [&] { return ran ? ope_curve_contract(run_a) : Outcome{false, "pipeline failed"}; });
  report(5, [&] { return ran ? policy_improvement(run_a) : Outcome{false, "pipeline failed"}; });
  report(6, trimming);
  report(7, invariants);
  report(8, [&] {
    const bool ok = ran && cli({"pipeline", "-c", config, "-o", run_b.string(), "--threads", "1"}) == 0 &&
                    cli({"pipeline", "-c", config, "-o", run_c.string(), "--threads", "8"}) == 0;
    set_max_threads(0);
    return ok ? determinism(run_a, run_b, run_c) : Outcome{false, "pipeline failed"};
  });
  report(9, [&] { return ran ? surrogate_fidelity(run_a) : Outcome{false, "pipeline failed"}; });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
