#include "upolicy/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <tuple>

#include "upolicy/document.hpp"
#include "upolicy/error.hpp"
#include "upolicy/random.hpp"
#include "upolicy/stats.hpp"

namespace upolicy {

namespace {

constexpr const char* kCountsHeader = "group,recommendation,n,deliveries,contacts,compliant";

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

std::string num(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out(1);
  for (char c : line) {
    if (c == ',')
      out.emplace_back();
    else if (c != '\r')
      out.back().push_back(c);
  }
  return out;
}

std::int64_t parse_count(const std::string& text, const char* column, int line) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || v < 0)
    throw DataError("counts line " + std::to_string(line) + ": " + column + " must be a non-negative integer, got '" +
                    text + "'");
  return v;
}

ArmSummary summarize(const std::vector<CountsRow>& counts, Arm arm, const Action* recommendation, double level) {
  ArmSummary s;
  std::int64_t contacts = 0, compliant = 0;
  for (const auto& r : counts) {
    if (r.group != arm || (recommendation && r.recommendation != *recommendation)) continue;
    s.n += r.n;
    s.deliveries += r.deliveries;
    contacts += r.contacts;
    compliant += r.compliant;
  }
  if (s.n == 0) {
    s.delivery_rate = s.ci_low = s.ci_high = s.compliance_rate = s.contact_rate =
        std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  const double n = static_cast<double>(s.n);
  s.delivery_rate = static_cast<double>(s.deliveries) / n;
  std::tie(s.ci_low, s.ci_high) = proportion_ci(s.deliveries, s.n, level);
  s.compliance_rate = static_cast<double>(compliant) / n;
  s.contact_rate = static_cast<double>(contacts) / n;
  return s;
}

Comparison compare(const std::vector<CountsRow>& counts, const Action* recommendation, const AnalysisOptions& options) {
  Comparison c;
  c.control = summarize(counts, Arm::Control, recommendation, options.level);
  c.treatment = summarize(counts, Arm::Treatment, recommendation, options.level);
  if (c.control.n == 0 || c.treatment.n == 0) {
    c.absolute_effect = c.relative_effect = c.one_sided_p = std::numeric_limits<double>::quiet_NaN();
    return c;
  }
  c.absolute_effect = c.treatment.delivery_rate - c.control.delivery_rate;
  c.relative_effect = c.control.delivery_rate > 0.0 ? c.absolute_effect / c.control.delivery_rate : 0.0;
  if (c.control.deliveries + c.treatment.deliveries == 0 ||
      c.control.deliveries + c.treatment.deliveries == c.control.n + c.treatment.n) {
    // Identical all-0 or all-1 arms: no evidence either way.
    c.one_sided_p = 0.5;
  } else {
    c.one_sided_p =
        two_proportion_test(c.control.deliveries, c.control.n, c.treatment.deliveries, c.treatment.n, options.test)
            .p_value;
  }
  return c;
}

nlohmann::json arm_json(const ArmSummary& s) {
  return {{"n", s.n},
          {"deliveries", s.deliveries},
          {"delivery_rate", s.delivery_rate},
          {"ci_low", s.ci_low},
          {"ci_high", s.ci_high},
          {"compliance_rate", s.compliance_rate},
          {"contact_rate", s.contact_rate}};
}

nlohmann::json comparison_json(const Comparison& c) {
  return {{"control", arm_json(c.control)},
          {"treatment", arm_json(c.treatment)},
          {"absolute_effect", c.absolute_effect},
          {"relative_effect", c.relative_effect},
          {"one_sided_p", c.one_sided_p}};
}

}  // namespace

double ControlContactModel::contact_probability(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (coefficients.empty()) return constant_rate;
  if (static_cast<Eigen::Index>(coefficients.size()) != x.size())
    throw DataError("control contact model: " + std::to_string(coefficients.size()) + " coefficients for " +
                    std::to_string(x.size()) + " features");
  double eta = intercept;
  for (Eigen::Index j = 0; j < x.size(); ++j) eta += coefficients[static_cast<std::size_t>(j)] * x[j];
  return logistic(eta);
}

void ControlContactModel::validate() const {
  if (!is_probability(constant_rate)) throw ConfigError("control_contact_model.constant_rate must lie in [0, 1]");
}

void TrialConfig::validate() const {
  if (!is_probability(assignment_probability)) throw ConfigError("trial.assignment_probability must lie in [0, 1]");
  if (!is_probability(treatment_compliance)) throw ConfigError("trial.treatment_compliance must lie in [0, 1]");
  if (horizon_days < 1) throw ConfigError("trial.horizon_days must be >= 1");
  control_contact_model.validate();
}

std::string to_string(Arm arm) { return arm == Arm::Treatment ? "treatment" : "control"; }

TrialResult simulate_trial(const Dataset& world, const std::vector<Action>& recommendations, const TrialConfig& config) {
  config.validate();
  if (!world.has_potential_outcomes()) throw DataError("simulate_trial: the world must carry potential outcomes y0,y1");
  if (recommendations.size() != static_cast<std::size_t>(world.size()))
    throw DataError("simulate_trial: one recommendation per row required");
  TrialResult result;
  result.items.reserve(recommendations.size());
  Rng rng(derive_seed(config.seed, "trial"));
  for (Eigen::Index i = 0; i < world.size(); ++i) {
    // Three draws per row whatever the branch, so arms share one random stream layout.
    const double u_arm = rng.uniform();
    const double u_comply = rng.uniform();
    const double u_control = rng.uniform();
    TrialItem item;
    item.id = world.row(i).id;
    item.arm = u_arm < config.assignment_probability ? Arm::Treatment : Arm::Control;
    item.recommendation = recommendations[static_cast<std::size_t>(i)];
    const Action baseline =
        action_from_bool(u_control < config.control_contact_model.contact_probability(world.design().row(i).transpose()));
    if (item.arm == Arm::Treatment)
      item.executed = u_comply < config.treatment_compliance ? item.recommendation : baseline;
    else
      item.executed = baseline;
    item.outcome = (*world.row(i).potential_outcomes)[item.executed];
    (item.arm == Arm::Treatment ? result.n_treatment : result.n_control)++;
    result.items.push_back(item);
  }
  return result;
}

double srm_test(std::int64_t n_control, std::int64_t n_treatment, double expected_ratio) {
  if (n_control < 0 || n_treatment < 0 || n_control + n_treatment == 0)
    throw DataError("srm_test: arm sizes must be non-negative with a positive total");
  if (!(expected_ratio > 0.0 && expected_ratio < 1.0)) throw ConfigError("srm_test: expected_ratio must lie in (0, 1)");
  const double n = static_cast<double>(n_control + n_treatment);
  const double ec = n * expected_ratio;
  const double et = n - ec;
  const double dc = static_cast<double>(n_control) - ec;
  const double dt = static_cast<double>(n_treatment) - et;
  return chi2_sf_1dof(dc * dc / ec + dt * dt / et);
}

TestResult two_proportion_test(std::int64_t x1, std::int64_t n1, std::int64_t x2, std::int64_t n2,
                               ProportionTest kind) {
  if (n1 <= 0 || n2 <= 0) throw DataError("two_proportion_test: arm sizes must be positive");
  if (x1 < 0 || x2 < 0 || x1 > n1 || x2 > n2) throw DataError("two_proportion_test: need 0 <= x <= n in both arms");
  const double p1 = static_cast<double>(x1) / static_cast<double>(n1);
  const double p2 = static_cast<double>(x2) / static_cast<double>(n2);
  TestResult r;
  if (kind == ProportionTest::PooledZ) {
    const double pooled = static_cast<double>(x1 + x2) / static_cast<double>(n1 + n2);
    const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
    if (!(se > 0.0)) throw NumericalError("two_proportion_test: zero pooled variance (all outcomes identical)");
    r.statistic = (p2 - p1) / se;
    r.p_value = normal_sf(r.statistic);
    return r;
  }
  if (n1 < 2 || n2 < 2) throw DataError("two_proportion_test: Welch needs at least 2 items per arm");
  // Sample variances of the 0/1 outcomes.
  const double v1 = p1 * (1.0 - p1) * static_cast<double>(n1) / static_cast<double>(n1 - 1);
  const double v2 = p2 * (1.0 - p2) * static_cast<double>(n2) / static_cast<double>(n2 - 1);
  const double s1 = v1 / static_cast<double>(n1);
  const double s2 = v2 / static_cast<double>(n2);
  if (!(s1 + s2 > 0.0)) throw NumericalError("two_proportion_test: zero variance in both arms");
  r.statistic = (p2 - p1) / std::sqrt(s1 + s2);
  r.df = (s1 + s2) * (s1 + s2) /
         (s1 * s1 / static_cast<double>(n1 - 1) + s2 * s2 / static_cast<double>(n2 - 1));
  r.p_value = student_t_sf(r.statistic, r.df);
  return r;
}

std::pair<double, double> proportion_ci(std::int64_t x, std::int64_t n, double level) {
  if (n <= 0) throw DataError("proportion_ci: n must be positive");
  if (x < 0 || x > n) throw DataError("proportion_ci: need 0 <= x <= n");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("proportion_ci: level must lie in (0, 1)");
  const double z = normal_quantile(0.5 + 0.5 * level);
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(x) / nn;
  const double z2 = z * z;
  const double center = (p + z2 / (2.0 * nn)) / (1.0 + z2 / nn);
  const double half = z / (1.0 + z2 / nn) * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  double low = x == 0 ? 0.0 : std::max(0.0, center - half);
  double high = x == n ? 1.0 : std::min(1.0, center + half);
  return {low, high};
}

std::vector<CountsRow> counts_table(const TrialResult& result) {
  std::vector<CountsRow> rows;
  for (Arm arm : {Arm::Control, Arm::Treatment})
    for (Action rec : {Action::Contact, Action::NoContact}) rows.push_back({arm, rec, 0, 0, 0, 0});
  for (const auto& item : result.items) {
    auto& r = rows[static_cast<std::size_t>(item.arm == Arm::Treatment) * 2 +
                   static_cast<std::size_t>(item.recommendation == Action::NoContact)];
    ++r.n;
    r.deliveries += item.outcome;
    r.contacts += to_int(item.executed);
    r.compliant += item.executed == item.recommendation ? 1 : 0;
  }
  return rows;
}

std::vector<CountsRow> parse_counts(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("counts table is empty (header required)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCountsHeader) throw DataError("counts table header must be '" + std::string(kCountsHeader) + "'");
  std::vector<CountsRow> rows;
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line == "\r") continue;
    const auto f = split(line);
    if (f.size() != 6) throw DataError("counts line " + std::to_string(number) + ": expected 6 fields");
    CountsRow r;
    if (f[0] == "control")
      r.group = Arm::Control;
    else if (f[0] == "treatment")
      r.group = Arm::Treatment;
    else
      throw DataError("counts line " + std::to_string(number) + ": group must be control or treatment, got '" + f[0] +
                      "'");
    if (f[1] == "contact")
      r.recommendation = Action::Contact;
    else if (f[1] == "no_contact")
      r.recommendation = Action::NoContact;
    else
      throw DataError("counts line " + std::to_string(number) +
                      ": recommendation must be contact or no_contact, got '" + f[1] + "'");
    r.n = parse_count(f[2], "n", number);
    r.deliveries = parse_count(f[3], "deliveries", number);
    r.contacts = parse_count(f[4], "contacts", number);
    r.compliant = parse_count(f[5], "compliant", number);
    if (r.deliveries > r.n || r.contacts > r.n || r.compliant > r.n)
      throw DataError("counts line " + std::to_string(number) + ": counts exceed n");
    rows.push_back(r);
  }
  return rows;
}

std::vector<CountsRow> load_counts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open counts table " + path.string());
  return parse_counts(in);
}

void save_counts(const std::vector<CountsRow>& rows, const std::filesystem::path& path) {
  std::ostringstream out;
  out << kCountsHeader << '\n';
  for (const auto& r : rows)
    out << to_string(r.group) << ',' << (r.recommendation == Action::Contact ? "contact" : "no_contact") << ',' << r.n
        << ',' << r.deliveries << ',' << r.contacts << ',' << r.compliant << '\n';
  write_text_atomic(path, out.str());
}

TrialAnalysis analyze_trial(const std::vector<CountsRow>& counts, const AnalysisOptions& options) {
  TrialAnalysis a;
  a.options = options;
  a.overall = compare(counts, nullptr, options);
  if (a.overall.control.n == 0 || a.overall.treatment.n == 0)
    throw DataError("analyze_trial: both arms must be non-empty");
  a.srm_p = srm_test(a.overall.control.n, a.overall.treatment.n, options.expected_control_share);
  a.srm_detected = a.srm_p < options.srm_threshold;
  const Action contact = Action::Contact, no_contact = Action::NoContact;
  a.contact_recommended = compare(counts, &contact, options);
  a.no_contact_recommended = compare(counts, &no_contact, options);
  return a;
}

TrialAnalysis analyze_trial(const TrialResult& result, const AnalysisOptions& options) {
  return analyze_trial(counts_table(result), options);
}

nlohmann::json to_json(const TrialAnalysis& a) {
  auto doc = make_document("upolicy.trial_analysis", 1);
  doc["srm_p"] = a.srm_p;
  doc["srm_detected"] = a.srm_detected;
  doc["options"] = {{"level", a.options.level},
                    {"expected_control_share", a.options.expected_control_share},
                    {"srm_threshold", a.options.srm_threshold},
                    {"test", a.options.test == ProportionTest::Welch ? "welch" : "pooled_z"}};
  doc["overall"] = comparison_json(a.overall);
  doc["subgroups"] = {{"contact", comparison_json(a.contact_recommended)},
                      {"no_contact", comparison_json(a.no_contact_recommended)}};
  return doc;
}

void write_analysis_csv(const std::filesystem::path& path, const TrialAnalysis& a) {
  std::ostringstream out;
  out << "segment,group,n,deliveries,delivery_rate,ci_low,ci_high,compliance_rate,contact_rate,absolute_effect,"
         "relative_effect,one_sided_p\n";
  const std::pair<const char*, const Comparison*> segments[] = {
      {"all", &a.overall}, {"contact", &a.contact_recommended}, {"no_contact", &a.no_contact_recommended}};
  for (const auto& [name, c] : segments) {
    for (Arm arm : {Arm::Control, Arm::Treatment}) {
      const auto& s = arm == Arm::Control ? c->control : c->treatment;
      out << name << ',' << to_string(arm) << ',' << s.n << ',' << s.deliveries << ',' << num(s.delivery_rate) << ','
          << num(s.ci_low) << ',' << num(s.ci_high) << ',' << num(s.compliance_rate) << ',' << num(s.contact_rate);
      if (arm == Arm::Treatment)
        out << ',' << num(c->absolute_effect) << ',' << num(c->relative_effect) << ',' << num(c->one_sided_p) << '\n';
      else
        out << ",,,\n";
    }
  }
  write_text_atomic(path, out.str());
}

void write_trial_csv(const std::filesystem::path& path, const TrialResult& result) {
  std::ostringstream out;
  out << "id,arm,recommendation,executed_action,outcome\n";
  for (const auto& it : result.items)
    out << it.id << ',' << to_string(it.arm) << ',' << (it.recommendation == Action::Contact ? "contact" : "no_contact")
        << ',' << (it.executed == Action::Contact ? "contact" : "no_contact") << ',' << it.outcome << '\n';
  write_text_atomic(path, out.str());
}

}  // namespace upolicy
