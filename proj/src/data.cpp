#include "upolicy/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "upolicy/error.hpp"
#include "upolicy/random.hpp"
#include "upolicy/stats.hpp"

namespace upolicy {

namespace {

const std::vector<std::string> kBaseColumns = {"id", "day", "action", "outcome", "propensity", "true_cate", "y0", "y1"};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

template <typename T>
std::optional<T> parse_number(const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return value;
}

std::string row_context(std::int64_t row_number) { return "row " + std::to_string(row_number) + ": "; }

int parse_binary(const std::string& text, const char* column, std::int64_t row_number) {
  if (text == "0") return 0;
  if (text == "1") return 1;
  throw DataError(row_context(row_number) + column + " must be 0 or 1, got '" + text + "'");
}

void validate_row(const FeatureSchema& schema, const ObservationRow& row) {
  const std::string where = "id " + std::to_string(row.id) + ": ";
  if (row.day_index < 1) throw DataError(where + "day_index must be >= 1 (day 0 is excluded)");
  if (row.outcome != 0 && row.outcome != 1) throw DataError(where + "outcome must be binary");
  if (row.action != Action::Contact && row.action != Action::NoContact) throw DataError(where + "invalid action");
  if (row.features.numeric.size() != schema.numeric.size() ||
      row.features.categorical.size() != schema.categorical.size())
    throw DataError(where + "feature vector does not match the schema");
  for (std::size_t j = 0; j < schema.numeric.size(); ++j) {
    const auto& v = row.features.numeric[j];
    if (!v) {
      if (!schema.numeric[j].nullable)
        throw DataError(where + "missing value in non-nullable feature " + schema.numeric[j].name);
    } else if (!std::isfinite(*v)) {
      throw DataError(where + "non-finite value in feature " + schema.numeric[j].name);
    }
  }
  for (std::size_t j = 0; j < schema.categorical.size(); ++j) {
    const auto& v = row.features.categorical[j];
    if (v && (*v < 0 || *v >= static_cast<int>(schema.categorical[j].levels.size())))
      throw DataError(where + "category code out of range in feature " + schema.categorical[j].name);
  }
  if (row.propensity && !(*row.propensity > 0.0 && *row.propensity < 1.0))
    throw DataError(where + "propensity must lie in (0, 1)");
  if (row.true_cate && !(*row.true_cate >= -1.0 && *row.true_cate <= 1.0))
    throw DataError(where + "true_cate must lie in [-1, 1]");
  if (row.potential_outcomes) {
    const auto& po = *row.potential_outcomes;
    if ((po.y0 != 0 && po.y0 != 1) || (po.y1 != 0 && po.y1 != 1))
      throw DataError(where + "potential outcomes must be binary");
    if (po[row.action] != row.outcome) throw DataError(where + "outcome differs from the potential outcome of the action");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Schema

std::vector<std::string> FeatureSchema::encoded_names() const {
  std::vector<std::string> names;
  for (const auto& col : numeric) {
    names.push_back(col.name);
    if (col.nullable) names.push_back(col.name + "__missing");
  }
  for (const auto& col : categorical)
    for (const auto& level : col.levels) names.push_back(col.name + "=" + level);
  return names;
}

Eigen::Index FeatureSchema::encoded_size() const { return static_cast<Eigen::Index>(encoded_names().size()); }

std::vector<std::string> FeatureSchema::raw_names() const {
  std::vector<std::string> names;
  for (const auto& col : numeric) names.push_back(col.name);
  for (const auto& col : categorical) names.push_back(col.name);
  return names;
}

Eigen::VectorXd encode(const FeatureSchema& schema, const FeatureVector& features) {
  if (features.numeric.size() != schema.numeric.size() || features.categorical.size() != schema.categorical.size())
    throw DataError("feature vector does not match the schema");
  Eigen::VectorXd x = Eigen::VectorXd::Zero(schema.encoded_size());
  Eigen::Index k = 0;
  for (std::size_t j = 0; j < schema.numeric.size(); ++j) {
    const auto& v = features.numeric[j];
    x[k++] = v ? *v : kMissingSentinel;
    if (schema.numeric[j].nullable) x[k++] = v ? 0.0 : 1.0;
  }
  for (std::size_t j = 0; j < schema.categorical.size(); ++j) {
    const auto& code = features.categorical[j];
    if (code) x[k + *code] = 1.0;
    k += static_cast<Eigen::Index>(schema.categorical[j].levels.size());
  }
  return x;
}

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(FeatureSchema schema, std::vector<ObservationRow> rows, int horizon_days)
    : schema_(std::move(schema)), rows_(std::move(rows)), horizon_days_(horizon_days) {
  if (horizon_days_ < 1) throw DataError("horizon_days must be >= 1");
  for (const auto& col : schema_.categorical) {
    if (!std::is_sorted(col.levels.begin(), col.levels.end()) ||
        std::adjacent_find(col.levels.begin(), col.levels.end()) != col.levels.end())
      throw DataError("categorical levels of " + col.name + " must be sorted and unique");
  }
  std::unordered_set<std::int64_t> seen;
  seen.reserve(rows_.size());
  for (const auto& row : rows_) {
    if (!seen.insert(row.id).second) throw DataError("duplicate id " + std::to_string(row.id));
    validate_row(schema_, row);
  }
  feature_names_ = schema_.encoded_names();
  const auto n = static_cast<Eigen::Index>(rows_.size());
  design_.resize(n, static_cast<Eigen::Index>(feature_names_.size()));
  actions_.resize(n);
  outcomes_.resize(n);
  ids_.resize(rows_.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows_[static_cast<std::size_t>(i)];
    design_.row(i) = encode(schema_, row.features).transpose();
    actions_[i] = to_int(row.action);
    outcomes_[i] = row.outcome;
    ids_[static_cast<std::size_t>(i)] = row.id;
  }
}

bool Dataset::has_propensities() const {
  return std::all_of(rows_.begin(), rows_.end(), [](const auto& r) { return r.propensity.has_value(); });
}

bool Dataset::has_potential_outcomes() const {
  return std::all_of(rows_.begin(), rows_.end(), [](const auto& r) { return r.potential_outcomes.has_value(); });
}

bool Dataset::has_true_cate() const {
  return std::all_of(rows_.begin(), rows_.end(), [](const auto& r) { return r.true_cate.has_value(); });
}

Eigen::VectorXd Dataset::propensities() const {
  Eigen::VectorXd e(size());
  for (Eigen::Index i = 0; i < size(); ++i) {
    const auto& p = row(i).propensity;
    if (!p) throw DataError("id " + std::to_string(row(i).id) + ": propensity missing");
    e[i] = *p;
  }
  return e;
}

Eigen::VectorXd Dataset::true_cate() const {
  Eigen::VectorXd t(size());
  for (Eigen::Index i = 0; i < size(); ++i) {
    const auto& c = row(i).true_cate;
    if (!c) throw DataError("id " + std::to_string(row(i).id) + ": true_cate missing");
    t[i] = *c;
  }
  return t;
}

Dataset Dataset::subset(const std::vector<Eigen::Index>& positions) const {
  std::vector<ObservationRow> out;
  out.reserve(positions.size());
  for (auto p : positions) {
    if (p < 0 || p >= size()) throw DataError("subset position out of range");
    out.push_back(rows_[static_cast<std::size_t>(p)]);
  }
  return Dataset(schema_, std::move(out), horizon_days_);
}

Dataset Dataset::with_propensities(const Eigen::Ref<const Eigen::VectorXd>& propensities) const {
  if (propensities.size() != size()) throw DataError("one propensity per row required");
  std::vector<ObservationRow> out = rows_;
  for (std::size_t i = 0; i < out.size(); ++i) out[i].propensity = propensities[static_cast<Eigen::Index>(i)];
  return Dataset(schema_, std::move(out), horizon_days_);
}

Dataset Dataset::without_propensities() const {
  std::vector<ObservationRow> out = rows_;
  for (auto& r : out) r.propensity.reset();
  return Dataset(schema_, std::move(out), horizon_days_);
}

std::vector<Eigen::Index> Dataset::id_order() const {
  std::vector<Eigen::Index> order(rows_.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [this](Eigen::Index a, Eigen::Index b) {
    return ids_[static_cast<std::size_t>(a)] < ids_[static_cast<std::size_t>(b)];
  });
  return order;
}

// ---------------------------------------------------------------------------
// CSV I/O

Dataset parse_dataset(std::istream& in, int horizon_days, LoadReport* report) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("dataset file is empty (header required)");
  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> column_index;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!column_index.emplace(header[i], i).second) throw DataError("duplicate column '" + header[i] + "'");
  }
  for (const auto& required : kBaseColumns) {
    if (!column_index.count(required)) throw DataError("missing required column '" + required + "'");
  }

  std::vector<std::size_t> numeric_pos, categorical_pos;
  FeatureSchema schema;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto& name = header[i];
    if (std::find(kBaseColumns.begin(), kBaseColumns.end(), name) != kBaseColumns.end()) continue;
    if (name.size() > 2 && name.rfind("n_", 0) == 0) {
      numeric_pos.push_back(i);
      schema.numeric.push_back({name.substr(2), FeatureKind::Numeric, {}, false});
    } else if (name.size() > 2 && name.rfind("c_", 0) == 0) {
      categorical_pos.push_back(i);
      schema.categorical.push_back({name.substr(2), FeatureKind::Categorical, {}, false});
    } else {
      throw DataError("unknown column '" + name + "' (features need an n_ or c_ prefix)");
    }
  }

  struct RawRow {
    ObservationRow row;
    std::vector<std::string> labels;
  };
  std::vector<RawRow> raw;
  std::vector<std::set<std::string>> level_sets(categorical_pos.size());
  std::int64_t rejected = 0;
  std::int64_t row_number = 0;
  std::unordered_set<std::int64_t> seen_ids;

  auto field = [&](const std::vector<std::string>& f, const std::string& col) -> const std::string& {
    return f[column_index.at(col)];
  };

  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row_number;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw DataError(row_context(row_number) + "expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    RawRow r;
    auto id = parse_number<std::int64_t>(field(fields, "id"));
    if (!id) throw DataError(row_context(row_number) + "id must be an integer, got '" + field(fields, "id") + "'");
    r.row.id = *id;
    if (!seen_ids.insert(*id).second) throw DataError(row_context(row_number) + "duplicate id " + std::to_string(*id));
    auto day = parse_number<int>(field(fields, "day"));
    if (!day || *day < 0)
      throw DataError(row_context(row_number) + "day must be a non-negative integer, got '" + field(fields, "day") + "'");
    r.row.day_index = *day;
    r.row.action = action_from_bool(parse_binary(field(fields, "action"), "action", row_number) == 1);
    r.row.outcome = parse_binary(field(fields, "outcome"), "outcome", row_number);

    auto optional_real = [&](const std::string& col) -> std::optional<double> {
      const auto& text = field(fields, col);
      if (text.empty()) return std::nullopt;
      auto v = parse_number<double>(text);
      if (!v || !std::isfinite(*v)) throw DataError(row_context(row_number) + col + " is not a finite number: '" + text + "'");
      return v;
    };
    r.row.propensity = optional_real("propensity");
    if (r.row.propensity && !(*r.row.propensity > 0.0 && *r.row.propensity < 1.0))
      throw DataError(row_context(row_number) + "propensity must lie in (0, 1)");
    r.row.true_cate = optional_real("true_cate");
    const auto& y0 = field(fields, "y0");
    const auto& y1 = field(fields, "y1");
    if (y0.empty() != y1.empty()) throw DataError(row_context(row_number) + "y0 and y1 must both be present or both empty");
    if (!y0.empty()) {
      r.row.potential_outcomes = PotentialOutcomes{parse_binary(y0, "y0", row_number), parse_binary(y1, "y1", row_number)};
      if ((*r.row.potential_outcomes)[r.row.action] != r.row.outcome)
        throw DataError(row_context(row_number) + "outcome differs from the potential outcome of the logged action");
    }

    for (std::size_t j = 0; j < numeric_pos.size(); ++j) {
      const auto& text = fields[numeric_pos[j]];
      if (text.empty()) {
        r.row.features.numeric.push_back(std::nullopt);
        schema.numeric[j].nullable = true;
        continue;
      }
      auto v = parse_number<double>(text);
      if (!v || !std::isfinite(*v))
        throw DataError(row_context(row_number) + "feature " + header[numeric_pos[j]] + " is not a finite number: '" + text + "'");
      r.row.features.numeric.push_back(v);
    }
    for (std::size_t j = 0; j < categorical_pos.size(); ++j) {
      const auto& text = fields[categorical_pos[j]];
      r.labels.push_back(text);
      if (!text.empty()) level_sets[j].insert(text);
    }
    if (r.row.day_index == 0) {
      ++rejected;
      continue;
    }
    raw.push_back(std::move(r));
  }

  for (std::size_t j = 0; j < categorical_pos.size(); ++j)
    schema.categorical[j].levels.assign(level_sets[j].begin(), level_sets[j].end());

  std::vector<ObservationRow> rows;
  rows.reserve(raw.size());
  for (auto& r : raw) {
    for (std::size_t j = 0; j < categorical_pos.size(); ++j) {
      const auto& label = r.labels[j];
      if (label.empty()) {
        r.row.features.categorical.push_back(std::nullopt);
      } else {
        const auto& levels = schema.categorical[j].levels;
        const auto it = std::lower_bound(levels.begin(), levels.end(), label);
        r.row.features.categorical.push_back(static_cast<int>(it - levels.begin()));
      }
    }
    rows.push_back(std::move(r.row));
  }
  if (report) {
    report->n_rows = static_cast<std::int64_t>(rows.size());
    report->n_rejected = rejected;
  }
  return Dataset(std::move(schema), std::move(rows), horizon_days);
}

Dataset load_dataset(const std::filesystem::path& path, int horizon_days, LoadReport* report) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file " + path.string());
  return parse_dataset(in, horizon_days, report);
}

void write_dataset(const Dataset& dataset, std::ostream& out) {
  const auto& schema = dataset.schema();
  out << "id,day,action,outcome,propensity,true_cate,y0,y1";
  for (const auto& col : schema.numeric) out << ",n_" << col.name;
  for (const auto& col : schema.categorical) out << ",c_" << col.name;
  out << '\n';
  for (const auto& col : schema.categorical)
    for (const auto& level : col.levels)
      if (level.find_first_of(",\n\r\"") != std::string::npos)
        throw DataError("category label of " + col.name + " contains a CSV delimiter");
  for (const auto& row : dataset.rows()) {
    out << row.id << ',' << row.day_index << ',' << to_int(row.action) << ',' << row.outcome << ',';
    if (row.propensity) out << format_double(*row.propensity);
    out << ',';
    if (row.true_cate) out << format_double(*row.true_cate);
    out << ',';
    if (row.potential_outcomes) out << row.potential_outcomes->y0;
    out << ',';
    if (row.potential_outcomes) out << row.potential_outcomes->y1;
    for (const auto& v : row.features.numeric) {
      out << ',';
      if (v) out << format_double(*v);
    }
    for (std::size_t j = 0; j < row.features.categorical.size(); ++j) {
      out << ',';
      if (const auto& code = row.features.categorical[j]) out << schema.categorical[j].levels[static_cast<std::size_t>(*code)];
    }
    out << '\n';
  }
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset file " + path.string());
  write_dataset(dataset, out);
  if (!out) throw DataError("failed writing dataset file " + path.string());
}

// ---------------------------------------------------------------------------
// Episodes, projections, splits

Dataset slice_episode(const Dataset& dataset, int day) {
  if (day < 1)
    throw ConfigError("episode day must be >= 1: day 0 is the registration day, which is excluded from analysis");
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < dataset.size(); ++i)
    if (dataset.row(i).day_index == day) keep.push_back(i);
  return dataset.subset(keep);
}

std::vector<int> episode_days(const Dataset& dataset) {
  std::set<int> days;
  for (const auto& r : dataset.rows()) days.insert(r.day_index);
  return {days.begin(), days.end()};
}

Dataset select_features(const Dataset& dataset, const std::vector<std::string>& raw_names) {
  const std::set<std::string> wanted(raw_names.begin(), raw_names.end());
  const auto& schema = dataset.schema();
  std::set<std::string> known;
  for (const auto& n : schema.raw_names()) known.insert(n);
  for (const auto& n : wanted)
    if (!known.count(n)) throw DataError("unknown feature '" + n + "'");

  FeatureSchema projected;
  std::vector<std::size_t> numeric_keep, categorical_keep;
  for (std::size_t j = 0; j < schema.numeric.size(); ++j)
    if (wanted.count(schema.numeric[j].name)) {
      numeric_keep.push_back(j);
      projected.numeric.push_back(schema.numeric[j]);
    }
  for (std::size_t j = 0; j < schema.categorical.size(); ++j)
    if (wanted.count(schema.categorical[j].name)) {
      categorical_keep.push_back(j);
      projected.categorical.push_back(schema.categorical[j]);
    }
  std::vector<ObservationRow> rows = dataset.rows();
  for (auto& row : rows) {
    FeatureVector fv;
    for (auto j : numeric_keep) fv.numeric.push_back(row.features.numeric[j]);
    for (auto j : categorical_keep) fv.categorical.push_back(row.features.categorical[j]);
    row.features = std::move(fv);
  }
  return Dataset(std::move(projected), std::move(rows), dataset.horizon_days());
}

Dataset concatenate(const std::vector<Dataset>& parts) {
  if (parts.empty()) throw DataError("concatenate: no datasets");
  std::vector<ObservationRow> rows;
  for (const auto& p : parts) {
    if (!(p.schema() == parts.front().schema())) throw DataError("concatenate: schemas differ");
    if (p.horizon_days() != parts.front().horizon_days()) throw DataError("concatenate: horizons differ");
    rows.insert(rows.end(), p.rows().begin(), p.rows().end());
  }
  return Dataset(parts.front().schema(), std::move(rows), parts.front().horizon_days());
}

HoldoutSplit split_holdout(const Dataset& dataset, double holdout_fraction, std::uint64_t seed) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    throw ConfigError("holdout fraction must lie strictly between 0 and 1");
  if (dataset.empty()) throw DataError("cannot split an empty dataset");
  const auto n = static_cast<std::size_t>(dataset.size());
  std::vector<Eigen::Index> perm = dataset.id_order();
  Rng rng(derive_seed(seed, "holdout"));
  for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  const auto n_holdout = static_cast<std::size_t>(std::llround(static_cast<double>(n) * holdout_fraction));
  std::vector<char> in_holdout(n, 0);
  for (std::size_t i = 0; i < n_holdout; ++i) in_holdout[static_cast<std::size_t>(perm[i])] = 1;
  std::vector<Eigen::Index> train, holdout;
  for (std::size_t i = 0; i < n; ++i) (in_holdout[i] ? holdout : train).push_back(static_cast<Eigen::Index>(i));
  return {dataset.subset(train), dataset.subset(holdout)};
}

HoldoutSplit split_holdout_at(const Dataset& dataset, Eigen::Index cutoff_ordinal) {
  if (dataset.empty()) throw DataError("cannot split an empty dataset");
  if (cutoff_ordinal < 0 || cutoff_ordinal > dataset.size()) throw ConfigError("cutoff ordinal out of range");
  const auto order = dataset.id_order();
  std::vector<Eigen::Index> train(order.begin(), order.begin() + cutoff_ordinal);
  std::vector<Eigen::Index> holdout(order.begin() + cutoff_ordinal, order.end());
  return {dataset.subset(train), dataset.subset(holdout)};
}

// ---------------------------------------------------------------------------
// Synthetic worlds

double EffectFunction::operator()(const Eigen::Ref<const Eigen::VectorXd>& numeric) const {
  switch (kind) {
    case Kind::Constant:
      return value;
    case Kind::Step:
      return numeric[feature] > threshold ? above : below;
    case Kind::Linear: {
      double t = intercept;
      for (std::size_t j = 0; j < coefficients.size(); ++j) t += coefficients[j] * numeric[static_cast<Eigen::Index>(j)];
      return t;
    }
  }
  return 0.0;
}

void SyntheticSpec::validate() const {
  if (n_rows < 1) throw ConfigError("synthetic: n_rows must be >= 1");
  if (n_numeric_features < 0 || n_categorical_features < 0) throw ConfigError("synthetic: feature counts must be >= 0");
  if (n_categorical_features > 0 && n_levels < 1) throw ConfigError("synthetic: n_levels must be >= 1");
  if (baseline_coefficients.size() > static_cast<std::size_t>(n_numeric_features) ||
      logging_coefficients.size() > static_cast<std::size_t>(n_numeric_features))
    throw ConfigError("synthetic: more coefficients than numeric features");
  if (effect.kind == EffectFunction::Kind::Step && (effect.feature < 0 || effect.feature >= n_numeric_features))
    throw ConfigError("synthetic: step effect feature out of range");
  if (effect.kind == EffectFunction::Kind::Linear && effect.coefficients.size() > static_cast<std::size_t>(n_numeric_features))
    throw ConfigError("synthetic: more effect coefficients than numeric features");
  if (!(propensity_low > 0.0 && propensity_low < propensity_high && propensity_high < 1.0))
    throw ConfigError("synthetic: propensity clip bounds must satisfy 0 < low < high < 1");
  if (!(outcome_low >= 0.0 && outcome_low < outcome_high && outcome_high <= 1.0))
    throw ConfigError("synthetic: outcome clip bounds must satisfy 0 <= low < high <= 1");
  if (!(extreme_propensity_fraction >= 0.0 && extreme_propensity_fraction <= 1.0))
    throw ConfigError("synthetic: extreme_propensity_fraction must lie in [0, 1]");
  if (day_index < 1) throw ConfigError("synthetic: day_index must be >= 1");
  if (horizon_days < 1) throw ConfigError("synthetic: horizon_days must be >= 1");
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  FeatureSchema schema;
  for (int j = 0; j < spec.n_numeric_features; ++j) schema.numeric.push_back({"x" + std::to_string(j), FeatureKind::Numeric, {}, false});
  for (int j = 0; j < spec.n_categorical_features; ++j) {
    FeatureColumn col{"cat" + std::to_string(j), FeatureKind::Categorical, {}, false};
    for (int l = 0; l < spec.n_levels; ++l) col.levels.push_back("L" + std::to_string(l));
    std::sort(col.levels.begin(), col.levels.end());
    schema.categorical.push_back(std::move(col));
  }

  auto dot = [](const std::vector<double>& w, const Eigen::VectorXd& x) {
    double s = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * x[static_cast<Eigen::Index>(j)];
    return s;
  };

  Rng rng(derive_seed(spec.seed, "synthetic"));
  std::vector<ObservationRow> rows;
  rows.reserve(static_cast<std::size_t>(spec.n_rows));
  Eigen::VectorXd x(spec.n_numeric_features);
  for (std::int64_t i = 0; i < spec.n_rows; ++i) {
    ObservationRow row;
    row.id = spec.id_offset + i + 1;
    row.day_index = spec.day_index;
    for (int j = 0; j < spec.n_numeric_features; ++j) {
      x[j] = rng.normal();
      row.features.numeric.push_back(x[j]);
    }
    for (int j = 0; j < spec.n_categorical_features; ++j)
      row.features.categorical.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.n_levels))));

    const double p0 = clamp_probability(logistic(spec.baseline_intercept + dot(spec.baseline_coefficients, x)),
                                        spec.outcome_low, spec.outcome_high);
    const double p1 = clamp_probability(p0 + spec.effect(x), spec.outcome_low, spec.outcome_high);
    const double u = rng.uniform();
    const PotentialOutcomes po{u < p0 ? 1 : 0, u < p1 ? 1 : 0};

    double e = clamp_probability(logistic(spec.logging_intercept + dot(spec.logging_coefficients, x)),
                                 spec.propensity_low, spec.propensity_high);
    const double extreme_draw = rng.uniform();
    const double side_draw = rng.uniform();
    if (extreme_draw < spec.extreme_propensity_fraction) e = side_draw < 0.5 ? 0.005 : 0.995;
    row.action = action_from_bool(rng.uniform() < e);
    row.outcome = po[row.action];
    row.propensity = e;
    row.true_cate = p1 - p0;
    row.potential_outcomes = po;
    rows.push_back(std::move(row));
  }
  return Dataset(std::move(schema), std::move(rows), spec.horizon_days);
}

SyntheticSpec two_segment_spec(std::int64_t n_rows, std::uint64_t seed, double positive_share) {
  SyntheticSpec spec;
  spec.n_rows = n_rows;
  spec.n_numeric_features = 6;
  spec.baseline_intercept = -1.0;
  spec.baseline_coefficients = {0.0, 1.2, 0.6};
  spec.effect.kind = EffectFunction::Kind::Step;
  spec.effect.feature = 0;
  spec.effect.threshold = normal_quantile(1.0 - positive_share);
  spec.effect.above = 0.15;
  spec.effect.below = -0.10;
  spec.seed = seed;
  return spec;
}

}  // namespace upolicy
