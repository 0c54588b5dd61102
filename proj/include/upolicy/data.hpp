#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace upolicy {

enum class Action : std::uint8_t { NoContact = 0, Contact = 1 };

inline int to_int(Action a) { return static_cast<int>(a); }
inline Action action_from_bool(bool contact) { return contact ? Action::Contact : Action::NoContact; }

/// Encoded value standing in for a missing numeric feature. Paired with a
/// `<name>__missing` indicator column so trees can split on missingness.
inline constexpr double kMissingSentinel = 0.0;

inline constexpr int kDefaultHorizonDays = 90;
inline constexpr int kProxyHorizonDays = 14;

enum class FeatureKind { Numeric, Categorical };

struct FeatureColumn {
  std::string name;  // without the n_/c_ file prefix
  FeatureKind kind = FeatureKind::Numeric;
  std::vector<std::string> levels;  // categorical only, sorted ascending
  bool nullable = false;            // numeric only: emits a missing indicator

  bool operator==(const FeatureColumn&) const = default;
};

/// Ordered raw feature schema. Numeric columns precede categorical ones.
struct FeatureSchema {
  std::vector<FeatureColumn> numeric;
  std::vector<FeatureColumn> categorical;

  bool operator==(const FeatureSchema&) const = default;

  /// Names of the columns of the encoded design matrix, in order.
  std::vector<std::string> encoded_names() const;
  Eigen::Index encoded_size() const;
  std::vector<std::string> raw_names() const;
};

struct FeatureVector {
  std::vector<std::optional<double>> numeric;  // aligned with schema.numeric
  std::vector<std::optional<int>> categorical;  // level codes, aligned with schema.categorical

  bool operator==(const FeatureVector&) const = default;
};

struct PotentialOutcomes {
  int y0 = 0;
  int y1 = 0;

  int operator[](Action a) const { return a == Action::Contact ? y1 : y0; }
  bool operator==(const PotentialOutcomes&) const = default;
};

/// One lead-day decision.
struct ObservationRow {
  std::int64_t id = 0;
  int day_index = 1;
  FeatureVector features;
  Action action = Action::NoContact;
  int outcome = 0;
  std::optional<double> propensity;
  std::optional<double> true_cate;
  std::optional<PotentialOutcomes> potential_outcomes;

  bool operator==(const ObservationRow&) const = default;
};

/// Immutable validated collection of observation rows plus the encoded design matrix.
class Dataset {
 public:
  Dataset() = default;
  /// Validates every row against the schema and invariants; throws DataError.
  Dataset(FeatureSchema schema, std::vector<ObservationRow> rows, int horizon_days = kDefaultHorizonDays);

  const FeatureSchema& schema() const { return schema_; }
  const std::vector<ObservationRow>& rows() const { return rows_; }
  const ObservationRow& row(Eigen::Index i) const { return rows_[static_cast<std::size_t>(i)]; }
  int horizon_days() const { return horizon_days_; }
  Eigen::Index size() const { return static_cast<Eigen::Index>(rows_.size()); }
  bool empty() const { return rows_.empty(); }

  /// n_rows x encoded_size design matrix.
  const Eigen::MatrixXd& design() const { return design_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const Eigen::VectorXi& actions() const { return actions_; }
  const Eigen::VectorXi& outcomes() const { return outcomes_; }
  const std::vector<std::int64_t>& ids() const { return ids_; }

  bool has_propensities() const;
  bool has_potential_outcomes() const;
  bool has_true_cate() const;
  /// Throws DataError when any row lacks a propensity.
  Eigen::VectorXd propensities() const;
  Eigen::VectorXd true_cate() const;

  /// Rows at the given positions, in the given order.
  Dataset subset(const std::vector<Eigen::Index>& positions) const;
  /// Copy with the propensity column replaced.
  Dataset with_propensities(const Eigen::Ref<const Eigen::VectorXd>& propensities) const;
  Dataset without_propensities() const;

  /// Positions ordered by ascending id; the canonical order used by every
  /// order-sensitive algorithm in the toolkit.
  std::vector<Eigen::Index> id_order() const;

 private:
  FeatureSchema schema_;
  std::vector<ObservationRow> rows_;
  int horizon_days_ = kDefaultHorizonDays;
  Eigen::MatrixXd design_;
  std::vector<std::string> feature_names_;
  Eigen::VectorXi actions_;
  Eigen::VectorXi outcomes_;
  std::vector<std::int64_t> ids_;
};

/// Encodes one feature vector into a design-matrix row.
Eigen::VectorXd encode(const FeatureSchema& schema, const FeatureVector& features);

struct LoadReport {
  std::int64_t n_rows = 0;
  std::int64_t n_rejected = 0;  // day-0 rows (registration day) are skipped
};

/// Reads the dataset CSV. Throws DataError on schema or domain violations.
Dataset load_dataset(const std::filesystem::path& path, int horizon_days = kDefaultHorizonDays,
                     LoadReport* report = nullptr);
Dataset parse_dataset(std::istream& in, int horizon_days = kDefaultHorizonDays, LoadReport* report = nullptr);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
void write_dataset(const Dataset& dataset, std::ostream& out);

/// Rows with day_index == day. day must be >= 1.
Dataset slice_episode(const Dataset& dataset, int day);
std::vector<int> episode_days(const Dataset& dataset);

/// Keeps only the named raw features (order follows the original schema).
Dataset select_features(const Dataset& dataset, const std::vector<std::string>& raw_names);

/// Concatenates datasets with identical schema and horizon.
Dataset concatenate(const std::vector<Dataset>& parts);

struct HoldoutSplit {
  Dataset train;
  Dataset holdout;
};

/// Seeded shuffle; holdout receives round(n * fraction) rows. Row order within
/// each part follows the input order.
HoldoutSplit split_holdout(const Dataset& dataset, double holdout_fraction, std::uint64_t seed);
/// Time-ordered split: rows sorted by id; the first `cutoff_ordinal` rows train.
HoldoutSplit split_holdout_at(const Dataset& dataset, Eigen::Index cutoff_ordinal);

// ---------------------------------------------------------------------------
// Synthetic worlds with known potential outcomes.

struct EffectFunction {
  enum class Kind { Constant, Step, Linear };
  Kind kind = Kind::Constant;
  double value = 0.0;      // Constant
  int feature = 0;         // Step: numeric feature index
  double threshold = 0.0;  // Step
  double above = 0.0;      // Step: effect when x[feature] > threshold
  double below = 0.0;      // Step
  double intercept = 0.0;  // Linear
  std::vector<double> coefficients;  // Linear, over numeric features

  double operator()(const Eigen::Ref<const Eigen::VectorXd>& numeric) const;
};

struct SyntheticSpec {
  std::int64_t n_rows = 1000;
  int n_numeric_features = 4;
  int n_categorical_features = 0;
  int n_levels = 3;
  double baseline_intercept = 0.0;
  std::vector<double> baseline_coefficients;  // over numeric features, zero-padded
  EffectFunction effect;
  double logging_intercept = 0.0;
  std::vector<double> logging_coefficients;
  double propensity_low = 0.05;
  double propensity_high = 0.95;
  /// Fraction of rows whose true propensity is forced to 0.005 or 0.995,
  /// outside the usual trimming bounds.
  double extreme_propensity_fraction = 0.0;
  double outcome_low = 0.01;
  double outcome_high = 0.99;
  std::uint64_t seed = 1;
  int day_index = 1;
  std::int64_t id_offset = 0;
  int horizon_days = kDefaultHorizonDays;

  /// Throws ConfigError on invalid settings.
  void validate() const;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

/// The world used throughout tests and the bundled config: six standard-normal
/// numeric features; effect +0.15 when n_0 > Phi^-1(1 - positive_share), else -0.10;
/// baseline driven by n_1 and n_2.
SyntheticSpec two_segment_spec(std::int64_t n_rows, std::uint64_t seed, double positive_share = 0.6);

}  // namespace upolicy
