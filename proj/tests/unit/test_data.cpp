#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "test_support.hpp"
#include "upolicy/data.hpp"
#include "upolicy/error.hpp"
#include "upolicy/stats.hpp"

using namespace upolicy;

namespace {

const char* kHeader = "id,day,action,outcome,propensity,true_cate,y0,y1,n_age,c_channel\n";

Dataset parse(const std::string& text, LoadReport* report = nullptr) {
  std::istringstream in(text);
  return parse_dataset(in, kDefaultHorizonDays, report);
}

std::string expect_data_error(const std::string& text) {
  try {
    parse(text);
  } catch (const DataError& e) {
    return e.what();
  }
  ADD_FAILURE() << "no DataError";
  return {};
}

std::string to_csv(const Dataset& ds) {
  std::ostringstream out;
  write_dataset(ds, out);
  return out.str();
}

}  // namespace

TEST(LoadDataset, ValidThreeRowFile) {
  const auto ds = parse(std::string(kHeader) +
                        "1,1,1,1,0.5,,,,30,web\n"
                        "2,1,0,0,0.5,,,,41,phone\n"
                        "3,2,1,0,0.4,,,,25,web\n");
  EXPECT_EQ(ds.size(), 3);
  EXPECT_EQ(ds.feature_names(), (std::vector<std::string>{"age", "channel=phone", "channel=web"}));
  EXPECT_DOUBLE_EQ(ds.design()(1, 0), 41.0);
  EXPECT_DOUBLE_EQ(ds.design()(1, 1), 1.0);
  EXPECT_DOUBLE_EQ(ds.design()(1, 2), 0.0);
  EXPECT_TRUE(ds.has_propensities());
  EXPECT_FALSE(ds.has_potential_outcomes());
}

TEST(LoadDataset, DuplicateIdNamesTheId) {
  const auto msg = expect_data_error(std::string(kHeader) +
                                     "7,1,1,1,0.5,,,,30,web\n"
                                     "8,1,0,0,0.5,,,,41,web\n"
                                     "7,1,0,0,0.5,,,,41,web\n");
  EXPECT_NE(msg.find("duplicate id 7"), std::string::npos) << msg;
}

TEST(LoadDataset, NonBinaryActionCitesTheRow) {
  std::string text = kHeader;
  for (int i = 1; i <= 4; ++i) text += std::to_string(i) + ",1,0,0,0.5,,,,30,web\n";
  text += "5,1,2,0,0.5,,,,30,web\n";
  const auto msg = expect_data_error(text);
  EXPECT_NE(msg.find("row 5"), std::string::npos) << msg;
  EXPECT_NE(msg.find("action"), std::string::npos) << msg;
}

TEST(LoadDataset, MissingColumnAndUnknownColumnRejected) {
  EXPECT_NE(expect_data_error("id,day,action,outcome\n1,1,0,0\n").find("missing required column"), std::string::npos);
  EXPECT_NE(expect_data_error("id,day,action,outcome,propensity,true_cate,y0,y1,age\n").find("unknown column"),
            std::string::npos);
  EXPECT_NE(expect_data_error(std::string(kHeader) + "1,1,0,3,0.5,,,,30,web\n").find("outcome"), std::string::npos);
}

TEST(LoadDataset, DayZeroRowsAreSkippedAndCounted) {
  LoadReport report;
  const auto ds = parse(std::string(kHeader) +
                            "1,0,1,1,0.5,,,,30,web\n"
                            "2,1,0,0,0.5,,,,41,web\n",
                        &report);
  EXPECT_EQ(ds.size(), 1);
  EXPECT_EQ(report.n_rejected, 1);
  EXPECT_EQ(report.n_rows, 1);
}

TEST(LoadDataset, MissingNumericGetsSentinelAndIndicator) {
  const auto ds = parse(std::string(kHeader) +
                        "1,1,1,1,0.5,,,,,web\n"
                        "2,1,0,0,0.5,,,,41,web\n");
  EXPECT_EQ(ds.feature_names(), (std::vector<std::string>{"age", "age__missing", "channel=web"}));
  EXPECT_DOUBLE_EQ(ds.design()(0, 0), kMissingSentinel);
  EXPECT_DOUBLE_EQ(ds.design()(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(ds.design()(1, 1), 0.0);
}

TEST(LoadDataset, PotentialOutcomesMustAgreeWithOutcome) {
  EXPECT_NE(expect_data_error(std::string(kHeader) + "1,1,1,1,0.5,0.1,1,0,30,web\n").find("potential outcome"),
            std::string::npos);
}

TEST(SaveDataset, RoundTripIsExact) {
  auto spec = two_segment_spec(300, 4);
  spec.n_categorical_features = 2;
  const auto original = generate_synthetic(spec);
  const auto text = to_csv(original);
  const auto back = parse(text);
  EXPECT_EQ(back.schema(), original.schema());
  EXPECT_EQ(back.rows(), original.rows());
  EXPECT_EQ(to_csv(back), text);

  const auto missing = parse(std::string(kHeader) +
                             "1,1,1,1,0.5,,,,,web\n"
                             "2,1,0,0,0.25,,,,41.5,phone\n");
  const auto again = parse(to_csv(missing));
  EXPECT_EQ(again.rows(), missing.rows());
  EXPECT_EQ(again.schema(), missing.schema());
}

TEST(SliceEpisode, FilterSemantics) {
  std::vector<Dataset> parts;
  for (int d = 1; d <= 3; ++d) {
    auto spec = two_segment_spec(50, static_cast<std::uint64_t>(d));
    spec.day_index = d;
    spec.id_offset = (d - 1) * 50;
    parts.push_back(generate_synthetic(spec));
  }
  const auto all = concatenate(parts);
  EXPECT_EQ(episode_days(all), (std::vector<int>{1, 2, 3}));
  const auto day1 = slice_episode(all, 1);
  EXPECT_EQ(day1.size(), 50);
  for (const auto& r : day1.rows()) EXPECT_EQ(r.day_index, 1);
  EXPECT_THROW(slice_episode(all, 0), ConfigError);
  EXPECT_TRUE(slice_episode(all, 9).empty());

  std::set<std::int64_t> seen;
  std::size_t total = 0;
  for (int d : episode_days(all)) {
    const auto part = slice_episode(all, d);
    for (auto id : part.ids()) {
      EXPECT_TRUE(seen.insert(id).second) << "episodes overlap at id " << id;
      ++total;
    }
  }
  EXPECT_EQ(total, static_cast<std::size_t>(all.size()));
}

TEST(SplitHoldout, FractionDeterminismAndSeeds) {
  const auto ds = generate_synthetic(two_segment_spec(100, 1));
  const auto a = split_holdout(ds, 0.2, 7);
  const auto b = split_holdout(ds, 0.2, 7);
  EXPECT_EQ(a.train.size(), 80);
  EXPECT_EQ(a.holdout.size(), 20);
  EXPECT_EQ(a.holdout.ids(), b.holdout.ids());
  const auto c = split_holdout(ds, 0.2, 8);
  EXPECT_NE(a.holdout.ids(), c.holdout.ids());

  std::set<std::int64_t> ids(a.train.ids().begin(), a.train.ids().end());
  for (auto id : a.holdout.ids()) EXPECT_TRUE(ids.insert(id).second);
  EXPECT_EQ(ids.size(), 100u);
  EXPECT_THROW(split_holdout(ds, 0.0, 7), ConfigError);
  EXPECT_THROW(split_holdout(ds, 1.0, 7), ConfigError);
}

TEST(SplitHoldout, CutoffKeepsTimeOrder) {
  const auto ds = generate_synthetic(two_segment_spec(100, 1));
  const auto s = split_holdout_at(ds, 90);
  EXPECT_EQ(s.holdout.size(), 10);
  for (auto id : s.holdout.ids()) EXPECT_GT(id, 90);
  for (auto id : s.train.ids()) EXPECT_LE(id, 90);
}

TEST(Synthetic, NullEffect) {
  SyntheticSpec spec;
  spec.n_rows = 100000;
  spec.seed = 3;
  const auto ds = generate_synthetic(spec);
  double diff = 0;
  for (const auto& r : ds.rows()) diff += r.potential_outcomes->y1 - r.potential_outcomes->y0;
  EXPECT_NEAR(diff / 100000, 0.0, 0.006);
}

TEST(Synthetic, ConstantEffect) {
  SyntheticSpec spec;
  spec.n_rows = 100000;
  spec.seed = 4;
  spec.baseline_intercept = -1.0;
  spec.effect.value = 0.1;
  const auto ds = generate_synthetic(spec);
  double diff = 0;
  for (const auto& r : ds.rows()) diff += r.potential_outcomes->y1 - r.potential_outcomes->y0;
  diff /= 100000;
  EXPECT_GE(diff, 0.09);
  EXPECT_LE(diff, 0.11);
}

TEST(Synthetic, SameSeedByteIdentical) {
  const auto a = to_csv(generate_synthetic(two_segment_spec(1000, 5)));
  const auto b = to_csv(generate_synthetic(two_segment_spec(1000, 5)));
  const auto c = to_csv(generate_synthetic(two_segment_spec(1000, 6)));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(Synthetic, OutcomeIsPotentialOutcomeOfAction) {
  const auto ds = generate_synthetic(two_segment_spec(5000, 2));
  for (const auto& r : ds.rows()) {
    ASSERT_EQ(r.outcome, (*r.potential_outcomes)[r.action]);
    ASSERT_GE(*r.true_cate, -1.0);
    ASSERT_LE(*r.true_cate, 1.0);
  }
}

TEST(Synthetic, ConstantLoggingPropensityMatchesContactRate) {
  SyntheticSpec spec;
  spec.n_rows = 100000;
  spec.seed = 12;
  spec.logging_intercept = std::log(0.3 / 0.7);
  const auto ds = generate_synthetic(spec);
  EXPECT_NEAR(ds.actions().cast<double>().mean(), 0.3, 0.005);
  EXPECT_NEAR(ds.propensities().mean(), 0.3, 1e-12);
}

TEST(Synthetic, TwoSegmentStructure) {
  const auto ds = generate_synthetic(two_segment_spec(20000, 8));
  const double cut = normal_quantile(0.4);
  double positive = 0;
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    const bool above = ds.design()(i, 0) > cut;
    positive += above;
    // Clipping of extreme baseline rates can flatten the effect to 0, never flip it.
    if (above)
      EXPECT_GE(*ds.row(i).true_cate, 0.0);
    else
      EXPECT_LE(*ds.row(i).true_cate, 0.0);
  }
  EXPECT_NEAR(positive / 20000, 0.6, 0.01);
}

TEST(Synthetic, ExtremePropensityFraction) {
  auto spec = two_segment_spec(50000, 9);
  spec.extreme_propensity_fraction = 0.02;
  const auto ds = generate_synthetic(spec);
  const auto e = ds.propensities();
  const auto flagged = (e.array() < 0.01 || e.array() > 0.99).count();
  EXPECT_NEAR(static_cast<double>(flagged) / 50000, 0.02, 0.002);
}

TEST(SelectFeatures, KeepsNamedColumnsInSchemaOrder) {
  const auto ds = generate_synthetic(two_segment_spec(50, 1));
  const auto sub = select_features(ds, {"x3", "x0"});
  EXPECT_EQ(sub.feature_names(), (std::vector<std::string>{"x0", "x3"}));
  EXPECT_DOUBLE_EQ(sub.design()(4, 1), ds.design()(4, 3));
  EXPECT_THROW(select_features(ds, {"nope"}), Error);
}
