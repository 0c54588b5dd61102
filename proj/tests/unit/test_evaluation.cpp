#include <gtest/gtest.h>

#include <numeric>

#include "test_support.hpp"
#include "upolicy/error.hpp"
#include "upolicy/evaluation.hpp"
#include "upolicy/random.hpp"

using namespace upolicy;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Eigen::VectorXi ivec(std::initializer_list<int> v) {
  Eigen::VectorXi out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (int x : v) out[i++] = x;
  return out;
}

std::vector<double> values(const QiniCurve& c) {
  std::vector<double> out;
  for (const auto& p : c.points) out.push_back(p.value);
  return out;
}

}  // namespace

TEST(Qini, HandExample) {
  const auto curve = qini_curve(vec({4, 3, 2, 1}), ivec({1, 0, 1, 0}), ivec({1, 0, 0, 1}), {1, 2, 3, 4});
  EXPECT_EQ(values(curve), (std::vector<double>{0, 1, 1, 1, 0}));
  EXPECT_DOUBLE_EQ(curve.points[2].fraction, 0.5);
  EXPECT_DOUBLE_EQ(curve.area(), 0.75);
}

TEST(Qini, EndpointAndPermutationInvariance) {
  const auto ds = generate_synthetic(two_segment_spec(2000, 1));
  Rng rng(3);
  Eigen::VectorXd scores(ds.size());
  for (Eigen::Index i = 0; i < ds.size(); ++i) scores[i] = rng.normal();
  const auto curve = qini_curve(scores, ds);

  double yt = 0, yc = 0, nt = 0, nc = 0;
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    (ds.actions()[i] ? yt : yc) += ds.outcomes()[i];
    (ds.actions()[i] ? nt : nc) += 1;
  }
  EXPECT_NEAR(curve.endpoint(), yt - yc * nt / nc, 1e-9);

  std::vector<Eigen::Index> reversed(static_cast<std::size_t>(ds.size()));
  std::iota(reversed.rbegin(), reversed.rend(), Eigen::Index{0});
  const Eigen::VectorXd rev_scores = scores.reverse();
  EXPECT_EQ(values(qini_curve(rev_scores, ds.subset(reversed))), values(curve));

  // Any strictly increasing transform keeps the ranking.
  const Eigen::VectorXd transformed = scores.unaryExpr([](double s) { return std::exp(s) * 3.0 + 1.0; });
  EXPECT_EQ(values(qini_curve(transformed, ds)), values(curve));
}

TEST(Qini, CoefficientsOnKnownRankings) {
  const auto ds = generate_synthetic(two_segment_spec(50000, 2));
  const Eigen::VectorXd truth = ds.true_cate();
  EXPECT_NEAR(qini_coefficient(truth, ds, QiniReference::GroundTruthRanking), 1.0, 1e-12);
  EXPECT_LT(qini_coefficient(-truth, ds, QiniReference::GroundTruthRanking), 0.0);

  Rng rng(5);
  Eigen::VectorXd random(ds.size());
  for (Eigen::Index i = 0; i < ds.size(); ++i) random[i] = rng.uniform();
  EXPECT_NEAR(qini_coefficient(random, ds, QiniReference::GroundTruthRanking), 0.0, 0.15);

  const double predictive = qini_coefficient(truth, ds, QiniReference::OutcomeOptimal);
  EXPECT_GT(predictive, 0.0);
  EXPECT_LT(predictive, 1.0);
}

TEST(Qini, DegenerateReferenceRejected) {
  QiniCurve flat;
  flat.points = {{0.0, 0.0}, {0.5, 0.0}, {1.0, 0.0}};
  EXPECT_THROW(qini_coefficient(flat, flat), NumericalError);
  EXPECT_THROW(qini_curve(vec({1, 2}), ivec({1, 1}), ivec({0, 1}), {1, 2}), DataError);
}

TEST(Auc, KnownValuesAndSymmetry) {
  EXPECT_DOUBLE_EQ(roc_auc(vec({0.1, 0.4, 0.35, 0.8}), ivec({0, 0, 1, 1})), 0.75);
  EXPECT_DOUBLE_EQ(roc_auc(vec({0.1, 0.2, 0.8, 0.9}), ivec({0, 0, 1, 1})), 1.0);
  EXPECT_DOUBLE_EQ(roc_auc(vec({0.5, 0.5, 0.5, 0.5}), ivec({0, 1, 0, 1})), 0.5);
  Rng rng(8);
  Eigen::VectorXd s(500);
  Eigen::VectorXi y(500), flipped(500);
  for (int i = 0; i < 500; ++i) {
    s[i] = std::round(rng.normal() * 4.0);  // plenty of ties
    y[i] = rng.uniform() < 0.3;
    flipped[i] = 1 - y[i];
  }
  EXPECT_EQ(roc_auc(s, y) + roc_auc(s, flipped), 1.0);
}

TEST(Calibration, BinsPartitionTheRows) {
  const auto ds = generate_synthetic(two_segment_spec(5003, 3));
  const Eigen::VectorXd pred = ds.true_cate() + Eigen::VectorXd::LinSpaced(ds.size(), 0.0, 0.01);
  const auto report = calibration(pred, ds, 10);
  ASSERT_EQ(report.bins.size(), 10u);
  std::int64_t total = 0;
  double previous = -2.0;
  for (const auto& b : report.bins) {
    total += b.n_rows;
    EXPECT_GE(b.mean_predicted_cate, previous);
    previous = b.mean_predicted_cate;
    EXPECT_TRUE(b.has_both_arms);
    EXPECT_GT(b.ci_halfwidth, 0.0);
  }
  EXPECT_EQ(total, 5003);
  EXPECT_NEAR(report.bins.front().observed_uplift, -0.10, 0.08);
  EXPECT_NEAR(report.bins.back().observed_uplift, 0.15, 0.08);
  EXPECT_THROW(calibration(pred, ds, static_cast<int>(ds.size())), ConfigError);
}

TEST(Calibration, ConstantPredictionsStillPartition) {
  const auto ds = generate_synthetic(two_segment_spec(1000, 4));
  const auto report = calibration(Eigen::VectorXd::Zero(ds.size()), ds, 4);
  for (const auto& b : report.bins) {
    EXPECT_EQ(b.n_rows, 250);
    EXPECT_EQ(b.mean_predicted_cate, 0.0);
  }
}
