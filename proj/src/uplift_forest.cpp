#include "upolicy/uplift_forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "upolicy/document.hpp"
#include "upolicy/error.hpp"
#include "upolicy/parallel.hpp"
#include "upolicy/random.hpp"

namespace upolicy {

namespace {

constexpr const char* kEnsembleFormat = "upolicy.uplift_ensemble";
constexpr int kEnsembleVersion = 1;

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXi>& actions,
              const Eigen::Ref<const Eigen::VectorXi>& outcomes, const std::vector<std::int32_t>& weights,
              const TreeParams& params, std::uint64_t seed)
      : X_(X), actions_(actions), outcomes_(outcomes), weights_(weights), params_(params), rng_(seed) {
    mtry_ = params.effective_mtry(X.cols());
  }

  UpliftTree build() {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < weights_.size(); ++i)
      if (weights_[i] > 0) rows.push_back(static_cast<Eigen::Index>(i));
    grow(rows, 0);
    return std::move(tree_);
  }

 private:
  NodeStats stats_of(const std::vector<Eigen::Index>& rows) const {
    NodeStats s;
    for (auto i : rows) add(s, i);
    return s;
  }

  void add(NodeStats& s, Eigen::Index i) const {
    const std::int64_t w = weights_[static_cast<std::size_t>(i)];
    if (actions_[i] == 1) {
      s.n_t += w;
      s.y_t += w * outcomes_[i];
    } else {
      s.n_c += w;
      s.y_c += w * outcomes_[i];
    }
  }

  bool satisfies_min_leaf(const NodeStats& s) const {
    return s.n_t >= params_.min_leaf_per_arm && s.n_c >= params_.min_leaf_per_arm;
  }

  std::vector<int> sample_features() {
    const int p = static_cast<int>(X_.cols());
    std::vector<int> all(static_cast<std::size_t>(p));
    std::iota(all.begin(), all.end(), 0);
    const int m = std::min(mtry_, p);
    for (int i = 0; i < m; ++i) {
      const auto j = i + static_cast<int>(rng_.below(static_cast<std::uint64_t>(p - i)));
      std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
    }
    all.resize(static_cast<std::size_t>(m));
    std::sort(all.begin(), all.end());
    return all;
  }

  // Best threshold for one feature; candidates are midpoints between distinct
  // consecutive values, thinned to at most max_thresholds weight quantiles.
  void scan_feature(int feature, const std::vector<Eigen::Index>& rows, const NodeStats& parent, SplitChoice& best) {
    std::vector<std::pair<double, Eigen::Index>> sorted;
    sorted.reserve(rows.size());
    for (auto i : rows) sorted.emplace_back(X_(i, feature), i);
    std::sort(sorted.begin(), sorted.end());

    // Change points: position k means left = sorted[0..k].
    std::vector<std::size_t> change_points;
    std::vector<NodeStats> prefix;
    NodeStats running;
    for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
      add(running, sorted[k].second);
      if (sorted[k].first < sorted[k + 1].first) {
        change_points.push_back(k);
        prefix.push_back(running);
      }
    }
    if (change_points.empty()) return;

    std::vector<std::size_t> candidates;  // indices into change_points
    const auto cap = static_cast<std::size_t>(params_.max_thresholds);
    if (change_points.size() <= cap) {
      candidates.resize(change_points.size());
      std::iota(candidates.begin(), candidates.end(), std::size_t{0});
    } else {
      const double total = static_cast<double>(parent.total());
      std::size_t c = 0;
      for (std::size_t j = 1; j <= cap; ++j) {
        const double target = total * static_cast<double>(j) / static_cast<double>(cap + 1);
        while (c < change_points.size() && static_cast<double>(prefix[c].total()) < target) ++c;
        if (c == change_points.size()) break;
        if (candidates.empty() || candidates.back() != c) candidates.push_back(c);
      }
    }

    for (auto c : candidates) {
      const NodeStats& left = prefix[c];
      const NodeStats right = parent - left;
      if (!satisfies_min_leaf(left) || !satisfies_min_leaf(right)) continue;
      const double gain = split_gain(parent, left, right, params_.divergence, params_.smoothing);
      if (gain > best.gain) {
        const std::size_t k = change_points[c];
        best.feature = feature;
        best.threshold = 0.5 * (sorted[k].first + sorted[k + 1].first);
        best.gain = gain;
      }
    }
  }

  int grow(const std::vector<Eigen::Index>& rows, int depth) {
    const int index = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    TreeNode node;
    node.stats = stats_of(rows);
    node.uplift = node.stats.uplift(params_.smoothing);

    SplitChoice best;
    if (depth < params_.max_depth && satisfies_min_leaf(node.stats)) {
      // Only strictly positive gains qualify; features are visited in ascending
      // index and thresholds ascending, so ties keep the earliest candidate.
      for (int f : sample_features()) scan_feature(f, rows, node.stats, best);
    }
    if (best.feature < 0) {
      tree_.nodes[static_cast<std::size_t>(index)] = node;
      return index;
    }

    std::vector<Eigen::Index> left_rows, right_rows;
    for (auto i : rows) (X_(i, best.feature) <= best.threshold ? left_rows : right_rows).push_back(i);
    node.feature = best.feature;
    node.threshold = best.threshold;
    tree_.nodes[static_cast<std::size_t>(index)] = node;
    const int left = grow(left_rows, depth + 1);
    const int right = grow(right_rows, depth + 1);
    tree_.nodes[static_cast<std::size_t>(index)].left = left;
    tree_.nodes[static_cast<std::size_t>(index)].right = right;
    return index;
  }

  Eigen::Ref<const Eigen::MatrixXd> X_;
  Eigen::Ref<const Eigen::VectorXi> actions_;
  Eigen::Ref<const Eigen::VectorXi> outcomes_;
  const std::vector<std::int32_t>& weights_;
  const TreeParams& params_;
  Rng rng_;
  int mtry_ = 1;
  UpliftTree tree_;
};

void require_both_actions(const Eigen::Ref<const Eigen::VectorXi>& actions) {
  const auto treated = actions.sum();
  if (treated == 0 || treated == actions.size())
    throw DataError("uplift training needs both contacted and non-contacted rows");
}

struct CanonicalData {
  Eigen::MatrixXd X;
  Eigen::VectorXi actions;
  Eigen::VectorXi outcomes;
};

CanonicalData canonical(const Dataset& dataset) {
  const auto order = dataset.id_order();
  CanonicalData c;
  const auto n = static_cast<Eigen::Index>(order.size());
  c.X.resize(n, dataset.design().cols());
  c.actions.resize(n);
  c.outcomes.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto i = order[static_cast<std::size_t>(k)];
    c.X.row(k) = dataset.design().row(i);
    c.actions[k] = dataset.actions()[i];
    c.outcomes[k] = dataset.outcomes()[i];
  }
  return c;
}

std::vector<std::int32_t> bootstrap_weights(std::size_t n, Rng& rng) {
  std::vector<std::int32_t> w(n, 0);
  for (std::size_t k = 0; k < n; ++k) ++w[rng.below(n)];
  return w;
}

UpliftTree fit_bootstrap_tree(const CanonicalData& data, const TreeParams& params, std::uint64_t tree_seed) {
  Rng rng(derive_seed(tree_seed, "bootstrap"));
  const auto weights = bootstrap_weights(static_cast<std::size_t>(data.X.rows()), rng);
  return TreeBuilder(data.X, data.actions, data.outcomes, weights, params, derive_seed(tree_seed, "splits")).build();
}

nlohmann::json tree_to_json(const UpliftTree& tree) {
  std::vector<int> feature, left, right;
  std::vector<double> threshold, uplift;
  std::vector<std::int64_t> n_t, n_c, y_t, y_c;
  for (const auto& node : tree.nodes) {
    feature.push_back(node.feature);
    threshold.push_back(node.threshold);
    left.push_back(node.left);
    right.push_back(node.right);
    uplift.push_back(node.uplift);
    n_t.push_back(node.stats.n_t);
    n_c.push_back(node.stats.n_c);
    y_t.push_back(node.stats.y_t);
    y_c.push_back(node.stats.y_c);
  }
  return {{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"uplift", uplift},
          {"n_t", n_t},         {"n_c", n_c},             {"y_t", y_t},   {"y_c", y_c}};
}

UpliftTree tree_from_json(const nlohmann::json& doc, std::size_t n_features) {
  const auto feature = require<std::vector<int>>(doc, "feature");
  const auto threshold = require<std::vector<double>>(doc, "threshold");
  const auto left = require<std::vector<int>>(doc, "left");
  const auto right = require<std::vector<int>>(doc, "right");
  const auto uplift = require<std::vector<double>>(doc, "uplift");
  const auto n_t = require<std::vector<std::int64_t>>(doc, "n_t");
  const auto n_c = require<std::vector<std::int64_t>>(doc, "n_c");
  const auto y_t = require<std::vector<std::int64_t>>(doc, "y_t");
  const auto y_c = require<std::vector<std::int64_t>>(doc, "y_c");
  const std::size_t m = feature.size();
  if (m == 0) throw DataError("ensemble document: empty tree");
  for (auto len : {threshold.size(), left.size(), right.size(), uplift.size(), n_t.size(), n_c.size(), y_t.size(), y_c.size()})
    if (len != m) throw DataError("ensemble document: node arrays differ in length");
  UpliftTree tree;
  tree.nodes.resize(m);
  for (std::size_t k = 0; k < m; ++k) {
    auto& node = tree.nodes[k];
    node.feature = feature[k];
    node.threshold = threshold[k];
    node.left = left[k];
    node.right = right[k];
    node.uplift = uplift[k];
    node.stats = {n_t[k], n_c[k], y_t[k], y_c[k]};
    if (node.feature >= 0) {
      // Children always follow their parent in preorder, which rules out cycles.
      if (static_cast<std::size_t>(node.feature) >= n_features || node.left <= static_cast<int>(k) ||
          node.right <= static_cast<int>(k) || static_cast<std::size_t>(node.left) >= m ||
          static_cast<std::size_t>(node.right) >= m)
        throw DataError("ensemble document: invalid node links");
    }
    if (!(node.uplift >= -1.0 && node.uplift <= 1.0)) throw DataError("ensemble document: uplift outside [-1, 1]");
  }
  return tree;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(Divergence d) {
  switch (d) {
    case Divergence::KL:
      return "kl";
    case Divergence::Euclidean:
      return "euclidean";
    case Divergence::ChiSquared:
      return "chi_squared";
  }
  return "kl";
}

Divergence divergence_from_string(const std::string& name) {
  if (name == "kl" || name == "KL") return Divergence::KL;
  if (name == "euclidean" || name == "ED") return Divergence::Euclidean;
  if (name == "chi_squared" || name == "Chi") return Divergence::ChiSquared;
  throw ConfigError("unknown divergence '" + name + "' (expected kl, euclidean or chi_squared)");
}

void TreeParams::validate() const {
  if (max_depth < 1) throw ConfigError("tree: max_depth must be >= 1");
  if (min_leaf_per_arm < 1) throw ConfigError("tree: min_leaf_per_arm must be >= 1");
  if (mtry < 0) throw ConfigError("tree: mtry must be >= 0 (0 = sqrt of feature count)");
  if (!(smoothing > 0.0)) throw ConfigError("tree: smoothing must be > 0");
  if (max_thresholds < 1) throw ConfigError("tree: max_thresholds must be >= 1");
}

int TreeParams::effective_mtry(Eigen::Index n_features) const {
  if (mtry > 0) return mtry;
  return std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_features)))));
}

double NodeStats::treated_rate(double smoothing) const {
  return (static_cast<double>(y_t) + smoothing) / (static_cast<double>(n_t) + 2.0 * smoothing);
}

double NodeStats::control_rate(double smoothing) const {
  return (static_cast<double>(y_c) + smoothing) / (static_cast<double>(n_c) + 2.0 * smoothing);
}

NodeStats& NodeStats::operator+=(const NodeStats& o) {
  n_t += o.n_t;
  n_c += o.n_c;
  y_t += o.y_t;
  y_c += o.y_c;
  return *this;
}

NodeStats operator-(NodeStats a, const NodeStats& b) {
  a.n_t -= b.n_t;
  a.n_c -= b.n_c;
  a.y_t -= b.y_t;
  a.y_c -= b.y_c;
  return a;
}

double split_gain(const NodeStats& parent, const NodeStats& left, const NodeStats& right, Divergence divergence,
                  double smoothing) {
  const auto divergence_of = [&](const NodeStats& s) {
    return binary_divergence(s.treated_rate(smoothing), s.control_rate(smoothing), divergence);
  };
  const auto n = static_cast<double>(parent.total());
  if (n <= 0.0) return 0.0;
  const double weighted = (static_cast<double>(left.total()) / n) * divergence_of(left) +
                          (static_cast<double>(right.total()) / n) * divergence_of(right);
  return weighted - divergence_of(parent);
}

const TreeNode& UpliftTree::leaf_for(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  std::size_t k = 0;
  while (!nodes[k].is_leaf()) {
    const auto& node = nodes[k];
    k = static_cast<std::size_t>(x[node.feature] <= node.threshold ? node.left : node.right);
  }
  return nodes[k];
}

int UpliftTree::depth() const {
  std::vector<int> depth(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    deepest = std::max(deepest, depth[k]);
    if (!nodes[k].is_leaf()) {
      depth[static_cast<std::size_t>(nodes[k].left)] = depth[k] + 1;
      depth[static_cast<std::size_t>(nodes[k].right)] = depth[k] + 1;
    }
  }
  return deepest;
}

double UpliftForest::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  double sum = 0.0;
  for (const auto& tree : trees) sum += tree.predict(x);
  return sum / static_cast<double>(trees.size());
}

double UpliftEnsemble::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  double sum = 0.0;
  for (const auto& forest : forests) sum += forest.predict(x);
  return sum / static_cast<double>(forests.size());
}

UpliftTree fit_tree(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXi>& actions,
                    const Eigen::Ref<const Eigen::VectorXi>& outcomes, const std::vector<std::int32_t>& weights,
                    const TreeParams& params, std::uint64_t seed) {
  params.validate();
  if (actions.size() != X.rows() || outcomes.size() != X.rows() || static_cast<Eigen::Index>(weights.size()) != X.rows())
    throw DataError("fit_tree: rows of X, actions, outcomes and weights must align");
  require_both_actions(actions);
  if (X.cols() == 0) throw DataError("fit_tree: no features");
  return TreeBuilder(X, actions, outcomes, weights, params, seed).build();
}

UpliftTree fit_tree(const Dataset& dataset, const TreeParams& params, std::uint64_t seed) {
  const auto data = canonical(dataset);
  const std::vector<std::int32_t> ones(static_cast<std::size_t>(dataset.size()), 1);
  return fit_tree(data.X, data.actions, data.outcomes, ones, params, seed);
}

UpliftForest fit_forest(const Dataset& dataset, const TreeParams& params, int n_trees, std::uint64_t seed) {
  auto ensemble = fit_ensemble(dataset, params, n_trees, 1, seed);
  return std::move(ensemble.forests.front());
}

UpliftEnsemble fit_ensemble(const Dataset& dataset, const TreeParams& params, int n_trees, int n_forests,
                            std::uint64_t seed) {
  params.validate();
  if (n_trees < 1 || n_forests < 1) throw ConfigError("fit_ensemble: n_trees and n_forests must be >= 1");
  require_both_actions(dataset.actions());
  if (dataset.design().cols() == 0) throw DataError("fit_ensemble: no features");
  const auto data = canonical(dataset);

  UpliftEnsemble ensemble;
  ensemble.params = params;
  ensemble.feature_names = dataset.feature_names();
  ensemble.master_seed = seed;
  ensemble.n_trees = n_trees;
  ensemble.forests.resize(static_cast<std::size_t>(n_forests));
  for (int f = 0; f < n_forests; ++f) {
    // With a single forest the forest seed is the master seed, so fit_forest(seed)
    // and fit_ensemble(seed, 1 forest) agree.
    const std::uint64_t forest_seed = n_forests == 1 ? seed : derive_seed(seed, static_cast<std::uint64_t>(f));
    auto& forest = ensemble.forests[static_cast<std::size_t>(f)];
    forest.trees.resize(static_cast<std::size_t>(n_trees));
    for (int t = 0; t < n_trees; ++t) forest.tree_seeds.push_back(derive_seed(forest_seed, static_cast<std::uint64_t>(t)));
  }
  const auto total = static_cast<std::size_t>(n_forests) * static_cast<std::size_t>(n_trees);
  parallel_for(total, [&](std::size_t job) {
    auto& forest = ensemble.forests[job / static_cast<std::size_t>(n_trees)];
    const auto t = job % static_cast<std::size_t>(n_trees);
    forest.trees[t] = fit_bootstrap_tree(data, params, forest.tree_seeds[t]);
  });
  return ensemble;
}

double predict_cate(const UpliftEnsemble& ensemble, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != static_cast<Eigen::Index>(ensemble.feature_names.size()))
    throw DataError("predict_cate: expected " + std::to_string(ensemble.feature_names.size()) + " features, got " +
                    std::to_string(x.size()));
  return ensemble.predict(x);
}

double predict_cate(const UpliftEnsemble& ensemble, const FeatureSchema& schema, const FeatureVector& row) {
  if (schema.encoded_names() != ensemble.feature_names)
    throw DataError("predict_cate: schema does not match the training schema");
  return ensemble.predict(encode(schema, row));
}

Eigen::VectorXd predict_cate(const UpliftEnsemble& ensemble, const Dataset& dataset) {
  if (dataset.feature_names() != ensemble.feature_names)
    throw DataError("predict_cate: dataset schema does not match the training schema");
  Eigen::VectorXd cate(dataset.size());
  const auto& X = dataset.design();
  parallel_for(static_cast<std::size_t>(dataset.size()), [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    cate[r] = ensemble.predict(X.row(r).transpose());
  });
  return cate;
}

nlohmann::json to_json(const UpliftEnsemble& ensemble) {
  auto doc = make_document(kEnsembleFormat, kEnsembleVersion);
  doc["params"] = {{"max_depth", ensemble.params.max_depth},
                   {"min_leaf_per_arm", ensemble.params.min_leaf_per_arm},
                   {"mtry", ensemble.params.mtry},
                   {"divergence", to_string(ensemble.params.divergence)},
                   {"smoothing", ensemble.params.smoothing},
                   {"max_thresholds", ensemble.params.max_thresholds}};
  doc["feature_names"] = ensemble.feature_names;
  doc["schema_hash"] = schema_hash(ensemble.feature_names);
  doc["master_seed"] = ensemble.master_seed;
  doc["n_trees"] = ensemble.n_trees;
  nlohmann::json forests = nlohmann::json::array();
  for (const auto& forest : ensemble.forests) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& tree : forest.trees) trees.push_back(tree_to_json(tree));
    forests.push_back({{"tree_seeds", forest.tree_seeds}, {"trees", std::move(trees)}});
  }
  doc["forests"] = std::move(forests);
  return doc;
}

UpliftEnsemble ensemble_from_json(const nlohmann::json& doc) {
  check_document(doc, kEnsembleFormat, kEnsembleVersion);
  UpliftEnsemble ensemble;
  const auto params = require<nlohmann::json>(doc, "params");
  ensemble.params.max_depth = require<int>(params, "max_depth");
  ensemble.params.min_leaf_per_arm = require<int>(params, "min_leaf_per_arm");
  ensemble.params.mtry = require<int>(params, "mtry");
  ensemble.params.divergence = divergence_from_string(require<std::string>(params, "divergence"));
  ensemble.params.smoothing = require<double>(params, "smoothing");
  ensemble.params.max_thresholds = require<int>(params, "max_thresholds");
  ensemble.params.validate();
  ensemble.feature_names = require<std::vector<std::string>>(doc, "feature_names");
  if (require<std::string>(doc, "schema_hash") != schema_hash(ensemble.feature_names))
    throw DataError("ensemble document: schema hash mismatch");
  ensemble.master_seed = require<std::uint64_t>(doc, "master_seed");
  ensemble.n_trees = require<int>(doc, "n_trees");
  const auto forests = require<nlohmann::json>(doc, "forests");
  if (!forests.is_array() || forests.empty()) throw DataError("ensemble document: no forests");
  for (const auto& f : forests) {
    UpliftForest forest;
    forest.tree_seeds = require<std::vector<std::uint64_t>>(f, "tree_seeds");
    const auto trees = require<nlohmann::json>(f, "trees");
    if (!trees.is_array() || trees.size() != static_cast<std::size_t>(ensemble.n_trees) ||
        forest.tree_seeds.size() != trees.size())
      throw DataError("ensemble document: tree count mismatch");
    for (const auto& t : trees) forest.trees.push_back(tree_from_json(t, ensemble.feature_names.size()));
    ensemble.forests.push_back(std::move(forest));
  }
  return ensemble;
}

std::string model_id(const UpliftEnsemble& ensemble) { return hex64(fnv1a(to_json(ensemble).dump())); }

}  // namespace upolicy
