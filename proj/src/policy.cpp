#include "upolicy/policy.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "upolicy/document.hpp"
#include "upolicy/error.hpp"

namespace upolicy {

namespace {

constexpr const char* kPolicyFormat = "upolicy.threshold_policy";
constexpr int kPolicyVersion = 1;

double gini(std::int64_t a, std::int64_t b) {
  const double n = static_cast<double>(a + b);
  if (n == 0.0) return 0.0;
  const double p = static_cast<double>(a) / n;
  return 2.0 * p * (1.0 - p);
}

class SurrogateBuilder {
 public:
  SurrogateBuilder(const Eigen::MatrixXd& X, const std::vector<int>& labels, int max_depth)
      : X_(X), labels_(labels), max_depth_(max_depth) {}

  std::vector<SurrogateNode> build() {
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(X_.rows()));
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<Eigen::Index>(i);
    grow(rows, 0);
    return std::move(nodes_);
  }

 private:
  int grow(const std::vector<Eigen::Index>& rows, int depth) {
    const int index = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    SurrogateNode node;
    for (auto i : rows) (labels_[static_cast<std::size_t>(i)] == 1 ? node.n_contact : node.n_no_contact)++;
    // Majority vote; ties recommend contact, matching the policy's closed boundary.
    node.prediction = node.n_contact >= node.n_no_contact ? Action::Contact : Action::NoContact;

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_impurity = gini(node.n_contact, node.n_no_contact);
    const double n = static_cast<double>(rows.size());
    if (depth < max_depth_ && node.n_contact > 0 && node.n_no_contact > 0) {
      std::vector<std::pair<double, Eigen::Index>> sorted(rows.size());
      for (Eigen::Index f = 0; f < X_.cols(); ++f) {
        for (std::size_t k = 0; k < rows.size(); ++k) sorted[k] = {X_(rows[k], f), rows[k]};
        std::sort(sorted.begin(), sorted.end());
        std::int64_t left_contact = 0, left_total = 0;
        for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
          ++left_total;
          left_contact += labels_[static_cast<std::size_t>(sorted[k].second)];
          if (!(sorted[k].first < sorted[k + 1].first)) continue;
          const std::int64_t right_total = static_cast<std::int64_t>(rows.size()) - left_total;
          const std::int64_t right_contact = node.n_contact - left_contact;
          const double impurity =
              (static_cast<double>(left_total) / n) * gini(left_contact, left_total - left_contact) +
              (static_cast<double>(right_total) / n) * gini(right_contact, right_total - right_contact);
          if (impurity < best_impurity) {
            best_impurity = impurity;
            best_feature = static_cast<int>(f);
            best_threshold = 0.5 * (sorted[k].first + sorted[k + 1].first);
          }
        }
      }
    }
    if (best_feature < 0) {
      nodes_[static_cast<std::size_t>(index)] = node;
      return index;
    }
    node.feature = best_feature;
    node.threshold = best_threshold;
    nodes_[static_cast<std::size_t>(index)] = node;
    std::vector<Eigen::Index> left_rows, right_rows;
    for (auto i : rows) (X_(i, best_feature) <= best_threshold ? left_rows : right_rows).push_back(i);
    const int left = grow(left_rows, depth + 1);
    const int right = grow(right_rows, depth + 1);
    nodes_[static_cast<std::size_t>(index)].left = left;
    nodes_[static_cast<std::size_t>(index)].right = right;
    return index;
  }

  const Eigen::MatrixXd& X_;
  const std::vector<int>& labels_;
  int max_depth_;
  std::vector<SurrogateNode> nodes_;
};

std::string format_threshold(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

void describe_node(const SurrogateTree& tree, int index, int indent, std::ostringstream& out) {
  const auto& node = tree.nodes[static_cast<std::size_t>(index)];
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  if (node.is_leaf()) {
    out << pad << to_string(node.prediction) << "  (contact " << node.n_contact << ", no_contact " << node.n_no_contact
        << ")\n";
    return;
  }
  const auto& name = tree.feature_names[static_cast<std::size_t>(node.feature)];
  out << pad << "if " << name << " <= " << format_threshold(node.threshold) << ":\n";
  describe_node(tree, node.left, indent + 1, out);
  out << pad << "else:\n";
  describe_node(tree, node.right, indent + 1, out);
}

}  // namespace

std::string to_string(Action a) { return a == Action::Contact ? "contact" : "no_contact"; }

Action recommend(const ThresholdPolicy& policy, const UpliftEnsemble& ensemble,
                 const Eigen::Ref<const Eigen::VectorXd>& x) {
  return recommend_from_cate(predict_cate(ensemble, x), policy.threshold);
}

Recommendations recommend_from_scores(const Eigen::Ref<const Eigen::VectorXd>& cate, double threshold) {
  Recommendations recs;
  recs.cate = cate;
  recs.actions.reserve(static_cast<std::size_t>(cate.size()));
  std::int64_t contacts = 0;
  for (Eigen::Index i = 0; i < cate.size(); ++i) {
    const Action a = recommend_from_cate(cate[i], threshold);
    contacts += to_int(a);
    recs.actions.push_back(a);
  }
  recs.contact_rate = cate.size() == 0 ? 0.0 : static_cast<double>(contacts) / static_cast<double>(cate.size());
  return recs;
}

Recommendations recommend_batch(const ThresholdPolicy& policy, const UpliftEnsemble& ensemble, const Dataset& dataset) {
  return recommend_from_scores(predict_cate(ensemble, dataset), policy.threshold);
}

Action SurrogateTree::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != static_cast<Eigen::Index>(feature_names.size())) throw DataError("surrogate: feature count mismatch");
  std::size_t k = 0;
  while (!nodes[k].is_leaf()) {
    const auto& node = nodes[k];
    k = static_cast<std::size_t>(x[node.feature] <= node.threshold ? node.left : node.right);
  }
  return nodes[k].prediction;
}

std::string SurrogateTree::describe() const {
  std::ostringstream out;
  describe_node(*this, 0, 0, out);
  return out.str();
}

SurrogateTree distill_surrogate(const Dataset& dataset, const std::vector<Action>& recommended, int max_depth) {
  if (max_depth < 1) throw ConfigError("distill_surrogate: max_depth must be >= 1");
  if (dataset.empty()) throw DataError("distill_surrogate: empty dataset");
  if (recommended.size() != static_cast<std::size_t>(dataset.size()))
    throw DataError("distill_surrogate: one recommendation per row required");
  const auto order = dataset.id_order();
  Eigen::MatrixXd X(dataset.size(), dataset.design().cols());
  std::vector<int> labels(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    X.row(static_cast<Eigen::Index>(k)) = dataset.design().row(order[k]);
    labels[k] = to_int(recommended[static_cast<std::size_t>(order[k])]);
  }
  SurrogateTree tree;
  tree.feature_names = dataset.feature_names();
  tree.max_depth = max_depth;
  tree.nodes = SurrogateBuilder(X, labels, max_depth).build();
  std::int64_t agree = 0;
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    agree += to_int(tree.predict(X.row(i).transpose())) == labels[static_cast<std::size_t>(i)] ? 1 : 0;
  tree.fidelity = static_cast<double>(agree) / static_cast<double>(X.rows());
  return tree;
}

SurrogateTree distill_surrogate(const ThresholdPolicy& policy, const UpliftEnsemble& ensemble, const Dataset& dataset,
                                int max_depth) {
  if (max_depth < 1) throw ConfigError("distill_surrogate: max_depth must be >= 1");
  return distill_surrogate(dataset, recommend_batch(policy, ensemble, dataset).actions, max_depth);
}

nlohmann::json to_json(const SurrogateTree& tree) {
  auto doc = make_document("upolicy.surrogate_tree", 1);
  doc["feature_names"] = tree.feature_names;
  doc["max_depth"] = tree.max_depth;
  doc["fidelity"] = tree.fidelity;
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : tree.nodes) {
    nodes.push_back({{"feature", n.feature},
                     {"threshold", n.threshold},
                     {"left", n.left},
                     {"right", n.right},
                     {"n_contact", n.n_contact},
                     {"n_no_contact", n.n_no_contact},
                     {"prediction", to_string(n.prediction)}});
  }
  doc["nodes"] = std::move(nodes);
  doc["rendering"] = tree.describe();
  return doc;
}

nlohmann::json policy_document(const ThresholdPolicy& policy, const UpliftEnsemble& ensemble) {
  auto doc = make_document(kPolicyFormat, kPolicyVersion);
  doc["model_id"] = policy.model_id.empty() ? model_id(ensemble) : policy.model_id;
  doc["threshold"] = policy.threshold;
  doc["metadata"] = {{"training_range", policy.metadata.training_range},
                     {"episode_day", policy.metadata.episode_day},
                     {"feature_subset", policy.metadata.feature_subset}};
  doc["ensemble"] = to_json(ensemble);
  return doc;
}

LoadedPolicy policy_from_document(const nlohmann::json& doc) {
  check_document(doc, kPolicyFormat, kPolicyVersion);
  LoadedPolicy loaded;
  loaded.ensemble = ensemble_from_json(require<nlohmann::json>(doc, "ensemble"));
  loaded.policy.model_id = require<std::string>(doc, "model_id");
  if (loaded.policy.model_id != model_id(loaded.ensemble))
    throw DataError("policy document: model_id does not match the embedded ensemble");
  loaded.policy.threshold = require<double>(doc, "threshold");
  const auto meta = require<nlohmann::json>(doc, "metadata");
  loaded.policy.metadata.training_range = require<std::string>(meta, "training_range");
  loaded.policy.metadata.episode_day = require<int>(meta, "episode_day");
  loaded.policy.metadata.feature_subset = require<std::vector<std::string>>(meta, "feature_subset");
  return loaded;
}

void save_policy(const ThresholdPolicy& policy, const UpliftEnsemble& ensemble, const std::filesystem::path& path) {
  write_document(path, policy_document(policy, ensemble));
}

LoadedPolicy load_policy(const std::filesystem::path& path) { return policy_from_document(read_document(path)); }

void write_recommendations_csv(const std::filesystem::path& path, const Dataset& dataset, const Recommendations& recs) {
  if (recs.cate.size() != dataset.size()) throw DataError("recommendations do not align with the dataset");
  std::ostringstream out;
  out << "id,cate,recommendation\n";
  char buf[32];
  for (Eigen::Index i = 0; i < dataset.size(); ++i) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), recs.cate[i]);
    out << dataset.row(i).id << ',' << std::string_view(buf, static_cast<std::size_t>(end - buf)) << ','
        << to_string(recs.actions[static_cast<std::size_t>(i)]) << '\n';
  }
  write_text_atomic(path, out.str());
}

}  // namespace upolicy
