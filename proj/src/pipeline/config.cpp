#include <fstream>
#include <sstream>

#include "upolicy/document.hpp"
#include "upolicy/error.hpp"
#include "upolicy/pipeline.hpp"
#include "upolicy/random.hpp"

namespace upolicy::pipeline {

namespace {

// Every key the pipeline understands. Empty strings mean "unset".
constexpr const char* kDefaults = R"({
  "seed": 20240101,
  "output_dir": "out",
  "data": {
    "source": "synthetic",
    "train_path": "",
    "test_path": "",
    "holdout_fraction": 0.2,
    "horizon_days": 90,
    "episode_day": 1,
    "events_path": "",
    "decision_date": "",
    "decision_hour": 9
  },
  "synthetic": {
    "n_train": 20000,
    "n_test": 5000,
    "n_days": 1,
    "positive_share": 0.6,
    "extreme_propensity_fraction": 0.0,
    "logging_intercept": 0.0,
    "logging_coefficients": []
  },
  "feature_selection": {
    "enabled": true,
    "top_k": 50,
    "n_bins": 10
  },
  "propensity": {
    "source": "true",
    "l2": 0.0001,
    "max_iter": 100
  },
  "trimming": {
    "low": 0.01,
    "high": 0.99
  },
  "forest": {
    "n_forests": 30,
    "n_trees": 20,
    "max_depth": 8,
    "min_leaf_per_arm": 30,
    "mtry": 0,
    "divergence": "kl",
    "smoothing": 0.5,
    "max_thresholds": 32
  },
  "evaluation": {
    "qini_reference": "auto",
    "calibration_bins": 10,
    "level": 0.95
  },
  "ope": {
    "n_grid": 50,
    "bootstrap_reps": 200,
    "level": 0.95
  },
  "policy": {
    "threshold": 0.0
  },
  "surrogate": {
    "max_depth": 3
  },
  "trial": {
    "assignment_probability": 0.5,
    "treatment_compliance": 0.54,
    "control_contact_rate": 0.5,
    "control_intercept": 0.0,
    "control_coefficients": [],
    "counts_path": ""
  },
  "analysis": {
    "level": 0.95,
    "expected_control_share": 0.5,
    "srm_threshold": 0.01,
    "test": "pooled_z"
  },
  "pipeline": {
    "repeat_days": 0
  }
})";

std::string section_name(const std::string& path) { return path.empty() ? "<top level>" : path; }

bool same_kind(const nlohmann::json& def, const nlohmann::json& value) {
  if (def.is_number()) {
    if (def.is_number_integer()) return value.is_number_integer();
    return value.is_number();
  }
  if (def.is_boolean()) return value.is_boolean();
  if (def.is_string()) return value.is_string();
  if (def.is_array()) return value.is_array();
  if (def.is_object()) return value.is_object();
  return false;
}

void merge(nlohmann::json& target, const nlohmann::json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("config section '" + section_name(path) + "' must be an object");
  for (const auto& [key, value] : user.items()) {
    if (!target.contains(key))
      throw ConfigError("unknown config key '" + key + "' in section '" + section_name(path) + "'");
    const std::string full = path.empty() ? key : path + "." + key;
    auto& slot = target[key];
    if (!same_kind(slot, value)) throw ConfigError("config key '" + full + "' has the wrong type");
    if (slot.is_object())
      merge(slot, value, full);
    else if (slot.is_number_float())
      slot = value.get<double>();  // keeps 1 and 1.0 hashing alike
    else
      slot = value;
  }
}

}  // namespace

const nlohmann::json& default_config() {
  static const nlohmann::json defaults = nlohmann::json::parse(kDefaults);
  return defaults;
}

nlohmann::json resolve_config(const nlohmann::json& user) {
  nlohmann::json config = default_config();
  merge(config, user, "");
  return config;
}

void apply_override(nlohmann::json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' must look like key.path=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  // Build a nested object and merge it, so overrides obey the same strictness.
  nlohmann::json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t start = 0;;) {
    const auto dot = rest.find('.', start);
    parts.push_back(rest.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) throw ConfigError("override key '" + key + "' has an empty component");
    patch = nlohmann::json{{*it, patch}};
  }
  merge(config, patch, "");
}

nlohmann::json load_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides) {
  nlohmann::json user = nlohmann::json::object();
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot open config file " + file->string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    user = nlohmann::json::parse(buffer.str(), nullptr, false);
    if (user.is_discarded()) throw ConfigError("config file " + file->string() + " is not valid JSON");
  }
  nlohmann::json config = resolve_config(user);
  for (const auto& o : overrides) apply_override(config, o);
  return config;
}

std::string config_hash(const nlohmann::json& config) { return hex64(fnv1a(config.dump())); }

}  // namespace upolicy::pipeline
