#pragma once

#include <filesystem>
#include <iosfwd>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

namespace upolicy::pipeline {

inline constexpr const char* kToolVersion = "0.1.0";

/// The complete configuration with every default filled in.
const nlohmann::json& default_config();

/// Overlays `user` on the defaults. Unknown keys and mistyped values throw
/// ConfigError naming the key and its section.
nlohmann::json resolve_config(const nlohmann::json& user);

/// Applies one `dotted.key=value` override; the value is parsed as JSON when it
/// parses, otherwise taken as a string.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Reads the optional config file, resolves defaults, then applies overrides in order.
nlohmann::json load_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides);

std::string config_hash(const nlohmann::json& config);

struct RunOptions {
  std::filesystem::path out;
  std::optional<std::filesystem::path> in;  // artifact directory of earlier steps; defaults to `out`
  std::vector<std::filesystem::path> config_files;  // hashed into the manifest
};

const std::vector<std::string>& command_names();

/// Runs one subcommand. Outputs are staged next to `out` and moved into place on
/// success; on failure the staging directory becomes `<out>.failed`.
void run_command(const std::string& name, const nlohmann::json& config, const RunOptions& options);

/// Full command-line entry point. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace upolicy::pipeline
