#pragma once

#include <filesystem>
#include <json.hpp>
#include <string>
#include <string_view>
#include <vector>

namespace upolicy {

/// Versioned key-value documents: every document carries "format" and "version".
nlohmann::json make_document(std::string_view format, int version);

/// Throws DataError when the format differs or the version is newer than supported.
void check_document(const nlohmann::json& doc, std::string_view format, int supported_version);

/// Reads and parses a JSON document; truncated or malformed input throws DataError.
nlohmann::json read_document(const std::filesystem::path& path);
/// Pretty-printed, newline-terminated, written via a temporary file and rename.
void write_document(const std::filesystem::path& path, const nlohmann::json& doc);
/// Atomic text write (temporary file + rename).
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

/// Hex FNV-1a digest of the ordered feature names.
std::string schema_hash(const std::vector<std::string>& feature_names);
std::string hex64(std::uint64_t value);

/// Fetches a required key, throwing DataError with the key name when absent or mistyped.
template <typename T>
T require(const nlohmann::json& doc, const char* key);

}  // namespace upolicy
