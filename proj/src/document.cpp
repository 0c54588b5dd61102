#include "upolicy/document.hpp"

#include <fstream>
#include <sstream>

#include "upolicy/error.hpp"
#include "upolicy/random.hpp"

namespace upolicy {

nlohmann::json make_document(std::string_view format, int version) {
  nlohmann::json doc = nlohmann::json::object();
  doc["format"] = std::string(format);
  doc["version"] = version;
  return doc;
}

void check_document(const nlohmann::json& doc, std::string_view format, int supported_version) {
  if (!doc.is_object() || !doc.contains("format") || !doc.contains("version"))
    throw DataError("document lacks format/version header");
  if (doc["format"] != std::string(format))
    throw DataError("expected a '" + std::string(format) + "' document, got '" + doc["format"].dump() + "'");
  if (!doc["version"].is_number_integer()) throw DataError("document version must be an integer");
  const int version = doc["version"].get<int>();
  if (version > supported_version)
    throw DataError("unsupported " + std::string(format) + " version " + std::to_string(version) +
                    " (this build reads up to " + std::to_string(supported_version) + ")");
  if (version < 1) throw DataError("invalid document version " + std::to_string(version));
}

nlohmann::json read_document(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return nlohmann::json::parse(buffer.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("corrupted document " + path.string() + ": " + e.what());
  }
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << text;
    if (!out) throw DataError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_document(const std::filesystem::path& path, const nlohmann::json& doc) {
  write_text_atomic(path, doc.dump(2) + "\n");
}

std::string hex64(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, value >>= 4) s[static_cast<std::size_t>(i)] = kDigits[value & 0xF];
  return s;
}

std::string schema_hash(const std::vector<std::string>& feature_names) {
  std::uint64_t h = fnv1a("schema");
  for (const auto& name : feature_names) {
    h = fnv1a(name, h);
    h = fnv1a(std::string_view("\x1f", 1), h);
  }
  return hex64(h);
}

template <typename T>
T require(const nlohmann::json& doc, const char* key) {
  if (!doc.is_object() || !doc.contains(key)) throw DataError(std::string("document missing key '") + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw DataError(std::string("document key '") + key + "' has the wrong type");
  }
}

template double require<double>(const nlohmann::json&, const char*);
template int require<int>(const nlohmann::json&, const char*);
template bool require<bool>(const nlohmann::json&, const char*);
template std::int64_t require<std::int64_t>(const nlohmann::json&, const char*);
template std::uint64_t require<std::uint64_t>(const nlohmann::json&, const char*);
template std::string require<std::string>(const nlohmann::json&, const char*);
template std::vector<double> require<std::vector<double>>(const nlohmann::json&, const char*);
template std::vector<int> require<std::vector<int>>(const nlohmann::json&, const char*);
template std::vector<std::int64_t> require<std::vector<std::int64_t>>(const nlohmann::json&, const char*);
template std::vector<std::string> require<std::vector<std::string>>(const nlohmann::json&, const char*);
template std::vector<std::uint64_t> require<std::vector<std::uint64_t>>(const nlohmann::json&, const char*);
template nlohmann::json require<nlohmann::json>(const nlohmann::json&, const char*);

}  // namespace upolicy
