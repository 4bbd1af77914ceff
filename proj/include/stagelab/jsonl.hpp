#pragma once

// Line-delimited JSON plumbing shared by every file format: a versioned
// header line followed by one record per line.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "stagelab/core.hpp"
#include "stagelab/error.hpp"

namespace stagelab {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// Identifies a record in error messages: "file:line".
struct Locator {
  std::string file;
  std::size_t line = 0;
  std::string str() const { return file + ":" + std::to_string(line); }
};

[[noreturn]] inline void fail_at(const Locator& at, const std::string& msg) {
  throw DataError(at.str() + ": " + msg);
}

namespace field {

inline const Json& require(const Json& j, std::string_view key, const Locator& at) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) fail_at(at, "missing field '" + std::string(key) + "'");
  return *it;
}

inline std::string string(const Json& j, std::string_view key, const Locator& at) {
  const Json& v = require(j, key, at);
  if (!v.is_string()) fail_at(at, "field '" + std::string(key) + "' must be a string");
  return v.get<std::string>();
}

inline double number(const Json& j, std::string_view key, const Locator& at) {
  const Json& v = require(j, key, at);
  if (!v.is_number()) fail_at(at, "field '" + std::string(key) + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) fail_at(at, "field '" + std::string(key) + "' must be finite");
  return d;
}

inline double probability(const Json& j, std::string_view key, const Locator& at) {
  const double p = number(j, key, at);
  if (p < 0.0 || p > 1.0)
    fail_at(at, "field '" + std::string(key) + "' = " + Json(p).dump() + " outside [0, 1]");
  return p;
}

inline std::int64_t integer(const Json& j, std::string_view key, const Locator& at) {
  const Json& v = require(j, key, at);
  if (!v.is_number_integer()) fail_at(at, "field '" + std::string(key) + "' must be an integer");
  return v.get<std::int64_t>();
}

inline bool boolean(const Json& j, std::string_view key, const Locator& at) {
  const Json& v = require(j, key, at);
  if (!v.is_boolean()) fail_at(at, "field '" + std::string(key) + "' must be a boolean");
  return v.get<bool>();
}

inline std::optional<std::int64_t> optional_integer(const Json& j, std::string_view key, const Locator& at) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return integer(j, key, at);
}

template <typename Parse>
auto enumeration(const Json& j, std::string_view key, const Locator& at, Parse parse) {
  const std::string text = string(j, key, at);
  auto v = parse(text);
  if (!v) fail_at(at, "unknown value '" + text + "' for field '" + std::string(key) + "'");
  return *v;
}

inline BoundingBox box(const Json& j, std::string_view key, const Locator& at) {
  const Json& v = require(j, key, at);
  if (!v.is_array() || v.size() != 4) fail_at(at, "field '" + std::string(key) + "' must be [x_min, y_min, x_max, y_max]");
  double c[4];
  for (std::size_t i = 0; i < 4; ++i) {
    if (!v[i].is_number()) fail_at(at, "box coordinates must be numbers");
    c[i] = v[i].get<double>();
  }
  try {
    return BoundingBox(c[0], c[1], c[2], c[3]);
  } catch (const DataError& e) {
    fail_at(at, e.what());
  }
}

}  // namespace field

inline Json box_to_json(const BoundingBox& b) { return Json::array({b.x_min(), b.y_min(), b.x_max(), b.y_max()}); }

// Reads a JSONL file whose first non-blank line is a header with
// schema_version and the expected kind. A zero-length file yields no records
// and a null header.
struct JsonlContent {
  Json header;
  std::vector<std::pair<Locator, Json>> records;
};

inline JsonlContent read_jsonl(const std::filesystem::path& path, std::string_view kind) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  JsonlContent content;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const Locator at{path.filename().string(), line_no};
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      fail_at(at, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) fail_at(at, "record must be a JSON object");
    if (content.header.is_null()) {
      const auto version = field::integer(j, "schema_version", at);
      if (version != kSchemaVersion) fail_at(at, "unsupported schema_version " + std::to_string(version));
      const auto k = field::string(j, "kind", at);
      if (k != kind) fail_at(at, "expected a '" + std::string(kind) + "' file, found '" + k + "'");
      content.header = std::move(j);
      continue;
    }
    content.records.emplace_back(at, std::move(j));
  }
  if (in.bad()) throw IoError("error reading '" + path.string() + "'");
  return content;
}

inline Json make_header(std::string_view kind) {
  return Json{{"schema_version", kSchemaVersion}, {"kind", kind}};
}

// Writes to a sibling temporary file and renames over the target.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out << text;
    if (!out) throw IoError("error writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline std::string to_jsonl(const Json& header, const std::vector<Json>& records) {
  std::string text = header.dump() + "\n";
  for (const auto& r : records) text += r.dump() + "\n";
  return text;
}

inline void write_jsonl(const std::filesystem::path& path, const Json& header, const std::vector<Json>& records) {
  write_text_atomic(path, to_jsonl(header, records));
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace stagelab
