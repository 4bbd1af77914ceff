#pragma once

// Key-value configuration files:
//
//   # comment
//   key = value
//
// Keys are unique; blank lines and lines starting with '#' are ignored.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "stagelab/error.hpp"
#include "stagelab/synthetic.hpp"

namespace stagelab {

class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& source = "config") {
    KeyValueConfig cfg;
    cfg.source_ = source;
    std::size_t line_no = 0, pos = 0;
    while (pos <= text.size()) {
      const std::size_t end = std::min(text.find('\n', pos), text.size());
      std::string line = trim(text.substr(pos, end - pos));
      pos = end + 1;
      ++line_no;
      if (line.empty() || line[0] == '#') {
        if (end == text.size()) break;
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw DataError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
      std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
      if (key.empty()) throw DataError(source + ":" + std::to_string(line_no) + ": empty key");
      if (!cfg.values_.emplace(key, value).second)
        throw DataError(source + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
      if (end == text.size()) break;
    }
    return cfg;
  }

  static KeyValueConfig load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse(text, path.filename().string());
  }

  bool contains(const std::string& key) const { return values_.contains(key); }

  std::optional<std::string> string(const std::string& key) const {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? std::nullopt : std::optional(it->second);
  }

  template <class T>
  std::optional<T> number(const std::string& key) const {
    auto s = string(key);
    if (!s) return std::nullopt;
    T v{};
    const auto [ptr, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
    if (ec != std::errc() || ptr != s->data() + s->size())
      throw DataError(source_ + ": '" + key + "' is not a valid number: '" + *s + "'");
    return v;
  }

  // Keys never read through string() / number().
  std::set<std::string> unused() const {
    std::set<std::string> out;
    for (const auto& [k, v] : values_)
      if (!used_.contains(k)) out.insert(k);
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::string source_;
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

// Overrides SyntheticConfig fields named in `kv`; unknown keys are an error.
inline SyntheticConfig synthetic_config_from(const KeyValueConfig& kv, SyntheticConfig cfg = {}) {
  auto set = [&](const char* key, auto& field) {
    using T = std::decay_t<decltype(field)>;
    if (auto v = kv.number<T>(key)) field = *v;
  };
  set("n_patients", cfg.n_patients);
  set("lesions_per_patient_mean", cfg.lesions_per_patient_mean);
  set("lesions_per_patient_sd", cfg.lesions_per_patient_sd);
  set("biopsied_per_patient_mean", cfg.biopsied_per_patient_mean);
  set("biopsied_per_patient_sd", cfg.biopsied_per_patient_sd);
  set("prevalence", cfg.prevalence);
  set("nonbiopsied_prevalence", cfg.nonbiopsied_prevalence);
  set("nonbiopsied_benign_shift", cfg.nonbiopsied_benign_shift);
  set("indeterminate_rate", cfg.indeterminate_rate);
  if (auto s = kv.string("separability")) {
    if (*s == "perfect") cfg.separability = 1.0;
    else if (*s == "none") cfg.separability = 0.5;
    else set("separability", cfg.separability);
  }
  set("lesions_per_image", cfg.lesions_per_image);
  set("image_width", cfg.image_width);
  set("image_height", cfg.image_height);
  set("frame_width", cfg.frame_width);
  set("frame_height", cfg.frame_height);
  set("annual_recurrence_rate", cfg.annual_recurrence_rate);
  set("occult_hazard_ratio", cfg.occult_hazard_ratio);
  set("min_followup_days", cfg.min_followup_days);
  set("max_followup_days", cfg.max_followup_days);
  if (auto s = kv.string("scorer_id")) cfg.scorer_id = *s;
  if (auto v = kv.number<std::uint64_t>("seed")) cfg.seed = *v;
  if (auto unknown = kv.unused(); !unknown.empty())
    throw UsageError("unknown configuration key '" + *unknown.begin() + "'");
  return cfg;
}

}  // namespace stagelab
