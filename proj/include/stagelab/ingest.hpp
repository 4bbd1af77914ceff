#pragma once

// Loaders and writers for bundle.jsonl, predictions.jsonl, outcomes.jsonl /
// outcomes.csv and sidecar.jsonl. Out-of-range values are rejected with a
// file:line locator, never clamped.

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_set>
#include <vector>

#include "stagelab/core.hpp"
#include "stagelab/jsonl.hpp"

namespace stagelab {

// ---------------------------------------------------------------------------
// Bundle

namespace detail {

inline Json region_to_json(const ImageRegion& r) { return Json{{"image_id", r.image_id}, {"box", box_to_json(r.box)}}; }

inline ImageRegion region_from_json(const Json& j, const Locator& at) {
  if (!j.is_object()) fail_at(at, "image region must be an object");
  return {field::string(j, "image_id", at), field::box(j, "box", at)};
}

}  // namespace detail

inline std::vector<Json> bundle_records(const DatasetBundle& bundle) {
  std::vector<Json> records;
  for (const auto& p : bundle.patients) {
    Json j{{"type", "patient"}, {"patient_id", p.patient_id}, {"cancer_site", to_string(p.cancer_site)}};
    if (p.age_years) j["age_years"] = *p.age_years;
    records.push_back(std::move(j));
  }
  for (const auto& img : bundle.images)
    records.push_back(Json{{"type", "image"},
                           {"image_id", img.image_id},
                           {"file_path", img.file_path},
                           {"width", img.width},
                           {"height", img.height}});
  for (const auto& l : bundle.lesions) {
    Json patches = Json::array();
    for (const auto& p : l.patches) patches.push_back(detail::region_to_json(p));
    records.push_back(Json{{"type", "lesion"},
                           {"lesion_id", l.lesion_id},
                           {"patient_id", l.patient_id},
                           {"site", to_string(l.site)},
                           {"biopsied", l.biopsied},
                           {"pathology", to_string(l.pathology)},
                           {"detection", detail::region_to_json(l.detection)},
                           {"patches", std::move(patches)}});
  }
  return records;
}

inline Json bundle_header(const DatasetBundle& bundle) {
  Json h = make_header("bundle");
  h["source"] = bundle.provenance.source;
  h["created"] = bundle.provenance.created;
  if (bundle.provenance.seed) h["seed"] = *bundle.provenance.seed;
  return h;
}

inline void write_bundle(const DatasetBundle& bundle, const std::filesystem::path& path) {
  write_jsonl(path, bundle_header(bundle), bundle_records(bundle));
}

inline DatasetBundle load_bundle(const std::filesystem::path& path) {
  const JsonlContent content = read_jsonl(path, "bundle");
  DatasetBundle bundle;
  if (!content.header.is_null()) {
    const Json& h = content.header;
    if (auto it = h.find("source"); it != h.end() && it->is_string()) bundle.provenance.source = *it;
    if (auto it = h.find("created"); it != h.end() && it->is_string()) bundle.provenance.created = *it;
    if (auto it = h.find("seed"); it != h.end() && it->is_number_unsigned())
      bundle.provenance.seed = it->get<std::uint64_t>();
  }
  for (const auto& [at, j] : content.records) {
    const std::string type = field::string(j, "type", at);
    if (type == "patient") {
      Patient p;
      p.patient_id = field::string(j, "patient_id", at);
      p.cancer_site = field::enumeration(j, "cancer_site", at, parse_cancer_site);
      if (auto age = field::optional_integer(j, "age_years", at)) p.age_years = static_cast<int>(*age);
      bundle.patients.push_back(std::move(p));
    } else if (type == "image") {
      ImageRef img;
      img.image_id = field::string(j, "image_id", at);
      img.file_path = field::string(j, "file_path", at);
      img.width = static_cast<int>(field::integer(j, "width", at));
      img.height = static_cast<int>(field::integer(j, "height", at));
      if (img.width <= 0 || img.height <= 0) fail_at(at, "image dimensions must be positive");
      bundle.images.push_back(std::move(img));
    } else if (type == "lesion") {
      LesionRecord l;
      l.lesion_id = field::string(j, "lesion_id", at);
      l.patient_id = field::string(j, "patient_id", at);
      l.site = field::enumeration(j, "site", at, parse_lesion_site);
      l.biopsied = field::boolean(j, "biopsied", at);
      l.pathology = field::enumeration(j, "pathology", at, parse_pathology);
      l.detection = detail::region_from_json(field::require(j, "detection", at), at);
      const Json& patches = field::require(j, "patches", at);
      if (!patches.is_array()) fail_at(at, "field 'patches' must be an array");
      for (const auto& p : patches) l.patches.push_back(detail::region_from_json(p, at));
      bundle.lesions.push_back(std::move(l));
    } else {
      fail_at(at, "unknown record type '" + type + "'");
    }
  }
  return bundle;
}

// ---------------------------------------------------------------------------
// Predictions

struct DetectionPrediction {
  std::string image_id;
  BoundingBox box;
  double confidence = 0.0;
  friend bool operator==(const DetectionPrediction&, const DetectionPrediction&) = default;
};

struct ScoreRecord {
  std::string lesion_id;
  int patch_index = 0;
  double probability = 0.0;
  std::string scorer_id;
  friend bool operator==(const ScoreRecord&, const ScoreRecord&) = default;
};

struct PredictionSet {
  std::vector<DetectionPrediction> detections;
  std::vector<ScoreRecord> scores;

  std::vector<std::string> scorer_ids() const {
    std::set<std::string> ids;
    for (const auto& s : scores) ids.insert(s.scorer_id);
    return {ids.begin(), ids.end()};
  }
  friend bool operator==(const PredictionSet&, const PredictionSet&) = default;
};

inline std::vector<Json> prediction_records(const PredictionSet& set) {
  std::vector<Json> records;
  for (const auto& d : set.detections)
    records.push_back(Json{{"type", "detection"},
                           {"image_id", d.image_id},
                           {"box", box_to_json(d.box)},
                           {"confidence", d.confidence}});
  for (const auto& s : set.scores)
    records.push_back(Json{{"type", "score"},
                           {"lesion_id", s.lesion_id},
                           {"patch_index", s.patch_index},
                           {"probability", s.probability},
                           {"scorer_id", s.scorer_id}});
  return records;
}

inline void write_predictions(const PredictionSet& set, const std::filesystem::path& path) {
  write_jsonl(path, make_header("predictions"), prediction_records(set));
}

// Parses without cross-checking ids; see load_predictions.
inline PredictionSet read_predictions(const std::filesystem::path& path) {
  const JsonlContent content = read_jsonl(path, "predictions");
  PredictionSet set;
  std::set<std::tuple<std::string, int, std::string>> seen;
  for (const auto& [at, j] : content.records) {
    const std::string type = field::string(j, "type", at);
    if (type == "detection") {
      set.detections.push_back(
          {field::string(j, "image_id", at), field::box(j, "box", at), field::probability(j, "confidence", at)});
    } else if (type == "score") {
      ScoreRecord s;
      s.lesion_id = field::string(j, "lesion_id", at);
      const auto idx = field::integer(j, "patch_index", at);
      if (idx < 0) fail_at(at, "patch_index must be non-negative");
      s.patch_index = static_cast<int>(idx);
      s.probability = field::probability(j, "probability", at);
      s.scorer_id = field::string(j, "scorer_id", at);
      if (!seen.emplace(s.lesion_id, s.patch_index, s.scorer_id).second)
        fail_at(at, "duplicate score for (" + s.lesion_id + ", " + std::to_string(s.patch_index) + ", " +
                        s.scorer_id + ") is ambiguous");
      set.scores.push_back(std::move(s));
    } else {
      fail_at(at, "unknown record type '" + type + "'");
    }
  }
  return set;
}

// Cross-validates every referenced image and lesion id against the bundle and
// reports all offenders at once.
inline void check_prediction_ids(const PredictionSet& set, const DatasetBundle& bundle) {
  std::unordered_set<std::string> images, lesions;
  for (const auto& i : bundle.images) images.insert(i.image_id);
  for (const auto& l : bundle.lesions) lesions.insert(l.lesion_id);
  std::set<std::string> orphan_images, orphan_lesions;
  for (const auto& d : set.detections)
    if (!images.contains(d.image_id)) orphan_images.insert(d.image_id);
  for (const auto& s : set.scores)
    if (!lesions.contains(s.lesion_id)) orphan_lesions.insert(s.lesion_id);
  if (orphan_images.empty() && orphan_lesions.empty()) return;
  std::string msg = "predictions reference unknown ids:";
  for (const auto& id : orphan_lesions) msg += " lesion:" + id;
  for (const auto& id : orphan_images) msg += " image:" + id;
  throw DataError(msg);
}

inline PredictionSet load_predictions(const std::filesystem::path& path, const DatasetBundle& bundle) {
  PredictionSet set = read_predictions(path);
  check_prediction_ids(set, bundle);
  return set;
}

// ---------------------------------------------------------------------------
// Outcomes

struct OutcomeRecord {
  std::string patient_id;
  int followup_days = 0;
  bool recurrence_event = false;
  std::optional<int> recurrence_day;
  bool peritoneal_carcinomatosis_event = false;
  std::optional<int> peritoneal_carcinomatosis_day;
  friend bool operator==(const OutcomeRecord&, const OutcomeRecord&) = default;
};

using OutcomeSet = std::vector<OutcomeRecord>;

namespace detail {

inline void check_outcome(const OutcomeRecord& o, const Locator& at) {
  if (o.patient_id.empty()) fail_at(at, "outcome has empty patient_id");
  if (o.followup_days < 0) fail_at(at, "followup_days must be >= 0");
  auto check_event = [&](bool event, const std::optional<int>& day, std::string_view name) {
    if (event && !day) fail_at(at, std::string(name) + " event requires an event day");
    if (!event && day) fail_at(at, std::string(name) + " day given without an event");
    if (day && (*day < 0 || *day > o.followup_days))
      fail_at(at, std::string(name) + " day must lie within [0, followup_days]");
  };
  check_event(o.recurrence_event, o.recurrence_day, "recurrence");
  check_event(o.peritoneal_carcinomatosis_event, o.peritoneal_carcinomatosis_day, "peritoneal_carcinomatosis");
}

}  // namespace detail

inline void write_outcomes(const OutcomeSet& outcomes, const std::filesystem::path& path) {
  std::vector<Json> records;
  for (const auto& o : outcomes) {
    Json j{{"type", "outcome"},
           {"patient_id", o.patient_id},
           {"followup_days", o.followup_days},
           {"recurrence_event", o.recurrence_event},
           {"peritoneal_carcinomatosis_event", o.peritoneal_carcinomatosis_event}};
    if (o.recurrence_day) j["recurrence_day"] = *o.recurrence_day;
    if (o.peritoneal_carcinomatosis_day) j["peritoneal_carcinomatosis_day"] = *o.peritoneal_carcinomatosis_day;
    records.push_back(std::move(j));
  }
  write_jsonl(path, make_header("outcomes"), records);
}

inline constexpr std::string_view kOutcomeCsvHeader =
    "patient_id,followup_days,recurrence_event,recurrence_day,peritoneal_carcinomatosis_event,"
    "peritoneal_carcinomatosis_day";

inline void write_outcomes_csv(const OutcomeSet& outcomes, const std::filesystem::path& path) {
  std::string text = std::string(kOutcomeCsvHeader) + "\n";
  auto opt = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string(); };
  for (const auto& o : outcomes)
    text += o.patient_id + "," + std::to_string(o.followup_days) + "," + (o.recurrence_event ? "1" : "0") + "," +
            opt(o.recurrence_day) + "," + (o.peritoneal_carcinomatosis_event ? "1" : "0") + "," +
            opt(o.peritoneal_carcinomatosis_day) + "\n";
  write_text_atomic(path, text);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(cell);
  return cells;
}

inline std::optional<int> parse_int_cell(const std::string& s, const Locator& at, std::string_view column) {
  if (s.empty()) return std::nullopt;
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    fail_at(at, "column '" + std::string(column) + "' is not an integer: '" + s + "'");
  return v;
}

inline bool parse_flag_cell(const std::string& s, const Locator& at, std::string_view column) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  fail_at(at, "column '" + std::string(column) + "' must be 0/1 or true/false, got '" + s + "'");
}

}  // namespace detail

inline OutcomeSet load_outcomes_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  OutcomeSet outcomes;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  std::unordered_set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const Locator at{path.filename().string(), line_no};
    auto cells = detail::split_csv_line(line);
    if (header.empty()) {
      header = cells;
      if (detail::split_csv_line(std::string(kOutcomeCsvHeader)) != header)
        fail_at(at, "unexpected outcomes CSV header; expected '" + std::string(kOutcomeCsvHeader) + "'");
      continue;
    }
    if (cells.size() != header.size()) fail_at(at, "expected " + std::to_string(header.size()) + " columns");
    OutcomeRecord o;
    o.patient_id = cells[0];
    const auto followup = detail::parse_int_cell(cells[1], at, "followup_days");
    if (!followup) fail_at(at, "followup_days is required");
    o.followup_days = *followup;
    o.recurrence_event = detail::parse_flag_cell(cells[2], at, "recurrence_event");
    o.recurrence_day = detail::parse_int_cell(cells[3], at, "recurrence_day");
    o.peritoneal_carcinomatosis_event = detail::parse_flag_cell(cells[4], at, "peritoneal_carcinomatosis_event");
    o.peritoneal_carcinomatosis_day = detail::parse_int_cell(cells[5], at, "peritoneal_carcinomatosis_day");
    detail::check_outcome(o, at);
    if (!seen.insert(o.patient_id).second) fail_at(at, "duplicate outcome for patient '" + o.patient_id + "'");
    outcomes.push_back(std::move(o));
  }
  return outcomes;
}

inline OutcomeSet load_outcomes(const std::filesystem::path& path) {
  if (path.extension() == ".csv") return load_outcomes_csv(path);
  const JsonlContent content = read_jsonl(path, "outcomes");
  OutcomeSet outcomes;
  std::unordered_set<std::string> seen;
  for (const auto& [at, j] : content.records) {
    if (field::string(j, "type", at) != "outcome") fail_at(at, "expected an 'outcome' record");
    OutcomeRecord o;
    o.patient_id = field::string(j, "patient_id", at);
    o.followup_days = static_cast<int>(field::integer(j, "followup_days", at));
    o.recurrence_event = field::boolean(j, "recurrence_event", at);
    if (auto d = field::optional_integer(j, "recurrence_day", at)) o.recurrence_day = static_cast<int>(*d);
    o.peritoneal_carcinomatosis_event = field::boolean(j, "peritoneal_carcinomatosis_event", at);
    if (auto d = field::optional_integer(j, "peritoneal_carcinomatosis_day", at))
      o.peritoneal_carcinomatosis_day = static_cast<int>(*d);
    detail::check_outcome(o, at);
    if (!seen.insert(o.patient_id).second) fail_at(at, "duplicate outcome for patient '" + o.patient_id + "'");
    outcomes.push_back(std::move(o));
  }
  return outcomes;
}

// ---------------------------------------------------------------------------
// Ground-truth sidecar written by the synthetic generator.

struct LesionTruth {
  std::string lesion_id;
  bool malignant = false;
  double latent = 0.0;  // appearance signal the images encode
  friend bool operator==(const LesionTruth&, const LesionTruth&) = default;
};

struct BoxTruth {
  std::string image_id;
  std::string lesion_id;
  BoundingBox box;
  friend bool operator==(const BoxTruth&, const BoxTruth&) = default;
};

struct PatientTruth {
  std::string patient_id;
  bool occult_metastasis = false;
  friend bool operator==(const PatientTruth&, const PatientTruth&) = default;
};

struct Sidecar {
  std::vector<LesionTruth> lesions;
  std::vector<BoxTruth> boxes;
  std::vector<PatientTruth> patients;
  friend bool operator==(const Sidecar&, const Sidecar&) = default;
};

inline void write_sidecar(const Sidecar& sidecar, const std::filesystem::path& path) {
  std::vector<Json> records;
  for (const auto& p : sidecar.patients)
    records.push_back(
        Json{{"type", "patient_truth"}, {"patient_id", p.patient_id}, {"occult_metastasis", p.occult_metastasis}});
  for (const auto& l : sidecar.lesions)
    records.push_back(
        Json{{"type", "lesion_truth"}, {"lesion_id", l.lesion_id}, {"malignant", l.malignant}, {"latent", l.latent}});
  for (const auto& b : sidecar.boxes)
    records.push_back(Json{
        {"type", "box"}, {"image_id", b.image_id}, {"lesion_id", b.lesion_id}, {"box", box_to_json(b.box)}});
  write_jsonl(path, make_header("sidecar"), records);
}

inline Sidecar load_sidecar(const std::filesystem::path& path) {
  const JsonlContent content = read_jsonl(path, "sidecar");
  Sidecar sidecar;
  for (const auto& [at, j] : content.records) {
    const std::string type = field::string(j, "type", at);
    if (type == "patient_truth")
      sidecar.patients.push_back({field::string(j, "patient_id", at), field::boolean(j, "occult_metastasis", at)});
    else if (type == "lesion_truth")
      sidecar.lesions.push_back(
          {field::string(j, "lesion_id", at), field::boolean(j, "malignant", at), field::number(j, "latent", at)});
    else if (type == "box")
      sidecar.boxes.push_back(
          {field::string(j, "image_id", at), field::string(j, "lesion_id", at), field::box(j, "box", at)});
    else
      fail_at(at, "unknown record type '" + type + "'");
  }
  return sidecar;
}

// Perfect detector built from sidecar ground truth: every true box at
// confidence 1.0.
inline PredictionSet perfect_detections(const Sidecar& sidecar) {
  PredictionSet set;
  for (const auto& b : sidecar.boxes) set.detections.push_back({b.image_id, b.box, 1.0});
  return set;
}

}  // namespace stagelab
