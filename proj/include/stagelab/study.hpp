#pragma once

// Reader-study administration: configured items, sessions with balanced
// assignments, forward-only response capture, an append-only journal that is
// replayed at startup, and export as a survey response file.

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stagelab/core.hpp"
#include "stagelab/error.hpp"
#include "stagelab/jsonl.hpp"
#include "stagelab/splitters.hpp"
#include "stagelab/survey.hpp"

namespace stagelab {

// A lesion as shown to respondents. Holds no pathology.
struct StudyItem {
  std::string lesion_id;
  std::string image_url;  // served under /images/
  int width = 0, height = 0;
  BoundingBox box;
  double model_probability = 0.0;
};

inline Json study_item_to_json(const StudyItem& i) {
  return Json{{"type", "item"},          {"lesion_id", i.lesion_id}, {"image_url", i.image_url},
              {"width", i.width},        {"height", i.height},       {"box", box_to_json(i.box)},
              {"model_probability", i.model_probability}};
}

inline void write_study_items(const std::vector<StudyItem>& items, std::uint64_t seed, const std::filesystem::path& path) {
  std::vector<Json> records;
  for (const auto& i : items) records.push_back(study_item_to_json(i));
  Json header = make_header("study");
  header["seed"] = seed;
  write_jsonl(path, header, records);
}

inline std::pair<std::vector<StudyItem>, std::uint64_t> load_study_items(const std::filesystem::path& path) {
  const JsonlContent content = read_jsonl(path, "study");
  if (content.header.is_null()) throw DataError(path.string() + ": empty study file");
  std::vector<StudyItem> items;
  for (const auto& [at, j] : content.records) {
    StudyItem i;
    i.lesion_id = field::string(j, "lesion_id", at);
    i.image_url = field::string(j, "image_url", at);
    i.width = static_cast<int>(field::integer(j, "width", at));
    i.height = static_cast<int>(field::integer(j, "height", at));
    i.box = field::box(j, "box", at);
    i.model_probability = field::probability(j, "model_probability", at);
    items.push_back(std::move(i));
  }
  return {std::move(items), content.header.value("seed", std::uint64_t{0})};
}

// Study items for every classification-eligible lesion that has a model
// probability, using the lesion's detection image and box.
inline std::vector<StudyItem> make_study_items(const DatasetBundle& bundle,
                                               const std::map<std::string, double>& lesion_probabilities) {
  std::vector<StudyItem> items;
  for (const LesionRecord* l : bundle.eligible_lesions()) {
    auto p = lesion_probabilities.find(l->lesion_id);
    if (p == lesion_probabilities.end()) continue;
    const ImageRef* img = bundle.find_image(l->detection.image_id);
    if (!img) throw DataError("lesion '" + l->lesion_id + "' references unknown image");
    items.push_back({l->lesion_id, "/images/" + std::filesystem::path(img->file_path).filename().string(), img->width,
                     img->height, l->detection.box, p->second});
  }
  return items;
}

// Errors carry the HTTP status they map to.
class StudyError : public DataError {
 public:
  StudyError(int status, const std::string& msg) : DataError(msg), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

inline std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string probability_label(double p) {
  return "Model probability: " + std::to_string(static_cast<int>(std::lround(100.0 * p))) + "%";
}

class Study {
 public:
  using Clock = std::function<std::string()>;
  static constexpr std::size_t kItemsPerSession = 2 * kItemsPerArm;

  // Replays `journal` if it exists; otherwise starts it.
  Study(std::vector<StudyItem> items, std::uint64_t seed, std::filesystem::path journal, Clock clock = utc_now)
      : seed_(seed), journal_(std::move(journal)), clock_(std::move(clock)) {
    for (auto& i : items) {
      const std::string id = i.lesion_id;
      if (!items_.emplace(id, std::move(i)).second) throw DataError("duplicate study lesion '" + id + "'");
      lesion_order_.push_back(id);
    }
    if (lesion_order_.size() >= kItemsPerSession) balancer_.emplace(lesion_order_, seed_);
    if (std::filesystem::exists(journal_) && std::filesystem::file_size(journal_) > 0)
      replay();
    else
      append(header());
  }

  bool configured() const noexcept { return balancer_.has_value(); }

  Json create_session(const Json& demographics) {
    std::lock_guard lock(mutex_);
    if (!balancer_) throw StudyError(409, "study is not configured: at least 20 lesions with model probabilities are required");
    Demographics d;
    try {
      d = demographics_from_json(demographics);
    } catch (const DataError& e) {
      throw StudyError(400, e.what());
    }
    SurveySession s;
    s.session_id = session_id_for(sessions_.size());
    s.demographics = d;
    s.created = clock_();
    s.assignment = balancer_->next(s.session_id);
    append(session_to_json(s));
    add_session(std::move(s));
    return session_view(sessions_.back());
  }

  Json next_item(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    const Entry& e = find(session_id);
    const std::size_t cursor = e.responses.size();
    Json v{{"schema_version", kSchemaVersion}, {"session_id", session_id}, {"items_total", kItemsPerSession},
           {"item_index", cursor}, {"completed", cursor == kItemsPerSession}};
    if (cursor == kItemsPerSession) return v;
    const SurveyItem& item = e.session.assignment.items[cursor];
    const StudyItem& si = items_.at(item.lesion_id);
    v["lesion_id"] = si.lesion_id;
    v["arm"] = to_string(item.arm);
    v["image"] = {{"url", si.image_url}, {"width", si.width}, {"height", si.height}};
    if (item.arm == Arm::unlabeled) {
      // Arrow from the upper left pointing at the box's upper-left quarter.
      const double tx = si.box.x_min() + si.box.width() / 4.0, ty = si.box.y_min() + si.box.height() / 4.0;
      const double len = std::max(12.0, std::max(si.box.width(), si.box.height()) * 0.75);
      v["overlay"] = {{"type", "arrow"},
                      {"tip", {tx, ty}},
                      {"tail", {std::max(0.0, tx - len), std::max(0.0, ty - len)}}};
    } else {
      v["overlay"] = {{"type", "box"}, {"box", box_to_json(si.box)}};
      v["label"] = probability_label(si.model_probability);
    }
    return v;
  }

  // Accepts the response for the current item. Resubmitting an accepted
  // response returns its original acknowledgement; any other revision or
  // skipped item is rejected.
  Json submit(const std::string& session_id, const Json& body) {
    std::lock_guard lock(mutex_);
    Entry& e = find(session_id);
    if (!body.is_object()) throw StudyError(400, "response body must be a JSON object");
    const Locator at{"response", 0};
    std::size_t index;
    SurveyResponse r;
    try {
      const auto idx = field::integer(body, "item_index", at);
      if (idx < 0) throw StudyError(400, "item_index must be >= 0");
      index = static_cast<std::size_t>(idx);
      r.lesion_id = field::string(body, "lesion_id", at);
      r.probability = field::number(body, "probability", at);
      r.biopsy = field::boolean(body, "biopsy", at);
    } catch (const StudyError&) {
      throw;
    } catch (const DataError& ex) {
      throw StudyError(400, ex.what());
    }
    if (!(r.probability >= 0.0 && r.probability <= 100.0)) throw StudyError(400, "probability must lie in [0, 100]");

    const std::size_t cursor = e.responses.size();
    if (index < cursor) {
      const SurveyResponse& prior = e.responses[index];
      if (prior.lesion_id == r.lesion_id && prior.probability == r.probability && prior.biopsy == r.biopsy)
        return ack(prior);
      throw StudyError(409, "item " + std::to_string(index) + " was already answered; revisions are not allowed");
    }
    if (index >= kItemsPerSession) throw StudyError(409, "session has only " + std::to_string(kItemsPerSession) + " items");
    if (index > cursor)
      throw StudyError(409, "out-of-order response: expected item " + std::to_string(cursor) + ", got " +
                                std::to_string(index));
    const SurveyItem& item = e.session.assignment.items[index];
    if (item.lesion_id != r.lesion_id)
      throw StudyError(409, "item " + std::to_string(index) + " is lesion '" + item.lesion_id + "', not '" +
                                r.lesion_id + "'");
    r.session_id = session_id;
    r.item_index = index;
    r.arm = item.arm;
    if (item.arm == Arm::labeled) r.model_probability = items_.at(item.lesion_id).model_probability;
    r.timestamp = clock_();
    append(response_to_json(r));
    e.responses.push_back(std::move(r));
    if (e.responses.size() == kItemsPerSession) e.session.completed = true;
    return ack(e.responses.back());
  }

  SurveySet export_set() const {
    std::lock_guard lock(mutex_);
    SurveySet set;
    for (const auto& e : sessions_) {
      set.sessions.push_back(e.session);
      set.responses.insert(set.responses.end(), e.responses.begin(), e.responses.end());
    }
    return set;
  }

  std::string export_text() const { return survey_set_text(export_set()); }

  Json health() const {
    std::lock_guard lock(mutex_);
    std::size_t completed = 0;
    for (const auto& e : sessions_) completed += e.session.completed ? 1 : 0;
    return Json{{"status", "ok"},
                {"configured", balancer_.has_value()},
                {"lesions", lesion_order_.size()},
                {"sessions", sessions_.size()},
                {"completed_sessions", completed}};
  }

  ExposureCounts exposure() const {
    std::lock_guard lock(mutex_);
    std::vector<SurveyAssignment> a;
    for (const auto& e : sessions_) a.push_back(e.session.assignment);
    return exposure_counts(lesion_order_, a);
  }

 private:
  struct Entry {
    SurveySession session;
    std::vector<SurveyResponse> responses;
  };

  static std::string session_id_for(std::size_t n) {
    std::string digits = std::to_string(n + 1);
    if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
    return "S" + digits;
  }

  Json header() const {
    Json h = make_header("study_journal");
    h["seed"] = seed_;
    h["lesions"] = lesion_order_;
    return h;
  }

  Entry& find(const std::string& id) {
    auto it = index_.find(id);
    if (it == index_.end()) throw StudyError(404, "unknown session '" + id + "'");
    return sessions_[it->second];
  }
  const Entry& find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw StudyError(404, "unknown session '" + id + "'");
    return sessions_[it->second];
  }

  void add_session(SurveySession s) {
    index_[s.session_id] = sessions_.size();
    sessions_.push_back(Entry{std::move(s), {}});
  }

  Json session_view(const Entry& e) const {
    return Json{{"schema_version", kSchemaVersion},
                {"session_id", e.session.session_id},
                {"items_total", kItemsPerSession},
                {"item_index", e.responses.size()},
                {"completed", e.session.completed}};
  }

  static Json ack(const SurveyResponse& r) {
    return Json{{"schema_version", kSchemaVersion},
                {"session_id", r.session_id},
                {"item_index", r.item_index},
                {"accepted", true},
                {"timestamp", r.timestamp},
                {"next_item_index", r.item_index + 1},
                {"completed", r.item_index + 1 == kItemsPerSession}};
  }

  void append(const Json& record) {
    std::FILE* f = std::fopen(journal_.c_str(), "ab");
    if (!f) throw IoError("cannot open journal '" + journal_.string() + "'");
    const std::string line = record.dump() + "\n";
    const bool ok = std::fwrite(line.data(), 1, line.size(), f) == line.size() && std::fflush(f) == 0 &&
                    ::fsync(fileno(f)) == 0;
    std::fclose(f);
    if (!ok) throw IoError("cannot append to journal '" + journal_.string() + "'");
  }

  void replay() {
    const std::string text = read_text(journal_);
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    std::size_t consumed = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const bool complete = consumed + line.size() < text.size();  // newline-terminated
      consumed += line.size() + 1;
      if (line.empty()) continue;
      const Locator at{journal_.filename().string(), line_no};
      Json j;
      try {
        j = Json::parse(line);
      } catch (const Json::parse_error&) {
        if (!complete) {
          truncate_to(consumed - line.size() - 1);  // torn final append
          break;
        }
        fail_at(at, "corrupt journal record");
      }
      if (!have_header) {
        if (j.value("kind", "") != "study_journal") fail_at(at, "not a study journal");
        if (j.value("seed", std::uint64_t{0}) != seed_ || j.value("lesions", std::vector<std::string>{}) != lesion_order_)
          fail_at(at, "journal was written for a different study configuration");
        have_header = true;
        continue;
      }
      const std::string type = field::string(j, "type", at);
      if (type == "session") {
        SurveySession s = session_from_json(j, at);
        if (s.session_id != session_id_for(sessions_.size())) fail_at(at, "unexpected session id '" + s.session_id + "'");
        if (!balancer_) fail_at(at, "session recorded for an unconfigured study");
        if (balancer_->next(s.session_id) != s.assignment) fail_at(at, "journal assignment does not match the balancer");
        s.completed = false;
        add_session(std::move(s));
      } else if (type == "response") {
        SurveyResponse r = response_from_json(j, at);
        Entry& e = find(r.session_id);
        if (r.item_index != e.responses.size()) fail_at(at, "journal response out of order");
        e.responses.push_back(std::move(r));
        if (e.responses.size() == kItemsPerSession) e.session.completed = true;
      } else {
        fail_at(at, "unknown journal record type '" + type + "'");
      }
    }
    if (!have_header) fail_at({journal_.filename().string(), 1}, "journal has no header");
  }

  void truncate_to(std::size_t size) { std::filesystem::resize_file(journal_, size); }

  std::map<std::string, StudyItem> items_;
  std::vector<std::string> lesion_order_;
  std::uint64_t seed_;
  std::filesystem::path journal_;
  Clock clock_;
  std::optional<SurveyBalancer> balancer_;
  std::vector<Entry> sessions_;
  std::map<std::string, std::size_t> index_;
  mutable std::mutex mutex_;
};

}  // namespace stagelab
