#pragma once

// Shared domain types and bundle validation.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "stagelab/error.hpp"
#include "stagelab/image.hpp"

namespace stagelab {

// Number of video-frame patches captured per biopsied lesion.
inline constexpr std::size_t kExpectedPatchesPerLesion = 10;
inline constexpr int kMinimumAdultAge = 18;

enum class CancerSite { stomach, pancreas, biliary, small_intestine, other };
enum class LesionSite { parietal, liver_surface, other_visceral };
enum class Pathology { benign, metastasis, indeterminate, none };

namespace detail {

template <typename Enum, std::size_t N>
struct EnumNames {
  std::array<std::pair<Enum, std::string_view>, N> entries;

  constexpr std::string_view name(Enum e) const {
    for (const auto& [value, text] : entries)
      if (value == e) return text;
    return "?";
  }
  std::optional<Enum> parse(std::string_view text) const {
    for (const auto& [value, name] : entries)
      if (name == text) return value;
    return std::nullopt;
  }
};

inline constexpr EnumNames<CancerSite, 5> kCancerSiteNames{{{
    {CancerSite::stomach, "stomach"},
    {CancerSite::pancreas, "pancreas"},
    {CancerSite::biliary, "biliary"},
    {CancerSite::small_intestine, "small_intestine"},
    {CancerSite::other, "other"},
}}};

inline constexpr EnumNames<LesionSite, 3> kLesionSiteNames{{{
    {LesionSite::parietal, "parietal"},
    {LesionSite::liver_surface, "liver_surface"},
    {LesionSite::other_visceral, "other_visceral"},
}}};

inline constexpr EnumNames<Pathology, 4> kPathologyNames{{{
    {Pathology::benign, "benign"},
    {Pathology::metastasis, "metastasis"},
    {Pathology::indeterminate, "indeterminate"},
    {Pathology::none, "none"},
}}};

}  // namespace detail

constexpr std::string_view to_string(CancerSite v) { return detail::kCancerSiteNames.name(v); }
constexpr std::string_view to_string(LesionSite v) { return detail::kLesionSiteNames.name(v); }
constexpr std::string_view to_string(Pathology v) { return detail::kPathologyNames.name(v); }

inline std::optional<CancerSite> parse_cancer_site(std::string_view s) {
  return detail::kCancerSiteNames.parse(s);
}
inline std::optional<LesionSite> parse_lesion_site(std::string_view s) {
  return detail::kLesionSiteNames.parse(s);
}
inline std::optional<Pathology> parse_pathology(std::string_view s) {
  return detail::kPathologyNames.parse(s);
}

// Axis-aligned pixel box, half-open: [x_min, x_max) x [y_min, y_max).
// Degenerate or negative boxes cannot be constructed.
class BoundingBox {
 public:
  BoundingBox() : BoundingBox(0.0, 0.0, 1.0, 1.0) {}
  BoundingBox(double x_min, double y_min, double x_max, double y_max)
      : x_min_(x_min), y_min_(y_min), x_max_(x_max), y_max_(y_max) {
    if (!(x_min >= 0.0 && y_min >= 0.0))
      throw DataError("bounding box has negative coordinates");
    if (!(x_max > x_min && y_max > y_min))
      throw DataError("bounding box is degenerate (max must exceed min)");
  }

  double x_min() const noexcept { return x_min_; }
  double y_min() const noexcept { return y_min_; }
  double x_max() const noexcept { return x_max_; }
  double y_max() const noexcept { return y_max_; }
  double width() const noexcept { return x_max_ - x_min_; }
  double height() const noexcept { return y_max_ - y_min_; }
  double area() const noexcept { return width() * height(); }

  bool fits_within(int image_width, int image_height) const noexcept {
    return x_max_ <= image_width && y_max_ <= image_height;
  }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;

 private:
  double x_min_, y_min_, x_max_, y_max_;
};

struct Patient {
  std::string patient_id;
  CancerSite cancer_site = CancerSite::other;
  std::optional<int> age_years;

  friend bool operator==(const Patient&, const Patient&) = default;
};

struct ImageRef {
  std::string image_id;
  std::string file_path;  // relative to the bundle directory unless absolute
  int width = 0;
  int height = 0;

  friend bool operator==(const ImageRef&, const ImageRef&) = default;
};

// A lesion's location on one image.
struct ImageRegion {
  std::string image_id;
  BoundingBox box;

  friend bool operator==(const ImageRegion&, const ImageRegion&) = default;
};

struct LesionRecord {
  std::string lesion_id;
  std::string patient_id;
  LesionSite site = LesionSite::other_visceral;
  bool biopsied = false;
  Pathology pathology = Pathology::none;
  ImageRegion detection;
  std::vector<ImageRegion> patches;

  // Biopsied with a definitive benign / metastasis result.
  bool classification_eligible() const noexcept {
    return biopsied && (pathology == Pathology::benign || pathology == Pathology::metastasis);
  }
  bool is_metastasis() const noexcept { return pathology == Pathology::metastasis; }

  friend bool operator==(const LesionRecord&, const LesionRecord&) = default;
};

struct Provenance {
  std::string source;
  std::string created;  // free-form timestamp; empty for synthetic bundles
  std::optional<std::uint64_t> seed;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct DatasetBundle {
  std::vector<Patient> patients;
  std::vector<LesionRecord> lesions;
  std::vector<ImageRef> images;
  Provenance provenance;

  const Patient* find_patient(std::string_view id) const {
    auto it = std::find_if(patients.begin(), patients.end(),
                           [&](const Patient& p) { return p.patient_id == id; });
    return it == patients.end() ? nullptr : &*it;
  }
  const LesionRecord* find_lesion(std::string_view id) const {
    auto it = std::find_if(lesions.begin(), lesions.end(),
                           [&](const LesionRecord& l) { return l.lesion_id == id; });
    return it == lesions.end() ? nullptr : &*it;
  }
  const ImageRef* find_image(std::string_view id) const {
    auto it = std::find_if(images.begin(), images.end(),
                           [&](const ImageRef& i) { return i.image_id == id; });
    return it == images.end() ? nullptr : &*it;
  }

  std::vector<const LesionRecord*> eligible_lesions() const {
    std::vector<const LesionRecord*> out;
    for (const auto& l : lesions)
      if (l.classification_eligible()) out.push_back(&l);
    return out;
  }

  std::vector<std::string> patient_ids() const {
    std::vector<std::string> ids;
    ids.reserve(patients.size());
    for (const auto& p : patients) ids.push_back(p.patient_id);
    return ids;
  }

  friend bool operator==(const DatasetBundle&, const DatasetBundle&) = default;
};

// ---------------------------------------------------------------------------
// Validation

enum class Severity { warning, error };

struct Finding {
  Severity severity = Severity::error;
  std::string record_id;
  std::string message;

  friend bool operator==(const Finding&, const Finding&) = default;
};

struct ValidationReport {
  std::vector<Finding> findings;

  bool empty() const noexcept { return findings.empty(); }
  std::size_t error_count() const {
    return static_cast<std::size_t>(std::count_if(findings.begin(), findings.end(), [](const Finding& f) {
      return f.severity == Severity::error;
    }));
  }
  std::size_t warning_count() const { return findings.size() - error_count(); }
  bool valid() const { return error_count() == 0; }

  friend bool operator==(const ValidationReport&, const ValidationReport&) = default;
};

struct ValidationOptions {
  // When set, every image file is opened relative to this directory and must
  // decode as an 8-bit RGB PNG of the declared size.
  std::optional<std::filesystem::path> image_root;
};

inline ValidationReport validate_bundle(const DatasetBundle& bundle, const ValidationOptions& options = {}) {
  ValidationReport report;
  auto error = [&](const std::string& id, std::string msg) {
    report.findings.push_back({Severity::error, id, std::move(msg)});
  };
  auto warn = [&](const std::string& id, std::string msg) {
    report.findings.push_back({Severity::warning, id, std::move(msg)});
  };

  std::unordered_set<std::string> patient_ids;
  for (const auto& p : bundle.patients) {
    if (p.patient_id.empty()) error(p.patient_id, "patient has empty id");
    if (!patient_ids.insert(p.patient_id).second) error(p.patient_id, "duplicate patient_id");
    if (p.age_years && *p.age_years < kMinimumAdultAge)
      error(p.patient_id, "age " + std::to_string(*p.age_years) + " is below 18");
  }

  std::unordered_map<std::string, const ImageRef*> images;
  for (const auto& img : bundle.images) {
    if (!images.emplace(img.image_id, &img).second) error(img.image_id, "duplicate image_id");
    if (img.width <= 0 || img.height <= 0) error(img.image_id, "image dimensions must be positive");
    if (options.image_root) {
      std::filesystem::path path(img.file_path);
      if (path.is_relative()) path = *options.image_root / path;
      if (auto msg = check_png_file(path, img.width, img.height); !msg.empty())
        error(img.image_id, msg);
    }
  }

  auto check_region = [&](const std::string& lesion_id, const ImageRegion& region, std::string_view what) {
    auto it = images.find(region.image_id);
    if (it == images.end()) {
      error(lesion_id, std::string(what) + " references unknown image '" + region.image_id + "'");
      return;
    }
    const ImageRef& img = *it->second;
    if (img.width > 0 && img.height > 0 && !region.box.fits_within(img.width, img.height))
      error(lesion_id, std::string(what) + " box exceeds bounds of image '" + region.image_id + "'");
  };

  std::unordered_set<std::string> lesion_ids;
  for (const auto& l : bundle.lesions) {
    if (l.lesion_id.empty()) error(l.lesion_id, "lesion has empty id");
    if (!lesion_ids.insert(l.lesion_id).second) error(l.lesion_id, "duplicate lesion_id");
    if (!patient_ids.contains(l.patient_id))
      error(l.lesion_id, "lesion references missing patient '" + l.patient_id + "'");
    if (!l.biopsied && l.pathology != Pathology::none)
      error(l.lesion_id, "non-biopsied lesion carries a pathology result");
    if (l.biopsied && l.pathology == Pathology::none)
      error(l.lesion_id, "biopsied lesion has no pathology result");
    if (l.biopsied && l.pathology == Pathology::indeterminate)
      warn(l.lesion_id, "indeterminate pathology; excluded from classification analyses");
    check_region(l.lesion_id, l.detection, "detection image");
    for (const auto& patch : l.patches) check_region(l.lesion_id, patch, "patch");
    if (l.biopsied && l.patches.size() != kExpectedPatchesPerLesion)
      warn(l.lesion_id, "biopsied lesion has " + std::to_string(l.patches.size()) + " patches, expected " +
                            std::to_string(kExpectedPatchesPerLesion));
  }
  return report;
}

}  // namespace stagelab
