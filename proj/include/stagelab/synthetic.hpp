#pragma once

// Synthetic cohort generator: patients, lesions, procedurally drawn PNG
// frames, simulated model scores with a target separability, follow-up
// outcomes and a ground-truth sidecar. Everything is a pure function of the
// configuration (including its seed).

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stagelab/core.hpp"
#include "stagelab/image.hpp"
#include "stagelab/ingest.hpp"
#include "stagelab/rng.hpp"

namespace stagelab {

struct SyntheticConfig {
  int n_patients = 132;
  double lesions_per_patient_mean = 32.5;
  double lesions_per_patient_sd = 35.0;
  double biopsied_per_patient_mean = 2.8;
  double biopsied_per_patient_sd = 1.6;
  double prevalence = 0.33;              // malignancy among biopsied lesions
  double nonbiopsied_prevalence = 0.02;  // occult metastases among unbiopsied lesions
  // Unbiopsied benign lesions look this much more benign (latent units) than
  // biopsied ones, which were selected for being suspicious.
  double nonbiopsied_benign_shift = 1.8;
  double indeterminate_rate = 0.0;
  // Target AUC of generated patch scores: 0.5 = none, 1.0 = perfect separation.
  double separability = 0.78;
  int lesions_per_image = 4;
  int image_width = 128;
  int image_height = 96;
  int frame_width = 64;
  int frame_height = 48;
  double annual_recurrence_rate = 0.15;
  double occult_hazard_ratio = 3.0;
  double min_followup_days = 365.0;
  double max_followup_days = 4.0 * 365.0;
  std::string scorer_id = "synthetic";
  std::optional<std::uint64_t> seed;
};

inline void validate_config(const SyntheticConfig& cfg) {
  if (!cfg.seed) throw UsageError("synthetic config requires a seed");
  if (cfg.n_patients < 1) throw UsageError("n_patients must be >= 1");
  if (!(cfg.prevalence > 0.0 && cfg.prevalence < 1.0))
    throw UsageError("prevalence must lie strictly between 0 and 1 (both classes are generated)");
  if (!(cfg.nonbiopsied_prevalence >= 0.0 && cfg.nonbiopsied_prevalence < 1.0))
    throw UsageError("nonbiopsied_prevalence must lie in [0, 1)");
  if (!(cfg.nonbiopsied_benign_shift >= 0.0)) throw UsageError("nonbiopsied_benign_shift must be >= 0");
  if (!(cfg.indeterminate_rate >= 0.0 && cfg.indeterminate_rate < 1.0))
    throw UsageError("indeterminate_rate must lie in [0, 1)");
  if (!(cfg.separability >= 0.5 && cfg.separability <= 1.0))
    throw UsageError("separability must lie in [0.5, 1]");
  if (cfg.lesions_per_patient_mean < 1.0 || cfg.lesions_per_patient_sd < 0.0)
    throw UsageError("lesions_per_patient distribution is infeasible");
  if (cfg.biopsied_per_patient_mean <= 0.0 || cfg.biopsied_per_patient_sd < 0.0)
    throw UsageError("biopsied_per_patient distribution is infeasible");
  if (cfg.lesions_per_image < 1) throw UsageError("lesions_per_image must be >= 1");
  if (cfg.image_width < 48 || cfg.image_height < 48 || cfg.frame_width < 32 || cfg.frame_height < 32)
    throw UsageError("synthetic image sizes are too small");
  if (cfg.annual_recurrence_rate <= 0.0 || cfg.occult_hazard_ratio <= 0.0)
    throw UsageError("hazard parameters must be positive");
  if (!(cfg.min_followup_days > 0.0 && cfg.max_followup_days >= cfg.min_followup_days))
    throw UsageError("follow-up window is infeasible");
}

struct SyntheticImage {
  std::string file_path;  // relative to the output directory
  RgbImage pixels;
};

struct SyntheticCohort {
  DatasetBundle bundle;
  PredictionSet predictions;
  OutcomeSet outcomes;
  Sidecar sidecar;
  std::vector<SyntheticImage> images;  // same order as bundle.images
};

namespace detail {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Patch latent: larger means more metastasis-like. For separability s < 1 the
// two classes are unit-variance normals whose means differ by
// sqrt(2) * Phi^-1(s), giving AUC s. At s = 1 the classes are disjoint.
inline double draw_latent(bool malignant, double separability, Rng& rng) {
  if (separability >= 1.0) {
    const double e = 0.5 + std::fabs(rng.normal());
    return malignant ? e : -e;
  }
  const double shift = std::sqrt(2.0) * boost::math::quantile(boost::math::normal(), separability);
  return (malignant ? shift / 2.0 : -shift / 2.0) + rng.normal();
}

inline Rgb jitter(Rgb base, int amplitude, Rng& rng) {
  auto j = [&](std::uint8_t c) {
    const int v = static_cast<int>(c) + static_cast<int>(rng.below(2 * amplitude + 1)) - amplitude;
    return static_cast<std::uint8_t>(std::clamp(v, 0, 255));
  };
  return {j(base.r), j(base.g), j(base.b)};
}

inline Rgb lesion_colour(double latent) {
  const double t = std::tanh(latent / 2.0);
  return {clamp_byte(200.0 + 40.0 * t), clamp_byte(150.0 - 45.0 * t), clamp_byte(130.0 - 20.0 * t)};
}

inline RgbImage flat_background(int w, int h, Rng& rng) {
  const Rgb base{static_cast<std::uint8_t>(165 + rng.below(16)), static_cast<std::uint8_t>(90 + rng.below(16)),
                 static_cast<std::uint8_t>(85 + rng.below(16))};
  RgbImage img(w, h, base);
  for (auto& p : img.pixels()) p = jitter(base, 4, rng);
  return img;
}

// Textured ellipse inscribed in `box`.
inline void draw_lesion(RgbImage& img, const BoundingBox& box, double latent, Rng& rng) {
  const Rgb colour = lesion_colour(latent);
  const double cx = (box.x_min() + box.x_max()) / 2.0, cy = (box.y_min() + box.y_max()) / 2.0;
  const double rx = box.width() / 2.0, ry = box.height() / 2.0;
  for (int y = static_cast<int>(box.y_min()); y < static_cast<int>(box.y_max()); ++y)
    for (int x = static_cast<int>(box.x_min()); x < static_cast<int>(box.x_max()); ++x) {
      const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
      if (dx * dx + dy * dy <= 1.0) img.at(x, y) = jitter(colour, 14, rng);
    }
}

inline bool overlaps(const BoundingBox& a, const BoundingBox& b, double margin) {
  return a.x_min() < b.x_max() + margin && b.x_min() < a.x_max() + margin && a.y_min() < b.y_max() + margin &&
         b.y_min() < a.y_max() + margin;
}

inline BoundingBox random_box(int img_w, int img_h, int min_side, int max_side, Rng& rng) {
  const int w = min_side + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_side - min_side + 1)));
  const int h = min_side + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_side - min_side + 1)));
  const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(img_w - w + 1)));
  const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(img_h - h + 1)));
  return BoundingBox(x, y, x + w, y + h);
}

inline std::string numbered(const char* prefix, long long n, int width) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%0*lld", prefix, width, n);
  return buf;
}

inline int draw_lesion_count(const SyntheticConfig& cfg, Rng& rng) {
  const double mean = cfg.lesions_per_patient_mean;
  const double var = cfg.lesions_per_patient_sd * cfg.lesions_per_patient_sd;
  if (var <= mean) return static_cast<int>(rng.poisson(mean));
  // Negative binomial as a gamma-Poisson mixture matching mean and variance.
  const double shape = mean * mean / (var - mean);
  return static_cast<int>(rng.poisson(rng.gamma(shape) * mean / shape));
}

}  // namespace detail

inline SyntheticCohort generate_synthetic_cohort(const SyntheticConfig& cfg) {
  validate_config(cfg);
  const std::uint64_t seed = *cfg.seed;
  SyntheticCohort out;
  out.bundle.provenance = {"synthetic", "", seed};

  constexpr CancerSite kSites[] = {CancerSite::stomach, CancerSite::pancreas, CancerSite::biliary,
                                   CancerSite::small_intestine, CancerSite::other};
  constexpr LesionSite kLesionSites[] = {LesionSite::parietal, LesionSite::liver_surface, LesionSite::other_visceral};

  long long lesion_counter = 0, image_counter = 0;
  auto add_image = [&](RgbImage pixels, const char* prefix) {
    const std::string id = detail::numbered(prefix, ++image_counter, 6);
    const std::string file = "images/" + id + ".png";
    out.bundle.images.push_back({id, file, pixels.width(), pixels.height()});
    out.images.push_back({file, std::move(pixels)});
    return id;
  };

  for (int pi = 0; pi < cfg.n_patients; ++pi) {
    Rng rng(derive_seed(seed, 1, static_cast<std::uint64_t>(pi)));
    Patient patient;
    patient.patient_id = detail::numbered("P", pi + 1, 4);
    patient.cancer_site = kSites[rng.below(5)];
    patient.age_years = 40 + static_cast<int>(rng.below(46));
    out.bundle.patients.push_back(patient);

    const int n_biopsied = std::max(
        1, static_cast<int>(std::lround(rng.normal(cfg.biopsied_per_patient_mean, cfg.biopsied_per_patient_sd))));
    const int n_lesions = std::max(n_biopsied, detail::draw_lesion_count(cfg, rng));

    // Lesion truth and patch latents.
    struct Pending {
      LesionRecord record;
      bool malignant;
      std::vector<double> latents;
    };
    std::vector<Pending> pending;
    bool occult = false;
    for (int li = 0; li < n_lesions; ++li) {
      Pending p{};
      p.record.lesion_id = detail::numbered("L", ++lesion_counter, 6);
      p.record.patient_id = patient.patient_id;
      p.record.site = kLesionSites[rng.below(3)];
      p.record.biopsied = li < n_biopsied;
      if (p.record.biopsied) {
        p.malignant = rng.bernoulli(cfg.prevalence);
        p.record.pathology = rng.bernoulli(cfg.indeterminate_rate)
                                 ? Pathology::indeterminate
                                 : (p.malignant ? Pathology::metastasis : Pathology::benign);
      } else {
        p.malignant = rng.bernoulli(cfg.nonbiopsied_prevalence);
        p.record.pathology = Pathology::none;
        occult = occult || p.malignant;
      }
      const std::size_t n_patches = p.record.biopsied ? kExpectedPatchesPerLesion : 1;
      const double shift = !p.record.biopsied && !p.malignant ? cfg.nonbiopsied_benign_shift : 0.0;
      for (std::size_t k = 0; k < n_patches; ++k)
        p.latents.push_back(detail::draw_latent(p.malignant, cfg.separability, rng) - shift);
      pending.push_back(std::move(p));
    }

    // Detection images: lesions packed without overlap, up to lesions_per_image each.
    std::size_t next = 0;
    while (next < pending.size()) {
      RgbImage img = detail::flat_background(cfg.image_width, cfg.image_height, rng);
      std::vector<std::pair<std::size_t, BoundingBox>> placed;
      while (next < pending.size() && placed.size() < static_cast<std::size_t>(cfg.lesions_per_image)) {
        std::optional<BoundingBox> spot;
        for (int attempt = 0; attempt < 200 && !spot; ++attempt) {
          BoundingBox candidate = detail::random_box(cfg.image_width, cfg.image_height, 14, 30, rng);
          if (std::none_of(placed.begin(), placed.end(),
                           [&](const auto& q) { return detail::overlaps(candidate, q.second, 2.0); }))
            spot = candidate;
        }
        if (!spot) break;
        detail::draw_lesion(img, *spot, pending[next].latents.front(), rng);
        placed.emplace_back(next++, *spot);
      }
      const std::string image_id = add_image(std::move(img), "D");
      for (const auto& [idx, box] : placed) {
        pending[idx].record.detection = {image_id, box};
        out.sidecar.boxes.push_back({image_id, pending[idx].record.lesion_id, box});
      }
    }

    for (auto& p : pending) {
      if (p.record.biopsied) {
        for (double latent : p.latents) {
          RgbImage frame = detail::flat_background(cfg.frame_width, cfg.frame_height, rng);
          const BoundingBox box = detail::random_box(cfg.frame_width, cfg.frame_height, 24, 40, rng);
          detail::draw_lesion(frame, box, latent, rng);
          p.record.patches.push_back({add_image(std::move(frame), "F"), box});
        }
      } else {
        p.record.patches.push_back(p.record.detection);
      }
      for (std::size_t k = 0; k < p.latents.size(); ++k)
        out.predictions.scores.push_back(
            {p.record.lesion_id, static_cast<int>(k), detail::normal_cdf(p.latents[k]), cfg.scorer_id});
      double mean_latent = 0.0;
      for (double v : p.latents) mean_latent += v;
      out.sidecar.lesions.push_back({p.record.lesion_id, p.malignant, mean_latent / p.latents.size()});
      out.bundle.lesions.push_back(std::move(p.record));
    }
    out.sidecar.patients.push_back({patient.patient_id, occult});

    // Follow-up: exponential recurrence with a hazard ratio for occult disease,
    // uniform administrative censoring.
    OutcomeRecord o;
    o.patient_id = patient.patient_id;
    o.followup_days = static_cast<int>(std::lround(rng.uniform(cfg.min_followup_days, cfg.max_followup_days)));
    const double rate = cfg.annual_recurrence_rate / 365.0 * (occult ? cfg.occult_hazard_ratio : 1.0);
    const int recurrence = std::max(1, static_cast<int>(std::ceil(rng.exponential(rate))));
    const bool peritoneal = rng.bernoulli(occult ? 0.8 : 0.3);
    if (recurrence <= o.followup_days) {
      o.recurrence_event = true;
      o.recurrence_day = recurrence;
      if (peritoneal) {
        o.peritoneal_carcinomatosis_event = true;
        o.peritoneal_carcinomatosis_day = recurrence;
      }
    }
    out.outcomes.push_back(o);
  }
  return out;
}

// Writes bundle.jsonl, predictions.jsonl, outcomes.jsonl, outcomes.csv,
// sidecar.jsonl and images/ under `dir`.
inline void write_cohort(const SyntheticCohort& cohort, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  for (const auto& img : cohort.images) write_png(img.pixels, dir / img.file_path);
  write_bundle(cohort.bundle, dir / "bundle.jsonl");
  write_predictions(cohort.predictions, dir / "predictions.jsonl");
  write_outcomes(cohort.outcomes, dir / "outcomes.jsonl");
  write_outcomes_csv(cohort.outcomes, dir / "outcomes.csv");
  write_sidecar(cohort.sidecar, dir / "sidecar.jsonl");
}

}  // namespace stagelab
