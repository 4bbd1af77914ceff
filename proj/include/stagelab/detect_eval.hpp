#pragma once

// Detection scoring: IoU, one-to-one matching, the four-way confusion rule,
// precision-recall curves and AUC-PR.

#include <algorithm>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "stagelab/core.hpp"
#include "stagelab/ingest.hpp"

namespace stagelab {

inline double iou(const BoundingBox& a, const BoundingBox& b) noexcept {
  const double iw = std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min());
  const double ih = std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

// Whether IoU == threshold counts as a hit.
enum class HitRule { at_least, greater_than };

struct MatchOptions {
  double iou_threshold = 0.5;
  HitRule rule = HitRule::at_least;

  bool is_hit(double v) const noexcept { return rule == HitRule::at_least ? v >= iou_threshold : v > iou_threshold; }
};

struct PredictionMatch {
  std::optional<std::size_t> ground_truth;  // index of the matched box
  double iou = 0.0;  // with the matched box, else with the nearest box
  double confidence = 0.0;
};

struct MatchResult {
  std::vector<PredictionMatch> predictions;                // input order
  std::vector<std::optional<std::size_t>> ground_truth;   // matched prediction per box
};

// Greedy one-to-one matching: predictions in descending confidence (stable on
// input order) each claim the unclaimed box of highest IoU that counts as a
// hit; IoU ties go to the lower box index.
inline MatchResult match_predictions(const std::vector<BoundingBox>& predicted, const std::vector<double>& confidence,
                                     const std::vector<BoundingBox>& truth, const MatchOptions& options = {}) {
  if (predicted.size() != confidence.size()) throw DataError("one confidence per predicted box is required");
  MatchResult result;
  result.predictions.resize(predicted.size());
  result.ground_truth.assign(truth.size(), std::nullopt);

  std::vector<std::size_t> order(predicted.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return confidence[a] > confidence[b]; });

  for (std::size_t p : order) {
    PredictionMatch& m = result.predictions[p];
    m.confidence = confidence[p];
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < truth.size(); ++g) {
      const double v = iou(predicted[p], truth[g]);
      m.iou = std::max(m.iou, v);
      if (result.ground_truth[g] || !options.is_hit(v)) continue;
      if (v > best_iou) {
        best_iou = v;
        best = g;
      }
    }
    if (best) {
      m.ground_truth = best;
      m.iou = best_iou;
      result.ground_truth[*best] = p;
    }
  }
  return result;
}

// Counts over predictions at one confidence threshold. A prediction is
// "above threshold" when its confidence is >= the threshold.
//   hit & above -> tp, miss & above -> fp, miss & below -> tn, hit & below -> fn
struct DetectionConfusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total_ground_truth = 0;
  std::size_t missed_ground_truth = 0;  // boxes not hit by any retained prediction

  std::optional<double> precision() const {
    return tp + fp == 0 ? std::nullopt : std::optional<double>(static_cast<double>(tp) / static_cast<double>(tp + fp));
  }
  std::optional<double> recall() const {
    return total_ground_truth == 0
               ? std::nullopt
               : std::optional<double>(static_cast<double>(tp) / static_cast<double>(total_ground_truth));
  }
};

inline DetectionConfusion detection_confusion(const MatchResult& match, double confidence_threshold) {
  DetectionConfusion c;
  c.total_ground_truth = match.ground_truth.size();
  for (const auto& p : match.predictions) {
    const bool hit = p.ground_truth.has_value();
    const bool above = p.confidence >= confidence_threshold;
    if (hit && above) ++c.tp;
    else if (!hit && above) ++c.fp;
    else if (!hit) ++c.tn;
    else ++c.fn;
  }
  c.missed_ground_truth = c.total_ground_truth - c.tp;
  return c;
}

// ---------------------------------------------------------------------------
// PR curves

struct PROperatingPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

enum class PRIntegration { step, trapezoid };

struct PRCurve {
  std::vector<PROperatingPoint> points;  // thresholds strictly decreasing
  std::size_t total_ground_truth = 0;
  double auc_pr = 0.0;
};

// A scored prediction after matching: whether it hit a box.
struct ScoredHit {
  double confidence = 0.0;
  bool hit = false;
};

inline double integrate_pr(const std::vector<PROperatingPoint>& points, PRIntegration method) {
  double area = 0.0, prev_recall = 0.0;
  double prev_precision = points.empty() ? 0.0 : points.front().precision;
  for (const auto& pt : points) {
    const double dr = pt.recall - prev_recall;
    area += method == PRIntegration::step ? dr * pt.precision : dr * (pt.precision + prev_precision) / 2.0;
    prev_recall = pt.recall;
    prev_precision = pt.precision;
  }
  return area;
}

// One operating point per distinct confidence. Greedy matching in confidence
// order means the matches among predictions above any threshold equal those
// from re-matching only that subset, so a single matching serves every point.
inline PRCurve pr_curve_from_hits(std::vector<ScoredHit> hits, std::size_t total_ground_truth,
                                  PRIntegration method = PRIntegration::step) {
  if (total_ground_truth == 0) throw DataError("PR curve requires at least one ground-truth lesion");
  std::stable_sort(hits.begin(), hits.end(), [](const ScoredHit& a, const ScoredHit& b) { return a.confidence > b.confidence; });
  PRCurve curve;
  curve.total_ground_truth = total_ground_truth;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    tp += hits[i].hit ? 1 : 0;
    if (i + 1 < hits.size() && hits[i + 1].confidence == hits[i].confidence) continue;
    const double retained = static_cast<double>(i + 1);
    curve.points.push_back({hits[i].confidence, static_cast<double>(tp) / retained,
                            static_cast<double>(tp) / static_cast<double>(total_ground_truth)});
  }
  curve.auc_pr = integrate_pr(curve.points, method);
  return curve;
}

struct GroundTruthBox {
  std::string image_id;
  std::string lesion_id;
  BoundingBox box;
};

// Per-image matching results, the unit for image-level resampling.
struct ImageMatch {
  std::string image_id;
  std::vector<ScoredHit> hits;
  std::size_t ground_truth_count = 0;
};

inline std::vector<ImageMatch> match_by_image(const std::vector<DetectionPrediction>& predictions,
                                              const std::vector<GroundTruthBox>& truth,
                                              const MatchOptions& options = {}) {
  std::map<std::string, std::pair<std::vector<const DetectionPrediction*>, std::vector<BoundingBox>>> by_image;
  for (const auto& p : predictions) by_image[p.image_id].first.push_back(&p);
  for (const auto& g : truth) by_image[g.image_id].second.push_back(g.box);
  std::vector<ImageMatch> out;
  for (const auto& [image_id, entry] : by_image) {
    std::vector<BoundingBox> boxes;
    std::vector<double> conf;
    for (const auto* p : entry.first) {
      boxes.push_back(p->box);
      conf.push_back(p->confidence);
    }
    const MatchResult m = match_predictions(boxes, conf, entry.second, options);
    ImageMatch im{image_id, {}, entry.second.size()};
    for (const auto& pm : m.predictions) im.hits.push_back({pm.confidence, pm.ground_truth.has_value()});
    out.push_back(std::move(im));
  }
  return out;
}

inline PRCurve pr_curve(const std::vector<ImageMatch>& images, PRIntegration method = PRIntegration::step) {
  std::vector<ScoredHit> hits;
  std::size_t total = 0;
  for (const auto& im : images) {
    hits.insert(hits.end(), im.hits.begin(), im.hits.end());
    total += im.ground_truth_count;
  }
  return pr_curve_from_hits(std::move(hits), total, method);
}

inline PRCurve pr_curve(const std::vector<DetectionPrediction>& predictions, const std::vector<GroundTruthBox>& truth,
                        const MatchOptions& options = {}, PRIntegration method = PRIntegration::step) {
  return pr_curve(match_by_image(predictions, truth, options), method);
}

// Precision / recall when keeping predictions with confidence >= threshold.
// Precision is absent when nothing is retained.
struct OperatingPoint {
  std::optional<double> precision;
  double recall = 0.0;
};

inline OperatingPoint operating_point(const PRCurve& curve, double threshold) {
  // The retained set for `threshold` equals the one for the smallest curve
  // threshold that is still >= it.
  const PROperatingPoint* chosen = nullptr;
  for (const auto& pt : curve.points)
    if (pt.threshold >= threshold) chosen = &pt;
  if (!chosen) return {};
  return {chosen->precision, chosen->recall};
}

inline std::vector<GroundTruthBox> ground_truth_boxes(const DatasetBundle& bundle) {
  std::vector<GroundTruthBox> out;
  out.reserve(bundle.lesions.size());
  for (const auto& l : bundle.lesions) out.push_back({l.detection.image_id, l.lesion_id, l.detection.box});
  return out;
}

}  // namespace stagelab
