#pragma once

// ROC analysis for probability scores against binary labels.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "stagelab/error.hpp"

namespace stagelab {

struct ROCPoint {
  double threshold = 0.0;  // predicted positive when score >= threshold
  double tpr = 0.0;
  double fpr = 0.0;
};

struct ROCCurve {
  std::vector<ROCPoint> points;  // thresholds decreasing, starting at +inf
  double auc_roc = 0.0;
};

inline void check_scores(std::span<const double> scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
  for (double s : scores)
    if (!std::isfinite(s)) throw DataError("scores must be finite");
}

inline std::pair<std::size_t, std::size_t> class_counts(const std::vector<bool>& labels) {
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  return {pos, labels.size() - pos};
}

// Mann-Whitney form: P(score_pos > score_neg) + 1/2 P(tie), via midranks.
inline double auc_roc(std::span<const double> scores, const std::vector<bool>& labels) {
  check_scores(scores, labels);
  const auto [n_pos, n_neg] = class_counts(labels);
  if (n_pos == 0 || n_neg == 0) throw NumericError("AUC is undefined when only one class is present");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) rank_sum += midrank;
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

// Trapezoidal area under an ROC curve's points.
inline double roc_trapezoid_area(const std::vector<ROCPoint>& points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i)
    area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
  return area;
}

inline ROCCurve roc_curve(std::span<const double> scores, const std::vector<bool>& labels) {
  check_scores(scores, labels);
  const auto [n_pos, n_neg] = class_counts(labels);
  if (n_pos == 0 || n_neg == 0) throw NumericError("ROC curve is undefined when only one class is present");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  ROCCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (labels[order[i]] ? tp : fp) += 1;
    if (i + 1 < order.size() && scores[order[i + 1]] == scores[order[i]]) continue;
    curve.points.push_back({scores[order[i]], static_cast<double>(tp) / static_cast<double>(n_pos),
                            static_cast<double>(fp) / static_cast<double>(n_neg)});
  }
  curve.auc_roc = auc_roc(scores, labels);
  return curve;
}

// Fraction of correct calls when predicting positive for score >= threshold.
inline double accuracy_at(std::span<const double> scores, const std::vector<bool>& labels, double threshold = 0.5) {
  check_scores(scores, labels);
  if (scores.empty()) throw DataError("accuracy of an empty sample is undefined");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) correct += ((scores[i] >= threshold) == labels[i]) ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

}  // namespace stagelab
