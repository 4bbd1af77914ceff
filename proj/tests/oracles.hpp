#pragma once

// Brute-force reference implementations used to check the library. Each one
// recomputes its quantity from definitions, sharing no code with the library.

#include <cmath>
#include <cstddef>
#include <vector>

#include "stagelab/core.hpp"
#include "stagelab/detect_eval.hpp"

namespace stagelab::oracle {

// IoU by counting unit pixels of integer boxes inside a side x side canvas.
inline double pixel_iou(const BoundingBox& a, const BoundingBox& b, int side = 64) {
  long inter = 0, uni = 0;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const bool in_a = x >= a.x_min() && x < a.x_max() && y >= a.y_min() && y < a.y_max();
      const bool in_b = x >= b.x_min() && x < b.x_max() && y >= b.y_min() && y < b.y_max();
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// Fraction of (positive, negative) pairs ordered correctly, ties counting half.
inline double all_pairs_auc(const std::vector<double>& s, const std::vector<bool>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] && !y[j]) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

// Step AUC-PR from an exhaustive threshold sweep: at each distinct confidence,
// keep predictions at or above it, re-match from scratch per image and count
// hits.
inline double swept_auc_pr(const std::vector<DetectionPrediction>& predictions,
                           const std::vector<GroundTruthBox>& truth, const MatchOptions& options = {}) {
  std::vector<double> thresholds;
  for (const auto& p : predictions) thresholds.push_back(p.confidence);
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  double area = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    std::map<std::string, std::pair<std::vector<const DetectionPrediction*>, std::vector<BoundingBox>>> images;
    for (const auto& p : predictions)
      if (p.confidence >= t) images[p.image_id].first.push_back(&p);
    for (const auto& g : truth) images[g.image_id].second.push_back(g.box);
    std::size_t kept = 0, tp = 0;
    for (auto& [id, entry] : images) {
      auto& [preds, boxes] = entry;
      std::stable_sort(preds.begin(), preds.end(),
                       [](const auto* a, const auto* b) { return a->confidence > b->confidence; });
      std::vector<bool> taken(boxes.size(), false);
      for (const auto* p : preds) {
        ++kept;
        int best = -1;
        double best_v = -1;
        for (std::size_t g = 0; g < boxes.size(); ++g) {
          const double v = pixel_iou(p->box, boxes[g]);
          if (taken[g] || !options.is_hit(v)) continue;
          if (v > best_v) {
            best_v = v;
            best = static_cast<int>(g);
          }
        }
        if (best >= 0) {
          taken[static_cast<std::size_t>(best)] = true;
          ++tp;
        }
      }
    }
    const double precision = static_cast<double>(tp) / static_cast<double>(kept);
    const double recall = static_cast<double>(tp) / static_cast<double>(truth.size());
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return area;
}

struct Subject {
  double time;
  bool event;
  double x;
};

// Breslow log partial likelihood summed over event subjects, risk sets
// recomputed by scanning everyone.
inline double breslow_log_likelihood(const std::vector<Subject>& subjects, double beta) {
  double ll = 0.0;
  for (const auto& i : subjects) {
    if (!i.event) continue;
    double risk = 0.0;
    for (const auto& j : subjects)
      if (j.time >= i.time) risk += std::exp(beta * j.x);
    ll += beta * i.x - std::log(risk);
  }
  return ll;
}

// Maximizer of a concave function on [lo, hi] by a coarse grid followed by
// successively finer grids around the best point.
template <class F>
double grid_argmax(F f, double lo, double hi, double tolerance = 1e-5) {
  auto scan = [&](double a, double b, double step) {
    double best = a, best_v = -INFINITY;
    for (double x = a; x <= b + step / 2; x += step)
      if (const double v = f(x); v > best_v) {
        best_v = v;
        best = x;
      }
    return best;
  };
  double step = (hi - lo) / 200.0;
  double best = scan(lo, hi, step);
  while (step > tolerance) {
    step /= 20.0;
    best = scan(best - 20.0 * step, best + 20.0 * step, step);
  }
  return best;
}

// Product-limit estimate at time t from its textbook definition.
inline double product_limit(const std::vector<Subject>& subjects, double t) {
  std::vector<double> times;
  for (const auto& s : subjects)
    if (s.event && s.time <= t) times.push_back(s.time);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  double surv = 1.0;
  for (double ti : times) {
    double at_risk = 0, deaths = 0;
    for (const auto& s : subjects) {
      at_risk += s.time >= ti;
      deaths += s.event && s.time == ti;
    }
    surv *= 1.0 - deaths / at_risk;
  }
  return surv;
}

}  // namespace stagelab::oracle
