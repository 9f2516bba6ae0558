#pragma once

// Precision/recall over a score-threshold sweep with greedy IoU matching.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "hrm/dataset.hpp"
#include "hrm/detect.hpp"
#include "hrm/error.hpp"

namespace hrm {

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  int true_positives = 0;
  int false_positives = 0;
};

struct EvalReport {
  std::vector<PrPoint> points;  // ascending threshold
  double eer = 0.0;
  double iou = 0.5;
  int ground_truth = 0;
  std::vector<bool> matched;  // per detection, in the input order
};

/// Marks each detection as a true positive when it is the highest-scoring
/// detection to claim an unmatched ground-truth box with IoU >= `iou`.
inline std::vector<bool> match_detections(const std::vector<Detection>& dets, const Dataset& truth, double iou_min) {
  std::vector<std::size_t> order(dets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].hypothesis.score > dets[b].hypothesis.score;
  });
  std::map<std::string, std::vector<bool>> used;
  for (const auto& e : truth.entries) used[e.id].assign(e.boxes.size(), false);
  std::vector<bool> tp(dets.size(), false);
  for (std::size_t i : order) {
    const DatasetEntry* entry = truth.find(dets[i].image_id);
    if (!entry) fail(ErrorCode::kInvalidInput, "detection refers to unknown image '" + dets[i].image_id + "'");
    std::vector<bool>& taken = used[entry->id];
    double best = iou_min;
    int pick = -1;
    for (std::size_t k = 0; k < entry->boxes.size(); ++k) {
      const double v = iou(dets[i].box, entry->boxes[k]);
      if (!taken[k] && v >= best) {
        if (pick < 0 || v > best) pick = static_cast<int>(k);
        best = v;
      }
    }
    if (pick >= 0) {
      taken[static_cast<std::size_t>(pick)] = true;
      tp[i] = true;
    }
  }
  return tp;
}

/// Point where precision equals recall, interpolated linearly between
/// consecutive sweep points; without a crossing, the mean of precision and
/// recall at the closest point.
inline double equal_error_rate(const std::vector<PrPoint>& points) {
  if (points.empty()) return 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d = points[i].precision - points[i].recall;
    if (d == 0.0) return points[i].recall;
    if (i + 1 < points.size()) {
      const double e = points[i + 1].precision - points[i + 1].recall;
      if ((d < 0) != (e < 0) && e != 0.0) {
        const double t = d / (d - e);
        return points[i].recall + t * (points[i + 1].recall - points[i].recall);
      }
    }
  }
  const auto closest = std::min_element(points.begin(), points.end(), [](const PrPoint& a, const PrPoint& b) {
    return std::abs(a.precision - a.recall) < std::abs(b.precision - b.recall);
  });
  return 0.5 * (closest->precision + closest->recall);
}

inline EvalReport evaluate(const std::vector<Detection>& dets, const Dataset& truth, double iou_min = 0.5) {
  EvalReport r;
  r.iou = iou_min;
  for (const auto& e : truth.entries) r.ground_truth += static_cast<int>(e.boxes.size());
  r.matched = match_detections(dets, truth, iou_min);
  std::vector<std::size_t> order(dets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].hypothesis.score > dets[b].hypothesis.score;
  });
  int tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t i = order[k];
    (r.matched[i] ? tp : fp) += 1;
    const double s = dets[i].hypothesis.score;
    if (k + 1 < order.size() && dets[order[k + 1]].hypothesis.score == s) continue;
    PrPoint p;
    p.threshold = s;
    p.true_positives = tp;
    p.false_positives = fp;
    p.precision = static_cast<double>(tp) / (tp + fp);
    p.recall = r.ground_truth > 0 ? static_cast<double>(tp) / r.ground_truth : 0.0;
    r.points.push_back(p);
  }
  // Sweep order is descending threshold; EER is computed on it, output ascends.
  r.eer = equal_error_rate(r.points);
  std::reverse(r.points.begin(), r.points.end());
  return r;
}

inline std::string format_pr_csv(const EvalReport& r) {
  std::string out = "threshold,precision,recall\n";
  char line[128];
  for (const PrPoint& p : r.points) {
    std::snprintf(line, sizeof line, "%.6f,%.6f,%.6f\n", p.threshold, p.precision, p.recall);
    out += line;
  }
  return out;
}

/// Attaches boxes (reference box scaled by sigma) to parsed detections.
inline void assign_boxes(std::vector<Detection>& dets, double ref_w, double ref_h) {
  if (!(ref_w > 0 && ref_h > 0)) fail(ErrorCode::kInvalidInput, "reference box size is unknown");
  for (Detection& d : dets) {
    d.box = Box::around(d.hypothesis.center, d.hypothesis.scale * ref_w, d.hypothesis.scale * ref_h);
  }
}

}  // namespace hrm
