// Copyright 2026 The FFD Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Score-based evaluation. Fit is the positive class (label 1); a sample is
// accepted as fit iff score >= threshold. FPR is therefore the fraction of
// unfit samples accepted as fit and FNR the fraction of fit samples rejected.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ffd/error.hpp"

namespace ffd::metrics {

struct ScoreSet {
  std::vector<double> scores;
  std::vector<int> labels;

  std::size_t size() const noexcept { return scores.size(); }
  std::size_t positives() const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1)); }
  std::size_t negatives() const { return labels.size() - positives(); }
};

inline void validate(const ScoreSet& s) {
  require(s.scores.size() == s.labels.size(), Errc::shape,
          "score set has " + std::to_string(s.scores.size()) + " scores but " + std::to_string(s.labels.size()) +
              " labels");
  for (int y : s.labels) require(y == 0 || y == 1, Errc::invalid_label, "labels must be 0 or 1");
  for (double v : s.scores) require(std::isfinite(v), Errc::invalid_input, "scores must be finite");
}

inline void require_both_classes(const ScoreSet& s) {
  validate(s);
  require(s.positives() >= 1 && s.negatives() >= 1, Errc::degenerate_labels,
          "threshold metrics need at least one positive and one negative (got " + std::to_string(s.positives()) +
              " positive, " + std::to_string(s.negatives()) + " negative)");
}

struct DetPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;

  bool operator==(const DetPoint&) const = default;
};

/// Empirical operating points at every distinct score, in ascending
/// threshold order, followed by a reject-all point at threshold +inf. The
/// first point is therefore (FPR 1, FNR 0) and the last (FPR 0, FNR 1).
struct DetCurve {
  std::vector<DetPoint> points;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

inline DetCurve det_curve(const ScoreSet& s) {
  require_both_classes(s);
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.scores[a] < s.scores[b]; });

  DetCurve curve;
  curve.positives = s.positives();
  curve.negatives = s.negatives();
  const auto pos = static_cast<double>(curve.positives);
  const auto neg = static_cast<double>(curve.negatives);

  std::size_t false_accepts = curve.negatives;
  std::size_t false_rejects = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double t = s.scores[order[i]];
    curve.points.push_back({t, static_cast<double>(false_accepts) / neg, static_cast<double>(false_rejects) / pos});
    for (; i < order.size() && s.scores[order[i]] == t; ++i) {
      if (s.labels[order[i]] == 1) ++false_rejects;
      else --false_accepts;
    }
  }
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  return curve;
}

inline void validate(const DetCurve& curve) {
  require(curve.points.size() >= 2, Errc::invalid_input, "DET curve needs at least two points");
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const DetPoint& a = curve.points[i - 1];
    const DetPoint& b = curve.points[i];
    require(a.threshold < b.threshold && b.fpr <= a.fpr && b.fnr >= a.fnr, Errc::invalid_input,
            "DET curve is not a valid staircase");
  }
}

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

/// Crossing of FNR and FPR, linearly interpolated between the two adjacent
/// points that bracket the sign change of (FNR - FPR).
inline EerResult eer(const DetCurve& curve) {
  validate(curve);
  const auto& p = curve.points;
  std::size_t k = 0;
  while (k < p.size() && p[k].fnr - p[k].fpr < 0.0) ++k;
  if (k == p.size()) k = p.size() - 1;
  const double dk = p[k].fnr - p[k].fpr;
  if (k == 0 || dk == 0.0) {
    return {(p[k].fpr + p[k].fnr) / 2.0, std::isfinite(p[k].threshold) ? p[k].threshold : p[k - 1].threshold};
  }
  const DetPoint& a = p[k - 1];
  const DetPoint& b = p[k];
  const double da = a.fnr - a.fpr;
  const double alpha = -da / (dk - da);
  const double rate = a.fpr + alpha * (b.fpr - a.fpr);
  const double threshold = std::isfinite(b.threshold) ? a.threshold + alpha * (b.threshold - a.threshold) : a.threshold;
  return {rate, threshold};
}

inline constexpr double kFpr10 = 0.10;   // FNR10
inline constexpr double kFpr20 = 0.05;   // FNR20
inline constexpr double kFpr100 = 0.01;  // FNR100

struct OperatingPoint {
  double fpr_target = 0.0;
  double fnr = 1.0;
  double fpr = 0.0;
  double threshold = std::numeric_limits<double>::infinity();
  /// True when only the reject-all point meets the FPR constraint.
  bool reject_all = true;
};

/// Smallest empirical FNR among points with FPR <= target.
inline OperatingPoint fnr_at_fpr(const DetCurve& curve, double fpr_target) {
  require(fpr_target > 0.0 && fpr_target < 1.0, Errc::invalid_parameter, "FPR target must lie in (0, 1)");
  validate(curve);
  OperatingPoint op;
  op.fpr_target = fpr_target;
  // FNR is nondecreasing along the sweep, so the first qualifying point wins.
  for (const DetPoint& pt : curve.points) {
    if (pt.fpr <= fpr_target) {
      op.fnr = pt.fnr;
      op.fpr = pt.fpr;
      op.threshold = pt.threshold;
      op.reject_all = !std::isfinite(pt.threshold);
      break;
    }
  }
  return op;
}

struct ConfusionMetrics {
  double threshold = 0.0;
  std::size_t tp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  /// Undefined metrics (empty denominator) are left empty rather than 0.
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> precision;
  std::optional<double> f1;
  std::optional<double> accuracy;
};

inline ConfusionMetrics confusion_metrics(const ScoreSet& s, double threshold) {
  validate(s);
  ConfusionMetrics m;
  m.threshold = threshold;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool accepted = s.scores[i] >= threshold;
    if (s.labels[i] == 1) accepted ? ++m.tp : ++m.fn;
    else accepted ? ++m.fp : ++m.tn;
  }
  auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  m.sensitivity = ratio(m.tp, m.tp + m.fn);
  m.specificity = ratio(m.tn, m.tn + m.fp);
  m.precision = ratio(m.tp, m.tp + m.fp);
  m.accuracy = ratio(m.tp + m.tn, s.size());
  if (m.precision && m.sensitivity && (*m.precision + *m.sensitivity) > 0.0) {
    m.f1 = 2.0 * *m.precision * *m.sensitivity / (*m.precision + *m.sensitivity);
  }
  return m;
}

struct EvalReport {
  std::size_t positives = 0;
  std::size_t negatives = 0;
  double eer = 0.0;
  double eer_threshold = 0.0;
  OperatingPoint fnr10;
  OperatingPoint fnr20;
  OperatingPoint fnr100;
  DetCurve det;
  double decision_threshold = 0.0;
  ConfusionMetrics at_eer_threshold;
  ConfusionMetrics at_decision_threshold;
};

/// Full evaluation of a score set. `decision_threshold` is the scorer's
/// natural cut (logit 0 for the trained heads, distance difference 0 for
/// the centroid scorer); confusion metrics are reported there and at the
/// EER threshold.
inline EvalReport evaluate(const ScoreSet& s, double decision_threshold = 0.0) {
  EvalReport r;
  r.det = det_curve(s);
  r.positives = r.det.positives;
  r.negatives = r.det.negatives;
  const EerResult e = eer(r.det);
  r.eer = e.eer;
  r.eer_threshold = e.threshold;
  r.fnr10 = fnr_at_fpr(r.det, kFpr10);
  r.fnr20 = fnr_at_fpr(r.det, kFpr20);
  r.fnr100 = fnr_at_fpr(r.det, kFpr100);
  r.decision_threshold = decision_threshold;
  r.at_eer_threshold = confusion_metrics(s, e.threshold);
  r.at_decision_threshold = confusion_metrics(s, decision_threshold);
  return r;
}

}  // namespace ffd::metrics
