#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csanet/keypoints.hpp"

namespace csanet {

/// Per-keypoint falloff constants.
using KappaTable = std::array<double, kNumKeypoints>;

/// Twice the standard COCO per-keypoint sigmas.
const KappaTable& coco_kappa();

/// Mean over labeled ground-truth keypoints of exp(-d^2 / (2 area kappa^2)).
/// Returns nullopt when no keypoint is labeled. Throws if area <= 0 or the
/// sets are in different frames.
std::optional<double> oks(const KeypointSet& pred, const KeypointSet& gt, double area,
                          const KappaTable& kappa = coco_kappa());

/// One ground-truth instance and, if present, its single detection.
struct ScoredInstance {
  double score = 0.0;
  double oks = 0.0;
  double area = 0.0;
  bool detected = true;
};

std::vector<double> default_oks_thresholds();

inline constexpr double kMediumAreaLo = 32.0 * 32.0;
inline constexpr double kMediumAreaHi = 96.0 * 96.0;

struct EvalReport {
  double ap = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  double ap_medium = 0.0;
  double ap_large = 0.0;
  double ar = 0.0;
  std::vector<double> thresholds;
  std::vector<double> ap_per_threshold;
  std::vector<double> recall_per_threshold;
  int instances = 0;
  int medium_instances = 0;
  int large_instances = 0;
  bool empty = true;

  std::string to_text() const;
  /// Machine-readable record with fields AP, AP50, AP75, APm, APl, AR.
  std::string to_json() const;
};

/// Precision of the score-ranked detections interpolated at 101 recall
/// points, per threshold. Ties in score keep input order.
double interpolated_ap(std::span<const ScoredInstance> items, double threshold);

/// AP/AR over the threshold grid, overall and for the medium
/// (32^2 <= area <= 96^2) and large (area > 96^2) bands. An empty band
/// reports 0 with a zero instance count.
EvalReport average_precision(std::span<const ScoredInstance> items,
                             const std::vector<double>& thresholds = default_oks_thresholds());

}  // namespace csanet
