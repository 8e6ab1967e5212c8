#include "csanet/oks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "csanet/tensor.hpp"

namespace csanet {

const KappaTable& coco_kappa() {
  static const KappaTable k = [] {
    const KappaTable sigmas = {.026, .025, .025, .035, .035, .079, .079, .072, .072,
                               .062, .062, .107, .107, .087, .087, .089, .089};
    KappaTable out;
    for (int i = 0; i < kNumKeypoints; ++i) out[i] = 2.0 * sigmas[i];
    return out;
  }();
  return k;
}

std::optional<double> oks(const KeypointSet& pred, const KeypointSet& gt, double area,
                          const KappaTable& kappa) {
  if (!(area > 0.0)) throw Error("oks: area must be positive");
  if (pred.frame != gt.frame) throw Error("oks: prediction and ground truth are in different frames");
  double acc = 0.0;
  int n = 0;
  for (int i = 0; i < kNumKeypoints; ++i) {
    if (!gt.labeled[i]) continue;
    const double dx = pred.coords[i].x - gt.coords[i].x;
    const double dy = pred.coords[i].y - gt.coords[i].y;
    acc += std::exp(-(dx * dx + dy * dy) / (2.0 * area * kappa[i] * kappa[i]));
    ++n;
  }
  if (n == 0) return std::nullopt;
  return acc / n;
}

std::vector<double> default_oks_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back((50 + 5 * i) / 100.0);
  return t;
}

namespace {

std::vector<std::size_t> ranked(std::span<const ScoredInstance> items) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].detected) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return items[a].score > items[b].score; });
  return order;
}

struct ThresholdResult {
  double ap = 0.0;
  double recall = 0.0;
};

ThresholdResult evaluate_threshold(std::span<const ScoredInstance> items, double threshold) {
  ThresholdResult r;
  const std::size_t gt = items.size();
  if (gt == 0) return r;
  const auto order = ranked(items);
  std::vector<double> precision(order.size()), recall(order.size());
  std::size_t tp = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (items[order[i]].oks >= threshold) ++tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / static_cast<double>(gt);
  }
  for (std::size_t i = order.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double acc = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double rt = k / 100.0;
    auto it = std::lower_bound(recall.begin(), recall.end(), rt);
    if (it != recall.end()) acc += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  r.ap = acc / 101.0;
  r.recall = static_cast<double>(tp) / static_cast<double>(gt);
  return r;
}

}  // namespace

double interpolated_ap(std::span<const ScoredInstance> items, double threshold) {
  return evaluate_threshold(items, threshold).ap;
}

EvalReport average_precision(std::span<const ScoredInstance> items,
                             const std::vector<double>& thresholds) {
  EvalReport rep;
  rep.thresholds = thresholds;
  rep.instances = static_cast<int>(items.size());
  rep.empty = items.empty();
  if (thresholds.empty()) throw Error("average_precision: empty threshold list");
  for (double t : thresholds) {
    const ThresholdResult r = evaluate_threshold(items, t);
    rep.ap_per_threshold.push_back(r.ap);
    rep.recall_per_threshold.push_back(r.recall);
  }
  auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  rep.ap = mean(rep.ap_per_threshold);
  rep.ar = mean(rep.recall_per_threshold);
  rep.ap50 = interpolated_ap(items, 0.5);
  rep.ap75 = interpolated_ap(items, 0.75);

  std::vector<ScoredInstance> medium, large;
  for (const auto& it : items) {
    if (it.area >= kMediumAreaLo && it.area <= kMediumAreaHi) medium.push_back(it);
    if (it.area > kMediumAreaHi) large.push_back(it);
  }
  auto band_ap = [&](const std::vector<ScoredInstance>& band) {
    if (band.empty()) return 0.0;
    double acc = 0.0;
    for (double t : thresholds) acc += interpolated_ap(band, t);
    return acc / static_cast<double>(thresholds.size());
  };
  rep.ap_medium = band_ap(medium);
  rep.ap_large = band_ap(large);
  rep.medium_instances = static_cast<int>(medium.size());
  rep.large_instances = static_cast<int>(large.size());
  return rep;
}

std::string EvalReport::to_text() const {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "AP=%.4f AP50=%.4f AP75=%.4f APm=%.4f APl=%.4f AR=%.4f instances=%d medium=%d large=%d",
                ap, ap50, ap75, ap_medium, ap_large, ar, instances, medium_instances, large_instances);
  return buf;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["AP"] = ap;
  j["AP50"] = ap50;
  j["AP75"] = ap75;
  j["APm"] = ap_medium;
  j["APl"] = ap_large;
  j["AR"] = ar;
  j["empty"] = empty;
  j["instances"] = instances;
  j["medium_instances"] = medium_instances;
  j["large_instances"] = large_instances;
  j["thresholds"] = thresholds;
  j["ap_per_threshold"] = ap_per_threshold;
  j["recall_per_threshold"] = recall_per_threshold;
  return j.dump(2);
}

}  // namespace csanet
