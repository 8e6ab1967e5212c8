#pragma once

#include <functional>
#include <span>
#include <vector>

#include "csanet/heatmap.hpp"
#include "csanet/model.hpp"
#include "csanet/oks.hpp"
#include "csanet/synth.hpp"

namespace csanet {

/// Maps an image batch [N, 3, H, W] to body heatmaps [N, 17, H/4, W/4].
using Predictor = std::function<Tensor(const Tensor&)>;

/// Body heatmaps of `model` in inference mode, without recording history.
Predictor model_predictor(const PoseModel& model);

/// Input mirror for flip testing: column u takes column W-4-u, zero filled,
/// so that the 4x downsampled heatmaps mirror exactly as j -> W/4-1-j.
Tensor flip_input(const Tensor& images);

/// Heatmaps of a batch, optionally averaged with the mirrored pass.
Tensor predict_heatmaps(const Predictor& predict, const Tensor& images, bool flip_test,
                        const FlipPairs& pairs = FlipPairs::standard());

struct InstanceResult {
  KeypointSet prediction;  // crop frame
  std::array<double, kNumKeypoints> scores{};
  double score = 0.0;
  std::optional<double> oks;
  /// Mean distance over labeled keypoints, heatmap pixels.
  double mean_error = 0.0;
};

struct EvalResult {
  EvalReport report;
  std::vector<InstanceResult> instances;
  /// Mean over labeled keypoints of all instances, heatmap pixels.
  double mean_error = 0.0;
};

struct EvalOptions {
  bool flip_test = false;
  int batch_size = 8;
};

/// Runs the predictor over every sample, decodes with the quarter offset,
/// scores with OKS against the sample's box area and aggregates AP/AR.
/// Samples without labeled keypoints are excluded.
EvalResult evaluate_model(const Predictor& predict, std::span<const SampleRecord> samples,
                          const EvalOptions& opts = {});

}  // namespace csanet
