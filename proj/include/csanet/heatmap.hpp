#pragma once

#include <array>
#include <filesystem>

#include "csanet/keypoints.hpp"
#include "csanet/tensor.hpp"

namespace csanet {

/// Downsampling factor between the input crop and the heatmap grid.
inline constexpr int kHeatmapStride = 4;

/// Ground-truth maps [1, 17, H, W] and the per-channel loss mask [1, 17, 1, 1].
struct HeatmapTarget {
  Tensor maps;
  Tensor mask;
};

/// Gaussian score maps sampled at integer grid coordinates, sigma in heatmap
/// pixels. Unlabeled keypoints and keypoints outside [0, W) x [0, H) give an
/// all-zero channel with mask 0.
HeatmapTarget encode_heatmaps(const KeypointSet& kps, int h, int w, double sigma);

struct DecodedKeypoints {
  KeypointSet keypoints;  // heatmap frame, every entry labeled
  std::array<double, kNumKeypoints> scores{};
};

/// Argmax per channel of sample `n` (ties go to the smallest row-major
/// index), optionally refined by a quarter pixel per axis toward the larger
/// neighbour; a neighbour outside the map counts as 0.
DecodedKeypoints decode_keypoints(const Tensor& maps, int n = 0,
                                  bool quarter_offset = true);

/// Horizontal mirror of every map with channels moved to their partners.
Tensor mirror_swap(const Tensor& maps, const FlipPairs& pairs);

/// (a + mirror_swap(b)) / 2.
Tensor flip_merge(const Tensor& a, const Tensor& flipped_out, const FlipPairs& pairs);

KeypointSet crop_to_heatmap(const KeypointSet& kps, int input_h, int input_w);
KeypointSet heatmap_to_crop(const KeypointSet& kps, int input_h, int input_w);

/// Writes channel `c` of sample `n` as an 8-bit binary PGM, values x255
/// clamped to [0, 255].
void write_heatmap_pgm(const std::filesystem::path& path, const Tensor& maps,
                       int n, int c);

}  // namespace csanet
