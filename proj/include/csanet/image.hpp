#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "csanet/keypoints.hpp"
#include "csanet/tensor.hpp"

namespace csanet {

/// Planar RGB image with values in [0, 1]. Pixel (row y, column x) has its
/// centre at continuous coordinate (x, y).
struct Image {
  int channels = 3;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, fill) {}

  double& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  /// Rounds every value to the nearest k/255 in [0, 1].
  void quantize();
  bool operator==(const Image&) const = default;
};

/// p' = M p + t with M = [[a, b], [c, d]].
struct Affine2 {
  double a = 1.0, b = 0.0, tx = 0.0;
  double c = 0.0, d = 1.0, ty = 0.0;

  Point apply(Point p) const { return {a * p.x + b * p.y + tx, c * p.x + d * p.y + ty}; }
  Affine2 inverse() const;
  /// (*this) applied after `first`.
  Affine2 after(const Affine2& first) const;
  double determinant() const { return a * d - b * c; }

  static Affine2 translation(double x, double y) { return {1, 0, x, 0, 1, y}; }
  static Affine2 scaling(double s) { return {s, 0, 0, 0, s, 0}; }
  /// Rotation by `deg` degrees with y pointing down: +90 maps (1, 0) to (0, 1).
  static Affine2 rotation(double deg);
};

/// Output pixel q takes the bilinear sample of `src` at fwd^-1(q); samples
/// reaching outside the source read zeros.
Image warp_affine(const Image& src, const Affine2& fwd, int out_h, int out_w);

KeypointSet transform_keypoints(const KeypointSet& kps, const Affine2& t);

/// Batch of equally sized images as [N, C, H, W].
Tensor images_to_tensor(std::span<const Image* const> images);

void write_ppm(const std::filesystem::path& path, const Image& img);
Image read_ppm(const std::filesystem::path& path);

}  // namespace csanet
