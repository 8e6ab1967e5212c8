#include "csanet/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace csanet {

int KeypointSet::num_labeled() const {
  return static_cast<int>(std::count(labeled.begin(), labeled.end(), true));
}

FlipPairs FlipPairs::standard() {
  return FlipPairs{{0, 2, 1, 4, 3, 6, 5, 8, 7, 10, 9, 12, 11, 14, 13, 16, 15}};
}

bool FlipPairs::is_involution() const {
  for (int i = 0; i < kNumKeypoints; ++i) {
    int j = partner[i];
    if (j < 0 || j >= kNumKeypoints || partner[j] != i) return false;
  }
  return true;
}

KeypointSet FlipPairs::swap(const KeypointSet& k) const {
  KeypointSet out = k;
  for (int i = 0; i < kNumKeypoints; ++i) {
    out.coords[partner[i]] = k.coords[i];
    out.labeled[partner[i]] = k.labeled[i];
  }
  return out;
}

HeatmapTarget encode_heatmaps(const KeypointSet& kps, int h, int w, double sigma) {
  if (kps.frame != Frame::heatmap) throw Error("encode_heatmaps: keypoints must be in heatmap frame");
  if (!(sigma > 0.0)) throw Error("encode_heatmaps: sigma must be positive");
  if (h < 1 || w < 1) throw ShapeError("encode_heatmaps: empty heatmap grid");
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> maps(kNumKeypoints * plane, 0.0);
  std::vector<double> mask(kNumKeypoints, 0.0);
  const double denom = 2.0 * sigma * sigma;
  for (int k = 0; k < kNumKeypoints; ++k) {
    const Point z = kps.coords[k];
    if (!kps.labeled[k]) continue;
    if (!(z.x >= 0.0 && z.x < w && z.y >= 0.0 && z.y < h)) continue;
    mask[k] = 1.0;
    double* m = maps.data() + k * plane;
    for (int y = 0; y < h; ++y) {
      const double dy = y - z.y;
      for (int x = 0; x < w; ++x) {
        const double dx = x - z.x;
        m[static_cast<std::size_t>(y) * w + x] = std::exp(-(dx * dx + dy * dy) / denom);
      }
    }
  }
  return {Tensor::from({1, kNumKeypoints, h, w}, std::move(maps)),
          Tensor::from({1, kNumKeypoints, 1, 1}, std::move(mask))};
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

DecodedKeypoints decode_keypoints(const Tensor& maps, int n, bool quarter_offset) {
  const Shape& s = maps.shape();
  if (s.c != kNumKeypoints) {
    throw ShapeError("decode_keypoints: expected " + std::to_string(kNumKeypoints) +
                     " channels, got " + std::to_string(s.c));
  }
  if (n < 0 || n >= s.n) throw ShapeError("decode_keypoints: sample index out of range");
  if (s.h < 1 || s.w < 1) throw ShapeError("decode_keypoints: empty heatmap");
  DecodedKeypoints out;
  out.keypoints.frame = Frame::heatmap;
  auto d = maps.data();
  const std::size_t plane = s.plane();
  for (int k = 0; k < kNumKeypoints; ++k) {
    const double* m = d.data() + (static_cast<std::size_t>(n) * s.c + k) * plane;
    std::size_t best = 0;
    for (std::size_t i = 1; i < plane; ++i) {
      if (m[i] > m[best]) best = i;
    }
    const int by = static_cast<int>(best / s.w);
    const int bx = static_cast<int>(best % s.w);
    double x = bx, y = by;
    if (quarter_offset) {
      auto at = [&](int yy, int xx) {
        return (yy >= 0 && yy < s.h && xx >= 0 && xx < s.w)
                   ? m[static_cast<std::size_t>(yy) * s.w + xx]
                   : 0.0;
      };
      x += 0.25 * sign(at(by, bx + 1) - at(by, bx - 1));
      y += 0.25 * sign(at(by + 1, bx) - at(by - 1, bx));
    }
    out.keypoints.coords[k] = {x, y};
    out.keypoints.labeled[k] = true;
    out.scores[k] = m[best];
  }
  return out;
}

Tensor mirror_swap(const Tensor& maps, const FlipPairs& pairs) {
  const Shape& s = maps.shape();
  if (s.c != kNumKeypoints) {
    throw ShapeError("mirror_swap: expected " + std::to_string(kNumKeypoints) +
                     " channels, got " + std::to_string(s.c));
  }
  auto d = maps.data();
  std::vector<double> out(d.size());
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (int k = 0; k < s.c; ++k) {
      const double* src = d.data() + (static_cast<std::size_t>(n) * s.c + k) * plane;
      double* dst = out.data() + (static_cast<std::size_t>(n) * s.c + pairs.partner[k]) * plane;
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
          dst[static_cast<std::size_t>(y) * s.w + (s.w - 1 - x)] =
              src[static_cast<std::size_t>(y) * s.w + x];
        }
      }
    }
  }
  return Tensor::from(s, std::move(out));
}

Tensor flip_merge(const Tensor& a, const Tensor& flipped_out, const FlipPairs& pairs) {
  if (a.shape() != flipped_out.shape()) {
    throw ShapeError("flip_merge: shape mismatch " + a.shape().str() + " vs " +
                     flipped_out.shape().str());
  }
  Tensor t = mirror_swap(flipped_out, pairs);
  auto ad = a.data();
  auto td = t.mutable_data();
  for (std::size_t i = 0; i < td.size(); ++i) td[i] = (ad[i] + td[i]) / 2.0;
  return t;
}

namespace {

void check_input_dims(int input_h, int input_w) {
  if (input_h < kHeatmapStride || input_w < kHeatmapStride ||
      input_h % kHeatmapStride != 0 || input_w % kHeatmapStride != 0) {
    throw ShapeError("input size " + std::to_string(input_h) + "x" +
                     std::to_string(input_w) + " is not a positive multiple of " +
                     std::to_string(kHeatmapStride));
  }
}

}  // namespace

KeypointSet crop_to_heatmap(const KeypointSet& kps, int input_h, int input_w) {
  if (kps.frame != Frame::crop) throw Error("crop_to_heatmap: keypoints are not in crop frame");
  check_input_dims(input_h, input_w);
  KeypointSet out = kps;
  out.frame = Frame::heatmap;
  for (auto& p : out.coords) {
    p.x /= kHeatmapStride;
    p.y /= kHeatmapStride;
  }
  return out;
}

KeypointSet heatmap_to_crop(const KeypointSet& kps, int input_h, int input_w) {
  if (kps.frame != Frame::heatmap) throw Error("heatmap_to_crop: keypoints are not in heatmap frame");
  check_input_dims(input_h, input_w);
  KeypointSet out = kps;
  out.frame = Frame::crop;
  for (auto& p : out.coords) {
    p.x *= kHeatmapStride;
    p.y *= kHeatmapStride;
  }
  return out;
}

void write_heatmap_pgm(const std::filesystem::path& path, const Tensor& maps,
                       int n, int c) {
  const Shape& s = maps.shape();
  if (n < 0 || n >= s.n || c < 0 || c >= s.c) {
    throw ShapeError("write_heatmap_pgm: index out of range for " + s.str());
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << "P5\n" << s.w << " " << s.h << "\n255\n";
  auto d = maps.data();
  const double* m = d.data() + (static_cast<std::size_t>(n) * s.c + c) * s.plane();
  std::vector<unsigned char> bytes(s.plane());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    double v = std::clamp(m[i], 0.0, 1.0) * 255.0;
    bytes[i] = static_cast<unsigned char>(std::lround(v));
  }
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("write failed for " + path.string());
}

}  // namespace csanet
