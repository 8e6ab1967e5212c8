#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "csanet/image.hpp"
#include "csanet/keypoints.hpp"
#include "csanet/random.hpp"

namespace csanet {

enum class Difficulty { easy, occluded };
enum class Split { train = 0, val = 1 };

std::string to_string(Difficulty d);
Difficulty parse_difficulty(const std::string& s);
std::string to_string(Split s);

/// Closed angle interval in degrees.
struct AngleRange {
  double lo;
  double hi;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

/// Joint-angle bounds of the articulated figure. Limb angles are measured
/// from straight down, positive away from the body midline.
struct SkeletonRanges {
  AngleRange torso_tilt{-15.0, 15.0};
  AngleRange head_tilt{-20.0, 20.0};
  AngleRange shoulder{5.0, 150.0};
  AngleRange elbow{-100.0, 100.0};
  AngleRange hip{-5.0, 35.0};
  AngleRange knee{-40.0, 40.0};
};

const SkeletonRanges& default_ranges();

struct Box {
  double x = 0.0, y = 0.0, w = 0.0, h = 0.0;
  double area() const { return w * h; }
};

/// Drawn angles of one figure; left side first in each pair.
struct PoseAngles {
  double torso_tilt = 0.0;
  double head_tilt = 0.0;
  std::array<double, 2> shoulder{};
  std::array<double, 2> elbow{};
  std::array<double, 2> hip{};
  std::array<double, 2> knee{};
};

struct PersonInstance {
  KeypointSet skeleton;  // world pixels
  PoseAngles angles;
  double height = 0.0;
  double bone_thickness = 0.0;
  std::optional<Box> occluder;
};

struct AugmentParams {
  double rotation_deg = 0.0;
  double scale = 1.0;
  bool flip = false;
};

struct SampleRecord {
  Image image;
  KeypointSet keypoints;
  /// Person box in the frame of `keypoints`; area follows every transform.
  Box box;
  double area = 0.0;
  std::uint64_t seed = 0;
  Difficulty difficulty = Difficulty::easy;
  AugmentParams augment;
};

inline constexpr int kWorldHeight = 256;
inline constexpr int kWorldWidth = 208;

PersonInstance make_person(std::uint64_t seed, Difficulty difficulty,
                           const SkeletonRanges& ranges = default_ranges());

/// Renders one figure on a kWorldHeight x kWorldWidth canvas. The image is
/// quantized to 8 bits so that disk round trips are lossless.
SampleRecord render_sample(std::uint64_t seed, Difficulty difficulty);

/// Expands `box` about its centre to out_h:out_w = 4:3, crops (zero fill
/// outside the image) and resizes. Keypoints leaving the crop become
/// unlabeled.
SampleRecord crop_to_aspect(const SampleRecord& sample, const Box& box, int out_h, int out_w);
/// The affine crop_to_aspect applies, mapping source pixels to crop pixels.
Affine2 crop_affine(const Box& box, int out_h, int out_w);

struct AugmentRanges {
  double flip_p = 0.5;
  double rot_deg = 40.0;
  double scale_lo = 0.7;
  double scale_hi = 1.3;
};

/// Draws rotation, scale and flip (in that order) from `rng`.
AugmentParams draw_augment(Rng& rng, const AugmentRanges& r = {});
/// Rotation about the crop centre composed with isotropic scale, then an
/// optional mirror x -> W-1-x.
Affine2 augment_affine(const AugmentParams& p, int h, int w);
SampleRecord apply_augment(const SampleRecord& sample, const AugmentParams& p,
                           const FlipPairs& pairs);
SampleRecord augment(const SampleRecord& sample, Rng& rng, const FlipPairs& pairs,
                     const AugmentRanges& r = {});

/// Marks keypoints outside the pixel-centre rectangle [0, w-1] x [0, h-1]
/// as unlabeled.
void drop_outside(KeypointSet& kps, int h, int w);

struct DatasetOptions {
  int input_h = 128;
  int input_w = 96;
  Difficulty difficulty = Difficulty::easy;
  bool augment = false;
};

std::uint64_t sample_seed(std::uint64_t seed, int index, Split split);

struct Dataset {
  std::vector<SampleRecord> samples;
  std::vector<std::string> manifest;
};

/// Renders and crops n samples; seeds of the two splits never collide.
Dataset make_dataset(int n, std::uint64_t seed, Split split, const DatasetOptions& opts);

std::string manifest_line(int index, const SampleRecord& r);
/// images/NNNNNN.ppm, annotations/NNNNNN.txt, manifest.txt.
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& dir);

std::string format_annotation(const SampleRecord& r);
void parse_annotation(const std::string& text, SampleRecord& r);

}  // namespace csanet
