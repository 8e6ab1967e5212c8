#pragma once

#include <array>
#include <string_view>
#include <utility>

namespace csanet {

inline constexpr int kNumKeypoints = 17;

/// Keypoint order: 0-4 face, 5-10 upper limbs, 11-16 lower limbs.
inline constexpr std::array<std::string_view, kNumKeypoints> kKeypointNames = {
    "nose",        "left_eye",       "right_eye",     "left_ear",
    "right_ear",   "left_shoulder",  "right_shoulder", "left_elbow",
    "right_elbow", "left_wrist",     "right_wrist",   "left_hip",
    "right_hip",   "left_knee",      "right_knee",    "left_ankle",
    "right_ankle"};

/// Half-open channel range of one body part.
struct PartRange {
  int begin;
  int end;
  int size() const { return end - begin; }
};

inline constexpr PartRange kFace{0, 5};
inline constexpr PartRange kUpper{5, 11};
inline constexpr PartRange kLower{11, 17};

enum class Frame { crop, heatmap };

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

/// 17 keypoints in one reference frame. Coordinates of unlabeled entries are
/// unspecified.
struct KeypointSet {
  std::array<Point, kNumKeypoints> coords{};
  std::array<bool, kNumKeypoints> labeled{};
  Frame frame = Frame::crop;

  int num_labeled() const;
  bool operator==(const KeypointSet&) const = default;
};

/// Left/right partner of every keypoint (the nose is its own partner).
struct FlipPairs {
  std::array<int, kNumKeypoints> partner;

  static FlipPairs standard();
  bool is_involution() const;
  /// Keypoint sets with every entry moved to its partner's index.
  KeypointSet swap(const KeypointSet& k) const;
};

}  // namespace csanet
