#include <gtest/gtest.h>

#include <cmath>

#include "csanet/eval.hpp"
#include "csanet/heatmap.hpp"
#include "csanet/random.hpp"

using namespace csanet;

namespace {

KeypointSet single(double x, double y, int k = 0, Frame f = Frame::heatmap) {
  KeypointSet s;
  s.frame = f;
  s.coords[k] = {x, y};
  s.labeled[k] = true;
  return s;
}

KeypointSet all_at(const std::vector<Point>& pts) {
  KeypointSet s;
  s.frame = Frame::heatmap;
  for (int k = 0; k < kNumKeypoints; ++k) {
    s.coords[k] = pts[k % pts.size()];
    s.labeled[k] = true;
  }
  return s;
}

}  // namespace

TEST(Encode, GaussianValues) {
  HeatmapTarget t = encode_heatmaps(single(10, 10), 32, 24, 2.0);
  EXPECT_EQ(t.maps.shape(), (Shape{1, 17, 32, 24}));
  EXPECT_EQ(t.maps.at(0, 0, 10, 10), 1.0);
  EXPECT_NEAR(t.maps.at(0, 0, 10, 12), std::exp(-0.5), 1e-15);
  EXPECT_NEAR(t.maps.at(0, 0, 10, 12), 0.60653065971263342, 1e-15);
  EXPECT_EQ(t.mask.at(0, 0, 0, 0), 1.0);
  for (int k = 1; k < kNumKeypoints; ++k) {
    EXPECT_EQ(t.mask.at(0, k, 0, 0), 0.0);
    for (int i = 0; i < 32 * 24; ++i) EXPECT_EQ(t.maps.at(0, k, i / 24, i % 24), 0.0);
  }
}

TEST(Encode, OutOfMapIsMasked) {
  HeatmapTarget t = encode_heatmaps(single(24.0, 3.0), 32, 24, 2.0);
  EXPECT_EQ(t.mask.at(0, 0, 0, 0), 0.0);
  double m = 0.0;
  for (double v : t.maps.data()) m = std::max(m, v);
  EXPECT_EQ(m, 0.0);
}

TEST(Encode, ValuesWithinUnitInterval) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Point> pts;
    for (int k = 0; k < kNumKeypoints; ++k) pts.push_back({rng.uniform(0, 23.9), rng.uniform(0, 31.9)});
    HeatmapTarget t = encode_heatmaps(all_at(pts), 32, 24, 3.0);
    for (double v : t.maps.data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Decode, SymmetricPeakAndForcedOffset) {
  HeatmapTarget t = encode_heatmaps(single(10, 10), 32, 24, 2.0);
  DecodedKeypoints d = decode_keypoints(t.maps);
  EXPECT_EQ(d.keypoints.coords[0], (Point{10.0, 10.0}));
  EXPECT_EQ(d.scores[0], 1.0);
  std::vector<double> v(t.maps.data().begin(), t.maps.data().end());
  v[10 * 24 + 11] += 0.01;  // right neighbour of the peak
  DecodedKeypoints e = decode_keypoints(Tensor::from(t.maps.shape(), v));
  EXPECT_EQ(e.keypoints.coords[0].x, 10.25);
  EXPECT_EQ(e.keypoints.coords[0].y, 10.0);
}

TEST(Decode, TiesGoToFirstRowMajorIndex) {
  std::vector<double> v(17 * 5 * 5, 0.0);
  v[1 * 5 + 3] = 1.0;
  v[3 * 5 + 1] = 1.0;
  DecodedKeypoints d = decode_keypoints(Tensor::from({1, 17, 5, 5}, v), 0, false);
  EXPECT_EQ(d.keypoints.coords[0], (Point{3.0, 1.0}));
}

TEST(Decode, BorderNeighbourCountsAsZero) {
  std::vector<double> v(17 * 5 * 5, 0.0);
  v[2 * 5 + 0] = 1.0;
  v[2 * 5 + 1] = -0.5;  // inside neighbour below the missing one (0)
  DecodedKeypoints d = decode_keypoints(Tensor::from({1, 17, 5, 5}, v));
  EXPECT_EQ(d.keypoints.coords[0].x, -0.25);
}

TEST(Codec, IntegerGridRoundTripIsExact) {
  for (double sigma : {2.0, 3.0}) {
    for (int y = 1; y < 31; y += 3) {
      for (int x = 1; x < 23; x += 2) {
        DecodedKeypoints d = decode_keypoints(encode_heatmaps(single(x, y), 32, 24, sigma).maps);
        ASSERT_EQ(d.keypoints.coords[0], (Point{double(x), double(y)})) << sigma;
      }
    }
  }
}

TEST(Codec, QuarterOffsetBeatsPlainArgmax) {
  double err_q = 0.0, err_p = 0.0;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      const double x = 10.0 + (i + 0.5) / 10.0, y = 7.0 + (j + 0.5) / 10.0;
      Tensor maps = encode_heatmaps(single(x, y), 32, 24, 2.0).maps;
      Point q = decode_keypoints(maps, 0, true).keypoints.coords[0];
      Point p = decode_keypoints(maps, 0, false).keypoints.coords[0];
      EXPECT_LT(std::abs(q.x - x), 0.5);
      EXPECT_LT(std::abs(q.y - y), 0.5);
      EXPECT_LE(std::abs(q.x - p.x), 0.25);
      EXPECT_LE(std::abs(q.y - p.y), 0.25);
      err_q += std::hypot(q.x - x, q.y - y);
      err_p += std::hypot(p.x - x, p.y - y);
    }
  }
  EXPECT_LT(err_q, err_p);
  Tensor maps = encode_heatmaps(single(10.3, 7.6), 32, 24, 2.0).maps;
  Point q = decode_keypoints(maps).keypoints.coords[0];
  Point p = decode_keypoints(maps, 0, false).keypoints.coords[0];
  EXPECT_LT(std::hypot(q.x - 10.3, q.y - 7.6), std::hypot(p.x - 10.3, p.y - 7.6));
}

TEST(FlipPairs, Involution) {
  FlipPairs p = FlipPairs::standard();
  EXPECT_TRUE(p.is_involution());
  EXPECT_EQ(p.partner[0], 0);
  EXPECT_EQ(p.partner[1], 2);
  EXPECT_EQ(p.partner[15], 16);
  Rng rng(1);
  std::vector<Point> pts;
  for (int k = 0; k < kNumKeypoints; ++k) pts.push_back({rng.uniform(0, 9), rng.uniform(0, 9)});
  KeypointSet s = all_at(pts);
  EXPECT_EQ(p.swap(p.swap(s)), s);
}

TEST(FlipMerge, SelfTransformIsIdentityAndLoopOracle) {
  Rng rng(4);
  const Shape s{2, 17, 6, 5};
  std::vector<double> av(s.numel()), bv(s.numel());
  for (double& v : av) v = rng.uniform(0, 1);
  for (double& v : bv) v = rng.uniform(0, 1);
  Tensor a = Tensor::from(s, av), b = Tensor::from(s, bv);
  FlipPairs pairs = FlipPairs::standard();
  Tensor m = flip_merge(a, mirror_swap(a, pairs), pairs);
  for (std::size_t i = 0; i < av.size(); ++i) EXPECT_NEAR(m.data()[i], av[i], 1e-12);
  Tensor ab = flip_merge(a, b, pairs);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          const double t = b.at(n, pairs.partner[c], y, s.w - 1 - x);
          const double want = (a.at(n, c, y, x) + t) / 2.0;
          EXPECT_EQ(ab.at(n, c, y, x), want);
          EXPECT_GE(ab.at(n, c, y, x), std::min(a.at(n, c, y, x), t));
          EXPECT_LE(ab.at(n, c, y, x), std::max(a.at(n, c, y, x), t));
        }
  EXPECT_THROW(flip_merge(a, Tensor::zeros({2, 17, 6, 4}), pairs), ShapeError);
}

TEST(FlipMerge, SymmetricInputGivesSymmetricMerge) {
  Rng rng(8);
  const Shape s{1, 3, 32, 24};
  std::vector<double> y(s.numel(), 0.0);
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 32; ++r)
      for (int u = 0; u <= 24 - 4; ++u) y[(c * 32 + r) * 24 + u] = rng.uniform(0, 1);
  const Tensor yt = Tensor::from(s, y);
  const Tensor fy = flip_input(yt);
  std::vector<double> x(s.numel());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (y[i] + fy.data()[i]) / 2.0;
  const Tensor xt = Tensor::from(s, x);
  const Tensor fx = flip_input(xt);
  for (std::size_t i = 0; i < x.size(); ++i) ASSERT_EQ(fx.data()[i], x[i]);

  // A predictor with no symmetry of its own.
  Predictor skewed = [](const Tensor& in) {
    const Shape& is = in.shape();
    const int h = is.h / 4, w = is.w / 4;
    std::vector<double> out(static_cast<std::size_t>(17) * h * w);
    for (int c = 0; c < 17; ++c)
      for (int r = 0; r < h; ++r)
        for (int j = 0; j < w; ++j)
          out[(c * h + r) * w + j] = in.at(0, c % 3, 4 * r, 4 * j) * (c + 1) + 0.01 * j;
    return Tensor::from({1, 17, h, w}, out);
  };
  const Tensor merged = predict_heatmaps(skewed, xt, true);
  const Tensor t = mirror_swap(merged, FlipPairs::standard());
  for (std::size_t i = 0; i < merged.numel(); ++i) EXPECT_NEAR(t.data()[i], merged.data()[i], 1e-12);
  const Tensor plain = predict_heatmaps(skewed, xt, false);
  const Tensor tp = mirror_swap(plain, FlipPairs::standard());
  double diff = 0.0;
  for (std::size_t i = 0; i < plain.numel(); ++i) diff = std::max(diff, std::abs(tp.data()[i] - plain.data()[i]));
  EXPECT_GT(diff, 1e-3);
}

TEST(FlipInput, HeatmapGridMirrorsExactly) {
  // Input column 4j maps to column W-4-4j = 4(W/4-1-j).
  const Shape s{1, 1, 4, 16};
  std::vector<double> v(s.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  Tensor f = flip_input(Tensor::from(s, v));
  for (int y = 0; y < 4; ++y)
    for (int j = 0; j < 4; ++j) EXPECT_EQ(f.at(0, 0, y, 4 * (3 - j)), v[y * 16 + 4 * j]);
  for (int y = 0; y < 4; ++y)
    for (int u = 13; u < 16; ++u) EXPECT_EQ(f.at(0, 0, y, u), 0.0);
}

TEST(Frames, CropHeatmapConversion) {
  KeypointSet c = single(100, 60, 3, Frame::crop);
  KeypointSet h = crop_to_heatmap(c, 256, 192);
  EXPECT_EQ(h.frame, Frame::heatmap);
  EXPECT_EQ(h.coords[3], (Point{25.0, 15.0}));
  EXPECT_EQ(h.labeled, c.labeled);
  EXPECT_THROW(crop_to_heatmap(h, 256, 192), Error);
  EXPECT_THROW(heatmap_to_crop(c, 256, 192), Error);
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    KeypointSet r;
    for (int k = 0; k < kNumKeypoints; ++k) {
      r.coords[k] = {rng.uniform(-50, 250), rng.uniform(-50, 300)};
      r.labeled[k] = rng.bernoulli(0.7);
    }
    KeypointSet back = heatmap_to_crop(crop_to_heatmap(r, 256, 192), 256, 192);
    for (int k = 0; k < kNumKeypoints; ++k) {
      EXPECT_NEAR(back.coords[k].x, r.coords[k].x, 1e-12);
      EXPECT_NEAR(back.coords[k].y, r.coords[k].y, 1e-12);
    }
    EXPECT_EQ(back.labeled, r.labeled);
  }
}
