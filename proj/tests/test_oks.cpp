#include <gtest/gtest.h>

#include <cmath>
#include <json.hpp>

#include "csanet/eval.hpp"
#include "csanet/heatmap.hpp"
#include "csanet/model.hpp"
#include "csanet/oks.hpp"
#include "csanet/random.hpp"
#include "csanet/synth.hpp"
#include "oracles.hpp"

using namespace csanet;

namespace {

KeypointSet random_set(Rng& rng, double p_label = 0.8) {
  KeypointSet s;
  for (int k = 0; k < kNumKeypoints; ++k) {
    s.coords[k] = {rng.uniform(0, 96), rng.uniform(0, 128)};
    s.labeled[k] = rng.bernoulli(p_label);
  }
  s.labeled[rng.below(kNumKeypoints)] = true;
  return s;
}

}  // namespace

TEST(Oks, Examples) {
  Rng rng(1);
  KeypointSet g = random_set(rng);
  EXPECT_EQ(*oks(g, g, 5000.0), 1.0);
  const double area = 3000.0;
  KeypointSet p = g;
  for (int k = 0; k < kNumKeypoints; ++k) p.coords[k].x += coco_kappa()[k] * std::sqrt(2.0 * area);
  EXPECT_NEAR(*oks(p, g, area), std::exp(-1.0), 1e-15);
  KeypointSet one;
  one.labeled[4] = true;
  KeypointSet far = one;
  far.coords[4] = {1e12, 0};
  EXPECT_EQ(*oks(far, one, 100.0), 0.0);
  EXPECT_FALSE(oks(g, KeypointSet{}, 100.0).has_value());
  EXPECT_THROW(oks(g, g, 0.0), Error);
}

TEST(Oks, KappaIsTwiceCocoSigma) {
  EXPECT_EQ(coco_kappa().size(), 17u);
  EXPECT_NEAR(coco_kappa()[0], 2 * 0.026, 1e-15);
  EXPECT_NEAR(coco_kappa()[16], 2 * 0.089, 1e-15);
  for (double k : coco_kappa()) EXPECT_GT(k, 0.0);
}

TEST(Oks, TranslationInvariantAndMonotone) {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    KeypointSet g = random_set(rng), p = random_set(rng, 1.0);
    const double area = rng.uniform(500, 20000);
    const double base = *oks(p, g, area);
    KeypointSet g2 = g, p2 = p;
    const double dx = rng.uniform(-100, 100), dy = rng.uniform(-100, 100);
    for (int k = 0; k < kNumKeypoints; ++k) {
      g2.coords[k].x += dx, g2.coords[k].y += dy;
      p2.coords[k].x += dx, p2.coords[k].y += dy;
    }
    EXPECT_NEAR(*oks(p2, g2, area), base, 1e-12);
    EXPECT_NEAR(base, oracle::oks(p, g, area, coco_kappa()), 1e-12);
    // Pushing one keypoint further away never increases the score.
    const int k = static_cast<int>(rng.below(kNumKeypoints));
    KeypointSet p3 = p;
    p3.coords[k].x = g.coords[k].x + 1.5 * (p.coords[k].x - g.coords[k].x);
    p3.coords[k].y = g.coords[k].y + 1.5 * (p.coords[k].y - g.coords[k].y);
    EXPECT_LE(*oks(p3, g, area), base);
  }
}

TEST(AveragePrecision, Extremes) {
  std::vector<ScoredInstance> exact(5, {0.9, 1.0, 5000.0, true});
  EvalReport r = average_precision(exact);
  EXPECT_EQ(r.ap, 1.0);
  EXPECT_EQ(r.ap50, 1.0);
  EXPECT_EQ(r.ap75, 1.0);
  EXPECT_EQ(r.ap_medium, 1.0);
  EXPECT_EQ(r.ar, 1.0);
  EXPECT_EQ(r.large_instances, 0);
  EXPECT_EQ(r.ap_large, 0.0);
  std::vector<ScoredInstance> none(4, {0.0, 0.0, 5000.0, false});
  EXPECT_EQ(average_precision(none).ap, 0.0);
  EvalReport e = average_precision({});
  EXPECT_TRUE(e.empty);
  EXPECT_EQ(e.ap, 0.0);
}

TEST(AveragePrecision, ThreeInstanceToySet) {
  // OKS {0.9, 0.6, 0.4}, ranked in that order. At threshold t the true
  // positives are the prefix with oks >= t.
  std::vector<ScoredInstance> items{{0.9, 0.9, 5000, true}, {0.8, 0.6, 5000, true}, {0.7, 0.4, 5000, true}};
  const auto thr = default_oks_thresholds();
  ASSERT_EQ(thr.size(), 10u);
  double want = 0.0;
  for (double t : thr) {
    // The matches lead the ranking, so precision is 1 up to their recall
    // and the interpolation counts the recall levels reached:
    // floor(100 * tp / 3) + 1 of 101, or none without a match.
    const int tp = (0.9 >= t) + (0.6 >= t) + (0.4 >= t);
    const int levels = tp == 0 ? 0 : static_cast<int>(std::floor(100.0 * tp / 3.0 + 1e-9)) + 1;
    EXPECT_NEAR(interpolated_ap(items, t), levels / 101.0, 1e-12) << t;
    want += levels / 101.0;
  }
  EXPECT_NEAR(average_precision(items).ap, want / 10.0, 1e-12);
  EXPECT_GE(average_precision(items).ap50, average_precision(items).ap75);
}

TEST(AveragePrecision, MatchesEnumerationOracle) {
  Rng rng(11);
  const auto thr = default_oks_thresholds();
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(6));
    std::vector<ScoredInstance> items;
    for (int i = 0; i < n; ++i) {
      ScoredInstance s;
      // Coarse scores so that ties occur.
      s.score = std::round(rng.uniform(0, 1) * 4) / 4;
      s.oks = rng.uniform(0.3, 1.0);
      s.area = rng.bernoulli(0.5) ? rng.uniform(32 * 32, 96 * 96) : rng.uniform(96 * 96 + 1, 200 * 200);
      s.detected = rng.bernoulli(0.85);
      items.push_back(s);
    }
    EvalReport r = average_precision(items);
    double ap = 0.0, ar = 0.0;
    for (std::size_t t = 0; t < thr.size(); ++t) {
      const double a = oracle::interpolated_ap(items, thr[t]);
      ASSERT_NEAR(r.ap_per_threshold[t], a, 1e-12);
      ASSERT_NEAR(r.recall_per_threshold[t], oracle::recall(items, thr[t]), 1e-12);
      ap += a;
      ar += oracle::recall(items, thr[t]);
    }
    ASSERT_NEAR(r.ap, ap / thr.size(), 1e-12);
    ASSERT_NEAR(r.ar, ar / thr.size(), 1e-12);
    ASSERT_NEAR(r.ap50, oracle::interpolated_ap(items, 0.5), 1e-12);
    ASSERT_NEAR(r.ap75, oracle::interpolated_ap(items, 0.75), 1e-12);
    std::vector<ScoredInstance> med, large;
    for (const auto& s : items) (s.area <= 96 * 96 ? med : large).push_back(s);
    double am = 0.0, al = 0.0;
    for (double t : thr) {
      am += oracle::interpolated_ap(med, t);
      al += oracle::interpolated_ap(large, t);
    }
    ASSERT_NEAR(r.ap_medium, am / thr.size(), 1e-12);
    ASSERT_NEAR(r.ap_large, al / thr.size(), 1e-12);
    ASSERT_GE(r.ap50, r.ap75);
    for (double v : {r.ap, r.ap50, r.ap75, r.ap_medium, r.ap_large, r.ar}) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(EvalReport, JsonFieldNames) {
  std::vector<ScoredInstance> items{{0.5, 0.8, 5000, true}};
  auto j = nlohmann::json::parse(average_precision(items).to_json());
  for (const char* k : {"AP", "AP50", "AP75", "APm", "APl", "AR"}) EXPECT_TRUE(j.contains(k)) << k;
}

TEST(EvaluateModel, GroundTruthHeatmapsScorePerfectly) {
  DatasetOptions o;
  Dataset ds = make_dataset(12, 5, Split::val, o);
  // Snap labels to the heatmap grid so the decoded peak is exact.
  for (auto& s : ds.samples) {
    for (auto& p : s.keypoints.coords) {
      p.x = 4.0 * std::round(p.x / 4.0);
      p.y = 4.0 * std::round(p.y / 4.0);
    }
    drop_outside(s.keypoints, o.input_h, o.input_w);
  }
  std::size_t cursor = 0;
  Predictor oracle_maps = [&](const Tensor& images) {
    const int n = images.shape().n;
    std::vector<double> out;
    for (int i = 0; i < n; ++i) {
      const auto& s = ds.samples[cursor++];
      Tensor m = encode_heatmaps(crop_to_heatmap(s.keypoints, o.input_h, o.input_w), o.input_h / 4, o.input_w / 4, 2.0).maps;
      out.insert(out.end(), m.data().begin(), m.data().end());
    }
    return Tensor::from({n, 17, o.input_h / 4, o.input_w / 4}, out);
  };
  EvalResult r = evaluate_model(oracle_maps, ds.samples, {false, 5});
  EXPECT_EQ(r.report.ap, 1.0);
  EXPECT_EQ(r.report.ar, 1.0);
  EXPECT_EQ(r.mean_error, 0.0);
  EXPECT_EQ(r.report.instances, 12);
}

TEST(EvaluateModel, UntrainedModelScoresNearZero) {
  ModelConfig cfg;
  cfg.feature_width = 32;
  cfg.input_h = 128;
  cfg.input_w = 96;
  ParameterStore store(3);
  PoseModel model(cfg, store);
  Dataset ds = make_dataset(50, 4, Split::val, {});
  EvalResult r = evaluate_model(model_predictor(model), ds.samples);
  EXPECT_LT(r.report.ap, 0.05);
  EXPECT_EQ(r.report.instances, 50);
  EvalResult again = evaluate_model(model_predictor(model), ds.samples);
  EXPECT_EQ(again.report.to_json(), r.report.to_json());
}
