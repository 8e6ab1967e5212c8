#include "csanet/eval.hpp"

#include <cmath>

namespace csanet {

Predictor model_predictor(const PoseModel& model) {
  return [&model](const Tensor& images) {
    return model.forward(images.detach(), NormMode::eval).body.detach();
  };
}

Tensor flip_input(const Tensor& images) {
  const Shape& s = images.shape();
  auto d = images.data();
  std::vector<double> out(d.size(), 0.0);
  const int shift = kHeatmapStride - 1;
  for (std::size_t plane = 0; plane < static_cast<std::size_t>(s.n) * s.c; ++plane) {
    const double* src = d.data() + plane * s.plane();
    double* dst = out.data() + plane * s.plane();
    for (int y = 0; y < s.h; ++y) {
      for (int u = 0; u < s.w; ++u) {
        const int from = s.w - 1 - shift - u;
        if (from >= 0) dst[static_cast<std::size_t>(y) * s.w + u] = src[static_cast<std::size_t>(y) * s.w + from];
      }
    }
  }
  return Tensor::from(s, std::move(out));
}

Tensor predict_heatmaps(const Predictor& predict, const Tensor& images, bool flip_test,
                        const FlipPairs& pairs) {
  Tensor maps = predict(images);
  if (!flip_test) return maps;
  return flip_merge(maps, predict(flip_input(images)), pairs);
}

EvalResult evaluate_model(const Predictor& predict, std::span<const SampleRecord> samples,
                          const EvalOptions& opts) {
  if (opts.batch_size < 1) throw Error("evaluate_model: batch size must be >= 1");
  EvalResult res;
  std::vector<ScoredInstance> scored;
  double err_sum = 0.0;
  int err_count = 0;
  for (std::size_t begin = 0; begin < samples.size(); begin += opts.batch_size) {
    const std::size_t end = std::min(samples.size(), begin + opts.batch_size);
    std::vector<const Image*> imgs;
    for (std::size_t i = begin; i < end; ++i) imgs.push_back(&samples[i].image);
    Tensor maps = predict_heatmaps(predict, images_to_tensor(imgs), opts.flip_test);
    const int in_h = samples[begin].image.height, in_w = samples[begin].image.width;
    for (std::size_t i = begin; i < end; ++i) {
      const SampleRecord& s = samples[i];
      DecodedKeypoints dec = decode_keypoints(maps, static_cast<int>(i - begin));
      InstanceResult ir;
      ir.prediction = heatmap_to_crop(dec.keypoints, in_h, in_w);
      ir.scores = dec.scores;
      double sc = 0.0;
      for (double v : dec.scores) sc += v;
      ir.score = sc / kNumKeypoints;
      double e = 0.0;
      int n = 0;
      for (int k = 0; k < kNumKeypoints; ++k) {
        if (!s.keypoints.labeled[k]) continue;
        const double dx = (ir.prediction.coords[k].x - s.keypoints.coords[k].x) / kHeatmapStride;
        const double dy = (ir.prediction.coords[k].y - s.keypoints.coords[k].y) / kHeatmapStride;
        e += std::sqrt(dx * dx + dy * dy);
        ++n;
      }
      ir.mean_error = n ? e / n : 0.0;
      err_sum += e;
      err_count += n;
      ir.oks = oks(ir.prediction, s.keypoints, s.area);
      if (ir.oks) scored.push_back({ir.score, *ir.oks, s.area, true});
      res.instances.push_back(ir);
    }
  }
  res.report = average_precision(scored);
  res.mean_error = err_count ? err_sum / err_count : 0.0;
  return res;
}

}  // namespace csanet
