#include "csanet/loss.hpp"

namespace csanet {

namespace {

void check_targets(const Tensor& targets, const Tensor& mask) {
  if (targets.shape().c != kNumKeypoints) {
    throw ShapeError("loss: targets must have " + std::to_string(kNumKeypoints) +
                     " channels, got " + std::to_string(targets.shape().c));
  }
  if (mask.shape() != Shape{targets.shape().n, kNumKeypoints, 1, 1}) {
    throw ShapeError("loss: mask shape " + mask.shape().str() + " does not match targets " +
                     targets.shape().str());
  }
}

Tensor part_loss(const Tensor& pred, const Tensor& targets, const Tensor& mask, PartRange r,
                 const char* name) {
  if (!pred.defined()) throw Error(std::string("loss: missing ") + name + " head output");
  if (pred.shape().c != r.size()) {
    throw ShapeError(std::string("loss: ") + name + " head has " + std::to_string(pred.shape().c) +
                     " channels, expected " + std::to_string(r.size()));
  }
  return mse_masked(pred, slice_channels(targets, r.begin, r.end),
                    slice_channels(mask, r.begin, r.end));
}

}  // namespace

PartLosses part_losses(const ForwardOutputs& out, const Tensor& targets, const Tensor& mask) {
  check_targets(targets, mask);
  return {part_loss(out.aux_face, targets, mask, kFace, "face"),
          part_loss(out.aux_upper, targets, mask, kUpper, "upper"),
          part_loss(out.aux_lower, targets, mask, kLower, "lower")};
}

Tensor body_loss(const Tensor& body, const Tensor& targets, const Tensor& mask) {
  check_targets(targets, mask);
  return mse_masked(body, targets, mask);
}

LossBreakdown total_loss(const PartLosses& parts, const Tensor& body,
                         const std::array<double, 3>& weights) {
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error("total_loss: loss weights must be non-negative");
  }
  LossBreakdown b;
  b.weights = weights;
  b.l_face = parts.face.item();
  b.l_upper = parts.upper.item();
  b.l_lower = parts.lower.item();
  b.l_body = body.item();
  b.total = add(add(add(scale(parts.face, weights[0]), scale(parts.upper, weights[1])),
                    scale(parts.lower, weights[2])),
                body);
  b.l_total = b.total.item();
  return b;
}

LossBreakdown compute_loss(const ForwardOutputs& out, const Tensor& targets, const Tensor& mask,
                           const std::array<double, 3>& weights) {
  Tensor body = body_loss(out.body, targets, mask);
  if (!out.has_aux()) {
    LossBreakdown b;
    b.weights = weights;
    b.total = body;
    b.l_body = b.l_total = body.item();
    return b;
  }
  return total_loss(part_losses(out, targets, mask), body, weights);
}

}  // namespace csanet
