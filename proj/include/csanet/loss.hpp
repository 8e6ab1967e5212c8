#pragma once

#include <array>

#include "csanet/keypoints.hpp"
#include "csanet/model.hpp"

namespace csanet {

struct PartLosses {
  Tensor face;
  Tensor upper;
  Tensor lower;
};

/// Auxiliary losses of the three part heads against the matching slices of
/// the 17-channel target. targets [N,17,H,W], mask [N,17,1,1].
PartLosses part_losses(const ForwardOutputs& out, const Tensor& targets, const Tensor& mask);

Tensor body_loss(const Tensor& body, const Tensor& targets, const Tensor& mask);

struct LossBreakdown {
  Tensor total;  // differentiable
  double l_face = 0.0;
  double l_upper = 0.0;
  double l_lower = 0.0;
  double l_body = 0.0;
  double l_total = 0.0;
  std::array<double, 3> weights{1.0, 1.0, 1.0};
};

/// alpha*face + beta*upper + gamma*lower + body. Throws on a negative weight.
LossBreakdown total_loss(const PartLosses& parts, const Tensor& body,
                         const std::array<double, 3>& weights);

/// Full objective for one batch. Baseline outputs without auxiliary heads
/// contribute only the body term.
LossBreakdown compute_loss(const ForwardOutputs& out, const Tensor& targets,
                           const Tensor& mask, const std::array<double, 3>& weights);

}  // namespace csanet
