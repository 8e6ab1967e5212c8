#include <gtest/gtest.h>

#include <cmath>

#include "csanet/loss.hpp"
#include "csanet/random.hpp"

using namespace csanet;

namespace {

Tensor random_tensor(Rng& rng, Shape s, bool grad = false) {
  std::vector<double> v(s.numel());
  for (double& x : v) x = rng.uniform(0, 1);
  return Tensor::from(s, v, grad);
}

ForwardOutputs random_outputs(Rng& rng, int n, int h, int w, bool grad = false) {
  ForwardOutputs o;
  o.body = random_tensor(rng, {n, 17, h, w}, grad);
  o.aux_face = random_tensor(rng, {n, 5, h, w}, grad);
  o.aux_upper = random_tensor(rng, {n, 6, h, w}, grad);
  o.aux_lower = random_tensor(rng, {n, 6, h, w}, grad);
  return o;
}

Tensor slice(const Tensor& t, PartRange r) { return slice_channels(t, r.begin, r.end).detach(); }

/// 0.5 / N * sum_n sum_k m[n,k] * mean_pixels (p - t)^2 over channels
/// [begin, end) of the target.
double loop_loss(const Tensor& pred, const Tensor& target, const Tensor& mask, int begin) {
  const Shape& s = pred.shape();
  double total = 0.0;
  for (int n = 0; n < s.n; ++n) {
    for (int k = 0; k < s.c; ++k) {
      double acc = 0.0;
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          const double d = pred.at(n, k, y, x) - target.at(n, begin + k, y, x);
          acc += d * d;
        }
      total += mask.at(n, begin + k, 0, 0) * acc / (s.h * s.w);
    }
  }
  return 0.5 * total / s.n;
}

}  // namespace

TEST(PartLosses, ZeroWhenAuxEqualsTargets) {
  Rng rng(1);
  Tensor targets = random_tensor(rng, {2, 17, 4, 3});
  ForwardOutputs o = random_outputs(rng, 2, 4, 3);
  o.aux_face = slice(targets, kFace);
  o.aux_upper = slice(targets, kUpper);
  o.aux_lower = slice(targets, kLower);
  o.body = targets;
  LossBreakdown b = compute_loss(o, targets, Tensor::full({2, 17, 1, 1}, 1.0), {1, 1, 1});
  EXPECT_EQ(b.l_face, 0.0);
  EXPECT_EQ(b.l_upper, 0.0);
  EXPECT_EQ(b.l_lower, 0.0);
  EXPECT_EQ(b.l_body, 0.0);
  EXPECT_EQ(b.l_total, 0.0);
}

TEST(PartLosses, MaskingSilencesUnlabeledParts) {
  Rng rng(2);
  Tensor targets = random_tensor(rng, {1, 17, 4, 3});
  ForwardOutputs o = random_outputs(rng, 1, 4, 3);
  std::vector<double> m(17, 0.0);
  for (int k = 0; k < 5; ++k) m[k] = 1.0;
  PartLosses p = part_losses(o, targets, Tensor::from({1, 17, 1, 1}, m));
  EXPECT_GT(p.face.item(), 0.0);
  EXPECT_EQ(p.upper.item(), 0.0);
  EXPECT_EQ(p.lower.item(), 0.0);
}

TEST(PartLosses, MatchLoopOracle) {
  Rng rng(3);
  for (int n : {1, 2}) {
    Tensor targets = random_tensor(rng, {n, 17, 5, 4});
    ForwardOutputs o = random_outputs(rng, n, 5, 4);
    std::vector<double> m(n * 17);
    for (double& v : m) v = rng.bernoulli(0.7);
    Tensor mask = Tensor::from({n, 17, 1, 1}, m);
    PartLosses p = part_losses(o, targets, mask);
    EXPECT_NEAR(p.face.item(), loop_loss(o.aux_face, targets, mask, 0), 1e-12);
    EXPECT_NEAR(p.upper.item(), loop_loss(o.aux_upper, targets, mask, 5), 1e-12);
    EXPECT_NEAR(p.lower.item(), loop_loss(o.aux_lower, targets, mask, 11), 1e-12);
    EXPECT_NEAR(body_loss(o.body, targets, mask).item(), loop_loss(o.body, targets, mask, 0), 1e-12);
  }
}

TEST(PartLosses, ChannelMismatchThrows) {
  Rng rng(4);
  ForwardOutputs o = random_outputs(rng, 1, 4, 3);
  EXPECT_THROW(part_losses(o, random_tensor(rng, {1, 16, 4, 3}), Tensor::full({1, 16, 1, 1}, 1.0)), Error);
  o.aux_face = random_tensor(rng, {1, 6, 4, 3});
  EXPECT_THROW(part_losses(o, random_tensor(rng, {1, 17, 4, 3}), Tensor::full({1, 17, 1, 1}, 1.0)), Error);
}

TEST(BodyLoss, QuadraticInUniformResidual) {
  Tensor t = Tensor::zeros({1, 17, 4, 3});
  Tensor mask = Tensor::full({1, 17, 1, 1}, 1.0);
  const double one = body_loss(Tensor::full({1, 17, 4, 3}, 0.5), t, mask).item();
  const double two = body_loss(Tensor::full({1, 17, 4, 3}, 1.0), t, mask).item();
  EXPECT_DOUBLE_EQ(two, 4.0 * one);
  EXPECT_EQ(body_loss(t, t, mask).item(), 0.0);
}

TEST(TotalLoss, ArithmeticAndWeights) {
  PartLosses p{Tensor::scalar(1.0), Tensor::scalar(2.0), Tensor::scalar(3.0)};
  EXPECT_EQ(total_loss(p, Tensor::scalar(4.0), {1, 1, 1}).l_total, 10.0);
  EXPECT_EQ(total_loss(p, Tensor::scalar(4.0), {0, 0, 0}).l_total, 4.0);
  EXPECT_THROW(total_loss(p, Tensor::scalar(4.0), {1, -1, 1}), Error);
}

TEST(TotalLoss, LedgerOverRandomWeights) {
  Rng rng(5);
  Tensor targets = random_tensor(rng, {2, 17, 4, 3});
  ForwardOutputs o = random_outputs(rng, 2, 4, 3);
  Tensor mask = Tensor::full({2, 17, 1, 1}, 1.0);
  for (int i = 0; i < 20; ++i) {
    const std::array<double, 3> w{rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0, 2)};
    LossBreakdown b = compute_loss(o, targets, mask, w);
    EXPECT_NEAR(b.l_total, w[0] * b.l_face + w[1] * b.l_upper + w[2] * b.l_lower + b.l_body, 1e-12);
    EXPECT_EQ(b.total.item(), b.l_total);
    for (double v : {b.l_face, b.l_upper, b.l_lower, b.l_body}) EXPECT_GE(v, 0.0);
  }
}

TEST(TotalLoss, AuxGradientScalesWithAlpha) {
  Rng rng(6);
  Tensor targets = random_tensor(rng, {1, 17, 4, 3});
  ForwardOutputs o = random_outputs(rng, 1, 4, 3, true);
  Tensor mask = Tensor::full({1, 17, 1, 1}, 1.0);
  backward(compute_loss(o, targets, mask, {1.0, 1.0, 1.0}).total);
  std::vector<double> g1(o.aux_face.grad().begin(), o.aux_face.grad().end());
  o.aux_face.zero_grad();
  backward(compute_loss(o, targets, mask, {2.5, 1.0, 1.0}).total);
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(o.aux_face.grad()[i], 2.5 * g1[i], 1e-15);
}

TEST(TotalLoss, BaselineOutputsUseBodyOnly) {
  Rng rng(7);
  Tensor targets = random_tensor(rng, {1, 17, 4, 3});
  ForwardOutputs o;
  o.body = random_tensor(rng, {1, 17, 4, 3});
  LossBreakdown b = compute_loss(o, targets, Tensor::full({1, 17, 1, 1}, 1.0), {1, 1, 1});
  EXPECT_EQ(b.l_total, b.l_body);
  EXPECT_EQ(b.l_face, 0.0);
}
