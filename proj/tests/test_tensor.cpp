#include <gtest/gtest.h>

#include <cmath>

#include "csanet/gradcheck.hpp"
#include "csanet/ops.hpp"
#include "csanet/optim.hpp"
#include "csanet/random.hpp"
#include "oracles.hpp"

using namespace csanet;

namespace {

std::vector<double> random_values(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

std::vector<double> to_vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(Conv2d, IdentityKernelReturnsInput) {
  Tensor x = Tensor::from({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor w = Tensor::from({1, 1, 1, 1}, {1.0});
  Tensor y = conv2d(x, w, Tensor::zeros({1, 1, 1, 1}), {});
  EXPECT_EQ(to_vec(y), to_vec(x));
}

TEST(Conv2d, OnesKernelCountsNeighbours) {
  Tensor y = conv2d(Tensor::full({1, 1, 3, 3}, 1.0), Tensor::full({1, 1, 3, 3}, 1.0), Tensor::zeros({1, 1, 1, 1}),
                    {1, 1, 1});
  EXPECT_EQ(y.at(0, 0, 1, 1), 9.0);
  EXPECT_EQ(y.at(0, 0, 0, 0), 4.0);
  EXPECT_EQ(y.at(0, 0, 2, 2), 4.0);
  EXPECT_EQ(y.at(0, 0, 0, 1), 6.0);
}

TEST(Conv2d, DilatedOutputSize) {
  EXPECT_EQ(conv_output_size(5, 3, {1, 2, 2}), 5);
  Tensor y = conv2d(Tensor::zeros({1, 1, 5, 5}), Tensor::zeros({1, 1, 3, 3}), Tensor(), {1, 2, 2});
  EXPECT_EQ(y.shape(), (Shape{1, 1, 5, 5}));
}

TEST(Conv2d, ShapeErrorsNameTheProblem) {
  try {
    conv2d(Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), Tensor(), {});
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("Cin"), std::string::npos);
  }
  EXPECT_THROW(conv2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 3, 3}), Tensor(), {}), ShapeError);
  EXPECT_THROW(conv2d(Tensor::zeros({1, 1, 4, 4}), Tensor::zeros({1, 1, 3, 3}), Tensor(), {0, 0, 1}), ShapeError);
  EXPECT_THROW(conv2d(Tensor::zeros({1, 1, 4, 4}), Tensor::zeros({2, 1, 3, 3}), Tensor::zeros({1, 3, 1, 1}), {}),
               ShapeError);
}

TEST(Conv2d, MatchesLoopOracleExactlyOnGrid) {
  Rng rng(5);
  int checked = 0, rejected = 0;
  for (int n : {1, 2})
    for (int cin : {1, 4})
      for (int cout : {1, 3})
        for (int hw : {1, 3, 8})
          for (int k : {1, 3, 4})
            for (int s : {1, 2})
              for (int d : {1, 2})
                for (int p : {0, 1, 2}) {
                  const Shape xs{n, cin, hw, hw == 8 ? 7 : hw}, ws{cout, cin, k, k};
                  auto xv = random_values(rng, xs.numel());
                  auto wv = random_values(rng, ws.numel());
                  auto bv = random_values(rng, cout);
                  const ConvGeometry g{s, p, d};
                  if (conv_output_size(xs.h, k, g) < 1 || conv_output_size(xs.w, k, g) < 1) {
                    EXPECT_THROW(conv2d(Tensor::from(xs, xv), Tensor::from(ws, wv), Tensor(), g), ShapeError);
                    ++rejected;
                    continue;
                  }
                  Tensor y = conv2d(Tensor::from(xs, xv), Tensor::from(ws, wv), Tensor::from({1, cout, 1, 1}, bv), g);
                  ASSERT_EQ(to_vec(y), oracle::conv2d(xv, xs, wv, ws, &bv, s, p, d))
                      << xs.str() << " k" << k << " s" << s << " d" << d << " p" << p;
                  ++checked;
                }
  EXPECT_GT(checked, 500);
  EXPECT_GT(rejected, 0);
}

TEST(TransposedConv2d, OutputSizeAndScatter) {
  EXPECT_EQ(transposed_conv_output_size(4, 4, 2, 1), 8);
  Tensor y = transposed_conv2d(Tensor::full({1, 1, 1, 1}, 1.0), Tensor::full({1, 1, 4, 4}, 1.0),
                               Tensor::zeros({1, 1, 1, 1}), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  for (double v : y.data()) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(transposed_conv2d(Tensor::zeros({1, 1, 4, 4}), Tensor::zeros({1, 1, 4, 4}), Tensor(), 2, 1).shape(),
            (Shape{1, 1, 8, 8}));
  EXPECT_THROW(transposed_conv2d(Tensor::zeros({1, 1, 1, 1}), Tensor::zeros({1, 1, 1, 1}), Tensor(), 1, 1), Error);
}

TEST(TransposedConv2d, MatchesLoopOracleExactlyOnGrid) {
  Rng rng(6);
  int checked = 0;
  for (int n : {1, 2})
    for (int cin : {1, 4})
      for (int cout : {1, 3})
        for (int hw : {1, 3, 8})
          for (int k : {1, 3, 4})
            for (int s : {1, 2})
              for (int p : {0, 1}) {
                const Shape xs{n, cin, hw, hw == 8 ? 6 : hw}, ws{cin, cout, k, k};
                if (transposed_conv_output_size(xs.h, k, s, p) < 1 || transposed_conv_output_size(xs.w, k, s, p) < 1)
                  continue;
                auto xv = random_values(rng, xs.numel());
                auto wv = random_values(rng, ws.numel());
                auto bv = random_values(rng, cout);
                Tensor y = transposed_conv2d(Tensor::from(xs, xv), Tensor::from(ws, wv),
                                             Tensor::from({1, cout, 1, 1}, bv), s, p);
                ASSERT_EQ(to_vec(y), oracle::transposed_conv2d(xv, xs, wv, ws, &bv, s, p))
                    << xs.str() << " k" << k << " s" << s << " p" << p;
                ++checked;
              }
  EXPECT_GT(checked, 200);
}

TEST(TransposedConv2d, InputGradientIsConvolutionWithSameKernel) {
  Rng rng(7);
  const Shape xs{1, 2, 3, 3}, ws{2, 3, 4, 4};
  Tensor x = Tensor::from(xs, random_values(rng, xs.numel()), true);
  Tensor w = Tensor::from(ws, random_values(rng, ws.numel()));
  Tensor y = transposed_conv2d(x, w, Tensor(), 2, 1);
  Tensor v = Tensor::from(y.shape(), random_values(rng, y.numel()));
  backward(sum(mul(y, v)));
  // Weight [Cin, Cout, k, k] read as a convolution from Cout to Cin channels.
  Tensor expect = conv2d(v, w, Tensor(), {2, 1, 1});
  ASSERT_EQ(expect.shape(), xs);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(x.grad()[i], expect.data()[i], 1e-12);
}

TEST(Relu, ForwardAndMask) {
  Tensor x = Tensor::from({1, 1, 1, 3}, {-1.0, 0.0, 2.0}, true);
  Tensor y = relu(x);
  EXPECT_EQ(to_vec(y), (std::vector<double>{0.0, 0.0, 2.0}));
  backward(sum(y));
  EXPECT_EQ(to_vec(Tensor::from({1, 1, 1, 3}, {x.grad()[0], x.grad()[1], x.grad()[2]})),
            (std::vector<double>{0.0, 0.0, 1.0}));
  Tensor pos = Tensor::from({1, 1, 2, 2}, {0.5, 1, 2, 3});
  EXPECT_EQ(to_vec(relu(pos)), to_vec(pos));
}

TEST(BatchNorm, NormalizedInputPassesThrough) {
  // Per channel mean 0 and biased variance 1.
  Tensor x = Tensor::from({2, 1, 1, 2}, {1, -1, 1, -1});
  std::vector<double> m(1, 0.0), v(1, 1.0);
  Tensor y = batch_norm(x, Tensor::full({1, 1, 1, 1}, 1.0), Tensor::zeros({1, 1, 1, 1}), m, v, {});
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y.data()[i], x.data()[i], 1e-5);
  // Running variance uses the unbiased estimate 4/3.
  EXPECT_NEAR(v[0], 0.9 * 1.0 + 0.1 * 4.0 / 3.0, 1e-15);
  EXPECT_NEAR(m[0], 0.0, 1e-15);
}

TEST(BatchNorm, ZeroGammaGivesBeta) {
  Rng rng(1);
  Tensor x = Tensor::from({2, 2, 3, 3}, random_values(rng, 36));
  std::vector<double> m(2, 0.0), v(2, 1.0);
  Tensor y = batch_norm(x, Tensor::zeros({1, 2, 1, 1}), Tensor::from({1, 2, 1, 1}, {0.5, -2.0}), m, v, {});
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 9; ++i) {
      EXPECT_EQ(y.at(n, 0, i / 3, i % 3), 0.5);
      EXPECT_EQ(y.at(n, 1, i / 3, i % 3), -2.0);
    }
}

TEST(BatchNorm, EvalUsesRunningStatistics) {
  Tensor x = Tensor::from({1, 1, 1, 2}, {3.0, 5.0});
  std::vector<double> m{1.0}, v{4.0};
  Tensor y = batch_norm(x, Tensor::full({1, 1, 1, 1}, 2.0), Tensor::full({1, 1, 1, 1}, 1.0), m, v,
                        {NormMode::eval, 0.1, 0.0});
  EXPECT_DOUBLE_EQ(y.data()[0], 2.0 * (3.0 - 1.0) / 2.0 + 1.0);
  EXPECT_DOUBLE_EQ(y.data()[1], 2.0 * (5.0 - 1.0) / 2.0 + 1.0);
  EXPECT_EQ(m[0], 1.0);
  EXPECT_EQ(v[0], 4.0);
}

TEST(BatchNorm, ChannelMismatchThrows) {
  std::vector<double> m(2), v(2, 1.0);
  EXPECT_THROW(batch_norm(Tensor::zeros({1, 3, 2, 2}), Tensor::zeros({1, 2, 1, 1}), Tensor::zeros({1, 2, 1, 1}), m, v,
                          {}),
               ShapeError);
}

TEST(GlobalAvgPool, MeanAndGradient) {
  Tensor x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4}, true);
  Tensor y = global_avg_pool(x);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y.item(), 2.5);
  backward(sum(y));
  for (double g : x.grad()) EXPECT_EQ(g, 0.25);
  EXPECT_EQ(global_avg_pool(Tensor::full({2, 3, 5, 7}, 1.5)).data()[4], 1.5);
}

TEST(ResizeBilinear, CornerAligned) {
  Tensor x = Tensor::from({1, 1, 2, 2}, {0, 1, 0, 1});
  Tensor y = resize_bilinear(x, 2, 4);
  const std::vector<double> row{0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(y.at(0, 0, r, c), row[c], 1e-15);
  Tensor k = resize_bilinear(Tensor::full({1, 2, 3, 5}, 0.7), 11, 4);
  for (double v : k.data()) EXPECT_EQ(v, 0.7);
  Tensor b = resize_bilinear(Tensor::from({1, 2, 1, 1}, {3.0, -1.0}), 4, 3);
  for (int i = 0; i < 12; ++i) {
    EXPECT_EQ(b.data()[i], 3.0);
    EXPECT_EQ(b.data()[12 + i], -1.0);
  }
}

TEST(ConcatChannels, ShapeOrderAndErrors) {
  Tensor a = Tensor::full({2, 2, 3, 3}, 1.0), b = Tensor::full({2, 3, 3, 3}, 2.0);
  Tensor c = concat_channels({a, b});
  EXPECT_EQ(c.shape(), (Shape{2, 5, 3, 3}));
  EXPECT_EQ(c.at(1, 1, 0, 0), 1.0);
  EXPECT_EQ(c.at(1, 2, 0, 0), 2.0);
  EXPECT_EQ(to_vec(concat_channels({a})), to_vec(a));
  try {
    concat_channels({a, b, Tensor::zeros({2, 1, 4, 3})});
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
}

TEST(MseMasked, Examples) {
  Tensor p = Tensor::full({1, 2, 3, 3}, 2.0), t = Tensor::zeros({1, 2, 3, 3});
  EXPECT_EQ(mse_masked(p, p, Tensor::full({1, 2, 1, 1}, 1.0)).item(), 0.0);
  EXPECT_EQ(mse_masked(p, t, Tensor::zeros({1, 2, 1, 1})).item(), 0.0);
  EXPECT_EQ(mse_masked(p, t, Tensor::from({1, 2, 1, 1}, {1.0, 0.0})).item(), 2.0);
  EXPECT_THROW(mse_masked(p, Tensor::zeros({1, 2, 3, 2}), Tensor::zeros({1, 2, 1, 1})), ShapeError);
}

TEST(Backward, SimpleGradients) {
  Tensor x = Tensor::from({1, 1, 2, 2}, {1, -2, 3, 0.5}, true);
  backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
  x.zero_grad();
  backward(scale(sum(mul(x, x)), 0.5));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(x.grad()[i], x.data()[i]);
  EXPECT_THROW(backward(x), Error);
}

TEST(Backward, LeafGradientsAccumulate) {
  Tensor x = Tensor::from({1, 1, 1, 2}, {1.0, 2.0}, true);
  backward(sum(x));
  backward(sum(x));
  EXPECT_EQ(x.grad()[0], 2.0);
  x.zero_grad();
  EXPECT_FALSE(x.has_grad());
}

TEST(Tape, TopologicalAndVisitsOnce) {
  Tensor x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4}, true);
  Tensor a = relu(x);
  Tensor b = add(a, a);
  Tensor c = mul(b, a);
  Tensor l = sum(c);
  Tape t = Tape::record(l);
  EXPECT_TRUE(t.is_topological());
  EXPECT_EQ(t.size(), 5u);  // x, a, b, c, l
  backward(l);
  // d/dx sum(2 a^2) = 4 a for positive entries.
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(x.grad()[i], 4.0 * x.data()[i]);
}

TEST(Tape, NoHistoryWithoutGrad) {
  Tensor x = Tensor::from({1, 1, 1, 2}, {1.0, 2.0});
  Tensor y = relu(x);
  EXPECT_TRUE(y.node()->inputs.empty());
}

TEST(Tensor, FiniteOutputsOnFiniteInputs) {
  Rng rng(3);
  Tensor x = Tensor::from({2, 3, 4, 4}, random_values(rng, 96));
  std::vector<double> m(3, 0.0), v(3, 1.0);
  Tensor y = batch_norm(resize_bilinear(relu(x), 7, 5), Tensor::full({1, 3, 1, 1}, 1.0), Tensor::zeros({1, 3, 1, 1}),
                        m, v, {});
  for (double e : y.data()) EXPECT_TRUE(std::isfinite(e));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterStore store(1);
  Tensor w = store.create("w", {1, 1, 1, 3}, Init::zeros);
  for (double& g : w.mutable_grad()) g = 1.0;
  auto params = store.params();
  adam_step(params, 1e-3);
  for (double v : w.data()) EXPECT_NEAR(v, -1e-3, 1e-6);
  EXPECT_EQ(store.param("w").step_count, 1);
  EXPECT_FALSE(w.has_grad());
}

TEST(Adam, ZeroGradientLeavesValuesAndCountsStep) {
  ParameterStore store(1);
  Tensor w = store.create("w", {1, 1, 1, 2}, Init::ones);
  w.mutable_grad();
  auto params = store.params();
  adam_step(params, 1e-2);
  EXPECT_EQ(w.data()[0], 1.0);
  EXPECT_EQ(store.param("w").step_count, 1);
}

TEST(Adam, MissingGradientThrows) {
  ParameterStore store(1);
  store.create("w", {1, 1, 1, 2}, Init::ones);
  auto params = store.params();
  EXPECT_THROW(adam_step(params, 1e-2), Error);
}

TEST(Adam, QuadraticDecreases) {
  ParameterStore store(1);
  Tensor w = store.create("w", {1, 1, 1, 1}, Init::ones);
  auto params = store.params();
  double prev = 0.5 * w.data()[0] * w.data()[0];
  for (int i = 0; i < 3; ++i) {
    backward(scale(sum(mul(w, w)), 0.5));
    adam_step(params, 0.1);
    const double now = 0.5 * w.data()[0] * w.data()[0];
    EXPECT_LT(now, prev);
    prev = now;
  }
}

TEST(Schedule, MilestonesDecay) {
  MultiStepSchedule s(1e-3, {20, 26}, 0.1);
  EXPECT_EQ(s.lr_at(19), 1e-3);
  EXPECT_EQ(s.lr_at(20), 1e-3 * 0.1);
  EXPECT_EQ(s.lr_at(26), 1e-3 * 0.1 * 0.1);
}

TEST(ParameterStore, HeInitDeterministicAndBounded) {
  ParameterStore a(9), b(9);
  Tensor wa = a.create("layer.w", {4, 3, 3, 3}, Init::he_uniform, 27);
  Tensor wb = b.create("layer.w", {4, 3, 3, 3}, Init::he_uniform, 27);
  EXPECT_EQ(to_vec(wa), to_vec(wb));
  const double bound = std::sqrt(6.0 / 27.0);
  for (double v : wa.data()) EXPECT_LE(std::abs(v), bound);
  EXPECT_THROW(a.create("layer.w", {4, 3, 1, 1}, Init::zeros), Error);
}

TEST(GradCheck, EveryOpPasses) {
  for (const auto& r : check_ops()) EXPECT_TRUE(r.passed) << r.name << " " << r.max_rel_error;
}

TEST(GradCheck, BrokenBackwardIsDetected) { EXPECT_FALSE(check_broken_op().passed); }
