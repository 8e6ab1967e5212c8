#pragma once

#include <span>
#include <vector>

#include "csanet/tensor.hpp"

namespace csanet {

struct ConvGeometry {
  int stride = 1;
  int pad = 0;
  int dilation = 1;
};

/// floor((in + 2*pad - dilation*(k-1) - 1)/stride) + 1; may be <= 0.
int conv_output_size(int in, int kernel, const ConvGeometry& g);
/// (in - 1)*stride - 2*pad + k; may be <= 0.
int transposed_conv_output_size(int in, int kernel, int stride, int pad);

/// Cross-correlation with dilation. w is [Cout, Cin, kh, kw]; b is [1, Cout,
/// 1, 1] or undefined for no bias.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              ConvGeometry g);

/// Fractionally strided convolution (the adjoint of conv2d in x). w is
/// [Cin, Cout, k, k]; b is [1, Cout, 1, 1] or undefined.
Tensor transposed_conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
                         int stride, int pad);

Tensor relu(const Tensor& x);

/// While alive, collects the sign of every relu input evaluated on this
/// thread, so a finite-difference probe can tell whether it crossed a kink.
class ReluSignRecorder {
 public:
  ReluSignRecorder();
  ~ReluSignRecorder();
  ReluSignRecorder(const ReluSignRecorder&) = delete;
  ReluSignRecorder& operator=(const ReluSignRecorder&) = delete;

  std::vector<bool> signs;

 private:
  ReluSignRecorder* previous_;
};

enum class NormMode { train, eval };

struct BatchNormOptions {
  NormMode mode = NormMode::train;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-channel normalization. In train mode uses batch statistics over
/// (N, H, W) and folds them into the running estimates (unbiased variance);
/// in eval mode uses the running estimates. gamma/beta are [1, C, 1, 1].
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  std::span<double> running_mean, std::span<double> running_var,
                  const BatchNormOptions& opts);

Tensor global_avg_pool(const Tensor& x);

/// Bilinear interpolation on a corner-aligned grid: output corners sample
/// input corners exactly. A 1x1 input broadcasts.
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);

Tensor concat_channels(std::span<const Tensor> xs);
Tensor concat_channels(std::initializer_list<Tensor> xs);
/// Channels [begin, end).
Tensor slice_channels(const Tensor& x, int begin, int end);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
/// Sum of all elements as a [1,1,1,1] tensor.
Tensor sum(const Tensor& x);

/// 0.5 * mean_n sum_k mask[n,k] * mean_pixels (pred - target)^2.
/// mask is [N, K, 1, 1] with entries in {0, 1}.
Tensor mse_masked(const Tensor& pred, const Tensor& target, const Tensor& mask);

}  // namespace csanet
