#include "csanet/ops.hpp"

#include <algorithm>
#include <cmath>

#include "gemm.hpp"

namespace csanet {

using detail::MatView;
using detail::Node;

namespace {

bool wants_grad(const std::shared_ptr<Node>& n) {
  return n != nullptr && n->requires_grad;
}

// Geometry of one im2col unrolling: an input plane of size (h, w) read by a
// kernel of size (kh, kw) at every position of an (oh, ow) grid.
struct Unroll {
  int channels, h, w, kh, kw, oh, ow;
  ConvGeometry g;

  std::size_t rows() const {
    return static_cast<std::size_t>(channels) * kh * kw;
  }
  std::size_t cols() const { return static_cast<std::size_t>(oh) * ow; }
  bool is_identity() const {
    return kh == 1 && kw == 1 && g.stride == 1 && g.pad == 0 && oh == h &&
           ow == w;
  }
};

void im2col(const Unroll& u, const double* in, double* col) {
  const std::size_t p = u.cols();
  for (int c = 0; c < u.channels; ++c) {
    const double* plane = in + static_cast<std::size_t>(c) * u.h * u.w;
    for (int ky = 0; ky < u.kh; ++ky) {
      for (int kx = 0; kx < u.kw; ++kx) {
        double* row = col + ((static_cast<std::size_t>(c) * u.kh + ky) * u.kw + kx) * p;
        for (int oy = 0; oy < u.oh; ++oy) {
          int iy = oy * u.g.stride - u.g.pad + ky * u.g.dilation;
          double* dst = row + static_cast<std::size_t>(oy) * u.ow;
          if (iy < 0 || iy >= u.h) {
            std::fill(dst, dst + u.ow, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * u.w;
          int x0 = -u.g.pad + kx * u.g.dilation;
          for (int ox = 0; ox < u.ow; ++ox) {
            int ix = x0 + ox * u.g.stride;
            dst[ox] = (ix >= 0 && ix < u.w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

// Accumulates unrolled columns back onto the plane in (c, ky, kx, oy, ox)
// order.
void col2im(const Unroll& u, const double* col, double* out) {
  const std::size_t p = u.cols();
  for (int c = 0; c < u.channels; ++c) {
    double* plane = out + static_cast<std::size_t>(c) * u.h * u.w;
    for (int ky = 0; ky < u.kh; ++ky) {
      for (int kx = 0; kx < u.kw; ++kx) {
        const double* row =
            col + ((static_cast<std::size_t>(c) * u.kh + ky) * u.kw + kx) * p;
        for (int oy = 0; oy < u.oh; ++oy) {
          int iy = oy * u.g.stride - u.g.pad + ky * u.g.dilation;
          if (iy < 0 || iy >= u.h) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * u.w;
          const double* src = row + static_cast<std::size_t>(oy) * u.ow;
          int x0 = -u.g.pad + kx * u.g.dilation;
          for (int ox = 0; ox < u.ow; ++ox) {
            int ix = x0 + ox * u.g.stride;
            if (ix >= 0 && ix < u.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void check_bias(const Tensor& b, int channels, const char* op) {
  if (!b.defined()) return;
  if (b.numel() != static_cast<std::size_t>(channels)) {
    throw ShapeError(std::string(op) + ": bias has " + std::to_string(b.numel()) +
                     " elements, expected Cout=" + std::to_string(channels));
  }
}

void add_bias(std::vector<double>& out, const Tensor& b, const Shape& s) {
  if (!b.defined()) return;
  auto bias = b.data();
  const std::size_t p = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      double* dst = out.data() + (static_cast<std::size_t>(n) * s.c + c) * p;
      for (std::size_t i = 0; i < p; ++i) dst[i] += bias[c];
    }
  }
}

void bias_backward(Node& self, const std::shared_ptr<Node>& b) {
  if (!wants_grad(b)) return;
  auto& gb = b->ensure_grad();
  const Shape& s = self.shape;
  const std::size_t p = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* g = self.grad.data() + (static_cast<std::size_t>(n) * s.c + c) * p;
      double acc = 0.0;
      for (std::size_t i = 0; i < p; ++i) acc += g[i];
      gb[c] += acc;
    }
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() +
                     " vs " + b.shape().str());
  }
}

}  // namespace

int conv_output_size(int in, int kernel, const ConvGeometry& g) {
  int span = in + 2 * g.pad - g.dilation * (kernel - 1) - 1;
  // floor division for negative spans
  int q = span >= 0 ? span / g.stride : -((-span + g.stride - 1) / g.stride);
  return q + 1;
}

int transposed_conv_output_size(int in, int kernel, int stride, int pad) {
  return (in - 1) * stride - 2 * pad + kernel;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              ConvGeometry g) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (ws.c != xs.c) {
    throw ShapeError("conv2d: Cin mismatch, input has " + std::to_string(xs.c) +
                     " channels but weight expects " + std::to_string(ws.c));
  }
  if (ws.h < 1 || ws.w < 1) throw ShapeError("conv2d: kernel size must be >= 1");
  if (g.stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (g.dilation < 1) throw ShapeError("conv2d: dilation must be >= 1");
  if (g.pad < 0) throw ShapeError("conv2d: pad must be >= 0");
  check_bias(b, ws.n, "conv2d");
  const int oh = conv_output_size(xs.h, ws.h, g);
  const int ow = conv_output_size(xs.w, ws.w, g);
  if (oh < 1 || ow < 1) {
    throw ShapeError("conv2d: non-positive output size " + std::to_string(oh) +
                     "x" + std::to_string(ow) + " for input " + xs.str());
  }
  const Shape os{xs.n, ws.n, oh, ow};
  const Unroll u{xs.c, xs.h, xs.w, ws.h, ws.w, oh, ow, g};
  const int rows = static_cast<int>(u.rows());
  const int cols = static_cast<int>(u.cols());
  const std::size_t in_stride = static_cast<std::size_t>(xs.c) * xs.h * xs.w;
  const std::size_t out_stride = static_cast<std::size_t>(os.c) * cols;

  std::vector<double> out(os.numel());
  std::vector<double> col(u.is_identity() ? 0 : u.rows() * u.cols());
  auto xd = x.data();
  auto wd = w.data();
  for (int n = 0; n < xs.n; ++n) {
    const double* xin = xd.data() + n * in_stride;
    const double* bmat = xin;
    if (!u.is_identity()) {
      im2col(u, xin, col.data());
      bmat = col.data();
    }
    detail::gemm(ws.n, cols, rows, MatView{wd.data(), rows, 1},
                 MatView{bmat, cols, 1}, out.data() + n * out_stride, cols,
                 false);
  }
  add_bias(out, b, os);

  return make_result(os, std::move(out), {x, w, b}, "conv2d", [u, rows, cols, in_stride, out_stride](Node& self) {
    auto& xn = self.inputs[0];
    auto& wn = self.inputs[1];
    const int batch = self.shape.n;
    const int cout = self.shape.c;
    std::vector<double> buf(u.is_identity() ? 0 : u.rows() * u.cols());
    if (wants_grad(wn)) {
      auto& gw = wn->ensure_grad();
      for (int n = 0; n < batch; ++n) {
        const double* xin = xn->data.data() + n * in_stride;
        const double* colp = xin;
        if (!u.is_identity()) {
          im2col(u, xin, buf.data());
          colp = buf.data();
        }
        detail::gemm(cout, rows, cols,
                     MatView{self.grad.data() + n * out_stride, cols, 1},
                     MatView{colp, 1, cols}, gw.data(), rows, true);
      }
    }
    if (wants_grad(xn)) {
      auto& gx = xn->ensure_grad();
      for (int n = 0; n < batch; ++n) {
        double* gxn = gx.data() + n * in_stride;
        MatView wt{wn->data.data(), 1, rows};
        MatView go{self.grad.data() + n * out_stride, cols, 1};
        if (u.is_identity()) {
          detail::gemm(rows, cols, cout, wt, go, gxn, cols, true);
        } else {
          detail::gemm(rows, cols, cout, wt, go, buf.data(), cols, false);
          col2im(u, buf.data(), gxn);
        }
      }
    }
    bias_backward(self, self.inputs[2]);
  });
}

Tensor transposed_conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
                         int stride, int pad) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (ws.n != xs.c) {
    throw ShapeError("transposed_conv2d: Cin mismatch, input has " +
                     std::to_string(xs.c) + " channels but weight expects " +
                     std::to_string(ws.n));
  }
  if (ws.h < 1 || ws.w < 1) {
    throw ShapeError("transposed_conv2d: kernel size must be >= 1");
  }
  if (stride < 1) throw ShapeError("transposed_conv2d: stride must be >= 1");
  if (pad < 0) throw ShapeError("transposed_conv2d: pad must be >= 0");
  check_bias(b, ws.c, "transposed_conv2d");
  const int oh = transposed_conv_output_size(xs.h, ws.h, stride, pad);
  const int ow = transposed_conv_output_size(xs.w, ws.w, stride, pad);
  if (oh < 1 || ow < 1) {
    throw ShapeError("transposed_conv2d: non-positive output size " +
                     std::to_string(oh) + "x" + std::to_string(ow));
  }
  const Shape os{xs.n, ws.c, oh, ow};
  // The output plane plays the role of a conv2d input unrolled onto the
  // input grid.
  const Unroll u{ws.c, oh, ow, ws.h, ws.w, xs.h, xs.w, ConvGeometry{stride, pad, 1}};
  const int m = static_cast<int>(u.rows());
  const int p = static_cast<int>(u.cols());
  const int cin = xs.c;
  const std::size_t in_stride = static_cast<std::size_t>(cin) * p;
  const std::size_t out_stride = static_cast<std::size_t>(os.c) * oh * ow;

  std::vector<double> out(os.numel(), 0.0);
  std::vector<double> cols(u.rows() * u.cols());
  auto xd = x.data();
  auto wd = w.data();
  for (int n = 0; n < xs.n; ++n) {
    detail::gemm(m, p, cin, MatView{wd.data(), 1, m},
                 MatView{xd.data() + n * in_stride, p, 1}, cols.data(), p, false);
    col2im(u, cols.data(), out.data() + n * out_stride);
  }
  add_bias(out, b, os);

  return make_result(os, std::move(out), {x, w, b}, "transposed_conv2d", [u, m, p, cin, in_stride, out_stride](Node& self) {
    auto& xn = self.inputs[0];
    auto& wn = self.inputs[1];
    const bool gx_needed = wants_grad(xn);
    const bool gw_needed = wants_grad(wn);
    std::vector<double> gcols(u.rows() * u.cols());
    for (int n = 0; n < self.shape.n; ++n) {
      if (!gx_needed && !gw_needed) break;
      im2col(u, self.grad.data() + n * out_stride, gcols.data());
      if (gx_needed) {
        auto& gx = xn->ensure_grad();
        detail::gemm(cin, p, m, MatView{wn->data.data(), m, 1},
                     MatView{gcols.data(), p, 1}, gx.data() + n * in_stride, p,
                     true);
      }
      if (gw_needed) {
        auto& gw = wn->ensure_grad();
        detail::gemm(cin, m, p, MatView{xn->data.data() + n * in_stride, p, 1},
                     MatView{gcols.data(), 1, p}, gw.data(), m, true);
      }
    }
    bias_backward(self, self.inputs[2]);
  });
}

namespace {
thread_local ReluSignRecorder* active_recorder = nullptr;
}  // namespace

ReluSignRecorder::ReluSignRecorder() : previous_(active_recorder) { active_recorder = this; }
ReluSignRecorder::~ReluSignRecorder() { active_recorder = previous_; }

Tensor relu(const Tensor& x) {
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] > 0.0 ? xd[i] : 0.0;
  if (active_recorder) {
    for (double v : xd) active_recorder->signs.push_back(v > 0.0);
  }
  return make_result(x.shape(), std::move(out), {x}, "relu", [](Node& self) {
    auto& in = self.inputs[0];
    auto& g = in->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in->data[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  std::span<double> running_mean, std::span<double> running_var,
                  const BatchNormOptions& opts) {
  const Shape& s = x.shape();
  const auto channels = static_cast<std::size_t>(s.c);
  if (gamma.numel() != channels || beta.numel() != channels) {
    throw ShapeError("batch_norm: gamma/beta have " + std::to_string(gamma.numel()) +
                     "/" + std::to_string(beta.numel()) + " elements, expected C=" +
                     std::to_string(s.c));
  }
  if (running_mean.size() != channels || running_var.size() != channels) {
    throw ShapeError("batch_norm: running statistics length != C=" +
                     std::to_string(s.c));
  }
  const std::size_t p = s.plane();
  const std::size_t count = static_cast<std::size_t>(s.n) * p;
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();

  std::vector<double> xhat(xd.size());
  std::vector<double> inv_std(channels);
  std::vector<double> out(xd.size());
  for (std::size_t c = 0; c < channels; ++c) {
    double mean, var;
    if (opts.mode == NormMode::train) {
      double acc = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const double* src = xd.data() + (n * channels + c) * p;
        for (std::size_t i = 0; i < p; ++i) acc += src[i];
      }
      mean = count ? acc / static_cast<double>(count) : 0.0;
      double sq = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const double* src = xd.data() + (n * channels + c) * p;
        for (std::size_t i = 0; i < p; ++i) {
          double d = src[i] - mean;
          sq += d * d;
        }
      }
      var = count ? sq / static_cast<double>(count) : 0.0;
      double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
      running_mean[c] = (1.0 - opts.momentum) * running_mean[c] + opts.momentum * mean;
      running_var[c] = (1.0 - opts.momentum) * running_var[c] + opts.momentum * unbiased;
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    inv_std[c] = 1.0 / std::sqrt(var + opts.eps);
    for (int n = 0; n < s.n; ++n) {
      const std::size_t off = (n * channels + c) * p;
      for (std::size_t i = 0; i < p; ++i) {
        double h = (xd[off + i] - mean) * inv_std[c];
        xhat[off + i] = h;
        out[off + i] = gd[c] * h + bd[c];
      }
    }
  }

  const bool train = opts.mode == NormMode::train;
  return make_result(s, std::move(out), {x, gamma, beta}, "batch_norm",
                     [xhat = std::move(xhat), inv_std = std::move(inv_std), p, count, channels, train](Node& self) {
    auto& xn = self.inputs[0];
    auto& gn = self.inputs[1];
    auto& bn = self.inputs[2];
    const int batch = self.shape.n;
    const double m = static_cast<double>(count);
    for (std::size_t c = 0; c < channels; ++c) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (int n = 0; n < batch; ++n) {
        const std::size_t off = (n * channels + c) * p;
        for (std::size_t i = 0; i < p; ++i) {
          sum_g += self.grad[off + i];
          sum_gx += self.grad[off + i] * xhat[off + i];
        }
      }
      if (wants_grad(gn)) gn->ensure_grad()[c] += sum_gx;
      if (wants_grad(bn)) bn->ensure_grad()[c] += sum_g;
      if (!wants_grad(xn)) continue;
      auto& gx = xn->ensure_grad();
      const double k = gn->data[c] * inv_std[c];
      for (int n = 0; n < batch; ++n) {
        const std::size_t off = (n * channels + c) * p;
        for (std::size_t i = 0; i < p; ++i) {
          if (train) {
            gx[off + i] += k / m * (m * self.grad[off + i] - sum_g - xhat[off + i] * sum_gx);
          } else {
            gx[off + i] += k * self.grad[off + i];
          }
        }
      }
    }
  });
}

Tensor global_avg_pool(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.h < 1 || s.w < 1) throw ShapeError("global_avg_pool: empty spatial extent");
  const std::size_t p = s.plane();
  auto xd = x.data();
  std::vector<double> out(static_cast<std::size_t>(s.n) * s.c);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < p; ++j) acc += xd[i * p + j];
    out[i] = acc / static_cast<double>(p);
  }
  return make_result({s.n, s.c, 1, 1}, std::move(out), {x}, "global_avg_pool", [p](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    const double inv = 1.0 / static_cast<double>(p);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      for (std::size_t j = 0; j < p; ++j) g[i * p + j] += self.grad[i] * inv;
    }
  });
}

namespace {

struct LerpAxis {
  std::vector<int> lo, hi;
  std::vector<double> frac;
};

LerpAxis corner_aligned_axis(int in, int out) {
  LerpAxis a;
  a.lo.resize(out);
  a.hi.resize(out);
  a.frac.resize(out);
  for (int i = 0; i < out; ++i) {
    double src = (out > 1 && in > 1)
                     ? static_cast<double>(i) * (in - 1) / (out - 1)
                     : 0.0;
    int lo = std::min(static_cast<int>(std::floor(src)), in - 1);
    a.lo[i] = lo;
    a.hi[i] = std::min(lo + 1, in - 1);
    a.frac[i] = src - lo;
  }
  return a;
}

}  // namespace

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw ShapeError("resize_bilinear: output size must be >= 1, got " +
                     std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  const Shape& s = x.shape();
  if (s.h < 1 || s.w < 1) throw ShapeError("resize_bilinear: empty input");
  const LerpAxis ay = corner_aligned_axis(s.h, out_h);
  const LerpAxis ax = corner_aligned_axis(s.w, out_w);
  const Shape os{s.n, s.c, out_h, out_w};
  auto xd = x.data();
  std::vector<double> out(os.numel());
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const double* src = xd.data() + pl * s.plane();
    double* dst = out.data() + pl * os.plane();
    for (int i = 0; i < out_h; ++i) {
      const double* r0 = src + static_cast<std::size_t>(ay.lo[i]) * s.w;
      const double* r1 = src + static_cast<std::size_t>(ay.hi[i]) * s.w;
      const double fy = ay.frac[i];
      for (int j = 0; j < out_w; ++j) {
        const double fx = ax.frac[j];
        double top = r0[ax.lo[j]] + fx * (r0[ax.hi[j]] - r0[ax.lo[j]]);
        double bot = r1[ax.lo[j]] + fx * (r1[ax.hi[j]] - r1[ax.lo[j]]);
        dst[static_cast<std::size_t>(i) * out_w + j] = top + fy * (bot - top);
      }
    }
  }
  return make_result(os, std::move(out), {x}, "resize_bilinear", [ay, ax, planes](Node& self) {
    auto& in = self.inputs[0];
    auto& g = in->ensure_grad();
    const Shape& is = in->shape;
    const int oh = self.shape.h, ow = self.shape.w;
    for (std::size_t pl = 0; pl < planes; ++pl) {
      double* dst = g.data() + pl * is.plane();
      const double* go = self.grad.data() + pl * self.shape.plane();
      for (int i = 0; i < oh; ++i) {
        const double fy = ay.frac[i];
        double* r0 = dst + static_cast<std::size_t>(ay.lo[i]) * is.w;
        double* r1 = dst + static_cast<std::size_t>(ay.hi[i]) * is.w;
        for (int j = 0; j < ow; ++j) {
          const double fx = ax.frac[j];
          const double v = go[static_cast<std::size_t>(i) * ow + j];
          r0[ax.lo[j]] += v * (1.0 - fy) * (1.0 - fx);
          r0[ax.hi[j]] += v * (1.0 - fy) * fx;
          r1[ax.lo[j]] += v * fy * (1.0 - fx);
          r1[ax.hi[j]] += v * fy * fx;
        }
      }
    }
  });
}

Tensor concat_channels(std::span<const Tensor> xs) {
  if (xs.empty()) throw ShapeError("concat_channels: empty input list");
  const Shape& s0 = xs[0].shape();
  int channels = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Shape& s = xs[i].shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w) {
      throw ShapeError("concat_channels: tensor " + std::to_string(i) + " has shape " +
                       s.str() + ", incompatible with tensor 0 " + s0.str());
    }
    channels += s.c;
  }
  const Shape os{s0.n, channels, s0.h, s0.w};
  const std::size_t p = os.plane();
  std::vector<double> out(os.numel());
  std::vector<int> offsets;
  int off = 0;
  for (const auto& t : xs) {
    offsets.push_back(off);
    auto d = t.data();
    const std::size_t block = static_cast<std::size_t>(t.shape().c) * p;
    for (int n = 0; n < os.n; ++n) {
      std::copy_n(d.data() + n * block, block,
                  out.data() + (static_cast<std::size_t>(n) * channels + off) * p);
    }
    off += t.shape().c;
  }
  std::vector<Tensor> inputs(xs.begin(), xs.end());
  return make_result(os, std::move(out), std::move(inputs), "concat_channels", [offsets, p](Node& self) {
    const int channels = self.shape.c;
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      auto& in = self.inputs[k];
      if (!wants_grad(in)) continue;
      auto& g = in->ensure_grad();
      const std::size_t block = static_cast<std::size_t>(in->shape.c) * p;
      for (int n = 0; n < self.shape.n; ++n) {
        const double* src =
            self.grad.data() + (static_cast<std::size_t>(n) * channels + offsets[k]) * p;
        double* dst = g.data() + n * block;
        for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
      }
    }
  });
}

Tensor concat_channels(std::initializer_list<Tensor> xs) {
  return concat_channels(std::span<const Tensor>(xs.begin(), xs.size()));
}

Tensor slice_channels(const Tensor& x, int begin, int end) {
  const Shape& s = x.shape();
  if (begin < 0 || end > s.c || begin >= end) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") invalid for C=" + std::to_string(s.c));
  }
  const Shape os{s.n, end - begin, s.h, s.w};
  const std::size_t p = s.plane();
  const std::size_t block = static_cast<std::size_t>(os.c) * p;
  auto xd = x.data();
  std::vector<double> out(os.numel());
  for (int n = 0; n < s.n; ++n) {
    std::copy_n(xd.data() + (static_cast<std::size_t>(n) * s.c + begin) * p, block,
                out.data() + n * block);
  }
  return make_result(os, std::move(out), {x}, "slice_channels", [begin, p, block](Node& self) {
    auto& in = self.inputs[0];
    auto& g = in->ensure_grad();
    for (int n = 0; n < self.shape.n; ++n) {
      double* dst = g.data() + (static_cast<std::size_t>(n) * in->shape.c + begin) * p;
      const double* src = self.grad.data() + n * block;
      for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  return make_result(a.shape(), std::move(out), {a, b}, "add", [](Node& self) {
    for (auto& in : self.inputs) {
      if (!wants_grad(in)) continue;
      auto& g = in->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return make_result(a.shape(), std::move(out), {a, b}, "mul", [](Node& self) {
    auto& an = self.inputs[0];
    auto& bn = self.inputs[1];
    if (wants_grad(an)) {
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->data[i];
    }
    if (wants_grad(bn)) {
      auto& g = bn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->data[i];
    }
  });
}

Tensor scale(const Tensor& x, double s) {
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * s;
  return make_result(x.shape(), std::move(out), {x}, "scale", [s](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_result({1, 1, 1, 1}, {acc}, {x}, "sum", [](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mse_masked(const Tensor& pred, const Tensor& target, const Tensor& mask) {
  require_same_shape(pred, target, "mse_masked");
  const Shape& s = pred.shape();
  const Shape& ms = mask.shape();
  if (ms.n != s.n || ms.c != s.c || ms.h != 1 || ms.w != 1) {
    throw ShapeError("mse_masked: mask shape " + ms.str() + " must be [" +
                     std::to_string(s.n) + "," + std::to_string(s.c) + ",1,1]");
  }
  const std::size_t p = s.plane();
  auto pd = pred.data();
  auto td = target.data();
  auto md = mask.data();
  double total = 0.0;
  for (std::size_t nc = 0; nc < md.size(); ++nc) {
    if (md[nc] == 0.0) continue;
    double acc = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
      double d = pd[nc * p + i] - td[nc * p + i];
      acc += d * d;
    }
    total += md[nc] * (acc / static_cast<double>(p));
  }
  const double loss = 0.5 * total / static_cast<double>(s.n);
  return make_result({1, 1, 1, 1}, {loss}, {pred, target, mask}, "mse_masked", [p](Node& self) {
    auto& pn = self.inputs[0];
    auto& tn = self.inputs[1];
    auto& mn = self.inputs[2];
    const double k = self.grad[0] / (static_cast<double>(pn->shape.n) * static_cast<double>(p));
    const bool gp = wants_grad(pn), gt = wants_grad(tn);
    for (std::size_t nc = 0; nc < mn->data.size(); ++nc) {
      const double m = mn->data[nc];
      if (m == 0.0) continue;
      for (std::size_t i = 0; i < p; ++i) {
        double d = k * m * (pn->data[nc * p + i] - tn->data[nc * p + i]);
        if (gp) pn->ensure_grad()[nc * p + i] += d;
        if (gt) tn->ensure_grad()[nc * p + i] -= d;
      }
    }
  });
}

}  // namespace csanet
