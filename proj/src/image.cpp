#include "csanet/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

namespace csanet {

void Image::quantize() {
  for (double& v : data) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

Affine2 Affine2::inverse() const {
  const double det = determinant();
  if (det == 0.0 || !std::isfinite(det)) throw Error("affine transform is not invertible");
  Affine2 r;
  r.a = d / det;
  r.b = -b / det;
  r.c = -c / det;
  r.d = a / det;
  r.tx = -(r.a * tx + r.b * ty);
  r.ty = -(r.c * tx + r.d * ty);
  return r;
}

Affine2 Affine2::after(const Affine2& f) const {
  Affine2 r;
  r.a = a * f.a + b * f.c;
  r.b = a * f.b + b * f.d;
  r.c = c * f.a + d * f.c;
  r.d = c * f.b + d * f.d;
  r.tx = a * f.tx + b * f.ty + tx;
  r.ty = c * f.tx + d * f.ty + ty;
  return r;
}

Affine2 Affine2::rotation(double deg) {
  // Exact values at multiples of 90 degrees keep quarter turns lossless.
  double cs, sn;
  const double q = deg / 90.0;
  if (q == std::floor(q)) {
    static const double table[4][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    const int i = ((static_cast<int>(q) % 4) + 4) % 4;
    cs = table[i][0];
    sn = table[i][1];
  } else {
    const double r = deg * std::numbers::pi / 180.0;
    cs = std::cos(r);
    sn = std::sin(r);
  }
  return {cs, -sn, 0.0, sn, cs, 0.0};
}

Image warp_affine(const Image& src, const Affine2& fwd, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ShapeError("warp_affine: empty output size");
  const Affine2 inv = fwd.inverse();
  Image out(src.channels, out_h, out_w);
  const std::size_t in_plane = static_cast<std::size_t>(src.height) * src.width;
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const Point p = inv.apply({static_cast<double>(x), static_cast<double>(y)});
      const double fx = std::floor(p.x), fy = std::floor(p.y);
      if (fx < -1.0 || fy < -1.0 || fx >= src.width || fy >= src.height) continue;
      const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
      const double ax = p.x - fx, ay = p.y - fy;
      const double wts[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
      const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
      const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
      for (int c = 0; c < src.channels; ++c) {
        const double* plane = src.data.data() + c * in_plane;
        double v = 0.0;
        for (int k = 0; k < 4; ++k) {
          if (xs[k] < 0 || ys[k] < 0 || xs[k] >= src.width || ys[k] >= src.height) continue;
          if (wts[k] == 0.0) continue;
          v += wts[k] * plane[static_cast<std::size_t>(ys[k]) * src.width + xs[k]];
        }
        out.data[c * out_plane + static_cast<std::size_t>(y) * out_w + x] = v;
      }
    }
  }
  return out;
}

KeypointSet transform_keypoints(const KeypointSet& kps, const Affine2& t) {
  KeypointSet out = kps;
  for (auto& p : out.coords) p = t.apply(p);
  return out;
}

Tensor images_to_tensor(std::span<const Image* const> images) {
  if (images.empty()) throw ShapeError("images_to_tensor: empty batch");
  const Image& f = *images[0];
  const Shape s{static_cast<int>(images.size()), f.channels, f.height, f.width};
  std::vector<double> data;
  data.reserve(s.numel());
  for (const Image* img : images) {
    if (img->channels != f.channels || img->height != f.height || img->width != f.width) {
      throw ShapeError("images_to_tensor: images differ in size");
    }
    data.insert(data.end(), img->data.begin(), img->data.end());
  }
  return Tensor::from(s, std::move(data));
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 3) throw Error("write_ppm: image must have 3 channels");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  std::vector<unsigned char> bytes(plane * 3);
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      double v = std::clamp(img.data[c * plane + i], 0.0, 1.0);
      bytes[i * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
  }
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("write failed for " + path.string());
}

namespace {

int read_header_int(std::istream& in) {
  int ch;
  while ((ch = in.peek()) != EOF) {
    if (std::isspace(ch)) {
      in.get();
    } else if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
    } else {
      break;
    }
  }
  int v = -1;
  in >> v;
  if (!in) throw Error("malformed PPM header");
  return v;
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open image " + path.string());
  std::string magic;
  f >> magic;
  if (magic != "P6") throw Error(path.string() + ": not a binary PPM (P6) file");
  const int w = read_header_int(f);
  const int h = read_header_int(f);
  const int maxval = read_header_int(f);
  if (w < 1 || h < 1 || maxval < 1 || maxval > 255) {
    throw Error(path.string() + ": unsupported PPM dimensions or depth");
  }
  f.get();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<unsigned char> bytes(plane * 3);
  f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (f.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw Error(path.string() + ": truncated PPM data");
  }
  Image img(3, h, w);
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) img.data[c * plane + i] = bytes[i * 3 + c] / static_cast<double>(maxval);
  }
  return img;
}

}  // namespace csanet
