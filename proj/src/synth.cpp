#include "csanet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace csanet {

std::string to_string(Difficulty d) { return d == Difficulty::easy ? "easy" : "occluded"; }

Difficulty parse_difficulty(const std::string& s) {
  if (s == "easy") return Difficulty::easy;
  if (s == "occluded") return Difficulty::occluded;
  throw Error("unknown difficulty '" + s + "' (expected easy or occluded)");
}

std::string to_string(Split s) { return s == Split::train ? "train" : "val"; }

const SkeletonRanges& default_ranges() {
  static const SkeletonRanges r;
  return r;
}

namespace {

struct Vec {
  double x, y;
};
Vec operator+(Vec a, Vec b) { return {a.x + b.x, a.y + b.y}; }
Vec operator-(Vec a, Vec b) { return {a.x - b.x, a.y - b.y}; }
Vec operator*(double s, Vec a) { return {s * a.x, s * a.y}; }
double dot(Vec a, Vec b) { return a.x * b.x + a.y * b.y; }

double rad(double deg) { return deg * std::numbers::pi / 180.0; }

Point to_point(Vec v) { return {v.x, v.y}; }
Vec to_vec(Point p) { return {p.x, p.y}; }

// Lengths in units of height/170.
constexpr double kTorso = 50.0;
constexpr double kHipHalf = 12.0;
constexpr double kShoulderHalf = 19.0;
constexpr double kNeckToHead = 17.0;
constexpr double kHeadRadius = 11.0;
constexpr double kUpperArm = 29.0;
constexpr double kForearm = 26.0;
constexpr double kThigh = 40.0;
constexpr double kShin = 38.0;

using Color = std::array<double, 3>;

struct Palette {
  Color background, torso, head, upper_arm, forearm, thigh, shin, extremity, nose, eye, ear;
};

Color jitter(Rng& rng, Color c) {
  for (double& v : c) v = std::clamp(v + rng.uniform(-0.08, 0.08), 0.0, 1.0);
  return c;
}

class Canvas {
 public:
  explicit Canvas(Image& img) : img_(img) {}

  void blend(int y, int x, double cov, const Color& col) {
    if (cov <= 0.0) return;
    cov = std::min(cov, 1.0);
    for (int c = 0; c < 3; ++c) {
      double& v = img_.at(c, y, x);
      v = v * (1.0 - cov) + col[c] * cov;
    }
  }

  template <typename Coverage>
  void fill(double x0, double y0, double x1, double y1, const Color& col, Coverage cov) {
    const int xa = std::max(0, static_cast<int>(std::floor(x0)));
    const int ya = std::max(0, static_cast<int>(std::floor(y0)));
    const int xb = std::min(img_.width - 1, static_cast<int>(std::ceil(x1)));
    const int yb = std::min(img_.height - 1, static_cast<int>(std::ceil(y1)));
    for (int y = ya; y <= yb; ++y) {
      for (int x = xa; x <= xb; ++x) blend(y, x, cov(Vec{double(x), double(y)}), col);
    }
  }

  void capsule(Vec p, Vec q, double r, const Color& col) {
    const Vec d = q - p;
    const double len2 = dot(d, d);
    fill(std::min(p.x, q.x) - r - 1, std::min(p.y, q.y) - r - 1, std::max(p.x, q.x) + r + 1,
         std::max(p.y, q.y) + r + 1, col, [&](Vec s) {
           double t = len2 > 0.0 ? std::clamp(dot(s - p, d) / len2, 0.0, 1.0) : 0.0;
           Vec e = s - (p + t * d);
           return r + 0.5 - std::sqrt(dot(e, e));
         });
  }

  void disc(Vec c, double r, const Color& col) { capsule(c, c, r, col); }

  // Convex polygon, vertices in either winding.
  void polygon(const std::vector<Vec>& v, const Color& col) {
    double x0 = v[0].x, x1 = v[0].x, y0 = v[0].y, y1 = v[0].y;
    Vec centre{0, 0};
    for (Vec p : v) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
      centre = centre + (1.0 / v.size()) * p;
    }
    fill(x0 - 1, y0 - 1, x1 + 1, y1 + 1, col, [&](Vec s) {
      double inside = 1e9;
      for (std::size_t i = 0; i < v.size(); ++i) {
        Vec a = v[i], b = v[(i + 1) % v.size()];
        Vec nrm{b.y - a.y, a.x - b.x};
        double len = std::sqrt(dot(nrm, nrm));
        if (len == 0.0) continue;
        nrm = (1.0 / len) * nrm;
        if (dot(centre - a, nrm) < 0) nrm = -1.0 * nrm;
        inside = std::min(inside, dot(s - a, nrm));
      }
      return inside + 0.5;
    });
  }

  void rect(const Box& b, const Color& col) {
    fill(b.x, b.y, b.x + b.w, b.y + b.h, col, [&](Vec s) {
      double dx = std::min(s.x - b.x, b.x + b.w - s.x);
      double dy = std::min(s.y - b.y, b.y + b.h - s.y);
      return std::min(dx, dy) + 0.5;
    });
  }

 private:
  Image& img_;
};

bool inside(const Box& b, Point p) {
  return p.x >= b.x && p.x <= b.x + b.w && p.y >= b.y && p.y <= b.y + b.h;
}

// Box around the n joints nearest to joint j, padded; returns how many
// joints it covers.
int occluder_for(const PersonInstance& person, int j, int n, double pad, Box& out) {
  const auto& c = person.skeleton.coords;
  std::array<int, kNumKeypoints> order;
  for (int i = 0; i < kNumKeypoints; ++i) order[i] = i;
  auto dist2 = [&](int i) {
    double dx = c[i].x - c[j].x, dy = c[i].y - c[j].y;
    return dx * dx + dy * dy;
  };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return dist2(a) < dist2(b); });
  double x0 = c[j].x, x1 = c[j].x, y0 = c[j].y, y1 = c[j].y;
  for (int k = 0; k < n; ++k) {
    x0 = std::min(x0, c[order[k]].x);
    x1 = std::max(x1, c[order[k]].x);
    y0 = std::min(y0, c[order[k]].y);
    y1 = std::max(y1, c[order[k]].y);
  }
  out = {x0 - pad, y0 - pad, x1 - x0 + 2 * pad, y1 - y0 + 2 * pad};
  int covered = 0;
  for (const auto& p : c) covered += inside(out, p) ? 1 : 0;
  return covered;
}

}  // namespace

PersonInstance make_person(std::uint64_t seed, Difficulty difficulty, const SkeletonRanges& ranges) {
  Rng rng(seed);
  PersonInstance p;
  p.height = rng.uniform(150.0, 190.0);
  const double u = p.height / 170.0;
  p.bone_thickness = rng.uniform(7.0, 11.0) * u;

  PoseAngles& a = p.angles;
  auto draw = [&](const AngleRange& r) { return rng.uniform(r.lo, r.hi); };
  a.torso_tilt = draw(ranges.torso_tilt);
  a.head_tilt = draw(ranges.head_tilt);
  for (int s = 0; s < 2; ++s) {
    a.shoulder[s] = draw(ranges.shoulder);
    a.elbow[s] = draw(ranges.elbow);
    a.hip[s] = draw(ranges.hip);
    a.knee[s] = draw(ranges.knee);
  }

  const double reach = (kThigh + kShin) * u;
  const Vec pelvis{rng.uniform(kWorldWidth / 2.0 - 16.0, kWorldWidth / 2.0 + 16.0),
                   rng.uniform(12.0 + (kTorso + kNeckToHead + kHeadRadius) * u,
                               kWorldHeight - 12.0 - reach)};
  const double tt = rad(a.torso_tilt);
  const Vec up{std::sin(tt), -std::cos(tt)};
  const Vec left{std::cos(tt), std::sin(tt)};  // toward the figure's left, image right
  const Vec neck = pelvis + kTorso * u * up;
  const double ht = rad(a.torso_tilt + a.head_tilt);
  const Vec hup{std::sin(ht), -std::cos(ht)};
  const Vec hleft{std::cos(ht), std::sin(ht)};
  const Vec head = neck + kNeckToHead * u * hup;

  auto& k = p.skeleton.coords;
  k[0] = to_point(head + (-1.0 * u) * hup);
  k[1] = to_point(head + 3.0 * u * hup + 4.0 * u * hleft);
  k[2] = to_point(head + 3.0 * u * hup + (-4.0 * u) * hleft);
  k[3] = to_point(head + 1.0 * u * hup + 10.0 * u * hleft);
  k[4] = to_point(head + 1.0 * u * hup + (-10.0 * u) * hleft);

  const Vec down = -1.0 * up;
  for (int s = 0; s < 2; ++s) {
    const double side = s == 0 ? 1.0 : -1.0;
    const Vec out = side * left;
    auto limb_dir = [&](double deg) { return std::cos(rad(deg)) * down + std::sin(rad(deg)) * out; };
    const Vec shoulder = neck + side * kShoulderHalf * u * left;
    const Vec elbow = shoulder + kUpperArm * u * limb_dir(a.shoulder[s]);
    const Vec wrist = elbow + kForearm * u * limb_dir(a.shoulder[s] + a.elbow[s]);
    const Vec hip = pelvis + side * kHipHalf * u * left;
    const Vec knee = hip + kThigh * u * limb_dir(a.hip[s]);
    const Vec ankle = knee + kShin * u * limb_dir(a.hip[s] + a.knee[s]);
    k[5 + s] = to_point(shoulder);
    k[7 + s] = to_point(elbow);
    k[9 + s] = to_point(wrist);
    k[11 + s] = to_point(hip);
    k[13 + s] = to_point(knee);
    k[15 + s] = to_point(ankle);
  }
  // Raised arms can leave the canvas; shift the figure back inside with a margin.
  {
    const double margin = 12.0 * u;
    double x0 = k[0].x, x1 = k[0].x, y0 = head.y - kHeadRadius * u * 1.2, y1 = k[0].y;
    for (const auto& q : k) {
      x0 = std::min(x0, q.x);
      x1 = std::max(x1, q.x);
      y0 = std::min(y0, q.y);
      y1 = std::max(y1, q.y);
    }
    auto shift = [&](double lo, double hi, double limit) {
      if (lo < margin) return margin - lo;
      if (hi > limit - margin) return std::max(limit - margin - hi, margin - lo);
      return 0.0;
    };
    const double dx = shift(x0, x1, kWorldWidth - 1.0), dy = shift(y0, y1, kWorldHeight - 1.0);
    for (auto& q : k) q = {q.x + dx, q.y + dy};
  }
  p.skeleton.labeled.fill(true);
  p.skeleton.frame = Frame::crop;

  if (difficulty == Difficulty::occluded) {
    const int target = 1 + static_cast<int>(rng.below(4));
    const int joint = static_cast<int>(rng.below(kNumKeypoints));
    const double pad = rng.uniform(3.0, 8.0) * u;
    Box box;
    int n = target;
    // Shrink the group until the padded box covers at most four joints.
    while (occluder_for(p, joint, n, pad, box) > 4 && n > 1) --n;
    if (occluder_for(p, joint, n, pad, box) > 4) occluder_for(p, joint, 1, 0.5, box);
    p.occluder = box;
    for (int i = 0; i < kNumKeypoints; ++i) {
      if (inside(box, k[i])) p.skeleton.labeled[i] = false;
    }
  }
  return p;
}

SampleRecord render_sample(std::uint64_t seed, Difficulty difficulty) {
  PersonInstance person = make_person(seed, difficulty);
  // Appearance draws use their own stream so geometry is independent of them.
  Rng rng(splitmix64(seed ^ 0x5eedc0101ULL));
  Palette pal;
  pal.background = {rng.uniform(0.05, 0.35), 0, 0};
  pal.background[1] = std::clamp(pal.background[0] + rng.uniform(-0.05, 0.05), 0.0, 1.0);
  pal.background[2] = std::clamp(pal.background[0] + rng.uniform(-0.05, 0.05), 0.0, 1.0);
  pal.torso = jitter(rng, {0.85, 0.75, 0.30});
  pal.head = jitter(rng, {0.95, 0.80, 0.65});
  pal.upper_arm = jitter(rng, {0.20, 0.55, 0.95});
  pal.forearm = jitter(rng, {0.30, 0.90, 0.80});
  pal.thigh = jitter(rng, {0.85, 0.25, 0.30});
  pal.shin = jitter(rng, {0.95, 0.55, 0.25});
  pal.extremity = {0.97, 0.97, 0.97};
  pal.nose = {0.90, 0.10, 0.10};
  pal.eye = {0.02, 0.02, 0.02};
  pal.ear = {0.55, 0.30, 0.10};

  Image img(3, kWorldHeight, kWorldWidth);
  const double gx = rng.uniform(-0.1, 0.1), gy = rng.uniform(-0.1, 0.1);
  for (int y = 0; y < kWorldHeight; ++y) {
    for (int x = 0; x < kWorldWidth; ++x) {
      double shade = gx * (x / double(kWorldWidth) - 0.5) + gy * (y / double(kWorldHeight) - 0.5) +
                     rng.uniform(-0.03, 0.03);
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = std::clamp(pal.background[c] + shade, 0.0, 1.0);
    }
  }

  Canvas cv(img);
  const auto& k = person.skeleton.coords;
  auto v = [&](int i) { return to_vec(k[i]); };
  const double r = person.bone_thickness / 2.0;
  const double u = person.height / 170.0;
  for (int s = 0; s < 2; ++s) {
    cv.capsule(v(11 + s), v(13 + s), r * 1.15, pal.thigh);
    cv.capsule(v(13 + s), v(15 + s), r, pal.shin);
    cv.disc(v(15 + s), r * 1.1, pal.extremity);
  }
  cv.polygon({v(5), v(6), v(12), v(11)}, pal.torso);
  for (int s = 0; s < 2; ++s) {
    cv.capsule(v(5 + s), v(7 + s), r, pal.upper_arm);
    cv.capsule(v(7 + s), v(9 + s), r * 0.85, pal.forearm);
    cv.disc(v(9 + s), r * 0.95, pal.extremity);
  }
  const Vec neck = 0.5 * (v(5) + v(6));
  // The head circle is centred one unit above the nose along the head axis.
  const Vec eyes_mid = 0.5 * (v(1) + v(2));
  const Vec axis = eyes_mid - v(0);
  const double axis_len = std::sqrt(dot(axis, axis));
  const Vec hup = axis_len > 0 ? (1.0 / axis_len) * axis : Vec{0, -1};
  cv.capsule(neck, v(0), r * 0.8, pal.head);
  cv.disc(v(0) + u * hup, kHeadRadius * u, pal.head);
  cv.disc(v(3), 2.2 * u, pal.ear);
  cv.disc(v(4), 2.2 * u, pal.ear);
  cv.disc(v(1), 1.6 * u, pal.eye);
  cv.disc(v(2), 1.6 * u, pal.eye);
  cv.disc(v(0), 1.8 * u, pal.nose);
  if (person.occluder) {
    const double g = rng.uniform(0.3, 0.7);
    cv.rect(*person.occluder, {g, g, g});
  }
  img.quantize();

  SampleRecord rec;
  rec.image = std::move(img);
  rec.keypoints = person.skeleton;
  rec.seed = seed;
  rec.difficulty = difficulty;
  double x0 = 1e9, x1 = -1e9, y0 = 1e9, y1 = -1e9;
  for (const auto& p : k) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  const Vec hc = v(0) + u * hup;
  y0 = std::min(y0, hc.y - kHeadRadius * u);
  x0 -= r;
  x1 += r;
  y1 += r;
  rec.box = {x0, y0, x1 - x0, y1 - y0};
  rec.area = rec.box.area();
  return rec;
}

Affine2 crop_affine(const Box& box, int out_h, int out_w) {
  if (!(box.w > 0.0) || !(box.h > 0.0)) throw Error("crop: degenerate box (w or h <= 0)");
  if (out_h < 1 || out_w < 1 || out_h * 3 != out_w * 4) {
    throw ShapeError("crop: output size " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                     " is not 4:3 (height:width)");
  }
  const double cx = box.x + box.w / 2.0, cy = box.y + box.h / 2.0;
  double w = box.w, h = box.h;
  if (w * 4.0 > h * 3.0) {
    h = w * 4.0 / 3.0;
  } else {
    w = h * 3.0 / 4.0;
  }
  const double scale = out_h / h;
  return Affine2::scaling(scale).after(Affine2::translation(-(cx - w / 2.0), -(cy - h / 2.0)));
}

void drop_outside(KeypointSet& kps, int h, int w) {
  for (int i = 0; i < kNumKeypoints; ++i) {
    const Point p = kps.coords[i];
    if (!(p.x >= 0.0 && p.x <= w - 1.0 && p.y >= 0.0 && p.y <= h - 1.0)) kps.labeled[i] = false;
  }
}

namespace {

Box transform_box(const Box& b, const Affine2& t) {
  const Point pts[4] = {{b.x, b.y}, {b.x + b.w, b.y}, {b.x, b.y + b.h}, {b.x + b.w, b.y + b.h}};
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (Point p : pts) {
    Point q = t.apply(p);
    x0 = std::min(x0, q.x);
    x1 = std::max(x1, q.x);
    y0 = std::min(y0, q.y);
    y1 = std::max(y1, q.y);
  }
  return {x0, y0, x1 - x0, y1 - y0};
}

SampleRecord warp_record(const SampleRecord& s, const Affine2& t, int out_h, int out_w) {
  SampleRecord r;
  r.image = warp_affine(s.image, t, out_h, out_w);
  r.keypoints = transform_keypoints(s.keypoints, t);
  drop_outside(r.keypoints, out_h, out_w);
  r.box = transform_box(s.box, t);
  r.area = s.area * std::abs(t.determinant());
  r.seed = s.seed;
  r.difficulty = s.difficulty;
  r.augment = s.augment;
  return r;
}

}  // namespace

SampleRecord crop_to_aspect(const SampleRecord& sample, const Box& box, int out_h, int out_w) {
  if (sample.keypoints.frame != Frame::crop) throw Error("crop_to_aspect: keypoints must be in image frame");
  return warp_record(sample, crop_affine(box, out_h, out_w), out_h, out_w);
}

AugmentParams draw_augment(Rng& rng, const AugmentRanges& r) {
  AugmentParams p;
  p.rotation_deg = rng.uniform(-r.rot_deg, r.rot_deg);
  p.scale = rng.uniform(r.scale_lo, r.scale_hi);
  p.flip = rng.bernoulli(r.flip_p);
  return p;
}

Affine2 augment_affine(const AugmentParams& p, int h, int w) {
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  Affine2 t = Affine2::translation(cx, cy)
                  .after(Affine2::scaling(p.scale))
                  .after(Affine2::rotation(p.rotation_deg))
                  .after(Affine2::translation(-cx, -cy));
  if (p.flip) t = Affine2{-1, 0, w - 1.0, 0, 1, 0}.after(t);
  return t;
}

SampleRecord apply_augment(const SampleRecord& sample, const AugmentParams& p,
                           const FlipPairs& pairs) {
  const int h = sample.image.height, w = sample.image.width;
  SampleRecord r = warp_record(sample, augment_affine(p, h, w), h, w);
  if (p.flip) r.keypoints = pairs.swap(r.keypoints);
  r.augment = p;
  return r;
}

SampleRecord augment(const SampleRecord& sample, Rng& rng, const FlipPairs& pairs,
                     const AugmentRanges& r) {
  return apply_augment(sample, draw_augment(rng, r), pairs);
}

std::uint64_t sample_seed(std::uint64_t seed, int index, Split split) {
  return splitmix64(seed) + 2ULL * static_cast<std::uint64_t>(index) +
         static_cast<std::uint64_t>(split);
}

namespace {

// Loose detector-style box: the person box grown by 8% per side.
Box padded(const Box& b) {
  const double px = 0.08 * b.w, py = 0.08 * b.h;
  return {b.x - px, b.y - py, b.w + 2 * px, b.h + 2 * py};
}

}  // namespace

std::string manifest_line(int index, const SampleRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%06d seed=%llu image=images/%06d.ppm annotation=annotations/%06d.txt rot=%.17g scale=%.17g flip=%d",
                index, static_cast<unsigned long long>(r.seed), index, index, r.augment.rotation_deg,
                r.augment.scale, r.augment.flip ? 1 : 0);
  return buf;
}

Dataset make_dataset(int n, std::uint64_t seed, Split split, const DatasetOptions& opts) {
  if (n < 1) throw Error("make_dataset: n must be >= 1");
  Dataset ds;
  ds.samples.reserve(n);
  const FlipPairs pairs = FlipPairs::standard();
  for (int i = 0; i < n; ++i) {
    const std::uint64_t s = sample_seed(seed, i, split);
    SampleRecord world = render_sample(s, opts.difficulty);
    SampleRecord rec = crop_to_aspect(world, padded(world.box), opts.input_h, opts.input_w);
    if (opts.augment) {
      Rng rng(splitmix64(s));
      rec = augment(rec, rng, pairs);
    }
    rec.image.quantize();
    ds.manifest.push_back(manifest_line(i, rec));
    ds.samples.push_back(std::move(rec));
  }
  return ds;
}

std::string format_annotation(const SampleRecord& r) {
  std::ostringstream os;
  char buf[160];
  os << "seed " << r.seed << "\n";
  os << "difficulty " << to_string(r.difficulty) << "\n";
  os << "size " << r.image.height << " " << r.image.width << "\n";
  std::snprintf(buf, sizeof buf, "box %.17g %.17g %.17g %.17g\n", r.box.x, r.box.y, r.box.w, r.box.h);
  os << buf;
  std::snprintf(buf, sizeof buf, "area %.17g\n", r.area);
  os << buf;
  std::snprintf(buf, sizeof buf, "augment %.17g %.17g %d\n", r.augment.rotation_deg, r.augment.scale,
                r.augment.flip ? 1 : 0);
  os << buf;
  for (int i = 0; i < kNumKeypoints; ++i) {
    std::snprintf(buf, sizeof buf, "kp %d %.17g %.17g %d\n", i, r.keypoints.coords[i].x,
                  r.keypoints.coords[i].y, r.keypoints.labeled[i] ? 1 : 0);
    os << buf;
  }
  return os.str();
}

void parse_annotation(const std::string& text, SampleRecord& r) {
  std::istringstream is(text);
  std::string line;
  int kps_seen = 0;
  r.keypoints = KeypointSet{};
  r.keypoints.frame = Frame::crop;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "seed") {
      ls >> r.seed;
    } else if (key == "difficulty") {
      std::string d;
      ls >> d;
      r.difficulty = parse_difficulty(d);
    } else if (key == "size") {
      int h, w;
      ls >> h >> w;
    } else if (key == "box") {
      ls >> r.box.x >> r.box.y >> r.box.w >> r.box.h;
    } else if (key == "area") {
      ls >> r.area;
    } else if (key == "augment") {
      int f;
      ls >> r.augment.rotation_deg >> r.augment.scale >> f;
      r.augment.flip = f != 0;
    } else if (key == "kp") {
      int i, flag;
      double x, y;
      ls >> i >> x >> y >> flag;
      if (!ls || i < 0 || i >= kNumKeypoints) throw Error("malformed keypoint line: " + line);
      r.keypoints.coords[i] = {x, y};
      r.keypoints.labeled[i] = flag != 0;
      ++kps_seen;
    } else {
      throw Error("unknown annotation field '" + key + "'");
    }
    if (!ls) throw Error("malformed annotation line: " + line);
  }
  if (kps_seen != kNumKeypoints) throw Error("annotation must list 17 keypoints");
}

namespace {

std::string index_name(int i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d.%s", i, ext);
  return buf;
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  fs::create_directories(dir / "annotations", ec);
  if (!fs::is_directory(dir / "images") || !fs::is_directory(dir / "annotations")) {
    throw Error("cannot create dataset directory " + dir.string());
  }
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw Error("cannot write " + (dir / "manifest.txt").string());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const int idx = static_cast<int>(i);
    write_ppm(dir / "images" / index_name(idx, "ppm"), ds.samples[i].image);
    std::ofstream ann(dir / "annotations" / index_name(idx, "txt"));
    if (!ann) throw Error("cannot write annotation in " + dir.string());
    ann << format_annotation(ds.samples[i]);
    manifest << (i < ds.manifest.size() ? ds.manifest[i] : manifest_line(idx, ds.samples[i])) << "\n";
  }
  if (!manifest) throw Error("write failed for manifest in " + dir.string());
}

Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw Error("no manifest.txt in " + dir.string());
  Dataset ds;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    const int idx = static_cast<int>(ds.samples.size());
    SampleRecord r;
    r.image = read_ppm(dir / "images" / index_name(idx, "ppm"));
    std::ifstream ann(dir / "annotations" / index_name(idx, "txt"));
    if (!ann) throw Error("missing annotation " + index_name(idx, "txt") + " in " + dir.string());
    std::stringstream buf;
    buf << ann.rdbuf();
    parse_annotation(buf.str(), r);
    ds.manifest.push_back(line);
    ds.samples.push_back(std::move(r));
  }
  if (ds.samples.empty()) throw Error("dataset " + dir.string() + " is empty");
  return ds;
}

}  // namespace csanet
