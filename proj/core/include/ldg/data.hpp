#pragma once

// Bi-temporal sample plumbing: synthetic pair generator, directory loader
// (A/*.png, B/*.png, label/*.png), and evaluation-time perturbations.

#include <filesystem>
#include <map>
#include <set>

#include "ldg/common.hpp"
#include "ldg/image_io.hpp"

namespace ldg {

struct Sample {
  ImageF pre, post;          // [3,H,W], values in [0,1]
  std::vector<float> mask;   // H*W, values in {0,1}
  std::string id;
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t size() const { return samples.size(); }
};

namespace detail {

struct SynthObject {
  double cx, cy, a, b, angle;  // center, half-extents, rotation
  bool ellipse;
  float color[3];
};

inline bool object_hit(const SynthObject& o, double x, double y) {
  double dx = x - o.cx, dy = y - o.cy;
  double c = std::cos(o.angle), s = std::sin(o.angle);
  double u = c * dx + s * dy, v = -s * dx + c * dy;
  if (o.ellipse) return (u / o.a) * (u / o.a) + (v / o.b) * (v / o.b) <= 1.0;
  return std::abs(u) <= o.a && std::abs(v) <= o.b;
}

inline void draw_object(ImageF& img, const SynthObject& o) {
  std::int64_t H = img.height, W = img.width;
  auto lo_y = static_cast<std::int64_t>(std::max(0.0, o.cy - o.a - o.b));
  auto hi_y = static_cast<std::int64_t>(std::min(double(H), o.cy + o.a + o.b + 1));
  auto lo_x = static_cast<std::int64_t>(std::max(0.0, o.cx - o.a - o.b));
  auto hi_x = static_cast<std::int64_t>(std::min(double(W), o.cx + o.a + o.b + 1));
  for (std::int64_t y = lo_y; y < hi_y; ++y)
    for (std::int64_t x = lo_x; x < hi_x; ++x)
      if (object_hit(o, x + 0.5, y + 0.5))
        for (int ch = 0; ch < 3; ++ch)
          img.data[static_cast<std::size_t>((ch * H + y) * W + x)] = o.color[ch];
}

// two-octave value noise background with a per-channel tint
inline ImageF synth_background(std::int64_t size, Rng& rng) {
  ImageF img;
  img.channels = 3;
  img.height = size;
  img.width = size;
  img.data.assign(static_cast<std::size_t>(3 * size * size), 0.f);
  float tint[3] = {static_cast<float>(rng.uniform(0.25, 0.6)),
                   static_cast<float>(rng.uniform(0.25, 0.6)),
                   static_cast<float>(rng.uniform(0.25, 0.6))};
  for (std::int64_t cell : {16, 4}) {
    std::int64_t g = size / cell + 2;
    std::vector<float> grid(static_cast<std::size_t>(g * g));
    for (auto& v : grid) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    float amp = cell == 16 ? 0.12f : 0.05f;
    for (std::int64_t y = 0; y < size; ++y)
      for (std::int64_t x = 0; x < size; ++x) {
        double fy = double(y) / cell, fx = double(x) / cell;
        auto y0 = static_cast<std::int64_t>(fy), x0 = static_cast<std::int64_t>(fx);
        double ty = fy - y0, tx = fx - x0;
        double v00 = grid[static_cast<std::size_t>(y0 * g + x0)];
        double v01 = grid[static_cast<std::size_t>(y0 * g + x0 + 1)];
        double v10 = grid[static_cast<std::size_t>((y0 + 1) * g + x0)];
        double v11 = grid[static_cast<std::size_t>((y0 + 1) * g + x0 + 1)];
        double v = (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
        for (int ch = 0; ch < 3; ++ch) {
          auto& px = img.data[static_cast<std::size_t>((ch * size + y) * size + x)];
          px = std::clamp(px + tint[ch] * (ch == 0 ? 1.f : 1.f) / 2 +
                              (cell == 16 ? tint[ch] / 2 : 0.f) + amp * static_cast<float>(v),
                          0.f, 1.f);
        }
      }
  }
  return img;
}

inline SynthObject random_object(std::int64_t size, double area, Rng& rng) {
  SynthObject o;
  double aspect = rng.uniform(0.4, 2.5);
  o.ellipse = rng.uniform() < 0.5;
  double raw = o.ellipse ? area / 3.14159265358979 : area / 4.0;
  o.a = std::max(2.0, std::sqrt(raw * aspect));
  o.b = std::max(2.0, std::sqrt(raw / aspect));
  o.cx = rng.uniform(o.a + o.b, double(size) - o.a - o.b);
  o.cy = rng.uniform(o.a + o.b, double(size) - o.a - o.b);
  o.angle = rng.uniform(0.0, 3.14159265358979);
  for (auto& c : o.color) c = static_cast<float>(rng.uniform(0.55, 0.95));
  return o;
}

}  // namespace detail

// Deterministic synthetic change-detection pairs: shared textured background
// and static objects; the post image adds/removes objects (these define the
// mask) and differs by a global illumination shift plus per-pixel noise
// (distractors that must not enter the mask).
inline Dataset synth_generate(std::int64_t n, std::int64_t size, std::uint64_t seed) {
  if (size < 64) throw ContractError("synth_generate: size must be >= 64");
  Dataset ds;
  for (std::int64_t i = 0; i < n; ++i) {
    Rng rng(mix64(seed ^ mix64(static_cast<std::uint64_t>(i) * 0x9e3779b97f4a7c15ULL)));
    Sample s;
    char buf[32];
    std::snprintf(buf, sizeof buf, "synth_%05lld", static_cast<long long>(i));
    s.id = buf;
    s.pre = detail::synth_background(size, rng);
    s.post = s.pre;

    // static objects, present in both images
    std::int64_t n_static = rng.uniform_int(2, 5);
    for (std::int64_t k = 0; k < n_static; ++k) {
      auto o = detail::random_object(size, rng.uniform(0.004, 0.02) * double(size * size), rng);
      detail::draw_object(s.pre, o);
      detail::draw_object(s.post, o);
    }

    // changed objects: drawn in exactly one image; union defines the mask
    s.mask.assign(static_cast<std::size_t>(size * size), 0.f);
    double frac = rng.uniform(0.06, 0.13);
    std::int64_t n_change = rng.uniform_int(2, 4);
    for (std::int64_t k = 0; k < n_change; ++k) {
      auto o = detail::random_object(
          size, frac * double(size * size) / static_cast<double>(n_change), rng);
      bool added = rng.uniform() < 0.5;
      detail::draw_object(added ? s.post : s.pre, o);
      for (std::int64_t y = 0; y < size; ++y)
        for (std::int64_t x = 0; x < size; ++x)
          if (detail::object_hit(o, x + 0.5, y + 0.5))
            s.mask[static_cast<std::size_t>(y * size + x)] = 1.f;
    }

    // distractors: illumination shift and sensor noise, absent from the mask
    auto shift = static_cast<float>(rng.uniform(-0.10, 0.10));
    for (auto& v : s.post.data)
      v = std::clamp(v * (1.f + shift) + static_cast<float>(rng.normal()) * 0.015f, 0.f, 1.f);
    for (auto& v : s.pre.data)
      v = std::clamp(v + static_cast<float>(rng.normal()) * 0.015f, 0.f, 1.f);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

// replicates a grayscale image across the three RGB channels in place
inline void promote_rgb(ImageF& im) {
  if (im.channels != 1) return;
  std::vector<float> d(im.data.size() * 3);
  for (int c = 0; c < 3; ++c)
    std::copy(im.data.begin(), im.data.end(),
              d.begin() + static_cast<std::ptrdiff_t>(c * im.data.size()));
  im.data = std::move(d);
  im.channels = 3;
}

inline Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::array<std::string, 3> subs{"A", "B", "label"};
  std::array<std::set<std::string>, 3> found;
  for (std::size_t k = 0; k < 3; ++k) {
    fs::path p = fs::path(dir) / subs[k];
    if (!fs::is_directory(p))
      throw std::runtime_error("load_dataset: missing directory " + p.string());
    for (const auto& e : fs::directory_iterator(p))
      if (e.path().extension() == ".png") found[k].insert(e.path().stem().string());
  }
  std::set<std::string> all;
  for (const auto& s : found) all.insert(s.begin(), s.end());
  std::string missing;
  for (const auto& id : all)
    for (std::size_t k = 0; k < 3; ++k)
      if (!found[k].count(id)) missing += " " + subs[k] + "/" + id;
  if (!missing.empty())
    throw std::runtime_error("load_dataset: missing files:" + missing);

  Dataset ds;
  for (const auto& id : all) {
    Sample s;
    s.id = id;
    s.pre = read_png((fs::path(dir) / "A" / (id + ".png")).string());
    s.post = read_png((fs::path(dir) / "B" / (id + ".png")).string());
    ImageF lab = read_png((fs::path(dir) / "label" / (id + ".png")).string());
    if (s.pre.height != s.post.height || s.pre.width != s.post.width ||
        lab.height != s.pre.height || lab.width != s.pre.width)
      throw std::runtime_error("load_dataset: dimension mismatch for id " + id);
    promote_rgb(s.pre);
    promote_rgb(s.post);
    s.mask.resize(static_cast<std::size_t>(lab.height * lab.width));
    for (std::size_t i = 0; i < s.mask.size(); ++i)
      s.mask[i] = lab.data[i] >= 128.f / 255.f ? 1.f : 0.f;  // binarize at 128
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

enum class PerturbKind { GaussNoise, GaussBlur };

namespace detail {

inline void blur3x3(ImageF& img, double sigma) {
  // normalized 3x3 gaussian; border taps renormalized over in-bounds weights
  double w1 = std::exp(-0.5 / (sigma * sigma)), w2 = std::exp(-1.0 / (sigma * sigma));
  double k[3][3] = {{w2, w1, w2}, {w1, 1.0, w1}, {w2, w1, w2}};
  std::int64_t H = img.height, W = img.width;
  std::vector<float> out(img.data.size());
  for (std::int64_t c = 0; c < img.channels; ++c)
    for (std::int64_t y = 0; y < H; ++y)
      for (std::int64_t x = 0; x < W; ++x) {
        double acc = 0, norm = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            std::int64_t yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
            double kw = k[dy + 1][dx + 1];
            acc += kw * img.data[static_cast<std::size_t>((c * H + yy) * W + xx)];
            norm += kw;
          }
        out[static_cast<std::size_t>((c * H + y) * W + x)] = static_cast<float>(acc / norm);
      }
  img.data = std::move(out);
}

}  // namespace detail

// Applies the perturbation to both temporal images of every sample.
inline Dataset perturb(const Dataset& ds, PerturbKind kind, double sigma,
                       std::uint64_t seed = 424242) {
  if (sigma < 0) throw ContractError("perturb: sigma must be >= 0");
  Dataset out = ds;
  if (sigma == 0) return out;
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    auto& s = out.samples[i];
    if (kind == PerturbKind::GaussNoise) {
      Rng rng(mix64(seed ^ mix64(i)));
      for (auto* img : {&s.pre, &s.post})
        for (auto& v : img->data)
          v = std::clamp(v + static_cast<float>(rng.normal() * sigma), 0.f, 1.f);
    } else {
      detail::blur3x3(s.pre, sigma);
      detail::blur3x3(s.post, sigma);
    }
  }
  return out;
}

}  // namespace ldg
