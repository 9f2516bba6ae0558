#pragma once

// Synthetic scenes: a fixed high-contrast template (a bright triangle with a
// dark disc and bar inside) placed at given scales over blob clutter plus
// Gaussian noise. Used for desk-scale end-to-end checks.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "hrm/atomic_file.hpp"
#include "hrm/config.hpp"
#include "hrm/dataset.hpp"
#include "hrm/error.hpp"
#include "hrm/image.hpp"
#include "hrm/random.hpp"

namespace hrm {

struct PlacedObject {
  int x = 0;  // top-left of the object box
  int y = 0;
  double scale = 1.0;
};

struct SceneSpec {
  int width = 200;
  int height = 160;
  int template_size = 40;  // box side at scale 1
  std::vector<PlacedObject> objects;
  double noise = 0.03;    // Gaussian sigma on [0, 1] intensities
  double clutter = 0.006;  // background blobs per pixel
};

struct Scene {
  Image image;
  std::vector<Box> boxes;
};

inline int object_side(int template_size, double scale) {
  return static_cast<int>(std::lround(template_size * scale));
}

namespace detail {

inline double edge(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& p) {
  return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

/// Template intensity at unit-square coordinates, or a negative value outside.
inline double template_value(double u, double v) {
  const Eigen::Vector2d p(u, v), a(0.5, 0.04), b(0.96, 0.92), c(0.04, 0.92);
  const double e0 = edge(a, b, p), e1 = edge(b, c, p), e2 = edge(c, a, p);
  const bool inside = (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
  if (!inside) return -1.0;
  if ((p - Eigen::Vector2d(0.5, 0.58)).norm() < 0.14) return 0.08;
  if (v > 0.78 && v < 0.84 && std::abs(u - 0.5) < 0.3) return 0.3;
  return 0.92;
}

}  // namespace detail

/// Renders the scene; boxes are the object boxes in placement order.
inline Scene synth_scene(const SceneSpec& spec, std::uint64_t seed) {
  if (spec.width < 1 || spec.height < 1 || spec.template_size < 4) fail(ErrorCode::kInvalidSpec, "invalid canvas");
  if (spec.noise < 0 || spec.clutter < 0) fail(ErrorCode::kInvalidSpec, "noise and clutter must be nonnegative");
  Scene scene;
  for (const PlacedObject& o : spec.objects) {
    if (!(o.scale > 0)) fail(ErrorCode::kInvalidSpec, "object scale must be positive");
    const int side = object_side(spec.template_size, o.scale);
    const Box b{static_cast<double>(o.x), static_cast<double>(o.y), static_cast<double>(o.x + side),
                static_cast<double>(o.y + side)};
    if (b.x0 < 0 || b.y0 < 0 || b.x1 > spec.width || b.y1 > spec.height) {
      fail(ErrorCode::kInvalidSpec, "object does not fit in the canvas");
    }
    for (const Box& other : scene.boxes) {
      if (iou(b, other) > 0.0) fail(ErrorCode::kInvalidSpec, "objects overlap");
    }
    scene.boxes.push_back(b);
  }

  Rng rng(seed);
  Image& img = scene.image = Image(spec.width, spec.height);
  // Smooth shading plus isotropic blobs.
  const double gx = uniform_real(rng, -0.1, 0.1) / spec.width, gy = uniform_real(rng, -0.1, 0.1) / spec.height;
  const double base = uniform_real(rng, 0.35, 0.5);
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) img.at(x, y) = base + gx * x + gy * y;
  const auto blobs = static_cast<int>(std::lround(spec.clutter * spec.width * spec.height));
  for (int k = 0; k < blobs; ++k) {
    const double cx = uniform_real(rng, 0, spec.width), cy = uniform_real(rng, 0, spec.height);
    const double r = uniform_real(rng, 1.5, 5.0), value = uniform_real(rng, 0.1, 0.65);
    for (int y = std::max(0, static_cast<int>(cy - r - 1)); y <= std::min(spec.height - 1, static_cast<int>(cy + r + 1)); ++y)
      for (int x = std::max(0, static_cast<int>(cx - r - 1)); x <= std::min(spec.width - 1, static_cast<int>(cx + r + 1)); ++x) {
        const double d = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
        const double cover = std::clamp(r + 0.5 - d, 0.0, 1.0);
        img.at(x, y) = (1 - cover) * img.at(x, y) + cover * value;
      }
  }
  // Objects, 4x4 supersampled.
  for (const Box& b : scene.boxes) {
    const double side = b.width();
    for (int y = static_cast<int>(b.y0); y < static_cast<int>(b.y1); ++y)
      for (int x = static_cast<int>(b.x0); x < static_cast<int>(b.x1); ++x) {
        double acc = 0.0;
        int hits = 0;
        for (int sy = 0; sy < 4; ++sy)
          for (int sx = 0; sx < 4; ++sx) {
            const double u = (x - b.x0 + (sx + 0.5) / 4) / side, v = (y - b.y0 + (sy + 0.5) / 4) / side;
            const double t = detail::template_value(u, v);
            if (t >= 0) {
              acc += t;
              ++hits;
            }
          }
        if (hits > 0) img.at(x, y) = (acc + (16 - hits) * img.at(x, y)) / 16.0;
      }
  }
  for (double& p : img.pixels) p = std::clamp(p + spec.noise * standard_normal(rng), 0.0, 1.0);
  return scene;
}

/// A batch of random scenes, split into a training and a test part.
struct SynthBatch {
  int scenes = 50;
  int train_scenes = 30;
  int width = 200;
  int height = 160;
  int template_size = 40;
  int min_objects = 1;
  int max_objects = 3;
  std::vector<double> scales{0.75, 1.0, 1.25, 1.5};
  double noise = 0.03;
  double clutter = 0.006;
  int min_gap = 4;  // pixels between object boxes
};

inline SynthBatch parse_synth_batch(const IniSections& ini) {
  SynthBatch b;
  for (const auto& [name, values] : ini) {
    if (name != "synth") fail(ErrorCode::kParseError, "unknown section [" + name + "] in scene spec");
  }
  detail::SectionReader r(ini, "synth");
  r.get("scenes", b.scenes);
  r.get("train_scenes", b.train_scenes);
  r.get("width", b.width);
  r.get("height", b.height);
  r.get("template_size", b.template_size);
  r.get("min_objects", b.min_objects);
  r.get("max_objects", b.max_objects);
  if (r.has("scales")) {
    b.scales.clear();
    for (const std::string& s : detail::split(r.take("scales", ""), ',')) b.scales.push_back(detail::to_double(s, "synth.scales"));
  }
  r.get("noise", b.noise);
  r.get("clutter", b.clutter);
  r.get("min_gap", b.min_gap);
  r.finish();
  if (b.scenes < 0 || b.train_scenes < 0 || b.train_scenes > b.scenes) fail(ErrorCode::kInvalidSpec, "bad scene counts");
  if (b.min_objects < 0 || b.max_objects < b.min_objects) fail(ErrorCode::kInvalidSpec, "bad object counts");
  if (b.scales.empty()) fail(ErrorCode::kInvalidSpec, "no object scales");
  return b;
}

/// Random placements for one scene; InvalidSpec when they cannot be fitted.
inline SceneSpec random_scene(const SynthBatch& b, Rng& rng) {
  SceneSpec spec;
  spec.width = b.width;
  spec.height = b.height;
  spec.template_size = b.template_size;
  spec.noise = b.noise;
  spec.clutter = b.clutter;
  const int count = b.min_objects + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(b.max_objects - b.min_objects + 1)));
  std::vector<Box> placed;
  for (int k = 0; k < count; ++k) {
    const double scale = b.scales[uniform_index(rng, b.scales.size())];
    const int side = object_side(b.template_size, scale);
    if (side > b.width || side > b.height) fail(ErrorCode::kInvalidSpec, "object larger than the canvas");
    bool ok = false;
    for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
      const int x = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(b.width - side + 1)));
      const int y = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(b.height - side + 1)));
      const Box grown{x - b.min_gap + 0.0, y - b.min_gap + 0.0, x + side + b.min_gap + 0.0, y + side + b.min_gap + 0.0};
      ok = std::none_of(placed.begin(), placed.end(), [&](const Box& o) { return iou(grown, o) > 0.0; });
      if (ok) {
        placed.push_back({x + 0.0, y + 0.0, x + side + 0.0, y + side + 0.0});
        spec.objects.push_back({x, y, scale});
      }
    }
    if (!ok) fail(ErrorCode::kInvalidSpec, "could not place " + std::to_string(count) + " objects without overlap");
  }
  return spec;
}

/// Writes DIR/train and DIR/test, each with scene_NNN.pgm files and an
/// annotations.txt.
inline void write_synth_batch(const SynthBatch& b, std::uint64_t seed, const std::filesystem::path& dir) {
  Rng rng(seed);
  Dataset train, test;
  for (const char* part : {"train", "test"}) std::filesystem::create_directories(dir / part);
  for (int i = 0; i < b.scenes; ++i) {
    const SceneSpec spec = random_scene(b, rng);
    const Scene scene = synth_scene(spec, rng());
    char name[32];
    std::snprintf(name, sizeof name, "scene_%03d.pgm", i);
    const bool is_train = i < b.train_scenes;
    write_pgm(dir / (is_train ? "train" : "test") / name, scene.image);
    (is_train ? train : test).entries.push_back({name, {}, scene.boxes});
  }
  atomic_write(dir / "train" / "annotations.txt", format_dataset(train));
  atomic_write(dir / "test" / "annotations.txt", format_dataset(test));
}

}  // namespace hrm
