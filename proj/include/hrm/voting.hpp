#pragma once

// Context-encoded Hough voting into a multi-scale accumulator cuboid.
//
// A patch at centre l with vote y and weight w adds w / (m+1) to level s at
// l + (sigma_s / sigma_0) y. Levels are binned at `bin_size` pixels and then
// optionally smoothed with a Gaussian (sigma in cells).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hrm/error.hpp"
#include "hrm/features.hpp"
#include "hrm/image.hpp"
#include "hrm/parallel.hpp"
#include "hrm/pls.hpp"
#include "hrm/training.hpp"

namespace hrm {

struct ScaleSet {
  std::vector<double> scales{0.75, 1.0, 1.25, 1.5};
  double train_scale = 1.0;

  int size() const { return static_cast<int>(scales.size()); }
};

inline void validate(const ScaleSet& s) {
  if (s.scales.empty()) fail(ErrorCode::kInvalidInput, "scale set is empty");
  if (!(s.train_scale > 0)) fail(ErrorCode::kInvalidInput, "training scale must be positive");
  for (std::size_t i = 0; i < s.scales.size(); ++i) {
    if (!(s.scales[i] > 0) || !std::isfinite(s.scales[i])) fail(ErrorCode::kInvalidInput, "scales must be positive");
    if (i > 0 && !(s.scales[i] > s.scales[i - 1])) fail(ErrorCode::kInvalidInput, "scales must be strictly increasing");
  }
}

struct VotingConfig {
  int bin_size = 4;
  double smoothing = 1.5;  // Gaussian sigma in cells, 0 disables
  int stride = 1;
  int radius = 2;                // maxima neighbourhood in cells
  double min_score_ratio = 0.05;  // relative to the global cuboid maximum
  bool full_context_only = false;  // skip patches with a neighbour outside the image
};

struct PatchVotes {
  Eigen::Vector2d location = Eigen::Vector2d::Zero();  // patch centre
  std::vector<Eigen::Vector2d> votes;
  std::vector<double> labels;
  double weight = 0.0;
};

struct Hypothesis {
  int category = 0;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double scale = 1.0;
  double score = 0.0;
  int level = 0;
};

struct HoughCuboid {
  int width = 0;  // cells
  int height = 0;
  int bin_size = 1;
  double smoothing = 0.0;
  std::vector<double> scales;
  std::vector<std::vector<double>> levels;
  std::int64_t dropped = 0;  // votes that landed outside the grid

  double& at(int s, int x, int y) { return levels[static_cast<std::size_t>(s)][static_cast<std::size_t>(y) * width + x]; }
  double at(int s, int x, int y) const {
    return levels[static_cast<std::size_t>(s)][static_cast<std::size_t>(y) * width + x];
  }
  double level_mass(int s) const {
    double total = 0.0;
    for (double v : levels[static_cast<std::size_t>(s)]) total += v;
    return total;
  }
  double total_mass() const {
    double total = 0.0;
    for (int s = 0; s < static_cast<int>(levels.size()); ++s) total += level_mass(s);
    return total;
  }
  double max_value() const {
    double best = 0.0;
    for (const auto& level : levels)
      for (double v : level) best = std::max(best, v);
    return best;
  }
};

/// Fraction of positive label estimates: (1/|C|) sum sgn(max(c, 0)).
inline double label_weight(const std::vector<double>& labels) {
  if (labels.empty()) return 0.0;
  const auto positive = std::count_if(labels.begin(), labels.end(), [](double c) { return c > 0.0; });
  return static_cast<double>(positive) / static_cast<double>(labels.size());
}

inline PatchVotes cast_votes(const ContextSet& context, const ModelBank& bank, const Eigen::Vector2d& location) {
  if (static_cast<int>(context.vectors.size()) != bank.size() || bank.lrms.size() != bank.hrms.size()) {
    fail(ErrorCode::kInvalidInput, "context set has " + std::to_string(context.vectors.size()) +
                                       " vectors, bank has " + std::to_string(bank.size()) + " models");
  }
  PatchVotes pv;
  pv.location = location;
  for (int j = 0; j < bank.size(); ++j) {
    const auto& x = context.vectors[static_cast<std::size_t>(j)];
    pv.votes.push_back(predict(bank.hrms[static_cast<std::size_t>(j)], x).head<2>());
    pv.labels.push_back(predict(bank.lrms[static_cast<std::size_t>(j)], x)(0));
  }
  pv.weight = label_weight(pv.labels);
  return pv;
}

namespace detail {

inline std::vector<double> gaussian_kernel(double sigma) {
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) sum += k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;
  return k;
}

/// Separable Gaussian blur with zero padding.
inline void smooth_level(std::vector<double>& grid, int w, int h, double sigma) {
  if (sigma <= 0.0) return;
  const std::vector<double> k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  std::vector<double> tmp(grid.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = std::max(-r, -x); i <= std::min(r, w - 1 - x); ++i)
        acc += k[static_cast<std::size_t>(i + r)] * grid[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = std::max(-r, -y); i <= std::min(r, h - 1 - y); ++i)
        acc += k[static_cast<std::size_t>(i + r)] * tmp[static_cast<std::size_t>(y + i) * w + x];
      grid[static_cast<std::size_t>(y) * w + x] = acc;
    }
}

// Fixed chunking keeps the summation order independent of the worker count.
inline constexpr int kAccumulationChunks = 16;

}  // namespace detail

/// Cell a pixel-space point falls into, or false when it leaves the grid.
inline bool cell_of(const Eigen::Vector2d& p, int bin_size, int width, int height, int& cx, int& cy) {
  const double fx = std::floor(p.x() / bin_size), fy = std::floor(p.y() / bin_size);
  if (!(fx >= 0 && fy >= 0 && fx < width && fy < height)) return false;
  cx = static_cast<int>(fx);
  cy = static_cast<int>(fy);
  return true;
}

inline Eigen::Vector2d cell_center(int cx, int cy, int bin_size) {
  return {(cx + 0.5) * bin_size, (cy + 0.5) * bin_size};
}

/// Accumulates all votes over an image of `image_width` x `image_height`
/// pixels; smoothing (sigma in cells) is applied per level afterwards.
inline HoughCuboid accumulate_cuboid(const std::vector<PatchVotes>& all_votes, const ScaleSet& scales, int image_width,
                                     int image_height, int bin_size = 4, double smoothing = 0.0, int threads = 1) {
  validate(scales);
  if (bin_size < 1) fail(ErrorCode::kInvalidInput, "bin size must be positive");
  if (image_width < 1 || image_height < 1) fail(ErrorCode::kInvalidInput, "empty image");
  HoughCuboid cube;
  cube.width = (image_width + bin_size - 1) / bin_size;
  cube.height = (image_height + bin_size - 1) / bin_size;
  cube.bin_size = bin_size;
  cube.smoothing = smoothing;
  cube.scales = scales.scales;
  const std::size_t cells = static_cast<std::size_t>(cube.width) * cube.height;
  const int levels = scales.size();
  const int chunks = detail::kAccumulationChunks;
  std::vector<std::vector<double>> partial(static_cast<std::size_t>(chunks),
                                           std::vector<double>(cells * static_cast<std::size_t>(levels), 0.0));
  std::vector<std::int64_t> dropped(static_cast<std::size_t>(chunks), 0);
  const std::size_t n = all_votes.size();
  parallel_for(chunks, threads, [&](int c) {
    std::vector<double>& grid = partial[static_cast<std::size_t>(c)];
    for (std::size_t i = n * c / chunks; i < n * (c + 1) / chunks; ++i) {
      const PatchVotes& pv = all_votes[i];
      if (pv.votes.empty() || pv.weight == 0.0) continue;
      const double mass = pv.weight / static_cast<double>(pv.votes.size());
      for (int s = 0; s < levels; ++s) {
        const double ratio = scales.scales[static_cast<std::size_t>(s)] / scales.train_scale;
        for (const Eigen::Vector2d& y : pv.votes) {
          int cx = 0, cy = 0;
          if (cell_of(pv.location + ratio * y, bin_size, cube.width, cube.height, cx, cy)) {
            grid[static_cast<std::size_t>(s) * cells + static_cast<std::size_t>(cy) * cube.width + cx] += mass;
          } else {
            ++dropped[static_cast<std::size_t>(c)];
          }
        }
      }
    }
  });
  cube.levels.assign(static_cast<std::size_t>(levels), std::vector<double>(cells, 0.0));
  for (int c = 0; c < chunks; ++c) {
    cube.dropped += dropped[static_cast<std::size_t>(c)];
    for (int s = 0; s < levels; ++s)
      for (std::size_t k = 0; k < cells; ++k)
        cube.levels[static_cast<std::size_t>(s)][k] += partial[static_cast<std::size_t>(c)][static_cast<std::size_t>(s) * cells + k];
  }
  for (auto& level : cube.levels) detail::smooth_level(level, cube.width, cube.height, smoothing);
  return cube;
}

/// Cells strictly greater than every other cell within `radius` (same level)
/// and at least `min_score`; sorted by descending score.
inline std::vector<Hypothesis> find_maxima(const HoughCuboid& cube, double min_score, int radius) {
  if (radius < 1) fail(ErrorCode::kInvalidInput, "radius must be at least 1");
  std::vector<Hypothesis> out;
  for (int s = 0; s < static_cast<int>(cube.levels.size()); ++s)
    for (int y = 0; y < cube.height; ++y)
      for (int x = 0; x < cube.width; ++x) {
        const double v = cube.at(s, x, y);
        if (!(v >= min_score) || v <= 0.0) continue;
        bool peak = true;
        for (int dy = -radius; dy <= radius && peak; ++dy)
          for (int dx = -radius; dx <= radius; ++dx) {
            const int nx = x + dx, ny = y + dy;
            if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= cube.width || ny >= cube.height) continue;
            if (cube.at(s, nx, ny) >= v) {
              peak = false;
              break;
            }
          }
        if (peak) out.push_back({0, cell_center(x, y, cube.bin_size), cube.scales[static_cast<std::size_t>(s)], v, s});
      }
  std::stable_sort(out.begin(), out.end(), [](const Hypothesis& a, const Hypothesis& b) { return a.score > b.score; });
  return out;
}

/// Votes of every patch of the volume whose top-left lies on the stride grid.
///
/// Equivalent to cast_votes on each patch, computed through per-position
/// linear responses: with coefficients B_j, vote_j(l) = c_j + B_j'x(l) -
/// B_j'x(l + off_j), so each patch vector is multiplied once per model.
inline std::vector<PatchVotes> vote_volume(const FeatureVolume& vol, const ModelBank& bank, const VotingConfig& cfg,
                                           int threads = 1) {
  const PatchGeometry& geom = bank.geometry;
  const int p = geom.patch_size;
  const Index d = geom.vector_length(vol.channels);
  const int models = bank.size();
  if (cfg.stride < 1) fail(ErrorCode::kInvalidInput, "stride must be positive");
  if (vol.width < p || vol.height < p) return {};
  for (int j = 0; j < models; ++j) {
    const auto& h = bank.hrms[static_cast<std::size_t>(j)];
    const auto& l = bank.lrms[static_cast<std::size_t>(j)];
    if (h.input_dim() != d || l.input_dim() != d || h.output_dim() != 2 || l.output_dim() != 1) {
      fail(ErrorCode::kInvalidInput, "bank does not match the feature volume");
    }
  }
  // Columns 3j, 3j+1: HRM j; column 3j+2: LRM j.
  Matrix coef(d, 3 * models);
  Vector offset(3 * models);
  for (int j = 0; j < models; ++j) {
    const auto& h = bank.hrms[static_cast<std::size_t>(j)];
    const auto& l = bank.lrms[static_cast<std::size_t>(j)];
    coef.middleCols(3 * j, 2) = h.coefficients;
    coef.col(3 * j + 2) = l.coefficients.col(0);
    offset.segment(3 * j, 2) = h.mean_y - h.coefficients.transpose() * h.mean_x;
    offset(3 * j + 2) = l.mean_y(0) - l.coefficients.col(0).dot(l.mean_x);
  }
  const int pw = vol.width - p + 1, ph = vol.height - p + 1;
  Matrix response(3 * models, static_cast<Index>(pw) * ph);  // one column per top-left position
  const int rows_per_task = std::max(1, 256 / pw);
  const int tasks = (ph + rows_per_task - 1) / rows_per_task;
  parallel_for(tasks, threads, [&](int t) {
    const int y0 = t * rows_per_task, y1 = std::min(ph, y0 + rows_per_task);
    Matrix patches(d, static_cast<Index>(y1 - y0) * pw);
    for (int y = y0; y < y1; ++y)
      for (int x = 0; x < pw; ++x) write_patch_vector(vol, {x, y}, p, patches.col(static_cast<Index>(y - y0) * pw + x).data());
    response.middleCols(static_cast<Index>(y0) * pw, patches.cols()).noalias() = coef.transpose() * patches;
  });

  std::vector<Pixel> tops;
  for (int y = 0; y < ph; y += cfg.stride)
    for (int x = 0; x < pw; x += cfg.stride) {
      bool complete = true;
      for (const Offset& o : geom.neighbor_offsets) complete = complete && patch_inside(vol, {x + o.dx, y + o.dy}, p);
      if (complete || !cfg.full_context_only) tops.push_back({x, y});
    }
  std::vector<PatchVotes> out(tops.size());
  for (std::size_t i = 0; i < tops.size(); ++i) {
    const Pixel tl = tops[i];
    const Index col = static_cast<Index>(tl.y) * pw + tl.x;
    PatchVotes& pv = out[i];
    pv.location = patch_center(tl, p);
    pv.votes.resize(static_cast<std::size_t>(models));
    pv.labels.resize(static_cast<std::size_t>(models));
    for (int j = 0; j < models; ++j) {
      Eigen::Vector3d r = response.block<3, 1>(3 * j, col);
      if (j > 0) {
        const Offset o = geom.neighbor_offsets[static_cast<std::size_t>(j - 1)];
        const Pixel n{tl.x + o.dx, tl.y + o.dy};
        if (patch_inside(vol, n, p)) r -= response.block<3, 1>(3 * j, static_cast<Index>(n.y) * pw + n.x);
      }
      r += offset.segment<3>(3 * j);
      pv.votes[static_cast<std::size_t>(j)] = r.head<2>();
      pv.labels[static_cast<std::size_t>(j)] = r(2);
    }
    pv.weight = label_weight(pv.labels);
  }
  return out;
}

/// Writes one PGM per level, each scaled to its own maximum.
inline void write_heatmaps(const HoughCuboid& cube, const std::filesystem::path& dir, const std::string& stem) {
  std::filesystem::create_directories(dir);
  for (int s = 0; s < static_cast<int>(cube.levels.size()); ++s) {
    const auto& level = cube.levels[static_cast<std::size_t>(s)];
    const double top = *std::max_element(level.begin(), level.end());
    Image img(cube.width, cube.height);
    for (std::size_t k = 0; k < level.size(); ++k) img.pixels[k] = top > 0 ? level[k] / top : 0.0;
    write_pgm(dir / (stem + "_level" + std::to_string(s) + ".pgm"), img);
  }
}

}  // namespace hrm
