#pragma once

// Per-pixel feature channels and patch vectors.
//
// Base channels (13): |dx|, |dy|, |dxx|, |dyy|, then 9 unsigned orientation
// bins of 20 degrees accumulating gradient magnitude over a 5x5 window.
// The volume stores 26 channels: the 13 base channels max-filtered (0-12)
// followed by the same channels min-filtered (13-25), both over 5x5.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "hrm/error.hpp"
#include "hrm/image.hpp"

namespace hrm {

inline constexpr int kBaseChannels = 13;
inline constexpr int kChannels = 26;
inline constexpr int kOrientationBins = 9;
inline constexpr int kHogWindow = 5;
inline constexpr int kFilterWindow = 5;

/// Bumped whenever channel definitions or ordering change; stored in model files.
inline constexpr std::uint32_t kExtractorVersion = 1;

enum class DerivativeKernel : std::uint32_t { kSobel = 0, kCentral = 1 };

/// Channel planes stored pixel-major: the `channels` values of one pixel are contiguous.
struct FeatureVolume {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  FeatureVolume() = default;
  FeatureVolume(int w, int h, int c) : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, 0.0) {}

  double& at(int channel, int x, int y) { return data[(static_cast<std::size_t>(y) * width + x) * channels + channel]; }
  double at(int channel, int x, int y) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + channel];
  }
  const double* pixel(int x, int y) const { return data.data() + (static_cast<std::size_t>(y) * width + x) * channels; }

  friend bool operator==(const FeatureVolume&, const FeatureVolume&) = default;
};

struct Offset {
  int dx = 0;
  int dy = 0;
  friend bool operator==(const Offset&, const Offset&) = default;
};

struct PatchGeometry {
  int patch_size = 16;
  std::vector<Offset> neighbor_offsets;

  int neighbors() const { return static_cast<int>(neighbor_offsets.size()); }
  /// Length of one patch vector for a volume with `channels` planes.
  Eigen::Index vector_length(int channels = kChannels) const {
    return static_cast<Eigen::Index>(patch_size) * patch_size * channels;
  }

  friend bool operator==(const PatchGeometry&, const PatchGeometry&) = default;
};

/// 8 adjacent neighbours at +-patch_size and 8 half-overlapping ones at +-patch_size/2.
inline PatchGeometry default_geometry(int patch_size = 16) {
  PatchGeometry g;
  g.patch_size = patch_size;
  for (int step : {patch_size, patch_size / 2}) {
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx)
        if (dx != 0 || dy != 0) g.neighbor_offsets.push_back({dx * step, dy * step});
  }
  return g;
}

inline void validate(const PatchGeometry& g) {
  if (g.patch_size < 1) fail(ErrorCode::kInvalidInput, "patch_size must be positive");
  for (std::size_t i = 0; i < g.neighbor_offsets.size(); ++i) {
    if (g.neighbor_offsets[i] == Offset{}) fail(ErrorCode::kInvalidInput, "neighbor offset (0,0) is not a neighbor");
    for (std::size_t j = 0; j < i; ++j)
      if (g.neighbor_offsets[i] == g.neighbor_offsets[j]) fail(ErrorCode::kInvalidInput, "duplicate neighbor offset");
  }
}

/// Unsigned gradient orientation bin in [0, 9): 20 degrees per bin over [0, 180).
inline int orientation_bin(double gx, double gy) {
  double angle = std::atan2(gy, gx);
  if (angle < 0.0) angle += std::numbers::pi;
  if (angle >= std::numbers::pi) angle -= std::numbers::pi;
  const int bin = static_cast<int>(angle / (std::numbers::pi / kOrientationBins));
  return std::clamp(bin, 0, kOrientationBins - 1);
}

struct Gradients {
  Image dx, dy, dxx, dyy;
};

inline Gradients derivatives(const Image& img, DerivativeKernel kernel) {
  Gradients g{Image(img.width, img.height), Image(img.width, img.height), Image(img.width, img.height),
              Image(img.width, img.height)};
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      auto p = [&](int ox, int oy) { return img.clamped(x + ox, y + oy); };
      // Written as sums of differences so that flat regions give exact zeros.
      auto dx1 = [&](int oy) { return p(1, oy) - p(-1, oy); };
      auto dy1 = [&](int ox) { return p(ox, 1) - p(ox, -1); };
      auto dx2 = [&](int oy) { return (p(1, oy) - p(0, oy)) - (p(0, oy) - p(-1, oy)); };
      auto dy2 = [&](int ox) { return (p(ox, 1) - p(ox, 0)) - (p(ox, 0) - p(ox, -1)); };
      if (kernel == DerivativeKernel::kSobel) {
        g.dx.at(x, y) = (dx1(-1) + 2 * dx1(0) + dx1(1)) / 8.0;
        g.dy.at(x, y) = (dy1(-1) + 2 * dy1(0) + dy1(1)) / 8.0;
        g.dxx.at(x, y) = (dx2(-1) + 2 * dx2(0) + dx2(1)) / 4.0;
        g.dyy.at(x, y) = (dy2(-1) + 2 * dy2(0) + dy2(1)) / 4.0;
      } else {
        g.dx.at(x, y) = dx1(0) / 2.0;
        g.dy.at(x, y) = dy1(0) / 2.0;
        g.dxx.at(x, y) = dx2(0);
        g.dyy.at(x, y) = dy2(0);
      }
    }
  }
  return g;
}

/// The 13 unfiltered channels.
inline FeatureVolume compute_base_channels(const Image& img, DerivativeKernel kernel = DerivativeKernel::kSobel) {
  if (img.width < kHogWindow || img.height < kHogWindow) {
    fail(ErrorCode::kInvalidInput, "image must be at least 5x5 for feature extraction");
  }
  const Gradients g = derivatives(img, kernel);
  FeatureVolume vol(img.width, img.height, kBaseChannels);
  Image magnitude(img.width, img.height);
  std::vector<int> bins(img.pixels.size());
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double gx = g.dx.at(x, y), gy = g.dy.at(x, y);
      vol.at(0, x, y) = std::abs(gx);
      vol.at(1, x, y) = std::abs(gy);
      vol.at(2, x, y) = std::abs(g.dxx.at(x, y));
      vol.at(3, x, y) = std::abs(g.dyy.at(x, y));
      magnitude.at(x, y) = std::hypot(gx, gy);
      bins[static_cast<std::size_t>(y) * img.width + x] = orientation_bin(gx, gy);
    }
  }
  constexpr int r = kHogWindow / 2;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      std::array<double, kOrientationBins> hist{};
      for (int oy = -r; oy <= r; ++oy) {
        for (int ox = -r; ox <= r; ++ox) {
          const int sx = std::clamp(x + ox, 0, img.width - 1), sy = std::clamp(y + oy, 0, img.height - 1);
          hist[static_cast<std::size_t>(bins[static_cast<std::size_t>(sy) * img.width + sx])] += magnitude.at(sx, sy);
        }
      }
      for (int b = 0; b < kOrientationBins; ++b) vol.at(4 + b, x, y) = hist[static_cast<std::size_t>(b)];
    }
  }
  return vol;
}

namespace detail {

// Separable 5x5 min or max filter with border replication.
template <typename Pick>
FeatureVolume window_filter(const FeatureVolume& in, Pick pick) {
  constexpr int r = kFilterWindow / 2;
  FeatureVolume rows(in.width, in.height, in.channels), out(in.width, in.height, in.channels);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      for (int c = 0; c < in.channels; ++c) {
        double v = in.at(c, std::clamp(x - r, 0, in.width - 1), y);
        for (int o = -r + 1; o <= r; ++o) v = pick(v, in.at(c, std::clamp(x + o, 0, in.width - 1), y));
        rows.at(c, x, y) = v;
      }
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      for (int c = 0; c < in.channels; ++c) {
        double v = rows.at(c, x, std::clamp(y - r, 0, in.height - 1));
        for (int o = -r + 1; o <= r; ++o) v = pick(v, rows.at(c, x, std::clamp(y + o, 0, in.height - 1)));
        out.at(c, x, y) = v;
      }
  return out;
}

}  // namespace detail

inline FeatureVolume max_filter(const FeatureVolume& in) {
  return detail::window_filter(in, [](double a, double b) { return std::max(a, b); });
}

inline FeatureVolume min_filter(const FeatureVolume& in) {
  return detail::window_filter(in, [](double a, double b) { return std::min(a, b); });
}

/// Full 26-channel volume: max-filtered base channels, then min-filtered ones.
inline FeatureVolume compute_channels(const Image& img, DerivativeKernel kernel = DerivativeKernel::kSobel) {
  const FeatureVolume base = compute_base_channels(img, kernel);
  const FeatureVolume hi = max_filter(base), lo = min_filter(base);
  FeatureVolume vol(img.width, img.height, kChannels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < kBaseChannels; ++c) {
        vol.at(c, x, y) = hi.at(c, x, y);
        vol.at(kBaseChannels + c, x, y) = lo.at(c, x, y);
      }
  return vol;
}

struct Pixel {
  int x = 0;
  int y = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
  friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

inline bool patch_inside(const FeatureVolume& vol, Pixel topleft, int patch_size) {
  return topleft.x >= 0 && topleft.y >= 0 && topleft.x + patch_size <= vol.width && topleft.y + patch_size <= vol.height;
}

/// Copies the patch into `out` (row-major pixels, channels contiguous per pixel).
inline void write_patch_vector(const FeatureVolume& vol, Pixel topleft, int patch_size, double* out) {
  const std::size_t row_len = static_cast<std::size_t>(patch_size) * vol.channels;
  for (int r = 0; r < patch_size; ++r) {
    const double* src = vol.pixel(topleft.x, topleft.y + r);
    std::copy(src, src + row_len, out + r * row_len);
  }
}

inline Eigen::VectorXd extract_patch_vector(const FeatureVolume& vol, Pixel topleft, const PatchGeometry& geom) {
  if (!patch_inside(vol, topleft, geom.patch_size)) {
    fail(ErrorCode::kOutOfBounds, "patch at (" + std::to_string(topleft.x) + "," + std::to_string(topleft.y) +
                                      ") leaves the feature volume");
  }
  Eigen::VectorXd v(geom.vector_length(vol.channels));
  write_patch_vector(vol, topleft, geom.patch_size, v.data());
  return v;
}

/// The m+1 context-encoded vectors of one patch: entry 0 is the raw patch
/// vector, entry j the raw vector minus neighbour j's (zero when the
/// neighbour leaves the volume, flagged in `missing`).
struct ContextSet {
  std::vector<Eigen::VectorXd> vectors;
  std::vector<bool> missing;  // one flag per neighbour (size m)
};

inline ContextSet context_vectors(const FeatureVolume& vol, Pixel topleft, const PatchGeometry& geom) {
  ContextSet set;
  set.vectors.reserve(geom.neighbor_offsets.size() + 1);
  set.vectors.push_back(extract_patch_vector(vol, topleft, geom));
  for (const Offset& off : geom.neighbor_offsets) {
    const Pixel n{topleft.x + off.dx, topleft.y + off.dy};
    if (patch_inside(vol, n, geom.patch_size)) {
      set.vectors.push_back(set.vectors.front() - extract_patch_vector(vol, n, geom));
      set.missing.push_back(false);
    } else {
      set.vectors.push_back(set.vectors.front());
      set.missing.push_back(true);
    }
  }
  return set;
}

/// Writes context vector `j` of the patch at `topleft` into `out`; `scratch`
/// must hold one patch vector.
inline void write_context_vector(const FeatureVolume& vol, Pixel topleft, const PatchGeometry& geom, int j,
                                 double* out, double* scratch) {
  const Eigen::Index len = geom.vector_length(vol.channels);
  write_patch_vector(vol, topleft, geom.patch_size, out);
  if (j == 0) return;
  const Offset off = geom.neighbor_offsets[static_cast<std::size_t>(j - 1)];
  const Pixel n{topleft.x + off.dx, topleft.y + off.dy};
  if (!patch_inside(vol, n, geom.patch_size)) return;
  write_patch_vector(vol, n, geom.patch_size, scratch);
  for (Eigen::Index i = 0; i < len; ++i) out[i] -= scratch[i];
}

}  // namespace hrm
