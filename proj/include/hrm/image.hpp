#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hrm/atomic_file.hpp"
#include "hrm/error.hpp"

namespace hrm {

/// Grayscale raster with intensities in [0, 1], row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int w, int h, double fill = 0.0) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  /// Border-replicating read.
  double clamped(int x, int y) const { return at(std::clamp(x, 0, width - 1), std::clamp(y, 0, height - 1)); }

  bool empty() const { return width <= 0 || height <= 0; }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Bilinear resampling by `factor` (output size rounds to nearest, at least 1).
inline Image resample(const Image& img, double factor) {
  if (!(factor > 0.0)) fail(ErrorCode::kInvalidInput, "resample factor must be positive");
  const int w = std::max(1, static_cast<int>(std::lround(img.width * factor)));
  const int h = std::max(1, static_cast<int>(std::lround(img.height * factor)));
  const double sx = static_cast<double>(img.width) / w;
  const double sy = static_cast<double>(img.height) / h;
  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    const int y0 = static_cast<int>(std::floor(fy));
    const double ty = fy - y0;
    for (int x = 0; x < w; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      const int x0 = static_cast<int>(std::floor(fx));
      const double tx = fx - x0;
      const double top = (1 - tx) * img.clamped(x0, y0) + tx * img.clamped(x0 + 1, y0);
      const double bottom = (1 - tx) * img.clamped(x0, y0 + 1) + tx * img.clamped(x0 + 1, y0 + 1);
      out.at(x, y) = (1 - ty) * top + ty * bottom;
    }
  }
  return out;
}

namespace detail {

inline std::string read_pnm_token(std::istream& in) {
  std::string token;
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (std::isspace(ch)) {
      if (!token.empty()) break;
    } else {
      token.push_back(static_cast<char>(ch));
    }
    ch = in.get();
  }
  return token;
}

}  // namespace detail

/// Reads binary PGM (P5) or PPM (P6), 8-bit; color is converted by luminance.
inline Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kMissingAsset, "cannot open image " + path.string());
  const std::string magic = detail::read_pnm_token(in);
  if (magic != "P5" && magic != "P6") fail(ErrorCode::kParseError, path.string() + ": unsupported image format " + magic);
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(detail::read_pnm_token(in));
    height = std::stoi(detail::read_pnm_token(in));
    maxval = std::stoi(detail::read_pnm_token(in));
  } catch (const std::exception&) {
    fail(ErrorCode::kParseError, path.string() + ": malformed header");
  }
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255) {
    fail(ErrorCode::kParseError, path.string() + ": unsupported header values");
  }
  const int channels = magic == "P6" ? 3 : 1;
  std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) fail(ErrorCode::kParseError, path.string() + ": truncated");
  Image img(width, height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    double v = raw[i * channels];
    if (channels == 3) v = 0.299 * raw[i * 3] + 0.587 * raw[i * 3 + 1] + 0.114 * raw[i * 3 + 2];
    img.pixels[i] = v / maxval;
  }
  return img;
}

inline std::vector<unsigned char> to_bytes(const Image& img) {
  std::vector<unsigned char> bytes(img.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(img.pixels[i], 0.0, 1.0) * 255.0));
  }
  return bytes;
}

/// Writes an 8-bit binary PGM.
inline void write_pgm(const std::filesystem::path& path, const Image& img) {
  std::ostringstream header;
  header << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  const std::vector<unsigned char> bytes = to_bytes(img);
  std::string contents = header.str();
  contents.append(bytes.begin(), bytes.end());
  atomic_write(path, contents);
}

}  // namespace hrm
