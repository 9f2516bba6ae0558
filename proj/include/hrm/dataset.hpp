#pragma once

// Annotation files: one image per line, "path x0 y0 x1 y1 [x0 y0 x1 y1 ...]".
// A bare path is an image without objects, repeated paths merge, '#' starts a
// comment and paths are relative to the annotation file.

#include <Eigen/Dense>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hrm/atomic_file.hpp"
#include "hrm/error.hpp"
#include "hrm/image.hpp"

namespace hrm {

/// Axis-aligned rectangle [x0, x1) x [y0, y1) in continuous pixel coordinates
/// (pixel i covers [i, i+1)).
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  Eigen::Vector2d center() const { return {0.5 * (x0 + x1), 0.5 * (y0 + y1)}; }
  bool contains(double x, double y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }

  static Box around(const Eigen::Vector2d& c, double w, double h) {
    return {c.x() - 0.5 * w, c.y() - 0.5 * h, c.x() + 0.5 * w, c.y() + 0.5 * h};
  }

  friend bool operator==(const Box&, const Box&) = default;
};

inline double iou(const Box& a, const Box& b) {
  const double w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (w <= 0 || h <= 0) return 0.0;
  const double inter = w * h;
  return inter / (a.area() + b.area() - inter);
}

struct DatasetEntry {
  std::string id;  // path as written in the annotation file
  std::filesystem::path path;
  std::vector<Box> boxes;
};

struct Dataset {
  std::vector<DatasetEntry> entries;
  std::vector<std::string> warnings;

  const DatasetEntry* find(const std::string& id) const {
    for (const auto& e : entries)
      if (e.id == id) return &e;
    return nullptr;
  }
};

/// Parses annotation text; `base` resolves relative paths, `name` labels errors.
inline Dataset parse_dataset(std::istream& in, const std::filesystem::path& base, const std::string& name) {
  Dataset ds;
  std::map<std::string, std::size_t> index;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string id;
    if (!(fields >> id)) continue;
    const std::string where = name + ":" + std::to_string(lineno);
    std::vector<double> numbers;
    std::string token;
    while (fields >> token) {
      try {
        std::size_t used = 0;
        const long v = std::stol(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
        numbers.push_back(static_cast<double>(v));
      } catch (const std::exception&) {
        fail(ErrorCode::kParseError, where + ": expected integer coordinate, got '" + token + "'");
      }
    }
    if (numbers.size() % 4 != 0) fail(ErrorCode::kParseError, where + ": box needs four coordinates");
    auto [it, inserted] = index.try_emplace(id, ds.entries.size());
    if (inserted) {
      const std::filesystem::path path = std::filesystem::path(id).is_absolute() ? std::filesystem::path(id) : base / id;
      if (!std::filesystem::exists(path)) fail(ErrorCode::kMissingAsset, where + ": image not found: " + path.string());
      ds.entries.push_back({id, path, {}});
    }
    for (std::size_t k = 0; k < numbers.size(); k += 4) {
      const Box b{numbers[k], numbers[k + 1], numbers[k + 2], numbers[k + 3]};
      if (b.x0 >= b.x1 || b.y0 >= b.y1 || b.x0 < 0 || b.y0 < 0) {
        fail(ErrorCode::kParseError, where + ": invalid box (need 0 <= x_min < x_max, 0 <= y_min < y_max)");
      }
      ds.entries[it->second].boxes.push_back(b);
    }
  }
  if (ds.entries.empty()) ds.warnings.push_back(name + ": no images listed");
  return ds;
}

inline Dataset load_dataset(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) fail(ErrorCode::kMissingAsset, "cannot open annotation file " + file.string());
  return parse_dataset(in, file.parent_path(), file.string());
}

inline std::string format_dataset(const Dataset& ds) {
  std::ostringstream out;
  for (const auto& e : ds.entries) {
    out << e.id;
    for (const Box& b : e.boxes) out << ' ' << b.x0 << ' ' << b.y0 << ' ' << b.x1 << ' ' << b.y1;
    out << '\n';
  }
  return out.str();
}

struct AnnotatedImage {
  Image image;
  std::vector<Box> boxes;
};

/// Decodes every image and checks that its boxes fit inside it.
inline std::vector<AnnotatedImage> load_images(const Dataset& ds) {
  std::vector<AnnotatedImage> out;
  out.reserve(ds.entries.size());
  for (const auto& e : ds.entries) {
    AnnotatedImage a{read_pnm(e.path), e.boxes};
    for (const Box& b : a.boxes) {
      if (b.x1 > a.image.width || b.y1 > a.image.height) {
        fail(ErrorCode::kInvalidDataset, e.id + ": box exceeds image bounds");
      }
    }
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace hrm
