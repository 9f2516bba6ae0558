#pragma once

// Test procedure on one image: features, votes, cuboid, per-level maxima and
// fusion. Also the detections file format.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hrm/atomic_file.hpp"
#include "hrm/config.hpp"
#include "hrm/dataset.hpp"
#include "hrm/features.hpp"
#include "hrm/fusion.hpp"
#include "hrm/training.hpp"
#include "hrm/voting.hpp"

namespace hrm {

struct Detection {
  std::string image_id;
  Hypothesis hypothesis;
  Box box;  // reference box scaled by the hypothesis scale, centred on it
};

struct DetectConfig {
  std::vector<double> scales{0.75, 1.0, 1.25, 1.5};
  VotingConfig voting;
  FusionConfig fusion;
  bool fuse = true;
  int threads = 1;

  static DetectConfig from(const Config& c) {
    return {c.scales.scales, c.voting, c.fusion, c.fuse, worker_count(c.threads)};
  }
};

/// Everything the test procedure produced for one image.
struct DetectionTrace {
  std::vector<PatchVotes> votes;
  HoughCuboid cube;
  std::vector<Hypothesis> maxima;
  std::vector<Hypothesis> accepted;
};

inline void check_bank(const ModelBank& bank) {
  if (bank.extractor_version != kExtractorVersion) {
    fail(ErrorCode::kIncompatibleModel, "model was built for a different feature extractor");
  }
  if (bank.size() < 1 || bank.size() != bank.geometry.neighbors() + 1 || bank.lrms.size() != bank.hrms.size()) {
    fail(ErrorCode::kIncompatibleModel, "model bank is incomplete");
  }
}

inline DetectionTrace trace_detection(const Image& image, const ModelBank& bank, const DetectConfig& cfg) {
  check_bank(bank);
  DetectionTrace t;
  const ScaleSet scales{cfg.scales, bank.train_scale};
  validate(scales);
  if (image.width < bank.geometry.patch_size || image.height < bank.geometry.patch_size) return t;
  const FeatureVolume vol = compute_channels(image, bank.kernel);
  t.votes = vote_volume(vol, bank, cfg.voting, cfg.threads);
  // Patches without any image structure carry no evidence.
  const Index d = bank.geometry.vector_length();
  std::vector<double> buffer(static_cast<std::size_t>(d));
  for (PatchVotes& pv : t.votes) {
    const Pixel tl{static_cast<int>(pv.location.x() - 0.5 * bank.geometry.patch_size),
                   static_cast<int>(pv.location.y() - 0.5 * bank.geometry.patch_size)};
    write_patch_vector(vol, tl, bank.geometry.patch_size, buffer.data());
    if (std::all_of(buffer.begin(), buffer.end(), [](double v) { return v == 0.0; })) pv.weight = 0.0;
  }
  t.cube = accumulate_cuboid(t.votes, scales, image.width, image.height, cfg.voting.bin_size, cfg.voting.smoothing,
                             cfg.threads);
  const double top = t.cube.max_value();
  if (!(top > 0.0)) return t;
  t.maxima = find_maxima(t.cube, cfg.voting.min_score_ratio * top, cfg.voting.radius);
  for (Hypothesis& h : t.maxima) {
    h.center.x() = std::min(h.center.x(), image.width - 0.5);
    h.center.y() = std::min(h.center.y(), image.height - 0.5);
  }
  t.accepted = cfg.fuse ? fuse(t.maxima, VoteField::of(t.votes, t.cube, bank.train_scale), cfg.fusion, cfg.threads)
                        : t.maxima;
  std::stable_sort(t.accepted.begin(), t.accepted.end(), stronger);
  return t;
}

inline Box detection_box(const Hypothesis& h, const ModelBank& bank) {
  const double s = h.scale / bank.train_scale;
  return Box::around(h.center, s * bank.reference_width, s * bank.reference_height);
}

inline std::vector<Detection> detect(const Image& image, const ModelBank& bank, const DetectConfig& cfg,
                                     const std::string& image_id = "") {
  std::vector<Detection> out;
  for (const Hypothesis& h : trace_detection(image, bank, cfg).accepted) {
    out.push_back({image_id, h, detection_box(h, bank)});
  }
  return out;
}

/// Image files (PGM/PPM) directly inside `dir`, sorted by name.
inline std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorCode::kMissingAsset, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const std::string ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm" || ext == ".pnm")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Detections file: "# reference_box W H" then one "image_id x y scale score"
// line per detection, tab-separated, fixed point with 6 decimals.

inline std::string format_detections(const std::vector<Detection>& dets, double ref_w, double ref_h) {
  std::string out;
  char line[512];
  std::snprintf(line, sizeof line, "# reference_box\t%.6f\t%.6f\n", ref_w, ref_h);
  out += line;
  for (const Detection& d : dets) {
    std::snprintf(line, sizeof line, "\t%.6f\t%.6f\t%.6f\t%.6f\n", d.hypothesis.center.x(), d.hypothesis.center.y(),
                  d.hypothesis.scale, d.hypothesis.score);
    out += d.image_id;
    out += line;
  }
  return out;
}

struct DetectionsFile {
  std::vector<Detection> detections;
  double reference_width = 0.0;
  double reference_height = 0.0;
};

inline DetectionsFile parse_detections(std::istream& in, const std::string& name) {
  DetectionsFile f;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const std::string where = name + ":" + std::to_string(lineno);
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream header(line.substr(1));
      std::string key;
      if (header >> key && key == "reference_box" && !(header >> f.reference_width >> f.reference_height)) {
        fail(ErrorCode::kParseError, where + ": malformed reference_box");
      }
      continue;
    }
    std::istringstream fields(line);
    Detection d;
    if (!std::getline(fields, d.image_id, '\t')) fail(ErrorCode::kParseError, where + ": missing image id");
    double x = 0, y = 0;
    std::string rest;
    if (!(fields >> x >> y >> d.hypothesis.scale >> d.hypothesis.score) || (fields >> rest)) {
      fail(ErrorCode::kParseError, where + ": expected image_id x y scale score");
    }
    if (!(d.hypothesis.scale > 0) || !(d.hypothesis.score >= 0)) {
      fail(ErrorCode::kParseError, where + ": scale must be positive and score nonnegative");
    }
    d.hypothesis.center = {x, y};
    f.detections.push_back(std::move(d));
  }
  return f;
}

inline DetectionsFile load_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kMissingAsset, "cannot open detections " + path.string());
  return parse_detections(in, path.string());
}

}  // namespace hrm
