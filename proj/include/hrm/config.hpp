#pragma once

// INI-style configuration: "[section]" headers and "key = value" lines, '#'
// or ';' comments. Sections mirror the modules: pls_core, features, training,
// voting, fusion, pipeline. Overrides use "section.key=value".

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "hrm/error.hpp"
#include "hrm/features.hpp"
#include "hrm/fusion.hpp"
#include "hrm/pls.hpp"
#include "hrm/training.hpp"
#include "hrm/voting.hpp"

namespace hrm {

using IniSections = std::map<std::string, std::map<std::string, std::string>>;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

}  // namespace detail

inline IniSections parse_ini(std::istream& in, const std::string& name) {
  IniSections out;
  std::string section, line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto c = line.find_first_of("#;"); c != std::string::npos) line.erase(c);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::string where = name + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') fail(ErrorCode::kParseError, where + ": unterminated section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      out[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorCode::kParseError, where + ": expected key = value");
    if (section.empty()) fail(ErrorCode::kParseError, where + ": key outside of a section");
    out[section][detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
  }
  return out;
}

inline IniSections load_ini(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kMissingAsset, "cannot open config " + path.string());
  return parse_ini(in, path.string());
}

/// Applies "section.key=value".
inline void apply_override(IniSections& ini, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    fail(ErrorCode::kParseError, "override '" + assignment + "' is not section.key=value");
  }
  ini[detail::trim(assignment.substr(0, dot))][detail::trim(assignment.substr(dot + 1, eq - dot - 1))] =
      detail::trim(assignment.substr(eq + 1));
}

struct Config {
  PatchGeometry geometry = default_geometry(16);
  TrainingConfig training;
  ScaleSet scales;
  VotingConfig voting;
  FusionConfig fusion;
  bool fuse = true;
  double iou = 0.5;
  int threads = 0;
};

namespace detail {

class SectionReader {
 public:
  SectionReader(const IniSections& ini, const std::string& section) : section_(section) {
    if (auto it = ini.find(section); it != ini.end()) values_ = it->second;
  }
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  template <typename T>
  void get(const std::string& key, T& out) {
    auto it = values_.find(key);
    if (it == values_.end()) return;
    const std::string v = it->second;
    values_.erase(it);
    try {
      std::size_t used = 0;
      if constexpr (std::is_same_v<T, bool>) {
        if (v == "true" || v == "1" || v == "yes" || v == "on") {
          out = true;
        } else if (v == "false" || v == "0" || v == "no" || v == "off") {
          out = false;
        } else {
          throw std::invalid_argument(v);
        }
        used = v.size();
      } else if constexpr (std::is_integral_v<T>) {
        out = static_cast<T>(std::stoll(v, &used));
      } else if constexpr (std::is_floating_point_v<T>) {
        out = std::stod(v, &used);
      } else {
        out = v;
        used = v.size();
      }
      if (used != v.size()) throw std::invalid_argument(v);
    } catch (const std::exception&) {
      fail(ErrorCode::kParseError, section_ + "." + key + ": invalid value '" + v + "'");
    }
  }

  std::string take(const std::string& key, const std::string& fallback) {
    std::string v = fallback;
    get(key, v);
    return v;
  }

  void finish() const {
    if (!values_.empty()) fail(ErrorCode::kParseError, "unknown key " + section_ + "." + values_.begin()->first);
  }

 private:
  std::string section_;
  std::map<std::string, std::string> values_;
};

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::kParseError, what + ": invalid number '" + s + "'");
}

}  // namespace detail

inline Config make_config(const IniSections& ini) {
  static const std::vector<std::string> known{"pls_core", "features", "training", "voting", "fusion", "pipeline"};
  for (const auto& [name, values] : ini) {
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      fail(ErrorCode::kParseError, "unknown config section [" + name + "]");
    }
  }
  Config cfg;

  detail::SectionReader pls(ini, "pls_core");
  LatentConfig& latent = cfg.training.latent;
  pls.get("components", latent.components);
  pls.get("alpha", latent.ridge);
  const std::string method = pls.take("method", "bpls");
  if (method == "bpls") {
    latent.method = FitMethod::kBridgePls;
  } else if (method == "pls") {
    latent.method = FitMethod::kPls;
  } else {
    fail(ErrorCode::kParseError, "pls_core.method must be pls or bpls");
  }
  pls.finish();

  detail::SectionReader features(ini, "features");
  int patch = 16;
  features.get("patch_size", patch);
  if (patch < 2) fail(ErrorCode::kParseError, "features.patch_size must be at least 2");
  cfg.geometry = default_geometry(patch);
  if (features.has("neighbors")) {
    cfg.geometry.neighbor_offsets.clear();
    for (const std::string& pair : detail::split(features.take("neighbors", ""), ' ')) {
      const auto parts = detail::split(pair, ',');
      if (parts.size() != 2) fail(ErrorCode::kParseError, "features.neighbors entries are dx,dy");
      cfg.geometry.neighbor_offsets.push_back({static_cast<int>(detail::to_double(parts[0], "features.neighbors")),
                                               static_cast<int>(detail::to_double(parts[1], "features.neighbors"))});
    }
  }
  const std::string kernel = features.take("derivative", "sobel");
  if (kernel == "sobel") {
    cfg.training.kernel = DerivativeKernel::kSobel;
  } else if (kernel == "central") {
    cfg.training.kernel = DerivativeKernel::kCentral;
  } else {
    fail(ErrorCode::kParseError, "features.derivative must be sobel or central");
  }
  features.finish();
  validate(cfg.geometry);

  detail::SectionReader training(ini, "training");
  training.get("positives", cfg.training.positives);
  training.get("negatives", cfg.training.negatives);
  training.get("seed", cfg.training.seed);
  training.get("reference_width", cfg.training.reference_width);
  training.get("reference_height", cfg.training.reference_height);
  training.finish();

  detail::SectionReader voting(ini, "voting");
  if (voting.has("scales")) {
    cfg.scales.scales.clear();
    for (const std::string& s : detail::split(voting.take("scales", ""), ',')) {
      cfg.scales.scales.push_back(detail::to_double(s, "voting.scales"));
    }
  }
  voting.get("bin_size", cfg.voting.bin_size);
  voting.get("smoothing", cfg.voting.smoothing);
  voting.get("stride", cfg.voting.stride);
  voting.get("radius", cfg.voting.radius);
  voting.get("min_score_ratio", cfg.voting.min_score_ratio);
  voting.get("full_context_only", cfg.voting.full_context_only);
  voting.finish();
  validate(cfg.scales);
  if (cfg.voting.bin_size < 1 || cfg.voting.stride < 1 || cfg.voting.radius < 1 || cfg.voting.smoothing < 0) {
    fail(ErrorCode::kParseError, "voting: bin_size, stride and radius must be positive, smoothing nonnegative");
  }

  detail::SectionReader fusion(ini, "fusion");
  fusion.get("enabled", cfg.fuse);
  cfg.fusion.bandwidth = 2.0 * cfg.voting.bin_size;
  fusion.get("bandwidth", cfg.fusion.bandwidth);
  fusion.get("floor", cfg.fusion.floor);
  const std::string fk = fusion.take("kernel", "gaussian");
  if (fk == "gaussian") {
    cfg.fusion.kernel = FusionKernel::kGaussian;
  } else if (fk == "epanechnikov") {
    cfg.fusion.kernel = FusionKernel::kEpanechnikov;
  } else {
    fail(ErrorCode::kParseError, "fusion.kernel must be gaussian or epanechnikov");
  }
  fusion.finish();
  validate(cfg.fusion);

  detail::SectionReader pipeline(ini, "pipeline");
  pipeline.get("iou", cfg.iou);
  pipeline.get("threads", cfg.threads);
  pipeline.finish();
  cfg.training.threads = cfg.threads;
  return cfg;
}

}  // namespace hrm
