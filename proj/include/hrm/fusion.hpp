#pragma once

// Cross-scale hypothesis fusion by normalised pointwise mutual information.
//
// p(h) is the hypothesis score over the total cuboid mass. p(h_j | h_i) is a
// kernel density over the patches supporting h_i: each patch l with support
// w_l is mapped onto scale sigma_j along its voting line and compared with
// z_j. Dividing by the self-conditioned value gives p(h | h) = 1.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <tuple>
#include <vector>

#include "hrm/error.hpp"
#include "hrm/parallel.hpp"
#include "hrm/voting.hpp"

namespace hrm {

enum class FusionKernel { kGaussian, kEpanechnikov };

struct FusionConfig {
  FusionKernel kernel = FusionKernel::kGaussian;
  double bandwidth = 8.0;  // pixels
  double floor = 1e-12;
};

inline void validate(const FusionConfig& cfg) {
  if (!(cfg.bandwidth > 0)) fail(ErrorCode::kInvalidInput, "fusion bandwidth must be positive");
  if (!(cfg.floor > 0 && cfg.floor < 1)) fail(ErrorCode::kInvalidInput, "probability floor must lie in (0, 1)");
}

/// Radially symmetric kernel on the squared norm, K(0) = 1.
inline double kernel_value(FusionKernel k, double squared_norm) {
  switch (k) {
    case FusionKernel::kGaussian:
      return std::exp(-0.5 * squared_norm);
    case FusionKernel::kEpanechnikov:
      return squared_norm < 1.0 ? 1.0 - squared_norm : 0.0;
  }
  return 0.0;
}

/// The votes behind a cuboid together with how they were binned.
struct VoteField {
  std::span<const PatchVotes> votes;
  double train_scale = 1.0;
  int bin_size = 1;
  double smoothing = 0.0;
  int width = 0;  // cells
  int height = 0;
  double total_mass = 0.0;

  static VoteField of(const std::vector<PatchVotes>& votes, const HoughCuboid& cube, double train_scale) {
    return {votes, train_scale, cube.bin_size, cube.smoothing, cube.width, cube.height, cube.total_mass()};
  }
};

struct CorrelatedPair {
  Hypothesis a;
  Hypothesis b;
  double npmi = 0.0;
};

/// Sparse per-patch contributions to one hypothesis' cell.
struct Support {
  std::vector<std::size_t> patches;
  std::vector<double> weights;
  double total = 0.0;
};

/// How much of h's cell value each patch contributed, under the same binning
/// and smoothing as the cuboid; the weights sum to the cell value.
inline Support support_of(const Hypothesis& h, const VoteField& field) {
  Support out;
  int hx = 0, hy = 0;
  if (!cell_of(h.center, field.bin_size, field.width, field.height, hx, hy)) return out;
  std::vector<double> k{1.0};
  int r = 0;
  if (field.smoothing > 0) {
    k = detail::gaussian_kernel(field.smoothing);
    r = static_cast<int>(k.size() / 2);
  }
  const double ratio = h.scale / field.train_scale;
  for (std::size_t i = 0; i < field.votes.size(); ++i) {
    const PatchVotes& pv = field.votes[i];
    if (pv.votes.empty() || pv.weight == 0.0) continue;
    const double mass = pv.weight / static_cast<double>(pv.votes.size());
    double w = 0.0;
    for (const Eigen::Vector2d& y : pv.votes) {
      int cx = 0, cy = 0;
      if (!cell_of(pv.location + ratio * y, field.bin_size, field.width, field.height, cx, cy)) continue;
      const int dx = hx - cx, dy = hy - cy;
      if (std::abs(dx) > r || std::abs(dy) > r) continue;
      w += mass * k[static_cast<std::size_t>(dx + r)] * k[static_cast<std::size_t>(dy + r)];
    }
    if (w > 0.0) {
      out.patches.push_back(i);
      out.weights.push_back(w);
      out.total += w;
    }
  }
  return out;
}

inline double conditional_prob(const Hypothesis& hi, const Hypothesis& hj, const VoteField& field,
                               const Support& support, const FusionConfig& cfg) {
  if (!(hi.scale > 0 && hj.scale > 0)) fail(ErrorCode::kInvalidInput, "hypothesis scales must be positive");
  if (!(support.total > 0.0)) fail(ErrorCode::kZeroSupport, "hypothesis has no supporting votes");
  const double ratio = hj.scale / hi.scale;
  const double inv_b2 = 1.0 / (cfg.bandwidth * cfg.bandwidth);
  double acc = 0.0;
  for (std::size_t k = 0; k < support.patches.size(); ++k) {
    const Eigen::Vector2d& l = field.votes[support.patches[k]].location;
    const Eigen::Vector2d u = ratio * (hi.center - l) + l - hj.center;
    acc += kernel_value(cfg.kernel, u.squaredNorm() * inv_b2) * support.weights[k];
  }
  return std::clamp(acc / support.total, 0.0, 1.0);
}

inline double conditional_prob(const Hypothesis& hi, const Hypothesis& hj, const VoteField& field,
                               const FusionConfig& cfg) {
  return conditional_prob(hi, hj, field, support_of(hi, field), cfg);
}

/// log(p(j|i) / p(j)) / -log(p(i) p(j|i)), clamped to [-1, 1]; a conditional
/// at or below the floor gives -1.
inline double npmi_from(double p_i, double p_j, double p_j_given_i, double floor = 1e-12) {
  if (!(p_j_given_i > floor)) return -1.0;
  p_i = std::max(p_i, floor);
  p_j = std::max(p_j, floor);
  if (!(p_i < 1.0) || !(p_j < 1.0) || p_j_given_i > 1.0) {
    fail(ErrorCode::kInvalidInput, "probabilities must lie in (0, 1)");
  }
  const double joint = p_i * p_j_given_i;
  const double value = std::log(p_j_given_i / p_j) / -std::log(joint);
  return std::clamp(value, -1.0, 1.0);
}

inline double hypothesis_probability(const Hypothesis& h, const VoteField& field) {
  if (!(field.total_mass > 0)) fail(ErrorCode::kZeroSupport, "vote field carries no mass");
  return h.score / field.total_mass;
}

inline double npmi(const Hypothesis& hi, const Hypothesis& hj, const VoteField& field, const Support& support_i,
                   const FusionConfig& cfg) {
  return npmi_from(hypothesis_probability(hi, field), hypothesis_probability(hj, field),
                   conditional_prob(hi, hj, field, support_i, cfg), cfg.floor);
}

inline double npmi(const Hypothesis& hi, const Hypothesis& hj, const VoteField& field, const FusionConfig& cfg) {
  return npmi(hi, hj, field, support_of(hi, field), cfg);
}

/// Descending score, ties by (scale, x, y).
inline bool stronger(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return std::tie(a.scale, a.center.x(), a.center.y()) < std::tie(b.scale, b.center.x(), b.center.y());
}

/// Every pair (i stronger than j) with its npmi, i conditioning j.
inline std::vector<CorrelatedPair> correlated_pairs(std::vector<Hypothesis> hyps, const VoteField& field,
                                                    const FusionConfig& cfg, int threads = 1) {
  validate(cfg);
  std::sort(hyps.begin(), hyps.end(), stronger);
  const int n = static_cast<int>(hyps.size());
  std::vector<Support> supports(static_cast<std::size_t>(n));
  parallel_for(n, threads, [&](int i) { supports[static_cast<std::size_t>(i)] = support_of(hyps[static_cast<std::size_t>(i)], field); });
  std::vector<CorrelatedPair> pairs;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) pairs.push_back({hyps[static_cast<std::size_t>(i)], hyps[static_cast<std::size_t>(j)], 0.0});
  parallel_for(n, threads, [&](int i) {
    const Support& s = supports[static_cast<std::size_t>(i)];
    // Pairs of row i start at sum_{k<i} (n-1-k).
    std::size_t at = static_cast<std::size_t>(i) * static_cast<std::size_t>(n) - static_cast<std::size_t>(i) * (i + 1) / 2;
    for (int j = i + 1; j < n; ++j, ++at) {
      CorrelatedPair& p = pairs[at];
      p.npmi = s.total > 0.0 ? npmi(p.a, p.b, field, s, cfg) : -1.0;
    }
  });
  return pairs;
}

/// Removes the weaker member of every pair with positive npmi; removed
/// hypotheses take part in no further pairs.
inline std::vector<Hypothesis> fuse(std::vector<Hypothesis> hyps, const VoteField& field, const FusionConfig& cfg,
                                    int threads = 1) {
  std::sort(hyps.begin(), hyps.end(), stronger);
  const std::size_t n = hyps.size();
  const std::vector<CorrelatedPair> pairs = correlated_pairs(hyps, field, cfg, threads);
  std::vector<bool> removed(n, false);
  std::size_t at = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j, ++at) {
      if (!removed[i] && !removed[j] && pairs[at].npmi > 0.0) removed[j] = true;
    }
  std::vector<Hypothesis> out;
  for (std::size_t i = 0; i < n; ++i)
    if (!removed[i]) out.push_back(hyps[i]);
  return out;
}

}  // namespace hrm
