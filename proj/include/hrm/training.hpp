#pragma once

// Patch sampling, context-encoded training sets and the HRM/LRM bank.
//
// Each annotated box is brought to the reference box size by resampling the
// image around it, so voting vectors are expressed at the training scale.
// Negatives come from the unscaled images.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hrm/dataset.hpp"
#include "hrm/error.hpp"
#include "hrm/features.hpp"
#include "hrm/image.hpp"
#include "hrm/parallel.hpp"
#include "hrm/pls.hpp"
#include "hrm/random.hpp"

namespace hrm {

struct ModelBank {
  std::vector<RegressionModel> hrms;  // voting vectors, one per context index
  std::vector<RegressionModel> lrms;  // +-1 labels
  PatchGeometry geometry;
  double train_scale = 1.0;
  std::uint32_t extractor_version = kExtractorVersion;
  DerivativeKernel kernel = DerivativeKernel::kSobel;
  double reference_width = 0.0;  // object box at the training scale
  double reference_height = 0.0;
  FitMethod method = FitMethod::kBridgePls;
  Index components = 0;
  double alpha = 0.0;

  int size() const { return static_cast<int>(hrms.size()); }

  friend bool operator==(const ModelBank&, const ModelBank&) = default;
};

struct TrainingConfig {
  int positives = 12000;
  int negatives = 12000;
  std::uint64_t seed = 0;
  LatentConfig latent;
  double reference_width = 0.0;  // 0: median training box
  double reference_height = 0.0;
  DerivativeKernel kernel = DerivativeKernel::kSobel;
  int threads = 0;
};

/// Feature volume of one (possibly rescaled, cropped) training image.
struct TrainingView {
  int image_id = 0;
  double scale = 1.0;  // view pixels per source pixel
  FeatureVolume volume;
  std::vector<Box> objects;   // positives are drawn from these (view coordinates)
  std::vector<Box> excluded;  // negative centres avoid these
  bool negatives = false;
};

struct TrainingSample {
  int image_id = 0;
  int view = 0;
  Pixel topleft;
  int label = 1;
  Eigen::Vector2d voting = Eigen::Vector2d::Zero();  // object centre minus patch centre
};

/// Rows of `x` are context vectors: the positives first, then the negatives.
struct TrainingSet {
  Matrix x;
  Matrix votes;   // positives x 2
  Matrix labels;  // rows(x) x 1
  Index positives = 0;
};

inline Eigen::Vector2d patch_center(Pixel topleft, int patch_size) {
  return {topleft.x + 0.5 * patch_size, topleft.y + 0.5 * patch_size};
}

namespace detail {

inline double lower_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

struct Extent {
  int lo = 0;  // most negative neighbour offset (or 0)
  int hi = 0;  // most positive neighbour offset (or 0)
};

inline Extent offset_extent(const PatchGeometry& g, bool vertical) {
  Extent e;
  for (const Offset& o : g.neighbor_offsets) {
    const int d = vertical ? o.dy : o.dx;
    e.lo = std::min(e.lo, d);
    e.hi = std::max(e.hi, d);
  }
  return e;
}

inline FeatureVolume crop(const FeatureVolume& v, int x0, int y0, int w, int h) {
  FeatureVolume out(w, h, v.channels);
  for (int y = 0; y < h; ++y) {
    const double* src = v.pixel(x0, y0 + y);
    std::copy(src, src + static_cast<std::size_t>(w) * v.channels,
              out.data.begin() + static_cast<std::ptrdiff_t>(y) * w * v.channels);
  }
  return out;
}

inline Box shifted_scaled(const Box& b, double sx, double sy, double ox, double oy) {
  return {b.x0 / sx - ox, b.y0 / sy - oy, b.x1 / sx - ox, b.y1 / sy - oy};
}

}  // namespace detail

/// Median box width and height over all annotations.
inline std::pair<double, double> median_box(const std::vector<AnnotatedImage>& images) {
  std::vector<double> w, h;
  for (const auto& a : images)
    for (const Box& b : a.boxes) {
      w.push_back(b.width());
      h.push_back(b.height());
    }
  if (w.empty()) fail(ErrorCode::kInvalidDataset, "training set has no annotated boxes");
  return {detail::lower_median(w), detail::lower_median(h)};
}

/// Builds the unscaled view of every image plus one rescaled, cropped view per
/// distinct box scale factor.
inline std::vector<TrainingView> prepare_views(const std::vector<AnnotatedImage>& images, const PatchGeometry& geom,
                                               double ref_w, double ref_h,
                                               DerivativeKernel kernel = DerivativeKernel::kSobel, int threads = 1) {
  if (!(ref_w > 0 && ref_h > 0)) fail(ErrorCode::kInvalidInput, "reference box must be positive");
  struct Job {
    int image;
    double factor;
  };
  std::vector<Job> jobs;
  for (int i = 0; i < static_cast<int>(images.size()); ++i) {
    std::map<double, int> factors;
    jobs.push_back({i, 1.0});
    for (const Box& b : images[static_cast<std::size_t>(i)].boxes) {
      const double f = std::sqrt(ref_w / b.width() * ref_h / b.height());
      if (std::abs(f - 1.0) > 1e-9 && factors.emplace(f, 0).second) jobs.push_back({i, f});
    }
  }
  const detail::Extent ex = detail::offset_extent(geom, false), ey = detail::offset_extent(geom, true);
  std::vector<TrainingView> views(jobs.size());
  parallel_for(static_cast<int>(jobs.size()), threads, [&](int k) {
    const Job job = jobs[static_cast<std::size_t>(k)];
    const AnnotatedImage& src = images[static_cast<std::size_t>(job.image)];
    TrainingView& view = views[static_cast<std::size_t>(k)];
    view.image_id = job.image;
    view.scale = job.factor;
    auto matches = [&](const Box& b) {
      return std::abs(std::sqrt(ref_w / b.width() * ref_h / b.height()) - job.factor) <= 1e-9;
    };
    if (job.factor == 1.0) {
      view.volume = compute_channels(src.image, kernel);
      view.negatives = true;
      view.excluded = src.boxes;
      for (const Box& b : src.boxes)
        if (matches(b)) view.objects.push_back(b);
      return;
    }
    const Image img = resample(src.image, job.factor);
    const double sx = static_cast<double>(src.image.width) / img.width;
    const double sy = static_cast<double>(src.image.height) / img.height;
    const FeatureVolume full = compute_channels(img, kernel);
    double bx0 = img.width, by0 = img.height, bx1 = 0, by1 = 0;
    std::vector<Box> objects;
    for (const Box& b : src.boxes) {
      if (!matches(b)) continue;
      objects.push_back(detail::shifted_scaled(b, sx, sy, 0, 0));
      bx0 = std::min(bx0, objects.back().x0);
      by0 = std::min(by0, objects.back().y0);
      bx1 = std::max(bx1, objects.back().x1);
      by1 = std::max(by1, objects.back().y1);
    }
    // Keep only what patches centred in these boxes and their neighbours can reach.
    const int half = geom.patch_size / 2 + 1;
    const int x0 = std::max(0, static_cast<int>(std::floor(bx0)) - half + ex.lo);
    const int y0 = std::max(0, static_cast<int>(std::floor(by0)) - half + ey.lo);
    const int x1 = std::min(img.width, static_cast<int>(std::ceil(bx1)) + half + geom.patch_size + ex.hi);
    const int y1 = std::min(img.height, static_cast<int>(std::ceil(by1)) + half + geom.patch_size + ey.hi);
    view.volume = detail::crop(full, x0, y0, x1 - x0, y1 - y0);
    for (const Box& b : objects) view.objects.push_back({b.x0 - x0, b.y0 - y0, b.x1 - x0, b.y1 - y0});
  });
  return views;
}

namespace detail {

struct Candidate {
  int view;
  int x;
  int y;
  Eigen::Vector2d voting;
};

inline std::vector<Candidate> choose(std::vector<Candidate>& pool, int count, Rng& rng) {
  const std::size_t n = static_cast<std::size_t>(count);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  std::vector<Candidate> out(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n));
  std::sort(out.begin(), out.end(),
            [](const Candidate& a, const Candidate& b) { return std::tie(a.view, a.y, a.x) < std::tie(b.view, b.y, b.x); });
  return out;
}

}  // namespace detail

/// Draws `n_pos` positives (patch centre inside an object) and `n_neg`
/// negatives (centre outside every box) without replacement, uniformly over
/// the admissible positions whose full context set lies inside the view.
inline std::vector<TrainingSample> sample_patches(const std::vector<TrainingView>& views, const PatchGeometry& geom,
                                                  int n_pos, int n_neg, std::uint64_t seed) {
  if (n_pos < 1 || n_neg < 0) fail(ErrorCode::kInvalidInput, "need at least one positive and no negative counts");
  const detail::Extent ex = detail::offset_extent(geom, false), ey = detail::offset_extent(geom, true);
  const int p = geom.patch_size;
  std::vector<detail::Candidate> pos, neg;
  for (int v = 0; v < static_cast<int>(views.size()); ++v) {
    const TrainingView& view = views[static_cast<std::size_t>(v)];
    for (int y = -ey.lo; y + ey.hi + p <= view.volume.height; ++y)
      for (int x = -ex.lo; x + ex.hi + p <= view.volume.width; ++x) {
        const Eigen::Vector2d c = patch_center({x, y}, p);
        const Box* best = nullptr;
        for (const Box& b : view.objects) {
          if (b.contains(c.x(), c.y()) &&
              (!best || (b.center() - c).squaredNorm() < (best->center() - c).squaredNorm())) {
            best = &b;
          }
        }
        if (best) pos.push_back({v, x, y, best->center() - c});
        if (view.negatives && std::none_of(view.excluded.begin(), view.excluded.end(),
                                           [&](const Box& b) { return b.contains(c.x(), c.y()); })) {
          neg.push_back({v, x, y, Eigen::Vector2d::Zero()});
        }
      }
  }
  if (static_cast<std::size_t>(n_pos) > pos.size()) {
    fail(ErrorCode::kInvalidDataset, "requested " + std::to_string(n_pos) + " positives but only " +
                                         std::to_string(pos.size()) + " positions lie inside boxes");
  }
  if (static_cast<std::size_t>(n_neg) > neg.size()) {
    fail(ErrorCode::kInvalidDataset, "requested " + std::to_string(n_neg) + " negatives but only " +
                                         std::to_string(neg.size()) + " background positions exist");
  }
  Rng rng(seed);
  std::vector<TrainingSample> out;
  out.reserve(static_cast<std::size_t>(n_pos + n_neg));
  for (const auto& c : detail::choose(pos, n_pos, rng)) {
    out.push_back({views[static_cast<std::size_t>(c.view)].image_id, c.view, {c.x, c.y}, 1, c.voting});
  }
  for (const auto& c : detail::choose(neg, n_neg, rng)) {
    out.push_back({views[static_cast<std::size_t>(c.view)].image_id, c.view, {c.x, c.y}, -1, c.voting});
  }
  return out;
}

/// Training set for context index j (0 = raw patch vectors).
inline TrainingSet build_training_set(const std::vector<TrainingSample>& samples, const std::vector<TrainingView>& views,
                                      const PatchGeometry& geom, int j) {
  if (j < 0 || j > geom.neighbors()) fail(ErrorCode::kInvalidInput, "context index out of range");
  TrainingSet set;
  const Index n = static_cast<Index>(samples.size());
  const Index d = geom.vector_length();
  set.positives = std::count_if(samples.begin(), samples.end(), [](const TrainingSample& s) { return s.label > 0; });
  for (Index i = 0; i < set.positives; ++i) {
    if (samples[static_cast<std::size_t>(i)].label <= 0) fail(ErrorCode::kInvalidInput, "positives must come first");
  }
  Matrix columns(d, n);
  std::vector<double> scratch(static_cast<std::size_t>(d));
  set.votes.resize(set.positives, 2);
  set.labels.resize(n, 1);
  for (Index i = 0; i < n; ++i) {
    const TrainingSample& s = samples[static_cast<std::size_t>(i)];
    write_context_vector(views[static_cast<std::size_t>(s.view)].volume, s.topleft, geom, j, columns.col(i).data(),
                         scratch.data());
    set.labels(i, 0) = s.label;
    if (i < set.positives) set.votes.row(i) = s.voting.transpose();
  }
  set.x = columns.transpose();
  return set;
}

inline std::vector<TrainingSet> build_training_sets(const std::vector<TrainingSample>& samples,
                                                    const std::vector<TrainingView>& views, const PatchGeometry& geom) {
  std::vector<TrainingSet> sets;
  for (int j = 0; j <= geom.neighbors(); ++j) sets.push_back(build_training_set(samples, views, geom, j));
  return sets;
}

/// Fits HRM j on the positive rows of make_set(j) and LRM j on all rows, for
/// j in [0, count). Sets are built on demand so only `threads` live at once.
template <typename MakeSet>
ModelBank train_bank_with(int count, MakeSet&& make_set, const LatentConfig& cfg, int threads = 1) {
  if (count < 1) fail(ErrorCode::kInvalidInput, "a bank needs at least one training set");
  ModelBank bank;
  bank.hrms.resize(static_cast<std::size_t>(count));
  bank.lrms.resize(static_cast<std::size_t>(count));
  bank.method = cfg.method;
  bank.components = cfg.components;
  bank.alpha = cfg.method == FitMethod::kBridgePls ? cfg.ridge : 0.0;
  parallel_for(count, threads, [&](int j) {
    decltype(auto) set = make_set(j);
    try {
      if (set.positives < 1) fail(ErrorCode::kInvalidDataset, "no positive rows");
      bank.hrms[static_cast<std::size_t>(j)] =
          fit(set.x.topRows(set.positives), set.votes, cfg.components, cfg.method, cfg.ridge);
      bank.lrms[static_cast<std::size_t>(j)] = fit(set.x, set.labels, cfg.components, cfg.method, cfg.ridge);
    } catch (const Error& e) {
      fail(e.code(), "context model " + std::to_string(j) + ": " + e.what());
    }
  });
  return bank;
}

inline ModelBank train_bank(const std::vector<TrainingSet>& sets, const LatentConfig& cfg, int threads = 1) {
  return train_bank_with(
      static_cast<int>(sets.size()), [&](int j) -> const TrainingSet& { return sets[static_cast<std::size_t>(j)]; },
      cfg, threads);
}

/// The whole training procedure on decoded, annotated images.
inline ModelBank train(const std::vector<AnnotatedImage>& images, const PatchGeometry& geom,
                       const TrainingConfig& cfg) {
  validate(geom);
  auto [ref_w, ref_h] = median_box(images);
  if (cfg.reference_width > 0) ref_w = cfg.reference_width;
  if (cfg.reference_height > 0) ref_h = cfg.reference_height;
  const int threads = worker_count(cfg.threads);
  const std::vector<TrainingView> views = prepare_views(images, geom, ref_w, ref_h, cfg.kernel, threads);
  const std::vector<TrainingSample> samples = sample_patches(views, geom, cfg.positives, cfg.negatives, cfg.seed);
  ModelBank bank = train_bank_with(
      geom.neighbors() + 1, [&](int j) { return build_training_set(samples, views, geom, j); }, cfg.latent, threads);
  bank.geometry = geom;
  bank.kernel = cfg.kernel;
  bank.reference_width = ref_w;
  bank.reference_height = ref_h;
  return bank;
}

}  // namespace hrm
