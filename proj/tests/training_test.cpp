#include <gtest/gtest.h>

#include <set>

#include "hrm/training.hpp"
#include "test_support.hpp"

namespace hrm {
namespace {

AnnotatedImage noise_scene(Rng& rng, int w, int h, std::vector<Box> boxes) {
  AnnotatedImage a{Image(w, h), std::move(boxes)};
  for (double& p : a.image.pixels) p = uniform01(rng);
  return a;
}

std::vector<TrainingView> unscaled_views(const std::vector<AnnotatedImage>& images, const PatchGeometry& geom) {
  const auto [w, h] = median_box(images);
  return prepare_views(images, geom, w, h);
}

TEST(SamplePatches, CentredPatchVotesZero) {
  Rng rng(1);
  const std::vector<AnnotatedImage> images{noise_scene(rng, 120, 100, {{34, 24, 66, 56}})};
  const PatchGeometry geom = default_geometry(16);
  const auto views = unscaled_views(images, geom);
  ASSERT_EQ(views.size(), 1u);
  const auto samples = sample_patches(views, geom, 32 * 32, 10, 7);
  bool found = false;
  for (const auto& s : samples) {
    if (s.label > 0 && s.topleft == Pixel{42, 32}) {
      found = true;
      EXPECT_EQ(s.voting, Eigen::Vector2d(0, 0));
    }
  }
  EXPECT_TRUE(found);
}

TEST(SamplePatches, TooFewBackgroundPositions) {
  Rng rng(2);
  const std::vector<AnnotatedImage> images{noise_scene(rng, 64, 64, {{4, 4, 60, 60}})};
  const PatchGeometry geom = default_geometry(8);
  const auto views = unscaled_views(images, geom);
  EXPECT_NO_THROW(sample_patches(views, geom, 10, 0, 1));
  try {
    sample_patches(views, geom, 10, 100, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidDataset);
  }
  EXPECT_THROW(sample_patches(views, geom, 100000, 0, 1), Error);
}

TEST(SamplePatches, InvariantsAndDeterminism) {
  Rng rng(3);
  const std::vector<AnnotatedImage> images{noise_scene(rng, 96, 80, {{20, 20, 52, 52}, {60, 30, 90, 62}}),
                                           noise_scene(rng, 90, 90, {{40, 40, 72, 72}})};
  const PatchGeometry geom = default_geometry(8);
  const auto views = unscaled_views(images, geom);
  const auto a = sample_patches(views, geom, 300, 500, 11);
  const auto b = sample_patches(views, geom, 300, 500, 11);
  const auto c = sample_patches(views, geom, 300, 500, 12);
  ASSERT_EQ(a.size(), 800u);
  int pos = 0, neg = 0, differ = 0;
  std::set<std::tuple<int, int, int, int>> seen;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].topleft, b[i].topleft);
    EXPECT_EQ(a[i].voting, b[i].voting);
    if (!(a[i].topleft == c[i].topleft)) ++differ;
    const TrainingView& v = views[static_cast<std::size_t>(a[i].view)];
    const Eigen::Vector2d centre = patch_center(a[i].topleft, geom.patch_size);
    EXPECT_TRUE(seen.emplace(a[i].view, a[i].topleft.x, a[i].topleft.y, a[i].label).second);
    if (a[i].label > 0) {
      ++pos;
      EXPECT_EQ(i < 300, true);
      const bool inside = std::any_of(v.objects.begin(), v.objects.end(),
                                      [&](const Box& bx) { return bx.contains(centre.x(), centre.y()); });
      EXPECT_TRUE(inside);
      EXPECT_LE(a[i].voting.norm(), std::hypot(32.0, 32.0));
    } else {
      ++neg;
      for (const Box& bx : v.excluded) EXPECT_FALSE(bx.contains(centre.x(), centre.y()));
    }
    EXPECT_EQ(a[i].image_id, v.image_id);
  }
  EXPECT_EQ(pos, 300);
  EXPECT_EQ(neg, 500);
  EXPECT_GT(differ, 0);
}

TEST(PrepareViews, RescalesBoxesToReference) {
  Rng rng(4);
  // A 64x64 object with a 32x32 reference is viewed at half resolution.
  const std::vector<AnnotatedImage> images{noise_scene(rng, 160, 160, {{40, 50, 104, 114}, {120, 10, 152, 42}})};
  const PatchGeometry geom = default_geometry(8);
  const auto views = prepare_views(images, geom, 32, 32);
  ASSERT_EQ(views.size(), 2u);
  EXPECT_TRUE(views[0].negatives);
  EXPECT_EQ(views[0].objects.size(), 1u);
  EXPECT_EQ(views[0].excluded.size(), 2u);
  EXPECT_FALSE(views[1].negatives);
  EXPECT_DOUBLE_EQ(views[1].scale, 0.5);
  ASSERT_EQ(views[1].objects.size(), 1u);
  EXPECT_NEAR(views[1].objects[0].width(), 32.0, 1e-9);
  EXPECT_NEAR(views[1].objects[0].height(), 32.0, 1e-9);
  EXPECT_LT(views[1].volume.width, 80);
  const auto samples = sample_patches(views, geom, 1500, 100, 5);
  for (const auto& s : samples) {
    if (s.label > 0) {
      EXPECT_LE(s.voting.norm(), std::hypot(16.0, 16.0));
    }
  }
}

TEST(TrainingSets, RowsAreContextVectors) {
  Rng rng(5);
  const std::vector<AnnotatedImage> images{noise_scene(rng, 80, 80, {{24, 24, 56, 56}})};
  const PatchGeometry geom = default_geometry(8);
  const auto views = unscaled_views(images, geom);
  const auto samples = sample_patches(views, geom, 20, 30, 3);
  const auto sets = build_training_sets(samples, views, geom);
  ASSERT_EQ(sets.size(), 17u);
  for (int j = 0; j <= 16; ++j) {
    const TrainingSet& s = sets[static_cast<std::size_t>(j)];
    ASSERT_EQ(s.x.rows(), 50);
    ASSERT_EQ(s.x.cols(), 8 * 8 * 26);
    EXPECT_EQ(s.positives, 20);
    EXPECT_EQ(s.votes.rows(), 20);
    EXPECT_EQ((s.labels.array() > 0).count(), 20);
    EXPECT_EQ((s.labels.array() < 0).count(), 30);
    for (Index i = 0; i < 50; i += 7) {
      const TrainingSample& smp = samples[static_cast<std::size_t>(i)];
      const ContextSet cs = context_vectors(views[0].volume, smp.topleft, geom);
      EXPECT_EQ(Eigen::VectorXd(s.x.row(i).transpose()), cs.vectors[static_cast<std::size_t>(j)]);
      if (j == 0) {
        EXPECT_EQ(Eigen::VectorXd(s.x.row(i).transpose()), extract_patch_vector(views[0].volume, smp.topleft, geom));
      }
    }
  }
  PatchGeometry lone = geom;
  lone.neighbor_offsets.clear();
  EXPECT_EQ(build_training_sets(samples, views, lone).size(), 1u);
}

TEST(TrainingSets, DefaultPatchDimensions) {
  Rng rng(6);
  const std::vector<AnnotatedImage> images{noise_scene(rng, 112, 112, {{36, 36, 76, 76}})};
  const PatchGeometry geom = default_geometry(16);
  const auto views = unscaled_views(images, geom);
  const TrainingSet s = build_training_set(sample_patches(views, geom, 40, 10, 1), views, geom, 5);
  EXPECT_EQ(s.x.topRows(s.positives).rows(), 40);
  EXPECT_EQ(s.x.cols(), 6656);
}

TrainingSet latent_set(Rng& rng, Index n_pos, Index n_neg, Index dims, Index rank) {
  const test::LatentProblem p = test::latent_problem(rng, n_pos + n_neg, dims, rank, 2, 0.0);
  TrainingSet s;
  s.x = p.x;
  s.positives = n_pos;
  s.votes = p.y.topRows(n_pos);
  s.labels = Matrix::Constant(n_pos + n_neg, 1, -1.0);
  s.labels.topRows(n_pos).setOnes();
  return s;
}

TEST(TrainBank, NoiselessLinearFieldIsReproduced) {
  Rng rng(7);
  const std::vector<TrainingSet> sets{latent_set(rng, 60, 40, 30, 4)};
  LatentConfig cfg;
  cfg.components = 4;
  const ModelBank bank = train_bank(sets, cfg);
  ASSERT_EQ(bank.size(), 1);
  ASSERT_EQ(bank.lrms.size(), 1u);
  const Matrix fitted = predict_rows(bank.hrms[0], sets[0].x.topRows(60));
  EXPECT_LE((fitted - sets[0].votes).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_EQ(bank.hrms[0].scores.rows(), 60);
  EXPECT_EQ(bank.lrms[0].scores.rows(), 100);
}

TEST(TrainBank, PlsAndBridgeVotesAgree) {
  Rng rng(8);
  std::vector<TrainingSet> sets;
  for (int j = 0; j < 5; ++j) sets.push_back(latent_set(rng, 80, 60, 48, 6));
  LatentConfig bridge;
  bridge.components = 6;
  LatentConfig plain = bridge;
  plain.method = FitMethod::kPls;
  const ModelBank a = train_bank(sets, bridge, 2);
  const ModelBank b = train_bank(sets, plain, 2);
  EXPECT_EQ(a.alpha, 1e-10);
  EXPECT_EQ(b.alpha, 0.0);
  for (int j = 0; j < 5; ++j) {
    const Matrix& x = sets[static_cast<std::size_t>(j)].x;
    const double diff = (predict_rows(a.hrms[static_cast<std::size_t>(j)], x) -
                         predict_rows(b.hrms[static_cast<std::size_t>(j)], x)).cwiseAbs().maxCoeff();
    EXPECT_LE(diff, 1e-4) << "context " << j;
  }
}

TEST(TrainBank, FailingFitNamesContextIndex) {
  Rng rng(9);
  std::vector<TrainingSet> sets{latent_set(rng, 30, 30, 10, 3), latent_set(rng, 30, 30, 10, 3)};
  sets[1].x.setConstant(2.0);
  LatentConfig cfg;
  cfg.components = 2;
  try {
    train_bank(sets, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateFit);
    EXPECT_NE(std::string(e.what()).find("context model 1"), std::string::npos);
  }
}

TEST(Train, ReproducibleAcrossRunsAndThreadCounts) {
  Rng rng(10);
  const std::vector<AnnotatedImage> images{noise_scene(rng, 72, 72, {{20, 20, 44, 44}}),
                                           noise_scene(rng, 80, 72, {{30, 24, 66, 60}})};
  TrainingConfig cfg;
  cfg.positives = 150;
  cfg.negatives = 150;
  cfg.latent.components = 5;
  cfg.threads = 1;
  const PatchGeometry geom = default_geometry(4);
  const ModelBank a = train(images, geom, cfg);
  cfg.threads = 3;
  const ModelBank b = train(images, geom, cfg);
  EXPECT_TRUE(a == b);
  EXPECT_EQ(a.size(), 17);
  EXPECT_EQ(a.train_scale, 1.0);
  EXPECT_EQ(a.reference_width, 24.0);
  EXPECT_EQ(a.geometry, geom);
  for (const auto& m : a.hrms) EXPECT_EQ(m.input_dim(), 4 * 4 * 26);
  for (const auto& m : a.lrms) EXPECT_EQ(m.input_dim(), 4 * 4 * 26);
  cfg.seed = 1;
  EXPECT_FALSE(train(images, geom, cfg) == a);
}

}  // namespace
}  // namespace hrm
