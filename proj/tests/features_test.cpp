#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "hrm/features.hpp"
#include "test_support.hpp"

namespace hrm {
namespace {

Image random_image(Rng& rng, int w, int h) {
  Image img(w, h);
  for (double& p : img.pixels) p = uniform01(rng);
  return img;
}

template <typename Pick>
double brute_window(const FeatureVolume& v, int c, int x, int y, Pick pick) {
  double out = v.at(c, x, y);
  for (int oy = -2; oy <= 2; ++oy)
    for (int ox = -2; ox <= 2; ++ox)
      out = pick(out, v.at(c, std::clamp(x + ox, 0, v.width - 1), std::clamp(y + oy, 0, v.height - 1)));
  return out;
}

TEST(ComputeChannels, ConstantImageIsZero) {
  const FeatureVolume vol = compute_channels(Image(20, 12, 0.4));
  EXPECT_EQ(vol.channels, kChannels);
  for (double v : vol.data) EXPECT_EQ(v, 0.0);
}

TEST(ComputeChannels, VerticalStepEdge) {
  Image img(20, 16, 0.0);
  for (int y = 0; y < 16; ++y)
    for (int x = 10; x < 20; ++x) img.at(x, y) = 1.0;
  for (DerivativeKernel kernel : {DerivativeKernel::kSobel, DerivativeKernel::kCentral}) {
    const FeatureVolume base = compute_base_channels(img, kernel);
    double top = 0.0;
    for (double v : base.data) top = std::max(top, v);
    for (int y = 0; y < 16; ++y) {
      double row_max = 0.0;
      int arg = -1;
      for (int x = 0; x < 20; ++x) {
        if (base.at(0, x, y) > row_max) row_max = base.at(0, x, y), arg = x;
      }
      EXPECT_TRUE(arg == 9 || arg == 10);
      EXPECT_EQ(base.at(0, 9, y), base.at(0, 10, y));
      for (int x = 0; x < 20; ++x) {
        EXPECT_EQ(base.at(1, x, y), 0.0);
        if (x < 8 || x > 11) {
          EXPECT_EQ(base.at(0, x, y), 0.0);
        }
      }
    }
  }
  const FeatureVolume vol = compute_channels(img);
  EXPECT_GT(vol.at(0, 10, 5), 0.0);
  EXPECT_EQ(vol.at(0, 0, 5), 0.0);
}

TEST(ComputeChannels, MinMaxSandwichMatchesBruteForce) {
  Rng rng(5);
  const Image img = random_image(rng, 32, 32);
  const FeatureVolume base = compute_base_channels(img);
  const FeatureVolume vol = compute_channels(img);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      for (int c = 0; c < kBaseChannels; ++c) {
        const double hi = brute_window(base, c, x, y, [](double a, double b) { return std::max(a, b); });
        const double lo = brute_window(base, c, x, y, [](double a, double b) { return std::min(a, b); });
        EXPECT_EQ(vol.at(c, x, y), hi);
        EXPECT_EQ(vol.at(kBaseChannels + c, x, y), lo);
        EXPECT_LE(lo, base.at(c, x, y));
        EXPECT_LE(base.at(c, x, y), hi);
        EXPECT_GE(base.at(c, x, y), 0.0);
      }
}

TEST(ComputeChannels, HistogramSumsWindowMagnitude) {
  Rng rng(9);
  const Image img = random_image(rng, 12, 10);
  const FeatureVolume base = compute_base_channels(img);
  const Gradients g = derivatives(img, DerivativeKernel::kSobel);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double expected = 0.0, total = 0.0;
      int count = 0;
      for (int oy = -2; oy <= 2; ++oy)
        for (int ox = -2; ox <= 2; ++ox) {
          const int sx = std::clamp(x + ox, 0, img.width - 1), sy = std::clamp(y + oy, 0, img.height - 1);
          expected += std::hypot(g.dx.at(sx, sy), g.dy.at(sx, sy));
          ++count;
        }
      for (int b = 0; b < kOrientationBins; ++b) total += base.at(4 + b, x, y);
      EXPECT_NEAR(total, expected, 1e-12);
      EXPECT_EQ(count, kHogWindow * kHogWindow);
    }
}

TEST(OrientationBin, PartitionsHalfCircle) {
  EXPECT_EQ(orientation_bin(1, 0), 0);
  EXPECT_EQ(orientation_bin(-1, 0), 0);
  EXPECT_EQ(orientation_bin(0, 1), 4);
  EXPECT_EQ(orientation_bin(0, -1), 4);
  EXPECT_EQ(orientation_bin(std::cos(0.999 * std::numbers::pi), std::sin(0.999 * std::numbers::pi)), 8);
  std::array<int, kOrientationBins> counts{};
  for (int deg = 0; deg < 360; ++deg) {
    const double a = (deg + 0.5) * std::numbers::pi / 180.0;
    const int bin = orientation_bin(std::cos(a), std::sin(a));
    ASSERT_GE(bin, 0);
    ASSERT_LT(bin, kOrientationBins);
    EXPECT_EQ(bin, (deg % 180) / 20);
    ++counts[static_cast<std::size_t>(bin)];
  }
  for (int c : counts) EXPECT_EQ(c, 40);
}

TEST(ComputeChannels, RejectsTinyImageAndIsDeterministic) {
  try {
    compute_channels(Image(4, 10));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidInput);
  }
  Rng rng(3);
  const Image img = random_image(rng, 16, 16);
  EXPECT_EQ(compute_channels(img), compute_channels(img));
}

TEST(PatchVector, LengthAndLayout) {
  Rng rng(13);
  const FeatureVolume vol = compute_channels(random_image(rng, 40, 30));
  const PatchGeometry geom = default_geometry(16);
  const Eigen::VectorXd v = extract_patch_vector(vol, {5, 7}, geom);
  EXPECT_EQ(v.size(), 6656);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c)
      for (int k = 0; k < kChannels; ++k) EXPECT_EQ(v((r * 16 + c) * kChannels + k), vol.at(k, 5 + c, 7 + r));
  try {
    extract_patch_vector(vol, {30, 0}, geom);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kOutOfBounds);
  }
}

TEST(PatchVector, PeriodicContentGivesIdenticalVectors) {
  Image img(48, 24);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 48; ++x) img.at(x, y) = 0.5 + 0.5 * std::sin(2 * std::numbers::pi * (x % 8) / 8.0);
  const FeatureVolume vol = compute_channels(img);
  const PatchGeometry geom = default_geometry(8);
  EXPECT_EQ(extract_patch_vector(vol, {8, 8}, geom), extract_patch_vector(vol, {24, 8}, geom));
}

TEST(ContextVectors, EntriesAreDifferencesWithNeighbours) {
  Rng rng(17);
  const FeatureVolume vol = compute_channels(random_image(rng, 40, 40));
  const PatchGeometry geom = default_geometry(8);
  const ContextSet set = context_vectors(vol, {16, 16}, geom);
  ASSERT_EQ(set.vectors.size(), 17u);
  EXPECT_EQ(set.vectors[0], extract_patch_vector(vol, {16, 16}, geom));
  std::vector<double> out(static_cast<std::size_t>(geom.vector_length())), scratch(out.size());
  for (int j = 1; j <= 16; ++j) {
    const Offset o = geom.neighbor_offsets[static_cast<std::size_t>(j - 1)];
    const Eigen::VectorXd expected =
        extract_patch_vector(vol, {16, 16}, geom) - extract_patch_vector(vol, {16 + o.dx, 16 + o.dy}, geom);
    EXPECT_EQ(set.vectors[static_cast<std::size_t>(j)], expected);
    EXPECT_FALSE(set.missing[static_cast<std::size_t>(j - 1)]);
    write_context_vector(vol, {16, 16}, geom, j, out.data(), scratch.data());
    EXPECT_EQ(Eigen::Map<Eigen::VectorXd>(out.data(), expected.size()), expected);
  }
}

TEST(ContextVectors, ConstantImageAndMissingNeighbours) {
  const FeatureVolume flat = compute_channels(Image(40, 40, 0.7));
  const PatchGeometry geom = default_geometry(8);
  const ContextSet set = context_vectors(flat, {16, 16}, geom);
  for (const auto& v : set.vectors) EXPECT_TRUE(v.isZero(0.0));

  Rng rng(19);
  const FeatureVolume vol = compute_channels(random_image(rng, 24, 24));
  const ContextSet corner = context_vectors(vol, {0, 0}, geom);
  int missing = 0;
  for (std::size_t j = 0; j < corner.missing.size(); ++j) {
    if (!corner.missing[j]) continue;
    ++missing;
    EXPECT_EQ(corner.vectors[j + 1], corner.vectors[0]);
  }
  EXPECT_GT(missing, 0);
  try {
    context_vectors(vol, {20, 20}, geom);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kOutOfBounds);
  }
}

TEST(Geometry, DefaultNeighbourhood) {
  const PatchGeometry g = default_geometry(16);
  EXPECT_EQ(g.neighbors(), 16);
  EXPECT_NO_THROW(validate(g));
  int adjacent = 0, overlapping = 0;
  for (const Offset& o : g.neighbor_offsets) {
    if (std::max(std::abs(o.dx), std::abs(o.dy)) == 16) ++adjacent;
    if (std::max(std::abs(o.dx), std::abs(o.dy)) == 8) ++overlapping;
  }
  EXPECT_EQ(adjacent, 8);
  EXPECT_EQ(overlapping, 8);
  PatchGeometry dup = g;
  dup.neighbor_offsets.push_back(dup.neighbor_offsets.front());
  EXPECT_THROW(validate(dup), Error);
}

TEST(ImageIo, PgmRoundTripAndPpmLuminance) {
  const auto dir = std::filesystem::temp_directory_path() / "hrm_features_test";
  std::filesystem::create_directories(dir);
  Image img(7, 5);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<double>(i * 7 % 256) / 255.0;
  write_pgm(dir / "a.pgm", img);
  const Image back = read_pnm(dir / "a.pgm");
  ASSERT_EQ(back.width, 7);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_NEAR(back.pixels[i], img.pixels[i], 1e-12);

  {
    std::ofstream out(dir / "b.ppm", std::ios::binary);
    out << "P6\n# comment\n2 1\n255\n";
    const unsigned char rgb[6] = {255, 0, 0, 0, 0, 255};
    out.write(reinterpret_cast<const char*>(rgb), 6);
  }
  const Image color = read_pnm(dir / "b.ppm");
  EXPECT_NEAR(color.at(0, 0), 0.299, 1e-12);
  EXPECT_NEAR(color.at(1, 0), 0.114, 1e-12);
  EXPECT_THROW(read_pnm(dir / "missing.pgm"), Error);
}

}  // namespace
}  // namespace hrm
