#include <dmap/dataset.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

using namespace dmap;

namespace {

Raster mask_with_ones(std::size_t size, std::size_t ones) {
  std::vector<double> v(size * size, 0.0);
  for (std::size_t i = 0; i < ones; ++i)
    v[i] = 1.0;
  return Raster(size, size, 1, std::move(v));
}

CropClass counting_oracle(const Raster& crop, double pos, double neg) {
  std::size_t ones = 0;
  for (std::size_t r = 0; r < crop.height(); ++r)
    for (std::size_t c = 0; c < crop.width(); ++c)
      ones += crop.at(c, r) == 1.0;
  // Integer comparisons avoid any division rounding in the oracle.
  const double total = static_cast<double>(crop.width() * crop.height());
  if (static_cast<double>(ones) > pos * total)
    return CropClass::Built;
  if (static_cast<double>(ones) < neg * total)
    return CropClass::NonBuilt;
  return CropClass::Discard;
}

} // namespace

TEST(LabelFromMask, ThresholdExamples) {
  const ExtractionConfig cfg;
  EXPECT_EQ(label_from_mask(Raster::filled(128, 128, 1, 1.0), cfg), CropClass::Built);
  EXPECT_EQ(label_from_mask(mask_with_ones(100, 500), cfg), CropClass::NonBuilt); // f = 0.05
  EXPECT_EQ(label_from_mask(mask_with_ones(100, 5000), cfg), CropClass::Discard); // f = 0.5
}

TEST(LabelFromMask, ThresholdsAreStrict) {
  const ExtractionConfig cfg;
  EXPECT_EQ(label_from_mask(mask_with_ones(100, 7500), cfg), CropClass::Discard);
  EXPECT_EQ(label_from_mask(mask_with_ones(100, 7501), cfg), CropClass::Built);
  EXPECT_EQ(label_from_mask(mask_with_ones(100, 1000), cfg), CropClass::Discard);
  EXPECT_EQ(label_from_mask(mask_with_ones(100, 999), cfg), CropClass::NonBuilt);
}

TEST(LabelFromMask, NonBinaryThrows) {
  EXPECT_THROW(label_from_mask(Raster::filled(4, 4, 1, 0.5), ExtractionConfig{}), InvalidArgument);
}

TEST(ExtractPatches, AllOnesMaskGivesBuilt) {
  std::mt19937_64 rng(1);
  const Raster image = oracle::random_raster(256, 256, 3, rng);
  ExtractionConfig cfg;
  cfg.patches_per_image = 10;
  const auto p = extract_patches(image, Raster::filled(256, 256, 1, 1.0), cfg);
  ASSERT_EQ(p.size(), 10u);
  for (const auto& lp : p) {
    EXPECT_EQ(lp.label, PatchLabel::Built);
    EXPECT_EQ(lp.pixels.width(), 64u);
    EXPECT_EQ(lp.pixels.channels(), 3u);
    EXPECT_FALSE(lp.augmented);
  }
}

TEST(ExtractPatches, AllZerosMaskGivesNonBuilt) {
  std::mt19937_64 rng(2);
  const Raster image = oracle::random_raster(200, 150, 3, rng);
  ExtractionConfig cfg;
  cfg.patches_per_image = 12;
  const auto p = extract_patches(image, Raster::filled(200, 150, 1, 0.0), cfg);
  ASSERT_EQ(p.size(), 12u);
  for (const auto& lp : p)
    EXPECT_EQ(lp.label, PatchLabel::NonBuilt);
}

TEST(ExtractPatches, CheckerboardIsAllDiscard) {
  std::vector<double> v(256 * 256);
  for (std::size_t r = 0; r < 256; ++r)
    for (std::size_t c = 0; c < 256; ++c)
      v[r * 256 + c] = (r + c) % 2 == 0 ? 1.0 : 0.0;
  const Raster mask(256, 256, 1, v);
  // Every 128x128 crop of a checkerboard has exactly half its pixels set.
  for (std::size_t o : {0u, 1u, 57u, 128u})
    EXPECT_EQ(counting_oracle(mask.crop(o, o / 2, 128, 128), 0.75, 0.1), CropClass::Discard);
  ExtractionConfig cfg;
  cfg.patches_per_image = 50;
  EXPECT_TRUE(extract_patches(Raster::filled(256, 256, 3, 0.5), mask, cfg).empty());
}

TEST(ExtractPatches, PatchesAreAreaDownsampledCrops) {
  std::mt19937_64 rng(3);
  const Raster image = oracle::random_raster(300, 260, 3, rng);
  ExtractionConfig cfg;
  cfg.patches_per_image = 5;
  for (const auto& lp : extract_patches(image, Raster::filled(300, 260, 1, 1.0), cfg)) {
    for (std::size_t r = 0; r < 64; ++r)
      for (std::size_t c = 0; c < 64; ++c) {
        const std::size_t x = lp.origin_col + 2 * c, y = lp.origin_row + 2 * r;
        const double m = (image.at(x, y, 1) + image.at(x + 1, y, 1) + image.at(x, y + 1, 1) +
                          image.at(x + 1, y + 1, 1)) /
                         4.0;
        ASSERT_NEAR(lp.pixels.at(c, r, 1), m, 1e-15);
      }
  }
}

TEST(ExtractPatches, LabelAuditAndDeterminism) {
  const auto corpus = generate_synthetic_corpus(4, 384, 77);
  ExtractionConfig cfg;
  cfg.patches_per_image = 40;
  cfg.rng_seed = 5;
  for (const auto& img : corpus) {
    const auto a = extract_patches(img.image, img.mask, cfg, "x");
    const auto b = extract_patches(img.image, img.mask, cfg, "x");
    EXPECT_EQ(a, b);
    for (const auto& lp : a) {
      const Raster crop = img.mask.crop(lp.origin_col, lp.origin_row, 128, 128);
      const CropClass want = counting_oracle(crop, 0.75, 0.1);
      ASSERT_NE(want, CropClass::Discard);
      EXPECT_EQ(lp.label, want == CropClass::Built ? PatchLabel::Built : PatchLabel::NonBuilt);
    }
  }
}

TEST(ExtractPatches, Errors) {
  ExtractionConfig cfg;
  EXPECT_THROW(extract_patches(Raster::filled(200, 200, 3, 0), Raster::filled(100, 200, 1, 0), cfg),
               InvalidArgument);
  EXPECT_THROW(extract_patches(Raster::filled(100, 100, 3, 0), Raster::filled(100, 100, 1, 0), cfg),
               InvalidArgument);
  cfg.neg_threshold = 0.8;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(Jitter, UniformPatchCopiesAreIdentical) {
  const LabeledPatch p{Raster::filled(64, 64, 3, 0.3), PatchLabel::Built, "u", 0, 0, false};
  const auto all = jitter(p);
  ASSERT_EQ(all.size(), 8u);
  for (std::size_t i = 0; i < all.size(); ++i) {
    EXPECT_EQ(all[i].pixels, p.pixels);
    EXPECT_EQ(all[i].label, PatchLabel::Built);
    EXPECT_EQ(all[i].augmented, i > 0);
  }
}

TEST(Jitter, HorizontalFlipIndexArithmetic) {
  std::vector<double> v(64 * 64 * 3, 0.0);
  v[(2 * 64 + 1) * 3 + 0] = 1.0; // (col 1, row 2)
  const Raster patch(64, 64, 3, v);
  const Raster flipped = apply_dihedral(patch, Dihedral::FlipHorizontal);
  EXPECT_EQ(flipped.at(62, 2, 0), 1.0);
  double sum = 0.0;
  for (double x : flipped.values())
    sum += x;
  EXPECT_EQ(sum, 1.0);
}

TEST(Jitter, GroupStructure) {
  std::mt19937_64 rng(4);
  const Raster p = oracle::random_raster(64, 64, 3, rng);
  EXPECT_EQ(apply_dihedral(apply_dihedral(p, Dihedral::Rotate180), Dihedral::Rotate180), p);
  EXPECT_EQ(apply_dihedral(apply_dihedral(p, Dihedral::Rotate90), Dihedral::Rotate270), p);
  EXPECT_EQ(apply_dihedral(apply_dihedral(p, Dihedral::FlipVertical), Dihedral::FlipVertical), p);
  // Eight distinct images of a random patch.
  std::set<std::vector<double>> seen;
  for (Dihedral d : kDihedralGroup) {
    const Raster q = apply_dihedral(p, d);
    seen.insert(std::vector<double>(q.values().begin(), q.values().end()));
  }
  EXPECT_EQ(seen.size(), 8u);
}

TEST(Jitter, SampledCopiesKeepLabels) {
  std::mt19937_64 rng(5);
  const LabeledPatch p{oracle::random_raster(64, 64, 3, rng), PatchLabel::NonBuilt, "s", 3, 4, false};
  const auto out = jitter(p, rng, 3);
  ASSERT_EQ(out.size(), 4u);
  EXPECT_EQ(out[0], p);
  for (std::size_t i = 1; i < out.size(); ++i) {
    EXPECT_EQ(out[i].label, PatchLabel::NonBuilt);
    EXPECT_TRUE(out[i].augmented);
    EXPECT_NE(out[i].pixels, p.pixels);
  }
}

TEST(SyntheticCorpus, DeterministicPerSeed) {
  const auto a = generate_synthetic_corpus(3, 128, 42, {1, 2, 10, 30, 0.25});
  const auto b = generate_synthetic_corpus(3, 128, 42, {1, 2, 10, 30, 0.25});
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].mask, b[i].mask);
  }
}

TEST(SyntheticCorpus, MaskMatchesBlobsAndDensityBounds) {
  const SyntheticConfig cfg{1, 3, 20, 40, 0.25};
  const std::size_t size = 200;
  for (const auto& img : generate_synthetic_corpus(5, size, 9, cfg)) {
    ASSERT_GE(img.blobs.size(), 1u);
    ASSERT_LE(img.blobs.size(), 3u);
    std::size_t ones = 0;
    for (std::size_t r = 0; r < size; ++r)
      for (std::size_t c = 0; c < size; ++c) {
        bool inside = false;
        for (const Blob& b : img.blobs) {
          const double dx = c + 0.5 - b.center_col, dy = r + 0.5 - b.center_row;
          const double u = dx * std::cos(b.angle) + dy * std::sin(b.angle);
          const double v = -dx * std::sin(b.angle) + dy * std::cos(b.angle);
          inside = inside || u * u / (b.semi_a * b.semi_a) + v * v / (b.semi_b * b.semi_b) <= 1.0;
        }
        ASSERT_EQ(img.mask.at(c, r), inside ? 1.0 : 0.0);
        ones += inside;
      }
    // Union of ellipses lies between the smallest possible single blob and the sum of the largest.
    const double frac = static_cast<double>(ones) / (size * size);
    EXPECT_GT(frac, 0.9 * 3.14159 * 20 * 20 / (size * size));
    EXPECT_LT(frac, 3 * 3.14159 * 41 * 41 / (size * size));
  }
}

TEST(SyntheticCorpus, BlobFreeConfigGivesEmptyMasks) {
  for (const auto& img : generate_synthetic_corpus(2, 64, 1, {0, 0, 10, 20, 0.25}))
    for (double v : img.mask.values())
      EXPECT_EQ(v, 0.0);
}
