#pragma once

#include <dmap/error.hpp>
#include <dmap/raster.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace dmap {

enum class PatchLabel : std::uint8_t { NonBuilt = 0, Built = 1 };
enum class CropClass { Built, NonBuilt, Discard };

struct LabeledPatch {
  Raster pixels; // out_size x out_size x 3
  PatchLabel label = PatchLabel::NonBuilt;
  std::string source_id;
  std::size_t origin_col = 0; // top-left of the crop in the source image
  std::size_t origin_row = 0;
  bool augmented = false;

  friend bool operator==(const LabeledPatch&, const LabeledPatch&) = default;
};

struct ExtractionConfig {
  std::size_t crop_size = 128;
  std::size_t out_size = 64;
  double pos_threshold = 0.75;
  double neg_threshold = 0.1;
  std::size_t patches_per_image = 32;
  std::uint64_t rng_seed = 1;

  void validate() const {
    detail::require(neg_threshold >= 0.0 && neg_threshold < pos_threshold && pos_threshold <= 1.0,
                    "ExtractionConfig: need 0 <= neg_threshold < pos_threshold <= 1");
    detail::require(out_size > 0 && crop_size >= out_size,
                    "ExtractionConfig: need crop_size >= out_size > 0");
    detail::require(crop_size % out_size == 0,
                    "ExtractionConfig: crop_size must be a multiple of out_size");
  }
};

/// Ones-fraction of a binary crop; throws on non-binary values.
inline double mask_fraction(const Raster& mask_crop) {
  if (mask_crop.empty())
    throw InvalidArgument("mask_fraction: empty crop");
  std::size_t ones = 0;
  for (double v : mask_crop.values()) {
    if (v == 1.0)
      ++ones;
    else if (v != 0.0)
      throw InvalidArgument("label_from_mask: non-binary mask value " + std::to_string(v));
  }
  return static_cast<double>(ones) / static_cast<double>(mask_crop.size());
}

/// Strict thresholds: f > pos -> Built, f < neg -> NonBuilt, anything else is discarded.
inline CropClass label_from_mask(const Raster& mask_crop, const ExtractionConfig& cfg) {
  const double f = mask_fraction(mask_crop);
  if (f > cfg.pos_threshold)
    return CropClass::Built;
  if (f < cfg.neg_threshold)
    return CropClass::NonBuilt;
  return CropClass::Discard;
}

inline std::vector<LabeledPatch> extract_patches(const Raster& image, const Raster& mask,
                                                 const ExtractionConfig& cfg, std::mt19937_64& rng,
                                                 const std::string& source_id = {}) {
  cfg.validate();
  if (image.width() != mask.width() || image.height() != mask.height())
    throw InvalidArgument("extract_patches: image and mask sizes differ");
  if (mask.channels() != 1)
    throw InvalidArgument("extract_patches: mask must be single-channel");
  if (image.width() < cfg.crop_size || image.height() < cfg.crop_size)
    throw InvalidArgument("extract_patches: image smaller than crop size");

  std::uniform_int_distribution<std::size_t> col_dist(0, image.width() - cfg.crop_size);
  std::uniform_int_distribution<std::size_t> row_dist(0, image.height() - cfg.crop_size);
  const std::size_t factor = cfg.crop_size / cfg.out_size;

  std::vector<LabeledPatch> out;
  for (std::size_t i = 0; i < cfg.patches_per_image; ++i) {
    const std::size_t col = col_dist(rng);
    const std::size_t row = row_dist(rng);
    const CropClass cls = label_from_mask(mask.crop(col, row, cfg.crop_size, cfg.crop_size), cfg);
    if (cls == CropClass::Discard)
      continue;
    Raster pixels = area_downsample(image.crop(col, row, cfg.crop_size, cfg.crop_size), factor)
                        .with_geo(std::nullopt);
    out.push_back({std::move(pixels),
                   cls == CropClass::Built ? PatchLabel::Built : PatchLabel::NonBuilt, source_id,
                   col, row, false});
  }
  return out;
}

inline std::vector<LabeledPatch> extract_patches(const Raster& image, const Raster& mask,
                                                 const ExtractionConfig& cfg,
                                                 const std::string& source_id = {}) {
  std::mt19937_64 rng(cfg.rng_seed);
  return extract_patches(image, mask, cfg, rng, source_id);
}

/// The eight symmetries of the square, as maps of (col,row) on an n x n grid.
enum class Dihedral : std::uint8_t {
  Identity,
  FlipHorizontal,
  FlipVertical,
  Rotate180,
  Transpose,
  Rotate90,
  Rotate270,
  AntiTranspose
};

inline constexpr std::array<Dihedral, 8> kDihedralGroup = {
    Dihedral::Identity,  Dihedral::FlipHorizontal, Dihedral::FlipVertical, Dihedral::Rotate180,
    Dihedral::Transpose, Dihedral::Rotate90,       Dihedral::Rotate270,    Dihedral::AntiTranspose};

/// Where source pixel (c,r) lands under `t`.
inline std::pair<std::size_t, std::size_t> dihedral_map(Dihedral t, std::size_t c, std::size_t r,
                                                        std::size_t n) {
  const std::size_t m = n - 1;
  switch (t) {
  case Dihedral::Identity: return {c, r};
  case Dihedral::FlipHorizontal: return {m - c, r};
  case Dihedral::FlipVertical: return {c, m - r};
  case Dihedral::Rotate180: return {m - c, m - r};
  case Dihedral::Transpose: return {r, c};
  case Dihedral::Rotate90: return {r, m - c};
  case Dihedral::Rotate270: return {m - r, c};
  case Dihedral::AntiTranspose: return {m - r, m - c};
  }
  return {c, r};
}

inline Raster apply_dihedral(const Raster& src, Dihedral t) {
  if (src.width() != src.height())
    throw InvalidArgument("apply_dihedral: raster must be square");
  const std::size_t n = src.width();
  const std::size_t ch = src.channels();
  std::vector<double> out(src.size());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const auto [dc, dr] = dihedral_map(t, c, r, n);
      for (std::size_t k = 0; k < ch; ++k)
        out[(dr * n + dc) * ch + k] = src.at(c, r, k);
    }
  return Raster(n, n, ch, std::move(out), std::nullopt, src.range());
}

/// The patch followed by its seven dihedral images, labels unchanged.
inline std::vector<LabeledPatch> jitter(const LabeledPatch& patch) {
  std::vector<LabeledPatch> out;
  out.reserve(kDihedralGroup.size());
  out.push_back(patch);
  for (std::size_t i = 1; i < kDihedralGroup.size(); ++i) {
    LabeledPatch copy = patch;
    copy.pixels = apply_dihedral(patch.pixels, kDihedralGroup[i]);
    copy.augmented = true;
    out.push_back(std::move(copy));
  }
  return out;
}

/// The patch plus `copies` distinct non-identity symmetries drawn from `rng`.
inline std::vector<LabeledPatch> jitter(const LabeledPatch& patch, std::mt19937_64& rng,
                                        std::size_t copies) {
  std::array<Dihedral, 7> pool{};
  std::copy(kDihedralGroup.begin() + 1, kDihedralGroup.end(), pool.begin());
  std::shuffle(pool.begin(), pool.end(), rng);
  std::vector<LabeledPatch> out{patch};
  for (std::size_t i = 0; i < std::min(copies, pool.size()); ++i) {
    LabeledPatch copy = patch;
    copy.pixels = apply_dihedral(patch.pixels, pool[i]);
    copy.augmented = true;
    out.push_back(std::move(copy));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic village-texture corpus

struct SyntheticConfig {
  std::size_t blobs_min = 1;
  std::size_t blobs_max = 3;
  double radius_min = 40.0; // semi-axis bounds, pixels
  double radius_max = 100.0;
  double texture_contrast = 0.25;

  void validate(std::size_t size) const {
    detail::require(blobs_min <= blobs_max, "SyntheticConfig: blobs_min > blobs_max");
    detail::require(blobs_max == 0 || (radius_min > 0.0 && radius_min <= radius_max),
                    "SyntheticConfig: invalid radius bounds");
    detail::require(blobs_max == 0 || 2.0 * radius_max + 2.0 < static_cast<double>(size),
                    "SyntheticConfig: blobs do not fit in the image");
  }
};

/// Rotated ellipse in pixel coordinates.
struct Blob {
  double center_col = 0.0;
  double center_row = 0.0;
  double semi_a = 0.0;
  double semi_b = 0.0;
  double angle = 0.0;

  bool contains(double col, double row) const {
    const double dx = col - center_col;
    const double dy = row - center_row;
    const double u = dx * std::cos(angle) + dy * std::sin(angle);
    const double v = -dx * std::sin(angle) + dy * std::cos(angle);
    return (u * u) / (semi_a * semi_a) + (v * v) / (semi_b * semi_b) <= 1.0;
  }
};

struct SyntheticImage {
  Raster image; // size x size x 3
  Raster mask;  // size x size x 1, exactly 1 on blob pixels
  std::vector<Blob> blobs;
};

/// One image: smooth sand-coloured ground with high-frequency "rooftop" blobs.
inline SyntheticImage generate_synthetic_image(std::size_t size, const SyntheticConfig& cfg,
                                               std::mt19937_64& rng) {
  cfg.validate(size);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> grain(0.0, 0.01);

  const std::size_t n_blobs =
      std::uniform_int_distribution<std::size_t>(cfg.blobs_min, cfg.blobs_max)(rng);
  std::vector<Blob> blobs;
  for (std::size_t i = 0; i < n_blobs; ++i) {
    Blob b;
    b.semi_a = cfg.radius_min + (cfg.radius_max - cfg.radius_min) * unit(rng);
    b.semi_b = cfg.radius_min + (cfg.radius_max - cfg.radius_min) * unit(rng);
    b.angle = std::numbers::pi * unit(rng);
    const double margin = cfg.radius_max + 1.0;
    b.center_col = margin + (static_cast<double>(size) - 2.0 * margin) * unit(rng);
    b.center_row = margin + (static_cast<double>(size) - 2.0 * margin) * unit(rng);
    blobs.push_back(b);
  }

  // Ground: two low-frequency undulations over a sand base colour.
  const double phase_x = 2.0 * std::numbers::pi * unit(rng);
  const double phase_y = 2.0 * std::numbers::pi * unit(rng);
  const double freq = 2.0 * std::numbers::pi / (static_cast<double>(size) * (0.5 + unit(rng)));
  constexpr std::array<double, 3> sand = {0.76, 0.66, 0.48};
  constexpr std::array<double, 3> roof = {0.55, 0.52, 0.50};

  std::vector<double> img(size * size * 3);
  std::vector<double> msk(size * size, 0.0);
  // Houses are 2x2 cells with a random tone.
  const std::size_t cells = (size + 1) / 2;
  std::vector<double> tone(cells * cells);
  for (double& t : tone)
    t = unit(rng) < 0.5 ? -1.0 : 1.0;

  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c) {
      const double x = static_cast<double>(c) + 0.5;
      const double y = static_cast<double>(r) + 0.5;
      bool built = false;
      for (const Blob& b : blobs)
        built = built || b.contains(x, y);
      const double wave = 0.05 * std::sin(freq * x + phase_x) * std::cos(freq * y + phase_y);
      for (std::size_t k = 0; k < 3; ++k) {
        double v = sand[k] + wave + grain(rng);
        if (built) {
          const double t = tone[(r / 2) * cells + c / 2];
          v = roof[k] + cfg.texture_contrast * t + 0.05 * (unit(rng) - 0.5);
        }
        img[(r * size + c) * 3 + k] = std::clamp(v, 0.0, 1.0);
      }
      msk[r * size + c] = built ? 1.0 : 0.0;
    }

  return {Raster(size, size, 3, std::move(img)), Raster(size, size, 1, std::move(msk)),
          std::move(blobs)};
}

inline std::vector<SyntheticImage> generate_synthetic_corpus(std::size_t n_images, std::size_t size,
                                                             std::uint64_t rng_seed,
                                                             const SyntheticConfig& cfg = {}) {
  if (n_images < 1)
    throw InvalidArgument("generate_synthetic_corpus: n_images must be >= 1");
  std::mt19937_64 rng(rng_seed);
  std::vector<SyntheticImage> out;
  out.reserve(n_images);
  for (std::size_t i = 0; i < n_images; ++i)
    out.push_back(generate_synthetic_image(size, cfg, rng));
  return out;
}

} // namespace dmap
