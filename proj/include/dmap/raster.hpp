#pragma once

#include <dmap/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dmap {

/// Affine pixel (col,row) -> world (lon,lat) mapping, world-file model.
struct GeoTransform {
  double origin_lon = 0.0;
  double origin_lat = 0.0;
  double px_w = 1.0;   // degrees per column, east
  double px_h = -1.0;  // degrees per row, south (negative)
  double skew_x = 0.0; // lon change per row
  double skew_y = 0.0; // lat change per column

  double determinant() const { return px_w * px_h - skew_x * skew_y; }

  bool valid() const {
    return std::isfinite(origin_lon) && std::isfinite(origin_lat) && px_w > 0.0 && px_h < 0.0 &&
           determinant() != 0.0;
  }

  friend bool operator==(const GeoTransform&, const GeoTransform&) = default;
};

struct LonLat {
  double lon = 0.0;
  double lat = 0.0;
  friend bool operator==(const LonLat&, const LonLat&) = default;
};

struct PixelPoint {
  double col = 0.0;
  double row = 0.0;
  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

inline LonLat pixel_to_world(const GeoTransform& gt, double col, double row) {
  return {gt.origin_lon + col * gt.px_w + row * gt.skew_x,
          gt.origin_lat + col * gt.skew_y + row * gt.px_h};
}

inline PixelPoint world_to_pixel(const GeoTransform& gt, double lon, double lat) {
  const double det = gt.determinant();
  if (det == 0.0 || !std::isfinite(det))
    throw InvalidArgument("world_to_pixel: singular geotransform");
  const double dx = lon - gt.origin_lon;
  const double dy = lat - gt.origin_lat;
  return {(gt.px_h * dx - gt.skew_x * dy) / det, (gt.px_w * dy - gt.skew_y * dx) / det};
}

/// Value convention of a raster: imagery/masks/probabilities live in [0,1];
/// mean-subtracted rasters live in [-1,1].
enum class ValueRange { Unit, Centered };

/// H x W x C grid, row-major with interleaved channels: index (row*W + col)*C + ch.
/// Immutable once constructed.
class Raster {
public:
  Raster() = default;

  Raster(std::size_t width, std::size_t height, std::size_t channels, std::vector<double> values,
         std::optional<GeoTransform> geo = std::nullopt, ValueRange range = ValueRange::Unit)
      : width_(width), height_(height), channels_(channels), values_(std::move(values)),
        geo_(geo), range_(range) {
    if (values_.size() != width_ * height_ * channels_)
      throw InvalidArgument("Raster: value count " + std::to_string(values_.size()) +
                            " does not match " + std::to_string(width_) + "x" +
                            std::to_string(height_) + "x" + std::to_string(channels_));
    const double lo = range_ == ValueRange::Unit ? 0.0 : -1.0;
    for (double v : values_)
      if (!(v >= lo && v <= 1.0))
        throw InvalidArgument("Raster: value " + std::to_string(v) + " outside allowed range");
    if (geo_ && !geo_->valid())
      throw InvalidArgument("Raster: invalid geotransform");
  }

  static Raster filled(std::size_t width, std::size_t height, std::size_t channels, double value,
                       std::optional<GeoTransform> geo = std::nullopt) {
    return Raster(width, height, channels, std::vector<double>(width * height * channels, value),
                  geo);
  }

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t channels() const { return channels_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  bool centered() const { return range_ == ValueRange::Centered; }
  ValueRange range() const { return range_; }
  const std::optional<GeoTransform>& geo() const { return geo_; }
  std::span<const double> values() const { return values_; }

  std::size_t index(std::size_t col, std::size_t row, std::size_t ch = 0) const {
    return (row * width_ + col) * channels_ + ch;
  }
  double at(std::size_t col, std::size_t row, std::size_t ch = 0) const {
    return values_[index(col, row, ch)];
  }

  bool same_shape(const Raster& other) const {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

  Raster with_geo(std::optional<GeoTransform> geo) const {
    return Raster(width_, height_, channels_, values_, geo, range_);
  }

  /// Copy of the rectangle [col, col+w) x [row, row+h); geo-reference shifted accordingly.
  Raster crop(std::size_t col, std::size_t row, std::size_t w, std::size_t h) const {
    if (col + w > width_ || row + h > height_)
      throw InvalidArgument("Raster::crop: window out of bounds");
    std::vector<double> out;
    out.reserve(w * h * channels_);
    for (std::size_t r = row; r < row + h; ++r) {
      const auto first = values_.begin() + static_cast<std::ptrdiff_t>(index(col, r));
      out.insert(out.end(), first, first + static_cast<std::ptrdiff_t>(w * channels_));
    }
    std::optional<GeoTransform> geo;
    if (geo_) {
      geo = *geo_;
      const LonLat o = pixel_to_world(*geo_, static_cast<double>(col), static_cast<double>(row));
      geo->origin_lon = o.lon;
      geo->origin_lat = o.lat;
    }
    return Raster(w, h, channels_, std::move(out), geo, range_);
  }

  friend bool operator==(const Raster&, const Raster&) = default;

private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> values_;
  std::optional<GeoTransform> geo_;
  ValueRange range_ = ValueRange::Unit;
};

/// Per-pixel, per-channel mean over a patch set.
struct MeanImage {
  Raster pixels;
};

/// Align-corners bilinear resampling: source coordinate = t*(src-1)/(dst-1).
inline Raster bilinear_upsample(const Raster& src, std::size_t out_w, std::size_t out_h) {
  if (src.empty())
    throw InvalidArgument("bilinear_upsample: empty source raster");
  if (out_w == 0 || out_h == 0)
    throw InvalidArgument("bilinear_upsample: zero target dimension");
  if (out_w < src.width() || out_h < src.height())
    throw InvalidArgument("bilinear_upsample: target smaller than source");

  const std::size_t ch = src.channels();
  auto source_coord = [](std::size_t t, std::size_t src_n, std::size_t dst_n) {
    if (dst_n == 1 || src_n == 1)
      return 0.0;
    return static_cast<double>(t) * static_cast<double>(src_n - 1) / static_cast<double>(dst_n - 1);
  };

  std::vector<double> out(out_w * out_h * ch);
  for (std::size_t r = 0; r < out_h; ++r) {
    const double sy = source_coord(r, src.height(), out_h);
    const auto y0 = std::min(static_cast<std::size_t>(sy), src.height() - 1);
    const std::size_t y1 = std::min(y0 + 1, src.height() - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t c = 0; c < out_w; ++c) {
      const double sx = source_coord(c, src.width(), out_w);
      const auto x0 = std::min(static_cast<std::size_t>(sx), src.width() - 1);
      const std::size_t x1 = std::min(x0 + 1, src.width() - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t k = 0; k < ch; ++k) {
        const double top = (1.0 - fx) * src.at(x0, y0, k) + fx * src.at(x1, y0, k);
        const double bottom = (1.0 - fx) * src.at(x0, y1, k) + fx * src.at(x1, y1, k);
        // Clamp guards the convex-combination bound against rounding.
        const double lo = std::min({src.at(x0, y0, k), src.at(x1, y0, k), src.at(x0, y1, k),
                                    src.at(x1, y1, k)});
        const double hi = std::max({src.at(x0, y0, k), src.at(x1, y0, k), src.at(x0, y1, k),
                                    src.at(x1, y1, k)});
        out[(r * out_w + c) * ch + k] = std::clamp((1.0 - fy) * top + fy * bottom, lo, hi);
      }
    }
  }

  std::optional<GeoTransform> geo;
  if (src.geo()) {
    // Keep the footprint: the output spans the same world extent as the source.
    geo = *src.geo();
    const double sx = static_cast<double>(src.width()) / static_cast<double>(out_w);
    const double sy = static_cast<double>(src.height()) / static_cast<double>(out_h);
    geo->px_w *= sx;
    geo->skew_y *= sx;
    geo->px_h *= sy;
    geo->skew_x *= sy;
  }
  return Raster(out_w, out_h, ch, std::move(out), geo, src.range());
}

/// Integer-factor box downsample (each output pixel is the mean of a factor x factor block).
inline Raster area_downsample(const Raster& src, std::size_t factor) {
  if (factor == 0)
    throw InvalidArgument("area_downsample: zero factor");
  if (src.width() % factor != 0 || src.height() % factor != 0)
    throw InvalidArgument("area_downsample: size not divisible by factor");
  const std::size_t w = src.width() / factor;
  const std::size_t h = src.height() / factor;
  const std::size_t ch = src.channels();
  const double inv = 1.0 / static_cast<double>(factor * factor);
  std::vector<double> out(w * h * ch, 0.0);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      for (std::size_t k = 0; k < ch; ++k) {
        double sum = 0.0;
        for (std::size_t dy = 0; dy < factor; ++dy)
          for (std::size_t dx = 0; dx < factor; ++dx)
            sum += src.at(c * factor + dx, r * factor + dy, k);
        out[(r * w + c) * ch + k] = std::clamp(sum * inv, src.centered() ? -1.0 : 0.0, 1.0);
      }
  std::optional<GeoTransform> geo;
  if (src.geo()) {
    geo = *src.geo();
    const auto f = static_cast<double>(factor);
    geo->px_w *= f;
    geo->px_h *= f;
    geo->skew_x *= f;
    geo->skew_y *= f;
  }
  return Raster(w, h, ch, std::move(out), geo, src.range());
}

inline MeanImage compute_mean_image(std::span<const Raster> patches) {
  if (patches.empty())
    throw InvalidArgument("compute_mean_image: empty patch list");
  const Raster& first = patches.front();
  std::vector<double> sum(first.size(), 0.0);
  for (const Raster& p : patches) {
    if (!p.same_shape(first))
      throw InvalidArgument("compute_mean_image: patch shape mismatch");
    const auto v = p.values();
    for (std::size_t i = 0; i < sum.size(); ++i)
      sum[i] += v[i];
  }
  const auto n = static_cast<double>(patches.size());
  for (double& s : sum)
    s = std::clamp(s / n, 0.0, 1.0);
  return {Raster(first.width(), first.height(), first.channels(), std::move(sum))};
}

inline Raster subtract_mean(const Raster& patch, const MeanImage& mean) {
  if (!patch.same_shape(mean.pixels))
    throw InvalidArgument("subtract_mean: patch and mean image shapes differ");
  const auto p = patch.values();
  const auto m = mean.pixels.values();
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = p[i] - m[i];
  return Raster(patch.width(), patch.height(), patch.channels(), std::move(out), patch.geo(),
                ValueRange::Centered);
}

/// Mean subtraction for areas larger than one patch: the mean image is tiled
/// with period equal to its size.
inline Raster subtract_mean_tiled(const Raster& area, const MeanImage& mean) {
  const Raster& m = mean.pixels;
  if (area.channels() != m.channels() || m.empty())
    throw InvalidArgument("subtract_mean_tiled: channel mismatch");
  std::vector<double> out(area.size());
  for (std::size_t r = 0; r < area.height(); ++r)
    for (std::size_t c = 0; c < area.width(); ++c)
      for (std::size_t k = 0; k < area.channels(); ++k)
        out[area.index(c, r, k)] = area.at(c, r, k) - m.at(c % m.width(), r % m.height(), k);
  return Raster(area.width(), area.height(), area.channels(), std::move(out), area.geo(),
                ValueRange::Centered);
}

} // namespace dmap
