#pragma once

#include <dmap/error.hpp>
#include <dmap/io/binary.hpp>
#include <dmap/raster.hpp>

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

namespace dmap::io {

/// Decodes an 8-bit PNG as RGB (channels=3) or grayscale (channels=1), scaled to [0,1].
inline Raster read_png(const std::string& path, std::size_t channels = 3) {
  if (channels != 1 && channels != 3)
    throw InvalidArgument("read_png: channels must be 1 or 3");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw IoError("cannot decode PNG '" + path + "': " + image.message);
  image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode PNG '" + path + "': " + image.message);
  }
  std::vector<double> values(buf.size());
  std::transform(buf.begin(), buf.end(), values.begin(),
                 [](std::uint8_t v) { return static_cast<double>(v) / 255.0; });
  return Raster(image.width, image.height, channels, std::move(values));
}

/// Encodes a 1- or 3-channel [0,1] raster as an 8-bit PNG (values rounded).
inline void write_png(const Raster& raster, const std::string& path) {
  if (raster.centered())
    throw InvalidArgument("write_png: centered rasters cannot be written as images");
  if (raster.channels() != 1 && raster.channels() != 3)
    throw InvalidArgument("write_png: channels must be 1 or 3");
  std::vector<std::uint8_t> buf(raster.size());
  const auto v = raster.values();
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v[i], 0.0, 1.0) * 255.0));
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(raster.width());
  image.height = static_cast<png_uint_32>(raster.height());
  image.format = raster.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr))
    throw IoError("cannot write PNG '" + path + "': " + image.message);
}

/// Six lines in ESRI order: px_w, skew_y, skew_x, px_h, origin_lon, origin_lat.
/// The origin is taken as the (0,0) pixel corner.
inline GeoTransform parse_world_file(const std::string& text, const std::string& where = "") {
  std::istringstream in(text);
  std::vector<double> v;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos)
      continue;
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(line.substr(first), &used);
    } catch (const std::exception&) {
      throw ValidationError("world file " + where + ": non-numeric line '" + line + "'");
    }
    if (line.find_first_not_of(" \t\r", first + used) != std::string::npos)
      throw ValidationError("world file " + where + ": trailing text in line '" + line + "'");
    v.push_back(x);
  }
  if (v.size() != 6)
    throw ValidationError("world file " + where + ": expected 6 numeric lines, found " +
                          std::to_string(v.size()));
  GeoTransform gt{v[4], v[5], v[0], v[3], v[2], v[1]};
  if (!gt.valid())
    throw ValidationError("world file " + where + ": invalid transform (need px_w > 0, px_h < 0)");
  return gt;
}

inline std::string format_world_file(const GeoTransform& gt) {
  std::string out;
  char buf[64];
  for (double x : {gt.px_w, gt.skew_y, gt.skew_x, gt.px_h, gt.origin_lon, gt.origin_lat}) {
    std::snprintf(buf, sizeof buf, "%.17g\n", x);
    out += buf;
  }
  return out;
}

inline GeoTransform read_world_file(const std::string& path) {
  return parse_world_file(read_file(path), "'" + path + "'");
}

inline void write_world_file(const GeoTransform& gt, const std::string& path) {
  write_file(path, format_world_file(gt));
}

inline Raster read_world_image(const std::string& image_path, const std::string& world_file_path) {
  const GeoTransform gt = read_world_file(world_file_path);
  return read_png(image_path, 3).with_geo(gt);
}

} // namespace dmap::io
