#pragma once

// Binary containers for intermediate pipeline artifacts (little-endian).
//
// DMRAST1 raster:
//   "DMRAST1", width u32, height u32, channels u32, centered u8, has_geo u8,
//   [origin_lon, origin_lat, px_w, px_h, skew_x, skew_y as f64 if has_geo],
//   values f64[width*height*channels]
//
// DMPTCH1 labelled patch set:
//   "DMPTCH1", count u32, then per patch:
//   label u8, augmented u8, origin_col u32, origin_row u32,
//   source_id_len u32, source_id bytes, width u32, height u32, channels u32,
//   centered u8, values f64[...]

#include <dmap/dataset.hpp>
#include <dmap/io/binary.hpp>
#include <dmap/raster.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace dmap::io {

inline constexpr std::string_view kRasterMagic = "DMRAST1";
inline constexpr std::string_view kPatchMagic = "DMPTCH1";

namespace detail {

inline void put_raster_body(ByteWriter& w, const Raster& r, bool with_geo) {
  w.u32(r.width());
  w.u32(r.height());
  w.u32(r.channels());
  w.u8(r.centered() ? 1 : 0);
  if (with_geo) {
    w.u8(r.geo() ? 1 : 0);
    if (const auto& g = r.geo())
      for (double v : {g->origin_lon, g->origin_lat, g->px_w, g->px_h, g->skew_x, g->skew_y})
        w.f64(v);
  }
  for (double v : r.values())
    w.f64(v);
}

inline Raster get_raster_body(ByteReader& r, bool with_geo, std::size_t size_hint) {
  const std::size_t w = r.u32();
  const std::size_t h = r.u32();
  const std::size_t c = r.u32();
  const auto range = r.u8() ? ValueRange::Centered : ValueRange::Unit;
  std::optional<GeoTransform> geo;
  if (with_geo && r.u8()) {
    GeoTransform g;
    g.origin_lon = r.f64();
    g.origin_lat = r.f64();
    g.px_w = r.f64();
    g.px_h = r.f64();
    g.skew_x = r.f64();
    g.skew_y = r.f64();
    geo = g;
  }
  if (w * h * c > size_hint)
    throw ValidationError("raster container: dimensions exceed file size");
  auto values = r.f64s(w * h * c);
  try {
    return Raster(w, h, c, std::move(values), geo, range);
  } catch (const InvalidArgument& e) {
    throw ValidationError(std::string("raster container: ") + e.what());
  }
}

} // namespace detail

inline std::string encode_raster(const Raster& raster) {
  ByteWriter w;
  w.bytes(kRasterMagic);
  detail::put_raster_body(w, raster, true);
  return w.data();
}

inline Raster decode_raster(std::string_view bytes) {
  ByteReader r(bytes, "DMRAST1");
  r.expect(kRasterMagic);
  Raster out = detail::get_raster_body(r, true, bytes.size());
  r.expect_end();
  return out;
}

inline void save_raster(const Raster& raster, const std::string& path) {
  write_file(path, encode_raster(raster));
}
inline Raster load_raster(const std::string& path) { return decode_raster(read_file(path)); }

inline std::string encode_patches(const std::vector<LabeledPatch>& patches) {
  ByteWriter w;
  w.bytes(kPatchMagic);
  w.u32(patches.size());
  for (const LabeledPatch& p : patches) {
    w.u8(static_cast<std::uint8_t>(p.label));
    w.u8(p.augmented ? 1 : 0);
    w.u32(p.origin_col);
    w.u32(p.origin_row);
    w.u32(p.source_id.size());
    w.bytes(p.source_id);
    detail::put_raster_body(w, p.pixels, false);
  }
  return w.data();
}

inline std::vector<LabeledPatch> decode_patches(std::string_view bytes) {
  ByteReader r(bytes, "DMPTCH1");
  r.expect(kPatchMagic);
  const std::size_t n = r.u32();
  std::vector<LabeledPatch> out;
  for (std::size_t i = 0; i < n; ++i) {
    LabeledPatch p;
    const std::uint8_t label = r.u8();
    if (label > 1)
      throw ValidationError("DMPTCH1: invalid label");
    p.label = static_cast<PatchLabel>(label);
    p.augmented = r.u8() != 0;
    p.origin_col = r.u32();
    p.origin_row = r.u32();
    p.source_id = r.str(r.u32());
    p.pixels = detail::get_raster_body(r, false, bytes.size());
    out.push_back(std::move(p));
  }
  r.expect_end();
  return out;
}

inline void save_patches(const std::vector<LabeledPatch>& patches, const std::string& path) {
  write_file(path, encode_patches(patches));
}
inline std::vector<LabeledPatch> load_patches(const std::string& path) {
  return decode_patches(read_file(path));
}

} // namespace dmap::io
