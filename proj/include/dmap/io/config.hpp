#pragma once

#include <dmap/convnet/train.hpp>
#include <dmap/dataset.hpp>
#include <dmap/error.hpp>
#include <dmap/geo.hpp>
#include <dmap/io/binary.hpp>
#include <dmap/io/kml.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace dmap::io {

/// Every tunable of the pipeline. Empty paths resolve inside output_dir.
struct PipelineConfig {
  std::uint64_t seed = 7;

  // synthetic corpus and scene
  std::size_t synth_images = 24;
  std::size_t synth_image_size = 512;
  std::size_t synth_blobs_min = 1;
  std::size_t synth_blobs_max = 3;
  double synth_radius_min = 80.0;
  double synth_radius_max = 160.0;
  std::size_t scene_size = 1024;
  std::size_t scene_blobs_min = 8;
  std::size_t scene_blobs_max = 12;
  double scene_radius_min = 50.0;
  double scene_radius_max = 90.0;
  double scene_origin_lon = 70.0;
  double scene_origin_lat = 29.0;
  double scene_pixel_deg = 0.0001;
  std::size_t synth_vaccinators = 8;
  std::size_t synth_activities = 600;
  std::size_t synth_schools = 60;

  // patch extraction
  std::size_t crop_size = 128;
  std::size_t out_size = 64;
  double pos_threshold = 0.75;
  double neg_threshold = 0.1;
  std::size_t patches_per_image = 32;
  std::size_t jitter_copies = 3;
  std::size_t mean_sample = 0; // patches used for the mean image; 0 = all

  // training
  std::string architecture = "compact";
  double learning_rate = 0.01;
  std::size_t epochs_per_round = 10;
  std::size_t mining_rounds = 5;
  std::size_t batch_size = 16;
  double mining_pool_fraction = 0.25;

  // post-processing
  double binarize_tau = 0.5;
  std::size_t morph_element = 3;
  std::size_t morph_iterations = 1;
  double simplify_epsilon = 1.0;
  std::size_t heat_cell_px = 16;
  std::string heat_color = "ff0000ff"; // aabbggrr

  // analytics
  double buffer_radius_m = 200.0;
  std::size_t buffer_vertices = 32;
  double coverage_cell_m = 10.0;
  std::string quarter_anchor = "2015-08-01";
  std::string quarter_end = "2016-12-31";
  std::size_t quarter_months = 3;

  // paths
  std::string output_dir = "out";
  std::string corpus_dir;
  std::string image;
  std::string world_file;
  std::string activities;
  std::string schools;
  std::string model;

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;

  ExtractionConfig extraction() const {
    return {crop_size, out_size, pos_threshold, neg_threshold, patches_per_image, seed};
  }

  nn::TrainConfig training() const {
    return {learning_rate, epochs_per_round, mining_rounds, batch_size, seed};
  }

  geo::QuarterWindow quarter_window() const {
    auto date = [](const std::string& s, const char* key) {
      const auto t = geo::parse_timestamp(s);
      if (!t)
        throw ValidationError(std::string("config: ") + key + " is not a date: '" + s + "'");
      return std::chrono::year_month_day(std::chrono::floor<std::chrono::days>(*t));
    };
    geo::QuarterWindow w;
    w.anchor = date(quarter_anchor, "quarter_anchor");
    w.last = date(quarter_end, "quarter_end");
    w.months_per_bucket = static_cast<unsigned>(quarter_months);
    return w;
  }

  geo::CorrelationParams correlation() const {
    return {{buffer_radius_m, buffer_vertices}, coverage_cell_m, quarter_window()};
  }

  GeoTransform scene_geotransform() const {
    return {scene_origin_lon, scene_origin_lat, scene_pixel_deg, -scene_pixel_deg, 0.0, 0.0};
  }
};

namespace detail {

struct ConfigField {
  std::string_view key;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, std::string_view)> set;
};

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_real(std::string_view key, std::string_view text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v))
    throw ValidationError("config: " + std::string(key) + " expects a number, got '" +
                          std::string(text) + "'");
  return v;
}

template <class T>
T parse_unsigned(std::string_view key, std::string_view text) {
  T v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ValidationError("config: " + std::string(key) + " expects a non-negative integer, got '" +
                          std::string(text) + "'");
  return v;
}

template <class T>
ConfigField unsigned_field(std::string_view key, T PipelineConfig::*member) {
  return {key, [member](const PipelineConfig& c) { return std::to_string(c.*member); },
          [key, member](PipelineConfig& c, std::string_view v) {
            c.*member = parse_unsigned<T>(key, v);
          }};
}

inline ConfigField real_field(std::string_view key, double PipelineConfig::*member) {
  return {key, [member](const PipelineConfig& c) { return format_real(c.*member); },
          [key, member](PipelineConfig& c, std::string_view v) { c.*member = parse_real(key, v); }};
}

inline ConfigField text_field(std::string_view key, std::string PipelineConfig::*member) {
  return {key, [member](const PipelineConfig& c) { return c.*member; },
          [member](PipelineConfig& c, std::string_view v) { c.*member = std::string(v); }};
}

inline const std::vector<ConfigField>& config_fields() {
  using C = PipelineConfig;
  static const std::vector<ConfigField> fields = {
      unsigned_field("seed", &C::seed),
      unsigned_field("synth_images", &C::synth_images),
      unsigned_field("synth_image_size", &C::synth_image_size),
      unsigned_field("synth_blobs_min", &C::synth_blobs_min),
      unsigned_field("synth_blobs_max", &C::synth_blobs_max),
      real_field("synth_radius_min", &C::synth_radius_min),
      real_field("synth_radius_max", &C::synth_radius_max),
      unsigned_field("scene_size", &C::scene_size),
      unsigned_field("scene_blobs_min", &C::scene_blobs_min),
      unsigned_field("scene_blobs_max", &C::scene_blobs_max),
      real_field("scene_radius_min", &C::scene_radius_min),
      real_field("scene_radius_max", &C::scene_radius_max),
      real_field("scene_origin_lon", &C::scene_origin_lon),
      real_field("scene_origin_lat", &C::scene_origin_lat),
      real_field("scene_pixel_deg", &C::scene_pixel_deg),
      unsigned_field("synth_vaccinators", &C::synth_vaccinators),
      unsigned_field("synth_activities", &C::synth_activities),
      unsigned_field("synth_schools", &C::synth_schools),
      unsigned_field("crop_size", &C::crop_size),
      unsigned_field("out_size", &C::out_size),
      real_field("pos_threshold", &C::pos_threshold),
      real_field("neg_threshold", &C::neg_threshold),
      unsigned_field("patches_per_image", &C::patches_per_image),
      unsigned_field("jitter_copies", &C::jitter_copies),
      unsigned_field("mean_sample", &C::mean_sample),
      text_field("architecture", &C::architecture),
      real_field("learning_rate", &C::learning_rate),
      unsigned_field("epochs_per_round", &C::epochs_per_round),
      unsigned_field("mining_rounds", &C::mining_rounds),
      unsigned_field("batch_size", &C::batch_size),
      real_field("mining_pool_fraction", &C::mining_pool_fraction),
      real_field("binarize_tau", &C::binarize_tau),
      unsigned_field("morph_element", &C::morph_element),
      unsigned_field("morph_iterations", &C::morph_iterations),
      real_field("simplify_epsilon", &C::simplify_epsilon),
      unsigned_field("heat_cell_px", &C::heat_cell_px),
      text_field("heat_color", &C::heat_color),
      real_field("buffer_radius_m", &C::buffer_radius_m),
      unsigned_field("buffer_vertices", &C::buffer_vertices),
      real_field("coverage_cell_m", &C::coverage_cell_m),
      text_field("quarter_anchor", &C::quarter_anchor),
      text_field("quarter_end", &C::quarter_end),
      unsigned_field("quarter_months", &C::quarter_months),
      text_field("output_dir", &C::output_dir),
      text_field("corpus_dir", &C::corpus_dir),
      text_field("image", &C::image),
      text_field("world_file", &C::world_file),
      text_field("activities", &C::activities),
      text_field("schools", &C::schools),
      text_field("model", &C::model),
  };
  return fields;
}

inline std::string_view trim_ws(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

} // namespace detail

inline void validate(const PipelineConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok)
      throw ValidationError("config: " + what);
  };
  need(c.synth_images >= 1, "synth_images must be >= 1");
  need(c.synth_blobs_min <= c.synth_blobs_max, "synth_blobs_min > synth_blobs_max");
  need(c.synth_radius_min > 0 && c.synth_radius_min <= c.synth_radius_max,
       "synth radius bounds invalid");
  need(2.0 * c.synth_radius_max + 2.0 < static_cast<double>(c.synth_image_size),
       "synthetic blobs do not fit in synth_image_size");
  need(c.scene_blobs_min <= c.scene_blobs_max, "scene_blobs_min > scene_blobs_max");
  need(c.scene_radius_min > 0 && c.scene_radius_min <= c.scene_radius_max,
       "scene radius bounds invalid");
  need(2.0 * c.scene_radius_max + 2.0 < static_cast<double>(c.scene_size),
       "scene blobs do not fit in scene_size");
  need(c.scene_pixel_deg > 0.0 && c.scene_pixel_deg < 1.0, "scene_pixel_deg must be in (0,1)");
  need(geo::valid_coordinate(c.scene_origin_lon, c.scene_origin_lat) &&
           std::abs(c.scene_origin_lat) < 89.0,
       "scene origin out of range");
  need(c.synth_vaccinators >= 1, "synth_vaccinators must be >= 1");
  need(c.out_size > 0 && c.crop_size >= c.out_size && c.crop_size % c.out_size == 0,
       "crop_size must be a positive multiple of out_size");
  need(c.neg_threshold >= 0.0 && c.neg_threshold < c.pos_threshold && c.pos_threshold <= 1.0,
       "need 0 <= neg_threshold < pos_threshold <= 1");
  need(c.patches_per_image >= 1, "patches_per_image must be >= 1");
  need(c.jitter_copies <= 7, "jitter_copies must be <= 7");
  need(!c.architecture.empty(), "architecture must not be empty");
  need(c.learning_rate > 0.0, "learning_rate must be > 0");
  need(c.epochs_per_round >= 1, "epochs_per_round must be >= 1");
  need(c.batch_size >= 1, "batch_size must be >= 1");
  need(c.mining_pool_fraction > 0.0 && c.mining_pool_fraction <= 1.0,
       "mining_pool_fraction must be in (0,1]");
  need(c.binarize_tau >= 0.0 && c.binarize_tau <= 1.0, "binarize_tau must be in [0,1]");
  need(c.morph_element >= 1 && c.morph_element % 2 == 1, "morph_element must be odd");
  need(c.simplify_epsilon >= 0.0, "simplify_epsilon must be >= 0");
  need(c.heat_cell_px >= 1, "heat_cell_px must be >= 1");
  try {
    KmlColor::from_hex(c.heat_color);
  } catch (const InvalidArgument& e) {
    need(false, std::string("heat_color: ") + e.what());
  }
  need(c.buffer_radius_m > 0.0, "buffer_radius_m must be > 0");
  need(c.buffer_vertices >= 8, "buffer_vertices must be >= 8");
  need(c.coverage_cell_m > 0.0, "coverage_cell_m must be > 0");
  need(c.quarter_months >= 1, "quarter_months must be >= 1");
  try {
    c.quarter_window().validate();
  } catch (const InvalidArgument& e) {
    need(false, e.what());
  }
  need(!c.output_dir.empty(), "output_dir must not be empty");
}

/// Applies one `key = value` assignment; unknown keys are rejected.
inline void set_config_value(PipelineConfig& c, std::string_view key, std::string_view value) {
  for (const auto& f : detail::config_fields())
    if (f.key == key) {
      f.set(c, detail::trim_ws(value));
      return;
    }
  throw ValidationError("config: unknown key '" + std::string(key) + "'");
}

/// `key = value` lines; `#` starts a comment; blank lines ignored.
inline PipelineConfig parse_config(const std::string& text, PipelineConfig base = {}) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string, std::less<>> seen;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos)
      s = s.substr(0, hash);
    s = detail::trim_ws(s);
    if (s.empty())
      continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos)
      throw ValidationError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    const auto key = detail::trim_ws(s.substr(0, eq));
    if (!seen.insert(std::string(key)).second)
      throw ValidationError("config line " + std::to_string(line_no) + ": duplicate key '" +
                            std::string(key) + "'");
    set_config_value(base, key, s.substr(eq + 1));
  }
  validate(base);
  return base;
}

inline std::string serialize_config(const PipelineConfig& c) {
  std::string out;
  for (const auto& f : detail::config_fields()) {
    out += f.key;
    out += " = ";
    out += f.get(c);
    out += '\n';
  }
  return out;
}

inline PipelineConfig load_config(const std::string& path, PipelineConfig base = {}) {
  return parse_config(read_file(path), std::move(base));
}

} // namespace dmap::io
