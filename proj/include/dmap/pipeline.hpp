#pragma once

#include <dmap/convnet.hpp>
#include <dmap/dataset.hpp>
#include <dmap/error.hpp>
#include <dmap/geo.hpp>
#include <dmap/io/config.hpp>
#include <dmap/io/containers.hpp>
#include <dmap/io/geojson.hpp>
#include <dmap/io/image.hpp>
#include <dmap/io/kml.hpp>
#include <dmap/io/records.hpp>
#include <dmap/raster.hpp>
#include <dmap/vectorize.hpp>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <system_error>
#include <vector>

namespace dmap::pipeline {

namespace fs = std::filesystem;
using io::PipelineConfig;

/// Every artifact location, with empty config paths defaulted inside output_dir.
struct Paths {
  fs::path out;
  fs::path corpus;
  fs::path image;
  fs::path world_file;
  fs::path activities;
  fs::path schools;
  fs::path model;
  fs::path patches;
  fs::path mean;
  fs::path train_log;
  fs::path prob;
  fs::path segments;
  fs::path report_geojson;
  fs::path histograms;
  fs::path segments_kml;
  fs::path heatmap_kml;
  fs::path report_csv;
};

inline Paths resolve_paths(const PipelineConfig& c) {
  const fs::path out = c.output_dir;
  auto pick = [&](const std::string& given, const char* fallback) {
    return given.empty() ? out / fallback : fs::path(given);
  };
  Paths p;
  p.out = out;
  p.corpus = pick(c.corpus_dir, "corpus");
  p.image = pick(c.image, "scene.png");
  p.world_file = pick(c.world_file, "scene.pgw");
  p.activities = pick(c.activities, "activities.csv");
  p.schools = pick(c.schools, "schools.csv");
  p.model = pick(c.model, "model.dmnet");
  p.patches = out / "patches.dmp";
  p.mean = out / "mean.dmr";
  p.train_log = out / "train_log.csv";
  p.prob = out / "prob.dmr";
  p.segments = out / "segments.geojson";
  p.report_geojson = out / "report.geojson";
  p.histograms = out / "histograms.csv";
  p.segments_kml = out / "segments.kml";
  p.heatmap_kml = out / "heatmap.kml";
  p.report_csv = out / "report.csv";
  return p;
}

namespace detail {

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

inline void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p))
    throw IoError(std::string(what) + " not found: '" + p.string() + "'");
}

inline std::string corpus_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img_%04zu", i);
  return buf;
}

/// Image stems in the corpus directory that have a matching `<stem>_mask.png`.
inline std::vector<std::string> corpus_stems(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw IoError("corpus directory not found: '" + dir.string() + "'");
  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png")
      continue;
    const std::string stem = entry.path().stem().string();
    if (stem.ends_with("_mask"))
      continue;
    if (!fs::is_regular_file(dir / (stem + "_mask.png")))
      throw IoError("corpus image '" + entry.path().string() + "' has no _mask.png");
    stems.push_back(stem);
  }
  std::sort(stems.begin(), stems.end());
  if (stems.empty())
    throw IoError("corpus directory '" + dir.string() + "' holds no images");
  return stems;
}

inline std::size_t downsample_factor(const PipelineConfig& c) { return c.crop_size / c.out_size; }

inline std::string mean_text(const Raster& r) {
  double s = 0.0;
  for (double v : r.values())
    s += v;
  return io::format_fixed(r.empty() ? 0.0 : s / static_cast<double>(r.size()), 3);
}

} // namespace detail

// ---------------------------------------------------------------------------
// gen-data

/// Seeded synthetic activity tracks and school points around the scene's blobs.
inline std::pair<std::vector<geo::ActivityRecord>, std::vector<geo::SchoolRecord>>
synthesize_records(const PipelineConfig& c, const std::vector<Blob>& blobs, const GeoTransform& gt,
                   std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto size = static_cast<double>(c.scene_size);
  const auto window = c.quarter_window();
  const auto t0 = std::chrono::sys_seconds(std::chrono::sys_days(window.anchor));
  const auto t1 = std::chrono::sys_seconds(std::chrono::sys_days(window.last)) +
                  std::chrono::seconds(86399);
  const double span_s = static_cast<double>((t1 - t0).count());

  auto near_blob = [&](const Blob& b, double spread) {
    const double r = 0.5 * (b.semi_a + b.semi_b) * spread;
    const double col = std::clamp(b.center_col + r * normal(rng), 0.0, size);
    const double row = std::clamp(b.center_row + r * normal(rng), 0.0, size);
    return pixel_to_world(gt, col, row);
  };
  auto anywhere = [&] { return pixel_to_world(gt, size * unit(rng), size * unit(rng)); };

  std::vector<geo::ActivityRecord> acts;
  acts.reserve(c.synth_activities);
  for (std::size_t i = 0; i < c.synth_activities; ++i) {
    const std::size_t v = std::uniform_int_distribution<std::size_t>(0, c.synth_vaccinators - 1)(rng);
    const LonLat p = blobs.empty() || unit(rng) < 0.15 ? anywhere()
                                                       : near_blob(blobs[v % blobs.size()], 0.8);
    const auto t = t0 + std::chrono::seconds(static_cast<long long>(span_s * unit(rng)));
    acts.push_back({"v" + std::to_string(v + 1), p.lon, p.lat, t});
  }
  std::stable_sort(acts.begin(), acts.end(),
                   [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });

  std::vector<geo::SchoolRecord> schools;
  schools.reserve(c.synth_schools);
  for (std::size_t i = 0; i < c.synth_schools; ++i) {
    LonLat p;
    if (!blobs.empty() && unit(rng) < 0.7) {
      // Skewed blob choice so school counts spread across the bands.
      const double u = unit(rng);
      p = near_blob(blobs[static_cast<std::size_t>(u * u * static_cast<double>(blobs.size()))], 0.5);
    } else {
      p = anywhere();
    }
    schools.push_back({"s" + std::to_string(i + 1), p.lon, p.lat});
  }
  return {std::move(acts), std::move(schools)};
}

inline std::string gen_data(const PipelineConfig& c) {
  io::validate(c);
  const Paths p = resolve_paths(c);
  detail::ensure_dir(p.out);
  detail::ensure_dir(p.corpus);

  SyntheticConfig corpus_cfg;
  corpus_cfg.blobs_min = c.synth_blobs_min;
  corpus_cfg.blobs_max = c.synth_blobs_max;
  corpus_cfg.radius_min = c.synth_radius_min;
  corpus_cfg.radius_max = c.synth_radius_max;
  const auto corpus = generate_synthetic_corpus(c.synth_images, c.synth_image_size, c.seed, corpus_cfg);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const std::string stem = detail::corpus_name(i);
    io::write_png(corpus[i].image, (p.corpus / (stem + ".png")).string());
    io::write_png(corpus[i].mask, (p.corpus / (stem + "_mask.png")).string());
  }

  SyntheticConfig scene_cfg;
  scene_cfg.blobs_min = c.scene_blobs_min;
  scene_cfg.blobs_max = c.scene_blobs_max;
  scene_cfg.radius_min = c.scene_radius_min;
  scene_cfg.radius_max = c.scene_radius_max;
  std::mt19937_64 rng(c.seed ^ 0x5ce9e5eedULL);
  const SyntheticImage scene = generate_synthetic_image(c.scene_size, scene_cfg, rng);
  const GeoTransform gt = c.scene_geotransform();
  io::write_png(scene.image, p.image.string());
  io::write_png(scene.mask, (p.out / "scene_mask.png").string());
  io::write_world_file(gt, p.world_file.string());

  auto [acts, schools] = synthesize_records(c, scene.blobs, gt, rng);
  io::write_file(p.activities.string(), io::format_activities(acts));
  io::write_file(p.schools.string(), io::format_schools(schools));

  return "gen-data: " + std::to_string(corpus.size()) + " corpus images, " +
         std::to_string(c.scene_size) + "px scene with " + std::to_string(scene.blobs.size()) +
         " blobs, " + std::to_string(acts.size()) + " activities, " +
         std::to_string(schools.size()) + " schools -> " + p.out.string();
}

// ---------------------------------------------------------------------------
// extract-patches

inline std::string extract(const PipelineConfig& c) {
  io::validate(c);
  const Paths p = resolve_paths(c);
  detail::ensure_dir(p.out);
  const auto stems = detail::corpus_stems(p.corpus);
  const ExtractionConfig ecfg = c.extraction();
  std::mt19937_64 rng(c.seed);

  std::vector<LabeledPatch> patches;
  std::size_t raw = 0;
  for (const std::string& stem : stems) {
    const Raster image = io::read_png((p.corpus / (stem + ".png")).string(), 3);
    const Raster gray = io::read_png((p.corpus / (stem + "_mask.png")).string(), 1);
    std::vector<double> bits(gray.size());
    std::transform(gray.values().begin(), gray.values().end(), bits.begin(),
                   [](double v) { return v >= 0.5 ? 1.0 : 0.0; });
    const Raster mask(gray.width(), gray.height(), 1, std::move(bits));
    for (const LabeledPatch& lp : extract_patches(image, mask, ecfg, rng, stem)) {
      ++raw;
      for (LabeledPatch& j : jitter(lp, rng, c.jitter_copies))
        patches.push_back(std::move(j));
    }
  }
  if (patches.empty())
    throw ValidationError("extract-patches: no crop passed the labelling thresholds");

  std::vector<Raster> pixels;
  pixels.reserve(patches.size());
  for (const LabeledPatch& lp : patches)
    pixels.push_back(lp.pixels);
  if (c.mean_sample > 0 && c.mean_sample < pixels.size())
    pixels.resize(c.mean_sample);
  const MeanImage mean = compute_mean_image(pixels);

  io::save_patches(patches, p.patches.string());
  io::save_raster(mean.pixels, p.mean.string());
  const auto built = std::count_if(patches.begin(), patches.end(), [](const LabeledPatch& lp) {
    return lp.label == PatchLabel::Built;
  });
  return "extract-patches: " + std::to_string(raw) + " crops kept from " +
         std::to_string(stems.size()) + " images, " + std::to_string(patches.size()) +
         " patches after jitter (" + std::to_string(built) + " built) -> " + p.patches.string();
}

// ---------------------------------------------------------------------------
// train

/// Mean-subtracts every patch in place.
inline void center_patches(std::vector<LabeledPatch>& patches, const MeanImage& mean) {
  for (LabeledPatch& lp : patches)
    lp.pixels = subtract_mean(lp.pixels, mean);
}

/// Seeded held-in mining pool: a fraction of the un-augmented training patches.
inline std::vector<LabeledPatch> mining_pool(const std::vector<LabeledPatch>& train, double fraction,
                                             std::uint64_t seed) {
  std::vector<std::size_t> raw;
  for (std::size_t i = 0; i < train.size(); ++i)
    if (!train[i].augmented)
      raw.push_back(i);
  std::mt19937_64 rng(seed);
  std::shuffle(raw.begin(), raw.end(), rng);
  raw.resize(static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(raw.size()))));
  std::sort(raw.begin(), raw.end());
  std::vector<LabeledPatch> pool;
  pool.reserve(raw.size());
  for (std::size_t i : raw)
    pool.push_back(train[i]);
  return pool;
}

inline std::string train(const PipelineConfig& c) {
  io::validate(c);
  const Paths p = resolve_paths(c);
  detail::require_file(p.patches, "patch set");
  detail::require_file(p.mean, "mean image");
  std::vector<LabeledPatch> patches = io::load_patches(p.patches.string());
  const MeanImage mean{io::load_raster(p.mean.string())};
  if (patches.empty())
    throw ValidationError("train: patch set is empty");
  center_patches(patches, mean);

  std::mt19937_64 init_rng(c.seed);
  nn::Network net = nn::build_network(c.architecture, c.out_size, 3, init_rng);
  const auto pool = mining_pool(patches, c.mining_pool_fraction, c.seed + 1);
  auto result = nn::hard_negative_mine(std::move(net), std::move(patches), pool, c.training());

  nn::save_network(result.net, p.model.string());
  std::string log = "round,train_size,false_negatives,final_loss\n";
  for (const auto& r : result.rounds)
    log += std::to_string(r.round) + ',' + std::to_string(r.train_size) + ',' +
           std::to_string(r.false_negatives) + ',' + io::format_fixed(r.final_loss, 6) + '\n';
  io::write_file(p.train_log.string(), log);

  std::string fn;
  for (const auto& r : result.rounds)
    fn += (fn.empty() ? "" : "/") + std::to_string(r.false_negatives);
  return "train: " + std::to_string(result.rounds.size()) + " rounds, false negatives " + fn +
         ", final loss " + io::format_fixed(result.loss_history.back(), 4) + " -> " +
         p.model.string();
}

// ---------------------------------------------------------------------------
// infer

/// Spreads one score per window onto the pixel grid of a `width` x `height`
/// image. Cell i sits at the centre of its window, `offset + i*step` pixels in;
/// scores are bilinear between centres and held constant beyond the outer ones.
inline Raster place_scores(const Raster& cells, std::size_t width, std::size_t height,
                           std::size_t offset, std::size_t step) {
  const std::size_t span_w = (cells.width() - 1) * step + 1;
  const std::size_t span_h = (cells.height() - 1) * step + 1;
  if (offset + span_w > width || offset + span_h > height)
    throw InvalidArgument("place_scores: score grid does not fit the target");
  const Raster up = bilinear_upsample(cells, span_w, span_h);
  std::vector<double> out(width * height);
  for (std::size_t r = 0; r < height; ++r) {
    const std::size_t sr = std::min(span_h - 1, r < offset ? 0 : r - offset);
    for (std::size_t col = 0; col < width; ++col) {
      const std::size_t sc = std::min(span_w - 1, col < offset ? 0 : col - offset);
      out[r * width + col] = up.at(sc, sr);
    }
  }
  return Raster(width, height, 1, std::move(out));
}

/// Probability map at the input image's resolution.
inline Raster infer_probability(const nn::Network& net, const Raster& image, const MeanImage& mean,
                                std::size_t factor) {
  if (image.width() % factor != 0 || image.height() % factor != 0)
    throw ValidationError("infer: image size must be a multiple of crop_size/out_size");
  const Raster small = factor == 1 ? image : area_downsample(image, factor);
  const Raster centered = subtract_mean_tiled(small.with_geo(std::nullopt), mean);
  const nn::Network dense = nn::convolutionalize(net);
  const Raster cells = nn::dense_infer(dense, centered);
  const std::size_t half = net.input_size() / 2;
  const std::size_t step = dense.output_stride();
  const std::size_t offset = half * factor;
  const std::size_t span = step * factor;
  // Window centres fall between pixels; the cell goes to the pixel just past it.
  return place_scores(cells, image.width(), image.height(), offset, span).with_geo(image.geo());
}

inline std::string infer(const PipelineConfig& c) {
  io::validate(c);
  const Paths p = resolve_paths(c);
  detail::require_file(p.model, "model file");
  detail::require_file(p.mean, "mean image");
  detail::require_file(p.image, "input image");
  detail::require_file(p.world_file, "world file");
  const nn::Network net = nn::load_network(p.model.string());
  if (net.input_size() != c.out_size || net.input_channels() != 3)
    throw ValidationError("infer: model input does not match out_size");
  const MeanImage mean{io::load_raster(p.mean.string())};
  const Raster image = io::read_world_image(p.image.string(), p.world_file.string());
  const Raster prob = infer_probability(net, image, mean, detail::downsample_factor(c));
  detail::ensure_dir(p.out);
  io::save_raster(prob, p.prob.string());
  return "infer: " + std::to_string(prob.width()) + "x" + std::to_string(prob.height()) +
         " probability map, mean p_built " + detail::mean_text(prob) + " -> " + p.prob.string();
}

// ---------------------------------------------------------------------------
// vectorize

inline std::vector<geo::SettlementPolygon> vectorize_probability(const Raster& prob,
                                                                 const PipelineConfig& c) {
  if (!prob.geo())
    throw ValidationError("vectorize: probability map has no geotransform");
  const BinaryMask mask =
      clean(binarize(prob, c.binarize_tau),
            StructuringElement::square(static_cast<int>(c.morph_element)), c.morph_iterations);
  const ComponentLabels labels = connected_components(mask);
  std::vector<geo::SettlementPolygon> out;
  for (std::uint32_t id = 1; id <= labels.count; ++id) {
    const PixelPolygon poly = simplify_polygon(trace_polygon(labels, id), c.simplify_epsilon);
    out.push_back(geo::to_settlement(poly, *prob.geo(), id));
  }
  return out;
}

inline std::string vectorize(const PipelineConfig& c) {
  io::validate(c);
  const Paths p = resolve_paths(c);
  detail::require_file(p.prob, "probability map");
  const auto polys = vectorize_probability(io::load_raster(p.prob.string()), c);
  std::vector<io::SegmentFeature> features;
  double total = 0.0;
  for (const auto& poly : polys) {
    features.push_back({poly, std::nullopt});
    total += poly.area_m2;
  }
  io::write_file(p.segments.string(), io::write_geojson(features));
  return "vectorize: " + std::to_string(polys.size()) + " segments, " +
         io::format_fixed(total, 0) + " m2 total -> " + p.segments.string();
}

// ---------------------------------------------------------------------------
// correlate

inline std::string histograms_csv(const std::vector<geo::SegmentReport>& reports,
                                  const geo::QuarterWindow& window) {
  const std::vector<double> vac_edges = {0, 1, 2, 3, 5, 10, 1e9};
  const std::vector<double> cov_edges = {0, 20, 40, 60, 80, 100};
  std::string out = "quarter,start,end,metric,bin_lo,bin_hi,segments\n";
  const auto buckets = window.buckets();
  for (const auto& b : buckets) {
    std::vector<double> vac, cov;
    for (const auto& r : reports) {
      vac.push_back(static_cast<double>(r.quarters.at(b.index).vaccinators));
      cov.push_back(r.quarters.at(b.index).coverage_percent);
    }
    auto emit = [&](const char* metric, const std::vector<double>& values,
                    const std::vector<double>& edges, int decimals) {
      const auto counts = geo::histogram(values, edges);
      for (std::size_t i = 0; i < counts.size(); ++i)
        out += std::to_string(b.index) + ',' + geo::format_date(b.start) + ',' +
               geo::format_date(b.end) + ',' + metric + ',' + io::format_fixed(edges[i], decimals) +
               ',' + (i + 2 == edges.size() && edges[i + 1] >= 1e9 ? std::string("inf")
                                                                     : io::format_fixed(edges[i + 1], decimals)) +
               ',' + std::to_string(counts[i]) + '\n';
    };
    emit("vaccinators", vac, vac_edges, 0);
    emit("coverage", cov, cov_edges, 0);
  }
  return out;
}

inline std::string correlate(const PipelineConfig& c) {
  io::validate(c);
  const Paths p = resolve_paths(c);
  detail::require_file(p.segments, "segments file");
  const auto features = io::parse_geojson(io::read_file(p.segments.string()));
  const auto acts = io::read_activities(p.activities.string());
  const auto schools = io::read_schools(p.schools.string());

  std::vector<geo::SettlementPolygon> polys;
  for (const auto& f : features)
    polys.push_back(f.polygon);
  const auto window = c.quarter_window();
  const auto reports = geo::correlate(polys, acts.records, schools.records, c.correlation());

  std::vector<io::SegmentFeature> out;
  for (std::size_t i = 0; i < polys.size(); ++i) {
    const auto it = std::find_if(reports.begin(), reports.end(),
                                 [&](const auto& r) { return r.segment_id == polys[i].id; });
    out.push_back({polys[i], *it});
  }
  io::write_file(p.report_geojson.string(), io::write_geojson(out));
  io::write_file(p.histograms.string(), histograms_csv(reports, window));
  return "correlate: " + std::to_string(reports.size()) + " segments, " +
         std::to_string(acts.records.size()) + " activities (" + std::to_string(acts.errors.size()) +
         " bad rows), " + std::to_string(schools.records.size()) + " schools (" +
         std::to_string(schools.errors.size()) + " bad rows), " +
         std::to_string(window.bucket_count()) + " quarters -> " + p.report_geojson.string();
}

// ---------------------------------------------------------------------------
// export

inline std::string export_reports(const PipelineConfig& c) {
  io::validate(c);
  const Paths p = resolve_paths(c);
  detail::require_file(p.report_geojson, "report file");
  detail::require_file(p.prob, "probability map");
  const auto features = io::parse_geojson(io::read_file(p.report_geojson.string()));

  std::vector<geo::SettlementPolygon> polys;
  std::vector<std::string> style_of;
  std::vector<geo::SegmentReport> reports;
  for (const auto& f : features) {
    if (!f.report)
      throw ValidationError("export: segment " + std::to_string(f.polygon.id) +
                            " has no correlation report");
    polys.push_back(f.polygon);
    style_of.emplace_back(geo::to_string(f.report->school_band));
    reports.push_back(*f.report);
  }
  io::write_file(p.segments_kml.string(),
                 io::write_polygons_kml(polys, io::school_band_styles(), style_of, "segments"));

  const Raster prob = io::load_raster(p.prob.string());
  if (!prob.geo())
    throw ValidationError("export: probability map has no geotransform");
  const auto cells = grid_heatmap(prob, c.heat_cell_px);
  io::write_file(p.heatmap_kml.string(),
                 io::write_heatmap_kml(cells, *prob.geo(), io::KmlColor::from_hex(c.heat_color)));

  io::write_file(p.report_csv.string(),
                 io::write_report_csv(reports, c.quarter_window().bucket_count()));
  return "export: " + std::to_string(polys.size()) + " placemarks, " +
         std::to_string(cells.size()) + " heat cells -> " + p.segments_kml.string() + ", " +
         p.heatmap_kml.string() + ", " + p.report_csv.string();
}

// ---------------------------------------------------------------------------

using Stage = std::function<std::string(const PipelineConfig&)>;

struct NamedStage {
  const char* name;
  Stage run;
};

inline const std::vector<NamedStage>& stages() {
  static const std::vector<NamedStage> all = {
      {"gen-data", gen_data},   {"extract-patches", extract}, {"train", train},
      {"infer", infer},         {"vectorize", vectorize},     {"correlate", correlate},
      {"export", export_reports}};
  return all;
}

/// Runs every stage in order, passing each summary line to `report`.
inline void run_all(const PipelineConfig& c, const std::function<void(const std::string&)>& report) {
  for (const auto& s : stages())
    report(s.run(c));
}

} // namespace dmap::pipeline
