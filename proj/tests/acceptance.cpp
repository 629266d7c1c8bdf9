// Acceptance harness: one PASS/FAIL line per criterion, non-zero exit on any failure.
#include <dmap/convnet.hpp>
#include <dmap/dataset.hpp>
#include <dmap/geo.hpp>
#include <dmap/io/config.hpp>
#include <dmap/io/containers.hpp>
#include <dmap/io/geojson.hpp>
#include <dmap/io/kml.hpp>
#include <dmap/pipeline.hpp>
#include <dmap/vectorize.hpp>

#include "geo_oracles.hpp"
#include "nn_helpers.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>

using namespace dmap;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// 1 -----------------------------------------------------------------------
Outcome fc_conv_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> side(64, 128);
  // Padded members run window by window; unpadded ones take the single-pass path.
  double worst[2] = {0.0, 0.0};
  for (int variant = 0; variant < 2; ++variant)
    for (int i = 0; i < 20; ++i) {
      const nn::Network net = nnh::random_toy_family(rng, variant == 0);
      const Raster area = oracle::random_centered(side(rng), side(rng), 3, rng);
      const Raster dense = nn::dense_infer(nn::convolutionalize(net), area);
      const Raster slide = nn::sliding_infer(net, area, 8);
      if (dense.width() != slide.width() || dense.height() != slide.height())
        return {false, "score grid shapes differ on net " + std::to_string(i)};
      for (std::size_t k = 0; k < dense.size(); ++k)
        worst[variant] = std::max(worst[variant], std::abs(dense.values()[k] - slide.values()[k]));
    }
  const double secs = seconds_since(t0);
  return {worst[0] < 1e-6 && worst[1] < 1e-6 && secs < 60.0,
          "20 padded nets max |dense - sliding| = " + fmt("%.2e", worst[0]) +
              ", 20 unpadded nets (single pass) " + fmt("%.2e", worst[1]) + ", " +
              fmt("%.1f", secs) + " s"};
}

// 2 -----------------------------------------------------------------------
Outcome gradient_check() {
  std::mt19937_64 rng(202);
  std::map<std::string, double> worst;
  for (int t = 0; t < 5; ++t) {
    const std::size_t stride = 1 + t % 2, pad = t % 2, k = 1 + t % 3;
    worst["conv"] = std::max(worst["conv"],
                             nnh::gradient_check(nnh::random_conv(k, 2, 3, stride, pad, rng),
                                                 nnh::random_tensor(nn::Shape{6, 7, 2}, rng), rng));
    worst["fc"] = std::max(worst["fc"], nnh::gradient_check(nnh::random_fc(9, 4, rng),
                                                            nnh::random_tensor(nn::Shape{1, 1, 9}, rng), rng));
    worst["relu"] = std::max(worst["relu"], nnh::gradient_check(nn::Relu{},
                                                                nnh::separated_tensor(nn::Shape{4, 5, 2}, rng), rng));
    worst["maxpool"] = std::max(worst["maxpool"],
                                nnh::gradient_check(nn::MaxPool{2, 2},
                                                    nnh::separated_tensor(nn::Shape{6, 6, 3}, rng), rng));
    worst["softmax"] = std::max(worst["softmax"],
                                nnh::gradient_check(nn::Softmax{},
                                                    nnh::random_tensor(nn::Shape{2, 3, 2}, rng, -2, 2), rng));
    worst["flatten"] = std::max(worst["flatten"], nnh::gradient_check(nn::Flatten{},
                                                                      nnh::random_tensor(nn::Shape{3, 2, 4}, rng), rng));
  }
  bool ok = true;
  std::string detail = "max relative error:";
  for (const auto& [kind, e] : worst) {
    ok = ok && e < 1e-3;
    detail += " " + kind + "=" + fmt("%.1e", e);
  }
  return {ok, detail + " (5 tensors each)"};
}

// 3 -----------------------------------------------------------------------
std::vector<LabeledPatch> synthetic_patches(const io::PipelineConfig& c, std::size_t images,
                                            std::uint64_t seed, std::size_t jitter_copies) {
  SyntheticConfig sc{c.synth_blobs_min, c.synth_blobs_max, c.synth_radius_min, c.synth_radius_max};
  const auto corpus = generate_synthetic_corpus(images, c.synth_image_size, seed, sc);
  std::mt19937_64 rng(seed);
  std::vector<LabeledPatch> out;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    for (const LabeledPatch& lp : extract_patches(corpus[i].image, corpus[i].mask, c.extraction(),
                                                  rng, "img" + std::to_string(i)))
      for (LabeledPatch& j : jitter(lp, rng, jitter_copies))
        out.push_back(std::move(j));
  return out;
}

Outcome mining_efficacy() {
  const auto t0 = Clock::now();
  const io::PipelineConfig c;
  auto train = synthetic_patches(c, 28, c.seed, c.jitter_copies);
  auto held_out = synthetic_patches(c, 12, c.seed + 1000, 0);
  std::vector<Raster> pixels;
  for (const auto& p : train)
    pixels.push_back(p.pixels);
  const MeanImage mean = compute_mean_image(pixels);
  pipeline::center_patches(train, mean);
  pipeline::center_patches(held_out, mean);

  std::mt19937_64 init(c.seed);
  const nn::Network net = nn::build_network(c.architecture, c.out_size, 3, init);
  const auto pool = pipeline::mining_pool(train, c.mining_pool_fraction, c.seed + 1);
  const auto mined = nn::hard_negative_mine(net, train, pool, c.training());
  const auto plain = nn::hard_negative_mine(net, train, {}, c.training());

  const double r_mined = nn::recall(mined.net, held_out);
  const double r_plain = nn::recall(plain.net, held_out);
  std::string fn;
  for (const auto& r : mined.rounds)
    fn += (fn.empty() ? "" : "/") + std::to_string(r.false_negatives);
  const double secs = seconds_since(t0);
  const bool ok = train.size() >= 2000 && mined.rounds.size() == 5 &&
                  mined.rounds.back().false_negatives <= mined.rounds.front().false_negatives &&
                  r_mined >= r_plain && secs < 300.0;
  return {ok, std::to_string(train.size()) + " patches, pool " + std::to_string(pool.size()) +
                  ", false negatives per round " + fn + ", held-out recall " +
                  fmt("%.4f", r_mined) + " mined vs " + fmt("%.4f", r_plain) + " plain, " +
                  fmt("%.1f", secs) + " s"};
}

// 4 -----------------------------------------------------------------------
Outcome patch_labelling() {
  std::mt19937_64 rng(404);
  const ExtractionConfig cfg;
  const std::size_t n = cfg.crop_size * cfg.crop_size;
  std::size_t checked = 0, mismatches = 0;
  auto check = [&](const Raster& crop) {
    std::size_t ones = 0;
    for (double v : crop.values())
      ones += v == 1.0;
    // Exact integer form of f > 0.75 and f < 0.1.
    const CropClass want = 4 * ones > 3 * n ? CropClass::Built
                           : 10 * ones < n  ? CropClass::NonBuilt
                                            : CropClass::Discard;
    mismatches += label_from_mask(crop, cfg) != want;
    ++checked;
  };
  // Crops of synthetic masks at random positions.
  SyntheticConfig sc{1, 4, 40.0, 120.0};
  const auto corpus = generate_synthetic_corpus(10, 512, 405, sc);
  std::uniform_int_distribution<std::size_t> pos(0, 512 - cfg.crop_size);
  for (int i = 0; i < 500; ++i)
    check(corpus[i % 10].mask.crop(pos(rng), pos(rng), cfg.crop_size, cfg.crop_size));
  // Crops with set-pixel counts straddling both thresholds.
  const std::size_t hi = 3 * n / 4, lo = n / 10;
  std::uniform_int_distribution<int> jit(-4, 4);
  for (int i = 0; i < 500; ++i) {
    const std::size_t ones = (i % 2 ? hi : lo) + jit(rng);
    std::vector<double> v(n, 0.0);
    std::fill(v.begin(), v.begin() + static_cast<long>(ones), 1.0);
    std::shuffle(v.begin(), v.end(), rng);
    check(Raster(cfg.crop_size, cfg.crop_size, 1, std::move(v)));
  }
  return {mismatches == 0, std::to_string(checked) + " crops, " + std::to_string(mismatches) +
                               " disagreements with the counting oracle"};
}

// 5 -----------------------------------------------------------------------
Outcome components() {
  std::mt19937_64 rng(505);
  std::size_t bad = 0, total_components = 0;
  for (int t = 0; t < 100; ++t) {
    const auto g = oracle::random_grid(64, 64, 0.05 + 0.006 * t, rng);
    const auto want = oracle::flood_labels(g);
    BinaryMask m(64, 64);
    for (std::size_t r = 0; r < 64; ++r)
      for (std::size_t c = 0; c < 64; ++c)
        m.set(c, r, g[r][c] != 0);
    const auto got = connected_components(m);
    total_components += got.count;
    bool same = true;
    for (std::size_t r = 0; r < 64 && same; ++r)
      for (std::size_t c = 0; c < 64 && same; ++c)
        same = static_cast<int>(got.at(c, r)) == want[r][c];
    bad += !same;
  }
  return {bad == 0, "100 masks (" + std::to_string(total_components) + " components), " +
                        std::to_string(bad) + " partitions differ from flood fill"};
}

// 6 -----------------------------------------------------------------------
Outcome coverage_geometry() {
  std::mt19937_64 rng(606);
  const auto square = geo::make_settlement(1, oracle::square_ring(70.4, 29.1, 400.0));
  const std::vector<geo::ActivityRecord> centre = {
      {"v", square.centroid.lon, square.centroid.lat, {}}};
  const double c0 = geo::coverage_percent(square, centre);
  const bool square_ok = std::abs(c0 - 78.5398) <= 2.0;

  const double k = 180.0 / (3.14159265358979323846 * 6378137.0);
  std::uniform_real_distribution<double> radius(120.0, 400.0), off(-450.0, 450.0);
  std::uniform_int_distribution<int> npts(1, 4), nverts(5, 10);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const double lon = 70.0 + 0.01 * t, lat = 28.8 + 0.002 * t;
    const auto seg = geo::make_settlement(
        1, oracle::random_convex_ring(lon, lat, radius(rng), radius(rng), nverts(rng), rng));
    std::vector<geo::ActivityRecord> recs;
    std::vector<LonLat> pts;
    for (int i = npts(rng); i > 0; --i) {
      const LonLat p{lon + off(rng) * k / std::cos(lat * 3.14159265358979323846 / 180.0),
                     lat + off(rng) * k};
      pts.push_back(p);
      recs.push_back({"v" + std::to_string(i), p.lon, p.lat, {}});
    }
    const double got = geo::coverage_percent(seg, recs);
    const double mc = oracle::mc_coverage(seg.ring, pts, 200.0, 100000, rng);
    worst = std::max(worst, std::abs(got - mc));
  }
  return {square_ok && worst <= 2.0, "centred 400 m square " + fmt("%.2f", c0) +
                                         "% (analytic 78.54%), 200 random configs max |grid - MC| = " +
                                         fmt("%.2f", worst) + " points"};
}

// 7 -----------------------------------------------------------------------
Outcome area() {
  const std::vector<LonLat> sq = {{0, 0}, {0.001, 0}, {0.001, 0.001}, {0, 0.001}};
  const double a = geo::ring_area_m2(sq);
  const bool sq_ok = std::abs(a - 12392.0) <= 0.005 * 12392.0;
  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> radius(80.0, 900.0);
  std::uniform_int_distribution<int> nverts(3, 14);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const auto ring = oracle::random_convex_ring(69.5 + 0.02 * t, 28.0 + 0.03 * t, radius(rng),
                                                 radius(rng), nverts(rng), rng);
    const double mc = oracle::mc_area_m2(ring, 1000000, rng);
    worst = std::max(worst, std::abs(geo::ring_area_m2(ring) - mc) / mc);
  }
  return {sq_ok && worst <= 0.01, "equatorial square " + fmt("%.1f", a) +
                                      " m2, 50 convex rings max relative deviation from MC (1e6 samples) " +
                                      fmt("%.3f", 100 * worst) + "%"};
}

// 8 -----------------------------------------------------------------------
Outcome quarters() {
  using namespace std::chrono;
  const geo::QuarterWindow w;
  auto at = [&](const char* s) { return w.bucket_of(*geo::parse_timestamp(s)); };
  bool ok = at("2015-08-15") == 0u && at("2015-11-01") == 1u && at("2016-12-31") == 5u;
  const auto buckets = w.buckets();
  ok = ok && buckets.size() == 6;
  std::size_t days_checked = 0;
  for (sys_days d = sys_days(year{2015} / August / 1); d <= sys_days(year{2016} / December / 31);
       d += std::chrono::days(1)) {
    std::size_t containing = 0;
    for (const auto& b : buckets)
      containing += d >= sys_days(b.start) && d <= sys_days(b.end);
    const auto idx = w.bucket_of(geo::Timestamp(d) + hours(23) + minutes(59));
    ok = ok && containing == 1 && idx && d >= sys_days(buckets[*idx].start) &&
         d <= sys_days(buckets[*idx].end);
    ++days_checked;
  }
  ok = ok && !at("2015-07-31T23:59:59Z") && !at("2017-01-01T00:00:00Z");
  return {ok, "examples map to buckets 0/1/5, " + std::to_string(days_checked) +
                  " in-window days each in exactly one of " + std::to_string(buckets.size()) +
                  " buckets"};
}

// 9 -----------------------------------------------------------------------
Outcome morphology() {
  std::mt19937_64 rng(909);
  std::size_t not_idempotent = 0;
  for (int t = 0; t < 100; ++t) {
    const auto g = oracle::random_grid(64, 64, 0.2 + 0.006 * t, rng);
    BinaryMask m(64, 64);
    for (std::size_t r = 0; r < 64; ++r)
      for (std::size_t c = 0; c < 64; ++c)
        m.set(c, r, g[r][c] != 0);
    const BinaryMask once = clean(m);
    not_idempotent += !(clean(once) == once);
  }
  BinaryMask speck(16, 16);
  speck.set(8, 8, true);
  const bool speck_ok = clean(speck).count() == 0;
  BinaryMask holed(20, 20);
  for (std::size_t r = 5; r < 15; ++r)
    for (std::size_t c = 5; c < 15; ++c)
      holed.set(c, r, !(r == 9 && c == 10));
  const BinaryMask filled = clean(holed);
  const bool hole_ok = filled.get(10, 9) && filled.count() == 100;
  return {not_idempotent == 0 && speck_ok && hole_ok,
          std::to_string(100 - not_idempotent) + "/100 masks idempotent, isolated pixel " +
              (speck_ok ? "removed" : "kept") + ", pinhole " + (hole_ok ? "filled" : "left")};
}

// 10 / 11 ------------------------------------------------------------------
struct PipelineRun {
  fs::path dir;
  double seconds = 0.0;
  std::string error;
};

PipelineRun run_pipeline(const std::string& name) {
  PipelineRun run;
  run.dir = fs::temp_directory_path() / ("dmap_acceptance_" + name);
  fs::remove_all(run.dir);
  io::PipelineConfig c;
  c.output_dir = run.dir.string();
  const auto t0 = Clock::now();
  try {
    pipeline::run_all(c, [](const std::string&) {});
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  run.seconds = seconds_since(t0);
  return run;
}

PipelineRun& first_run() {
  static PipelineRun run = run_pipeline("a");
  return run;
}

Outcome export_round_trips() {
  const PipelineRun& run = first_run();
  if (!run.error.empty())
    return {false, "pipeline failed: " + run.error};
  io::PipelineConfig c;
  c.output_dir = run.dir.string();
  const auto paths = pipeline::resolve_paths(c);
  const auto reference = pipeline::vectorize_probability(io::load_raster(paths.prob.string()), c);

  double worst = 0.0;
  bool same_shape = true;
  auto compare = [&](const std::vector<LonLat>& got, const std::vector<LonLat>& want) {
    if (got.size() != want.size()) {
      same_shape = false;
      return;
    }
    for (std::size_t i = 0; i < got.size(); ++i)
      worst = std::max({worst, std::abs(got[i].lon - want[i].lon), std::abs(got[i].lat - want[i].lat)});
  };
  std::map<std::uint32_t, const geo::SettlementPolygon*> by_id;
  for (const auto& p : reference)
    by_id[p.id] = &p;

  bool reemit = true;
  std::size_t features = 0;
  for (const auto& path : {paths.segments, paths.report_geojson}) {
    const std::string text = io::read_file(path.string());
    const auto parsed = io::parse_geojson(text);
    reemit = reemit && io::write_geojson(parsed) == text;
    same_shape = same_shape && parsed.size() == reference.size();
    for (const auto& f : parsed) {
      ++features;
      if (!by_id.count(f.polygon.id)) {
        same_shape = false;
        continue;
      }
      compare(f.polygon.ring, by_id[f.polygon.id]->ring);
    }
  }
  std::size_t placemarks = 0;
  for (const auto& path : {paths.segments_kml, paths.heatmap_kml}) {
    const std::string text = io::read_file(path.string());
    const auto doc = io::parse_kml(text);
    reemit = reemit && io::to_kml(doc) == text;
    placemarks += doc.placemarks.size();
  }
  const auto seg_doc = io::parse_kml(io::read_file(paths.segments_kml.string()));
  same_shape = same_shape && seg_doc.placemarks.size() == reference.size();
  for (const auto& pm : seg_doc.placemarks) {
    const auto id = static_cast<std::uint32_t>(std::stoul(pm.name.substr(pm.name.rfind(' ') + 1)));
    if (!by_id.count(id)) {
      same_shape = false;
      continue;
    }
    compare(pm.ring, by_id[id]->ring);
  }
  const bool bands = geo::school_band(0) == geo::SchoolBand::Red &&
                     geo::school_band(2) == geo::SchoolBand::LightGreen &&
                     geo::school_band(12) == geo::SchoolBand::DarkGreen;
  return {same_shape && worst <= 1e-9 && reemit && bands && !reference.empty(),
          std::to_string(reference.size()) + " segments, " + std::to_string(features) +
              " GeoJSON features and " + std::to_string(placemarks) +
              " placemarks re-parsed, max deviation " + fmt("%.1e", worst) + " deg, re-emission " +
              (reemit ? "identical" : "differs") + ", bands {0,2,12} -> " +
              std::string(geo::to_string(geo::school_band(0))) + "/" +
              std::string(geo::to_string(geo::school_band(2))) + "/" +
              std::string(geo::to_string(geo::school_band(12)))};
}

Outcome determinism() {
  const PipelineRun& a = first_run();
  const PipelineRun b = run_pipeline("b");
  if (!a.error.empty() || !b.error.empty())
    return {false, "pipeline failed: " + a.error + b.error};
  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (const auto& entry : fs::recursive_directory_iterator(a.dir)) {
    if (!entry.is_regular_file())
      continue;
    const fs::path rel = fs::relative(entry.path(), a.dir);
    const fs::path other = b.dir / rel;
    ++compared;
    if (!fs::exists(other) ||
        io::read_file(entry.path().string()) != io::read_file(other.string()))
      differing.push_back(rel.string());
  }
  const bool fast = a.seconds < 600.0 && b.seconds < 600.0;
  std::string detail = std::to_string(compared) + " artifacts compared, " +
                       std::to_string(differing.size()) + " differ; runs took " +
                       fmt("%.1f", a.seconds) + " s and " + fmt("%.1f", b.seconds) + " s";
  for (const auto& d : differing)
    detail += " [" + d + "]";
  return {differing.empty() && compared > 0 && fast, detail};
}

} // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"fully convolutional inference equals sliding window", fc_conv_equivalence},
      {"layer gradients match finite differences", gradient_check},
      {"hard-negative mining efficacy", mining_efficacy},
      {"patch labelling thresholds", patch_labelling},
      {"connected components", components},
      {"coverage geometry", coverage_geometry},
      {"polygon area", area},
      {"quarter bucketing", quarters},
      {"morphological cleaning", morphology},
      {"export round-trips and school bands", export_round_trips},
      {"end-to-end determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first
              << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size()
            << " criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
