#include <dmap/io/config.hpp>
#include <dmap/io/containers.hpp>
#include <dmap/io/geojson.hpp>
#include <dmap/io/image.hpp>
#include <dmap/io/kml.hpp>
#include <dmap/io/records.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <regex>

using namespace dmap;
using namespace dmap::io;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dmap_test_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<geo::SettlementPolygon> sample_polygons() {
  return {geo::make_settlement(2, {{70.0, 29.0}, {70.002, 29.0}, {70.001, 29.0015}}),
          geo::make_settlement(1, {{70.01, 29.01},
                                   {70.0123456789, 29.01},
                                   {70.0123456789, 29.0123456789},
                                   {70.01, 29.0123456789}})};
}

std::vector<SegmentFeature> sample_features() {
  std::vector<SegmentFeature> out;
  for (const auto& p : sample_polygons()) {
    geo::SegmentReport r;
    r.segment_id = p.id;
    r.area_m2 = p.area_m2;
    for (std::size_t q = 0; q < 6; ++q)
      r.quarters.push_back({q + p.id, 12.5 * static_cast<double>(q)});
    r.school_count = p.id == 1 ? 12 : 0;
    r.school_band = geo::school_band(r.school_count);
    out.push_back({p, r});
  }
  return out;
}

std::size_t count_of(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1))
    ++n;
  return n;
}

} // namespace

TEST(WorldFile, ParsesEsriOrder) {
  const GeoTransform gt = parse_world_file("0.001\n0\n0\n-0.001\n70.0\n29.0\n");
  EXPECT_EQ(gt.origin_lon, 70.0);
  EXPECT_EQ(gt.origin_lat, 29.0);
  EXPECT_EQ(gt.px_w, 0.001);
  EXPECT_EQ(gt.px_h, -0.001);
  EXPECT_EQ(gt.skew_x, 0.0);
  EXPECT_EQ(gt.skew_y, 0.0);
  EXPECT_THROW(parse_world_file("0.001\n0\n0\n-0.001\n70.0\n"), ValidationError);
  EXPECT_THROW(parse_world_file("0.001\n0\n0\n-0.001\n70.0\nabc\n"), ValidationError);
}

TEST(WorldFile, RoundTripIsExact) {
  const GeoTransform gt{70.123456789012345, 28.98765432101, 1.0 / 3.0 * 1e-4, -1.0 / 7.0 * 1e-4,
                        1e-9, -2e-9};
  const fs::path dir = scratch_dir("world");
  write_world_file(gt, (dir / "a.pgw").string());
  EXPECT_EQ(read_world_file((dir / "a.pgw").string()), gt);
  EXPECT_THROW(read_world_file((dir / "missing.pgw").string()), IoError);
}

TEST(Png, RoundTripAndWorldImage) {
  std::mt19937_64 rng(1);
  std::vector<double> v(17 * 9 * 3);
  std::uniform_int_distribution<int> b(0, 255);
  for (double& x : v)
    x = b(rng) / 255.0;
  const Raster img(17, 9, 3, v);
  const fs::path dir = scratch_dir("png");
  write_png(img, (dir / "a.png").string());
  const Raster back = read_png((dir / "a.png").string());
  ASSERT_EQ(back.width(), 17u);
  for (std::size_t i = 0; i < v.size(); ++i)
    EXPECT_EQ(back.values()[i], v[i]);

  write_world_file({70, 29, 0.001, -0.001, 0, 0}, (dir / "a.pgw").string());
  const Raster geo = read_world_image((dir / "a.png").string(), (dir / "a.pgw").string());
  ASSERT_TRUE(geo.geo());
  EXPECT_EQ(geo.geo()->origin_lon, 70.0);
  EXPECT_THROW(read_png((dir / "a.pgw").string()), IoError);
  EXPECT_THROW(read_png((dir / "none.png").string()), IoError);
}

TEST(Records, ActivityExampleLandsInFirstQuarter) {
  const auto p = parse_activities("vaccinator_id,lon,lat,timestamp\nv1,71.5,28.9,2015-09-02T10:00:00Z\n");
  ASSERT_EQ(p.records.size(), 1u);
  EXPECT_TRUE(p.errors.empty());
  EXPECT_EQ(p.records[0].vaccinator_id, "v1");
  EXPECT_EQ(p.records[0].lon, 71.5);
  EXPECT_EQ(geo::QuarterWindow{}.bucket_of(p.records[0].timestamp), 0u);
}

TEST(Records, HeaderOnlyAndBadRows) {
  const auto empty = parse_activities("vaccinator_id,lon,lat,timestamp\n");
  EXPECT_TRUE(empty.records.empty());
  EXPECT_TRUE(empty.errors.empty());

  const auto bad = parse_schools("school_id,lon,lat\ns1,70,95\ns2,70,29\ns3,70\n");
  EXPECT_EQ(bad.records.size(), 1u);
  ASSERT_EQ(bad.errors.size(), 2u);
  EXPECT_EQ(bad.errors[0].line, 2u);
  EXPECT_EQ(bad.errors[1].line, 4u);

  EXPECT_THROW(parse_schools(""), ValidationError);
  EXPECT_THROW(parse_schools("id,lon,lat\n"), ValidationError);
  const auto quoted = parse_schools("school_id,lon,lat\n\"Govt School, Block 4\",70,29\n");
  ASSERT_EQ(quoted.records.size(), 1u);
  EXPECT_EQ(quoted.records[0].school_id, "Govt School, Block 4");
}

TEST(Records, FuzzedBadRowsAreCounted) {
  std::mt19937_64 rng(2);
  const std::vector<std::string> bad_rows = {
      "v,70,95,2015-09-01",     "v,181,29,2015-09-01",   "v,abc,29,2015-09-01",
      "v,70,29,2015-13-01",     "v,70,29",               "v,70,29,2015-09-01,extra",
      ",70,29,2015-09-01",      "v,70,29,not-a-date",    "v,nan,29,2015-09-01"};
  std::uniform_int_distribution<std::size_t> pick(0, bad_rows.size() - 1);
  std::bernoulli_distribution inject(0.3);
  for (int trial = 0; trial < 20; ++trial) {
    std::string text = "vaccinator_id,lon,lat,timestamp\n";
    std::size_t injected = 0, good = 0;
    for (int i = 0; i < 100; ++i) {
      if (inject(rng)) {
        text += bad_rows[pick(rng)] + "\n";
        ++injected;
      } else {
        text += "v" + std::to_string(i) + ",70.5,29.1,2016-01-0" + std::to_string(1 + i % 9) + "T08:00:00Z\n";
        ++good;
      }
    }
    const auto p = parse_activities(text);
    EXPECT_EQ(p.errors.size(), injected);
    EXPECT_EQ(p.records.size(), good);
  }
}

TEST(Records, FormatParseRoundTrip) {
  std::vector<geo::ActivityRecord> acts = {
      {"a", 70.123456789, 29.5, *geo::parse_timestamp("2016-03-04T05:06:07Z")},
      {"b", -1.5, -2.25, *geo::parse_timestamp("2015-08-01")}};
  EXPECT_EQ(parse_activities(format_activities(acts)).records, acts);
  std::vector<geo::SchoolRecord> schools = {{"s", 70.000000001, 29.0}};
  EXPECT_EQ(parse_schools(format_schools(schools)).records, schools);
}

TEST(KmlColor, ScalingAndHex) {
  const KmlColor base{255, 0, 0, 255};
  EXPECT_EQ(base.hex(), "ff0000ff");
  EXPECT_EQ(base.scaled(0.5).hex(), "7f00007f");
  EXPECT_EQ(base.scaled(0.0).hex(), "00000000");
  EXPECT_EQ(base.scaled(1.0), base);
  EXPECT_EQ(KmlColor::from_hex("7f00007f"), base.scaled(0.5));
  EXPECT_THROW(KmlColor::from_hex("xyz"), InvalidArgument);
}

TEST(Kml, TriangleHasFourTriplets) {
  const auto polys = std::vector{geo::make_settlement(1, {{70, 29}, {70.001, 29}, {70, 29.001}})};
  const std::string kml = write_polygons_kml(polys, {detection_style()});
  const std::regex coords("<coordinates>([^<]*)</coordinates>");
  std::smatch m;
  ASSERT_TRUE(std::regex_search(kml, m, coords));
  const std::string body = m[1];
  EXPECT_EQ(count_of(body, " ") + 1, 4u);
  EXPECT_EQ(body.substr(0, body.find(' ')), "70.000000000,29.000000000,0");
  EXPECT_EQ(body.substr(body.rfind(' ') + 1), "70.000000000,29.000000000,0");
}

TEST(Kml, RoundTripAndReEmission) {
  const auto polys = sample_polygons();
  const std::vector<std::string> style_of = {"red", "dark_green"};
  const std::string kml = write_polygons_kml(polys, school_band_styles(), style_of);
  const KmlDocument doc = parse_kml(kml);
  ASSERT_EQ(doc.placemarks.size(), 2u);
  EXPECT_EQ(doc.styles.size(), 4u);
  EXPECT_EQ(doc.placemarks[1].style_url, "#dark_green");
  for (std::size_t i = 0; i < polys.size(); ++i) {
    ASSERT_EQ(doc.placemarks[i].ring.size(), polys[i].ring.size());
    for (std::size_t k = 0; k < polys[i].ring.size(); ++k) {
      EXPECT_NEAR(doc.placemarks[i].ring[k].lon, polys[i].ring[k].lon, 1e-9);
      EXPECT_NEAR(doc.placemarks[i].ring[k].lat, polys[i].ring[k].lat, 1e-9);
    }
  }
  EXPECT_EQ(to_kml(doc), kml);
  EXPECT_EQ(parse_kml(write_polygons_kml({}, {detection_style()})).placemarks.size(), 0u);
  EXPECT_THROW(parse_kml("<kml><Document>"), ValidationError);
  EXPECT_THROW(parse_kml("<foo/>"), ValidationError);
}

TEST(Kml, HeatmapCellColours) {
  const Raster prob(4, 2, 1, {0, 0, 1, 1, 0, 0, 1, 1});
  const GeoTransform gt{70, 29, 0.001, -0.001, 0, 0};
  const auto cells = grid_heatmap(prob, 2);
  const std::string kml = write_heatmap_kml(cells, gt, KmlColor{255, 0, 0, 255});
  const KmlDocument doc = parse_kml(kml);
  ASSERT_EQ(doc.placemarks.size(), 2u);
  EXPECT_EQ(doc.placemarks[0].inline_color, "00000000");
  EXPECT_EQ(doc.placemarks[1].inline_color, "ff0000ff");
  EXPECT_NEAR(doc.placemarks[0].ring[0].lon, 70.0, 1e-12);
  EXPECT_NEAR(doc.placemarks[0].ring[0].lat, 28.998, 1e-12);
  EXPECT_EQ(to_kml(doc), kml);
}

TEST(GeoJson, EmptyCollection) {
  EXPECT_EQ(write_geojson({}), R"({"type":"FeatureCollection","features":[]})");
  EXPECT_TRUE(parse_geojson(write_geojson({})).empty());
}

TEST(GeoJson, ClosedRingsAndPropertyRoundTrip) {
  const auto features = sample_features();
  const std::string text = write_geojson(features);
  const auto doc = nlohmann::json::parse(text);
  for (const auto& f : doc["features"]) {
    const auto& ring = f["geometry"]["coordinates"][0];
    EXPECT_EQ(ring.front(), ring.back());
  }
  EXPECT_EQ(doc["features"][0]["properties"]["segment_id"], 1);

  const auto back = parse_geojson(text);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].polygon.id, 1u);
  ASSERT_TRUE(back[0].report);
  EXPECT_EQ(back[0].report->school_band, geo::SchoolBand::DarkGreen);
  EXPECT_EQ(back[0].report->quarters.size(), 6u);
  EXPECT_EQ(back[0].report->quarters[3].vaccinators, 4u);
  EXPECT_EQ(back[0].report->quarters[3].coverage_percent, 37.5);
  EXPECT_EQ(back[1].report->school_band, geo::SchoolBand::Red);
  for (std::size_t k = 0; k < back[0].polygon.ring.size(); ++k)
    EXPECT_NEAR(back[0].polygon.ring[k].lon, features[1].polygon.ring[k].lon, 1e-9);
  EXPECT_EQ(write_geojson(back), text);
  EXPECT_THROW(parse_geojson("{"), ValidationError);
  EXPECT_THROW(parse_geojson(R"({"type":"FeatureCollection","features":[{"geometry":{"type":"Point"}}]})"),
               ValidationError);
}

TEST(ReportCsv, HeaderRowsAndClamp) {
  EXPECT_EQ(write_report_csv({}),
            "segment_id,area_m2,q0_vaccinators,q0_coverage,q1_vaccinators,q1_coverage,"
            "q2_vaccinators,q2_coverage,q3_vaccinators,q3_coverage,q4_vaccinators,q4_coverage,"
            "q5_vaccinators,q5_coverage,school_count,school_band\n");
  auto features = sample_features();
  std::vector<geo::SegmentReport> reports;
  for (auto& f : features)
    reports.push_back(*f.report);
  reports[0].quarters[0].coverage_percent = 100.0000001;
  const std::string csv = write_report_csv(reports);
  EXPECT_EQ(count_of(csv, "\n"), 3u);
  EXPECT_NE(csv.find("\n1,"), std::string::npos);
  EXPECT_LT(csv.find("\n1,"), csv.find("\n2,"));
  EXPECT_NE(csv.find(",100.00,"), std::string::npos);
  EXPECT_EQ(csv.find("100.0000"), std::string::npos);
}

TEST(Config, SerializeParseRoundTrip) {
  PipelineConfig c;
  EXPECT_EQ(parse_config(serialize_config(c)), c);
  c.learning_rate = 1.0 / 3.0;
  c.seed = 123456789012345ULL;
  c.output_dir = "some dir/out";
  c.heat_color = "80ff8000";
  c.quarter_anchor = "2015-09-01";
  c.simplify_epsilon = 0.0;
  EXPECT_EQ(parse_config(serialize_config(c)), c);
}

TEST(Config, Errors) {
  EXPECT_THROW(parse_config("bogus = 1\n"), ValidationError);
  EXPECT_THROW(parse_config("seed = 1\nseed = 2\n"), ValidationError);
  EXPECT_THROW(parse_config("seed\n"), ValidationError);
  EXPECT_THROW(parse_config("seed = -3\n"), ValidationError);
  EXPECT_THROW(parse_config("learning_rate = 0\n"), ValidationError);
  EXPECT_THROW(parse_config("pos_threshold = 0.05\n"), ValidationError);
  EXPECT_THROW(parse_config("quarter_anchor = 2015-08-15\n"), ValidationError);
  EXPECT_THROW(parse_config("heat_color = red\n"), ValidationError);
  const PipelineConfig c = parse_config("# comment\n\n  mining_rounds = 2  # trailing\n");
  EXPECT_EQ(c.mining_rounds, 2u);
}

TEST(Containers, RasterAndPatchRoundTrip) {
  std::mt19937_64 rng(3);
  const Raster r = oracle::random_centered(13, 7, 3, rng).with_geo(GeoTransform{70, 29, 1e-4, -1e-4, 0, 0});
  EXPECT_EQ(decode_raster(encode_raster(r)), r);
  std::vector<LabeledPatch> patches = {
      {oracle::random_raster(8, 8, 3, rng), PatchLabel::Built, "img_0001", 12, 40, false},
      {oracle::random_centered(8, 8, 3, rng), PatchLabel::NonBuilt, "img_0002", 0, 0, true}};
  EXPECT_EQ(decode_patches(encode_patches(patches)), patches);
  const std::string bytes = encode_patches(patches);
  EXPECT_THROW(decode_patches(bytes.substr(0, bytes.size() - 1)), ValidationError);
  EXPECT_THROW(decode_raster(bytes), ValidationError);
}
