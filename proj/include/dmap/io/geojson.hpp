#pragma once

#include <dmap/error.hpp>
#include <dmap/geo.hpp>
#include <dmap/io/format.hpp>

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dmap::io {

/// A segment as carried through GeoJSON: geometry plus optional correlation report.
struct SegmentFeature {
  geo::SettlementPolygon polygon;
  std::optional<geo::SegmentReport> report;
  friend bool operator==(const SegmentFeature&, const SegmentFeature&) = default;
};

namespace detail {

inline std::string json_ring(const std::vector<LonLat>& ring) {
  std::string out = "[[";
  for (std::size_t i = 0; i <= ring.size(); ++i) {
    const LonLat& p = ring[i % ring.size()];
    if (i > 0)
      out += ',';
    out += '[' + format_coord(p.lon) + ',' + format_coord(p.lat) + ']';
  }
  return out + "]]";
}

template <class T, class F>
std::string json_array(const std::vector<T>& items, F&& fmt) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0)
      out += ',';
    out += fmt(items[i]);
  }
  return out + "]";
}

} // namespace detail

/// FeatureCollection with one Polygon feature per segment, ordered by segment id.
/// Numbers use fixed formats (coordinates 9 decimals, areas and percentages 2).
inline std::string write_geojson(const std::vector<SegmentFeature>& features) {
  std::vector<const SegmentFeature*> sorted;
  for (const auto& f : features)
    sorted.push_back(&f);
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) {
    return a->polygon.id < b->polygon.id;
  });

  std::string out = R"({"type":"FeatureCollection","features":[)";
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const SegmentFeature& f = *sorted[i];
    if (f.polygon.ring.size() < 3)
      throw InvalidArgument("write_geojson: segment ring has fewer than 3 vertices");
    out += i == 0 ? "\n" : ",\n";
    out += R"({"type":"Feature","id":)" + std::to_string(f.polygon.id);
    out += R"(,"geometry":{"type":"Polygon","coordinates":)" + detail::json_ring(f.polygon.ring);
    out += R"(},"properties":{"segment_id":)" + std::to_string(f.polygon.id);
    out += R"(,"area_m2":)" + format_fixed(f.polygon.area_m2, 2);
    if (f.report) {
      const auto& r = *f.report;
      out += R"(,"vaccinators":)" + detail::json_array(r.quarters, [](const geo::QuarterStat& q) {
        return std::to_string(q.vaccinators);
      });
      out += R"(,"coverage":)" + detail::json_array(r.quarters, [](const geo::QuarterStat& q) {
        return format_fixed(std::clamp(q.coverage_percent, 0.0, 100.0), 2);
      });
      out += R"(,"school_count":)" + std::to_string(r.school_count);
      out += R"(,"school_band":")" + std::string(geo::to_string(r.school_band)) + '"';
    }
    out += "}}";
  }
  if (!sorted.empty())
    out += '\n';
  out += "]}";
  return out;
}

inline std::vector<SegmentFeature> parse_geojson(const std::string& text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("GeoJSON: ") + e.what());
  }
  try {
    if (doc.at("type") != "FeatureCollection")
      throw ValidationError("GeoJSON: expected a FeatureCollection");
    std::vector<SegmentFeature> out;
    for (const json& f : doc.at("features")) {
      const json& geom = f.at("geometry");
      if (geom.at("type") != "Polygon")
        throw ValidationError("GeoJSON: only Polygon geometries are supported");
      const json& outer = geom.at("coordinates").at(0);
      std::vector<LonLat> ring;
      for (const json& pos : outer)
        ring.push_back({pos.at(0).get<double>(), pos.at(1).get<double>()});
      if (ring.size() < 4 || !(ring.front() == ring.back()))
        throw ValidationError("GeoJSON: polygon ring must be closed with at least 4 positions");
      ring.pop_back();

      const json& props = f.at("properties");
      SegmentFeature sf;
      sf.polygon = geo::make_settlement(props.at("segment_id").get<std::uint32_t>(), std::move(ring));
      sf.polygon.area_m2 = props.at("area_m2").get<double>();
      if (props.contains("school_band")) {
        geo::SegmentReport r;
        r.segment_id = sf.polygon.id;
        r.area_m2 = sf.polygon.area_m2;
        const auto& vac = props.at("vaccinators");
        const auto& cov = props.at("coverage");
        if (vac.size() != cov.size())
          throw ValidationError("GeoJSON: vaccinators/coverage length mismatch");
        for (std::size_t q = 0; q < vac.size(); ++q)
          r.quarters.push_back({vac.at(q).get<std::size_t>(), cov.at(q).get<double>()});
        r.school_count = props.at("school_count").get<std::size_t>();
        const auto band = geo::parse_band(props.at("school_band").get<std::string>());
        if (!band)
          throw ValidationError("GeoJSON: unknown school_band");
        r.school_band = *band;
        sf.report = std::move(r);
      }
      out.push_back(std::move(sf));
    }
    return out;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("GeoJSON: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ValidationError(std::string("GeoJSON: ") + e.what());
  }
}

/// Header: segment_id,area_m2,q0_vaccinators,q0_coverage,...,school_count,school_band.
inline std::string write_report_csv(std::vector<geo::SegmentReport> reports,
                                    std::size_t quarter_count = 6) {
  std::string out = "segment_id,area_m2";
  for (std::size_t q = 0; q < quarter_count; ++q)
    out += ",q" + std::to_string(q) + "_vaccinators,q" + std::to_string(q) + "_coverage";
  out += ",school_count,school_band\n";
  std::stable_sort(reports.begin(), reports.end(),
                   [](const auto& a, const auto& b) { return a.segment_id < b.segment_id; });
  for (const auto& r : reports) {
    if (r.quarters.size() != quarter_count)
      throw InvalidArgument("write_report_csv: report has " + std::to_string(r.quarters.size()) +
                            " quarters, expected " + std::to_string(quarter_count));
    out += std::to_string(r.segment_id) + ',' + format_fixed(r.area_m2, 2);
    for (const auto& q : r.quarters)
      out += ',' + std::to_string(q.vaccinators) + ',' +
             format_fixed(std::clamp(q.coverage_percent, 0.0, 100.0), 2);
    out += ',' + std::to_string(r.school_count) + ',' + std::string(geo::to_string(r.school_band)) +
           '\n';
  }
  return out;
}

} // namespace dmap::io
