#pragma once

#include <dmap/error.hpp>
#include <dmap/geo.hpp>
#include <dmap/io/format.hpp>
#include <dmap/raster.hpp>
#include <dmap/vectorize.hpp>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace dmap::io {

/// KML colour, serialised as aabbggrr hex.
struct KmlColor {
  std::uint8_t a = 255;
  std::uint8_t b = 0;
  std::uint8_t g = 0;
  std::uint8_t r = 0;

  std::string hex() const {
    char buf[9];
    std::snprintf(buf, sizeof buf, "%02x%02x%02x%02x", a, b, g, r);
    return buf;
  }

  static KmlColor from_hex(const std::string& s) {
    if (s.size() != 8 || s.find_first_not_of("0123456789abcdefABCDEF") != std::string::npos)
      throw InvalidArgument("KmlColor: expected 8 hex digits (aabbggrr), got '" + s + "'");
    auto byte = [&](std::size_t i) {
      return static_cast<std::uint8_t>(std::stoul(s.substr(i, 2), nullptr, 16));
    };
    return {byte(0), byte(2), byte(4), byte(6)};
  }

  /// Every channel, alpha included, multiplied by `factor` and rounded down.
  KmlColor scaled(double factor) const {
    auto f = [&](std::uint8_t c) {
      return static_cast<std::uint8_t>(std::floor(static_cast<double>(c) * factor));
    };
    return {f(a), f(b), f(g), f(r)};
  }

  friend bool operator==(const KmlColor&, const KmlColor&) = default;
};

struct KmlStyle {
  std::string id;
  std::string line_color; // aabbggrr
  std::string poly_color;
  friend bool operator==(const KmlStyle&, const KmlStyle&) = default;
};

struct KmlPlacemark {
  std::string name;
  std::string style_url;                  // "#id", or empty when inline_color is set
  std::optional<std::string> inline_color; // per-placemark fill, aabbggrr
  std::vector<LonLat> ring;                // closure implicit
  friend bool operator==(const KmlPlacemark&, const KmlPlacemark&) = default;
};

struct KmlDocument {
  std::string name;
  std::vector<KmlStyle> styles;
  std::vector<KmlPlacemark> placemarks;
  friend bool operator==(const KmlDocument&, const KmlDocument&) = default;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
    case '&': out += "&amp;"; break;
    case '<': out += "&lt;"; break;
    case '>': out += "&gt;"; break;
    case '"': out += "&quot;"; break;
    default: out += c;
    }
  }
  return out;
}

inline std::string coordinates_text(const std::vector<LonLat>& ring) {
  std::string out;
  for (std::size_t i = 0; i <= ring.size(); ++i) {
    const LonLat& p = ring[i % ring.size()];
    if (i > 0)
      out += ' ';
    out += format_coord(p.lon) + ',' + format_coord(p.lat) + ",0";
  }
  return out;
}

} // namespace detail

/// KML 2.2 text; rings are written closed, lon,lat,0 triplets.
inline std::string to_kml(const KmlDocument& doc) {
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<kml xmlns=\"http://www.opengis.net/kml/2.2\">\n"
      << "<Document>\n"
      << "<name>" << detail::xml_escape(doc.name) << "</name>\n";
  for (const KmlStyle& s : doc.styles)
    out << "<Style id=\"" << detail::xml_escape(s.id) << "\"><LineStyle><color>" << s.line_color
        << "</color></LineStyle><PolyStyle><color>" << s.poly_color
        << "</color></PolyStyle></Style>\n";
  for (const KmlPlacemark& p : doc.placemarks) {
    if (p.ring.size() < 3)
      throw InvalidArgument("to_kml: placemark '" + p.name + "' has fewer than 3 vertices");
    out << "<Placemark>\n<name>" << detail::xml_escape(p.name) << "</name>\n";
    if (p.inline_color)
      out << "<Style><PolyStyle><color>" << *p.inline_color
          << "</color><outline>0</outline></PolyStyle></Style>\n";
    else
      out << "<styleUrl>" << detail::xml_escape(p.style_url) << "</styleUrl>\n";
    out << "<Polygon><outerBoundaryIs><LinearRing><coordinates>"
        << detail::coordinates_text(p.ring)
        << "</coordinates></LinearRing></outerBoundaryIs></Polygon>\n</Placemark>\n";
  }
  out << "</Document>\n</kml>\n";
  return out.str();
}

inline std::vector<LonLat> parse_kml_coordinates(const std::string& text) {
  std::istringstream in(text);
  std::string triplet;
  std::vector<LonLat> ring;
  while (in >> triplet) {
    LonLat p;
    double alt = 0.0;
    char c1 = 0, c2 = 0;
    std::istringstream t(triplet);
    if (!(t >> p.lon >> c1 >> p.lat) || c1 != ',')
      throw ValidationError("KML: bad coordinate tuple '" + triplet + "'");
    if (t >> c2) {
      if (c2 != ',' || !(t >> alt))
        throw ValidationError("KML: bad coordinate tuple '" + triplet + "'");
    }
    ring.push_back(p);
  }
  if (ring.size() < 4 || !(ring.front() == ring.back()))
    throw ValidationError("KML: LinearRing must be closed with at least 4 positions");
  ring.pop_back();
  return ring;
}

/// Reads documents produced by to_kml (and structurally similar KML).
inline KmlDocument parse_kml(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw ValidationError(std::string("KML: malformed XML: ") + e.what());
  }
  const auto kml = tree.get_child_optional("kml");
  if (!kml)
    throw ValidationError("KML: missing <kml> root");
  const auto document = kml->get_child_optional("Document");
  if (!document)
    throw ValidationError("KML: missing <Document>");

  KmlDocument doc;
  doc.name = document->get<std::string>("name", "");
  for (const auto& [tag, node] : *document) {
    if (tag == "Style") {
      KmlStyle s;
      s.id = node.get<std::string>("<xmlattr>.id", "");
      s.line_color = node.get<std::string>("LineStyle.color", "");
      s.poly_color = node.get<std::string>("PolyStyle.color", "");
      doc.styles.push_back(std::move(s));
    } else if (tag == "Placemark") {
      KmlPlacemark p;
      p.name = node.get<std::string>("name", "");
      p.style_url = node.get<std::string>("styleUrl", "");
      if (const auto c = node.get_optional<std::string>("Style.PolyStyle.color"))
        p.inline_color = *c;
      const auto coords =
          node.get_optional<std::string>("Polygon.outerBoundaryIs.LinearRing.coordinates");
      if (!coords)
        throw ValidationError("KML: placemark '" + p.name + "' has no polygon coordinates");
      p.ring = parse_kml_coordinates(*coords);
      doc.placemarks.push_back(std::move(p));
    }
  }
  return doc;
}

// ---------------------------------------------------------------------------
// Document builders

struct PolygonStyle {
  std::string id;
  KmlColor line;
  KmlColor fill;
};

/// Default palette for school bands: red, light green, mid green, dark green.
inline std::vector<PolygonStyle> school_band_styles() {
  return {{"red", {255, 0, 0, 255}, {160, 0, 0, 255}},
          {"light_green", {255, 144, 238, 144}, {160, 144, 238, 144}},
          {"mid_green", {255, 50, 205, 50}, {160, 50, 205, 50}},
          {"dark_green", {255, 0, 100, 0}, {160, 0, 100, 0}}};
}

/// Pink fill used for plain detections.
inline PolygonStyle detection_style() {
  return {"detected", {255, 180, 105, 255}, {128, 180, 105, 255}};
}

/// One placemark per polygon. `style_of[i]` names the style for polygon i;
/// when empty every polygon uses the first style.
inline std::string write_polygons_kml(const std::vector<geo::SettlementPolygon>& polys,
                                      const std::vector<PolygonStyle>& styles,
                                      const std::vector<std::string>& style_of = {},
                                      const std::string& name = "settlements") {
  if (styles.empty())
    throw InvalidArgument("write_polygons_kml: no styles");
  if (!style_of.empty() && style_of.size() != polys.size())
    throw InvalidArgument("write_polygons_kml: style assignment size mismatch");
  KmlDocument doc;
  doc.name = name;
  for (const PolygonStyle& s : styles)
    doc.styles.push_back({s.id, s.line.hex(), s.fill.hex()});
  for (std::size_t i = 0; i < polys.size(); ++i) {
    KmlPlacemark p;
    p.name = "segment " + std::to_string(polys[i].id);
    p.style_url = "#" + (style_of.empty() ? styles.front().id : style_of[i]);
    p.ring = polys[i].ring;
    doc.placemarks.push_back(std::move(p));
  }
  return to_kml(doc);
}

/// One rectangle per heat cell; its fill is the base colour scaled by the cell's mean probability.
inline std::string write_heatmap_kml(const std::vector<HeatCell>& cells, const GeoTransform& gt,
                                     const KmlColor& base, const std::string& name = "heatmap") {
  KmlDocument doc;
  doc.name = name;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const HeatCell& c = cells[i];
    const auto c0 = static_cast<double>(c.col0), c1 = static_cast<double>(c.col1);
    const auto r0 = static_cast<double>(c.row0), r1 = static_cast<double>(c.row1);
    std::vector<LonLat> ring = {pixel_to_world(gt, c0, r1), pixel_to_world(gt, c1, r1),
                                pixel_to_world(gt, c1, r0), pixel_to_world(gt, c0, r0)};
    if (geo::ring_signed_area(std::span<const LonLat>(ring)) < 0.0)
      std::reverse(ring.begin() + 1, ring.end());
    KmlPlacemark p;
    p.name = "cell " + std::to_string(i) + " p=" + format_fixed(c.mean_prob, 3);
    p.inline_color = base.scaled(c.mean_prob).hex();
    p.ring = std::move(ring);
    doc.placemarks.push_back(std::move(p));
  }
  return to_kml(doc);
}

} // namespace dmap::io
