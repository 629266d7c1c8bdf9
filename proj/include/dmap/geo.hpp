#pragma once

#include <dmap/error.hpp>
#include <dmap/raster.hpp>
#include <dmap/vectorize.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dmap::geo {

inline constexpr double kEarthRadiusM = 6378137.0;
inline constexpr double kDegToRad = std::numbers::pi / 180.0;

struct XY {
  double x = 0.0; // metres east
  double y = 0.0; // metres north
  friend bool operator==(const XY&, const XY&) = default;
};

// ---------------------------------------------------------------------------
// Local equirectangular projection

inline void check_reference(const LonLat& ref) {
  if (!(std::abs(ref.lat) < 89.0))
    throw InvalidArgument("local_project: reference latitude too close to a pole");
}

inline XY project(const LonLat& p, const LonLat& ref) {
  const double k = kEarthRadiusM * kDegToRad;
  return {k * (p.lon - ref.lon) * std::cos(ref.lat * kDegToRad), k * (p.lat - ref.lat)};
}

inline LonLat unproject(const XY& q, const LonLat& ref) {
  const double k = kEarthRadiusM * kDegToRad;
  return {ref.lon + q.x / (k * std::cos(ref.lat * kDegToRad)), ref.lat + q.y / k};
}

inline std::vector<XY> local_project(std::span<const LonLat> points, const LonLat& ref) {
  check_reference(ref);
  std::vector<XY> out;
  out.reserve(points.size());
  for (const LonLat& p : points)
    out.push_back(project(p, ref));
  return out;
}

inline std::vector<LonLat> local_unproject(std::span<const XY> points, const LonLat& ref) {
  check_reference(ref);
  std::vector<LonLat> out;
  out.reserve(points.size());
  for (const XY& q : points)
    out.push_back(unproject(q, ref));
  return out;
}

// ---------------------------------------------------------------------------
// Planar ring helpers (work on either XY or LonLat)

inline double px(const XY& p) { return p.x; }
inline double py(const XY& p) { return p.y; }
inline double px(const LonLat& p) { return p.lon; }
inline double py(const LonLat& p) { return p.lat; }

template <class P>
double ring_signed_area(std::span<const P> ring) {
  double twice = 0.0;
  for (std::size_t i = 0; i < ring.size(); ++i) {
    const P& a = ring[i];
    const P& b = ring[(i + 1) % ring.size()];
    twice += px(a) * py(b) - px(b) * py(a);
  }
  return 0.5 * twice;
}

/// Even-odd ray casting; points on an edge count as inside.
template <class P>
bool point_in_polygon(const P& p, std::span<const P> ring) {
  const std::size_t n = ring.size();
  if (n < 3)
    return false;
  const double x = px(p);
  const double y = py(p);
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const double xi = px(ring[i]), yi = py(ring[i]);
    const double xj = px(ring[j]), yj = py(ring[j]);
    const double cross = (xj - xi) * (y - yi) - (yj - yi) * (x - xi);
    const double scale = std::max({std::abs(xj - xi), std::abs(yj - yi), 1e-300});
    if (std::abs(cross) <= 1e-12 * scale * scale && x >= std::min(xi, xj) &&
        x <= std::max(xi, xj) && y >= std::min(yi, yj) && y <= std::max(yi, yj))
      return true;
    if ((yi > y) != (yj > y)) {
      const double x_cross = xi + (y - yi) * (xj - xi) / (yj - yi);
      if (x < x_cross)
        inside = !inside;
    }
  }
  return inside;
}

template <class P>
bool point_in_polygon(const P& p, const std::vector<P>& ring) {
  return point_in_polygon(p, std::span<const P>(ring));
}

inline LonLat vertex_mean(std::span<const LonLat> ring) {
  LonLat m{0.0, 0.0};
  for (const LonLat& p : ring) {
    m.lon += p.lon;
    m.lat += p.lat;
  }
  const auto n = static_cast<double>(ring.size());
  return {m.lon / n, m.lat / n};
}

/// Area centroid, falling back to the vertex mean for zero-area rings.
inline LonLat ring_centroid(std::span<const LonLat> ring) {
  const LonLat ref = vertex_mean(ring);
  const auto xy = local_project(ring, ref);
  double a2 = 0.0, cx = 0.0, cy = 0.0;
  for (std::size_t i = 0; i < xy.size(); ++i) {
    const XY& p = xy[i];
    const XY& q = xy[(i + 1) % xy.size()];
    const double w = p.x * q.y - q.x * p.y;
    a2 += w;
    cx += (p.x + q.x) * w;
    cy += (p.y + q.y) * w;
  }
  if (a2 == 0.0)
    return ref;
  return unproject({cx / (3.0 * a2), cy / (3.0 * a2)}, ref);
}

/// Absolute shoelace area in square metres, projected about the ring centroid.
inline double ring_area_m2(std::span<const LonLat> ring) {
  if (ring.size() < 3)
    throw InvalidArgument("polygon_area_m2: ring has fewer than 3 vertices");
  const auto xy = local_project(ring, ring_centroid(ring));
  const double a = std::abs(ring_signed_area(std::span<const XY>(xy)));
  if (!(a > 0.0))
    throw InvalidArgument("polygon_area_m2: degenerate ring");
  return a;
}

// ---------------------------------------------------------------------------
// Settlement polygons

/// World-coordinate ring, counterclockwise (lon east, lat north), closure implicit.
struct SettlementPolygon {
  std::uint32_t id = 0;
  std::vector<LonLat> ring;
  double area_m2 = 0.0;
  LonLat centroid;

  friend bool operator==(const SettlementPolygon&, const SettlementPolygon&) = default;
};

inline SettlementPolygon make_settlement(std::uint32_t id, std::vector<LonLat> ring) {
  if (ring.size() < 3)
    throw InvalidArgument("SettlementPolygon: ring has fewer than 3 vertices");
  if (ring_signed_area(std::span<const LonLat>(ring)) < 0.0)
    std::reverse(ring.begin() + 1, ring.end());
  SettlementPolygon s;
  s.id = id;
  s.area_m2 = ring_area_m2(ring);
  s.centroid = ring_centroid(ring);
  s.ring = std::move(ring);
  return s;
}

/// Maps a pixel-space ring through the geotransform.
inline SettlementPolygon to_settlement(const PixelPolygon& poly, const GeoTransform& gt,
                                       std::uint32_t id) {
  std::vector<LonLat> ring;
  ring.reserve(poly.ring.size());
  for (const PixelPoint& p : poly.ring)
    ring.push_back(pixel_to_world(gt, p.col, p.row));
  return make_settlement(id, std::move(ring));
}

inline double polygon_area_m2(const SettlementPolygon& poly) { return ring_area_m2(poly.ring); }

// ---------------------------------------------------------------------------
// Buffers

/// Regular n-gon of circumradius `radius` about the origin of a local frame.
inline std::vector<XY> regular_polygon(const XY& center, double radius, std::size_t n) {
  std::vector<XY> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    out.push_back({center.x + radius * std::cos(t), center.y + radius * std::sin(t)});
  }
  return out;
}

inline std::vector<LonLat> buffer_point(const LonLat& p, double radius_m = 200.0,
                                        std::size_t n = 32) {
  if (!(radius_m > 0.0) || !std::isfinite(radius_m))
    throw InvalidArgument("buffer_point: radius must be positive");
  if (n < 8)
    throw InvalidArgument("buffer_point: need at least 8 vertices");
  check_reference(p);
  const auto xy = regular_polygon({0.0, 0.0}, radius_m, n);
  return local_unproject(xy, p);
}

// ---------------------------------------------------------------------------
// Activity and school records

using Timestamp = std::chrono::sys_seconds;

struct ActivityRecord {
  std::string vaccinator_id;
  double lon = 0.0;
  double lat = 0.0;
  Timestamp timestamp{};

  LonLat position() const { return {lon, lat}; }
  friend bool operator==(const ActivityRecord&, const ActivityRecord&) = default;
};

struct SchoolRecord {
  std::string school_id;
  double lon = 0.0;
  double lat = 0.0;

  LonLat position() const { return {lon, lat}; }
  friend bool operator==(const SchoolRecord&, const SchoolRecord&) = default;
};

inline bool valid_coordinate(double lon, double lat) {
  return std::isfinite(lon) && std::isfinite(lat) && lon >= -180.0 && lon <= 180.0 &&
         lat >= -90.0 && lat <= 90.0;
}

namespace detail {

inline bool take_int(std::string_view& s, std::size_t digits, int& out) {
  if (s.size() < digits)
    return false;
  for (std::size_t i = 0; i < digits; ++i)
    if (s[i] < '0' || s[i] > '9')
      return false;
  std::from_chars(s.data(), s.data() + digits, out);
  s.remove_prefix(digits);
  return true;
}

inline bool take_char(std::string_view& s, char c) {
  if (s.empty() || s.front() != c)
    return false;
  s.remove_prefix(1);
  return true;
}

} // namespace detail

/// ISO-8601 subset: YYYY-MM-DD[(T| )hh:mm[:ss[.frac]]][Z|(+|-)hh[:]mm].
/// Returns UTC seconds; fractional seconds are truncated.
inline std::optional<Timestamp> parse_timestamp(std::string_view s) {
  using namespace std::chrono;
  int y = 0, mo = 0, d = 0, hh = 0, mi = 0, ss = 0;
  if (!detail::take_int(s, 4, y) || !detail::take_char(s, '-') || !detail::take_int(s, 2, mo) ||
      !detail::take_char(s, '-') || !detail::take_int(s, 2, d))
    return std::nullopt;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok())
    return std::nullopt;
  int offset_min = 0;
  if (!s.empty()) {
    if (!(detail::take_char(s, 'T') || detail::take_char(s, ' ')))
      return std::nullopt;
    if (!detail::take_int(s, 2, hh) || !detail::take_char(s, ':') || !detail::take_int(s, 2, mi))
      return std::nullopt;
    if (detail::take_char(s, ':')) {
      if (!detail::take_int(s, 2, ss))
        return std::nullopt;
      if (detail::take_char(s, '.')) {
        std::size_t n = 0;
        while (n < s.size() && s[n] >= '0' && s[n] <= '9')
          ++n;
        if (n == 0)
          return std::nullopt;
        s.remove_prefix(n);
      }
    }
    if (hh > 23 || mi > 59 || ss > 60)
      return std::nullopt;
    if (detail::take_char(s, 'Z')) {
    } else if (!s.empty() && (s.front() == '+' || s.front() == '-')) {
      const int sign = s.front() == '-' ? -1 : 1;
      s.remove_prefix(1);
      int oh = 0, om = 0;
      if (!detail::take_int(s, 2, oh))
        return std::nullopt;
      detail::take_char(s, ':');
      if (!detail::take_int(s, 2, om) || oh > 23 || om > 59)
        return std::nullopt;
      offset_min = sign * (oh * 60 + om);
    }
    if (!s.empty())
      return std::nullopt;
  }
  return sys_days(ymd) + hours(hh) + minutes(mi) + seconds(ss) - minutes(offset_min);
}

inline std::string format_date(const std::chrono::year_month_day& ymd) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

inline std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  const auto day_start = floor<days>(t);
  const hh_mm_ss<seconds> tod{t - day_start};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02dZ",
                format_date(year_month_day{day_start}).c_str(),
                static_cast<int>(tod.hours().count()), static_cast<int>(tod.minutes().count()),
                static_cast<int>(tod.seconds().count()));
  return buf;
}

// ---------------------------------------------------------------------------
// Quarter bucketing

struct QuarterBucket {
  std::size_t index = 0;
  std::chrono::year_month_day start;
  std::chrono::year_month_day end; // inclusive
  friend bool operator==(const QuarterBucket&, const QuarterBucket&) = default;
};

struct QuarterWindow {
  std::chrono::year_month_day anchor{std::chrono::year{2015}, std::chrono::August,
                                     std::chrono::day{1}};
  std::chrono::year_month_day last{std::chrono::year{2016}, std::chrono::December,
                                   std::chrono::day{31}};
  unsigned months_per_bucket = 3;

  void validate() const {
    if (!anchor.ok() || !last.ok() || anchor.day() != std::chrono::day{1})
      throw InvalidArgument("QuarterWindow: anchor must be the first day of a month");
    if (std::chrono::sys_days(last) < std::chrono::sys_days(anchor))
      throw InvalidArgument("QuarterWindow: window ends before it starts");
    if (months_per_bucket == 0)
      throw InvalidArgument("QuarterWindow: zero months per bucket");
  }

  int months_since_anchor(const std::chrono::year_month_day& d) const {
    return (static_cast<int>(d.year()) - static_cast<int>(anchor.year())) * 12 +
           (static_cast<int>(static_cast<unsigned>(d.month())) -
            static_cast<int>(static_cast<unsigned>(anchor.month())));
  }

  std::size_t bucket_count() const {
    return static_cast<std::size_t>(months_since_anchor(last)) / months_per_bucket + 1;
  }

  std::vector<QuarterBucket> buckets() const {
    using namespace std::chrono;
    validate();
    std::vector<QuarterBucket> out;
    for (std::size_t i = 0; i < bucket_count(); ++i) {
      const year_month_day start = anchor + months(static_cast<int>(i * months_per_bucket));
      const year_month_day next = anchor + months(static_cast<int>((i + 1) * months_per_bucket));
      sys_days end = sys_days(next) - days(1);
      if (end > sys_days(last))
        end = sys_days(last);
      out.push_back({i, start, year_month_day(end)});
    }
    return out;
  }

  /// Bucket index of a UTC instant, or nullopt outside the window.
  std::optional<std::size_t> bucket_of(Timestamp t) const {
    using namespace std::chrono;
    const sys_days day = floor<days>(t);
    if (day < sys_days(anchor) || day > sys_days(last))
      return std::nullopt;
    return static_cast<std::size_t>(months_since_anchor(year_month_day(day))) / months_per_bucket;
  }
};

struct BucketedRecords {
  std::vector<QuarterBucket> buckets;
  std::vector<std::vector<ActivityRecord>> records; // parallel to buckets
  std::size_t out_of_window = 0;
};

inline BucketedRecords bucket_quarters(std::span<const ActivityRecord> records,
                                       const QuarterWindow& window = {}) {
  BucketedRecords out;
  out.buckets = window.buckets();
  out.records.resize(out.buckets.size());
  for (const ActivityRecord& r : records) {
    if (const auto b = window.bucket_of(r.timestamp))
      out.records[*b].push_back(r);
    else
      ++out.out_of_window;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Segment analytics

namespace detail {

struct Box {
  double x0, y0, x1, y1;
  double distance_to(const XY& p) const {
    const double dx = std::max({x0 - p.x, 0.0, p.x - x1});
    const double dy = std::max({y0 - p.y, 0.0, p.y - y1});
    return std::sqrt(dx * dx + dy * dy);
  }
};

inline Box bounds(std::span<const XY> pts) {
  Box b{pts[0].x, pts[0].y, pts[0].x, pts[0].y};
  for (const XY& p : pts) {
    b.x0 = std::min(b.x0, p.x);
    b.y0 = std::min(b.y0, p.y);
    b.x1 = std::max(b.x1, p.x);
    b.y1 = std::max(b.y1, p.y);
  }
  return b;
}

inline double orient(const XY& a, const XY& b, const XY& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

inline bool on_segment(const XY& a, const XY& b, const XY& p) {
  return p.x >= std::min(a.x, b.x) && p.x <= std::max(a.x, b.x) && p.y >= std::min(a.y, b.y) &&
         p.y <= std::max(a.y, b.y);
}

inline bool segments_intersect(const XY& a, const XY& b, const XY& c, const XY& d) {
  const double d1 = orient(c, d, a), d2 = orient(c, d, b);
  const double d3 = orient(a, b, c), d4 = orient(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
    return true;
  return (d1 == 0 && on_segment(c, d, a)) || (d2 == 0 && on_segment(c, d, b)) ||
         (d3 == 0 && on_segment(a, b, c)) || (d4 == 0 && on_segment(a, b, d));
}

inline bool rings_intersect(std::span<const XY> a, std::span<const XY> b) {
  if (point_in_polygon(a[0], b) || point_in_polygon(b[0], a))
    return true;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      if (segments_intersect(a[i], a[(i + 1) % a.size()], b[j], b[(j + 1) % b.size()]))
        return true;
  return false;
}

/// Segment ring in its own local frame.
struct LocalSegment {
  LonLat ref;
  std::vector<XY> ring;
  Box box;

  explicit LocalSegment(const SettlementPolygon& s)
      : ref(vertex_mean(s.ring)), ring(local_project(s.ring, ref)), box(bounds(ring)) {}
};

} // namespace detail

struct BufferParams {
  double radius_m = 200.0;
  std::size_t vertices = 32;
};

/// Distinct vaccinators per segment whose buffer around any tagged point
/// intersects the segment.
inline std::vector<std::size_t> vaccinators_per_segment(std::span<const ActivityRecord> records,
                                                        std::span<const SettlementPolygon> segments,
                                                        const BufferParams& buffer = {}) {
  std::vector<std::size_t> counts;
  counts.reserve(segments.size());
  for (const SettlementPolygon& seg : segments) {
    const detail::LocalSegment local(seg);
    std::set<std::string> ids;
    for (const ActivityRecord& r : records) {
      if (ids.contains(r.vaccinator_id))
        continue;
      const XY c = project(r.position(), local.ref);
      if (local.box.distance_to(c) > buffer.radius_m)
        continue;
      const auto ring = regular_polygon(c, buffer.radius_m, buffer.vertices);
      if (detail::rings_intersect(ring, local.ring))
        ids.insert(r.vaccinator_id);
    }
    counts.push_back(ids.size());
  }
  return counts;
}

/// Percentage of the segment covered by the union of activity buffers,
/// estimated on a square grid of `cell_m` cells in the segment's local frame.
/// The grid is refined when the segment is too small to contain any cell centre.
inline double coverage_percent(const SettlementPolygon& segment,
                               std::span<const ActivityRecord> records,
                               const BufferParams& buffer = {}, double cell_m = 10.0) {
  if (!(cell_m > 0.0))
    throw InvalidArgument("coverage_percent: cell size must be positive");
  if (segment.ring.size() < 3)
    throw InvalidArgument("coverage_percent: degenerate segment");
  const detail::LocalSegment local(segment);
  if (!(std::abs(ring_signed_area(std::span<const XY>(local.ring))) > 0.0))
    throw InvalidArgument("coverage_percent: degenerate segment");

  std::vector<std::vector<XY>> buffers;
  std::vector<detail::Box> boxes;
  for (const ActivityRecord& r : records) {
    const XY c = project(r.position(), local.ref);
    if (local.box.distance_to(c) > buffer.radius_m)
      continue;
    buffers.push_back(regular_polygon(c, buffer.radius_m, buffer.vertices));
    boxes.push_back(detail::bounds(buffers.back()));
  }

  double cell = cell_m;
  for (int refine = 0; refine < 12; ++refine, cell *= 0.5) {
    const auto nx = static_cast<std::size_t>(std::ceil((local.box.x1 - local.box.x0) / cell));
    const auto ny = static_cast<std::size_t>(std::ceil((local.box.y1 - local.box.y0) / cell));
    std::size_t inside = 0;
    std::size_t covered = 0;
    for (std::size_t j = 0; j < std::max<std::size_t>(ny, 1); ++j)
      for (std::size_t i = 0; i < std::max<std::size_t>(nx, 1); ++i) {
        const XY p{local.box.x0 + (static_cast<double>(i) + 0.5) * cell,
                   local.box.y0 + (static_cast<double>(j) + 0.5) * cell};
        if (!point_in_polygon(p, std::span<const XY>(local.ring)))
          continue;
        ++inside;
        for (std::size_t b = 0; b < buffers.size(); ++b) {
          const auto& bx = boxes[b];
          if (p.x < bx.x0 || p.x > bx.x1 || p.y < bx.y0 || p.y > bx.y1)
            continue;
          if (point_in_polygon(p, std::span<const XY>(buffers[b]))) {
            ++covered;
            break;
          }
        }
      }
    if (inside > 0)
      return std::clamp(100.0 * static_cast<double>(covered) / static_cast<double>(inside), 0.0,
                        100.0);
  }
  throw InvalidArgument("coverage_percent: degenerate segment");
}

enum class SchoolBand { Red, LightGreen, MidGreen, DarkGreen };

inline SchoolBand school_band(std::size_t count) {
  if (count == 0)
    return SchoolBand::Red;
  if (count <= 2)
    return SchoolBand::LightGreen;
  if (count <= 10)
    return SchoolBand::MidGreen;
  return SchoolBand::DarkGreen;
}

inline std::string_view to_string(SchoolBand b) {
  switch (b) {
  case SchoolBand::Red: return "red";
  case SchoolBand::LightGreen: return "light_green";
  case SchoolBand::MidGreen: return "mid_green";
  case SchoolBand::DarkGreen: return "dark_green";
  }
  return "red";
}

inline std::optional<SchoolBand> parse_band(std::string_view s) {
  for (SchoolBand b : {SchoolBand::Red, SchoolBand::LightGreen, SchoolBand::MidGreen,
                       SchoolBand::DarkGreen})
    if (to_string(b) == s)
      return b;
  return std::nullopt;
}

struct SchoolStat {
  std::size_t count = 0;
  SchoolBand band = SchoolBand::Red;
};

inline std::vector<SchoolStat> school_stats(std::span<const SchoolRecord> schools,
                                            std::span<const SettlementPolygon> segments) {
  std::vector<SchoolStat> out;
  out.reserve(segments.size());
  for (const SettlementPolygon& seg : segments) {
    std::size_t n = 0;
    for (const SchoolRecord& s : schools)
      if (point_in_polygon(s.position(), std::span<const LonLat>(seg.ring)))
        ++n;
    out.push_back({n, school_band(n)});
  }
  return out;
}

/// Left-closed bins, the last one closed on both sides; out-of-range values are skipped.
inline std::vector<std::size_t> histogram(std::span<const double> values,
                                          std::span<const double> edges) {
  if (edges.size() < 2)
    throw InvalidArgument("histogram: need at least two bin edges");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1]))
      throw InvalidArgument("histogram: bin edges must be strictly increasing");
  std::vector<std::size_t> counts(edges.size() - 1, 0);
  for (double v : values) {
    if (!(v >= edges.front() && v <= edges.back()))
      continue;
    auto it = std::upper_bound(edges.begin(), edges.end(), v);
    std::size_t bin = static_cast<std::size_t>(it - edges.begin());
    bin = bin == 0 ? 0 : bin - 1;
    counts[std::min(bin, counts.size() - 1)] += 1;
  }
  return counts;
}

// ---------------------------------------------------------------------------
// Reports

struct QuarterStat {
  std::size_t vaccinators = 0;
  double coverage_percent = 0.0;
  friend bool operator==(const QuarterStat&, const QuarterStat&) = default;
};

struct SegmentReport {
  std::uint32_t segment_id = 0;
  double area_m2 = 0.0;
  std::vector<QuarterStat> quarters;
  std::size_t school_count = 0;
  SchoolBand school_band = SchoolBand::Red;
  friend bool operator==(const SegmentReport&, const SegmentReport&) = default;
};

struct CorrelationParams {
  BufferParams buffer;
  double coverage_cell_m = 10.0;
  QuarterWindow window;
};

inline std::vector<SegmentReport> correlate(std::span<const SettlementPolygon> segments,
                                            std::span<const ActivityRecord> activities,
                                            std::span<const SchoolRecord> schools,
                                            const CorrelationParams& params = {}) {
  const BucketedRecords bucketed = bucket_quarters(activities, params.window);
  const auto school = school_stats(schools, segments);
  std::vector<SegmentReport> out(segments.size());
  for (std::size_t s = 0; s < segments.size(); ++s) {
    out[s].segment_id = segments[s].id;
    out[s].area_m2 = segments[s].area_m2;
    out[s].school_count = school[s].count;
    out[s].school_band = school[s].band;
    out[s].quarters.resize(bucketed.buckets.size());
  }
  for (std::size_t q = 0; q < bucketed.buckets.size(); ++q) {
    const auto counts = vaccinators_per_segment(bucketed.records[q], segments, params.buffer);
    for (std::size_t s = 0; s < segments.size(); ++s) {
      out[s].quarters[q].vaccinators = counts[s];
      out[s].quarters[q].coverage_percent =
          coverage_percent(segments[s], bucketed.records[q], params.buffer, params.coverage_cell_m);
    }
  }
  std::sort(out.begin(), out.end(),
            [](const SegmentReport& a, const SegmentReport& b) { return a.segment_id < b.segment_id; });
  return out;
}

} // namespace dmap::geo
