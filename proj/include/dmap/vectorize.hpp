#pragma once

#include <dmap/error.hpp>
#include <dmap/raster.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace dmap {

class BinaryMask {
public:
  BinaryMask() = default;
  BinaryMask(std::size_t width, std::size_t height)
      : width_(width), height_(height), bits_(width * height, 0) {}
  BinaryMask(std::size_t width, std::size_t height, std::vector<std::uint8_t> bits)
      : width_(width), height_(height), bits_(std::move(bits)) {
    if (bits_.size() != width_ * height_)
      throw InvalidArgument("BinaryMask: bit count does not match dimensions");
    for (auto b : bits_)
      if (b > 1)
        throw InvalidArgument("BinaryMask: values must be 0 or 1");
  }

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }

  bool get(std::size_t col, std::size_t row) const { return bits_[row * width_ + col] != 0; }
  /// Out-of-frame reads return 0.
  bool get_or_zero(std::ptrdiff_t col, std::ptrdiff_t row) const {
    if (col < 0 || row < 0 || col >= static_cast<std::ptrdiff_t>(width_) ||
        row >= static_cast<std::ptrdiff_t>(height_))
      return false;
    return get(static_cast<std::size_t>(col), static_cast<std::size_t>(row));
  }
  void set(std::size_t col, std::size_t row, bool v) {
    bits_[row * width_ + col] = v ? 1 : 0;
  }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Offsets relative to the element's origin.
struct StructuringElement {
  std::vector<std::pair<int, int>> offsets; // (dcol, drow)

  static StructuringElement square(int size = 3) {
    if (size < 1 || size % 2 == 0)
      throw InvalidArgument("StructuringElement: square size must be odd and positive");
    StructuringElement se;
    const int r = size / 2;
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx)
        se.offsets.emplace_back(dx, dy);
    return se;
  }

  int radius() const {
    int r = 0;
    for (auto [dx, dy] : offsets)
      r = std::max({r, std::abs(dx), std::abs(dy)});
    return r;
  }
};

/// Inclusive threshold: bit = value >= tau.
inline BinaryMask binarize(const Raster& prob, double tau = 0.5) {
  if (prob.channels() != 1)
    throw InvalidArgument("binarize: expected a single-channel raster");
  BinaryMask m(prob.width(), prob.height());
  for (std::size_t r = 0; r < prob.height(); ++r)
    for (std::size_t c = 0; c < prob.width(); ++c)
      m.set(c, r, prob.at(c, r) >= tau);
  return m;
}

/// out(p) = 1 iff in(p - s) = 1 for some offset s.
inline BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se) {
  if (se.offsets.empty())
    throw InvalidArgument("dilate: empty structuring element");
  BinaryMask out(mask.width(), mask.height());
  for (std::size_t r = 0; r < mask.height(); ++r)
    for (std::size_t c = 0; c < mask.width(); ++c) {
      bool hit = false;
      for (auto [dx, dy] : se.offsets) {
        if (mask.get_or_zero(static_cast<std::ptrdiff_t>(c) - dx,
                             static_cast<std::ptrdiff_t>(r) - dy)) {
          hit = true;
          break;
        }
      }
      out.set(c, r, hit);
    }
  return out;
}

/// out(p) = 1 iff in(p + s) = 1 for every offset s; pixels outside the frame read as 0.
inline BinaryMask erode(const BinaryMask& mask, const StructuringElement& se) {
  if (se.offsets.empty())
    throw InvalidArgument("erode: empty structuring element");
  BinaryMask out(mask.width(), mask.height());
  for (std::size_t r = 0; r < mask.height(); ++r)
    for (std::size_t c = 0; c < mask.width(); ++c) {
      bool all = true;
      for (auto [dx, dy] : se.offsets) {
        if (!mask.get_or_zero(static_cast<std::ptrdiff_t>(c) + dx,
                              static_cast<std::ptrdiff_t>(r) + dy)) {
          all = false;
          break;
        }
      }
      out.set(c, r, all);
    }
  return out;
}

namespace detail {

inline BinaryMask pad_mask(const BinaryMask& m, std::size_t margin) {
  BinaryMask out(m.width() + 2 * margin, m.height() + 2 * margin);
  for (std::size_t r = 0; r < m.height(); ++r)
    for (std::size_t c = 0; c < m.width(); ++c)
      out.set(c + margin, r + margin, m.get(c, r));
  return out;
}

inline BinaryMask crop_mask(const BinaryMask& m, std::size_t margin, std::size_t w, std::size_t h) {
  BinaryMask out(w, h);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      out.set(c, r, m.get(c + margin, r + margin));
  return out;
}

} // namespace detail

inline BinaryMask opening(const BinaryMask& mask, const StructuringElement& se,
                          std::size_t iterations = 1) {
  BinaryMask m = mask;
  for (std::size_t i = 0; i < iterations; ++i)
    m = erode(m, se);
  for (std::size_t i = 0; i < iterations; ++i)
    m = dilate(m, se);
  return m;
}

/// Closing on a canvas grown by the dilation reach, so sets touching the frame
/// are not eroded by the zero border.
inline BinaryMask closing(const BinaryMask& mask, const StructuringElement& se,
                          std::size_t iterations = 1) {
  const std::size_t margin = static_cast<std::size_t>(se.radius()) * iterations;
  BinaryMask m = detail::pad_mask(mask, margin);
  for (std::size_t i = 0; i < iterations; ++i)
    m = dilate(m, se);
  for (std::size_t i = 0; i < iterations; ++i)
    m = erode(m, se);
  return detail::crop_mask(m, margin, mask.width(), mask.height());
}

/// Opening (drops specks) then closing (fills pinholes).
inline BinaryMask clean(const BinaryMask& mask,
                        const StructuringElement& se = StructuringElement::square(3),
                        std::size_t iterations = 1) {
  return closing(opening(mask, se, iterations), se, iterations);
}

// ---------------------------------------------------------------------------
// Connected components

struct ComponentLabels {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint32_t> labels; // 0 = background, 1..count in raster order of first pixel
  std::uint32_t count = 0;

  std::uint32_t at(std::size_t col, std::size_t row) const { return labels[row * width + col]; }

  /// Pixel count per component, index 0 unused.
  std::vector<std::size_t> sizes() const {
    std::vector<std::size_t> s(count + 1, 0);
    for (auto l : labels)
      ++s[l];
    s[0] = 0;
    return s;
  }

  BinaryMask component_mask(std::uint32_t id) const {
    BinaryMask m(width, height);
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == id)
        m.set(i % width, i / width, true);
    return m;
  }
};

/// 8-connected labelling.
inline ComponentLabels connected_components(const BinaryMask& mask) {
  ComponentLabels out{mask.width(), mask.height(),
                      std::vector<std::uint32_t>(mask.width() * mask.height(), 0), 0};
  std::vector<std::size_t> stack;
  const auto W = static_cast<std::ptrdiff_t>(mask.width());
  const auto H = static_cast<std::ptrdiff_t>(mask.height());
  for (std::size_t start = 0; start < out.labels.size(); ++start) {
    if (!mask.bits()[start] || out.labels[start] != 0)
      continue;
    const std::uint32_t id = ++out.count;
    out.labels[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const auto pc = static_cast<std::ptrdiff_t>(p % mask.width());
      const auto pr = static_cast<std::ptrdiff_t>(p / mask.width());
      for (std::ptrdiff_t dy = -1; dy <= 1; ++dy)
        for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
          const std::ptrdiff_t nc = pc + dx;
          const std::ptrdiff_t nr = pr + dy;
          if (nc < 0 || nr < 0 || nc >= W || nr >= H)
            continue;
          const auto q = static_cast<std::size_t>(nr * W + nc);
          if (mask.bits()[q] && out.labels[q] == 0) {
            out.labels[q] = id;
            stack.push_back(q);
          }
        }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Polygons in pixel space

/// Closed ring of pixel-corner vertices (closure implicit). Positive shoelace
/// area in (col,row) coordinates.
struct PixelPolygon {
  std::vector<PixelPoint> ring;
  std::uint32_t component_id = 0;

  friend bool operator==(const PixelPolygon&, const PixelPolygon&) = default;
};

inline double signed_area(const std::vector<PixelPoint>& ring) {
  double twice = 0.0;
  for (std::size_t i = 0; i < ring.size(); ++i) {
    const PixelPoint& a = ring[i];
    const PixelPoint& b = ring[(i + 1) % ring.size()];
    twice += a.col * b.row - b.col * a.row;
  }
  return 0.5 * twice;
}

namespace detail {

enum class Dir : std::uint8_t { PosX, PosY, NegX, NegY };

inline Dir turn_right(Dir d) {
  switch (d) {
  case Dir::PosX: return Dir::NegY;
  case Dir::NegY: return Dir::NegX;
  case Dir::NegX: return Dir::PosY;
  case Dir::PosY: return Dir::PosX;
  }
  return d;
}

inline Dir turn_left(Dir d) {
  switch (d) {
  case Dir::PosX: return Dir::PosY;
  case Dir::PosY: return Dir::NegX;
  case Dir::NegX: return Dir::NegY;
  case Dir::NegY: return Dir::PosX;
  }
  return d;
}

inline std::pair<std::ptrdiff_t, std::ptrdiff_t> step(Dir d) {
  switch (d) {
  case Dir::PosX: return {1, 0};
  case Dir::PosY: return {0, 1};
  case Dir::NegX: return {-1, 0};
  case Dir::NegY: return {0, -1};
  }
  return {0, 0};
}

/// Pixels to the left and right of the unit edge leaving corner (x,y) along d.
struct EdgeSides {
  std::ptrdiff_t lc, lr, rc, rr;
};

inline EdgeSides sides(std::ptrdiff_t x, std::ptrdiff_t y, Dir d) {
  switch (d) {
  case Dir::PosX: return {x, y, x, y - 1};
  case Dir::PosY: return {x - 1, y, x, y};
  case Dir::NegX: return {x - 1, y - 1, x - 1, y};
  case Dir::NegY: return {x, y - 1, x - 1, y - 1};
  }
  return {0, 0, 0, 0};
}

} // namespace detail

/// Outer boundary of the component containing the first set pixel (raster
/// order), traced along pixel edges with the region on the left. At corners
/// shared by diagonal neighbours the trace turns right first, which keeps
/// 8-connected pixels in one ring; such corners appear twice in the ring.
/// Only direction changes are emitted as vertices.
inline PixelPolygon trace_polygon(const BinaryMask& region, std::uint32_t component_id = 1) {
  std::size_t first = region.bits().size();
  for (std::size_t i = 0; i < region.bits().size(); ++i)
    if (region.bits()[i]) {
      first = i;
      break;
    }
  if (first == region.bits().size())
    throw InvalidArgument("trace_polygon: empty region");

  using detail::Dir;
  auto inside = [&](std::ptrdiff_t c, std::ptrdiff_t r) { return region.get_or_zero(c, r); };
  auto is_boundary = [&](std::ptrdiff_t x, std::ptrdiff_t y, Dir d) {
    const auto s = detail::sides(x, y, d);
    return inside(s.lc, s.lr) && !inside(s.rc, s.rr);
  };

  const auto x0 = static_cast<std::ptrdiff_t>(first % region.width());
  const auto y0 = static_cast<std::ptrdiff_t>(first / region.width());
  std::ptrdiff_t x = x0;
  std::ptrdiff_t y = y0;
  Dir d = Dir::PosX;

  PixelPolygon poly;
  poly.component_id = component_id;
  poly.ring.push_back({static_cast<double>(x), static_cast<double>(y)});
  const std::size_t limit = 4 * (region.width() + 1) * (region.height() + 1) + 4;
  for (std::size_t guard = 0; guard < limit; ++guard) {
    const auto [dx, dy] = detail::step(d);
    x += dx;
    y += dy;
    Dir next = d;
    if (is_boundary(x, y, detail::turn_right(d)))
      next = detail::turn_right(d);
    else if (is_boundary(x, y, d))
      next = d;
    else
      next = detail::turn_left(d);
    if (x == x0 && y == y0 && next == Dir::PosX)
      return poly;
    if (next != d)
      poly.ring.push_back({static_cast<double>(x), static_cast<double>(y)});
    d = next;
  }
  throw InvalidArgument("trace_polygon: boundary did not close");
}

inline PixelPolygon trace_polygon(const ComponentLabels& labels, std::uint32_t id) {
  return trace_polygon(labels.component_mask(id), id);
}

namespace detail {

inline double point_segment_distance(const PixelPoint& p, const PixelPoint& a,
                                     const PixelPoint& b) {
  const double vx = b.col - a.col;
  const double vy = b.row - a.row;
  const double wx = p.col - a.col;
  const double wy = p.row - a.row;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? (wx * vx + wy * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = wx - t * vx;
  const double dy = wy - t * vy;
  return std::sqrt(dx * dx + dy * dy);
}

inline void douglas_peucker(const std::vector<PixelPoint>& pts, std::size_t first,
                            std::size_t last, double eps, std::vector<bool>& keep) {
  if (last <= first + 1)
    return;
  double worst = -1.0;
  std::size_t index = first;
  for (std::size_t i = first + 1; i < last; ++i) {
    const double d = point_segment_distance(pts[i], pts[first], pts[last]);
    if (d > worst) {
      worst = d;
      index = i;
    }
  }
  if (worst > eps) {
    keep[index] = true;
    douglas_peucker(pts, first, index, eps, keep);
    douglas_peucker(pts, index, last, eps, keep);
  }
}

inline double cross(const PixelPoint& o, const PixelPoint& a, const PixelPoint& b) {
  return (a.col - o.col) * (b.row - o.row) - (a.row - o.row) * (b.col - o.col);
}

/// True if segments ab and cd cross at a point interior to both.
inline bool proper_crossing(const PixelPoint& a, const PixelPoint& b, const PixelPoint& c,
                            const PixelPoint& d) {
  const double d1 = cross(a, b, c);
  const double d2 = cross(a, b, d);
  const double d3 = cross(c, d, a);
  const double d4 = cross(c, d, b);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

inline bool ring_has_crossing(const std::vector<PixelPoint>& ring) {
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1)
        continue;
      if (proper_crossing(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n]))
        return true;
    }
  return false;
}

} // namespace detail

/// Douglas-Peucker on a closed ring, anchored at vertex 0 and the vertex
/// farthest from it. Falls back to the input when the result would be
/// degenerate or self-crossing.
inline PixelPolygon simplify_polygon(const PixelPolygon& poly, double epsilon = 1.0) {
  if (poly.ring.size() < 3)
    throw InvalidArgument("simplify_polygon: ring has fewer than 3 vertices");
  if (!(epsilon > 0.0))
    return poly;

  const auto& ring = poly.ring;
  const std::size_t n = ring.size();
  std::size_t far = 0;
  double far_d = -1.0;
  for (std::size_t i = 1; i < n; ++i) {
    const double dx = ring[i].col - ring[0].col;
    const double dy = ring[i].row - ring[0].row;
    if (dx * dx + dy * dy > far_d) {
      far_d = dx * dx + dy * dy;
      far = i;
    }
  }

  std::vector<PixelPoint> closed = ring;
  closed.push_back(ring[0]);
  std::vector<bool> keep(n + 1, false);
  keep[0] = keep[far] = keep[n] = true;
  detail::douglas_peucker(closed, 0, far, epsilon, keep);
  detail::douglas_peucker(closed, far, n, epsilon, keep);

  PixelPolygon out;
  out.component_id = poly.component_id;
  for (std::size_t i = 0; i < n; ++i)
    if (keep[i])
      out.ring.push_back(ring[i]);
  if (out.ring.size() < 3 || signed_area(out.ring) == 0.0 || detail::ring_has_crossing(out.ring))
    return poly;
  return out;
}

// ---------------------------------------------------------------------------
// Heatmap cells

struct HeatCell {
  std::size_t col0 = 0; // pixel bounds, [col0, col1) x [row0, row1)
  std::size_t row0 = 0;
  std::size_t col1 = 0;
  std::size_t row1 = 0;
  double mean_prob = 0.0;

  std::size_t pixel_count() const { return (col1 - col0) * (row1 - row0); }
  friend bool operator==(const HeatCell&, const HeatCell&) = default;
};

/// Tiles the map with cell x cell squares (ragged at the right/bottom edges).
inline std::vector<HeatCell> grid_heatmap(const Raster& prob, std::size_t cell) {
  if (cell == 0)
    throw InvalidArgument("grid_heatmap: zero cell size");
  if (prob.channels() != 1)
    throw InvalidArgument("grid_heatmap: expected a single-channel raster");
  std::vector<HeatCell> cells;
  for (std::size_t r0 = 0; r0 < prob.height(); r0 += cell)
    for (std::size_t c0 = 0; c0 < prob.width(); c0 += cell) {
      HeatCell h{c0, r0, std::min(c0 + cell, prob.width()), std::min(r0 + cell, prob.height()), 0};
      double sum = 0.0;
      for (std::size_t r = h.row0; r < h.row1; ++r)
        for (std::size_t c = h.col0; c < h.col1; ++c)
          sum += prob.at(c, r);
      h.mean_prob = std::clamp(sum / static_cast<double>(h.pixel_count()), 0.0, 1.0);
      cells.push_back(h);
    }
  return cells;
}

} // namespace dmap
