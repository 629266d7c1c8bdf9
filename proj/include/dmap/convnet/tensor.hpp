#pragma once

#include <dmap/error.hpp>
#include <dmap/raster.hpp>

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dmap::nn {

struct Shape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t count() const { return height * width * channels; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" + std::to_string(s.channels);
}

/// Activation carrier, HWC row-major.
struct Tensor {
  Shape shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(s), values(s.count(), fill) {}
  Tensor(Shape s, std::vector<double> v) : shape(s), values(std::move(v)) {
    if (values.size() != shape.count())
      throw InvalidArgument("Tensor: value count does not match shape " + to_string(shape));
  }

  std::size_t index(std::size_t row, std::size_t col, std::size_t ch) const {
    return (row * shape.width + col) * shape.channels + ch;
  }
  double& at(std::size_t row, std::size_t col, std::size_t ch) { return values[index(row, col, ch)]; }
  double at(std::size_t row, std::size_t col, std::size_t ch) const {
    return values[index(row, col, ch)];
  }

  /// Copy of the spatial window [row, row+h) x [col, col+w), all channels.
  Tensor window(std::size_t row, std::size_t col, std::size_t h, std::size_t w) const {
    if (row + h > shape.height || col + w > shape.width)
      throw InvalidArgument("Tensor::window: out of bounds");
    Tensor out(Shape{h, w, shape.channels});
    const std::size_t run = w * shape.channels;
    for (std::size_t r = 0; r < h; ++r) {
      const double* src = values.data() + index(row + r, col, 0);
      std::copy(src, src + run, out.values.data() + r * run);
    }
    return out;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline Tensor to_tensor(const Raster& r) {
  const auto v = r.values();
  return Tensor(Shape{r.height(), r.width(), r.channels()}, std::vector<double>(v.begin(), v.end()));
}

} // namespace dmap::nn
