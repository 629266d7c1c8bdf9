#pragma once

#include <dmap/convnet/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <variant>
#include <vector>

namespace dmap::nn {

/// 2-D convolution. Weights are laid out [ky][kx][in_ch][out_ch] so that a
/// kernel covering the whole input is a pure reshape of a fully connected
/// layer over the HWC-flattened input.
struct Conv {
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t in_ch = 1;
  std::size_t out_ch = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  std::size_t weight_count() const { return kernel_h * kernel_w * in_ch * out_ch; }
  friend bool operator==(const Conv&, const Conv&) = default;
};

struct Relu {
  friend bool operator==(const Relu&, const Relu&) = default;
};

struct MaxPool {
  std::size_t size = 2;
  std::size_t stride = 2;
  friend bool operator==(const MaxPool&, const MaxPool&) = default;
};

/// HWC tensor -> 1x1xN; the memory layout is unchanged.
struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};

/// Weights laid out [in][out].
struct FullyConnected {
  std::size_t in_dim = 1;
  std::size_t out_dim = 1;
  std::vector<double> weights;
  std::vector<double> bias;

  std::size_t weight_count() const { return in_dim * out_dim; }
  friend bool operator==(const FullyConnected&, const FullyConnected&) = default;
};

/// Channel-wise softmax at every spatial location.
struct Softmax {
  friend bool operator==(const Softmax&, const Softmax&) = default;
};

using Layer = std::variant<Conv, Relu, MaxPool, Flatten, FullyConnected, Softmax>;

/// Gradient buffers for a parametrised layer (empty for the others).
struct ParamGrad {
  std::vector<double> weights;
  std::vector<double> bias;
};

// ---------------------------------------------------------------------------
// Shapes

inline Shape output_shape(const Conv& l, const Shape& in) {
  if (in.channels != l.in_ch)
    throw InvalidArgument("Conv: expected " + std::to_string(l.in_ch) + " input channels, got " +
                          std::to_string(in.channels));
  if (in.height + 2 * l.pad < l.kernel_h || in.width + 2 * l.pad < l.kernel_w)
    throw InvalidArgument("Conv: input " + to_string(in) + " smaller than kernel");
  return {(in.height + 2 * l.pad - l.kernel_h) / l.stride + 1,
          (in.width + 2 * l.pad - l.kernel_w) / l.stride + 1, l.out_ch};
}

inline Shape output_shape(const Relu&, const Shape& in) { return in; }
inline Shape output_shape(const Softmax&, const Shape& in) { return in; }
inline Shape output_shape(const Flatten&, const Shape& in) { return {1, 1, in.count()}; }

inline Shape output_shape(const MaxPool& l, const Shape& in) {
  if (in.height < l.size || in.width < l.size)
    throw InvalidArgument("MaxPool: input " + to_string(in) + " smaller than window");
  return {(in.height - l.size) / l.stride + 1, (in.width - l.size) / l.stride + 1, in.channels};
}

inline Shape output_shape(const FullyConnected& l, const Shape& in) {
  if (in.height != 1 || in.width != 1 || in.channels != l.in_dim)
    throw InvalidArgument("FullyConnected: expected 1x1x" + std::to_string(l.in_dim) + ", got " +
                          to_string(in));
  return {1, 1, l.out_dim};
}

inline Shape output_shape(const Layer& layer, const Shape& in) {
  return std::visit([&](const auto& l) { return output_shape(l, in); }, layer);
}

// ---------------------------------------------------------------------------
// Forward

inline Tensor forward(const Conv& l, const Tensor& in) {
  const Shape os = output_shape(l, in.shape);
  Tensor out(os);
  const std::size_t co = l.out_ch;
  const std::size_t ci = l.in_ch;
  const auto H = static_cast<std::ptrdiff_t>(in.shape.height);
  const auto W = static_cast<std::ptrdiff_t>(in.shape.width);
  for (std::size_t oy = 0; oy < os.height; ++oy)
    for (std::size_t ox = 0; ox < os.width; ++ox) {
      double* acc = out.values.data() + out.index(oy, ox, 0);
      std::copy(l.bias.begin(), l.bias.end(), acc);
      for (std::size_t ky = 0; ky < l.kernel_h; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * l.stride + ky) -
                        static_cast<std::ptrdiff_t>(l.pad);
        if (iy < 0 || iy >= H)
          continue;
        for (std::size_t kx = 0; kx < l.kernel_w; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * l.stride + kx) -
                          static_cast<std::ptrdiff_t>(l.pad);
          if (ix < 0 || ix >= W)
            continue;
          const double* src = in.values.data() + in.index(static_cast<std::size_t>(iy),
                                                          static_cast<std::size_t>(ix), 0);
          const double* w = l.weights.data() + (ky * l.kernel_w + kx) * ci * co;
          for (std::size_t c = 0; c < ci; ++c) {
            const double v = src[c];
            const double* wrow = w + c * co;
            for (std::size_t o = 0; o < co; ++o)
              acc[o] += v * wrow[o];
          }
        }
      }
    }
  return out;
}

inline Tensor forward(const Relu&, const Tensor& in) {
  Tensor out = in;
  for (double& v : out.values)
    v = v > 0.0 ? v : 0.0;
  return out;
}

inline Tensor forward(const MaxPool& l, const Tensor& in) {
  const Shape os = output_shape(l, in.shape);
  Tensor out(os);
  for (std::size_t oy = 0; oy < os.height; ++oy)
    for (std::size_t ox = 0; ox < os.width; ++ox)
      for (std::size_t c = 0; c < os.channels; ++c) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t dy = 0; dy < l.size; ++dy)
          for (std::size_t dx = 0; dx < l.size; ++dx)
            best = std::max(best, in.at(oy * l.stride + dy, ox * l.stride + dx, c));
        out.at(oy, ox, c) = best;
      }
  return out;
}

inline Tensor forward(const Flatten& l, const Tensor& in) {
  return Tensor(output_shape(l, in.shape), in.values);
}

inline Tensor forward(const FullyConnected& l, const Tensor& in) {
  const Shape os = output_shape(l, in.shape);
  Tensor out(os);
  double* acc = out.values.data();
  std::copy(l.bias.begin(), l.bias.end(), acc);
  for (std::size_t i = 0; i < l.in_dim; ++i) {
    const double v = in.values[i];
    const double* wrow = l.weights.data() + i * l.out_dim;
    for (std::size_t o = 0; o < l.out_dim; ++o)
      acc[o] += v * wrow[o];
  }
  return out;
}

inline Tensor forward(const Softmax&, const Tensor& in) {
  Tensor out = in;
  const std::size_t ch = in.shape.channels;
  for (std::size_t base = 0; base < out.values.size(); base += ch) {
    double* z = out.values.data() + base;
    const double m = *std::max_element(z, z + ch);
    double sum = 0.0;
    for (std::size_t k = 0; k < ch; ++k) {
      z[k] = std::exp(z[k] - m);
      sum += z[k];
    }
    for (std::size_t k = 0; k < ch; ++k)
      z[k] /= sum;
  }
  return out;
}

inline Tensor forward(const Layer& layer, const Tensor& in) {
  return std::visit([&](const auto& l) { return forward(l, in); }, layer);
}

// ---------------------------------------------------------------------------
// Backward: given the layer input and dL/d(output), return dL/d(input) and
// accumulate parameter gradients into `grad`.

inline Tensor backward(const Conv& l, const Tensor& in, const Tensor& grad_out, ParamGrad& grad) {
  Tensor grad_in(in.shape);
  const std::size_t co = l.out_ch;
  const std::size_t ci = l.in_ch;
  const auto H = static_cast<std::ptrdiff_t>(in.shape.height);
  const auto W = static_cast<std::ptrdiff_t>(in.shape.width);
  for (std::size_t oy = 0; oy < grad_out.shape.height; ++oy)
    for (std::size_t ox = 0; ox < grad_out.shape.width; ++ox) {
      const double* g = grad_out.values.data() + grad_out.index(oy, ox, 0);
      for (std::size_t o = 0; o < co; ++o)
        grad.bias[o] += g[o];
      for (std::size_t ky = 0; ky < l.kernel_h; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * l.stride + ky) -
                        static_cast<std::ptrdiff_t>(l.pad);
        if (iy < 0 || iy >= H)
          continue;
        for (std::size_t kx = 0; kx < l.kernel_w; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * l.stride + kx) -
                          static_cast<std::ptrdiff_t>(l.pad);
          if (ix < 0 || ix >= W)
            continue;
          const std::size_t in_off =
              in.index(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), 0);
          const double* src = in.values.data() + in_off;
          double* dsrc = grad_in.values.data() + in_off;
          const std::size_t w_off = (ky * l.kernel_w + kx) * ci * co;
          const double* w = l.weights.data() + w_off;
          double* dw = grad.weights.data() + w_off;
          for (std::size_t c = 0; c < ci; ++c) {
            const double v = src[c];
            const double* wrow = w + c * co;
            double* dwrow = dw + c * co;
            double acc = 0.0;
            for (std::size_t o = 0; o < co; ++o) {
              dwrow[o] += v * g[o];
              acc += wrow[o] * g[o];
            }
            dsrc[c] += acc;
          }
        }
      }
    }
  return grad_in;
}

inline Tensor backward(const Relu&, const Tensor& in, const Tensor& grad_out, ParamGrad&) {
  Tensor grad_in = grad_out;
  for (std::size_t i = 0; i < grad_in.values.size(); ++i)
    if (!(in.values[i] > 0.0))
      grad_in.values[i] = 0.0;
  return grad_in;
}

inline Tensor backward(const MaxPool& l, const Tensor& in, const Tensor& grad_out, ParamGrad&) {
  Tensor grad_in(in.shape);
  for (std::size_t oy = 0; oy < grad_out.shape.height; ++oy)
    for (std::size_t ox = 0; ox < grad_out.shape.width; ++ox)
      for (std::size_t c = 0; c < grad_out.shape.channels; ++c) {
        std::size_t by = oy * l.stride;
        std::size_t bx = ox * l.stride;
        double best = in.at(by, bx, c);
        for (std::size_t dy = 0; dy < l.size; ++dy)
          for (std::size_t dx = 0; dx < l.size; ++dx) {
            const double v = in.at(oy * l.stride + dy, ox * l.stride + dx, c);
            if (v > best) {
              best = v;
              by = oy * l.stride + dy;
              bx = ox * l.stride + dx;
            }
          }
        grad_in.at(by, bx, c) += grad_out.at(oy, ox, c);
      }
  return grad_in;
}

inline Tensor backward(const Flatten&, const Tensor& in, const Tensor& grad_out, ParamGrad&) {
  return Tensor(in.shape, grad_out.values);
}

inline Tensor backward(const FullyConnected& l, const Tensor& in, const Tensor& grad_out,
                       ParamGrad& grad) {
  Tensor grad_in(in.shape);
  const double* g = grad_out.values.data();
  for (std::size_t o = 0; o < l.out_dim; ++o)
    grad.bias[o] += g[o];
  for (std::size_t i = 0; i < l.in_dim; ++i) {
    const double v = in.values[i];
    const double* wrow = l.weights.data() + i * l.out_dim;
    double* dwrow = grad.weights.data() + i * l.out_dim;
    double acc = 0.0;
    for (std::size_t o = 0; o < l.out_dim; ++o) {
      dwrow[o] += v * g[o];
      acc += wrow[o] * g[o];
    }
    grad_in.values[i] = acc;
  }
  return grad_in;
}

inline Tensor backward(const Softmax& l, const Tensor& in, const Tensor& grad_out, ParamGrad&) {
  const Tensor p = forward(l, in);
  Tensor grad_in(in.shape);
  const std::size_t ch = in.shape.channels;
  for (std::size_t base = 0; base < p.values.size(); base += ch) {
    double dot = 0.0;
    for (std::size_t k = 0; k < ch; ++k)
      dot += grad_out.values[base + k] * p.values[base + k];
    for (std::size_t k = 0; k < ch; ++k)
      grad_in.values[base + k] = p.values[base + k] * (grad_out.values[base + k] - dot);
  }
  return grad_in;
}

inline Tensor backward(const Layer& layer, const Tensor& in, const Tensor& grad_out,
                       ParamGrad& grad) {
  return std::visit([&](const auto& l) { return backward(l, in, grad_out, grad); }, layer);
}

inline ParamGrad zero_grad(const Layer& layer) {
  if (const auto* c = std::get_if<Conv>(&layer))
    return {std::vector<double>(c->weights.size(), 0.0), std::vector<double>(c->bias.size(), 0.0)};
  if (const auto* f = std::get_if<FullyConnected>(&layer))
    return {std::vector<double>(f->weights.size(), 0.0), std::vector<double>(f->bias.size(), 0.0)};
  return {};
}

inline bool has_parameters(const Layer& layer) {
  return std::holds_alternative<Conv>(layer) || std::holds_alternative<FullyConnected>(layer);
}

} // namespace dmap::nn
