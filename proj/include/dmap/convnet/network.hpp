#pragma once

#include <dmap/convnet/layers.hpp>
#include <dmap/raster.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace dmap::nn {

enum class NetworkMode { Patch, Dense };

/// Class probabilities for one window.
struct ProbPair {
  double nonbuilt = 0.5;
  double built = 0.5;
};

/// An ordered layer list plus the input patch geometry it was built for.
///
/// Patch mode: conv trunk, exactly one Flatten, then FullyConnected/ReLU only,
/// ending in Softmax. Dense mode: no Flatten and no FullyConnected, so the
/// network slides over inputs larger than the patch. Neither mode may place a
/// ReLU directly before the Softmax.
class Network {
public:
  Network() = default;

  Network(std::vector<Layer> layers, std::size_t input_size, std::size_t input_channels)
      : layers_(std::move(layers)), input_size_(input_size), input_channels_(input_channels) {
    validate();
  }

  NetworkMode mode() const { return mode_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t input_size() const { return input_size_; }
  std::size_t input_channels() const { return input_channels_; }
  Shape input_shape() const { return {input_size_, input_size_, input_channels_}; }
  std::size_t classes() const { return classes_; }

  /// Mutable access for optimisers; layer kinds and dimensions must not change.
  Layer& layer(std::size_t i) { return layers_.at(i); }

  /// Product of every conv and pooling stride.
  std::size_t output_stride() const {
    std::size_t s = 1;
    for (const Layer& l : layers_) {
      if (const auto* c = std::get_if<Conv>(&l))
        s *= c->stride;
      else if (const auto* p = std::get_if<MaxPool>(&l))
        s *= p->stride;
    }
    return s;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers_) {
      if (const auto* c = std::get_if<Conv>(&l))
        n += c->weights.size() + c->bias.size();
      else if (const auto* f = std::get_if<FullyConnected>(&l))
        n += f->weights.size() + f->bias.size();
    }
    return n;
  }

  /// True if any convolution zero-pads its input.
  bool has_padding() const {
    for (const Layer& l : layers_)
      if (const auto* c = std::get_if<Conv>(&l); c && c->pad > 0)
        return true;
    return false;
  }

  Tensor forward(const Tensor& input) const {
    Tensor x = input;
    for (const Layer& l : layers_)
      x = nn::forward(l, x);
    return x;
  }

  /// Activations before the first layer and after each layer (size layers+1).
  std::vector<Tensor> forward_trace(const Tensor& input) const {
    std::vector<Tensor> acts;
    acts.reserve(layers_.size() + 1);
    acts.push_back(input);
    for (const Layer& l : layers_)
      acts.push_back(nn::forward(l, acts.back()));
    return acts;
  }

  friend bool operator==(const Network&, const Network&) = default;

private:
  void validate() {
    if (layers_.empty())
      throw InvalidArgument("Network: no layers");
    if (input_size_ == 0 || input_channels_ == 0)
      throw InvalidArgument("Network: zero input size");
    if (!std::holds_alternative<Softmax>(layers_.back()))
      throw InvalidArgument("Network: last layer must be Softmax");

    std::size_t flatten_at = layers_.size();
    std::size_t flattens = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const Layer& l = layers_[i];
      if (std::holds_alternative<Flatten>(l)) {
        ++flattens;
        flatten_at = i;
      }
      if (std::holds_alternative<Softmax>(l)) {
        if (i + 1 != layers_.size())
          throw InvalidArgument("Network: Softmax must be the last layer");
        if (i > 0 && std::holds_alternative<Relu>(layers_[i - 1]))
          throw InvalidArgument("Network: ReLU directly before Softmax");
      }
      if (const auto* c = std::get_if<Conv>(&l)) {
        if (c->kernel_h == 0 || c->kernel_w == 0 || c->stride == 0 || c->in_ch == 0 ||
            c->out_ch == 0)
          throw InvalidArgument("Network: degenerate Conv layer");
        if (c->weights.size() != c->weight_count() || c->bias.size() != c->out_ch)
          throw InvalidArgument("Network: Conv weight count mismatch");
      }
      if (const auto* f = std::get_if<FullyConnected>(&l)) {
        if (f->weights.size() != f->weight_count() || f->bias.size() != f->out_dim)
          throw InvalidArgument("Network: FullyConnected weight count mismatch");
      }
      if (const auto* p = std::get_if<MaxPool>(&l); p && (p->size == 0 || p->stride == 0))
        throw InvalidArgument("Network: degenerate MaxPool layer");
    }

    if (flattens > 1)
      throw InvalidArgument("Network: more than one Flatten");
    if (flattens == 1) {
      mode_ = NetworkMode::Patch;
      for (std::size_t i = 0; i < layers_.size(); ++i) {
        const Layer& l = layers_[i];
        if (i < flatten_at && std::holds_alternative<FullyConnected>(l))
          throw InvalidArgument("Network: FullyConnected before Flatten");
        if (i > flatten_at && !(std::holds_alternative<FullyConnected>(l) ||
                                std::holds_alternative<Relu>(l) ||
                                std::holds_alternative<Softmax>(l)))
          throw InvalidArgument("Network: only FullyConnected/ReLU/Softmax may follow Flatten");
      }
    } else {
      mode_ = NetworkMode::Dense;
      for (const Layer& l : layers_)
        if (std::holds_alternative<FullyConnected>(l))
          throw InvalidArgument("Network: dense network contains FullyConnected");
    }

    Shape s = input_shape();
    for (const Layer& l : layers_)
      s = output_shape(l, s);
    if (s.height != 1 || s.width != 1 || s.channels < 2)
      throw InvalidArgument("Network: patch input must map to 1x1xK (K >= 2), got " +
                            to_string(s));
    classes_ = s.channels;
  }

  std::vector<Layer> layers_;
  std::size_t input_size_ = 0;
  std::size_t input_channels_ = 0;
  std::size_t classes_ = 0;
  NetworkMode mode_ = NetworkMode::Patch;
};

// ---------------------------------------------------------------------------
// Architecture descriptors
//
// Comma-separated tokens:
//   conv<k>x<out>[p<pad>][s<stride>]   k x k convolution followed by ReLU
//   pool<k>[s<stride>]                 max pooling (stride defaults to k)
//   fc<n>                              fully connected layer followed by ReLU
// A Flatten is inserted before the first fc, and a final fc<classes> plus
// Softmax (no ReLU) is appended.

inline constexpr std::string_view kToyArchitecture =
    "conv3x16p1,pool2,conv3x32p1,pool2,conv3x64p1,pool2,fc256,fc128";
inline constexpr std::string_view kCompactArchitecture = "pool4,conv3x8,pool2,fc32,fc16";

inline std::string_view resolve_architecture(std::string_view name) {
  if (name == "toy")
    return kToyArchitecture;
  if (name == "compact")
    return kCompactArchitecture;
  return name;
}

namespace detail {

inline std::size_t parse_count(std::string_view text, std::string_view token) {
  std::size_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty())
    throw InvalidArgument("architecture: bad number in token '" + std::string(token) + "'");
  return v;
}

/// Split "3x16p1s2" style suffixes into the leading number and keyed options.
struct TokenFields {
  std::size_t a = 0;
  std::size_t b = 0;
  std::size_t pad = 0;
  std::size_t stride = 0;
};

inline TokenFields parse_fields(std::string_view body, std::string_view token, bool two_numbers) {
  TokenFields f;
  auto take_number = [&](std::string_view& s) {
    std::size_t n = 0;
    while (n < s.size() && s[n] >= '0' && s[n] <= '9')
      ++n;
    const std::size_t v = parse_count(s.substr(0, n), token);
    s.remove_prefix(n);
    return v;
  };
  f.a = take_number(body);
  if (two_numbers) {
    if (body.empty() || body.front() != 'x')
      throw InvalidArgument("architecture: expected 'x' in token '" + std::string(token) + "'");
    body.remove_prefix(1);
    f.b = take_number(body);
  }
  while (!body.empty()) {
    const char key = body.front();
    body.remove_prefix(1);
    if (key == 'p')
      f.pad = take_number(body);
    else if (key == 's')
      f.stride = take_number(body);
    else
      throw InvalidArgument("architecture: unknown option in token '" + std::string(token) + "'");
  }
  return f;
}

inline void he_init(std::vector<double>& w, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (double& v : w)
    v = dist(rng);
}

} // namespace detail

/// Builds a Patch-mode classifier from a descriptor with He-initialised weights.
inline Network build_network(std::string_view descriptor, std::size_t input_size,
                             std::size_t input_channels, std::mt19937_64& rng,
                             std::size_t classes = 2) {
  descriptor = resolve_architecture(descriptor);
  std::vector<Layer> layers;
  Shape shape{input_size, input_size, input_channels};
  bool flattened = false;

  auto push = [&](Layer l) {
    shape = output_shape(l, shape);
    layers.push_back(std::move(l));
  };
  auto add_fc = [&](std::size_t out, bool relu) {
    if (!flattened) {
      push(Flatten{});
      flattened = true;
    }
    FullyConnected fc{shape.channels, out, std::vector<double>(shape.channels * out),
                      std::vector<double>(out, 0.0)};
    detail::he_init(fc.weights, fc.in_dim, rng);
    push(std::move(fc));
    if (relu)
      push(Relu{});
  };

  std::string_view rest = descriptor;
  while (!rest.empty()) {
    const std::size_t comma = rest.find(',');
    std::string_view token = rest.substr(0, comma);
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    while (!token.empty() && token.front() == ' ')
      token.remove_prefix(1);
    while (!token.empty() && token.back() == ' ')
      token.remove_suffix(1);
    if (token.empty())
      continue;

    if (token.starts_with("conv")) {
      if (flattened)
        throw InvalidArgument("architecture: conv after fc");
      const auto f = detail::parse_fields(token.substr(4), token, true);
      Conv c{f.a, f.a, shape.channels, f.b, f.stride == 0 ? 1 : f.stride, f.pad,
             std::vector<double>(f.a * f.a * shape.channels * f.b), std::vector<double>(f.b, 0.0)};
      detail::he_init(c.weights, f.a * f.a * shape.channels, rng);
      push(std::move(c));
      push(Relu{});
    } else if (token.starts_with("pool")) {
      if (flattened)
        throw InvalidArgument("architecture: pool after fc");
      const auto f = detail::parse_fields(token.substr(4), token, false);
      push(MaxPool{f.a, f.stride == 0 ? f.a : f.stride});
    } else if (token.starts_with("fc")) {
      add_fc(detail::parse_fields(token.substr(2), token, false).a, true);
    } else {
      throw InvalidArgument("architecture: unknown token '" + std::string(token) + "'");
    }
  }
  add_fc(classes, false);
  push(Softmax{});
  return Network(std::move(layers), input_size, input_channels);
}

// ---------------------------------------------------------------------------
// Inference

inline ProbPair forward_patch(const Network& net, const Tensor& patch) {
  if (net.mode() != NetworkMode::Patch)
    throw InvalidArgument("forward_patch: network is not in patch mode");
  if (patch.shape != net.input_shape())
    throw InvalidArgument("forward_patch: expected " + to_string(net.input_shape()) + ", got " +
                          to_string(patch.shape));
  const Tensor out = net.forward(patch);
  return {out.values[0], out.values[1]};
}

inline ProbPair forward_patch(const Network& net, const Raster& patch) {
  return forward_patch(net, to_tensor(patch));
}

/// Rewrites the fully connected head as convolutions: the first FC becomes a
/// conv whose kernel spans the pre-Flatten feature map, later FCs become 1x1
/// convs. Weights are reused verbatim.
inline Network convolutionalize(const Network& net) {
  if (net.mode() != NetworkMode::Patch)
    throw InvalidArgument("convolutionalize: network is not in patch mode");
  std::vector<Layer> out;
  Shape shape = net.input_shape();
  Shape head{};
  bool after_flatten = false;
  bool first_fc = true;
  for (const Layer& l : net.layers()) {
    if (std::holds_alternative<Flatten>(l)) {
      head = shape;
      after_flatten = true;
    } else if (const auto* fc = std::get_if<FullyConnected>(&l)) {
      Conv c;
      c.out_ch = fc->out_dim;
      if (first_fc) {
        c.kernel_h = head.height;
        c.kernel_w = head.width;
        c.in_ch = head.channels;
        first_fc = false;
      } else {
        c.kernel_h = c.kernel_w = 1;
        c.in_ch = fc->in_dim;
      }
      if (c.weight_count() != fc->weight_count())
        throw InvalidArgument("convolutionalize: FullyConnected does not match feature map");
      c.weights = fc->weights;
      c.bias = fc->bias;
      out.emplace_back(std::move(c));
    } else {
      if (after_flatten && !(std::holds_alternative<Relu>(l) || std::holds_alternative<Softmax>(l)))
        throw InvalidArgument("convolutionalize: non-canonical head");
      out.push_back(l);
    }
    shape = output_shape(l, shape);
  }
  return Network(std::move(out), net.input_size(), net.input_channels());
}

/// Number of windows along one axis for a given extent, window and stride.
inline std::size_t window_count(std::size_t extent, std::size_t window, std::size_t stride) {
  return (extent - window) / stride + 1;
}

namespace detail {

inline void check_area(const Network& net, const Raster& area, const char* who) {
  if (!area.centered())
    throw InvalidArgument(std::string(who) + ": area must be mean-subtracted");
  if (area.channels() != net.input_channels())
    throw InvalidArgument(std::string(who) + ": channel mismatch");
  if (area.width() < net.input_size() || area.height() < net.input_size())
    throw InvalidArgument(std::string(who) + ": area smaller than one patch");
}

inline double clamp_prob(double p) { return std::clamp(p, 0.0, 1.0); }

} // namespace detail

/// Brute-force per-window classification; the reference for dense_infer.
inline Raster sliding_infer(const Network& net, const Raster& area, std::size_t stride) {
  if (net.mode() != NetworkMode::Patch)
    throw InvalidArgument("sliding_infer: network is not in patch mode");
  if (stride == 0)
    throw InvalidArgument("sliding_infer: zero stride");
  detail::check_area(net, area, "sliding_infer");
  const std::size_t n = net.input_size();
  const std::size_t ow = window_count(area.width(), n, stride);
  const std::size_t oh = window_count(area.height(), n, stride);
  const Tensor full = to_tensor(area);
  std::vector<double> out(ow * oh);
  for (std::size_t r = 0; r < oh; ++r)
    for (std::size_t c = 0; c < ow; ++c)
      out[r * ow + c] =
          detail::clamp_prob(forward_patch(net, full.window(r * stride, c * stride, n, n)).built);
  return Raster(ow, oh, 1, std::move(out));
}

/// One p_built score per output-stride cell.
///
/// Without zero padding in the trunk, the whole area runs through the network
/// once and window (i,j) reads location (i,j) of the output. Zero padding
/// makes a window's border features depend on the window, so padded networks
/// evaluate the dense network window by window instead.
inline Raster dense_infer(const Network& net, const Raster& area) {
  if (net.mode() != NetworkMode::Dense)
    throw InvalidArgument("dense_infer: network is not in dense mode");
  detail::check_area(net, area, "dense_infer");
  const std::size_t n = net.input_size();
  const std::size_t stride = net.output_stride();
  const std::size_t ow = window_count(area.width(), n, stride);
  const std::size_t oh = window_count(area.height(), n, stride);
  const Tensor full = to_tensor(area);
  std::vector<double> out(ow * oh);

  if (!net.has_padding()) {
    const Tensor scores = net.forward(full);
    if (scores.shape.height < oh || scores.shape.width < ow)
      throw InvalidArgument("dense_infer: network output smaller than the window grid");
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t c = 0; c < ow; ++c)
        out[r * ow + c] = detail::clamp_prob(scores.at(r, c, 1));
  } else {
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t c = 0; c < ow; ++c) {
        const Tensor s = net.forward(full.window(r * stride, c * stride, n, n));
        out[r * ow + c] = detail::clamp_prob(s.values[1]);
      }
  }
  return Raster(ow, oh, 1, std::move(out));
}

} // namespace dmap::nn
