#pragma once

// DMNET1 model container. All integers little-endian u32, all weights
// little-endian IEEE-754 binary64.
//
//   "DMNET1"                      6 bytes
//   layer_count                   u32
//   input_size, input_channels    u32, u32
//   per layer:
//     kind                        u32  (0 Conv, 1 ReLU, 2 MaxPool, 3 Flatten,
//                                       4 FullyConnected, 5 Softmax)
//     Conv:           kernel_h, kernel_w, in_ch, out_ch, stride, pad (u32 each),
//                     weights[kernel_h*kernel_w*in_ch*out_ch], bias[out_ch]
//     MaxPool:        size, stride (u32 each)
//     FullyConnected: in_dim, out_dim (u32 each), weights[in_dim*out_dim], bias[out_dim]
//     others:         no payload

#include <dmap/convnet/network.hpp>
#include <dmap/io/binary.hpp>

#include <string>
#include <string_view>

namespace dmap::nn {

inline constexpr std::string_view kModelMagic = "DMNET1";

enum class LayerTag : std::uint32_t {
  Conv = 0,
  Relu = 1,
  MaxPool = 2,
  Flatten = 3,
  FullyConnected = 4,
  Softmax = 5
};

inline std::string serialize(const Network& net) {
  io::ByteWriter w;
  w.bytes(kModelMagic);
  w.u32(net.layers().size());
  w.u32(net.input_size());
  w.u32(net.input_channels());
  for (const Layer& layer : net.layers()) {
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Conv>) {
            w.u32(static_cast<std::uint32_t>(LayerTag::Conv));
            for (std::size_t v : {l.kernel_h, l.kernel_w, l.in_ch, l.out_ch, l.stride, l.pad})
              w.u32(v);
            w.f64s(l.weights);
            w.f64s(l.bias);
          } else if constexpr (std::is_same_v<T, Relu>) {
            w.u32(static_cast<std::uint32_t>(LayerTag::Relu));
          } else if constexpr (std::is_same_v<T, MaxPool>) {
            w.u32(static_cast<std::uint32_t>(LayerTag::MaxPool));
            w.u32(l.size);
            w.u32(l.stride);
          } else if constexpr (std::is_same_v<T, Flatten>) {
            w.u32(static_cast<std::uint32_t>(LayerTag::Flatten));
          } else if constexpr (std::is_same_v<T, FullyConnected>) {
            w.u32(static_cast<std::uint32_t>(LayerTag::FullyConnected));
            w.u32(l.in_dim);
            w.u32(l.out_dim);
            w.f64s(l.weights);
            w.f64s(l.bias);
          } else {
            w.u32(static_cast<std::uint32_t>(LayerTag::Softmax));
          }
        },
        layer);
  }
  return w.data();
}

inline Network deserialize(std::string_view bytes) {
  io::ByteReader r(bytes, "DMNET1");
  r.expect(kModelMagic);
  const std::uint32_t count = r.u32();
  const std::uint32_t input_size = r.u32();
  const std::uint32_t input_channels = r.u32();
  // Each weight costs 8 bytes, so this caps absurd dimension fields early.
  auto checked_product = [&](std::initializer_list<std::uint64_t> dims) {
    std::uint64_t n = 1;
    for (auto d : dims) {
      n *= d;
      if (n > bytes.size())
        throw ValidationError("DMNET1: layer dimensions exceed file size");
    }
    return static_cast<std::size_t>(n);
  };

  std::vector<Layer> layers;
  for (std::uint32_t i = 0; i < count; ++i) {
    switch (static_cast<LayerTag>(r.u32())) {
    case LayerTag::Conv: {
      Conv c;
      c.kernel_h = r.u32();
      c.kernel_w = r.u32();
      c.in_ch = r.u32();
      c.out_ch = r.u32();
      c.stride = r.u32();
      c.pad = r.u32();
      c.weights = r.f64s(checked_product({c.kernel_h, c.kernel_w, c.in_ch, c.out_ch}));
      c.bias = r.f64s(checked_product({c.out_ch}));
      layers.emplace_back(std::move(c));
      break;
    }
    case LayerTag::Relu: layers.emplace_back(Relu{}); break;
    case LayerTag::MaxPool: {
      MaxPool p;
      p.size = r.u32();
      p.stride = r.u32();
      layers.emplace_back(p);
      break;
    }
    case LayerTag::Flatten: layers.emplace_back(Flatten{}); break;
    case LayerTag::FullyConnected: {
      FullyConnected f;
      f.in_dim = r.u32();
      f.out_dim = r.u32();
      f.weights = r.f64s(checked_product({f.in_dim, f.out_dim}));
      f.bias = r.f64s(checked_product({f.out_dim}));
      layers.emplace_back(std::move(f));
      break;
    }
    case LayerTag::Softmax: layers.emplace_back(Softmax{}); break;
    default: throw ValidationError("DMNET1: unknown layer kind in layer " + std::to_string(i));
    }
  }
  r.expect_end();
  try {
    return Network(std::move(layers), input_size, input_channels);
  } catch (const InvalidArgument& e) {
    throw ValidationError(std::string("DMNET1: ") + e.what());
  }
}

inline void save_network(const Network& net, const std::string& path) {
  io::write_file(path, serialize(net));
}

inline Network load_network(const std::string& path) { return deserialize(io::read_file(path)); }

} // namespace dmap::nn
