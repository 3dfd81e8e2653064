#pragma once

#include <string>
#include <vector>

#include "ducknet/blocks.hpp"
#include "ducknet/graph.hpp"

namespace ducknet {

// Full encoder-decoder description. Level i of the channel schedule uses
// filters * 2^i channels; the spatial size halves per level. block_kind is
// the ablation switch: swapping Duck for SimpleDouble changes no shape
// anywhere in the graph.
struct NetSpec {
  int filters = 17;
  int depth = 5;
  int in_channels = 3;
  int input_h = 352, input_w = 352;
  BlockKind block_kind = BlockKind::Duck;
  int separated_n = 13;

  int level_channels(int i) const { return filters << i; }

  void validate() const {
    require(filters >= 1, "netspec: filters must be >= 1");
    require(depth >= 1, "netspec: depth must be >= 1");
    require(in_channels >= 1, "netspec: in_channels must be >= 1");
    require(block_kind == BlockKind::Duck ||
                block_kind == BlockKind::SimpleDouble,
            "netspec: block kind must be duck or simple_double");
    const int div = 1 << depth;
    if (input_h % div || input_w % div)
      throw std::invalid_argument(
          "netspec: input size " + std::to_string(input_h) + "x" +
          std::to_string(input_w) + " not divisible by 2^depth = " +
          std::to_string(div));
  }
};

template <typename T>
struct Network {
  NetSpec spec;
  Graph<T> graph;
  std::vector<int> skip_slots;  // t_i, i = 0..depth-1
  int bottleneck_slot = -1;

  Tensor4<T> forward(const Tensor4<T>& images, Mode mode) {
    if (images.shape.c != spec.in_channels)
      throw std::invalid_argument("forward: expected " +
                                  std::to_string(spec.in_channels) +
                                  " input channels, got " +
                                  std::to_string(images.shape.c));
    const int div = 1 << spec.depth;
    if (images.shape.h % div || images.shape.w % div)
      throw std::invalid_argument("forward: spatial dims " +
                                  std::to_string(images.shape.h) + "x" +
                                  std::to_string(images.shape.w) +
                                  " not divisible by " + std::to_string(div));
    return graph.forward(images, mode);
  }

  std::size_t parameter_count() const { return graph.trainable_count(); }

  Shape4 bottleneck_shape() const {
    const auto shapes = graph.infer_shapes(
        Shape4{1, spec.in_channels, spec.input_h, spec.input_w});
    return shapes[std::size_t(bottleneck_slot)];
  }
};

namespace detail {

inline BlockSpec stage_block(const NetSpec& spec, int filters) {
  return spec.block_kind == BlockKind::Duck
             ? build_duck(filters, spec.separated_n)
             : build_simple_double(filters);
}

}  // namespace detail

// Assembles the encoder-decoder graph:
//  - encoder: t0 = Block(input, F); per level a 2x2/stride-2 downscaling
//    conv on the processed path plus an unprocessed secondary downscaling
//    chain from the input, fused by addition, then a Block (except at the
//    bottom);
//  - bottleneck: two Residual blocks at 2^depth*F, two at 2^(depth-1)*F;
//  - decoder: nearest 2x upsampling fused with the encoder skip by addition,
//    then a Block with halving filter counts (level 0 stays at F);
//  - head: 1x1 conv to one channel, sigmoid.
template <typename T>
Network<T> build_network(const NetSpec& spec, std::uint64_t seed) {
  spec.validate();
  Network<T> net;
  net.spec = spec;
  Graph<T>& g = net.graph;
  Rng rng(seed);
  const int F = spec.filters;

  int t = append_block(g, detail::stage_block(spec, F), Graph<T>::kInputSlot,
                       spec.in_channels, "enc0.b", rng);
  net.skip_slots.push_back(t);

  int p = Graph<T>::kInputSlot;
  int p_ch = spec.in_channels;
  for (int i = 1; i <= spec.depth; ++i) {
    const int ch = spec.level_channels(i);
    const int t_ch = spec.level_channels(i - 1);
    const std::string lvl = std::to_string(i);
    const int main_down = g.conv(t, "down" + lvl + ".main", t_ch, ch, 2, 2, 1,
                                 1, 2, 2, Padding::None, rng);
    p = g.conv(p, "down" + lvl + ".sec", p_ch, ch, 2, 2, 1, 1, 2, 2,
               Padding::None, rng);
    p_ch = ch;
    const int s = g.add(main_down, p);
    if (i < spec.depth) {
      t = append_block(g, detail::stage_block(spec, ch), s, ch,
                       "enc" + lvl + ".b", rng);
      net.skip_slots.push_back(t);
    } else {
      const int hi_ch = ch;
      const int lo_ch = spec.level_channels(spec.depth - 1);
      int b = append_block(g, build_residual(hi_ch, 2), s, hi_ch, "bneck.hi",
                           rng);
      b = append_block(g, build_residual(lo_ch, 2), b, hi_ch, "bneck.lo", rng);
      net.bottleneck_slot = b;
      g.label("bottleneck", b);
      t = b;
    }
  }

  for (int i = spec.depth - 1; i >= 0; --i) {
    const int up = g.upsample2x(t);
    const int fused = g.add(up, net.skip_slots[std::size_t(i)]);
    const int in_ch = spec.level_channels(i);
    const int out_ch = spec.level_channels(std::max(i - 1, 0));
    t = append_block(g, detail::stage_block(spec, out_ch), fused, in_ch,
                     "dec" + std::to_string(i) + ".b", rng);
  }

  int head = g.conv(t, "head", F, 1, 1, 1, 1, 1, 1, 1, Padding::Same, rng);
  head = g.sigmoid(head);
  g.set_output(head);

  // build-time shape audit (also verifies every addition fusion)
  net.graph.infer_shapes(Shape4{1, spec.in_channels, spec.input_h, spec.input_w});
  return net;
}

}  // namespace ducknet
