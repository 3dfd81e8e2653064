#pragma once

#include <string>
#include <vector>

#include "ducknet/graph.hpp"

namespace ducknet {

enum class BlockKind { Residual, Midscope, Widescope, Separated, Duck, SimpleDouble };

inline const char* block_kind_name(BlockKind k) {
  switch (k) {
    case BlockKind::Residual: return "residual";
    case BlockKind::Midscope: return "midscope";
    case BlockKind::Widescope: return "widescope";
    case BlockKind::Separated: return "separated";
    case BlockKind::Duck: return "duck";
    case BlockKind::SimpleDouble: return "simple_double";
  }
  return "?";
}

struct LayerDesc {
  int kh = 3, kw = 3;
  int dh = 1, dw = 1;  // stride is always 1 inside a block
};

// Declarative block description: `layers` is the main convolution path of a
// single repeat; `repeat` chains whole blocks output-to-input (Residual
// stacks). The Duck kind expands to six parallel branches at execution time.
struct BlockSpec {
  BlockKind kind = BlockKind::SimpleDouble;
  int filters = 1;
  std::vector<LayerDesc> layers;
  int repeat = 1;
  int separated_n = 13;
};

inline BlockSpec build_residual(int filters, int repeat = 1) {
  require(filters >= 1, "build_residual: filters must be >= 1");
  require(repeat >= 1, "build_residual: repeat must be >= 1");
  return {BlockKind::Residual, filters, {{3, 3, 1, 1}, {3, 3, 1, 1}}, repeat};
}

inline BlockSpec build_midscope(int filters) {
  require(filters >= 1, "build_midscope: filters must be >= 1");
  return {BlockKind::Midscope, filters, {{3, 3, 1, 1}, {3, 3, 2, 2}}, 1};
}

inline BlockSpec build_widescope(int filters) {
  require(filters >= 1, "build_widescope: filters must be >= 1");
  return {BlockKind::Widescope, filters,
          {{3, 3, 1, 1}, {3, 3, 2, 2}, {3, 3, 4, 4}}, 1};
}

inline BlockSpec build_separated(int filters, int n = 13) {
  require(filters >= 1, "build_separated: filters must be >= 1");
  if (n < 3 || n % 2 == 0)
    throw std::invalid_argument(
        "build_separated: N must be odd and >= 3 (symmetric Same padding), "
        "got " + std::to_string(n));
  BlockSpec s{BlockKind::Separated, filters, {{1, n, 1, 1}, {n, 1, 1, 1}}, 1};
  s.separated_n = n;
  return s;
}

inline BlockSpec build_simple_double(int filters) {
  require(filters >= 1, "build_simple_double: filters must be >= 1");
  return {BlockKind::SimpleDouble, filters, {{3, 3, 1, 1}, {3, 3, 1, 1}}, 1};
}

inline BlockSpec build_duck(int filters, int separated_n = 13) {
  require(filters >= 1, "build_duck: filters must be >= 1");
  BlockSpec s{BlockKind::Duck, filters, {}, 1};
  s.separated_n = separated_n;
  return s;
}

// The six parallel Duck branches, in their fixed execution/summation order.
inline std::vector<BlockSpec> duck_branches(const BlockSpec& duck) {
  return {build_widescope(duck.filters),
          build_midscope(duck.filters),
          build_residual(duck.filters, 1),
          build_residual(duck.filters, 2),
          build_residual(duck.filters, 3),
          build_separated(duck.filters, duck.separated_n)};
}

// Receptive field per axis for a stride-1 spec:
//   RF = 1 + sum over sequential layers of (k - 1) * d,
// chained repeats add their layer sums; parallel branches take the maximum.
inline std::pair<int, int> receptive_field(const BlockSpec& spec) {
  if (spec.kind == BlockKind::Duck) {
    int rh = 1, rw = 1;
    for (const BlockSpec& b : duck_branches(spec)) {
      auto [h, w] = receptive_field(b);
      rh = std::max(rh, h);
      rw = std::max(rw, w);
    }
    return {rh, rw};
  }
  int sh = 0, sw = 0;
  for (const LayerDesc& l : spec.layers) {
    sh += (l.kh - 1) * l.dh;
    sw += (l.kw - 1) * l.dw;
  }
  return {1 + spec.repeat * sh, 1 + spec.repeat * sw};
}

// One line per layer; debugging aid, not a stability contract.
inline std::string to_text(const BlockSpec& spec) {
  std::string out = std::string(block_kind_name(spec.kind)) + " F=" +
                    std::to_string(spec.filters) + " repeat=" +
                    std::to_string(spec.repeat) + "\n";
  if (spec.kind == BlockKind::Duck) {
    for (const BlockSpec& b : duck_branches(spec)) out += to_text(b);
    return out;
  }
  for (const LayerDesc& l : spec.layers)
    out += "  conv " + std::to_string(l.kh) + "x" + std::to_string(l.kw) +
           " d" + std::to_string(l.dh) + "," + std::to_string(l.dw) + "\n";
  return out;
}

// Kernel + bias scalar count of all convolutions in the block (batch norm
// parameters not included).
inline std::size_t conv_param_count(const BlockSpec& spec, int in_channels) {
  const std::size_t F = std::size_t(spec.filters);
  if (spec.kind == BlockKind::Duck) {
    std::size_t n = 0;
    for (const BlockSpec& b : duck_branches(spec))
      n += conv_param_count(b, in_channels);
    return n;
  }
  std::size_t n = 0;
  std::size_t cin = std::size_t(in_channels);
  for (int r = 0; r < spec.repeat; ++r) {
    for (const LayerDesc& l : spec.layers) {
      n += F * (cin * std::size_t(l.kh) * l.kw + 1);
      cin = F;
    }
    if (spec.kind == BlockKind::Residual) {
      // 1x1 shortcut from the repeat's input
      const std::size_t sc_in = r == 0 ? std::size_t(in_channels) : F;
      n += F * (sc_in + 1);
    }
  }
  return n;
}

namespace detail {

template <typename T>
int append_residual_repeat(Graph<T>& g, int in, int in_ch, int F,
                           const std::string& prefix, Rng& rng) {
  int main = g.conv(in, prefix + ".c0", in_ch, F, 3, 3, 1, 1, 1, 1,
                    Padding::Same, rng);
  main = g.relu(main);
  main = g.conv(main, prefix + ".c1", F, F, 3, 3, 1, 1, 1, 1, Padding::Same,
                rng);
  main = g.relu(main);
  const int shortcut =
      g.conv(in, prefix + ".sc", in_ch, F, 1, 1, 1, 1, 1, 1, Padding::Same, rng);
  const int sum = g.add(main, shortcut);
  return g.batchnorm(sum, prefix + ".bn", F);
}

template <typename T>
int append_conv_chain(Graph<T>& g, const BlockSpec& spec, int in, int in_ch,
                      const std::string& prefix, Rng& rng) {
  int cur = in, ch = in_ch;
  int li = 0;
  for (const LayerDesc& l : spec.layers) {
    cur = g.conv(cur, prefix + ".c" + std::to_string(li), ch, spec.filters,
                 l.kh, l.kw, l.dh, l.dw, 1, 1, Padding::Same, rng);
    cur = g.relu(cur);
    ch = spec.filters;
    ++li;
  }
  return g.batchnorm(cur, prefix + ".bn", spec.filters);
}

}  // namespace detail

// Materializes a block into the graph, returning its output slot. Layout per
// kind: each conv is followed by a relu; one batch norm closes each block
// (each repeat, for Residual); Duck normalizes its input, runs the six
// branches in parallel and sums them in a fixed order, then normalizes again.
template <typename T>
int append_block(Graph<T>& g, const BlockSpec& spec, int in, int in_channels,
                 const std::string& prefix, Rng& rng) {
  const int F = spec.filters;
  switch (spec.kind) {
    case BlockKind::Residual: {
      int cur = in, ch = in_channels;
      for (int r = 0; r < spec.repeat; ++r) {
        cur = detail::append_residual_repeat(
            g, cur, ch, F, prefix + "." + std::to_string(r), rng);
        ch = F;
      }
      return cur;
    }
    case BlockKind::Midscope:
    case BlockKind::Widescope:
    case BlockKind::Separated:
    case BlockKind::SimpleDouble:
      return detail::append_conv_chain(g, spec, in, in_channels, prefix, rng);
    case BlockKind::Duck: {
      const int normed = g.batchnorm(in, prefix + ".bn_in", in_channels);
      const auto branches = duck_branches(spec);
      const char* names[6] = {"ws", "ms", "r1", "r2", "r3", "sep"};
      int sum = -1;
      for (int b = 0; b < 6; ++b) {
        const int out = append_block(g, branches[std::size_t(b)], normed,
                                     in_channels, prefix + "." + names[b], rng);
        sum = b == 0 ? out : g.add(sum, out);
      }
      return g.batchnorm(sum, prefix + ".bn_out", F);
    }
  }
  throw std::logic_error("append_block: unknown kind");
}

// A single block materialized with its own parameter set; the standalone
// execution surface for one BlockSpec (networks assemble blocks directly
// via append_block).
template <typename T>
struct BlockRunner {
  Graph<T> graph;

  BlockRunner(const BlockSpec& spec, int in_channels, std::uint64_t seed) {
    Rng rng(seed);
    const int out = append_block(graph, spec, Graph<T>::kInputSlot,
                                 in_channels, "blk", rng);
    graph.set_output(out);
  }

  const Tensor4<T>& run(const Tensor4<T>& input, Mode mode) {
    return graph.forward(input, mode);
  }
};

}  // namespace ducknet
