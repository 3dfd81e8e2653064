#pragma once

#include <bit>
#include <cstring>
#include <sstream>

#include "ducknet/io_util.hpp"
#include "ducknet/network.hpp"
#include "ducknet/optimizer.hpp"

namespace ducknet {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian; big-endian hosts are not supported");

constexpr const char* kCheckpointMagic = "DUCKNET-CKPT 1";

struct ManifestEntry {
  std::string name;
  Shape4 shape;
  std::uint64_t offset = 0;  // byte offset into the payload
};

// File layout: magic line, one "name shape offset" line per tensor, a blank
// line, then the raw little-endian float32 payload.
template <typename T>
std::vector<std::uint8_t> save_checkpoint_bytes(
    const Graph<T>& g, const RmspropState<T>* opt = nullptr) {
  std::string header = std::string(kCheckpointMagic) + "\n";
  std::uint64_t offset = 0;
  std::size_t total = 0;
  for (const auto& p : g.params()) {
    header += p.name + " " + p.tensor->shape.str() + " " +
              std::to_string(offset) + "\n";
    offset += std::uint64_t(p.tensor->data.size()) * 4;
    total += p.tensor->data.size();
  }
  if (opt) {
    header += "opt.sq_avg 1x1x1x" + std::to_string(opt->sq_avg.size()) + " " +
              std::to_string(offset) + "\n";
    offset += std::uint64_t(opt->sq_avg.size()) * 4;
    total += opt->sq_avg.size();
  }
  header += "\n";

  std::vector<std::uint8_t> bytes(header.size() + total * 4);
  std::memcpy(bytes.data(), header.data(), header.size());
  float* out = reinterpret_cast<float*>(bytes.data() + header.size());
  for (const auto& p : g.params())
    for (const T v : p.tensor->data) *out++ = float(v);
  if (opt)
    for (const T v : opt->sq_avg) *out++ = float(v);
  return bytes;
}

struct ParsedCheckpoint {
  std::vector<ManifestEntry> entries;
  const std::uint8_t* payload = nullptr;
  std::size_t payload_size = 0;
};

inline Shape4 parse_shape(const std::string& s) {
  Shape4 sh;
  if (std::sscanf(s.c_str(), "%dx%dx%dx%d", &sh.n, &sh.c, &sh.h, &sh.w) != 4)
    throw std::runtime_error("checkpoint: bad shape '" + s + "'");
  return sh;
}

inline ParsedCheckpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes) {
  ParsedCheckpoint pc;
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    std::size_t end = pos;
    while (end < bytes.size() && bytes[end] != '\n') ++end;
    if (end >= bytes.size())
      throw std::runtime_error("checkpoint: truncated header");
    std::string line(reinterpret_cast<const char*>(bytes.data() + pos),
                     end - pos);
    pos = end + 1;
    return line;
  };
  if (next_line() != kCheckpointMagic)
    throw std::runtime_error("checkpoint: bad magic line");
  for (;;) {
    const std::string line = next_line();
    if (line.empty()) break;
    std::istringstream ls(line);
    ManifestEntry e;
    std::string shape;
    if (!(ls >> e.name >> shape >> e.offset))
      throw std::runtime_error("checkpoint: bad manifest line '" + line + "'");
    e.shape = parse_shape(shape);
    pc.entries.push_back(std::move(e));
  }
  pc.payload = bytes.data() + pos;
  pc.payload_size = bytes.size() - pos;
  std::uint64_t expect = 0;
  for (const auto& e : pc.entries) expect += std::uint64_t(e.shape.numel()) * 4;
  if (pc.payload_size != expect)
    throw std::runtime_error(
        "checkpoint: payload size " + std::to_string(pc.payload_size) +
        " != manifest total " + std::to_string(expect) + " (truncated?)");
  return pc;
}

// Copies payload values into the graph parameters. Manifest order, names and
// shapes must match the network exactly; the first differing entry is named.
template <typename T>
void load_checkpoint_into(Graph<T>& g, const ParsedCheckpoint& pc,
                          RmspropState<T>* opt = nullptr) {
  auto& params = g.params();
  const std::size_t n_param_entries =
      (!pc.entries.empty() && pc.entries.back().name == "opt.sq_avg")
          ? pc.entries.size() - 1
          : pc.entries.size();
  if (n_param_entries != params.size())
    throw std::runtime_error(
        "checkpoint: manifest has " + std::to_string(n_param_entries) +
        " tensors, network expects " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ManifestEntry& e = pc.entries[i];
    if (e.name != params[i].name)
      throw std::runtime_error("checkpoint: entry " + std::to_string(i) +
                               " is '" + e.name + "', network expects '" +
                               params[i].name + "'");
    if (!(e.shape == params[i].tensor->shape))
      throw std::runtime_error("checkpoint: shape mismatch at '" + e.name +
                               "': file " + e.shape.str() + ", network " +
                               params[i].tensor->shape.str());
    const float* src = reinterpret_cast<const float*>(pc.payload + e.offset);
    auto& dst = params[i].tensor->data;
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = T(src[k]);
  }
  if (opt) {
    const ManifestEntry& e = pc.entries.back();
    if (e.name != "opt.sq_avg")
      throw std::runtime_error("checkpoint: no optimizer state section");
    opt->sq_avg.assign(std::size_t(e.shape.numel()), T(0));
    const float* src = reinterpret_cast<const float*>(pc.payload + e.offset);
    for (std::size_t k = 0; k < opt->sq_avg.size(); ++k)
      opt->sq_avg[k] = T(src[k]);
  }
}

// Reconstructs the architecture from manifest names and shapes alone; input
// size is not a weight property (the network is fully convolutional), so
// callers choose it separately.
inline NetSpec infer_netspec(const std::vector<ManifestEntry>& entries) {
  NetSpec spec;
  spec.block_kind = BlockKind::SimpleDouble;
  spec.depth = 0;
  bool saw_head = false, saw_sec1 = false;
  for (const auto& e : entries) {
    if (e.name == "head.kernel") {
      spec.filters = e.shape.c;
      saw_head = true;
    } else if (e.name == "down1.sec.kernel") {
      spec.in_channels = e.shape.c;
      saw_sec1 = true;
    } else if (e.name.rfind("down", 0) == 0) {
      const std::size_t dot = e.name.find('.');
      if (dot != std::string::npos) {
        const int lvl = std::atoi(e.name.substr(4, dot - 4).c_str());
        spec.depth = std::max(spec.depth, lvl);
      }
    } else if (e.name == "enc0.b.sep.c0.kernel") {
      spec.block_kind = BlockKind::Duck;
      spec.separated_n = e.shape.w;
    }
  }
  if (!saw_head || !saw_sec1 || spec.depth < 1)
    throw std::runtime_error(
        "checkpoint: manifest does not describe a ducknet network");
  return spec;
}

template <typename T>
void save_checkpoint(const Network<T>& net, const std::filesystem::path& path,
                     const RmspropState<T>* opt = nullptr) {
  atomic_write_file(path, save_checkpoint_bytes(net.graph, opt));
}

// Rebuilds the network a checkpoint describes and loads its weights.
template <typename T>
Network<T> load_checkpoint(const std::filesystem::path& path, int input_h,
                           int input_w) {
  const auto bytes = read_file(path);
  const ParsedCheckpoint pc = parse_checkpoint(bytes);
  NetSpec spec = infer_netspec(pc.entries);
  spec.input_h = input_h;
  spec.input_w = input_w;
  Network<T> net = build_network<T>(spec, 0);
  load_checkpoint_into(net.graph, pc);
  return net;
}

}  // namespace ducknet
