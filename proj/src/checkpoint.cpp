#include "ft/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include "ft/binio.hpp"

namespace ft {

namespace {
constexpr char kMagic[4] = {'F', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

Checkpoint Checkpoint::from_network(const NetworkGraph& net,
                                    std::uint64_t iterations,
                                    std::uint64_t seed,
                                    std::uint64_t config_hash) {
  Checkpoint c;
  c.arch_id = net.arch_id();
  c.tie_streams = net.tie_streams();
  c.iterations = iterations;
  c.seed = seed;
  c.config_hash = config_hash;
  for (const auto& p : net.parameters()) c.params.emplace_back(p->name, p->value);
  return c;
}

NetworkGraph Checkpoint::to_network() const {
  BuildOptions opt;
  opt.tie_streams = tie_streams;
  NetworkGraph net = NetworkGraph::build(arch_from_string(arch_id), opt);
  auto& live = net.parameters();
  if (live.size() != params.size())
    throw std::runtime_error("checkpoint: parameter table size mismatch for " +
                             arch_id);
  for (std::size_t i = 0; i < live.size(); ++i) {
    const auto& [name, value] = params[i];
    if (live[i]->name != name)
      throw std::runtime_error("checkpoint: unexpected parameter '" + name +
                               "' (expected '" + live[i]->name + "')");
    if (live[i]->value.shape() != value.shape())
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
    live[i]->value = value;
  }
  return net;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os.write(kMagic, 4);
  binio::write_pod<std::uint32_t>(os, kVersion);
  binio::write_string(os, c.arch_id);
  binio::write_pod<std::uint8_t>(os, c.tie_streams ? 1 : 0);
  binio::write_pod<std::uint64_t>(os, c.iterations);
  binio::write_pod<std::uint64_t>(os, c.seed);
  binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(c.params.size()));
  for (const auto& [name, t] : c.params) {
    binio::write_string(os, name);
    binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    binio::write_f32(os, t.data(), t.size());
  }
  binio::write_pod<std::uint64_t>(os, c.config_hash);
  if (!os) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != std::string(kMagic, 4))
    throw std::runtime_error("not an FTCK checkpoint: " + path);
  auto version = binio::read_pod<std::uint32_t>(is, "version");
  if (version != kVersion)
    throw std::runtime_error("unsupported FTCK version " + std::to_string(version));
  Checkpoint c;
  c.arch_id = binio::read_string(is, "arch id");
  c.tie_streams = binio::read_pod<std::uint8_t>(is, "tie flag") != 0;
  c.iterations = binio::read_pod<std::uint64_t>(is, "iterations");
  c.seed = binio::read_pod<std::uint64_t>(is, "seed");
  auto n = binio::read_pod<std::uint32_t>(is, "tensor count");
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = binio::read_string(is, "tensor name");
    auto rank = binio::read_pod<std::uint32_t>(is, name + " rank");
    std::vector<int> shape(rank);
    for (auto& d : shape)
      d = static_cast<int>(binio::read_pod<std::uint32_t>(is, name + " dim"));
    Tensor t(shape);
    binio::read_f32(is, t.data(), t.size(), "tensor '" + name + "'");
    c.params.emplace_back(std::move(name), std::move(t));
  }
  c.config_hash = binio::read_pod<std::uint64_t>(is, "config hash");
  return c;
}

}  // namespace ft
