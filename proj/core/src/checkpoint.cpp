// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container: little-endian, versioned.
//   magic "DSNNCKP\0" | u32 version | u64 config_len | config text |
//   u32 tensor_count | { u32 name_len | name | u64 rows | u64 cols |
//                        rows*cols doubles (column-major) }*
#include <cstring>
#include <fstream>
#include <map>

#include "dsnn/common.hpp"
#include "dsnn/network.hpp"

namespace dsnn {

namespace {

constexpr char kMagic[8] = {'D', 'S', 'N', 'N', 'C', 'K', 'P', '\0'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& o, std::uint32_t v) { o.write(reinterpret_cast<char*>(&v), 4); }
void write_u64(std::ostream& o, std::uint64_t v) { o.write(reinterpret_cast<char*>(&v), 8); }

std::uint32_t read_u32(std::istream& i) {
  std::uint32_t v = 0;
  i.read(reinterpret_cast<char*>(&v), 4);
  DSNN_REQUIRE(static_cast<bool>(i), "checkpoint: truncated file");
  return v;
}

std::uint64_t read_u64(std::istream& i) {
  std::uint64_t v = 0;
  i.read(reinterpret_cast<char*>(&v), 8);
  DSNN_REQUIRE(static_cast<bool>(i), "checkpoint: truncated file");
  return v;
}

void write_tensor(std::ostream& o, const std::string& name, const Eigen::MatrixXd& t) {
  write_u32(o, static_cast<std::uint32_t>(name.size()));
  o.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u64(o, static_cast<std::uint64_t>(t.rows()));
  write_u64(o, static_cast<std::uint64_t>(t.cols()));
  o.write(reinterpret_cast<const char*>(t.data()),
          static_cast<std::streamsize>(sizeof(double) * t.size()));
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model) {
  std::ofstream f(path, std::ios::binary);
  DSNN_REQUIRE(static_cast<bool>(f), "cannot write checkpoint: " + path);
  f.write(kMagic, 8);
  write_u32(f, kVersion);
  const std::string cfg_text = serialize_config(model.cfg, TrainConfig{});
  write_u64(f, cfg_text.size());
  f.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));

  std::vector<std::pair<std::string, Eigen::MatrixXd>> tensors;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& p = model.layers[l];
    const std::string base = "layer" + std::to_string(l) + ".";
    tensors.emplace_back(base + "W", p.W);
    tensors.emplace_back(base + "weight_mask", p.weight_mask);
    tensors.emplace_back(base + "bn_gamma", p.bn_gamma);
    tensors.emplace_back(base + "bn_beta", p.bn_beta);
    tensors.emplace_back(base + "bn_mean", p.bn_mean);
    tensors.emplace_back(base + "bn_var", p.bn_var);
    if (p.delay) {
      tensors.emplace_back(base + "delay_positions", p.delay->positions);
      tensors.emplace_back(base + "delay_mask", p.delay->mask);
      Eigen::MatrixXd s(1, 1);
      s(0, 0) = p.delay->sigma;
      tensors.emplace_back(base + "delay_sigma", s);
    }
  }
  tensors.emplace_back("readout.W", model.readout.W);
  tensors.emplace_back("readout.b", model.readout.b);

  write_u32(f, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) write_tensor(f, name, t);
  DSNN_REQUIRE(static_cast<bool>(f), "checkpoint write failed: " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  DSNN_REQUIRE(static_cast<bool>(f), "cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  DSNN_REQUIRE(static_cast<bool>(f) && std::memcmp(magic, kMagic, 8) == 0,
               "checkpoint: bad magic (not a checkpoint file): " + path);
  const std::uint32_t version = read_u32(f);
  DSNN_REQUIRE(version == kVersion,
               "checkpoint: unsupported version " + std::to_string(version));
  const std::uint64_t cfg_len = read_u64(f);
  DSNN_REQUIRE(cfg_len < (1ull << 20), "checkpoint: implausible config length");
  std::string cfg_text(cfg_len, '\0');
  f.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len));
  DSNN_REQUIRE(static_cast<bool>(f), "checkpoint: truncated config");

  ModelConfig cfg;
  TrainConfig dummy;
  parse_config(cfg_text, cfg, dummy);

  std::map<std::string, Eigen::MatrixXd> tensors;
  const std::uint32_t count = read_u32(f);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(f);
    DSNN_REQUIRE(name_len < 256, "checkpoint: implausible tensor name length");
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const std::uint64_t rows = read_u64(f);
    const std::uint64_t cols = read_u64(f);
    DSNN_REQUIRE(rows * cols < (1ull << 32), "checkpoint: implausible tensor size");
    Eigen::MatrixXd t(rows, cols);
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(sizeof(double) * rows * cols));
    DSNN_REQUIRE(static_cast<bool>(f), "checkpoint: truncated tensor '" + name + "'");
    tensors.emplace(std::move(name), std::move(t));
  }

  // rebuild the structure from the config, then overwrite every tensor
  Rng rng(cfg.seed);
  Model model = init_parameters(cfg, rng);
  auto take = [&](const std::string& name, auto& dst) {
    auto it = tensors.find(name);
    DSNN_REQUIRE(it != tensors.end(), "checkpoint: missing tensor '" + name + "'");
    DSNN_REQUIRE(it->second.rows() == dst.rows() && it->second.cols() == dst.cols(),
                 "checkpoint: shape mismatch for tensor '" + name + "'");
    dst = it->second;
  };
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& p = model.layers[l];
    const std::string base = "layer" + std::to_string(l) + ".";
    take(base + "W", p.W);
    take(base + "weight_mask", p.weight_mask);
    take(base + "bn_gamma", p.bn_gamma);
    take(base + "bn_beta", p.bn_beta);
    take(base + "bn_mean", p.bn_mean);
    take(base + "bn_var", p.bn_var);
    if (p.delay) {
      take(base + "delay_positions", p.delay->positions);
      take(base + "delay_mask", p.delay->mask);
      auto it = tensors.find(base + "delay_sigma");
      DSNN_REQUIRE(it != tensors.end(), "checkpoint: missing tensor 'delay_sigma'");
      p.delay->sigma = it->second(0, 0);
    }
  }
  take("readout.W", model.readout.W);
  take("readout.b", model.readout.b);
  return model;
}

}  // namespace dsnn
