// SPDX-License-Identifier: Apache-2.0
#include "dsnn/metrics.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "dsnn/common.hpp"

namespace dsnn {

std::string to_string(Buffering b) {
  return b == Buffering::Unshared ? "unshared" : "shared";
}

Buffering buffering_from_string(const std::string& s) {
  if (s == "unshared") return Buffering::Unshared;
  if (s == "shared") return Buffering::Shared;
  throw ConfigError("unknown buffering strategy '" + s + "' (expected unshared|shared)");
}

int default_address_bits(int h) {
  DSNN_REQUIRE(h >= 1, "address bits: layer size must be >= 1");
  int bits = 1;
  while ((1ll << bits) < h) ++bits;
  return bits;
}

long long buffer_bits(const BufferModelInputs& in) {
  DSNN_REQUIRE(in.layers >= 1 && in.hidden >= 1 && in.d_max >= 1,
               "buffer_bits: counts must be >= 1");
  DSNN_REQUIRE(in.state_bits >= 1 && in.value_bits >= 1, "buffer_bits: bit widths must be >= 1");
  DSNN_REQUIRE(in.rho_n > 0.0 && in.rho_p >= 0.0 && in.rho_p <= 1.0,
               "buffer_bits: rates out of range");

  const double h = in.hidden;
  double total = 0.0;
  for (int l = 0; l < in.layers; ++l) {
    // presynaptic side of layer l; the first layer sees the input channels
    const double h_pre = (l == 0 && in.input_channels > 0) ? in.input_channels : h;
    const int m = in.address_bits > 0
                      ? in.address_bits
                      : default_address_bits(static_cast<int>(
                            in.mechanism == Mechanism::Dendritic ? h : h_pre));
    double c = 0.0;
    switch (in.mechanism) {
      case Mechanism::Synaptic:
        c = (in.strategy == Buffering::Unshared) ? h_pre * h * in.rho_n
                                                 : m * h_pre * h * in.rho_p;
        break;
      case Mechanism::Axonal:
        c = (in.strategy == Buffering::Unshared) ? h_pre * in.rho_n : m * h_pre * in.rho_p;
        break;
      case Mechanism::Dendritic:
        c = (in.strategy == Buffering::Unshared) ? in.value_bits * h * in.rho_n
                                                 : (in.value_bits + m) * h * in.rho_p;
        break;
      case Mechanism::None:
        c = 0.0;
        break;
    }
    total += h * in.state_bits + c * in.d_max;
  }
  return std::llround(total);
}

long long count_spikes(const ForwardRecord& record) {
  long long n = 0;
  for (const auto& s : record.spikes) n += std::llround(s.sum());
  return n;
}

long long count_sops(const ForwardRecord& record, const Model& model) {
  DSNN_REQUIRE(record.spikes.size() == model.layers.size(),
               "count_sops: record does not match model depth");
  long long sops = 0;
  for (std::size_t l = 0; l < record.spikes.size(); ++l) {
    // fanout of each neuron of layer l into the next stage
    Eigen::VectorXd fanout;
    if (l + 1 < model.layers.size()) {
      fanout = model.layers[l + 1].weight_mask.colwise().sum();
    } else {
      fanout = Eigen::VectorXd::Constant(model.layers[l].W.rows(),
                                         static_cast<double>(model.readout.W.rows()));
    }
    const Eigen::VectorXd per_neuron = record.spikes[l].rowwise().sum();
    sops += std::llround(per_neuron.dot(fanout));
  }
  return sops;
}

std::string MetricsReport::to_csv() const {
  std::string out = "total_spikes,sops,buffer_bits,accuracy\n";
  out += std::to_string(total_spikes) + "," + std::to_string(sops) + "," +
         std::to_string(buffer_bits) + "," + format_double(accuracy) + "\n";
  return out;
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["total_spikes"] = total_spikes;
  j["sops"] = sops;
  j["buffer_bits"] = buffer_bits;
  j["accuracy"] = accuracy;
  return j.dump(2) + "\n";
}

MetricsReport make_report(const ForwardRecord& record, const Model& model,
                          const BufferModelInputs& buffer_inputs, double accuracy) {
  MetricsReport r;
  r.total_spikes = count_spikes(record);
  r.sops = count_sops(record, model);
  r.buffer_bits = buffer_bits(buffer_inputs);
  r.accuracy = accuracy;
  return r;
}

}  // namespace dsnn
