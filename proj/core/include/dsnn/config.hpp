// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dsnn/common.hpp"

namespace dsnn {

enum class Mechanism { Synaptic, Axonal, Dendritic, None };
enum class SchedulerKind { OneCycle, Cosine, None };
enum class SpikeMode { Hard, Soft };

std::string to_string(Mechanism m);
std::string to_string(SchedulerKind k);
Mechanism mechanism_from_string(const std::string& s);
SchedulerKind scheduler_from_string(const std::string& s);

/// Network topology and neuron constants. Defaults are the GSC/SSC values;
/// everything is overridable for desk-scale runs.
struct ModelConfig {
  int layers = 3;
  int hidden = 512;
  int input_channels = 140;
  int classes = 35;
  double beta = 0.33;
  double threshold = 1.0;
  int d_max = 15;
  double surrogate_slope = 5.0;
  Mechanism delay_mechanism = Mechanism::Axonal;
  double weight_sparsity = 0.0;  // kappa
  double delay_sparsity = 0.0;   // eta
  double dropout = 0.25;
  std::uint64_t seed = 42;
  // unset -> d_max / 2
  std::optional<double> sigma_init;
  // unset -> beta (the readout integrator reuses the hidden decay)
  std::optional<double> readout_beta;

  double sigma_start() const { return sigma_init ? *sigma_init : d_max / 2.0; }
  double readout_decay() const { return readout_beta ? *readout_beta : beta; }
};

struct TrainConfig {
  int epochs = 100;
  int batch_size = 512;
  double lr_weights = 1e-3;
  double lr_delays = 0.1;
  SchedulerKind weight_scheduler = SchedulerKind::OneCycle;
  SchedulerKind delay_scheduler = SchedulerKind::Cosine;
  double sigma_anneal_fraction = 0.25;
  // firing-rate regularization; r = 0 disables it
  double reg_r = 0.0;
  double reg_alpha_min = 0.001;
  double reg_alpha_max = 0.2;
  // one-cycle shape
  double one_cycle_warmup_fraction = 0.3;
  double one_cycle_final_div = 100.0;
  double bn_momentum = 0.1;
};

/// Returns every violated invariant as a human-readable message; an empty
/// list means the configuration is valid.
std::vector<std::string> validate_config(const ModelConfig& cfg, const TrainConfig& tcfg);

/// Canonical text form (one `key = value` per line, fixed key order).
/// serialize(parse(serialize(x))) == serialize(x) byte for byte.
std::string serialize_config(const ModelConfig& cfg, const TrainConfig& tcfg);

/// Parses the key-value document. Unknown keys and malformed lines raise
/// ConfigError (catches typos in sweep scripts).
void parse_config(const std::string& text, ModelConfig& cfg, TrainConfig& tcfg);

void load_config_file(const std::string& path, ModelConfig& cfg, TrainConfig& tcfg);
void save_config_file(const std::string& path, const ModelConfig& cfg, const TrainConfig& tcfg);

/// Shortest decimal form of x that parses back to exactly x.
std::string format_double(double x);

}  // namespace dsnn
