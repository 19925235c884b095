// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "dsnn/config.hpp"
#include "dsnn/network.hpp"

namespace dsnn {

enum class Buffering { Unshared, Shared };

std::string to_string(Buffering b);
Buffering buffering_from_string(const std::string& s);

/// Inputs of the analytic buffer-size model:
///   S_buffers = sum over layers of (H*s + C*d_max)
/// with the effective buffering coefficient C depending on mechanism and
/// strategy. rho_n is the assumed neuron-level rate (conservative 1),
/// rho_p the empirical population rate (0.2).
struct BufferModelInputs {
  int layers = 3;
  int hidden = 512;
  int d_max = 15;
  Mechanism mechanism = Mechanism::Axonal;
  Buffering strategy = Buffering::Unshared;
  int state_bits = 16;      // s: neuron state
  int value_bits = 16;      // v: accumulated weight value
  int address_bits = 0;     // m; 0 -> ceil(log2(source count))
  double rho_n = 1.0;
  double rho_p = 0.2;
  int input_channels = 0;   // 0 -> uniform topology (first layer uses H)
};

/// Total buffer bits per the analytic model, rounded to the nearest bit.
long long buffer_bits(const BufferModelInputs& in);

/// ceil(log2(h)), minimum 1.
int default_address_bits(int h);

/// Spikes across all hidden layers and time (readout is non-spiking).
long long count_spikes(const ForwardRecord& record);

/// Each spike costs its fanout in unmasked outgoing weights: into the next
/// layer, or into the readout for the last hidden layer. Delay handling
/// contributes nothing by definition.
long long count_sops(const ForwardRecord& record, const Model& model);

struct MetricsReport {
  long long total_spikes = 0;
  long long sops = 0;
  long long buffer_bits = 0;
  double accuracy = 0.0;

  std::string to_csv() const;   // header + one row
  std::string to_json() const;
};

MetricsReport make_report(const ForwardRecord& record, const Model& model,
                          const BufferModelInputs& buffer_inputs, double accuracy);

}  // namespace dsnn
