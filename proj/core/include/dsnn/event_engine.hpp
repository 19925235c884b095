// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dsnn/metrics.hpp"
#include "dsnn/network.hpp"
#include "dsnn/spike_train.hpp"

namespace dsnn {

/// Inference-ready network: integer delays, batch norm folded into weights
/// and biases, masked weights dropped from the adjacency lists.
struct EventModel {
  struct Edge {
    int target;
    double weight;
    int delay;  // synaptic: per-arc; axonal/dendritic: copied from the tied value
  };
  struct Layer {
    Mechanism mechanism = Mechanism::None;
    int h_pre = 0, h_post = 0;
    Eigen::VectorXd bias;                   // folded batch-norm offset
    std::vector<std::vector<Edge>> adj;     // by source, targets ascending
    Eigen::VectorXi axonal_delay;           // per source (axonal)
    Eigen::VectorXi dendritic_delay;        // per target (dendritic)
    long long edge_count = 0;
  };
  std::vector<Layer> layers;
  Eigen::MatrixXd readout_w;
  Eigen::VectorXd readout_b;
  double beta = 0.0, threshold = 0.0, beta_out = 0.0;
  int d_max = 1;
  int classes = 0, input_channels = 0;
  Buffering buffering = Buffering::Unshared;
};

/// Discretizes delays, folds batch norm (faults on a zero-variance channel),
/// and drops masked weights from the adjacency lists.
EventModel compile(const Model& model, Buffering buffering = Buffering::Unshared);

struct LayerRunStats {
  long long peak_inflight = 0;   // entries, sampled after insertion
  long long peak_carried = 0;    // entries pending across a step boundary
  double mean_carried = 0.0;
  long long spikes = 0;
  std::vector<long long> spikes_per_step;
};

struct RunStats {
  std::vector<LayerRunStats> layers;
  int steps = 0;
};

struct EngineResult {
  std::vector<SpikeTrain> layer_spikes;
  Eigen::VectorXd logits;
  RunStats stats;
};

/// Step-by-step event-driven simulation with the model's buffering strategy.
/// Matured events are delivered before the LIF update of the same step, so a
/// zero delay is a same-step delivery.
EngineResult run(const EventModel& em, const SpikeTrain& x);

/// Dense one-hot-kernel forward of the compiled model: direct evaluation of
/// I_i(t) = b_i + sum_j w_ij x_j(t - d_ij) by indexing, no buffering
/// machinery. The engine's output must match this spike for spike.
EngineResult reference_forward(const EventModel& em, const SpikeTrain& x);

struct LayerOccupancy {
  int layer = 0;
  std::string mechanism, strategy;
  long long peak_inflight_entries = 0;
  long long peak_carried_entries = 0;
  double mean_carried_entries = 0.0;
  int entry_bits = 0;  // per-entry cost under the analytic convention
  long long peak_inflight_bits = 0;
  long long spikes = 0;
  double rho_p_per_step = 0.0;     // spikes / (steps * H)
  double rho_p_window_peak = 0.0;  // peak d_max-window spike count / (d_max * H)
};

struct OccupancyReport {
  std::vector<LayerOccupancy> layers;

  std::string to_csv() const;
  std::string to_json() const;
};

/// Deterministic aggregation of recorded occupancies; the population rate is
/// emitted under both normalizations (per neuron per step, and per peak
/// d_max window).
OccupancyReport occupancy_report(const RunStats& stats, const EventModel& em,
                                 int value_bits = 16);

}  // namespace dsnn
