// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "dsnn/config.hpp"
#include "dsnn/delays.hpp"
#include "dsnn/rng.hpp"
#include "dsnn/spike_train.hpp"

namespace dsnn {

/// One hidden layer: delay stage, masked linear, batch norm, LIF.
/// Masked weights are exactly 0 at all times.
struct LayerParameters {
  Eigen::MatrixXd W;            // (H_post x H_pre)
  Eigen::MatrixXd weight_mask;  // same shape, 1 keep / 0 pruned
  Eigen::VectorXd bn_gamma, bn_beta;
  Eigen::VectorXd bn_mean, bn_var;  // running statistics (biased variance)
  std::optional<DelayParameterSet> delay;
};

struct ReadoutParameters {
  Eigen::MatrixXd W;  // (classes x H)
  Eigen::VectorXd b;
};

struct Model {
  ModelConfig cfg;
  std::vector<LayerParameters> layers;
  ReadoutParameters readout;

  void set_sigma(double sigma);
  double sigma() const;
  /// Re-applies both masks (weights to 0, masked delays to 0).
  void apply_masks();
  void clamp_all_delays();
};

/// Weights from a variance-scaled uniform distribution; masks drawn once
/// (floor(count*fraction) zeros) and fixed thereafter.
Model init_parameters(const ModelConfig& cfg, Rng& rng);

struct ForwardRecord {
  std::vector<Eigen::MatrixXd> spikes;  // per layer, (H x batch*steps)
  std::vector<Eigen::VectorXd> rates;   // spikes per sequence per neuron (batch mean)
  Eigen::MatrixXd logits;               // (classes x batch)
  int batch = 0;
  int steps = 0;
};

struct LayerCache {
  Eigen::MatrixXd x;          // layer input
  Eigen::MatrixXd pre_delay;  // dendritic only: mixed signal before its delay
  Eigen::MatrixXd delayed;    // post-delay signal (axonal input side / dendritic output side)
  Eigen::MatrixXd pre_bn;
  Eigen::MatrixXd xhat;
  Eigen::VectorXd mu, var;    // statistics used by this forward
  Eigen::MatrixXd pre_reset;  // LIF potential before reset
  Eigen::MatrixXd spikes;
  Eigen::MatrixXd dropmask;   // empty when dropout off
  KernelBank bank;
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Eigen::MatrixXd readout_in;     // post-dropout spikes feeding the readout
  Eigen::MatrixXd readout_trace;  // (classes x batch*steps)
  int batch = 0;
  int steps = 0;
  SpikeMode mode = SpikeMode::Hard;
  bool training = false;
  double dropout_p = 0.0;
};

/// Inference: frozen batch-norm running statistics, no dropout.
ForwardRecord forward_inference(const Model& model, const std::vector<SpikeTrain>& xs,
                                SpikeMode mode = SpikeMode::Hard);

/// Training-mode forward: batch-norm uses batch*time statistics (and updates
/// the running ones), dropout is applied to hidden spike outputs. Fills the
/// cache required by network_backward.
ForwardRecord forward_train(Model& model, const std::vector<SpikeTrain>& xs, SpikeMode mode,
                            Rng& dropout_rng, ForwardCache& cache, double bn_momentum = 0.1);

struct LayerGradients {
  Eigen::MatrixXd w;
  Eigen::VectorXd bn_gamma, bn_beta;
  Eigen::MatrixXd delay;  // same shape as positions; zero rows when no delay
  double sigma = 0.0;
};

struct Gradients {
  std::vector<LayerGradients> layers;
  Eigen::MatrixXd readout_w;
  Eigen::VectorXd readout_b;
};

/// BPTT through the cached forward. `dlogits` is dLoss/dlogits (classes x
/// batch). `drates`, when given, injects dLoss/drate per layer (the
/// firing-rate regularizer path). Mask structure is honored: gradients of
/// masked weights/delays are zero.
Gradients network_backward(const Model& model, const ForwardCache& cache,
                           const Eigen::MatrixXd& dlogits,
                           const std::vector<Eigen::VectorXd>* drates = nullptr);

struct LayerForwardOut {
  Eigen::MatrixXd spikes;    // (H x batch*steps)
  Eigen::MatrixXd currents;  // post-norm input to the LIF stage
  Eigen::VectorXd rates;
};

/// Single-layer forward (delay stage, masked linear, batch norm, LIF) over a
/// packed batch series; the building block network_forward stacks.
LayerForwardOut layer_forward(const Eigen::MatrixXd& x, const LayerParameters& params,
                              const ModelConfig& cfg, int batch, int steps, SpikeMode mode,
                              bool training);

/// Packs equally-shaped spike trains into a (channels x batch*steps) series.
Eigen::MatrixXd pack_batch(const std::vector<SpikeTrain>& xs);

constexpr double kBnEpsilon = 1e-5;

// ---- checkpoint container (versioned, little-endian) ----
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

}  // namespace dsnn
