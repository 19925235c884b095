// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "dsnn/config.hpp"
#include "dsnn/data.hpp"
#include "dsnn/network.hpp"

namespace dsnn {

struct CrossEntropyResult {
  double loss = 0.0;
  Eigen::VectorXd grad;  // softmax(logits) - onehot(label)
};

/// Softmax cross-entropy (log-sum-exp stabilized). Faults on non-finite logits.
CrossEntropyResult cross_entropy_loss(const Eigen::VectorXd& logits, int label);

/// Mean loss over the batch; fills dlogits (classes x batch) with the mean
/// gradient.
double batch_cross_entropy(const Eigen::MatrixXd& logits, const std::vector<int>& labels,
                           Eigen::MatrixXd& dlogits);

struct RegConfig {
  double alpha_min = 0.0;
  double alpha_max = 0.0;
  double r = 0.0;
};

/// r * (R_quiet + R_burst): summed ReLU distances of per-neuron rates from
/// the [alpha_min, alpha_max] band, over all layers.
double firing_rate_reg(const std::vector<Eigen::VectorXd>& rates, const RegConfig& reg);

/// Same, plus the subgradient w.r.t. each rate (0 at the kinks).
double firing_rate_reg_grad(const std::vector<Eigen::VectorXd>& rates, const RegConfig& reg,
                            std::vector<Eigen::VectorXd>& drates);

/// Linear anneal from sigma0 (default d_max/2) at epoch 0 down to 0.5 at
/// anneal_fraction * total_epochs; constant 0.5 afterwards.
double sigma_schedule(double epoch, int total_epochs, int d_max, double anneal_fraction,
                      double sigma0 = 0.0);

/// cosine: base*0.5*(1+cos(pi*step/total)); one_cycle: linear warmup to base
/// over the first warmup fraction of steps, then cosine decay to
/// base/final_div (exact at the last step); none: constant.
double lr_schedule(SchedulerKind kind, long step, long total_steps, double base_lr,
                   double warmup_fraction = 0.3, double final_div = 100.0);

/// Adam first/second moments per parameter tensor, two parameter groups
/// (weights and delays) with independent step counters.
struct OptimState {
  struct Slot {
    Eigen::ArrayXXd m, v;
  };
  std::vector<Slot> w, bn_gamma, bn_beta, delay;
  Slot readout_w, readout_b;
  long step_weights = 0;
  long step_delays = 0;

  static OptimState init(const Model& model);
};

/// One Adam update per group, then mask re-application and delay clamping.
/// Faults on non-finite gradients, naming the parameter.
void adam_step(Model& model, const Gradients& grads, OptimState& state, double lr_weights,
               double lr_delays);

struct EpochMetrics {
  int epoch = 0;
  std::string split;  // "train" or "test"
  double loss = 0.0;
  double accuracy = 0.0;
  double spikes = 0.0;  // per sample
  double sops = 0.0;    // per sample
  double sigma = 0.0;
  double lr_w = 0.0;
  double lr_d = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
};

/// Mini-batch BPTT in hard mode with surrogate backward. Loss is
/// cross-entropy plus the optional firing-rate term (reg_r > 0). Sigma is
/// annealed per epoch; both learning-rate schedules advance per step; masks
/// and clamps are enforced after every step. Aborts with epoch/step context
/// on divergence.
TrainResult train(Model& model, const Dataset& train_data, const Dataset* test_data,
                  const TrainConfig& tcfg,
                  const std::function<void(const EpochMetrics&)>& on_row = nullptr);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  double spikes_per_sample = 0.0;
  double sops_per_sample = 0.0;
};

EvalResult evaluate(const Model& model, const Dataset& data, int batch_size = 512);

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& row);
void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& history);

}  // namespace dsnn
