// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dsnn/config.hpp"
#include "dsnn/rng.hpp"

namespace dsnn {

/// Real-valued delay positions under one tying scheme, plus the shared
/// kernel width. Shapes: synaptic (H_post x H_pre), axonal (1 x H_pre),
/// dendritic (1 x H_post). Masked entries are pinned to delay 0 and never
/// trained; the connection itself stays alive (removal is the weight
/// mask's job).
struct DelayParameterSet {
  Mechanism mechanism = Mechanism::Axonal;
  Eigen::MatrixXd positions;  // in [0, d_max-1]
  Eigen::MatrixXd mask;       // 1 = trainable, 0 = pinned to 0
  double sigma = 1.0;
  int d_max = 1;

  int kernel_count() const { return static_cast<int>(positions.size()); }
};

DelayParameterSet init_delay_params(Mechanism mechanism, int h_pre, int h_post, int d_max,
                                    double eta, Rng& rng);

/// One kernel row per delay parameter; row layout mirrors the tying scheme
/// (synaptic row index = i * H_pre + j). Each kernel is nonnegative and
/// sums to 1, so the effective gain stays independent of sigma during
/// annealing.
struct KernelBank {
  Eigen::MatrixXd k;         // (n x d_max)
  Eigen::MatrixXd dk_dd;     // same shape; empty unless built with grads
  Eigen::MatrixXd dk_dsigma;
  int d_max = 0;
};

/// Gaussian bump centered at d_max - d - 1, normalized to unit sum.
/// Index u corresponds to a time shift of d_max - 1 - u steps, so the
/// center index realizes a shift of exactly d.
Eigen::VectorXd gaussian_delay_kernel(double d, double sigma, int d_max);

/// Kernel plus its derivatives w.r.t. d and sigma.
void gaussian_delay_kernel_grad(double d, double sigma, int d_max, Eigen::VectorXd& k,
                                Eigen::VectorXd& dk_dd, Eigen::VectorXd& dk_dsigma);

/// Exact one-hot kernel realizing an integer shift of `delay` steps.
Eigen::VectorXd one_hot_kernel(int delay, int d_max);

KernelBank build_kernel_bank(const DelayParameterSet& params, bool with_grads = false);
KernelBank build_one_hot_bank(const Eigen::MatrixXi& delays, int d_max);

/// Causal depthwise convolution of a batch series (channels x batch*steps)
/// with one kernel per channel: y_c(t) = sum_u k_c[u] * x_c(t - (d_max-1-u)),
/// with x(t') = 0 for t' < 0.
Eigen::MatrixXd depthwise_delay_conv(const Eigen::MatrixXd& x, const KernelBank& bank,
                                     int batch, int steps);

/// Backward of depthwise_delay_conv: fills dx (same shape as x) and the
/// per-kernel gradient dk (n x d_max).
void depthwise_delay_conv_backward(const Eigen::MatrixXd& x, const KernelBank& bank,
                                   const Eigen::MatrixXd& dy, int batch, int steps,
                                   Eigen::MatrixXd& dx, Eigen::MatrixXd& dk);

/// Fused synaptic delay + weighting: a(t) = sum_u (W .* K_u) x(t - (d_max-1-u)),
/// where K_u(i,j) = bank row i*H_pre+j at column u. Returns (H_post x batch*steps).
Eigen::MatrixXd synaptic_delay_mix(const Eigen::MatrixXd& x, const Eigen::MatrixXd& weights,
                                   const KernelBank& bank, int batch, int steps);

void synaptic_delay_mix_backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& weights,
                                 const KernelBank& bank, const Eigen::MatrixXd& da, int batch,
                                 int steps, Eigen::MatrixXd& dx, Eigen::MatrixXd& dw,
                                 Eigen::MatrixXd& dk);

/// Mechanism-level entry point for the un-fused schemes (axonal/dendritic).
Eigen::MatrixXd apply_delay_conv(const Eigen::MatrixXd& x, const KernelBank& bank,
                                 Mechanism mechanism, int batch, int steps);

/// Round-half-up to the nearest integer in [0, d_max-1]; masked entries -> 0.
Eigen::MatrixXi discretize(const DelayParameterSet& params);

/// Projects every position into [0, d_max-1] and re-pins masked entries to 0.
void clamp_delays(DelayParameterSet& params);

}  // namespace dsnn
