// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <utility>

#include "dsnn/config.hpp"

namespace dsnn {

/// Smooth spike primitive: (1/pi) * atan((pi/2) * a * u) + 1/2, in (0,1).
double softspike(double u, double a);

/// d softspike / du = a / (2 * (1 + ((pi/2) * a * u)^2)).
/// This is the ATan surrogate; hard mode uses the exact same function in
/// its backward pass.
double surrogate_derivative(double u, double a);

struct LIFState {
  Eigen::VectorXd U;  // membrane potential per neuron

  explicit LIFState(int n) : U(Eigen::VectorXd::Zero(n)) {}
};

struct LIFStepResult {
  Eigen::VectorXd spikes;     // hard: {0,1}; soft: (0,1)
  Eigen::VectorXd pre_reset;  // potential after decay+integrate, before reset
};

/// One step of U' = beta*U + I, spike, multiplicative reset U <- (1-S)*U'.
/// Updates `state` in place and returns the spike output and the pre-reset
/// potential (needed by BPTT).
/// Faults with the offending neuron index on non-finite input current.
LIFStepResult lif_step(LIFState& state, const Eigen::VectorXd& current, double beta,
                       double threshold, SpikeMode mode, double surrogate_slope);

struct ReadoutResult {
  Eigen::MatrixXd trace;   // (classes x T): V after each integration step
  Eigen::VectorXd logits;  // mean of the trace over time
};

/// Non-spiking leaky integrator: V <- beta_out*V + I(t), V starts at 0,
/// no threshold, no reset. Logits aggregate by mean over time.
ReadoutResult readout_integrate(const Eigen::MatrixXd& currents, double beta_out);

}  // namespace dsnn
