// SPDX-License-Identifier: Apache-2.0
#include "dsnn/neuron.hpp"

#include <cmath>
#include <numbers>

#include "dsnn/common.hpp"

namespace dsnn {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kHalfPi = std::numbers::pi / 2.0;
}  // namespace

double softspike(double u, double a) {
  return std::atan(kHalfPi * a * u) / kPi + 0.5;
}

double surrogate_derivative(double u, double a) {
  const double x = kHalfPi * a * u;
  return a / (2.0 * (1.0 + x * x));
}

LIFStepResult lif_step(LIFState& state, const Eigen::VectorXd& current, double beta,
                       double threshold, SpikeMode mode, double surrogate_slope) {
  DSNN_REQUIRE(beta > 0.0 && beta < 1.0, "beta must lie in (0,1)");
  DSNN_REQUIRE(threshold > 0.0, "threshold must be > 0");
  DSNN_REQUIRE(current.size() == state.U.size(), "lif_step: current size mismatch");
  for (int i = 0; i < current.size(); ++i) {
    if (!std::isfinite(current(i)))
      fail("lif_step: non-finite input current at neuron " + std::to_string(i));
  }

  LIFStepResult r;
  r.pre_reset = beta * state.U + current;
  r.spikes.resize(current.size());
  if (mode == SpikeMode::Hard) {
    for (int i = 0; i < current.size(); ++i)
      r.spikes(i) = r.pre_reset(i) >= threshold ? 1.0 : 0.0;
  } else {
    for (int i = 0; i < current.size(); ++i)
      r.spikes(i) = softspike(r.pre_reset(i) - threshold, surrogate_slope);
  }
  state.U = (1.0 - r.spikes.array()) * r.pre_reset.array();
  return r;
}

ReadoutResult readout_integrate(const Eigen::MatrixXd& currents, double beta_out) {
  DSNN_REQUIRE(beta_out > 0.0 && beta_out < 1.0, "beta_out must lie in (0,1)");
  const int classes = static_cast<int>(currents.rows());
  const int steps = static_cast<int>(currents.cols());
  ReadoutResult r;
  r.trace.resize(classes, steps);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(classes);
  for (int t = 0; t < steps; ++t) {
    v = beta_out * v + currents.col(t);
    r.trace.col(t) = v;
  }
  r.logits = r.trace.rowwise().mean();
  return r;
}

}  // namespace dsnn
