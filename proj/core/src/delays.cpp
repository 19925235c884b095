// SPDX-License-Identifier: Apache-2.0
#include "dsnn/delays.hpp"

#include <cmath>

#include "dsnn/common.hpp"

namespace dsnn {

DelayParameterSet init_delay_params(Mechanism mechanism, int h_pre, int h_post, int d_max,
                                    double eta, Rng& rng) {
  DSNN_REQUIRE(d_max >= 1, "d_max must be >= 1");
  DSNN_REQUIRE(eta >= 0.0 && eta <= 1.0, "eta must lie in [0,1]");
  DelayParameterSet p;
  p.mechanism = mechanism;
  p.d_max = d_max;
  p.sigma = d_max / 2.0;
  int rows = 1, cols = 0;
  switch (mechanism) {
    case Mechanism::Synaptic: rows = h_post; cols = h_pre; break;
    case Mechanism::Axonal: cols = h_pre; break;
    case Mechanism::Dendritic: cols = h_post; break;
    case Mechanism::None: fail("init_delay_params: mechanism 'none' has no delay parameters");
  }
  p.positions.resize(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) p.positions(i, j) = rng.uniform(0.0, d_max - 1.0);

  // floor(count * eta) entries masked, chosen uniformly without replacement
  p.mask = Eigen::MatrixXd::Ones(rows, cols);
  const int n = rows * cols;
  const int zeros = static_cast<int>(std::floor(n * eta));
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  rng.shuffle(idx);
  for (int z = 0; z < zeros; ++z) {
    p.mask(idx[z] / cols, idx[z] % cols) = 0.0;
    p.positions(idx[z] / cols, idx[z] % cols) = 0.0;
  }
  return p;
}

Eigen::VectorXd gaussian_delay_kernel(double d, double sigma, int d_max) {
  DSNN_REQUIRE(sigma > 0.0, "gaussian_delay_kernel: sigma must be > 0");
  DSNN_REQUIRE(d >= 0.0 && d <= d_max - 1.0, "gaussian_delay_kernel: d outside [0, d_max-1]");
  const double c = d_max - d - 1.0;
  Eigen::VectorXd k(d_max);
  double sum = 0.0;
  for (int u = 0; u < d_max; ++u) {
    const double z = (u - c) / sigma;
    k(u) = std::exp(-0.5 * z * z);
    sum += k(u);
  }
  return k / sum;
}

void gaussian_delay_kernel_grad(double d, double sigma, int d_max, Eigen::VectorXd& k,
                                Eigen::VectorXd& dk_dd, Eigen::VectorXd& dk_dsigma) {
  DSNN_REQUIRE(sigma > 0.0, "gaussian_delay_kernel: sigma must be > 0");
  const double c = d_max - d - 1.0;
  Eigen::VectorXd w(d_max), dw_dd(d_max), dw_ds(d_max);
  double s = 0.0, s_dd = 0.0, s_ds = 0.0;
  for (int u = 0; u < d_max; ++u) {
    const double e = u - c;
    const double z = e / sigma;
    w(u) = std::exp(-0.5 * z * z);
    // dc/dd = -1
    dw_dd(u) = -w(u) * e / (sigma * sigma);
    dw_ds(u) = w(u) * e * e / (sigma * sigma * sigma);
    s += w(u);
    s_dd += dw_dd(u);
    s_ds += dw_ds(u);
  }
  k = w / s;
  dk_dd.resize(d_max);
  dk_dsigma.resize(d_max);
  for (int u = 0; u < d_max; ++u) {
    dk_dd(u) = (dw_dd(u) - k(u) * s_dd) / s;
    dk_dsigma(u) = (dw_ds(u) - k(u) * s_ds) / s;
  }
}

Eigen::VectorXd one_hot_kernel(int delay, int d_max) {
  DSNN_REQUIRE(delay >= 0 && delay < d_max, "one_hot_kernel: delay outside [0, d_max-1]");
  Eigen::VectorXd k = Eigen::VectorXd::Zero(d_max);
  k(d_max - 1 - delay) = 1.0;
  return k;
}

KernelBank build_kernel_bank(const DelayParameterSet& params, bool with_grads) {
  KernelBank bank;
  bank.d_max = params.d_max;
  const int n = params.kernel_count();
  bank.k.resize(n, params.d_max);
  if (with_grads) {
    bank.dk_dd.resize(n, params.d_max);
    bank.dk_dsigma.resize(n, params.d_max);
  }
  const int cols = static_cast<int>(params.positions.cols());
  for (int idx = 0; idx < n; ++idx) {
    const double d = params.positions(idx / cols, idx % cols);
    if (with_grads) {
      Eigen::VectorXd k, dd, ds;
      gaussian_delay_kernel_grad(d, params.sigma, params.d_max, k, dd, ds);
      bank.k.row(idx) = k.transpose();
      bank.dk_dd.row(idx) = dd.transpose();
      bank.dk_dsigma.row(idx) = ds.transpose();
    } else {
      bank.k.row(idx) = gaussian_delay_kernel(d, params.sigma, params.d_max).transpose();
    }
  }
  return bank;
}

KernelBank build_one_hot_bank(const Eigen::MatrixXi& delays, int d_max) {
  KernelBank bank;
  bank.d_max = d_max;
  const int n = static_cast<int>(delays.size());
  const int cols = static_cast<int>(delays.cols());
  bank.k = Eigen::MatrixXd::Zero(n, d_max);
  for (int idx = 0; idx < n; ++idx) {
    const int d = delays(idx / cols, idx % cols);
    DSNN_REQUIRE(d >= 0 && d < d_max, "build_one_hot_bank: delay outside [0, d_max-1]");
    bank.k(idx, d_max - 1 - d) = 1.0;
  }
  return bank;
}

Eigen::MatrixXd depthwise_delay_conv(const Eigen::MatrixXd& x, const KernelBank& bank,
                                     int batch, int steps) {
  const int channels = static_cast<int>(x.rows());
  DSNN_REQUIRE(bank.k.rows() == channels,
               "depthwise_delay_conv: bank has " + std::to_string(bank.k.rows()) +
                   " kernels, expected " + std::to_string(channels));
  DSNN_REQUIRE(x.cols() == static_cast<long>(batch) * steps,
               "depthwise_delay_conv: column count != batch*steps");
  const int d_max = bank.d_max;
  // taps(c, delta) applies to x_c(t - delta); columns are contiguous, so the
  // delta loop vectorizes over channels
  Eigen::MatrixXd taps(channels, d_max);
  for (int u = 0; u < d_max; ++u) taps.col(d_max - 1 - u) = bank.k.col(u);
  Eigen::MatrixXd y(channels, x.cols());
  for (int b = 0; b < batch; ++b) {
    const int base = b * steps;
    for (int t = 0; t < steps; ++t) {
      auto out = y.col(base + t);
      out = taps.col(0).cwiseProduct(x.col(base + t));
      const int dmax_t = std::min(d_max - 1, t);
      for (int delta = 1; delta <= dmax_t; ++delta)
        out += taps.col(delta).cwiseProduct(x.col(base + t - delta));
    }
  }
  return y;
}

void depthwise_delay_conv_backward(const Eigen::MatrixXd& x, const KernelBank& bank,
                                   const Eigen::MatrixXd& dy, int batch, int steps,
                                   Eigen::MatrixXd& dx, Eigen::MatrixXd& dk) {
  const int channels = static_cast<int>(x.rows());
  const int d_max = bank.d_max;
  Eigen::MatrixXd taps(channels, d_max);
  for (int u = 0; u < d_max; ++u) taps.col(d_max - 1 - u) = bank.k.col(u);
  Eigen::MatrixXd dtaps = Eigen::MatrixXd::Zero(channels, d_max);
  dx.resize(x.rows(), x.cols());
  for (int b = 0; b < batch; ++b) {
    const int base = b * steps;
    for (int t = 0; t < steps; ++t) {
      // dx(t) = sum_delta taps[delta] * dy(t + delta)
      auto out = dx.col(base + t);
      out = taps.col(0).cwiseProduct(dy.col(base + t));
      const int dmax_t = std::min(d_max - 1, steps - 1 - t);
      for (int delta = 1; delta <= dmax_t; ++delta)
        out += taps.col(delta).cwiseProduct(dy.col(base + t + delta));
      // dtaps(:, delta) += dy(t) .* x(t - delta)
      const int back = std::min(d_max - 1, t);
      for (int delta = 0; delta <= back; ++delta)
        dtaps.col(delta) += dy.col(base + t).cwiseProduct(x.col(base + t - delta));
    }
  }
  dk.resize(channels, d_max);
  for (int u = 0; u < d_max; ++u) dk.col(u) = dtaps.col(d_max - 1 - u);
}

Eigen::MatrixXd synaptic_delay_mix(const Eigen::MatrixXd& x, const Eigen::MatrixXd& weights,
                                   const KernelBank& bank, int batch, int steps) {
  const int h_post = static_cast<int>(weights.rows());
  const int h_pre = static_cast<int>(weights.cols());
  DSNN_REQUIRE(x.rows() == h_pre, "synaptic_delay_mix: input channels != weight columns");
  DSNN_REQUIRE(bank.k.rows() == static_cast<long>(h_post) * h_pre,
               "synaptic_delay_mix: bank size != H_post*H_pre");
  const int d_max = bank.d_max;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(h_post, x.cols());
  Eigen::MatrixXd m(h_post, h_pre);
  for (int u = 0; u < d_max; ++u) {
    const int shift = d_max - 1 - u;
    if (shift >= steps) continue;
    for (int i = 0; i < h_post; ++i)
      for (int j = 0; j < h_pre; ++j) m(i, j) = weights(i, j) * bank.k(i * h_pre + j, u);
    const int len = steps - shift;
    for (int b = 0; b < batch; ++b) {
      const int base = b * steps;
      a.middleCols(base + shift, len).noalias() += m * x.middleCols(base, len);
    }
  }
  return a;
}

void synaptic_delay_mix_backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& weights,
                                 const KernelBank& bank, const Eigen::MatrixXd& da, int batch,
                                 int steps, Eigen::MatrixXd& dx, Eigen::MatrixXd& dw,
                                 Eigen::MatrixXd& dk) {
  const int h_post = static_cast<int>(weights.rows());
  const int h_pre = static_cast<int>(weights.cols());
  const int d_max = bank.d_max;
  dx = Eigen::MatrixXd::Zero(x.rows(), x.cols());
  dw = Eigen::MatrixXd::Zero(h_post, h_pre);
  dk = Eigen::MatrixXd::Zero(bank.k.rows(), d_max);
  Eigen::MatrixXd g(h_post, h_pre), m(h_post, h_pre);
  for (int u = 0; u < d_max; ++u) {
    const int shift = d_max - 1 - u;
    if (shift >= steps) continue;
    const int len = steps - shift;
    g.setZero();
    for (int b = 0; b < batch; ++b) {
      const int base = b * steps;
      g.noalias() += da.middleCols(base + shift, len) * x.middleCols(base, len).transpose();
    }
    for (int i = 0; i < h_post; ++i) {
      for (int j = 0; j < h_pre; ++j) {
        const long row = static_cast<long>(i) * h_pre + j;
        dw(i, j) += g(i, j) * bank.k(row, u);
        dk(row, u) = g(i, j) * weights(i, j);
        m(i, j) = weights(i, j) * bank.k(row, u);
      }
    }
    for (int b = 0; b < batch; ++b) {
      const int base = b * steps;
      dx.middleCols(base, len).noalias() += m.transpose() * da.middleCols(base + shift, len);
    }
  }
}

Eigen::MatrixXd apply_delay_conv(const Eigen::MatrixXd& x, const KernelBank& bank,
                                 Mechanism mechanism, int batch, int steps) {
  switch (mechanism) {
    case Mechanism::Axonal:
    case Mechanism::Dendritic:
      return depthwise_delay_conv(x, bank, batch, steps);
    case Mechanism::Synaptic:
      fail("apply_delay_conv: synaptic kernels are applied jointly with the weight layer; "
           "use synaptic_delay_mix");
    case Mechanism::None:
      fail("apply_delay_conv: mechanism 'none' has no delay stage");
  }
  return {};
}

Eigen::MatrixXi discretize(const DelayParameterSet& params) {
  Eigen::MatrixXi out(params.positions.rows(), params.positions.cols());
  for (int i = 0; i < params.positions.rows(); ++i) {
    for (int j = 0; j < params.positions.cols(); ++j) {
      if (params.mask(i, j) == 0.0) {
        out(i, j) = 0;
        continue;
      }
      // round half up, deterministic across platforms
      int d = static_cast<int>(std::floor(params.positions(i, j) + 0.5));
      d = std::max(0, std::min(params.d_max - 1, d));
      out(i, j) = d;
    }
  }
  return out;
}

void clamp_delays(DelayParameterSet& params) {
  for (int i = 0; i < params.positions.rows(); ++i) {
    for (int j = 0; j < params.positions.cols(); ++j) {
      double d = params.positions(i, j);
      d = std::max(0.0, std::min(static_cast<double>(params.d_max - 1), d));
      params.positions(i, j) = d * params.mask(i, j);
    }
  }
}

}  // namespace dsnn
