// SPDX-License-Identifier: Apache-2.0
#include "dsnn/network.hpp"

#include <cmath>

#include "dsnn/common.hpp"
#include "dsnn/neuron.hpp"

namespace dsnn {

void Model::set_sigma(double sigma) {
  for (auto& l : layers)
    if (l.delay) l.delay->sigma = sigma;
}

double Model::sigma() const {
  for (const auto& l : layers)
    if (l.delay) return l.delay->sigma;
  return 0.0;
}

void Model::apply_masks() {
  for (auto& l : layers) {
    l.W = l.W.cwiseProduct(l.weight_mask);
    if (l.delay) l.delay->positions = l.delay->positions.cwiseProduct(l.delay->mask);
  }
}

void Model::clamp_all_delays() {
  for (auto& l : layers)
    if (l.delay) clamp_delays(*l.delay);
}

Model init_parameters(const ModelConfig& cfg, Rng& rng) {
  Model m;
  m.cfg = cfg;
  m.layers.resize(cfg.layers);
  for (int l = 0; l < cfg.layers; ++l) {
    const int h_pre = (l == 0) ? cfg.input_channels : cfg.hidden;
    const int h_post = cfg.hidden;
    auto& p = m.layers[l];

    Rng wr = rng.split(1000 + l);
    const double bound = 1.0 / std::sqrt(static_cast<double>(h_pre));
    p.W.resize(h_post, h_pre);
    for (int i = 0; i < h_post; ++i)
      for (int j = 0; j < h_pre; ++j) p.W(i, j) = wr.uniform(-bound, bound);

    Rng mr = rng.split(2000 + l);
    p.weight_mask = Eigen::MatrixXd::Ones(h_post, h_pre);
    const int n = h_post * h_pre;
    const int zeros = static_cast<int>(std::floor(n * cfg.weight_sparsity));
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    mr.shuffle(idx);
    for (int z = 0; z < zeros; ++z) p.weight_mask(idx[z] / h_pre, idx[z] % h_pre) = 0.0;
    p.W = p.W.cwiseProduct(p.weight_mask);

    p.bn_gamma = Eigen::VectorXd::Ones(h_post);
    p.bn_beta = Eigen::VectorXd::Zero(h_post);
    p.bn_mean = Eigen::VectorXd::Zero(h_post);
    p.bn_var = Eigen::VectorXd::Ones(h_post);

    if (cfg.delay_mechanism != Mechanism::None) {
      Rng dr = rng.split(3000 + l);
      p.delay = init_delay_params(cfg.delay_mechanism, h_pre, h_post, cfg.d_max,
                                  cfg.delay_sparsity, dr);
      p.delay->sigma = cfg.sigma_start();
    }
  }

  Rng rr = rng.split(4000);
  const double rbound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
  m.readout.W.resize(cfg.classes, cfg.hidden);
  for (int i = 0; i < cfg.classes; ++i)
    for (int j = 0; j < cfg.hidden; ++j) m.readout.W(i, j) = rr.uniform(-rbound, rbound);
  m.readout.b = Eigen::VectorXd::Zero(cfg.classes);
  return m;
}

Eigen::MatrixXd pack_batch(const std::vector<SpikeTrain>& xs) {
  DSNN_REQUIRE(!xs.empty(), "pack_batch: empty batch");
  const int channels = xs[0].channels;
  const int steps = xs[0].steps;
  Eigen::MatrixXd m(channels, static_cast<long>(xs.size()) * steps);
  for (std::size_t b = 0; b < xs.size(); ++b) {
    DSNN_REQUIRE(xs[b].channels == channels && xs[b].steps == steps,
                 "pack_batch: inconsistent sample shapes");
    for (int c = 0; c < channels; ++c)
      for (int t = 0; t < steps; ++t) m(c, b * steps + t) = xs[b].get(c, t);
  }
  return m;
}

namespace {

void check_finite_currents(const Eigen::MatrixXd& n) {
  if (n.allFinite()) return;
  for (int c = 0; c < n.rows(); ++c)
    for (long t = 0; t < n.cols(); ++t)
      if (!std::isfinite(n(c, t)))
        fail("non-finite input current at neuron " + std::to_string(c));
}

// LIF over the packed series; one recurrence per sample block.
void lif_over_series(const Eigen::MatrixXd& currents, int batch, int steps, double beta,
                     double threshold, SpikeMode mode, double slope, Eigen::MatrixXd& pre_reset,
                     Eigen::MatrixXd& spikes) {
  const int h = static_cast<int>(currents.rows());
  pre_reset.resize(h, currents.cols());
  spikes.resize(h, currents.cols());
  Eigen::VectorXd u(h);
  const bool hard = mode == SpikeMode::Hard;
  for (int b = 0; b < batch; ++b) {
    u.setZero();
    const int base = b * steps;
    for (int t = 0; t < steps; ++t) {
      const long col = base + t;
      const double* in = currents.data() + col * h;
      double* pre = pre_reset.data() + col * h;
      double* sp = spikes.data() + col * h;
      double* uu = u.data();
      for (int i = 0; i < h; ++i) {
        const double p = beta * uu[i] + in[i];
        const double s = hard ? (p >= threshold ? 1.0 : 0.0) : softspike(p - threshold, slope);
        pre[i] = p;
        sp[i] = s;
        uu[i] = (1.0 - s) * p;
      }
    }
  }
}

struct BnResult {
  Eigen::MatrixXd y;
  Eigen::MatrixXd xhat;  // only filled when a cache is requested
  Eigen::VectorXd mu, var;
};

// statistics over batch x time per channel (time steps treated as samples);
// column passes keep the column-major storage contiguous
BnResult batch_norm(const Eigen::MatrixXd& a, LayerParameters& p, bool training,
                    bool update_running, double momentum, bool want_xhat) {
  BnResult r;
  const int h = static_cast<int>(a.rows());
  const long m = a.cols();
  if (training) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(h), sum2 = Eigen::VectorXd::Zero(h);
    double* s1 = sum.data();
    double* s2 = sum2.data();
    for (long col = 0; col < m; ++col) {
      const double* in = a.data() + col * h;
      for (int i = 0; i < h; ++i) {
        s1[i] += in[i];
        s2[i] += in[i] * in[i];
      }
    }
    r.mu = sum / static_cast<double>(m);
    r.var = (sum2 / static_cast<double>(m) - r.mu.cwiseAbs2()).cwiseMax(0.0);
    if (update_running) {
      p.bn_mean = (1.0 - momentum) * p.bn_mean + momentum * r.mu;
      p.bn_var = (1.0 - momentum) * p.bn_var + momentum * r.var;
    }
  } else {
    r.mu = p.bn_mean;
    r.var = p.bn_var;
  }
  const Eigen::ArrayXd inv = (r.var.array() + kBnEpsilon).sqrt().inverse();
  r.y.resize(h, m);
  if (want_xhat) r.xhat.resize(h, m);
  const double* mu = r.mu.data();
  const double* iv = inv.data();
  const double* gm = p.bn_gamma.data();
  const double* bt = p.bn_beta.data();
  for (long col = 0; col < m; ++col) {
    const double* in = a.data() + col * h;
    double* out = r.y.data() + col * h;
    if (want_xhat) {
      double* xh = r.xhat.data() + col * h;
      for (int i = 0; i < h; ++i) {
        xh[i] = (in[i] - mu[i]) * iv[i];
        out[i] = gm[i] * xh[i] + bt[i];
      }
    } else {
      for (int i = 0; i < h; ++i) out[i] = gm[i] * (in[i] - mu[i]) * iv[i] + bt[i];
    }
  }
  return r;
}

// Full layer: delay stage + masked linear (order per mechanism), batch norm,
// LIF. Fills `cache` when given.
void run_layer(const Eigen::MatrixXd& x, LayerParameters& p, const ModelConfig& cfg, int batch,
               int steps, SpikeMode mode, bool training, bool update_running, double bn_momentum,
               LayerCache* cache, Eigen::MatrixXd& spikes, Eigen::MatrixXd& currents) {
  DSNN_REQUIRE(x.rows() == p.W.cols(),
               "layer_forward: input has " + std::to_string(x.rows()) + " channels, expected " +
                   std::to_string(p.W.cols()));
  const Mechanism mech = p.delay ? p.delay->mechanism : Mechanism::None;
  const bool want_grads = cache != nullptr;

  KernelBank bank;
  if (p.delay) bank = build_kernel_bank(*p.delay, want_grads);

  Eigen::MatrixXd pre_delay, delayed, a;
  switch (mech) {
    case Mechanism::Synaptic:
      a = synaptic_delay_mix(x, p.W, bank, batch, steps);
      break;
    case Mechanism::Axonal:
      delayed = depthwise_delay_conv(x, bank, batch, steps);
      a.noalias() = p.W * delayed;
      break;
    case Mechanism::Dendritic:
      pre_delay.noalias() = p.W * x;
      delayed = depthwise_delay_conv(pre_delay, bank, batch, steps);
      a = delayed;
      break;
    case Mechanism::None:
      a.noalias() = p.W * x;
      break;
  }

  BnResult bn = batch_norm(a, p, training, update_running, bn_momentum, want_grads);
  check_finite_currents(bn.y);
  Eigen::MatrixXd pre_reset;
  lif_over_series(bn.y, batch, steps, cfg.beta, cfg.threshold, mode, cfg.surrogate_slope,
                  pre_reset, spikes);
  currents = bn.y;

  if (cache) {
    cache->x = x;
    cache->pre_delay = std::move(pre_delay);
    cache->delayed = std::move(delayed);
    cache->pre_bn = std::move(a);
    cache->xhat = std::move(bn.xhat);
    cache->mu = std::move(bn.mu);
    cache->var = std::move(bn.var);
    cache->pre_reset = std::move(pre_reset);
    cache->spikes = spikes;
    cache->bank = std::move(bank);
  }
}

ForwardRecord forward_impl(Model& model, const std::vector<SpikeTrain>& xs, SpikeMode mode,
                           bool training, double bn_momentum, Rng* dropout_rng,
                           ForwardCache* cache) {
  const auto& cfg = model.cfg;
  DSNN_REQUIRE(!xs.empty(), "network_forward: empty batch");
  DSNN_REQUIRE(xs[0].channels == cfg.input_channels,
               "network_forward: input has " + std::to_string(xs[0].channels) +
                   " channels, expected " + std::to_string(cfg.input_channels));
  const int batch = static_cast<int>(xs.size());
  const int steps = xs[0].steps;
  Eigen::MatrixXd signal = pack_batch(xs);

  ForwardRecord rec;
  rec.batch = batch;
  rec.steps = steps;
  if (cache) {
    cache->layers.resize(model.layers.size());
    cache->batch = batch;
    cache->steps = steps;
    cache->mode = mode;
    cache->training = training;
    cache->dropout_p = training ? cfg.dropout : 0.0;
  }

  const double p_drop = training ? cfg.dropout : 0.0;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    Eigen::MatrixXd spikes, currents;
    run_layer(signal, model.layers[l], cfg, batch, steps, mode, training, training, bn_momentum,
              cache ? &cache->layers[l] : nullptr, spikes, currents);
    rec.spikes.push_back(spikes);
    rec.rates.push_back(spikes.rowwise().sum() / static_cast<double>(batch));

    if (p_drop > 0.0) {
      DSNN_REQUIRE(dropout_rng != nullptr, "training forward with dropout needs an rng");
      Eigen::MatrixXd mask(spikes.rows(), spikes.cols());
      for (long c = 0; c < mask.size(); ++c)
        mask.data()[c] = dropout_rng->uniform() < p_drop ? 0.0 : 1.0;
      signal = spikes.cwiseProduct(mask) / (1.0 - p_drop);
      if (cache) cache->layers[l].dropmask = std::move(mask);
    } else {
      signal = spikes;
    }
  }

  // readout: masked linear to classes, leaky integrator, no delays, no spikes
  Eigen::MatrixXd r = model.readout.W * signal;
  r.colwise() += model.readout.b;
  const double beta_out = cfg.readout_decay();
  Eigen::MatrixXd trace(cfg.classes, r.cols());
  Eigen::VectorXd v(cfg.classes);
  rec.logits.resize(cfg.classes, batch);
  for (int b = 0; b < batch; ++b) {
    v.setZero();
    for (int t = 0; t < steps; ++t) {
      const int col = b * steps + t;
      v = beta_out * v + r.col(col);
      trace.col(col) = v;
    }
    rec.logits.col(b) = trace.middleCols(b * steps, steps).rowwise().mean();
  }
  if (cache) {
    cache->readout_in = std::move(signal);
    cache->readout_trace = std::move(trace);
  }
  return rec;
}

}  // namespace

ForwardRecord forward_inference(const Model& model, const std::vector<SpikeTrain>& xs,
                                SpikeMode mode) {
  // running statistics are not touched; the const_cast never mutates
  Model& m = const_cast<Model&>(model);
  return forward_impl(m, xs, mode, /*training=*/false, 0.0, nullptr, nullptr);
}

ForwardRecord forward_train(Model& model, const std::vector<SpikeTrain>& xs, SpikeMode mode,
                            Rng& dropout_rng, ForwardCache& cache, double bn_momentum) {
  return forward_impl(model, xs, mode, /*training=*/true, bn_momentum, &dropout_rng, &cache);
}

LayerForwardOut layer_forward(const Eigen::MatrixXd& x, const LayerParameters& params,
                              const ModelConfig& cfg, int batch, int steps, SpikeMode mode,
                              bool training) {
  LayerParameters p = params;  // running stats of the caller stay untouched
  LayerForwardOut out;
  run_layer(x, p, cfg, batch, steps, mode, training, false, 0.1, nullptr, out.spikes,
            out.currents);
  out.rates = out.spikes.rowwise().sum() / static_cast<double>(batch);
  return out;
}

Gradients network_backward(const Model& model, const ForwardCache& cache,
                           const Eigen::MatrixXd& dlogits,
                           const std::vector<Eigen::VectorXd>* drates) {
  DSNN_REQUIRE(cache.training, "network_backward requires a training-mode cache");
  const auto& cfg = model.cfg;
  const int batch = cache.batch;
  const int steps = cache.steps;
  const long m = static_cast<long>(batch) * steps;
  const double beta_out = cfg.readout_decay();

  Gradients g;
  g.layers.resize(model.layers.size());

  // readout backward: logits are the time-mean of the integrator trace
  Eigen::MatrixXd dr(cfg.classes, m);
  for (int b = 0; b < batch; ++b) {
    Eigen::VectorXd carry = Eigen::VectorXd::Zero(cfg.classes);
    for (int t = steps - 1; t >= 0; --t) {
      carry = dlogits.col(b) / static_cast<double>(steps) + beta_out * carry;
      dr.col(b * steps + t) = carry;
    }
  }
  g.readout_w.noalias() = dr * cache.readout_in.transpose();
  g.readout_b = dr.rowwise().sum();
  Eigen::MatrixXd dsignal = model.readout.W.transpose() * dr;

  for (int l = static_cast<int>(model.layers.size()) - 1; l >= 0; --l) {
    const auto& p = model.layers[l];
    const auto& c = cache.layers[l];
    auto& gl = g.layers[l];
    const int h = static_cast<int>(p.W.rows());

    // dropout backward
    Eigen::MatrixXd ds;
    if (c.dropmask.size() > 0)
      ds = dsignal.cwiseProduct(c.dropmask) / (1.0 - cache.dropout_p);
    else
      ds = dsignal;

    // regularizer path: rates are batch-mean spike sums
    if (drates && (*drates)[l].size() > 0) {
      for (int i = 0; i < h; ++i)
        ds.row(i).array() += (*drates)[l](i) / static_cast<double>(batch);
    }

    // LIF backward; hard mode uses the identical surrogate_derivative path
    Eigen::MatrixXd dn(h, m);
    Eigen::VectorXd carry(h);
    for (int b = 0; b < batch; ++b) {
      carry.setZero();  // dLoss/dU(t) post-reset
      for (int t = steps - 1; t >= 0; --t) {
        const int col = b * steps + t;
        const double* pre = c.pre_reset.data() + static_cast<long>(col) * h;
        const double* sp = c.spikes.data() + static_cast<long>(col) * h;
        const double* g = ds.data() + static_cast<long>(col) * h;
        double* out = dn.data() + static_cast<long>(col) * h;
        for (int i = 0; i < h; ++i) {
          const double hp = surrogate_derivative(pre[i] - cfg.threshold, cfg.surrogate_slope);
          const double du = g[i] * hp + carry(i) * ((1.0 - sp[i]) - pre[i] * hp);
          out[i] = du;
          carry(i) = cfg.beta * du;
        }
      }
    }

    // batch-norm backward (training statistics, biased variance over m)
    gl.bn_beta = dn.rowwise().sum();
    gl.bn_gamma.setZero(h);
    for (long col = 0; col < m; ++col)
      gl.bn_gamma += dn.col(col).cwiseProduct(c.xhat.col(col));
    const Eigen::ArrayXd inv_std = (c.var.array() + kBnEpsilon).sqrt().inverse();
    const Eigen::ArrayXd mean_dxh = p.bn_gamma.array() * gl.bn_beta.array() / static_cast<double>(m);
    const Eigen::ArrayXd mean_dxh_xh =
        p.bn_gamma.array() * gl.bn_gamma.array() / static_cast<double>(m);
    Eigen::MatrixXd da(h, m);
    for (long col = 0; col < m; ++col) {
      da.col(col) = (p.bn_gamma.array() * dn.col(col).array() - mean_dxh -
                     c.xhat.col(col).array() * mean_dxh_xh) *
                    inv_std;
    }

    // mechanism backward
    const Mechanism mech = p.delay ? p.delay->mechanism : Mechanism::None;
    Eigen::MatrixXd dx, dk;
    switch (mech) {
      case Mechanism::Synaptic: {
        synaptic_delay_mix_backward(c.x, p.W, c.bank, da, batch, steps, dx, gl.w, dk);
        break;
      }
      case Mechanism::Axonal: {
        gl.w.noalias() = da * c.delayed.transpose();
        Eigen::MatrixXd dd = p.W.transpose() * da;
        depthwise_delay_conv_backward(c.x, c.bank, dd, batch, steps, dx, dk);
        break;
      }
      case Mechanism::Dendritic: {
        Eigen::MatrixXd dz;
        depthwise_delay_conv_backward(c.pre_delay, c.bank, da, batch, steps, dz, dk);
        gl.w.noalias() = dz * c.x.transpose();
        dx = p.W.transpose() * dz;
        break;
      }
      case Mechanism::None: {
        gl.w.noalias() = da * c.x.transpose();
        dx = p.W.transpose() * da;
        break;
      }
    }
    gl.w = gl.w.cwiseProduct(p.weight_mask);

    if (p.delay) {
      const auto& dp = *p.delay;
      const int cols = static_cast<int>(dp.positions.cols());
      gl.delay = Eigen::MatrixXd::Zero(dp.positions.rows(), cols);
      gl.sigma = 0.0;
      for (int idx = 0; idx < dk.rows(); ++idx) {
        const double gd = dk.row(idx).dot(c.bank.dk_dd.row(idx));
        gl.delay(idx / cols, idx % cols) = gd;
        gl.sigma += dk.row(idx).dot(c.bank.dk_dsigma.row(idx));
      }
      gl.delay = gl.delay.cwiseProduct(dp.mask);
    } else {
      gl.delay.resize(0, 0);
      gl.sigma = 0.0;
    }

    dsignal = std::move(dx);
  }
  return g;
}

}  // namespace dsnn
