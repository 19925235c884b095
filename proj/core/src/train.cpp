// SPDX-License-Identifier: Apache-2.0
#include "dsnn/train.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "dsnn/common.hpp"
#include "dsnn/metrics.hpp"

namespace dsnn {

CrossEntropyResult cross_entropy_loss(const Eigen::VectorXd& logits, int label) {
  DSNN_REQUIRE(label >= 0 && label < logits.size(), "cross_entropy_loss: label out of range");
  DSNN_REQUIRE(logits.allFinite(), "cross_entropy_loss: non-finite logits");
  const double m = logits.maxCoeff();
  const Eigen::VectorXd e = (logits.array() - m).exp();
  const double z = e.sum();
  CrossEntropyResult r;
  r.loss = std::log(z) + m - logits(label);
  r.grad = e / z;
  r.grad(label) -= 1.0;
  return r;
}

double batch_cross_entropy(const Eigen::MatrixXd& logits, const std::vector<int>& labels,
                           Eigen::MatrixXd& dlogits) {
  DSNN_REQUIRE(static_cast<std::size_t>(logits.cols()) == labels.size(),
               "batch_cross_entropy: labels/batch mismatch");
  const double inv_b = 1.0 / static_cast<double>(labels.size());
  dlogits.resize(logits.rows(), logits.cols());
  double loss = 0.0;
  for (long b = 0; b < logits.cols(); ++b) {
    const auto r = cross_entropy_loss(logits.col(b), labels[b]);
    loss += r.loss;
    dlogits.col(b) = r.grad * inv_b;
  }
  return loss * inv_b;
}

double firing_rate_reg(const std::vector<Eigen::VectorXd>& rates, const RegConfig& reg) {
  double quiet = 0.0, burst = 0.0;
  for (const auto& f : rates) {
    quiet += (reg.alpha_min - f.array()).max(0.0).sum();
    burst += (f.array() - reg.alpha_max).max(0.0).sum();
  }
  return reg.r * (quiet + burst);
}

double firing_rate_reg_grad(const std::vector<Eigen::VectorXd>& rates, const RegConfig& reg,
                            std::vector<Eigen::VectorXd>& drates) {
  drates.assign(rates.size(), Eigen::VectorXd());
  double quiet = 0.0, burst = 0.0;
  for (std::size_t l = 0; l < rates.size(); ++l) {
    const auto& f = rates[l];
    drates[l] = Eigen::VectorXd::Zero(f.size());
    for (int i = 0; i < f.size(); ++i) {
      if (f(i) < reg.alpha_min) {
        quiet += reg.alpha_min - f(i);
        drates[l](i) = -reg.r;
      } else if (f(i) > reg.alpha_max) {
        burst += f(i) - reg.alpha_max;
        drates[l](i) = reg.r;
      }
    }
  }
  return reg.r * (quiet + burst);
}

double sigma_schedule(double epoch, int total_epochs, int d_max, double anneal_fraction,
                      double sigma0) {
  DSNN_REQUIRE(epoch >= 0.0 && epoch < static_cast<double>(total_epochs) + 1e-12,
               "sigma_schedule: epoch out of range");
  constexpr double kSigmaFinal = 0.5;
  if (sigma0 <= 0.0) sigma0 = d_max / 2.0;
  const double anneal_end = anneal_fraction * total_epochs;
  if (epoch >= anneal_end) return kSigmaFinal;
  return sigma0 + (kSigmaFinal - sigma0) * (epoch / anneal_end);
}

double lr_schedule(SchedulerKind kind, long step, long total_steps, double base_lr,
                   double warmup_fraction, double final_div) {
  DSNN_REQUIRE(step >= 0 && step < total_steps, "lr_schedule: step out of range");
  switch (kind) {
    case SchedulerKind::None:
      return base_lr;
    case SchedulerKind::Cosine:
      return base_lr * 0.5 *
             (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                             static_cast<double>(total_steps)));
    case SchedulerKind::OneCycle: {
      if (total_steps <= 1) return base_lr;
      const double low = base_lr / final_div;
      const double s = static_cast<double>(step) / static_cast<double>(total_steps - 1);
      if (s <= warmup_fraction) return low + (base_lr - low) * (s / warmup_fraction);
      const double q = (s - warmup_fraction) / (1.0 - warmup_fraction);
      return low + (base_lr - low) * 0.5 * (1.0 + std::cos(std::numbers::pi * q));
    }
  }
  return base_lr;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

OptimState::Slot make_slot(long rows, long cols) {
  OptimState::Slot s;
  s.m = Eigen::ArrayXXd::Zero(rows, cols);
  s.v = Eigen::ArrayXXd::Zero(rows, cols);
  return s;
}

void adam_update(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::MatrixXd& grad,
                 OptimState::Slot& slot, double lr, long t, const char* name) {
  DSNN_REQUIRE(param.rows() == grad.rows() && param.cols() == grad.cols(),
               std::string("adam_step: gradient shape mismatch for ") + name);
  if (!grad.allFinite()) fail(std::string("adam_step: non-finite gradient for ") + name);
  const auto g = grad.array();
  slot.m = kAdamBeta1 * slot.m + (1.0 - kAdamBeta1) * g;
  slot.v = kAdamBeta2 * slot.v + (1.0 - kAdamBeta2) * g.square();
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t));
  param.array() -= lr * (slot.m / bc1) / ((slot.v / bc2).sqrt() + kAdamEps);
}

}  // namespace

OptimState OptimState::init(const Model& model) {
  OptimState s;
  for (const auto& l : model.layers) {
    s.w.push_back(make_slot(l.W.rows(), l.W.cols()));
    s.bn_gamma.push_back(make_slot(l.bn_gamma.size(), 1));
    s.bn_beta.push_back(make_slot(l.bn_beta.size(), 1));
    if (l.delay)
      s.delay.push_back(make_slot(l.delay->positions.rows(), l.delay->positions.cols()));
    else
      s.delay.push_back(make_slot(0, 0));
  }
  s.readout_w = make_slot(model.readout.W.rows(), model.readout.W.cols());
  s.readout_b = make_slot(model.readout.b.size(), 1);
  return s;
}

void adam_step(Model& model, const Gradients& grads, OptimState& state, double lr_weights,
               double lr_delays) {
  ++state.step_weights;
  ++state.step_delays;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& p = model.layers[l];
    const auto& g = grads.layers[l];
    const std::string base = "layer" + std::to_string(l) + ".";
    adam_update(p.W, g.w, state.w[l], lr_weights, state.step_weights, (base + "W").c_str());
    adam_update(p.bn_gamma, g.bn_gamma, state.bn_gamma[l], lr_weights, state.step_weights,
                (base + "bn_gamma").c_str());
    adam_update(p.bn_beta, g.bn_beta, state.bn_beta[l], lr_weights, state.step_weights,
                (base + "bn_beta").c_str());
    if (p.delay && g.delay.size() > 0) {
      adam_update(p.delay->positions, g.delay, state.delay[l], lr_delays, state.step_delays,
                  (base + "delay_positions").c_str());
    }
  }
  adam_update(model.readout.W, grads.readout_w, state.readout_w, lr_weights, state.step_weights,
              "readout.W");
  adam_update(model.readout.b, grads.readout_b, state.readout_b, lr_weights, state.step_weights,
              "readout.b");
  model.apply_masks();
  model.clamp_all_delays();
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

namespace {

int argmax(const Eigen::VectorXd& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}

}  // namespace

EvalResult evaluate(const Model& model, const Dataset& data, int batch_size) {
  DSNN_REQUIRE(!data.samples.empty(), "evaluate: empty dataset");
  EvalResult r;
  long long correct = 0, spikes = 0, sops = 0;
  double loss_sum = 0.0;
  const int n = static_cast<int>(data.samples.size());
  for (int start = 0; start < n; start += batch_size) {
    const int b = std::min(batch_size, n - start);
    std::vector<SpikeTrain> xs(data.samples.begin() + start, data.samples.begin() + start + b);
    const ForwardRecord rec = forward_inference(model, xs, SpikeMode::Hard);
    for (int i = 0; i < b; ++i) {
      const int label = data.labels[start + i];
      loss_sum += cross_entropy_loss(rec.logits.col(i), label).loss;
      if (argmax(rec.logits.col(i)) == label) ++correct;
    }
    spikes += count_spikes(rec);
    sops += count_sops(rec, model);
  }
  r.loss = loss_sum / n;
  r.accuracy = static_cast<double>(correct) / n;
  r.spikes_per_sample = static_cast<double>(spikes) / n;
  r.sops_per_sample = static_cast<double>(sops) / n;
  return r;
}

TrainResult train(Model& model, const Dataset& train_data, const Dataset* test_data,
                  const TrainConfig& tcfg, const std::function<void(const EpochMetrics&)>& on_row) {
  DSNN_REQUIRE(!train_data.samples.empty(), "train: empty dataset");
  {
    const auto violations = validate_config(model.cfg, tcfg);
    DSNN_REQUIRE(violations.empty(), "train: invalid config: " + violations.front());
  }

  const int n = static_cast<int>(train_data.samples.size());
  const int batch = std::min(tcfg.batch_size, n);  // scales down for small datasets
  const long steps_per_epoch = (n + batch - 1) / batch;
  const long total_steps = steps_per_epoch * tcfg.epochs;

  Rng root(model.cfg.seed);
  Rng shuffle_rng = root.split(7000);
  Rng dropout_rng = root.split(8000);

  OptimState optim = OptimState::init(model);
  const bool has_delays = model.cfg.delay_mechanism != Mechanism::None;
  const RegConfig reg{tcfg.reg_alpha_min, tcfg.reg_alpha_max, tcfg.reg_r};

  TrainResult result;
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  long global_step = 0;
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    double sigma = 0.0;
    if (has_delays) {
      sigma = sigma_schedule(epoch, tcfg.epochs, model.cfg.d_max, tcfg.sigma_anneal_fraction,
                             model.cfg.sigma_start());
      model.set_sigma(sigma);
    }
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    long long correct = 0, spikes = 0, sops = 0;
    double lr_w = 0.0, lr_d = 0.0;
    for (int start = 0; start < n; start += batch) {
      const int b = std::min(batch, n - start);
      std::vector<SpikeTrain> xs;
      std::vector<int> labels;
      xs.reserve(b);
      labels.reserve(b);
      for (int i = 0; i < b; ++i) {
        xs.push_back(train_data.samples[order[start + i]]);
        labels.push_back(train_data.labels[order[start + i]]);
      }

      ForwardCache cache;
      const ForwardRecord rec =
          forward_train(model, xs, SpikeMode::Hard, dropout_rng, cache, tcfg.bn_momentum);

      Eigen::MatrixXd dlogits;
      double loss = batch_cross_entropy(rec.logits, labels, dlogits);
      std::vector<Eigen::VectorXd> drates;
      if (tcfg.reg_r > 0.0) loss += firing_rate_reg_grad(rec.rates, reg, drates);
      if (!std::isfinite(loss))
        fail("training diverged (non-finite loss) at epoch " + std::to_string(epoch) +
             ", step " + std::to_string(global_step));

      const Gradients grads = network_backward(
          model, cache, dlogits, tcfg.reg_r > 0.0 ? &drates : nullptr);

      lr_w = lr_schedule(tcfg.weight_scheduler, global_step, total_steps, tcfg.lr_weights,
                         tcfg.one_cycle_warmup_fraction, tcfg.one_cycle_final_div);
      lr_d = lr_schedule(tcfg.delay_scheduler, global_step, total_steps, tcfg.lr_delays,
                         tcfg.one_cycle_warmup_fraction, tcfg.one_cycle_final_div);
      adam_step(model, grads, optim, lr_w, lr_d);
      ++global_step;

      loss_sum += loss * b;
      for (int i = 0; i < b; ++i)
        if (argmax(rec.logits.col(i)) == labels[i]) ++correct;
      spikes += count_spikes(rec);
      sops += count_sops(rec, model);
    }

    EpochMetrics row;
    row.epoch = epoch;
    row.split = "train";
    row.loss = loss_sum / n;
    row.accuracy = static_cast<double>(correct) / n;
    row.spikes = static_cast<double>(spikes) / n;
    row.sops = static_cast<double>(sops) / n;
    row.sigma = sigma;
    row.lr_w = lr_w;
    row.lr_d = lr_d;
    result.history.push_back(row);
    if (on_row) on_row(row);

    if (test_data) {
      const EvalResult ev = evaluate(model, *test_data, tcfg.batch_size);
      EpochMetrics trow = row;
      trow.split = "test";
      trow.loss = ev.loss;
      trow.accuracy = ev.accuracy;
      trow.spikes = ev.spikes_per_sample;
      trow.sops = ev.sops_per_sample;
      result.history.push_back(trow);
      if (on_row) on_row(trow);
    }
  }
  return result;
}

std::string metrics_csv_header() { return "epoch,split,loss,accuracy,spikes,sops,sigma,lr_w,lr_d"; }

std::string metrics_csv_row(const EpochMetrics& r) {
  return std::to_string(r.epoch) + "," + r.split + "," + format_double(r.loss) + "," +
         format_double(r.accuracy) + "," + format_double(r.spikes) + "," +
         format_double(r.sops) + "," + format_double(r.sigma) + "," + format_double(r.lr_w) +
         "," + format_double(r.lr_d);
}

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& history) {
  std::ofstream f(path, std::ios::binary);
  DSNN_REQUIRE(static_cast<bool>(f), "cannot write metrics csv: " + path);
  f << metrics_csv_header() << "\n";
  for (const auto& row : history) f << metrics_csv_row(row) << "\n";
}

}  // namespace dsnn
