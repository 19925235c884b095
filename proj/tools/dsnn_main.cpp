// SPDX-License-Identifier: Apache-2.0
//
// dsnn: train, evaluate, and cost-model spiking networks with learnable
// transmission delays.
//
// Exit codes: 0 success, 1 usage, 2 validation, 3 runtime fault,
// 4 correctness-check failure.
#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dsnn/config.hpp"
#include "dsnn/data.hpp"
#include "dsnn/event_engine.hpp"
#include "dsnn/metrics.hpp"
#include "dsnn/network.hpp"
#include "dsnn/train.hpp"

namespace fs = std::filesystem;
using namespace dsnn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitCorrectness = 4;

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "Key-value config file (see docs/config.md)");
  cmd->add_option("--seed", opts.seed, "Seed override");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  DSNN_REQUIRE(static_cast<bool>(f), "cannot write: " + path);
  f << text;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty())
    std::cout << text;
  else
    write_text(out_path, text);
}

int run_train(const CommonOpts& common, const std::string& data_path,
              const std::string& test_path, const std::string& out_dir, bool quiet) {
  ModelConfig cfg;
  TrainConfig tcfg;
  if (!common.config_path.empty()) load_config_file(common.config_path, cfg, tcfg);
  if (common.seed) cfg.seed = *common.seed;

  const auto violations = validate_config(cfg, tcfg);
  if (!violations.empty()) {
    for (const auto& v : violations) std::cerr << "config: " << v << "\n";
    return kExitValidation;
  }

  const Dataset data = read_events(data_path);
  std::optional<Dataset> test;
  if (!test_path.empty()) test = read_events(test_path);
  if (data.channels != cfg.input_channels)
    throw ConfigError("data has " + std::to_string(data.channels) +
                      " channels but config expects " + std::to_string(cfg.input_channels));
  if (data.classes > cfg.classes)
    throw ConfigError("data has " + std::to_string(data.classes) +
                      " classes but config expects " + std::to_string(cfg.classes));

  fs::create_directories(out_dir);
  Rng rng(cfg.seed);
  Model model = init_parameters(cfg, rng);
  if (!quiet) std::cout << metrics_csv_header() << "\n";
  const auto result = train(model, data, test ? &*test : nullptr, tcfg,
                            [&](const EpochMetrics& row) {
                              if (!quiet) std::cout << metrics_csv_row(row) << "\n";
                            });

  save_checkpoint((fs::path(out_dir) / "checkpoint.dsnn").string(), model);
  write_metrics_csv((fs::path(out_dir) / "metrics.csv").string(), result.history);
  write_text((fs::path(out_dir) / "config.resolved").string(), serialize_config(cfg, tcfg));
  return kExitOk;
}

int run_eval(const std::string& checkpoint, const std::string& data_path,
             const std::string& strategy, const std::string& out_path,
             const std::string& json_path) {
  const Model model = load_checkpoint(checkpoint);
  const Dataset data = read_events(data_path);
  const EvalResult ev = evaluate(model, data);

  BufferModelInputs in;
  in.layers = model.cfg.layers;
  in.hidden = model.cfg.hidden;
  in.d_max = model.cfg.d_max;
  in.mechanism = model.cfg.delay_mechanism;
  in.strategy = buffering_from_string(strategy);
  in.input_channels = model.cfg.input_channels;

  // forward record of the whole set for the spike/SOP fields
  const ForwardRecord rec = forward_inference(model, data.samples);
  const MetricsReport report = make_report(rec, model, in, ev.accuracy);
  emit(report.to_csv(), out_path);
  if (!json_path.empty()) write_text(json_path, report.to_json());
  return kExitOk;
}

int run_events(const std::string& checkpoint, const std::string& data_path,
               const std::string& strategy, const std::string& out_path,
               const std::string& json_path, int limit) {
  const Model model = load_checkpoint(checkpoint);
  const Dataset data = read_events(data_path);
  const int n = limit > 0 ? std::min<int>(limit, static_cast<int>(data.samples.size()))
                          : static_cast<int>(data.samples.size());

  std::vector<Buffering> strategies;
  if (strategy == "both")
    strategies = {Buffering::Unshared, Buffering::Shared};
  else
    strategies = {buffering_from_string(strategy)};

  bool all_equal = true;
  std::string body;
  std::string json_all = "[\n";
  for (const Buffering strat : strategies) {
    const EventModel em = compile(model, strat);
    RunStats agg;
    long long mismatches = 0;
    for (int i = 0; i < n; ++i) {
      const auto engine = run(em, data.samples[i]);
      const auto oracle = reference_forward(em, data.samples[i]);
      bool equal = engine.logits == oracle.logits;
      for (std::size_t l = 0; equal && l < engine.layer_spikes.size(); ++l)
        equal = engine.layer_spikes[l] == oracle.layer_spikes[l];
      if (!equal) ++mismatches;

      if (agg.layers.empty()) {
        agg = engine.stats;
      } else {
        for (std::size_t l = 0; l < agg.layers.size(); ++l) {
          auto& a = agg.layers[l];
          const auto& s = engine.stats.layers[l];
          a.peak_inflight = std::max(a.peak_inflight, s.peak_inflight);
          a.peak_carried = std::max(a.peak_carried, s.peak_carried);
          a.mean_carried += s.mean_carried;
          a.spikes += s.spikes;
          for (int t = 0; t < agg.steps; ++t) a.spikes_per_step[t] += s.spikes_per_step[t];
        }
      }
    }
    for (auto& a : agg.layers) a.mean_carried /= n;

    const auto rep = occupancy_report(agg, em);
    body += "strategy=" + to_string(strat) + " samples=" + std::to_string(n) +
            " equivalent=" + (mismatches == 0 ? "true" : "false") + "\n";
    body += rep.to_csv();
    json_all += rep.to_json();
    if (strat != strategies.back()) json_all += ",\n";
    if (mismatches != 0) all_equal = false;
  }
  json_all += "]\n";
  emit(body, out_path);
  if (!json_path.empty()) write_text(json_path, json_all);
  if (!all_equal) {
    std::cerr << "events: engine output differs from the dense oracle\n";
    return kExitCorrectness;
  }
  return kExitOk;
}

int run_cost(const CommonOpts& common, int layers, int hidden, int d_max, int state_bits,
             int value_bits, int address_bits, double rho_n, double rho_p, int input_channels,
             const std::string& out_path) {
  if (!common.config_path.empty()) {
    // config supplies topology defaults; explicit flags already overrode them
    ModelConfig cfg;
    TrainConfig tcfg;
    load_config_file(common.config_path, cfg, tcfg);
    if (layers <= 0) layers = cfg.layers;
    if (hidden <= 0) hidden = cfg.hidden;
    if (d_max <= 0) d_max = cfg.d_max;
  }
  if (layers <= 0) layers = 3;
  if (hidden <= 0) hidden = 512;
  if (d_max <= 0) d_max = 15;

  std::string csv = "mechanism,strategy,state_bits,buffering_bits,total_bits\n";
  for (Mechanism mech : {Mechanism::Synaptic, Mechanism::Axonal, Mechanism::Dendritic}) {
    for (Buffering strat : {Buffering::Unshared, Buffering::Shared}) {
      BufferModelInputs in;
      in.layers = layers;
      in.hidden = hidden;
      in.d_max = d_max;
      in.mechanism = mech;
      in.strategy = strat;
      in.state_bits = state_bits;
      in.value_bits = value_bits;
      in.address_bits = address_bits;
      in.rho_n = rho_n;
      in.rho_p = rho_p;
      in.input_channels = input_channels;
      const long long total = buffer_bits(in);
      const long long state = static_cast<long long>(layers) * hidden * state_bits;
      csv += to_string(mech) + "," + to_string(strat) + "," + std::to_string(state) + "," +
             std::to_string(total - state) + "," + std::to_string(total) + "\n";
    }
  }
  emit(csv, out_path);
  return kExitOk;
}

int run_gen_data(const CommonOpts& common, SynthSpec spec, int test_samples,
                 const std::string& out_path, const std::string& test_out) {
  if (!common.config_path.empty()) {
    ModelConfig cfg;
    TrainConfig tcfg;
    load_config_file(common.config_path, cfg, tcfg);
    spec.channels = cfg.input_channels;
    spec.classes = cfg.classes;
    spec.seed = cfg.seed;
  }
  if (common.seed) spec.seed = *common.seed;
  const int train_samples = spec.samples_per_class;
  spec.samples_per_class = train_samples + test_samples;
  const auto r = generate(spec);

  Dataset train_ds, test_ds;
  train_ds.channels = test_ds.channels = spec.channels;
  train_ds.steps = test_ds.steps = spec.steps;
  train_ds.classes = test_ds.classes = spec.classes;
  for (int c = 0; c < spec.classes; ++c) {
    for (int s = 0; s < spec.samples_per_class; ++s) {
      const int idx = c * spec.samples_per_class + s;
      if (s < train_samples) {
        train_ds.samples.push_back(r.dataset.samples[idx]);
        train_ds.labels.push_back(r.dataset.labels[idx]);
      } else {
        test_ds.samples.push_back(r.dataset.samples[idx]);
        test_ds.labels.push_back(r.dataset.labels[idx]);
      }
    }
  }
  write_events(out_path, train_ds);
  std::cout << "wrote " << train_ds.samples.size() << " samples to " << out_path << "\n";
  if (test_samples > 0) {
    DSNN_REQUIRE(!test_out.empty(), "gen-data: --test-samples needs --test-out");
    write_events(test_out, test_ds);
    std::cout << "wrote " << test_ds.samples.size() << " samples to " << test_out << "\n";
  }
  return kExitOk;
}

std::vector<double> parse_grid(const std::string& csv) {
  std::vector<double> values;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    const auto comma = csv.find(',', pos);
    const std::string tok = csv.substr(pos, comma == std::string::npos ? csv.size() - pos
                                                                       : comma - pos);
    if (!tok.empty()) values.push_back(std::stod(tok));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return values;
}

struct SweepCell {
  std::string desc;  // leading CSV columns for the cell
  ModelConfig cfg;
  TrainConfig tcfg;
};

int run_sweep(const CommonOpts& common, const std::string& kind, const std::string& values_csv,
              const std::string& eta_csv, const std::string& kappa_csv, double reg_r_flag,
              const std::string& data_path, const std::string& test_path, int n_seeds,
              const std::string& out_path) {
  ModelConfig base_cfg;
  TrainConfig base_tcfg;
  if (!common.config_path.empty()) load_config_file(common.config_path, base_cfg, base_tcfg);
  const std::uint64_t base_seed = common.seed ? *common.seed : base_cfg.seed;

  std::vector<SweepCell> cells;
  std::string header;
  if (kind == "delay_range") {
    header = "d_max";
    for (double v : parse_grid(values_csv)) {
      SweepCell c{std::to_string(static_cast<int>(v)), base_cfg, base_tcfg};
      c.cfg.d_max = static_cast<int>(v);
      cells.push_back(std::move(c));
    }
  } else if (kind == "sparsity") {
    header = "eta,kappa";
    const auto etas = parse_grid(eta_csv.empty() ? "0" : eta_csv);
    const auto kappas = parse_grid(kappa_csv.empty() ? "0" : kappa_csv);
    for (double eta : etas)
      for (double kappa : kappas) {
        SweepCell c{format_double(eta) + "," + format_double(kappa), base_cfg, base_tcfg};
        c.cfg.delay_sparsity = eta;
        c.cfg.weight_sparsity = kappa;
        cells.push_back(std::move(c));
      }
  } else if (kind == "regularization") {
    header = "alpha_max";
    const double r = reg_r_flag > 0.0 ? reg_r_flag : base_tcfg.reg_r;
    if (r <= 0.0) {
      std::cerr << "sweep: regularization sweep needs reg_r > 0 (set train.reg_r or --reg-r)\n";
      return kExitUsage;
    }
    for (double v : parse_grid(values_csv)) {
      SweepCell c{format_double(v), base_cfg, base_tcfg};
      c.tcfg.reg_r = r;
      c.tcfg.reg_alpha_max = v;
      cells.push_back(std::move(c));
    }
  } else {
    std::cerr << "sweep: unknown kind '" << kind << "'\n";
    return kExitUsage;
  }
  if (cells.empty()) {
    std::cerr << "sweep: empty grid\n";
    return kExitUsage;
  }

  const Dataset data = read_events(data_path);
  std::optional<Dataset> test;
  if (!test_path.empty()) test = read_events(test_path);

  std::string csv = header + ",seeds,acc_mean,acc_std,loss_mean,spikes_mean,sops_mean,status\n";
  bool any_failed = false;
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    auto& cell = cells[ci];
    std::vector<double> accs, losses, spikes, sops;
    std::string status = "ok";
    for (int s = 0; s < n_seeds; ++s) {
      try {
        // re-seed per cell for independence with reproducibility
        cell.cfg.seed = base_seed + ci * static_cast<std::size_t>(n_seeds) + s;
        const auto violations = validate_config(cell.cfg, cell.tcfg);
        DSNN_REQUIRE(violations.empty(), "invalid cell config: " + violations.front());
        Rng rng(cell.cfg.seed);
        Model model = init_parameters(cell.cfg, rng);
        train(model, data, nullptr, cell.tcfg);
        const EvalResult ev = evaluate(model, test ? *test : data);
        accs.push_back(ev.accuracy);
        losses.push_back(ev.loss);
        spikes.push_back(ev.spikes_per_sample);
        sops.push_back(ev.sops_per_sample);
      } catch (const std::exception& e) {
        std::cerr << "sweep cell " << cell.desc << " seed " << s << " failed: " << e.what()
                  << "\n";
        status = "failed";
        any_failed = true;
      }
    }
    auto mean = [](const std::vector<double>& v) {
      if (v.empty()) return 0.0;
      double s = 0.0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    auto stddev = [&](const std::vector<double>& v) {
      if (v.size() < 2) return 0.0;
      const double m = mean(v);
      double s = 0.0;
      for (double x : v) s += (x - m) * (x - m);
      return std::sqrt(s / static_cast<double>(v.size() - 1));
    };
    csv += cell.desc + "," + std::to_string(accs.size()) + "," + format_double(mean(accs)) +
           "," + format_double(stddev(accs)) + "," + format_double(mean(losses)) + "," +
           format_double(mean(spikes)) + "," + format_double(mean(sops)) + "," + status + "\n";
  }
  emit(csv, out_path);
  return any_failed ? kExitRuntime : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spiking networks with learnable synaptic/axonal/dendritic delays"};
  app.require_subcommand(1);

  // train
  CommonOpts train_common;
  std::string train_data, train_test, train_out;
  bool train_quiet = false;
  auto* cmd_train = app.add_subcommand("train", "Train a model and write checkpoint + metrics");
  add_common(cmd_train, train_common);
  cmd_train->add_option("--data", train_data, "Training event file")->required();
  cmd_train->add_option("--test", train_test, "Optional held-out event file");
  cmd_train->add_option("--out", train_out, "Output directory")->required();
  cmd_train->add_flag("--quiet", train_quiet, "Suppress per-epoch rows on stdout");

  // eval
  CommonOpts eval_common;
  std::string eval_ckpt, eval_data, eval_strategy = "unshared", eval_out, eval_json;
  auto* cmd_eval = app.add_subcommand("eval", "Evaluate a checkpoint on an event file");
  add_common(cmd_eval, eval_common);
  cmd_eval->add_option("--checkpoint", eval_ckpt, "Checkpoint path")->required();
  cmd_eval->add_option("--data", eval_data, "Event file")->required();
  cmd_eval->add_option("--strategy", eval_strategy, "Buffer strategy for the cost column")
      ->check(CLI::IsMember({"unshared", "shared"}));
  cmd_eval->add_option("--out", eval_out, "Write the CSV report here instead of stdout");
  cmd_eval->add_option("--json", eval_json, "Also write a JSON report");

  // events
  CommonOpts events_common;
  std::string ev_ckpt, ev_data, ev_strategy = "both", ev_out, ev_json;
  int ev_limit = 0;
  auto* cmd_events =
      app.add_subcommand("events", "Run the event engine against the dense oracle");
  add_common(cmd_events, events_common);
  cmd_events->add_option("--checkpoint", ev_ckpt, "Checkpoint path")->required();
  cmd_events->add_option("--data", ev_data, "Event file")->required();
  cmd_events->add_option("--strategy", ev_strategy, "unshared | shared | both")
      ->check(CLI::IsMember({"unshared", "shared", "both"}));
  cmd_events->add_option("--limit", ev_limit, "Check at most N samples (0 = all)");
  cmd_events->add_option("--out", ev_out, "Write the report here instead of stdout");
  cmd_events->add_option("--json", ev_json, "Also write a JSON report");

  // cost
  CommonOpts cost_common;
  int cost_layers = 0, cost_hidden = 0, cost_dmax = 0;
  int cost_s = 16, cost_v = 16, cost_m = 0, cost_input = 0;
  double cost_rho_n = 1.0, cost_rho_p = 0.2;
  std::string cost_out;
  auto* cmd_cost = app.add_subcommand("cost", "Analytic buffer-cost table (all mechanisms)");
  add_common(cmd_cost, cost_common);
  cmd_cost->add_option("--layers", cost_layers, "Hidden layer count");
  cmd_cost->add_option("--hidden", cost_hidden, "Neurons per layer");
  cmd_cost->add_option("--d-max", cost_dmax, "Delay window length");
  cmd_cost->add_option("--state-bits", cost_s, "Neuron state bits (s)");
  cmd_cost->add_option("--value-bits", cost_v, "Weight value bits (v)");
  cmd_cost->add_option("--address-bits", cost_m, "Address bits (0 = ceil(log2 H))");
  cmd_cost->add_option("--rho-n", cost_rho_n, "Neuron-level rate");
  cmd_cost->add_option("--rho-p", cost_rho_p, "Population rate");
  cmd_cost->add_option("--input-channels", cost_input, "First-layer channel count (0 = H)");
  cmd_cost->add_option("--out", cost_out, "Write the CSV here instead of stdout");

  // sweep
  CommonOpts sweep_common;
  std::string sw_kind, sw_values, sw_etas, sw_kappas, sw_data, sw_test, sw_out;
  double sw_reg_r = 0.0;
  int sw_seeds = 5;
  auto* cmd_sweep = app.add_subcommand("sweep", "Grid sweeps: delay_range, sparsity, regularization");
  add_common(cmd_sweep, sweep_common);
  cmd_sweep->add_option("--kind", sw_kind, "delay_range | sparsity | regularization")->required();
  cmd_sweep->add_option("--values", sw_values, "Comma grid (d_max or alpha_max values)");
  cmd_sweep->add_option("--eta-values", sw_etas, "Delay sparsity grid (sparsity sweep)");
  cmd_sweep->add_option("--kappa-values", sw_kappas, "Weight sparsity grid (sparsity sweep)");
  cmd_sweep->add_option("--reg-r", sw_reg_r, "Regularization strength override");
  cmd_sweep->add_option("--data", sw_data, "Training event file")->required();
  cmd_sweep->add_option("--test", sw_test, "Held-out event file for cell evaluation");
  cmd_sweep->add_option("--seeds", sw_seeds, "Seeds per cell");
  cmd_sweep->add_option("--out", sw_out, "Write the aggregated CSV here instead of stdout");

  // gen-data
  CommonOpts gen_common;
  SynthSpec gen_spec;
  int gen_test_samples = 0;
  std::string gen_out, gen_test_out;
  auto* cmd_gen = app.add_subcommand("gen-data", "Generate the synthetic delayed-pattern dataset");
  add_common(cmd_gen, gen_common);
  cmd_gen->add_option("--classes", gen_spec.classes, "Class count");
  cmd_gen->add_option("--channels", gen_spec.channels, "Input channels");
  cmd_gen->add_option("--steps", gen_spec.steps, "Time steps per sample");
  cmd_gen->add_option("--spikes", gen_spec.spikes_per_pattern, "Spikes per prototype");
  cmd_gen->add_option("--max-lag", gen_spec.max_lag, "Largest prototype lag");
  cmd_gen->add_option("--jitter", gen_spec.jitter, "Per-spike timing jitter");
  cmd_gen->add_option("--noise", gen_spec.noise_rate, "Noise spikes per channel-step");
  cmd_gen->add_option("--samples-per-class", gen_spec.samples_per_class, "Training samples per class");
  cmd_gen->add_option("--test-samples-per-class", gen_test_samples, "Held-out samples per class");
  cmd_gen->add_option("--out", gen_out, "Training event file")->required();
  cmd_gen->add_option("--test-out", gen_test_out, "Held-out event file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (cmd_train->parsed())
      return run_train(train_common, train_data, train_test, train_out, train_quiet);
    if (cmd_eval->parsed())
      return run_eval(eval_ckpt, eval_data, eval_strategy, eval_out, eval_json);
    if (cmd_events->parsed())
      return run_events(ev_ckpt, ev_data, ev_strategy, ev_out, ev_json, ev_limit);
    if (cmd_cost->parsed())
      return run_cost(cost_common, cost_layers, cost_hidden, cost_dmax, cost_s, cost_v, cost_m,
                      cost_rho_n, cost_rho_p, cost_input, cost_out);
    if (cmd_sweep->parsed())
      return run_sweep(sweep_common, sw_kind, sw_values, sw_etas, sw_kappas, sw_reg_r, sw_data,
                       sw_test, sw_seeds, sw_out);
    if (cmd_gen->parsed())
      return run_gen_data(gen_common, gen_spec, gen_test_samples, gen_out, gen_test_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
