// SPDX-License-Identifier: Apache-2.0
#include "dsnn/config.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dsnn/common.hpp"

namespace dsnn {

std::string to_string(Mechanism m) {
  switch (m) {
    case Mechanism::Synaptic: return "synaptic";
    case Mechanism::Axonal: return "axonal";
    case Mechanism::Dendritic: return "dendritic";
    case Mechanism::None: return "none";
  }
  return "?";
}

std::string to_string(SchedulerKind k) {
  switch (k) {
    case SchedulerKind::OneCycle: return "one_cycle";
    case SchedulerKind::Cosine: return "cosine";
    case SchedulerKind::None: return "none";
  }
  return "?";
}

Mechanism mechanism_from_string(const std::string& s) {
  if (s == "synaptic") return Mechanism::Synaptic;
  if (s == "axonal") return Mechanism::Axonal;
  if (s == "dendritic") return Mechanism::Dendritic;
  if (s == "none") return Mechanism::None;
  throw ConfigError("unknown delay mechanism '" + s +
                    "' (expected synaptic|axonal|dendritic|none)");
}

SchedulerKind scheduler_from_string(const std::string& s) {
  if (s == "one_cycle") return SchedulerKind::OneCycle;
  if (s == "cosine") return SchedulerKind::Cosine;
  if (s == "none") return SchedulerKind::None;
  throw ConfigError("unknown scheduler '" + s + "' (expected one_cycle|cosine|none)");
}

std::string format_double(double x) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

std::vector<std::string> validate_config(const ModelConfig& cfg, const TrainConfig& tcfg) {
  std::vector<std::string> v;
  auto bad = [&](const std::string& msg) { v.push_back(msg); };

  if (cfg.layers < 1) bad("layers must be >= 1");
  if (cfg.hidden < 1) bad("hidden must be >= 1");
  if (cfg.input_channels < 1) bad("input_channels must be >= 1");
  if (cfg.classes < 2) bad("classes must be >= 2");
  if (!(cfg.beta > 0.0 && cfg.beta < 1.0)) bad("beta must lie in (0,1)");
  if (!(cfg.threshold > 0.0)) bad("threshold must be > 0");
  if (cfg.d_max < 1) bad("d_max must be >= 1");
  if (!(cfg.surrogate_slope > 0.0)) bad("surrogate_slope must be > 0");
  if (!(cfg.weight_sparsity >= 0.0 && cfg.weight_sparsity <= 1.0))
    bad("weight_sparsity must lie in [0,1]");
  if (!(cfg.delay_sparsity >= 0.0 && cfg.delay_sparsity <= 1.0))
    bad("delay_sparsity must lie in [0,1]");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) bad("dropout must lie in [0,1)");
  if (cfg.sigma_init && !(*cfg.sigma_init > 0.0)) bad("sigma_init must be > 0");
  if (cfg.readout_beta && !(*cfg.readout_beta > 0.0 && *cfg.readout_beta < 1.0))
    bad("readout_beta must lie in (0,1)");

  if (tcfg.epochs < 1) bad("epochs must be >= 1");
  if (tcfg.batch_size < 1) bad("batch_size must be >= 1");
  if (!(tcfg.lr_weights > 0.0)) bad("lr_weights must be > 0");
  if (!(tcfg.lr_delays > 0.0)) bad("lr_delays must be > 0");
  if (!(tcfg.sigma_anneal_fraction > 0.0 && tcfg.sigma_anneal_fraction <= 1.0))
    bad("sigma_anneal_fraction must lie in (0,1]");
  if (!(tcfg.reg_r >= 0.0)) bad("reg_r must be >= 0");
  if (!(tcfg.reg_alpha_min >= 0.0)) bad("reg_alpha_min must be >= 0");
  if (!(tcfg.reg_alpha_max >= tcfg.reg_alpha_min))
    bad("reg_alpha_max must be >= reg_alpha_min");
  if (!(tcfg.one_cycle_warmup_fraction > 0.0 && tcfg.one_cycle_warmup_fraction < 1.0))
    bad("one_cycle_warmup_fraction must lie in (0,1)");
  if (!(tcfg.one_cycle_final_div >= 1.0)) bad("one_cycle_final_div must be >= 1");
  if (!(tcfg.bn_momentum > 0.0 && tcfg.bn_momentum <= 1.0))
    bad("bn_momentum must lie in (0,1]");
  return v;
}

std::string serialize_config(const ModelConfig& cfg, const TrainConfig& tcfg) {
  std::ostringstream o;
  o << "model.layers = " << cfg.layers << "\n";
  o << "model.hidden = " << cfg.hidden << "\n";
  o << "model.input_channels = " << cfg.input_channels << "\n";
  o << "model.classes = " << cfg.classes << "\n";
  o << "model.beta = " << format_double(cfg.beta) << "\n";
  o << "model.threshold = " << format_double(cfg.threshold) << "\n";
  o << "model.d_max = " << cfg.d_max << "\n";
  o << "model.surrogate_slope = " << format_double(cfg.surrogate_slope) << "\n";
  o << "model.delay_mechanism = " << to_string(cfg.delay_mechanism) << "\n";
  o << "model.weight_sparsity = " << format_double(cfg.weight_sparsity) << "\n";
  o << "model.delay_sparsity = " << format_double(cfg.delay_sparsity) << "\n";
  o << "model.dropout = " << format_double(cfg.dropout) << "\n";
  o << "model.seed = " << cfg.seed << "\n";
  o << "model.sigma_init = " << (cfg.sigma_init ? format_double(*cfg.sigma_init) : "auto") << "\n";
  o << "model.readout_beta = "
    << (cfg.readout_beta ? format_double(*cfg.readout_beta) : "auto") << "\n";
  o << "train.epochs = " << tcfg.epochs << "\n";
  o << "train.batch_size = " << tcfg.batch_size << "\n";
  o << "train.lr_weights = " << format_double(tcfg.lr_weights) << "\n";
  o << "train.lr_delays = " << format_double(tcfg.lr_delays) << "\n";
  o << "train.weight_scheduler = " << to_string(tcfg.weight_scheduler) << "\n";
  o << "train.delay_scheduler = " << to_string(tcfg.delay_scheduler) << "\n";
  o << "train.sigma_anneal_fraction = " << format_double(tcfg.sigma_anneal_fraction) << "\n";
  o << "train.reg_r = " << format_double(tcfg.reg_r) << "\n";
  o << "train.reg_alpha_min = " << format_double(tcfg.reg_alpha_min) << "\n";
  o << "train.reg_alpha_max = " << format_double(tcfg.reg_alpha_max) << "\n";
  o << "train.one_cycle_warmup_fraction = " << format_double(tcfg.one_cycle_warmup_fraction)
    << "\n";
  o << "train.one_cycle_final_div = " << format_double(tcfg.one_cycle_final_div) << "\n";
  o << "train.bn_momentum = " << format_double(tcfg.bn_momentum) << "\n";
  return o.str();
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_num(const std::string& key, const std::string& val) {
  char* end = nullptr;
  const double x = std::strtod(val.c_str(), &end);
  if (end == val.c_str() || *end != '\0')
    throw ConfigError("key '" + key + "': expected a number, got '" + val + "'");
  return x;
}

int parse_int(const std::string& key, const std::string& val) {
  const double x = parse_num(key, val);
  const int i = static_cast<int>(x);
  if (static_cast<double>(i) != x)
    throw ConfigError("key '" + key + "': expected an integer, got '" + val + "'");
  return i;
}

std::uint64_t parse_u64(const std::string& key, const std::string& val) {
  char* end = nullptr;
  const unsigned long long x = std::strtoull(val.c_str(), &end, 10);
  if (end == val.c_str() || *end != '\0')
    throw ConfigError("key '" + key + "': expected an unsigned integer, got '" + val + "'");
  return x;
}

std::optional<double> parse_auto(const std::string& key, const std::string& val) {
  if (val == "auto") return std::nullopt;
  return parse_num(key, val);
}

}  // namespace

void parse_config(const std::string& text, ModelConfig& cfg, TrainConfig& tcfg) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (val.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": empty value for '" + key + "'");

    if (key == "model.layers") cfg.layers = parse_int(key, val);
    else if (key == "model.hidden") cfg.hidden = parse_int(key, val);
    else if (key == "model.input_channels") cfg.input_channels = parse_int(key, val);
    else if (key == "model.classes") cfg.classes = parse_int(key, val);
    else if (key == "model.beta") cfg.beta = parse_num(key, val);
    else if (key == "model.threshold") cfg.threshold = parse_num(key, val);
    else if (key == "model.d_max") cfg.d_max = parse_int(key, val);
    else if (key == "model.surrogate_slope") cfg.surrogate_slope = parse_num(key, val);
    else if (key == "model.delay_mechanism") cfg.delay_mechanism = mechanism_from_string(val);
    else if (key == "model.weight_sparsity") cfg.weight_sparsity = parse_num(key, val);
    else if (key == "model.delay_sparsity") cfg.delay_sparsity = parse_num(key, val);
    else if (key == "model.dropout") cfg.dropout = parse_num(key, val);
    else if (key == "model.seed") cfg.seed = parse_u64(key, val);
    else if (key == "model.sigma_init") cfg.sigma_init = parse_auto(key, val);
    else if (key == "model.readout_beta") cfg.readout_beta = parse_auto(key, val);
    else if (key == "train.epochs") tcfg.epochs = parse_int(key, val);
    else if (key == "train.batch_size") tcfg.batch_size = parse_int(key, val);
    else if (key == "train.lr_weights") tcfg.lr_weights = parse_num(key, val);
    else if (key == "train.lr_delays") tcfg.lr_delays = parse_num(key, val);
    else if (key == "train.weight_scheduler") tcfg.weight_scheduler = scheduler_from_string(val);
    else if (key == "train.delay_scheduler") tcfg.delay_scheduler = scheduler_from_string(val);
    else if (key == "train.sigma_anneal_fraction") tcfg.sigma_anneal_fraction = parse_num(key, val);
    else if (key == "train.reg_r") tcfg.reg_r = parse_num(key, val);
    else if (key == "train.reg_alpha_min") tcfg.reg_alpha_min = parse_num(key, val);
    else if (key == "train.reg_alpha_max") tcfg.reg_alpha_max = parse_num(key, val);
    else if (key == "train.one_cycle_warmup_fraction")
      tcfg.one_cycle_warmup_fraction = parse_num(key, val);
    else if (key == "train.one_cycle_final_div") tcfg.one_cycle_final_div = parse_num(key, val);
    else if (key == "train.bn_momentum") tcfg.bn_momentum = parse_num(key, val);
    else
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
}

void load_config_file(const std::string& path, ModelConfig& cfg, TrainConfig& tcfg) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  parse_config(ss.str(), cfg, tcfg);
}

void save_config_file(const std::string& path, const ModelConfig& cfg, const TrainConfig& tcfg) {
  std::ofstream f(path, std::ios::binary);
  DSNN_REQUIRE(static_cast<bool>(f), "cannot write config file: " + path);
  f << serialize_config(cfg, tcfg);
}

}  // namespace dsnn
