// SPDX-License-Identifier: Apache-2.0
#include "dsnn/event_engine.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "dsnn/common.hpp"

namespace dsnn {

EventModel compile(const Model& model, Buffering buffering) {
  const auto& cfg = model.cfg;
  EventModel em;
  em.beta = cfg.beta;
  em.threshold = cfg.threshold;
  em.beta_out = cfg.readout_decay();
  em.d_max = cfg.d_max;
  em.classes = cfg.classes;
  em.input_channels = cfg.input_channels;
  em.buffering = buffering;
  em.readout_w = model.readout.W;
  em.readout_b = model.readout.b;

  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& p = model.layers[l];
    EventModel::Layer cl;
    cl.mechanism = p.delay ? p.delay->mechanism : Mechanism::None;
    cl.h_pre = static_cast<int>(p.W.cols());
    cl.h_post = static_cast<int>(p.W.rows());

    // fold batch norm: y = gamma*(a - mean)/sqrt(var+eps) + beta
    Eigen::VectorXd scale(cl.h_post);
    cl.bias.resize(cl.h_post);
    for (int i = 0; i < cl.h_post; ++i) {
      if (p.bn_var(i) == 0.0)
        fail("compile: cannot fold batch norm, zero running variance at layer " +
             std::to_string(l) + " channel " + std::to_string(i));
      scale(i) = p.bn_gamma(i) / std::sqrt(p.bn_var(i) + kBnEpsilon);
      cl.bias(i) = p.bn_beta(i) - scale(i) * p.bn_mean(i);
    }

    Eigen::MatrixXi delays;
    if (p.delay) delays = discretize(*p.delay);
    if (cl.mechanism == Mechanism::Axonal) cl.axonal_delay = delays.row(0).transpose();
    if (cl.mechanism == Mechanism::Dendritic) cl.dendritic_delay = delays.row(0).transpose();

    cl.adj.resize(cl.h_pre);
    for (int j = 0; j < cl.h_pre; ++j) {
      for (int i = 0; i < cl.h_post; ++i) {
        if (p.weight_mask(i, j) == 0.0) continue;
        EventModel::Edge e;
        e.target = i;
        e.weight = scale(i) * p.W(i, j);
        switch (cl.mechanism) {
          case Mechanism::Synaptic: e.delay = delays(i, j); break;
          case Mechanism::Axonal: e.delay = cl.axonal_delay(j); break;
          case Mechanism::Dendritic: e.delay = cl.dendritic_delay(i); break;
          case Mechanism::None: e.delay = 0; break;
        }
        cl.adj[j].push_back(e);
        ++cl.edge_count;
      }
    }
    em.layers.push_back(std::move(cl));
  }
  return em;
}

namespace {

// LIF recurrence shared verbatim by run() and reference_forward(); identical
// arithmetic keeps the equivalence contract bit-exact.
inline double lif_update(double& u, double current, double beta, double threshold) {
  const double pre = beta * u + current;
  const double spike = pre >= threshold ? 1.0 : 0.0;
  u = (1.0 - spike) * pre;
  return spike;
}

struct OccupancyCounter {
  long long count = 0;
  LayerRunStats* stats = nullptr;
  long long capacity = 0;
  int layer = -1;

  void after_push(int step) {
    DSNN_REQUIRE(count <= capacity, "event queue overflow beyond configured capacity at layer " +
                                        std::to_string(layer) + " step " + std::to_string(step));
    stats->peak_inflight = std::max(stats->peak_inflight, count);
  }
  void after_deliver() {
    stats->peak_carried = std::max(stats->peak_carried, count);
    stats->mean_carried += static_cast<double>(count);
  }
};

// Per-layer buffering state. The unshared variants are neuron-level rings;
// the shared variant is a layer-wide calendar queue indexed by
// due_step mod d_max whose entries carry the neuron (or arc) identity.
struct LayerBuffers {
  const EventModel::Layer* layer = nullptr;
  int d_max = 1;
  Buffering strategy = Buffering::Unshared;

  // unshared axonal/none: one bit ring per source
  std::vector<std::uint8_t> src_ring;  // h_pre * d_max
  // unshared synaptic: one bit ring per arc (edge), arcs in (j, i) order
  std::vector<std::uint8_t> arc_ring;  // edge_count * d_max
  std::vector<long long> arc_offset;   // per source, first arc index
  // unshared/shared dendritic: accumulated value + presence per (slot, target)
  std::vector<double> den_val;          // d_max * h_post
  std::vector<std::uint8_t> den_set;    // d_max * h_post
  // shared axonal/synaptic: calendar slots of source / arc ids
  std::vector<std::vector<long long>> slots;

  OccupancyCounter occ;

  void init(const EventModel::Layer& l, int dmax, Buffering strat, LayerRunStats* stats,
            int layer_index) {
    layer = &l;
    d_max = dmax;
    strategy = strat;
    occ.stats = stats;
    occ.layer = layer_index;
    const Mechanism mech = l.mechanism;
    if (mech == Mechanism::Dendritic) {
      den_val.assign(static_cast<std::size_t>(d_max) * l.h_post, 0.0);
      den_set.assign(static_cast<std::size_t>(d_max) * l.h_post, 0);
      occ.capacity = static_cast<long long>(d_max) * l.h_post;
      return;
    }
    if (mech == Mechanism::Synaptic) {
      arc_offset.assign(l.h_pre + 1, 0);
      for (int j = 0; j < l.h_pre; ++j)
        arc_offset[j + 1] = arc_offset[j] + static_cast<long long>(l.adj[j].size());
      occ.capacity = l.edge_count * d_max;
      if (strategy == Buffering::Shared)
        slots.assign(d_max, {});
      else
        arc_ring.assign(static_cast<std::size_t>(l.edge_count) * d_max, 0);
      return;
    }
    occ.capacity = static_cast<long long>(l.h_pre) * d_max;
    if (strategy == Buffering::Shared)
      slots.assign(d_max, {});
    else
      src_ring.assign(static_cast<std::size_t>(l.h_pre) * d_max, 0);
  }

  // source j emitted a spike at `step`
  void push(int j, int step) {
    const auto& l = *layer;
    switch (l.mechanism) {
      case Mechanism::Axonal:
      case Mechanism::None: {
        const int d = l.mechanism == Mechanism::Axonal ? l.axonal_delay(j) : 0;
        const int slot = (step + d) % d_max;
        if (strategy == Buffering::Shared) {
          slots[slot].push_back(j);
        } else {
          src_ring[static_cast<std::size_t>(j) * d_max + slot] = 1;
        }
        ++occ.count;
        break;
      }
      case Mechanism::Synaptic: {
        if (strategy == Buffering::Shared) {
          for (std::size_t a = 0; a < l.adj[j].size(); ++a) {
            const int slot = (step + l.adj[j][a].delay) % d_max;
            slots[slot].push_back(arc_offset_for(j) + static_cast<long long>(a));
            ++occ.count;
          }
        } else {
          for (std::size_t a = 0; a < l.adj[j].size(); ++a) {
            const int slot = (step + l.adj[j][a].delay) % d_max;
            arc_ring[static_cast<std::size_t>(arc_offset_for(j) + a) * d_max + slot] = 1;
            ++occ.count;
          }
        }
        break;
      }
      case Mechanism::Dendritic: {
        // weighted values accumulate per (due slot, target); each pending
        // (slot, target) cell receives pushes from a single emission step
        for (const auto& e : l.adj[j]) {
          const int slot = (step + e.delay) % d_max;
          const std::size_t cell = static_cast<std::size_t>(slot) * l.h_post + e.target;
          if (!den_set[cell]) {
            den_set[cell] = 1;
            den_val[cell] = 0.0;
            ++occ.count;
          }
          den_val[cell] += e.weight;
        }
        break;
      }
    }
  }

  // deliver everything due at `step` into `current` (bias already applied)
  void deliver(int step, Eigen::VectorXd& current) {
    const auto& l = *layer;
    const int slot = step % d_max;
    switch (l.mechanism) {
      case Mechanism::Axonal:
      case Mechanism::None: {
        if (strategy == Buffering::Shared) {
          auto& entries = slots[slot];
          std::sort(entries.begin(), entries.end());  // deterministic source order
          for (long long j : entries) {
            for (const auto& e : l.adj[j]) current(e.target) += e.weight;
          }
          occ.count -= static_cast<long long>(entries.size());
          entries.clear();
        } else {
          for (int j = 0; j < l.h_pre; ++j) {
            auto& bit = src_ring[static_cast<std::size_t>(j) * d_max + slot];
            if (bit) {
              bit = 0;
              --occ.count;
              for (const auto& e : l.adj[j]) current(e.target) += e.weight;
            }
          }
        }
        break;
      }
      case Mechanism::Synaptic: {
        if (strategy == Buffering::Shared) {
          auto& entries = slots[slot];
          std::sort(entries.begin(), entries.end());  // arc ids are (j, i)-major
          for (long long a : entries) {
            const auto& e = arc_by_index(a);
            current(e.target) += e.weight;
          }
          occ.count -= static_cast<long long>(entries.size());
          entries.clear();
        } else {
          long long a = 0;
          for (int j = 0; j < l.h_pre; ++j) {
            for (const auto& e : l.adj[j]) {
              auto& bit = arc_ring[static_cast<std::size_t>(a) * d_max + slot];
              if (bit) {
                bit = 0;
                --occ.count;
                current(e.target) += e.weight;
              }
              ++a;
            }
          }
        }
        break;
      }
      case Mechanism::Dendritic: {
        for (int i = 0; i < l.h_post; ++i) {
          const std::size_t cell = static_cast<std::size_t>(slot) * l.h_post + i;
          if (den_set[cell]) {
            current(i) += den_val[cell];
            den_set[cell] = 0;
            den_val[cell] = 0.0;
            --occ.count;
          }
        }
        break;
      }
    }
  }

 private:
  long long arc_offset_for(int j) const { return arc_offset.empty() ? 0 : arc_offset[j]; }

  const EventModel::Edge& arc_by_index(long long a) const {
    // binary search over per-source offsets
    const auto& l = *layer;
    int lo = 0, hi = l.h_pre - 1;
    while (lo < hi) {
      const int mid = (lo + hi + 1) / 2;
      if (arc_offset[mid] <= a) lo = mid;
      else hi = mid - 1;
    }
    return l.adj[lo][static_cast<std::size_t>(a - arc_offset[lo])];
  }
};

void require_input(const EventModel& em, const SpikeTrain& x) {
  DSNN_REQUIRE(x.channels == em.input_channels,
               "engine: input has " + std::to_string(x.channels) + " channels, expected " +
                   std::to_string(em.input_channels));
  check_spike_train(x);
}

}  // namespace

EngineResult run(const EventModel& em, const SpikeTrain& x) {
  require_input(em, x);
  const int steps = x.steps;
  const int n_layers = static_cast<int>(em.layers.size());

  EngineResult res;
  res.stats.steps = steps;
  res.stats.layers.resize(n_layers);
  std::vector<LayerBuffers> buffers(n_layers);
  std::vector<Eigen::VectorXd> membrane(n_layers);
  for (int l = 0; l < n_layers; ++l) {
    buffers[l].init(em.layers[l], em.d_max, em.buffering, &res.stats.layers[l], l);
    membrane[l] = Eigen::VectorXd::Zero(em.layers[l].h_post);
    res.layer_spikes.emplace_back(em.layers[l].h_post, steps);
    res.stats.layers[l].spikes_per_step.assign(steps, 0);
  }

  Eigen::VectorXd v_read = Eigen::VectorXd::Zero(em.classes);
  Eigen::VectorXd logits_acc = Eigen::VectorXd::Zero(em.classes);

  for (int t = 0; t < steps; ++t) {
    // propagate layer by layer within the step; zero delays deliver same-step
    for (int l = 0; l < n_layers; ++l) {
      const auto& cl = em.layers[l];
      auto& buf = buffers[l];

      // push this step's presynaptic spikes (inputs or previous layer output)
      if (l == 0) {
        for (int j = 0; j < cl.h_pre; ++j)
          if (x.get(j, t)) buf.push(j, t);
      } else {
        const auto& prev = res.layer_spikes[l - 1];
        for (int j = 0; j < cl.h_pre; ++j)
          if (prev.get(j, t)) buf.push(j, t);
      }
      buf.occ.after_push(t);

      Eigen::VectorXd current = cl.bias;
      buf.deliver(t, current);
      buf.occ.after_deliver();

      auto& spikes = res.layer_spikes[l];
      long long count = 0;
      for (int i = 0; i < cl.h_post; ++i) {
        const double s = lif_update(membrane[l](i), current(i), em.beta, em.threshold);
        if (s != 0.0) {
          spikes.set(i, t, 1);
          ++count;
        }
      }
      res.stats.layers[l].spikes += count;
      res.stats.layers[l].spikes_per_step[t] = count;
    }

    // readout: plain leaky integrator over the last layer's spikes
    const auto& last = res.layer_spikes[n_layers - 1];
    for (int c = 0; c < em.classes; ++c) {
      double r = em.readout_b(c);
      for (int i = 0; i < last.channels; ++i)
        if (last.get(i, t)) r += em.readout_w(c, i);
      v_read(c) = em.beta_out * v_read(c) + r;
    }
    logits_acc += v_read;
  }
  res.logits = logits_acc / static_cast<double>(steps);

  for (auto& ls : res.stats.layers) ls.mean_carried /= static_cast<double>(steps);
  return res;
}

EngineResult reference_forward(const EventModel& em, const SpikeTrain& x) {
  require_input(em, x);
  const int steps = x.steps;
  const int n_layers = static_cast<int>(em.layers.size());

  EngineResult res;
  res.stats.steps = steps;
  res.stats.layers.resize(n_layers);
  std::vector<Eigen::VectorXd> membrane(n_layers);
  for (int l = 0; l < n_layers; ++l) {
    membrane[l] = Eigen::VectorXd::Zero(em.layers[l].h_post);
    res.layer_spikes.emplace_back(em.layers[l].h_post, steps);
    res.stats.layers[l].spikes_per_step.assign(steps, 0);
  }

  // dendritic layers delay the mixed signal: precompute z per layer lazily
  std::vector<Eigen::MatrixXd> mixed(n_layers);

  Eigen::VectorXd v_read = Eigen::VectorXd::Zero(em.classes);
  Eigen::VectorXd logits_acc = Eigen::VectorXd::Zero(em.classes);

  auto input_bit = [&](int l, int j, int t) -> bool {
    if (t < 0) return false;
    if (l == 0) return x.get(j, t) != 0;
    return res.layer_spikes[l - 1].get(j, t) != 0;
  };

  for (int t = 0; t < steps; ++t) {
    for (int l = 0; l < n_layers; ++l) {
      const auto& cl = em.layers[l];
      Eigen::VectorXd current = cl.bias;
      switch (cl.mechanism) {
        case Mechanism::Axonal:
        case Mechanism::None:
          for (int j = 0; j < cl.h_pre; ++j) {
            const int d = cl.mechanism == Mechanism::Axonal ? cl.axonal_delay(j) : 0;
            if (input_bit(l, j, t - d))
              for (const auto& e : cl.adj[j]) current(e.target) += e.weight;
          }
          break;
        case Mechanism::Synaptic:
          for (int j = 0; j < cl.h_pre; ++j)
            for (const auto& e : cl.adj[j])
              if (input_bit(l, j, t - e.delay)) current(e.target) += e.weight;
          break;
        case Mechanism::Dendritic: {
          // z_i(t') accumulated in ascending source order, then shifted by
          // the target's tied delay
          if (mixed[l].size() == 0) mixed[l] = Eigen::MatrixXd::Zero(cl.h_post, steps);
          for (int j = 0; j < cl.h_pre; ++j)
            if (input_bit(l, j, t))
              for (const auto& e : cl.adj[j]) mixed[l](e.target, t) += e.weight;
          for (int i = 0; i < cl.h_post; ++i) {
            const int tp = t - cl.dendritic_delay(i);
            if (tp >= 0) current(i) += mixed[l](i, tp);
          }
          break;
        }
      }

      auto& spikes = res.layer_spikes[l];
      long long count = 0;
      for (int i = 0; i < cl.h_post; ++i) {
        const double s = lif_update(membrane[l](i), current(i), em.beta, em.threshold);
        if (s != 0.0) {
          spikes.set(i, t, 1);
          ++count;
        }
      }
      res.stats.layers[l].spikes += count;
      res.stats.layers[l].spikes_per_step[t] = count;
    }

    const auto& last = res.layer_spikes[n_layers - 1];
    for (int c = 0; c < em.classes; ++c) {
      double r = em.readout_b(c);
      for (int i = 0; i < last.channels; ++i)
        if (last.get(i, t)) r += em.readout_w(c, i);
      v_read(c) = em.beta_out * v_read(c) + r;
    }
    logits_acc += v_read;
  }
  res.logits = logits_acc / static_cast<double>(steps);
  return res;
}

OccupancyReport occupancy_report(const RunStats& stats, const EventModel& em, int value_bits) {
  OccupancyReport rep;
  for (std::size_t l = 0; l < stats.layers.size(); ++l) {
    const auto& cl = em.layers[l];
    const auto& ls = stats.layers[l];
    LayerOccupancy row;
    row.layer = static_cast<int>(l);
    row.mechanism = to_string(cl.mechanism);
    row.strategy = to_string(em.buffering);
    row.peak_inflight_entries = ls.peak_inflight;
    row.peak_carried_entries = ls.peak_carried;
    row.mean_carried_entries = ls.mean_carried;

    const int m = default_address_bits(cl.mechanism == Mechanism::Dendritic ? cl.h_post
                                                                            : cl.h_pre);
    if (em.buffering == Buffering::Unshared)
      row.entry_bits = (cl.mechanism == Mechanism::Dendritic) ? value_bits : 1;
    else
      row.entry_bits = (cl.mechanism == Mechanism::Dendritic) ? value_bits + m : m;
    row.peak_inflight_bits = row.peak_inflight_entries * row.entry_bits;

    row.spikes = ls.spikes;
    const double h = cl.h_post;
    row.rho_p_per_step = stats.steps > 0 ? ls.spikes / (h * stats.steps) : 0.0;
    const int w = std::min(em.d_max, stats.steps);
    long long best = 0, window = 0;
    for (int t = 0; t < stats.steps; ++t) {
      window += ls.spikes_per_step[t];
      if (t >= w) window -= ls.spikes_per_step[t - w];
      best = std::max(best, window);
    }
    row.rho_p_window_peak = w > 0 ? static_cast<double>(best) / (h * w) : 0.0;
    rep.layers.push_back(row);
  }
  return rep;
}

std::string OccupancyReport::to_csv() const {
  std::string out =
      "layer,mechanism,strategy,peak_inflight_entries,peak_carried_entries,"
      "mean_carried_entries,entry_bits,peak_inflight_bits,spikes,rho_p_per_step,"
      "rho_p_window_peak\n";
  for (const auto& r : layers) {
    out += std::to_string(r.layer) + "," + r.mechanism + "," + r.strategy + "," +
           std::to_string(r.peak_inflight_entries) + "," +
           std::to_string(r.peak_carried_entries) + "," + format_double(r.mean_carried_entries) +
           "," + std::to_string(r.entry_bits) + "," + std::to_string(r.peak_inflight_bits) +
           "," + std::to_string(r.spikes) + "," + format_double(r.rho_p_per_step) + "," +
           format_double(r.rho_p_window_peak) + "\n";
  }
  return out;
}

std::string OccupancyReport::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : layers) {
    j.push_back({{"layer", r.layer},
                 {"mechanism", r.mechanism},
                 {"strategy", r.strategy},
                 {"peak_inflight_entries", r.peak_inflight_entries},
                 {"peak_carried_entries", r.peak_carried_entries},
                 {"mean_carried_entries", r.mean_carried_entries},
                 {"entry_bits", r.entry_bits},
                 {"peak_inflight_bits", r.peak_inflight_bits},
                 {"spikes", r.spikes},
                 {"rho_p_per_step", r.rho_p_per_step},
                 {"rho_p_window_peak", r.rho_p_window_peak}});
  }
  return j.dump(2) + "\n";
}

}  // namespace dsnn
