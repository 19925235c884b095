// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dsnn/metrics.hpp"
#include "dsnn/rng.hpp"

using namespace dsnn;

namespace {

BufferModelInputs ssc_inputs(Mechanism mech, Buffering strat) {
  BufferModelInputs in;
  in.layers = 3;
  in.hidden = 512;
  in.d_max = 15;
  in.mechanism = mech;
  in.strategy = strat;
  in.state_bits = 16;
  in.value_bits = 16;
  in.rho_n = 1.0;
  in.rho_p = 0.2;
  return in;
}

}  // namespace

TEST_CASE("buffer model reproduces the hand-derived unshared values exactly") {
  CHECK(buffer_bits(ssc_inputs(Mechanism::Axonal, Buffering::Unshared)) == 47616);
  CHECK(buffer_bits(ssc_inputs(Mechanism::Synaptic, Buffering::Unshared)) == 11821056);
  CHECK(buffer_bits(ssc_inputs(Mechanism::Dendritic, Buffering::Unshared)) == 393216);
}

TEST_CASE("axonal:synaptic unshared ratio of the buffering terms scales as H") {
  for (int h : {8, 64, 512}) {
    auto ax = ssc_inputs(Mechanism::Axonal, Buffering::Unshared);
    auto syn = ssc_inputs(Mechanism::Synaptic, Buffering::Unshared);
    ax.hidden = syn.hidden = h;
    const long long state = 3LL * h * 16;
    const long long ax_term = buffer_bits(ax) - state;
    const long long syn_term = buffer_bits(syn) - state;
    CHECK(syn_term == ax_term * h);
  }
}

TEST_CASE("address width defaults to ceil(log2 H)") {
  CHECK(default_address_bits(512) == 9);
  CHECK(default_address_bits(2) == 1);
  CHECK(default_address_bits(3) == 2);
  CHECK(default_address_bits(513) == 10);
  // override is honored
  auto in = ssc_inputs(Mechanism::Axonal, Buffering::Shared);
  const long long auto_m = buffer_bits(in);
  in.address_bits = 5;
  const long long small_m = buffer_bits(in);
  CHECK(auto_m > small_m);
  // shared axonal: 3*(512*16 + 9*512*0.2*15) = 3*(8192 + 13824) = 66048
  in.address_bits = 0;
  CHECK(buffer_bits(in) == 66048);
}

TEST_CASE("buffer_bits is nondecreasing in every input") {
  const auto base = ssc_inputs(Mechanism::Dendritic, Buffering::Shared);
  const long long b0 = buffer_bits(base);
  auto bump = [&](auto field_setter) {
    auto in = base;
    field_setter(in);
    CHECK(buffer_bits(in) >= b0);
  };
  bump([](BufferModelInputs& i) { i.hidden *= 2; });
  bump([](BufferModelInputs& i) { i.layers += 1; });
  bump([](BufferModelInputs& i) { i.d_max *= 2; });
  bump([](BufferModelInputs& i) { i.rho_p = 0.4; });
  bump([](BufferModelInputs& i) { i.rho_n = 2.0; });
  bump([](BufferModelInputs& i) { i.state_bits += 8; });
  bump([](BufferModelInputs& i) { i.value_bits += 8; });
  bump([](BufferModelInputs& i) { i.address_bits = 32; });
}

TEST_CASE("mechanism ordering at defaults: axonal <= dendritic <= synaptic (unshared)") {
  for (int h : {16, 64, 128, 512, 1024}) {
    for (int d : {5, 15, 31}) {
      auto ax = ssc_inputs(Mechanism::Axonal, Buffering::Unshared);
      auto den = ssc_inputs(Mechanism::Dendritic, Buffering::Unshared);
      auto syn = ssc_inputs(Mechanism::Synaptic, Buffering::Unshared);
      ax.hidden = den.hidden = syn.hidden = h;
      ax.d_max = den.d_max = syn.d_max = d;
      CHECK(buffer_bits(ax) <= buffer_bits(den));
      CHECK(buffer_bits(den) <= buffer_bits(syn));  // holds whenever H >= v
    }
  }
}

TEST_CASE("count_spikes matches a brute-force recount") {
  ForwardRecord rec;
  rec.batch = 2;
  rec.steps = 25;
  SUBCASE("silent") {
    rec.spikes.push_back(Eigen::MatrixXd::Zero(8, 50));
    CHECK(count_spikes(rec) == 0);
  }
  SUBCASE("one neuron firing 100 steps") {
    rec.batch = 1;
    rec.steps = 100;
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(8, 100);
    s.row(3).setOnes();
    rec.spikes.push_back(s);
    CHECK(count_spikes(rec) == 100);
  }
  SUBCASE("random recount") {
    Rng rng(5);
    long long expected = 0;
    for (int l = 0; l < 3; ++l) {
      Eigen::MatrixXd s(6, 50);
      for (long i = 0; i < s.size(); ++i) {
        s.data()[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
        expected += static_cast<long long>(s.data()[i]);
      }
      rec.spikes.push_back(s);
    }
    CHECK(count_spikes(rec) == expected);
  }
}

TEST_CASE("count_sops: fanout definition and per-edge recount") {
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.hidden = 512;
  cfg.input_channels = 10;
  cfg.classes = 4;
  cfg.dropout = 0.0;
  cfg.delay_mechanism = Mechanism::None;
  Rng rng(1);
  Model m = init_parameters(cfg, rng);

  ForwardRecord rec;
  rec.batch = 1;
  rec.steps = 10;
  rec.spikes.assign(2, Eigen::MatrixXd::Zero(512, 10));

  SUBCASE("one spike with dense fanout H = 512") {
    rec.spikes[0](7, 3) = 1.0;  // fans into the 512 neurons of layer 1
    CHECK(count_sops(rec, m) == 512);
  }
  SUBCASE("last-layer spikes fan into the readout") {
    rec.spikes[1](0, 0) = 1.0;
    rec.spikes[1](1, 4) = 1.0;
    CHECK(count_sops(rec, m) == 2 * cfg.classes);
  }
  SUBCASE("zero spikes give zero SOPs") { CHECK(count_sops(rec, m) == 0); }

  SUBCASE("sparse mask: exact per-edge recount") {
    cfg.weight_sparsity = 0.6;
    cfg.hidden = 20;
    Rng rng2(2);
    Model sm = init_parameters(cfg, rng2);
    ForwardRecord r2;
    r2.batch = 1;
    r2.steps = 15;
    Rng sr(3);
    for (int l = 0; l < 2; ++l) {
      Eigen::MatrixXd s(20, 15);
      for (long i = 0; i < s.size(); ++i) s.data()[i] = sr.uniform() < 0.4 ? 1.0 : 0.0;
      r2.spikes.push_back(s);
    }
    long long brute = 0;
    for (int l = 0; l < 2; ++l)
      for (int i = 0; i < 20; ++i)
        for (int t = 0; t < 15; ++t) {
          if (r2.spikes[l](i, t) == 0.0) continue;
          if (l == 0) {
            for (int k = 0; k < 20; ++k)
              if (sm.layers[1].weight_mask(k, i) != 0.0) ++brute;
          } else {
            brute += cfg.classes;
          }
        }
    CHECK(count_sops(r2, sm) == brute);
  }
}

TEST_CASE("report bundles the metrics and serializes deterministically") {
  ModelConfig cfg;
  cfg.layers = 3;
  cfg.hidden = 512;
  cfg.input_channels = 140;
  cfg.classes = 35;
  cfg.dropout = 0.0;
  cfg.delay_mechanism = Mechanism::Axonal;
  Rng rng(4);
  Model m = init_parameters(cfg, rng);
  ForwardRecord rec;
  rec.batch = 1;
  rec.steps = 100;
  rec.spikes.assign(3, Eigen::MatrixXd::Zero(512, 100));
  rec.spikes[0](0, 0) = 1.0;

  const auto rep = make_report(rec, m, ssc_inputs(Mechanism::Axonal, Buffering::Unshared), 0.5);
  CHECK(rep.total_spikes == count_spikes(rec));
  CHECK(rep.sops == count_sops(rec, m));
  CHECK(rep.buffer_bits == 47616);
  CHECK(rep.accuracy == 0.5);
  const auto rep2 = make_report(rec, m, ssc_inputs(Mechanism::Axonal, Buffering::Unshared), 0.5);
  CHECK(rep.to_csv() == rep2.to_csv());
  CHECK(rep.to_json() == rep2.to_json());
  CHECK(rep.to_csv().find("total_spikes,sops,buffer_bits,accuracy") == 0);

  // SSC-scale ordering: axonal << dendritic << synaptic for unshared buffers
  const auto ax = buffer_bits(ssc_inputs(Mechanism::Axonal, Buffering::Unshared));
  const auto den = buffer_bits(ssc_inputs(Mechanism::Dendritic, Buffering::Unshared));
  const auto syn = buffer_bits(ssc_inputs(Mechanism::Synaptic, Buffering::Unshared));
  CHECK(ax * 8 < den);
  CHECK(den * 30 < syn);
}

TEST_CASE("non-uniform first layer uses the input channel count") {
  auto in = ssc_inputs(Mechanism::Axonal, Buffering::Unshared);
  in.input_channels = 140;
  // layer 0: 512*16 + 140*15; layers 1,2: 512*16 + 512*15
  CHECK(buffer_bits(in) == (512 * 16 + 140 * 15) + 2 * (512 * 16 + 512 * 15));
}
