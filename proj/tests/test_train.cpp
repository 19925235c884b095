// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dsnn/train.hpp"

using namespace dsnn;

namespace {

Dataset rate_coded_task(int samples_per_class, int channels, int steps, std::uint64_t seed) {
  // linearly separable by rate: class 0 drives the first half of the
  // channels, class 1 the second half
  Dataset ds;
  ds.channels = channels;
  ds.steps = steps;
  ds.classes = 2;
  Rng rng(seed);
  for (int c = 0; c < 2; ++c) {
    for (int s = 0; s < samples_per_class; ++s) {
      SpikeTrain st(channels, steps);
      for (int ch = 0; ch < channels; ++ch) {
        const bool active = (c == 0) ? ch < channels / 2 : ch >= channels / 2;
        const double rate = active ? 0.6 : 0.05;
        for (int t = 0; t < steps; ++t)
          if (rng.uniform() < rate) st.set(ch, t, 1);
      }
      ds.samples.push_back(std::move(st));
      ds.labels.push_back(c);
    }
  }
  return ds;
}

ModelConfig toy_config(Mechanism mech) {
  ModelConfig cfg;
  cfg.layers = 1;
  cfg.hidden = 16;
  cfg.input_channels = 8;
  cfg.classes = 2;
  cfg.d_max = 5;
  cfg.dropout = 0.0;
  cfg.delay_mechanism = mech;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("cross entropy hand values and gradient") {
  SUBCASE("equal logits give ln C") {
    const auto r = cross_entropy_loss(Eigen::VectorXd::Zero(7), 3);
    CHECK(r.loss == doctest::Approx(std::log(7.0)).epsilon(1e-12));
  }
  SUBCASE("loss decreases monotonically with the aligned margin") {
    double prev = 1e9;
    for (double margin = 0.0; margin <= 5.0; margin += 0.5) {
      Eigen::VectorXd l = Eigen::VectorXd::Zero(4);
      l(1) = margin;
      const double loss = cross_entropy_loss(l, 1).loss;
      CHECK(loss < prev);
      prev = loss;
    }
  }
  SUBCASE("gradient matches finite differences") {
    Rng rng(3);
    Eigen::VectorXd l(5);
    for (int i = 0; i < 5; ++i) l(i) = rng.normal();
    const auto r = cross_entropy_loss(l, 2);
    const double h = 1e-6;
    for (int i = 0; i < 5; ++i) {
      Eigen::VectorXd lp = l, lm = l;
      lp(i) += h;
      lm(i) -= h;
      const double fd =
          (cross_entropy_loss(lp, 2).loss - cross_entropy_loss(lm, 2).loss) / (2.0 * h);
      CHECK(std::abs(r.grad(i) - fd) / std::max(std::abs(fd), 1e-9) < 1e-6);
    }
  }
  SUBCASE("non-finite logits fault") {
    Eigen::VectorXd l = Eigen::VectorXd::Zero(3);
    l(1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS(cross_entropy_loss(l, 0));
  }
}

TEST_CASE("firing-rate regularizer") {
  SUBCASE("hand evaluation") {
    std::vector<Eigen::VectorXd> rates(1);
    rates[0].resize(3);
    rates[0] << 0.0, 0.05, 0.3;
    const RegConfig reg{0.01, 0.2, 0.5};
    CHECK(firing_rate_reg(rates, reg) == doctest::Approx(0.055).epsilon(1e-12));
    std::vector<Eigen::VectorXd> drates;
    CHECK(firing_rate_reg_grad(rates, reg, drates) == doctest::Approx(0.055));
    CHECK(drates[0](0) == -0.5);  // quiet side
    CHECK(drates[0](1) == 0.0);   // inside the band
    CHECK(drates[0](2) == 0.5);   // burst side
  }
  SUBCASE("dead zone and r = 0") {
    std::vector<Eigen::VectorXd> rates(2);
    rates[0] = Eigen::VectorXd::Constant(4, 0.1);
    rates[1] = Eigen::VectorXd::Constant(4, 0.15);
    CHECK(firing_rate_reg(rates, {0.01, 0.2, 0.5}) == 0.0);
    rates[1](0) = 5.0;
    CHECK(firing_rate_reg(rates, {0.01, 0.2, 0.0}) == 0.0);
  }
}

TEST_CASE("sigma schedule endpoints and midpoint") {
  CHECK(sigma_schedule(0, 100, 15, 0.25) == doctest::Approx(7.5));
  CHECK(sigma_schedule(25, 100, 15, 0.25) == 0.5);
  CHECK(sigma_schedule(60, 100, 15, 0.25) == 0.5);
  CHECK(sigma_schedule(99, 100, 15, 0.25) == 0.5);
  CHECK(sigma_schedule(12.5, 100, 15, 0.25) == doctest::Approx(4.0).epsilon(1e-12));
  // explicit override of the initial width
  CHECK(sigma_schedule(0, 100, 15, 0.25, 3.0) == doctest::Approx(3.0));
}

TEST_CASE("learning-rate schedules") {
  SUBCASE("cosine endpoints") {
    CHECK(lr_schedule(SchedulerKind::Cosine, 0, 100, 0.1) == doctest::Approx(0.1));
    CHECK(lr_schedule(SchedulerKind::Cosine, 99, 100, 0.1) < 1e-4);
    CHECK(lr_schedule(SchedulerKind::Cosine, 50, 100, 0.1) == doctest::Approx(0.05));
  }
  SUBCASE("one-cycle: warmup start, peak at 30%, decay to base/100") {
    // total chosen so 0.3*(total-1) is an integer step
    const long total = 11;
    const double base = 0.2;
    CHECK(lr_schedule(SchedulerKind::OneCycle, 0, total, base) == doctest::Approx(base / 100.0));
    CHECK(lr_schedule(SchedulerKind::OneCycle, 3, total, base) == doctest::Approx(base));
    CHECK(lr_schedule(SchedulerKind::OneCycle, total - 1, total, base) ==
          doctest::Approx(base / 100.0));
    double peak = 0.0;
    long peak_step = -1;
    for (long s = 0; s < total; ++s) {
      const double lr = lr_schedule(SchedulerKind::OneCycle, s, total, base);
      if (lr > peak) {
        peak = lr;
        peak_step = s;
      }
    }
    CHECK(peak == doctest::Approx(base));
    CHECK(peak_step == 3);
  }
  SUBCASE("none is constant") {
    for (long s = 0; s < 10; ++s)
      CHECK(lr_schedule(SchedulerKind::None, s, 10, 0.05) == 0.05);
  }
}

TEST_CASE("adam: zero gradients change nothing") {
  auto cfg = toy_config(Mechanism::Axonal);
  Rng rng(cfg.seed);
  Model m = init_parameters(cfg, rng);
  Model before = m;
  OptimState st = OptimState::init(m);
  Gradients g;
  g.layers.resize(1);
  g.layers[0].w = Eigen::MatrixXd::Zero(16, 8);
  g.layers[0].bn_gamma = Eigen::VectorXd::Zero(16);
  g.layers[0].bn_beta = Eigen::VectorXd::Zero(16);
  g.layers[0].delay = Eigen::MatrixXd::Zero(1, 8);
  g.readout_w = Eigen::MatrixXd::Zero(2, 16);
  g.readout_b = Eigen::VectorXd::Zero(2);
  adam_step(m, g, st, 0.1, 0.1);
  CHECK(m.layers[0].W == before.layers[0].W);
  CHECK(m.layers[0].delay->positions == before.layers[0].delay->positions);
  CHECK(m.readout.W == before.readout.W);
}

TEST_CASE("adam converges on a scalar quadratic") {
  // minimize (b0 - 3)^2 through the readout bias slot
  auto cfg = toy_config(Mechanism::Axonal);
  Rng rng(cfg.seed);
  Model m = init_parameters(cfg, rng);
  OptimState st = OptimState::init(m);
  Gradients g;
  g.layers.resize(1);
  g.layers[0].w = Eigen::MatrixXd::Zero(16, 8);
  g.layers[0].bn_gamma = Eigen::VectorXd::Zero(16);
  g.layers[0].bn_beta = Eigen::VectorXd::Zero(16);
  g.layers[0].delay = Eigen::MatrixXd::Zero(1, 8);
  g.readout_w = Eigen::MatrixXd::Zero(2, 16);
  for (int step = 0; step < 500; ++step) {
    g.readout_b = Eigen::VectorXd::Zero(2);
    g.readout_b(0) = 2.0 * (m.readout.b(0) - 3.0);
    adam_step(m, g, st, 0.1, 0.1);
  }
  CHECK(std::abs(m.readout.b(0) - 3.0) < 1e-3);
}

TEST_CASE("adam faults on non-finite gradients, naming the parameter") {
  auto cfg = toy_config(Mechanism::Axonal);
  Rng rng(cfg.seed);
  Model m = init_parameters(cfg, rng);
  OptimState st = OptimState::init(m);
  Gradients g;
  g.layers.resize(1);
  g.layers[0].w = Eigen::MatrixXd::Zero(16, 8);
  g.layers[0].w(2, 3) = std::numeric_limits<double>::quiet_NaN();
  g.layers[0].bn_gamma = Eigen::VectorXd::Zero(16);
  g.layers[0].bn_beta = Eigen::VectorXd::Zero(16);
  g.layers[0].delay = Eigen::MatrixXd::Zero(1, 8);
  g.readout_w = Eigen::MatrixXd::Zero(2, 16);
  g.readout_b = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_WITH(adam_step(m, g, st, 0.1, 0.1), doctest::Contains("layer0.W"));
}

TEST_CASE("masked entries stay exactly zero through optimizer steps") {
  auto cfg = toy_config(Mechanism::Axonal);
  cfg.weight_sparsity = 0.5;
  cfg.delay_sparsity = 0.5;
  Rng rng(cfg.seed);
  Model m = init_parameters(cfg, rng);
  const Eigen::MatrixXd wmask = m.layers[0].weight_mask;
  const Eigen::MatrixXd dmask = m.layers[0].delay->mask;
  OptimState st = OptimState::init(m);
  Rng gr(11);
  for (int step = 0; step < 20; ++step) {
    Gradients g;
    g.layers.resize(1);
    g.layers[0].w = Eigen::MatrixXd::NullaryExpr(16, 8, [&]() { return gr.normal(); });
    g.layers[0].bn_gamma = Eigen::VectorXd::Zero(16);
    g.layers[0].bn_beta = Eigen::VectorXd::Zero(16);
    g.layers[0].delay = Eigen::MatrixXd::NullaryExpr(1, 8, [&]() { return gr.normal(); });
    g.readout_w = Eigen::MatrixXd::Zero(2, 16);
    g.readout_b = Eigen::VectorXd::Zero(2);
    adam_step(m, g, st, 0.05, 0.05);
    for (int i = 0; i < 16; ++i)
      for (int j = 0; j < 8; ++j)
        if (wmask(i, j) == 0.0) REQUIRE(m.layers[0].W(i, j) == 0.0);
    for (int j = 0; j < 8; ++j) {
      if (dmask(0, j) == 0.0) REQUIRE(m.layers[0].delay->positions(0, j) == 0.0);
      REQUIRE(m.layers[0].delay->positions(0, j) >= 0.0);
      REQUIRE(m.layers[0].delay->positions(0, j) <= cfg.d_max - 1.0);
    }
  }
}

TEST_CASE("group separation: zero learning rate freezes that group") {
  auto cfg = toy_config(Mechanism::Axonal);
  Rng rng(cfg.seed);
  Model m = init_parameters(cfg, rng);
  const Dataset ds = rate_coded_task(8, 8, 12, 21);

  Rng dummy(0);
  ForwardCache cache;
  const auto rec = forward_train(m, {ds.samples.begin(), ds.samples.begin() + 8}, SpikeMode::Hard,
                                 dummy, cache);
  Eigen::MatrixXd dlogits;
  batch_cross_entropy(rec.logits, {ds.labels.begin(), ds.labels.begin() + 8}, dlogits);
  const Gradients g = network_backward(m, cache, dlogits);

  SUBCASE("lr_weights = 0 changes no weights") {
    Model m2 = m;
    OptimState st = OptimState::init(m2);
    adam_step(m2, g, st, 0.0, 0.1);
    CHECK(m2.layers[0].W == m.layers[0].W);
    CHECK(m2.layers[0].bn_gamma == m.layers[0].bn_gamma);
    CHECK(m2.readout.W == m.readout.W);
    CHECK(m2.layers[0].delay->positions != m.layers[0].delay->positions);
  }
  SUBCASE("lr_delays = 0 changes no delays") {
    Model m2 = m;
    OptimState st = OptimState::init(m2);
    adam_step(m2, g, st, 0.001, 0.0);
    CHECK(m2.layers[0].delay->positions == m.layers[0].delay->positions);
    CHECK(m2.layers[0].W != m.layers[0].W);
  }
}

TEST_CASE("one epoch on a 10-sample set: one row, checkpoint reload reproduces eval loss") {
  auto cfg = toy_config(Mechanism::Axonal);
  Rng rng(cfg.seed);
  Model m = init_parameters(cfg, rng);
  Dataset ds = rate_coded_task(5, 8, 12, 33);
  TrainConfig tcfg;
  tcfg.epochs = 1;
  tcfg.batch_size = 512;  // scales down automatically
  const auto result = train(m, ds, nullptr, tcfg);
  REQUIRE(result.history.size() == 1);
  CHECK(result.history[0].split == "train");

  save_checkpoint("train_test.dsnn", m);
  const Model r = load_checkpoint("train_test.dsnn");
  const auto e1 = evaluate(m, ds);
  const auto e2 = evaluate(r, ds);
  CHECK(e1.loss == e2.loss);
  CHECK(e1.accuracy == e2.accuracy);
  std::remove("train_test.dsnn");
}

TEST_CASE("rate-coded separable task reaches >95% train accuracy within 30 epochs") {
  auto cfg = toy_config(Mechanism::None);
  Rng rng(cfg.seed);
  Model m = init_parameters(cfg, rng);
  Dataset ds = rate_coded_task(20, 8, 12, 55);
  TrainConfig tcfg;
  tcfg.epochs = 30;
  tcfg.batch_size = 16;
  const auto result = train(m, ds, nullptr, tcfg);
  CHECK(result.history.back().accuracy > 0.95);
}

TEST_CASE("training is fully deterministic under a fixed seed") {
  auto cfg = toy_config(Mechanism::Axonal);
  cfg.dropout = 0.25;  // exercise the dropout stream too
  Dataset ds = rate_coded_task(10, 8, 12, 70);
  TrainConfig tcfg;
  tcfg.epochs = 3;
  tcfg.batch_size = 8;

  Rng r1(cfg.seed), r2(cfg.seed);
  Model m1 = init_parameters(cfg, r1);
  Model m2 = init_parameters(cfg, r2);
  const auto h1 = train(m1, ds, nullptr, tcfg);
  const auto h2 = train(m2, ds, nullptr, tcfg);
  REQUIRE(h1.history.size() == h2.history.size());
  for (std::size_t i = 0; i < h1.history.size(); ++i) {
    CHECK(h1.history[i].loss == h2.history[i].loss);
    CHECK(h1.history[i].accuracy == h2.history[i].accuracy);
    CHECK(metrics_csv_row(h1.history[i]) == metrics_csv_row(h2.history[i]));
  }
  CHECK(m1.layers[0].W == m2.layers[0].W);
  CHECK(m1.layers[0].delay->positions == m2.layers[0].delay->positions);
}

TEST_CASE("divergence aborts loudly") {
  auto cfg = toy_config(Mechanism::None);
  Rng rng(cfg.seed);
  Model m = init_parameters(cfg, rng);
  Dataset ds = rate_coded_task(5, 8, 12, 90);
  TrainConfig tcfg;
  tcfg.epochs = 5;
  tcfg.batch_size = 10;
  // batch norm keeps hidden layers scale-invariant, so the blowup has to
  // overflow the raw readout path
  tcfg.lr_weights = 1e307;
  CHECK_THROWS_WITH(train(m, ds, nullptr, tcfg), doctest::Contains("non-finite"));
}
