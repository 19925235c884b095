// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "dsnn/data.hpp"
#include "dsnn/rng.hpp"

using namespace dsnn;

namespace {

// brute-force template matching on lag vectors: slide each prototype over
// all onsets, score by matched spikes, pick the best class
int template_match(const SpikeTrain& s, const std::vector<std::vector<std::pair<int, int>>>& protos,
                   int max_lag) {
  int best_class = 0, best_score = -1;
  for (std::size_t c = 0; c < protos.size(); ++c) {
    for (int onset = 0; onset + max_lag < s.steps; ++onset) {
      int score = 0;
      for (const auto& [ch, lag] : protos[c])
        if (s.get(ch, onset + lag)) ++score;
      if (score > best_score) {
        best_score = score;
        best_class = static_cast<int>(c);
      }
    }
  }
  return best_class;
}

double template_accuracy(const SynthSpec& spec) {
  const auto r = generate(spec);
  int correct = 0;
  for (std::size_t i = 0; i < r.dataset.samples.size(); ++i)
    if (template_match(r.dataset.samples[i], r.prototypes, spec.max_lag) == r.dataset.labels[i])
      ++correct;
  return static_cast<double>(correct) / r.dataset.samples.size();
}

}  // namespace

TEST_CASE("noise-free, jitter-free task is solved exactly by template matching") {
  SynthSpec spec;
  spec.jitter = 0;
  spec.noise_rate = 0.0;
  spec.samples_per_class = 20;
  CHECK(template_accuracy(spec) == 1.0);
}

TEST_CASE("generation is a pure function of the spec") {
  SynthSpec spec;
  spec.samples_per_class = 10;
  const auto a = generate(spec);
  const auto b = generate(spec);
  REQUIRE(a.dataset.samples.size() == b.dataset.samples.size());
  for (std::size_t i = 0; i < a.dataset.samples.size(); ++i)
    CHECK(a.dataset.samples[i] == b.dataset.samples[i]);
  CHECK(a.prototypes == b.prototypes);

  SynthSpec other = spec;
  other.seed = spec.seed + 1;
  const auto c = generate(other);
  CHECK(a.dataset.samples[0] != c.dataset.samples[0]);
}

TEST_CASE("prototypes share channels: a rate-only classifier sits at chance") {
  SynthSpec spec;
  spec.samples_per_class = 125;  // 1000 samples over 8 classes
  const auto r = generate(spec);

  // per-channel spike-count centroids from one half, evaluated on the other
  const int n = static_cast<int>(r.dataset.samples.size());
  std::vector<Eigen::VectorXd> centroid(spec.classes,
                                        Eigen::VectorXd::Zero(spec.channels));
  std::vector<int> counts(spec.classes, 0);
  for (int i = 0; i < n; i += 2) {
    Eigen::VectorXd v = r.dataset.samples[i].to_matrix().rowwise().sum();
    centroid[r.dataset.labels[i]] += v;
    ++counts[r.dataset.labels[i]];
  }
  for (int c = 0; c < spec.classes; ++c) centroid[c] /= std::max(1, counts[c]);
  int correct = 0, total = 0;
  for (int i = 1; i < n; i += 2) {
    const Eigen::VectorXd v = r.dataset.samples[i].to_matrix().rowwise().sum();
    int best = 0;
    double best_d = 1e300;
    for (int c = 0; c < spec.classes; ++c) {
      const double d = (v - centroid[c]).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    if (best == r.dataset.labels[i]) ++correct;
    ++total;
  }
  const double acc = static_cast<double>(correct) / total;
  const double chance = 1.0 / spec.classes;
  CHECK(acc < chance + 0.05);
  CHECK(acc > chance - 0.05);
}

TEST_CASE("increasing jitter degrades the template oracle on average") {
  double acc[3] = {0.0, 0.0, 0.0};
  const int seeds = 4;
  for (int s = 0; s < seeds; ++s) {
    SynthSpec spec;
    spec.samples_per_class = 15;
    spec.seed = 100 + s;
    spec.noise_rate = 0.02;
    spec.jitter = 0;
    acc[0] += template_accuracy(spec);
    spec.jitter = 2;
    acc[1] += template_accuracy(spec);
    spec.jitter = 5;
    acc[2] += template_accuracy(spec);
  }
  CHECK(acc[0] >= acc[1]);
  CHECK(acc[1] >= acc[2]);
  CHECK(acc[0] > acc[2]);
}

TEST_CASE("infeasible spec faults") {
  SynthSpec spec;
  spec.spikes_per_pattern = spec.channels + 1;
  CHECK_THROWS_WITH(generate(spec), doctest::Contains("infeasible"));
}

TEST_CASE("event file round trip is lossless") {
  SynthSpec spec;
  spec.samples_per_class = 6;
  auto r = generate(spec);
  // include a silent sample
  r.dataset.samples.push_back(SpikeTrain(spec.channels, spec.steps));
  r.dataset.labels.push_back(0);

  const std::string path = "events_test.evt";
  write_events(path, r.dataset);
  const Dataset back = read_events(path);
  CHECK(back.channels == r.dataset.channels);
  CHECK(back.steps == r.dataset.steps);
  CHECK(back.classes == r.dataset.classes);
  REQUIRE(back.samples.size() == r.dataset.samples.size());
  for (std::size_t i = 0; i < back.samples.size(); ++i) {
    CHECK(back.samples[i] == r.dataset.samples[i]);
    CHECK(back.labels[i] == r.dataset.labels[i]);
  }
  std::remove(path.c_str());
}

TEST_CASE("sparse file beats a dense bitmap exactly below the density threshold") {
  // one event costs 48 bits; a dense bitmap costs 1 bit per (channel, step)
  Dataset ds;
  ds.channels = 100;
  ds.steps = 100;
  ds.classes = 2;
  const long long cells = 100 * 100;
  const long long dense_bits = cells;  // per sample
  for (int events : {10, 100, 200, 250, 500}) {
    SpikeTrain s(100, 100);
    for (int e = 0; e < events; ++e) s.set(e % 100, e / 100, 1);
    ds.samples.assign(1, s);
    ds.labels.assign(1, 0);
    const long long sparse_bits = 8 * (6 + 6 * s.count());  // per-sample bytes
    const bool sparse_smaller = sparse_bits < dense_bits;
    // density < 1/48 up to the fixed per-sample header
    CHECK(sparse_smaller == (48 * (s.count() + 1) < cells));
    // and the file-level arithmetic agrees with the serialized size
    const std::string path = "size_test.evt";
    write_events(path, ds);
    std::FILE* f = std::fopen(path.c_str(), "rb");
    std::fseek(f, 0, SEEK_END);
    CHECK(static_cast<std::size_t>(std::ftell(f)) == event_file_size(ds));
    std::fclose(f);
    std::remove(path.c_str());
  }
}

TEST_CASE("malformed event files fault with a byte offset") {
  SynthSpec spec;
  spec.samples_per_class = 2;
  const auto r = generate(spec);
  const std::string path = "malformed_test.evt";
  write_events(path, r.dataset);

  SUBCASE("truncated file") {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    char buf[64];
    const auto got = std::fread(buf, 1, sizeof(buf), f);
    std::fclose(f);
    f = std::fopen(path.c_str(), "wb");
    std::fwrite(buf, 1, got / 2, f);
    std::fclose(f);
    CHECK_THROWS_WITH(read_events(path), doctest::Contains("byte offset"));
  }
  SUBCASE("bad version byte") {
    std::FILE* f = std::fopen(path.c_str(), "r+b");
    std::fputc(0x7F, f);
    std::fclose(f);
    CHECK_THROWS_WITH(read_events(path), doctest::Contains("version"));
  }
  std::remove(path.c_str());
}

TEST_CASE("bin_events") {
  SUBCASE("identity binning") {
    std::vector<Event> ev{{0, 1}, {3, 0}, {5, 2}};
    const auto s = bin_events(ev, 3, 6, 1, 1);
    CHECK(s.channels == 3);
    CHECK(s.steps == 6);
    CHECK(s.get(1, 0) == 1);
    CHECK(s.get(0, 3) == 1);
    CHECK(s.get(2, 5) == 1);
    CHECK(s.count() == 3);
  }
  SUBCASE("two events in one bin OR to a single 1") {
    std::vector<Event> ev{{0, 0}, {1, 0}};
    const auto s = bin_events(ev, 1, 4, 2, 1);
    CHECK(s.get(0, 0) == 1);
    CHECK(s.count() == 1);
  }
  SUBCASE("700 -> 140 channels with group 5") {
    std::vector<Event> ev{{0, 699}, {9, 0}};
    const auto s = bin_events(ev, 700, 10, 1, 5);
    CHECK(s.channels == 140);
    CHECK(s.get(139, 0) == 1);
    CHECK(s.get(0, 9) == 1);
  }
  SUBCASE("indivisible grouping faults") {
    CHECK_THROWS_WITH(bin_events({}, 10, 5, 1, 3), doctest::Contains("divisible"));
  }
  SUBCASE("out-of-range event faults") {
    CHECK_THROWS(bin_events({{12, 0}}, 3, 10, 1, 1));
    CHECK_THROWS(bin_events({{0, 9}}, 3, 10, 1, 1));
  }
}
