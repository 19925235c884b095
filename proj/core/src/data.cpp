// SPDX-License-Identifier: Apache-2.0
#include "dsnn/data.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>

#include "dsnn/common.hpp"
#include "dsnn/rng.hpp"

namespace dsnn {

SynthResult generate(const SynthSpec& spec) {
  DSNN_REQUIRE(spec.classes >= 2, "generate: classes must be >= 2");
  DSNN_REQUIRE(spec.channels >= 1 && spec.steps >= 1, "generate: counts must be positive");
  DSNN_REQUIRE(spec.spikes_per_pattern >= 1, "generate: spikes_per_pattern must be >= 1");
  DSNN_REQUIRE(spec.spikes_per_pattern <= spec.channels,
               "generate: infeasible spec (spikes_per_pattern > channels)");
  DSNN_REQUIRE(spec.max_lag < spec.steps, "generate: max_lag must be < steps");
  DSNN_REQUIRE(spec.jitter >= 0, "generate: jitter must be >= 0");
  DSNN_REQUIRE(spec.noise_rate >= 0.0, "generate: noise_rate must be >= 0");
  DSNN_REQUIRE(spec.samples_per_class >= 1, "generate: samples_per_class must be >= 1");

  Rng root(spec.seed);

  // one channel set shared by all classes -> identical per-channel counts
  Rng chan_rng = root.split(1);
  std::vector<int> all(spec.channels);
  for (int i = 0; i < spec.channels; ++i) all[i] = i;
  chan_rng.shuffle(all);
  std::vector<int> chans(all.begin(), all.begin() + spec.spikes_per_pattern);
  std::sort(chans.begin(), chans.end());

  // per-class lag vectors, distinct across classes
  Rng lag_rng = root.split(2);
  SynthResult out;
  std::set<std::vector<int>> seen;
  for (int c = 0; c < spec.classes; ++c) {
    std::vector<int> lags;
    for (int attempt = 0; attempt < 10000; ++attempt) {
      lags.clear();
      for (int k = 0; k < spec.spikes_per_pattern; ++k)
        lags.push_back(static_cast<int>(lag_rng.uniform_int(spec.max_lag + 1)));
      if (seen.insert(lags).second) break;
      lags.clear();
    }
    DSNN_REQUIRE(!lags.empty(), "generate: could not draw distinct class prototypes");
    std::vector<std::pair<int, int>> proto;
    for (int k = 0; k < spec.spikes_per_pattern; ++k) proto.emplace_back(chans[k], lags[k]);
    out.prototypes.push_back(std::move(proto));
  }

  Rng sample_rng = root.split(3);
  Dataset& ds = out.dataset;
  ds.channels = spec.channels;
  ds.steps = spec.steps;
  ds.classes = spec.classes;
  const int onset_range = spec.steps - spec.max_lag;
  for (int c = 0; c < spec.classes; ++c) {
    for (int s = 0; s < spec.samples_per_class; ++s) {
      SpikeTrain st(spec.channels, spec.steps);
      const int onset = static_cast<int>(sample_rng.uniform_int(onset_range));
      for (const auto& [ch, lag] : out.prototypes[c]) {
        int t = onset + lag;
        if (spec.jitter > 0)
          t += static_cast<int>(sample_rng.uniform_int(2 * spec.jitter + 1)) - spec.jitter;
        t = std::max(0, std::min(spec.steps - 1, t));
        st.set(ch, t, 1);
      }
      if (spec.noise_rate > 0.0) {
        for (int ch = 0; ch < spec.channels; ++ch)
          for (int t = 0; t < spec.steps; ++t)
            if (sample_rng.uniform() < spec.noise_rate) st.set(ch, t, 1);
      }
      ds.samples.push_back(std::move(st));
      ds.labels.push_back(c);
    }
  }
  return out;
}

SpikeTrain bin_events(const std::vector<Event>& events, int channels, int steps, int bin_width,
                      int channel_group) {
  DSNN_REQUIRE(bin_width >= 1, "bin_events: bin_width must be >= 1");
  DSNN_REQUIRE(channel_group >= 1, "bin_events: channel_group must be >= 1");
  DSNN_REQUIRE(channels % channel_group == 0,
               "bin_events: channels (" + std::to_string(channels) +
                   ") not divisible by channel_group (" + std::to_string(channel_group) + ")");
  const int out_steps = (steps + bin_width - 1) / bin_width;
  const int out_channels = channels / channel_group;
  SpikeTrain st(out_channels, out_steps);
  for (const auto& e : events) {
    DSNN_REQUIRE(static_cast<int>(e.step) < steps, "bin_events: event step out of range");
    DSNN_REQUIRE(static_cast<int>(e.channel) < channels, "bin_events: event channel out of range");
    st.set(e.channel / channel_group, e.step / bin_width, 1);  // OR, not count
  }
  return st;
}

// ---------------------------------------------------------------------------
// Event file. Little-endian; version byte first, fixed-width header fields:
//   u8 version | u16 channels | u32 steps | u32 samples | u16 classes
// then per sample:
//   u16 label | u32 event_count | event_count * (u32 step | u16 channel)
// with events sorted by (step, channel).
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint8_t kEventFileVersion = 1;

template <typename T>
void put(std::string& buf, T v) {
  char tmp[sizeof(T)];
  std::memcpy(tmp, &v, sizeof(T));
  buf.append(tmp, sizeof(T));
}

template <typename T>
T get(const std::string& buf, std::size_t& off) {
  if (off + sizeof(T) > buf.size())
    fail("event file: truncated at byte offset " + std::to_string(off));
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

std::size_t event_file_size(const Dataset& ds) {
  std::size_t n = 13;  // header
  for (const auto& s : ds.samples) n += 6 + 6 * static_cast<std::size_t>(s.count());
  return n;
}

void write_events(const std::string& path, const Dataset& ds) {
  DSNN_REQUIRE(ds.samples.size() == ds.labels.size(), "write_events: labels/samples mismatch");
  std::string buf;
  buf.reserve(event_file_size(ds));
  put<std::uint8_t>(buf, kEventFileVersion);
  put<std::uint16_t>(buf, static_cast<std::uint16_t>(ds.channels));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(ds.steps));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(ds.samples.size()));
  put<std::uint16_t>(buf, static_cast<std::uint16_t>(ds.classes));
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    DSNN_REQUIRE(s.channels == ds.channels && s.steps == ds.steps,
                 "write_events: sample shape mismatch");
    DSNN_REQUIRE(ds.labels[i] >= 0 && ds.labels[i] < ds.classes,
                 "write_events: label out of range");
    put<std::uint16_t>(buf, static_cast<std::uint16_t>(ds.labels[i]));
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(s.count()));
    for (int t = 0; t < s.steps; ++t) {
      for (int c = 0; c < s.channels; ++c) {
        if (s.get(c, t)) {
          put<std::uint32_t>(buf, static_cast<std::uint32_t>(t));
          put<std::uint16_t>(buf, static_cast<std::uint16_t>(c));
        }
      }
    }
  }
  std::ofstream f(path, std::ios::binary);
  DSNN_REQUIRE(static_cast<bool>(f), "cannot write event file: " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  DSNN_REQUIRE(static_cast<bool>(f), "event file write failed: " + path);
}

Dataset read_events(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  DSNN_REQUIRE(static_cast<bool>(f), "cannot open event file: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  std::size_t off = 0;
  const auto version = get<std::uint8_t>(buf, off);
  if (version != kEventFileVersion)
    fail("event file: unsupported version " + std::to_string(version) + " at byte offset 0");
  Dataset ds;
  ds.channels = get<std::uint16_t>(buf, off);
  ds.steps = static_cast<int>(get<std::uint32_t>(buf, off));
  const auto samples = get<std::uint32_t>(buf, off);
  ds.classes = get<std::uint16_t>(buf, off);
  if (ds.channels < 1 || ds.steps < 1 || ds.classes < 1)
    fail("event file: malformed header (zero dimension) at byte offset 0");

  for (std::uint32_t i = 0; i < samples; ++i) {
    const std::size_t sample_off = off;
    const auto label = get<std::uint16_t>(buf, off);
    if (label >= ds.classes)
      fail("event file: label out of range at byte offset " + std::to_string(sample_off));
    const auto count = get<std::uint32_t>(buf, off);
    SpikeTrain st(ds.channels, ds.steps);
    std::int64_t prev_key = -1;
    for (std::uint32_t e = 0; e < count; ++e) {
      const std::size_t ev_off = off;
      const auto step = get<std::uint32_t>(buf, off);
      const auto channel = get<std::uint16_t>(buf, off);
      if (static_cast<int>(step) >= ds.steps)
        fail("event file: event step out of range at byte offset " + std::to_string(ev_off));
      if (static_cast<int>(channel) >= ds.channels)
        fail("event file: event channel out of range at byte offset " + std::to_string(ev_off));
      const std::int64_t key = static_cast<std::int64_t>(step) * ds.channels + channel;
      if (key <= prev_key)
        fail("event file: events not sorted by (step, channel) at byte offset " +
             std::to_string(ev_off));
      prev_key = key;
      st.set(channel, step, 1);
    }
    ds.samples.push_back(std::move(st));
    ds.labels.push_back(label);
  }
  if (off != buf.size())
    fail("event file: trailing bytes at byte offset " + std::to_string(off));
  return ds;
}

}  // namespace dsnn
