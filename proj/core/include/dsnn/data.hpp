// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dsnn/spike_train.hpp"

namespace dsnn {

struct Dataset {
  int channels = 0;
  int steps = 0;
  int classes = 0;
  std::vector<SpikeTrain> samples;
  std::vector<int> labels;

  std::size_t size() const { return samples.size(); }
};

/// Synthetic delayed-pattern task: class identity lives in inter-channel
/// lags, not rates. All classes share one channel set and per-channel spike
/// counts; only the lag vectors differ.
struct SynthSpec {
  int classes = 8;
  int channels = 20;
  int steps = 60;
  int spikes_per_pattern = 6;
  int max_lag = 12;
  int jitter = 1;
  double noise_rate = 0.01;  // spikes per channel-step
  int samples_per_class = 100;
  std::uint64_t seed = 1;
};

struct SynthResult {
  Dataset dataset;
  // per class: (channel, lag) pairs, lags in [0, max_lag]
  std::vector<std::vector<std::pair<int, int>>> prototypes;
};

SynthResult generate(const SynthSpec& spec);

struct Event {
  std::uint32_t step;
  std::uint16_t channel;
};

/// A bin is 1 iff at least one event falls in it (logical OR); channel
/// groups are OR-merged. channels must be divisible by channel_group.
SpikeTrain bin_events(const std::vector<Event>& events, int channels, int steps, int bin_width,
                      int channel_group);

// ---- spike-event file (binary, little-endian; documented in docs/formats.md)
void write_events(const std::string& path, const Dataset& ds);
Dataset read_events(const std::string& path);

/// Serialized byte size of a dataset in the event-file format.
std::size_t event_file_size(const Dataset& ds);

}  // namespace dsnn
