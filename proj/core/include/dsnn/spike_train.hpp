// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace dsnn {

/// Binary activity over (time, channel). Channel-major storage:
/// data[c * steps + t].
struct SpikeTrain {
  int steps = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;

  SpikeTrain() = default;
  SpikeTrain(int channels_, int steps_);

  std::uint8_t get(int c, int t) const { return data[static_cast<std::size_t>(c) * steps + t]; }
  void set(int c, int t, std::uint8_t v) { data[static_cast<std::size_t>(c) * steps + t] = v; }

  long long count() const;

  /// Dense (channels x steps) matrix of 0/1 values.
  Eigen::MatrixXd to_matrix() const;

  /// Entries must be exactly 0 or 1.
  static SpikeTrain from_matrix(const Eigen::MatrixXd& m);

  bool operator==(const SpikeTrain&) const = default;
};

/// Checks the type invariants (dims >= 1, entries in {0,1}); throws on violation.
void check_spike_train(const SpikeTrain& s);

}  // namespace dsnn
