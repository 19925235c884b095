// SPDX-License-Identifier: Apache-2.0
#include "dsnn/spike_train.hpp"

#include "dsnn/common.hpp"

namespace dsnn {

SpikeTrain::SpikeTrain(int channels_, int steps_)
    : steps(steps_), channels(channels_) {
  DSNN_REQUIRE(channels_ >= 1 && steps_ >= 1, "SpikeTrain dims must be >= 1");
  data.assign(static_cast<std::size_t>(channels_) * steps_, 0);
}

long long SpikeTrain::count() const {
  long long n = 0;
  for (auto v : data) n += v;
  return n;
}

Eigen::MatrixXd SpikeTrain::to_matrix() const {
  Eigen::MatrixXd m(channels, steps);
  for (int c = 0; c < channels; ++c)
    for (int t = 0; t < steps; ++t) m(c, t) = get(c, t);
  return m;
}

SpikeTrain SpikeTrain::from_matrix(const Eigen::MatrixXd& m) {
  SpikeTrain s(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  for (int c = 0; c < s.channels; ++c)
    for (int t = 0; t < s.steps; ++t) {
      const double v = m(c, t);
      DSNN_REQUIRE(v == 0.0 || v == 1.0, "SpikeTrain entries must be 0 or 1");
      s.set(c, t, static_cast<std::uint8_t>(v));
    }
  return s;
}

void check_spike_train(const SpikeTrain& s) {
  DSNN_REQUIRE(s.channels >= 1 && s.steps >= 1, "SpikeTrain dims must be >= 1");
  DSNN_REQUIRE(s.data.size() == static_cast<std::size_t>(s.channels) * s.steps,
               "SpikeTrain storage size mismatch");
  for (auto v : s.data) DSNN_REQUIRE(v == 0 || v == 1, "SpikeTrain entries must be 0 or 1");
}

}  // namespace dsnn
